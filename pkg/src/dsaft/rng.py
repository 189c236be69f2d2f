"""Reproducible per-node random streams.

Each stream is a Philox counter-based generator keyed by ``(master_seed,
stream_id)``, so any node's sequence can be regenerated without touching the
others. Draws are served from a small buffer; the sequence is identical to
unbuffered consumption.
"""
import math

import numpy as np

_MASK64 = (1 << 64) - 1
_BUFFER = 512

# reserved stream ids, well above any node index
FABRIC_STREAM = 1 << 40
CALIBRATION_STREAM = (1 << 40) + 1
FAULT_STREAM = (1 << 40) + 2


class RngStream:
    __slots__ = ("seed", "stream_id", "draws", "_gen", "_buf", "_pos")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self.draws = 0
        key = (self.stream_id << 64) | self.seed
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self._buf: list[float] = []
        self._pos = 0

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, draws={self.draws})"

    def uniform(self) -> float:
        """One double in [0, 1)."""
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(_BUFFER).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        self.draws += 1
        return u

    def randrange(self, n: int) -> int:
        """Integer in [0, n)."""
        return int(self.uniform() * n)

    def normal(self) -> float:
        # Box-Muller on two uniforms; the sine partner is discarded
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def split(self, child: int) -> "RngStream":
        """Derive an independent stream for a sub-task of this one."""
        key = np.random.SeedSequence([self.seed, self.stream_id, int(child)])
        return RngStream(int(key.generate_state(1, np.uint64)[0]), child)


def _splitmix(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class KeyedStream:
    """Counter-based stream addressed by a tuple of integers.

    Used where a draw must depend only on the identity of the thing being
    decided (a message, a delivery) and not on how much other traffic
    happened before it.
    """

    __slots__ = ("_key", "draws")

    def __init__(self, seed: int, *key: int):
        h = _splitmix(int(seed) & _MASK64)
        for v in key:
            h = _splitmix(h ^ (int(v) & _MASK64))
        self._key = h
        self.draws = 0

    def uniform(self) -> float:
        self.draws += 1
        z = _splitmix(self._key ^ _splitmix(self.draws))
        return (z >> 11) * (1.0 / (1 << 53))

    def randrange(self, n: int) -> int:
        return int(self.uniform() * n)
