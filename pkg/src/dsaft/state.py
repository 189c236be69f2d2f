"""Types shared by the simulator, fault injection and tolerance strategies."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Optional

from .annealing import ChainState
from .errors import ValidationError

COORDINATOR = -1
ALL = -2


class Role(enum.Enum):
    SEARCHER = "searcher"
    RECIPROCATOR = "reciprocator"
    STANDBY = "standby"
    DEAD = "dead"
    QUARANTINED = "quarantined"


class MsgKind(enum.IntEnum):
    # value doubles as the tie-break rank for same-tick deliveries
    BEST_FOUND = 0
    REPLICA = 1
    HEARTBEAT = 2
    TEMP_RESET = 3
    QUARANTINE = 4


@dataclass(slots=True)
class Message:
    kind: MsgKind
    src: int
    dst: int
    send_time: int
    delivery_time: int = 0
    seq: int = 0
    solution: Any = None
    energy: Optional[float] = None
    temperature: Optional[float] = None
    held_energy: Optional[float] = None
    # set by fault injection for bookkeeping only; receivers never read it
    corrupted: bool = False


@dataclass(frozen=True)
class FabricConfig:
    base_delay: int = 1
    jitter: int = 0
    loss_probability: float = 0.0
    corruption_probability: float = 0.0
    per_message_cost: float = 0.0

    def __post_init__(self):
        if int(self.base_delay) != self.base_delay or self.base_delay < 0:
            raise ValidationError("base_delay must be a non-negative integer")
        if int(self.jitter) != self.jitter or self.jitter < 0:
            raise ValidationError("jitter must be a non-negative integer")
        if not 0 <= self.loss_probability < 1:
            raise ValidationError(f"loss_probability must lie in [0, 1), got {self.loss_probability}")
        if not 0 <= self.corruption_probability < 1:
            raise ValidationError(f"corruption_probability must lie in [0, 1), got {self.corruption_probability}")
        if not self.per_message_cost >= 0:
            raise ValidationError("per_message_cost must be non-negative")

    @property
    def max_delay(self):
        return self.base_delay + self.jitter


@dataclass
class NodeState:
    id: int
    role: Role
    rng: Any
    chain: Optional[ChainState] = None
    known_global_best: Optional[tuple] = None  # (energy, solution, src)
    replica_store: list = field(default_factory=list)  # (solution, energy, src, tick)
    held: Optional[tuple] = None  # (true_energy, solution) best entry in replica_store
    last_heartbeat_sent: int = -1
    sent: int = 0
    steps: int = 0
    eccentric: Any = None  # faults.EccentricState while scripted misbehaviour is armed

    @property
    def alive(self):
        return self.role not in (Role.DEAD, Role.QUARANTINED)
