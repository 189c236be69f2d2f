"""Fault injection: node crashes, lossy/corrupting channels and eccentric nodes.

Faults attack the protocol only. They never touch the problem definition or
the coordinator's ability to recompute an energy from a solution.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import tomli

from .errors import ConfigError, ValidationError
from .state import FabricConfig, Message, MsgKind, Role


class EccentricKind(enum.Enum):
    UNDERREPORT = "underreport"
    STUCK_TEMPERATURE = "stuck_temperature"
    RISING_BEST = "rising_best"


@dataclass(frozen=True)
class EccentricSpec:
    node: int
    kind: EccentricKind
    start_tick: int = 0
    end_tick: Optional[int] = None
    factor: float = 0.5
    delta: Optional[float] = None


@dataclass
class EccentricState:
    spec: EccentricSpec
    reports: int = 0
    base: Optional[float] = None
    delta: Optional[float] = None

    def active(self, tick):
        s = self.spec
        return tick >= s.start_tick and (s.end_tick is None or tick < s.end_tick)


@dataclass(frozen=True)
class FaultScenario:
    crashes: tuple = ()  # (node_id, tick)
    loss_probability: Optional[float] = None
    corruption_probability: Optional[float] = None
    extra_delay: int = 0
    eccentric: tuple = ()

    def validate(self, n_nodes: int, budget: Optional[int] = None):
        seen = set()
        for node, tick in self.crashes:
            if node in seen:
                raise ValidationError(f"node {node} is crashed more than once")
            seen.add(node)
            if not 0 <= node < n_nodes:
                raise ValidationError(f"crash targets unknown node {node}")
            if tick < 0 or (budget is not None and tick >= budget):
                raise ValidationError(f"crash tick {tick} for node {node} outside the run budget")
        for e in self.eccentric:
            if not 0 <= e.node < n_nodes:
                raise ValidationError(f"eccentric entry targets unknown node {e.node}")
        if self.extra_delay < 0:
            raise ValidationError("extra_delay must be non-negative")

    def apply_to(self, fabric: FabricConfig) -> FabricConfig:
        changes = {}
        if self.loss_probability is not None:
            changes["loss_probability"] = self.loss_probability
        if self.corruption_probability is not None:
            changes["corruption_probability"] = self.corruption_probability
        if self.extra_delay:
            changes["base_delay"] = fabric.base_delay + self.extra_delay
        return replace(fabric, **changes) if changes else fabric


@dataclass
class FaultTrace:
    entries: list = field(default_factory=list)

    def log(self, tick, kind, target):
        self.entries.append((tick, kind, target))

    def __len__(self):
        return len(self.entries)

    def count(self, kind):
        return sum(1 for _, k, _ in self.entries if k == kind)


# ------------------------------------------------------------------ crashes


def apply_crash(sim, node_id: int, tick: int):
    """Fail-stop crash: the node's chain is discarded, nothing is recovered."""
    node = sim.nodes[node_id]
    if node.role is Role.DEAD:
        raise ValidationError(f"node {node_id} is already dead")
    node.role = Role.DEAD
    node.chain = None
    node.replica_store = []
    sim.cancel_pending_from(node_id, after=tick)
    sim.fault_trace.log(tick, "crash", node_id)
    sim.log("crash", node=node_id)


# ----------------------------------------------------------------- channels


def maybe_drop(fabric: FabricConfig, msg: Message, rng) -> bool:
    """True when the message is lost in flight. Consumes one draw."""
    return rng.uniform() < fabric.loss_probability


def corrupt_energy(energy: float, rng) -> float:
    """Shift an energy by a random nonzero fraction (5-50%) of its magnitude, floor 1."""
    frac = 0.05 + 0.45 * rng.uniform()
    if rng.uniform() < 0.5:
        frac = -frac
    return energy + frac * max(abs(energy), 1.0)


def maybe_corrupt(fabric: FabricConfig, msg: Message, rng) -> Message:
    """Possibly lie about the payload energy; the solution is never touched."""
    u = rng.uniform()
    if msg.kind not in (MsgKind.BEST_FOUND, MsgKind.REPLICA) or u >= fabric.corruption_probability:
        return msg
    return replace(msg, energy=corrupt_energy(msg.energy, rng), corrupted=True)


# ---------------------------------------------------------- eccentric nodes


def eccentric_report(node, kind: EccentricKind, true_state):
    """Payload ``(solution, claimed_energy, temperature)`` an eccentric node sends."""
    st = node.eccentric
    t = true_state.temperature
    if kind is EccentricKind.UNDERREPORT:
        e = true_state.best_energy
        return true_state.best_solution, e - (1.0 - st.spec.factor) * abs(e), t
    if kind is EccentricKind.STUCK_TEMPERATURE:
        return true_state.current_solution, true_state.current_energy, t
    if kind is EccentricKind.RISING_BEST:
        if st.base is None:
            st.base = true_state.best_energy
            st.delta = st.spec.delta if st.spec.delta is not None else 0.1 * (abs(st.base) or 1.0)
        claim = st.base + st.delta * st.reports
        st.reports += 1
        return true_state.best_solution, claim, t
    raise ValidationError(f"unknown eccentric kind {kind!r}")


# ------------------------------------------------------------ scenario files

_SCENARIO_KEYS = {"crash", "fabric", "eccentric"}
_FABRIC_KEYS = {"loss_probability", "corruption_probability", "extra_delay"}
_ECC_KEYS = {"node", "kind", "start", "end", "factor", "delta"}


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def scenario_from_dict(data: dict, prefix: str = "") -> FaultScenario:
    """Build a scenario, collecting every problem before raising ConfigError."""
    problems = []
    for key in data:
        if key not in _SCENARIO_KEYS:
            problems.append((f"{prefix}{key}", "unknown key"))

    crashes = []
    for i, entry in enumerate(data.get("crash", [])):
        path = f"{prefix}crash[{i}]"
        if not isinstance(entry, dict):
            problems.append((path, "expected a table"))
            continue
        for key in entry:
            if key not in ("node", "tick"):
                problems.append((f"{path}.{key}", "unknown key"))
        node, tick = entry.get("node"), entry.get("tick")
        if not _is_int(node) or node < 0:
            problems.append((f"{path}.node", "must be a non-negative integer"))
        if not _is_int(tick) or tick < 0:
            problems.append((f"{path}.tick", "must be a non-negative integer"))
        crashes.append((node, tick))
    nodes = [n for n, _ in crashes]
    for n in set(nodes):
        if nodes.count(n) > 1:
            problems.append((f"{prefix}crash", f"node {n} appears more than once"))

    fab = data.get("fabric", {})
    for key in fab:
        if key not in _FABRIC_KEYS:
            problems.append((f"{prefix}fabric.{key}", "unknown key"))
    for key in ("loss_probability", "corruption_probability"):
        if key in fab and (not _is_num(fab[key]) or not 0 <= fab[key] < 1):
            problems.append((f"{prefix}fabric.{key}", "must lie in [0, 1)"))
    if "extra_delay" in fab and (not _is_int(fab["extra_delay"]) or fab["extra_delay"] < 0):
        problems.append((f"{prefix}fabric.extra_delay", "must be a non-negative integer"))

    eccentric = []
    for i, entry in enumerate(data.get("eccentric", [])):
        path = f"{prefix}eccentric[{i}]"
        if not isinstance(entry, dict):
            problems.append((path, "expected a table"))
            continue
        for key in entry:
            if key not in _ECC_KEYS:
                problems.append((f"{path}.{key}", "unknown key"))
        try:
            kind = EccentricKind(entry.get("kind"))
        except ValueError:
            problems.append((f"{path}.kind", f"must be one of {[k.value for k in EccentricKind]}"))
            kind = None
        node = entry.get("node")
        if not _is_int(node) or node < 0:
            problems.append((f"{path}.node", "must be a non-negative integer"))
        start, end = entry.get("start", 0), entry.get("end")
        if not _is_int(start) or start < 0:
            problems.append((f"{path}.start", "must be a non-negative integer"))
        if end is not None and (not _is_int(end) or (_is_int(start) and end <= start)):
            problems.append((f"{path}.end", "must be an integer after start"))
        factor = entry.get("factor", 0.5)
        if not _is_num(factor) or not 0 < factor < 1:
            problems.append((f"{path}.factor", "must lie in (0, 1)"))
        delta = entry.get("delta")
        if delta is not None and (not _is_num(delta) or not delta > 0):
            problems.append((f"{path}.delta", "must be positive"))
        if kind is not None:
            eccentric.append(EccentricSpec(node, kind, start, end, factor, delta))

    if problems:
        raise ConfigError(problems)
    return FaultScenario(
        crashes=tuple(crashes),
        loss_probability=fab.get("loss_probability"),
        corruption_probability=fab.get("corruption_probability"),
        extra_delay=fab.get("extra_delay", 0),
        eccentric=tuple(eccentric),
    )


def load_scenario(path) -> FaultScenario:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([(str(path), "scenario file not found")])
    try:
        data = tomli.loads(p.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([(str(path), f"TOML syntax error: {exc}")]) from None
    return scenario_from_dict(data)
