"""Tolerance strategies layered on the cluster simulator.

* hot standby: a spare takes over a node the coordinator has declared dead,
  starting at the cluster's current temperature (no chain state is restored);
* hybrid replication: no replicas while the cluster is hot; once the
  temperature drops below a threshold, the worst searchers become passive
  replica holders ("reciprocators");
* gradient guard: the coordinator checks that each node's reported best
  energy and temperature never go up, and sanctions nodes that break this.
"""
from __future__ import annotations

import enum
import math
from collections import Counter, deque
from dataclasses import dataclass, field

from .annealing import AnnealParams, init_chain
from .errors import ParameterError, ValidationError
from .state import COORDINATOR, MsgKind, Role


class Strategy(enum.Enum):
    HOT_STANDBY = "hot_standby"
    HYBRID_REPLICATION = "hybrid_replication"
    GRADIENT_GUARD = "gradient_guard"


class Sanction(enum.Enum):
    QUARANTINE = "quarantine"
    TEMP_RESET = "temp_reset"


class Verdict(enum.Enum):
    NORMAL = "normal"
    FLAGGED = "flagged"


SANCTION_POLICIES = ("auto", "quarantine", "temp_reset")


@dataclass(frozen=True)
class ToleranceConfig:
    strategies: frozenset = frozenset()
    theta: float = 0.1
    rho: float = 0.25
    window: int = 8
    eps: float = 0.0
    sanction: str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "strategies", frozenset(Strategy(s) for s in self.strategies))
        if not 0 < self.theta < 1:
            raise ValidationError("theta must lie in (0, 1)")
        if not 0 < self.rho < 1:
            raise ValidationError("rho must lie in (0, 1)")
        if int(self.window) != self.window or self.window < 1:
            raise ValidationError("window must be a positive integer")
        if not self.eps >= 0:
            raise ValidationError("eps must be non-negative")
        if self.sanction not in SANCTION_POLICIES:
            raise ValidationError(f"sanction must be one of {SANCTION_POLICIES}")

    def has(self, strategy: Strategy) -> bool:
        return strategy in self.strategies


# -------------------------------------------------------- hybrid replication


def replication_threshold(params: AnnealParams, theta: float) -> float:
    # log-space interpolation: geometric cooling spends equal steps per log-T interval
    return params.t_low * (params.t0 / params.t_low) ** theta


def replication_active(t: float, params: AnnealParams, theta: float) -> bool:
    if not params.t_low <= t <= params.t0:
        raise ParameterError(f"temperature {t} outside [{params.t_low}, {params.t0}]")
    return t <= replication_threshold(params, theta)


def promote_reciprocators(sim, rho: float) -> list:
    """Turn the worst searchers into reciprocators; returns the promoted ids."""
    live = [n for n in sim.nodes if n.role is Role.SEARCHER]
    if len(live) < 2:
        sim.log("promote_skip", live=len(live))
        return []
    count = min(math.ceil(round(rho * len(live), 9)), len(live) - 1)
    live.sort(key=lambda n: (-n.chain.best_energy, -n.id))
    promoted = []
    for node in live[:count]:
        node.role = Role.RECIPROCATOR
        promoted.append(node.id)
        sim.log("promote", node=node.id, best=node.chain.best_energy)
    return promoted


# --------------------------------------------------------------- hot standby


def hot_standby_replace(sim, dead_node_id: int):
    """Activate the lowest-id spare in place of ``dead_node_id``; returns its id or None."""
    spare = next((n for n in sim.nodes if n.role is Role.STANDBY), None)
    if spare is None:
        sim.log("no_standby", dead=dead_node_id)
        return None
    coord = sim.coordinator
    t = coord.temperature
    start = None
    if coord.record is not None and replication_active(t, sim.params, sim.tolerance.theta):
        start = coord.record[1]
    spare.role = Role.SEARCHER
    spare.chain = init_chain(sim.problem, sim.params, spare.rng, solution=start, temperature=t)
    spare.known_global_best = coord.record
    spare.last_heartbeat_sent = sim.now
    coord.liveness[spare.id] = sim.now
    sim.best_curves.setdefault(spare.id, [])
    sim.log("replace", dead=dead_node_id, node=spare.id, temp=t,
            energy=spare.chain.current_energy, from_record=start is not None)
    return spare.id


# ------------------------------------------------------------- slope guard


@dataclass
class GuardState:
    window: int = 8
    eps: float = 0.0
    history: dict = field(default_factory=dict)
    flagged: set = field(default_factory=set)
    flag_counts: Counter = field(default_factory=Counter)
    last_reason: dict = field(default_factory=dict)

    def reset(self, node_id):
        self.history.pop(node_id, None)


def _violation(guard, earlier, later):
    _, e0, t0 = earlier
    _, e1, t1 = later
    if e1 > e0 + guard.eps:
        return "rising_energy"
    if t1 > t0:
        return "rising_temperature"
    return None


def guard_observe(guard: GuardState, node_id: int, report, mismatch: bool = False) -> Verdict:
    """Record one ``(tick, best_energy, temperature)`` report and judge the node.

    Reports are compared by send tick, so reordering in the channel cannot make
    an honest node look non-monotone.
    """
    buf = guard.history.get(node_id)
    if buf is None:
        buf = guard.history[node_id] = deque(maxlen=guard.window)
    reason = None
    for prev in buf:
        if prev[0] < report[0]:
            reason = _violation(guard, prev, report)
        elif prev[0] > report[0]:
            reason = _violation(guard, report, prev)
        if reason:
            break
    if reason is None and mismatch:
        reason = "recompute_mismatch"
    buf.append(tuple(report))
    if reason is None:
        return Verdict.NORMAL
    guard.flagged.add(node_id)
    guard.flag_counts[node_id] += 1
    guard.last_reason[node_id] = reason
    return Verdict.FLAGGED


def choose_sanction(policy: str, reason: str, reported_t: float, cluster_t: float) -> Sanction:
    """'auto' resets nodes that look frozen hot and quarantines everything else."""
    if policy == "quarantine":
        return Sanction.QUARANTINE
    if policy == "temp_reset":
        return Sanction.TEMP_RESET
    if reason != "recompute_mismatch" and reported_t > cluster_t:
        return Sanction.TEMP_RESET
    return Sanction.QUARANTINE


def apply_sanction(sim, node_id: int, sanction: Sanction):
    node = sim.nodes[node_id]
    if node.role is Role.DEAD:
        sim.log("sanction_noop", node=node_id, sanction=sanction.value)
        return
    sim.counters["sanctions"] += 1
    sim.log("sanction", node=node_id, sanction=sanction.value)
    if sanction is Sanction.QUARANTINE:
        node.role = Role.QUARANTINED
        sim.coordinator.liveness.pop(node_id, None)
        sim.send(MsgKind.QUARANTINE, COORDINATOR, node_id)
    else:
        if sim.guard is not None:
            sim.guard.reset(node_id)
        sim.send(MsgKind.TEMP_RESET, COORDINATOR, node_id, temperature=sim.params.t0)
