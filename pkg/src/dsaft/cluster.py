"""Deterministic discrete-event simulation of distributed simulated annealing.

N searcher nodes anneal in lockstep (one annealing step per node per tick)
and broadcast BEST_FOUND whenever they beat the best they know of. A trusted
coordinator recomputes every reported energy, keeps the global record,
watches heartbeats, and hosts the tolerance strategies.

Within one tick the order is fixed: scheduled faults, node steps in id order,
deliveries due by this tick in (kind, src, seq) order, coordinator duties.
Every random decision comes from a per-node stream or from a stream keyed by
message identity, so the event log is a pure function of seed and config.
"""
from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .annealing import AnnealParams, ChainState, anneal_step, cool, init_chain
from .errors import ParameterError, ValidationError
from .faults import (
    EccentricKind,
    EccentricState,
    FaultScenario,
    FaultTrace,
    apply_crash,
    eccentric_report,
    maybe_corrupt,
    maybe_drop,
)
from .rng import KeyedStream, RngStream
from .state import ALL, COORDINATOR, FabricConfig, Message, MsgKind, NodeState, Role
from .tolerance import (
    GuardState,
    Strategy,
    ToleranceConfig,
    Verdict,
    apply_sanction,
    choose_sanction,
    guard_observe,
    hot_standby_replace,
    promote_reciprocators,
    replication_active,
)

ENERGY_TOL = 1e-9
_FABRIC_KEY = 0xFAB
_ADOPT_KEY = 0xAD0


@dataclass(frozen=True)
class ClusterConfig:
    heartbeat_period: int = 10
    timeout_heartbeats: int = 3
    adoption_beta: float = 0.5
    broadcasts: bool = True

    def __post_init__(self):
        if self.heartbeat_period < 1 or self.timeout_heartbeats < 1:
            raise ValidationError("heartbeat_period and timeout_heartbeats must be positive")
        if not 0 <= self.adoption_beta <= 1:
            raise ValidationError("adoption_beta must lie in [0, 1]")


@dataclass
class Coordinator:
    temperature: float
    record: Optional[tuple] = None  # (energy, solution, src)
    liveness: dict = field(default_factory=dict)  # node -> send tick of last heartbeat
    suspected: set = field(default_factory=set)
    promoted: bool = False
    processed: int = 0


@dataclass
class ExperimentTrace:
    rows: list  # (tick, global_best_energy|None, messages_sent, messages_dropped, live_nodes)
    event_log: list
    fault_trace: FaultTrace
    counters: Counter
    record: Optional[tuple]
    final_best: Optional[tuple]
    best_curves: dict
    node_steps: dict
    node_sent: dict
    roles: dict
    ticks: int
    completed: bool
    coordinator_events: int
    flagged: frozenset
    per_message_cost: float
    final_chains: dict

    @property
    def total_steps(self):
        return sum(self.node_steps.values())

    @property
    def messages_sent(self):
        return self.rows[-1][2] if self.rows else 0


class SimState:
    def __init__(self, problem, params: AnnealParams, fabric: FabricConfig, master_seed: int,
                 config: ClusterConfig, tolerance: ToleranceConfig, scenario: FaultScenario):
        self.problem = problem
        self.params = params
        self.fabric = scenario.apply_to(fabric)
        self.master_seed = int(master_seed)
        self.config = config
        self.tolerance = tolerance
        self.scenario = scenario
        self.nodes: list[NodeState] = []
        self.coordinator = Coordinator(temperature=params.t0)
        self.guard = GuardState(tolerance.window, tolerance.eps) if tolerance.has(Strategy.GRADIENT_GUARD) else None
        self.now = 0
        self.queue: list = []
        self.seq = 0
        self.coord_sent = 0
        self.event_log: list = []
        self.fault_trace = FaultTrace()
        self.counters: Counter = Counter()
        self.rows: list = []
        self.best_curves: dict = {}
        self.crash_schedule: dict = {}
        self.done = False
        self.timeout = config.timeout_heartbeats * config.heartbeat_period + self.fabric.max_delay

    # ------------------------------------------------------------ plumbing

    def log(self, ev, **fields):
        rec = {"t": self.now, "ev": ev}
        rec.update(fields)
        self.event_log.append(rec)

    def _members(self, exclude):
        # standbys are idle and quarantined nodes are expelled; dead nodes are unknown to senders
        out = [n.id for n in self.nodes
               if n.id != exclude and n.role in (Role.SEARCHER, Role.RECIPROCATOR, Role.DEAD)]
        if exclude != COORDINATOR:
            out.append(COORDINATOR)
        return out

    def send(self, kind: MsgKind, src: int, dst: int, solution=None, energy=None,
             temperature=None, held_energy=None):
        dsts = self._members(src) if dst == ALL else [dst]
        fabric = self.fabric
        for d in dsts:
            if src == COORDINATOR:
                index = self.coord_sent
                self.coord_sent += 1
            else:
                node = self.nodes[src]
                index = node.sent
                node.sent += 1
            self.seq += 1
            msg = Message(kind, src, d, self.now, 0, self.seq, solution, energy, temperature, held_energy)
            self.counters["sent"] += 1
            self.counters[f"sent_{kind.name}"] += 1
            self.log("send", kind=kind.name, src=src, dst=d, seq=msg.seq, energy=energy, temp=temperature)
            draws = KeyedStream(self.master_seed, _FABRIC_KEY, kind, src, d, self.now, index)
            if maybe_drop(fabric, msg, draws):
                self.counters["dropped"] += 1
                self.fault_trace.log(self.now, "drop", msg.seq)
                self.log("drop", seq=msg.seq)
                continue
            if kind in (MsgKind.BEST_FOUND, MsgKind.REPLICA):
                msg = maybe_corrupt(fabric, msg, draws)
                if msg.corrupted:
                    self.counters["corrupted"] += 1
                    self.fault_trace.log(self.now, "corrupt", msg.seq)
                    self.log("corrupt", seq=msg.seq, energy=msg.energy)
            delay = fabric.base_delay + (draws.randrange(fabric.jitter + 1) if fabric.jitter else 0)
            msg.delivery_time = self.now + delay
            heapq.heappush(self.queue, (msg.delivery_time, int(kind), src, msg.seq, msg))

    def cancel_pending_from(self, node_id, after):
        keep = [e for e in self.queue if not (e[4].src == node_id and e[4].send_time > after)]
        if len(keep) != len(self.queue):
            heapq.heapify(keep)
            self.queue = keep

    def live_reciprocators(self):
        return [n for n in self.nodes if n.role is Role.RECIPROCATOR]

    def send_replica(self, node_id):
        rec = self.coordinator.record
        if rec is None:
            return
        self.send(MsgKind.REPLICA, COORDINATOR, node_id, solution=rec[1], energy=rec[0],
                  temperature=self.coordinator.temperature)

    def replicas_synced(self):
        rec = self.coordinator.record
        if not self.coordinator.promoted or rec is None:
            return True
        recips = self.live_reciprocators()
        if not recips:
            return True
        return any(n.held is not None and n.held[0] <= rec[0] + ENERGY_TOL for n in recips)


def build_cluster(n_searchers: int, n_standby: int, fabric: FabricConfig, params: AnnealParams,
                  problem, master_seed: int, config: Optional[ClusterConfig] = None,
                  tolerance: Optional[ToleranceConfig] = None,
                  scenario: Optional[FaultScenario] = None) -> SimState:
    if n_searchers < 1:
        raise ValidationError("a cluster needs at least one searcher")
    if n_standby < 0:
        raise ValidationError("n_standby must be non-negative")
    config = config or ClusterConfig()
    tolerance = tolerance or ToleranceConfig()
    scenario = scenario or FaultScenario()
    scenario.validate(n_searchers + n_standby)
    sim = SimState(problem, params, fabric, master_seed, config, tolerance, scenario)
    for i in range(n_searchers + n_standby):
        rng = RngStream(master_seed, i)
        if i < n_searchers:
            node = NodeState(i, Role.SEARCHER, rng, chain=init_chain(problem, params, rng))
            sim.coordinator.liveness[i] = 0
            sim.best_curves[i] = []
        else:
            node = NodeState(i, Role.STANDBY, rng)
        sim.nodes.append(node)
    for node_id, tick in scenario.crashes:
        sim.crash_schedule.setdefault(tick, []).append(node_id)
    for spec in scenario.eccentric:
        sim.nodes[spec.node].eccentric = EccentricState(spec)
    return sim


# ---------------------------------------------------------------- node side


def _broadcast(sim, node, solution, energy, temperature):
    sim.send(MsgKind.BEST_FOUND, node.id, ALL, solution=solution, energy=energy, temperature=temperature)


def node_tick(sim: SimState, node_id: int):
    """One scheduled tick of a live node: an annealing step for searchers, then heartbeats."""
    node = sim.nodes[node_id]
    now = sim.now
    period = sim.config.heartbeat_period
    before = len(sim.event_log)
    ecc = node.eccentric if node.eccentric is not None and node.eccentric.active(now) else None
    kind = ecc.spec.kind if ecc is not None else None

    if node.role is Role.SEARCHER and not node.chain.finished:
        prev_best = node.chain.best_energy
        chain = anneal_step(node.chain, sim.problem, sim.params, node.rng,
                            cooling=kind is not EccentricKind.STUCK_TEMPERATURE)
        node.chain = chain
        node.steps += 1
        sim.best_curves[node_id].append(chain.best_energy)
        if sim.config.broadcasts:
            if kind is None or kind is EccentricKind.UNDERREPORT:
                kb = node.known_global_best
                if chain.best_energy < prev_best and (kb is None or chain.best_energy < kb[0]):
                    if kind is None:
                        payload = (chain.best_solution, chain.best_energy, chain.temperature)
                    else:
                        payload = eccentric_report(node, kind, chain)
                        sim.fault_trace.log(now, "eccentric", node_id)
                    node.known_global_best = (chain.best_energy, chain.best_solution, node_id)
                    _broadcast(sim, node, *payload)
            elif now % period == 0:
                payload = eccentric_report(node, kind, chain)
                sim.fault_trace.log(now, "eccentric", node_id)
                _broadcast(sim, node, *payload)

    if now % period == 0 and node.role in (Role.SEARCHER, Role.RECIPROCATOR):
        held = node.held[0] if node.held is not None else None
        sim.send(MsgKind.HEARTBEAT, node_id, COORDINATOR, held_energy=held)
        node.last_heartbeat_sent = now
    return [e for e in sim.event_log[before:] if e["ev"] == "send"]


# ------------------------------------------------------------ message side


def _discard(sim, msg, reason):
    sim.counters[f"discard_{reason}"] += 1
    sim.log("discard", seq=msg.seq, src=msg.src, dst=msg.dst, reason=reason)


def _coordinator_receive(sim, msg):
    coord = sim.coordinator
    coord.processed += 1
    if msg.kind is MsgKind.HEARTBEAT:
        if msg.send_time > coord.liveness.get(msg.src, -1) and msg.src in coord.liveness:
            coord.liveness[msg.src] = msg.send_time
        if msg.src in coord.suspected:
            coord.suspected.discard(msg.src)
            sim.log("unsuspect", node=msg.src)
        rec = coord.record
        if (coord.promoted and rec is not None and sim.nodes[msg.src].role is Role.RECIPROCATOR
                and (msg.held_energy is None or msg.held_energy > rec[0] + ENERGY_TOL)):
            sim.send_replica(msg.src)
        return
    if msg.kind is not MsgKind.BEST_FOUND:
        return

    problem = sim.problem
    try:
        problem.validate(msg.solution)
        true_e = problem.energy(msg.solution)
    except ValidationError:
        _discard(sim, msg, "infeasible")
        return
    mismatch = abs(msg.energy - true_e) > ENERGY_TOL
    if sim.guard is not None:
        verdict = guard_observe(sim.guard, msg.src, (msg.send_time, msg.energy, msg.temperature), mismatch)
        if verdict is Verdict.FLAGGED:
            reason = sim.guard.last_reason[msg.src]
            sim.counters["flags"] += 1
            sim.log("flag", node=msg.src, reason=reason, seq=msg.seq)
            sanction = choose_sanction(sim.tolerance.sanction, reason, msg.temperature, coord.temperature)
            apply_sanction(sim, msg.src, sanction)
    if mismatch:
        sim.counters["corruptions_detected"] += 1
        _discard(sim, msg, "mismatch")
        return
    sim.log("verify", seq=msg.seq, src=msg.src, energy=true_e)
    rec = coord.record
    if rec is None or true_e < rec[0] or (true_e == rec[0] and msg.src < rec[2]):
        improved = rec is None or true_e < rec[0]
        coord.record = (true_e, msg.solution, msg.src)
        sim.log("record", energy=true_e, src=msg.src, improved=improved, solution=msg.solution)
        if improved and coord.promoted:
            for n in sim.live_reciprocators():
                sim.send_replica(n.id)


def _store_replica(sim, node, msg):
    node.replica_store.append((msg.solution, msg.energy, msg.src, sim.now))
    try:
        sim.problem.validate(msg.solution)
    except ValidationError:
        return
    e = sim.problem.energy(msg.solution)
    if node.held is None or e < node.held[0]:
        node.held = (e, msg.solution)


def deliver(sim: SimState, msg: Message):
    sim.log("deliver", seq=msg.seq, kind=msg.kind.name, src=msg.src, dst=msg.dst)
    if msg.src != COORDINATOR and sim.nodes[msg.src].role is Role.QUARANTINED:
        _discard(sim, msg, "quarantined")
        return
    if msg.dst == COORDINATOR:
        _coordinator_receive(sim, msg)
        return
    node = sim.nodes[msg.dst]
    if not node.alive:
        _discard(sim, msg, "dst_down")
        return
    kind = msg.kind
    if node.role is Role.RECIPROCATOR and kind in (MsgKind.BEST_FOUND, MsgKind.REPLICA):
        _store_replica(sim, node, msg)
        sim.log("stored", node=node.id, seq=msg.seq)
        return
    if node.role is not Role.SEARCHER:
        return
    if kind is MsgKind.BEST_FOUND:
        kb = node.known_global_best
        if kb is None or msg.energy < kb[0] or (msg.energy == kb[0] and msg.src < kb[2]):
            node.known_global_best = (msg.energy, msg.solution, msg.src)
        chain = node.chain
        beta = sim.config.adoption_beta
        if beta > 0 and not chain.finished and msg.energy < chain.current_energy:
            gate = min(1.0, math.sqrt(sim.params.t_low / chain.temperature)) * beta
            if KeyedStream(sim.master_seed, _ADOPT_KEY, node.id, msg.seq).uniform() < gate:
                try:
                    sim.problem.validate(msg.solution)
                except ValidationError:
                    return
                e = sim.problem.energy(msg.solution)
                if e < chain.best_energy:
                    best, best_e = msg.solution, e
                else:
                    best, best_e = chain.best_solution, chain.best_energy
                node.chain = ChainState(msg.solution, e, best, best_e, chain.temperature,
                                        chain.step_count, chain.finished)
                sim.counters["adoptions"] += 1
                sim.log("adopt", node=node.id, seq=msg.seq, energy=e)
    elif kind is MsgKind.TEMP_RESET:
        c = node.chain
        node.chain = ChainState(c.current_solution, c.current_energy, c.best_solution, c.best_energy,
                                msg.temperature, c.step_count, False)
        sim.log("reset_applied", node=node.id, temp=msg.temperature)


# ------------------------------------------------------------------ engine


def _coordinator_tick(sim):
    coord = sim.coordinator
    now = sim.now
    for node_id, last in list(coord.liveness.items()):
        if node_id in coord.suspected or now - last <= sim.timeout:
            continue
        coord.suspected.add(node_id)
        sim.counters["detections"] += 1
        sim.log("detect", node=node_id, last_heartbeat=last)
        if sim.tolerance.has(Strategy.HOT_STANDBY):
            if hot_standby_replace(sim, node_id) is not None:
                sim.counters["replacements"] += 1

    if (now + 1) % sim.params.steps_per_temperature == 0 and coord.temperature > sim.params.t_low:
        coord.temperature = cool(sim.params, coord.temperature)

    if (sim.tolerance.has(Strategy.HYBRID_REPLICATION) and not coord.promoted
            and replication_active(coord.temperature, sim.params, sim.tolerance.theta)):
        coord.promoted = True
        sim.log("replication_on", temp=coord.temperature)
        for node_id in promote_reciprocators(sim, sim.tolerance.rho):
            sim.counters["promotions"] += 1
            sim.send_replica(node_id)


def _is_finished(sim):
    for n in sim.nodes:
        if n.role is Role.SEARCHER and not n.chain.finished:
            return False
    return not sim.queue and sim.replicas_synced()


def step_simulation(sim: SimState) -> SimState:
    """Process every event of the current tick and advance the clock by one."""
    now = sim.now
    for node_id in sim.crash_schedule.get(now, ()):
        apply_crash(sim, node_id, now)
    for node in sim.nodes:
        if node.eccentric is not None and node.eccentric.spec.start_tick == now:
            sim.log("eccentric_start", node=node.id, kind=node.eccentric.spec.kind.value)

    for node in sim.nodes:
        if node.role is Role.SEARCHER or node.role is Role.RECIPROCATOR:
            node_tick(sim, node.id)

    queue = sim.queue
    while queue and queue[0][0] <= now:
        deliver(sim, heapq.heappop(queue)[4])

    _coordinator_tick(sim)

    rec = sim.coordinator.record
    live = sum(1 for n in sim.nodes if n.alive)
    sim.rows.append((now, rec[0] if rec is not None else None, sim.counters["sent"],
                     sim.counters["dropped"], live))
    sim.now = now + 1
    sim.done = _is_finished(sim)
    return sim


def harvest(sim: SimState):
    """End-of-run collection: recompute and merge every live node's best with the coordinator record."""
    best = sim.coordinator.record
    for node in sim.nodes:
        if node.role not in (Role.SEARCHER, Role.RECIPROCATOR):
            continue
        cands = []
        if node.chain is not None:
            cands.append(node.chain.best_solution)
        if node.held is not None:
            cands.append(node.held[1])
        for sol in cands:
            e = sim.problem.energy(sol)
            sim.log("harvest", node=node.id, energy=e)
            if best is None or e < best[0] or (e == best[0] and node.id < best[2]):
                best = (e, sol, node.id)
    return best


def run_until_done(sim: SimState, budget_ticks: int) -> ExperimentTrace:
    if budget_ticks < 1:
        raise ParameterError("budget_ticks must be at least 1")
    while not sim.done and sim.now < budget_ticks:
        step_simulation(sim)
    final = harvest(sim)
    sim.log("end", completed=sim.done, energy=final[0] if final else None)
    return ExperimentTrace(
        rows=sim.rows,
        event_log=sim.event_log,
        fault_trace=sim.fault_trace,
        counters=sim.counters,
        record=sim.coordinator.record,
        final_best=final,
        best_curves=sim.best_curves,
        node_steps={n.id: n.steps for n in sim.nodes},
        node_sent={n.id: n.sent for n in sim.nodes},
        roles={n.id: n.role for n in sim.nodes},
        ticks=sim.now,
        completed=sim.done,
        coordinator_events=sim.coordinator.processed,
        flagged=frozenset(sim.guard.flagged) if sim.guard is not None else frozenset(),
        per_message_cost=sim.fabric.per_message_cost,
        final_chains={n.id: n.chain for n in sim.nodes},
    )
