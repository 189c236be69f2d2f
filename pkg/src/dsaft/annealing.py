"""Sequential simulated-annealing kernel.

Acceptance follows the Boltzmann rule on the energy *difference* of a
proposed transition, with a geometric cooling schedule that plateaus for
``steps_per_temperature`` steps at each temperature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .errors import DegenerateLandscapeError, InfeasibleMove, ParameterError, StateError
from .rng import CALIBRATION_STREAM, RngStream

MAX_PROPOSAL_RETRIES = 16


@dataclass(frozen=True)
class AnnealParams:
    t0: float
    t_low: float
    p_e0: float = 0.8
    alpha: float = 0.95
    steps_per_temperature: int = 50
    k: float = 1.0

    def __post_init__(self):
        if not self.k > 0:
            raise ParameterError(f"k must be positive, got {self.k}")
        if not self.t_low > 0:
            raise ParameterError(f"t_low must be positive, got {self.t_low}")
        if not self.t_low < self.t0:
            raise ParameterError(f"need t_low < t0, got t_low={self.t_low}, t0={self.t0}")
        if not 0 < self.p_e0 < 1:
            raise ParameterError(f"p_e0 must lie in (0, 1), got {self.p_e0}")
        if not 0 < self.alpha < 1:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.steps_per_temperature) != self.steps_per_temperature or self.steps_per_temperature < 1:
            raise ParameterError("steps_per_temperature must be a positive integer")


@dataclass(slots=True)
class ChainState:
    current_solution: Any
    current_energy: float
    best_solution: Any
    best_energy: float
    temperature: float
    step_count: int = 0
    finished: bool = False


def boltzmann_probability(delta_e: float, t: float, k: float = 1.0) -> float:
    """Probability of accepting a transition that changes energy by ``delta_e``."""
    if not t > 0:
        raise ParameterError(f"temperature must be positive, got {t}")
    if not k > 0:
        raise ParameterError(f"k must be positive, got {k}")
    if delta_e <= 0:
        return 1.0
    return math.exp(-delta_e / (k * t))


def metropolis_accept(current_e: float, candidate_e: float, t: float, k: float, rng: RngStream) -> bool:
    # improving moves consume no randomness; this keeps replay exact
    p = boltzmann_probability(candidate_e - current_e, t, k)
    if candidate_e <= current_e:
        return True
    return rng.uniform() < p


def cool(params: AnnealParams, t: float) -> float:
    if t < params.t_low:
        raise StateError(f"temperature {t} is already below t_low={params.t_low}")
    return max(params.t_low, params.alpha * t)


def schedule_length(params: AnnealParams) -> int:
    """Steps a chain takes from t0 until it has finished one plateau at t_low."""
    t, plateaus = params.t0, 1
    while t > params.t_low:
        t = cool(params, t)
        plateaus += 1
    return plateaus * params.steps_per_temperature


def t0_from_mean_increase(mean_increase: float, p_e0: float, k: float = 1.0) -> float:
    """Temperature at which an uphill move of size ``mean_increase`` is accepted with probability p_e0."""
    if not 0 < p_e0 < 1:
        raise ParameterError(f"p_e0 must lie in (0, 1), got {p_e0}")
    if not k > 0:
        raise ParameterError(f"k must be positive, got {k}")
    if not mean_increase > 0:
        raise DegenerateLandscapeError("no worsening move was sampled during warm-up")
    return mean_increase / (-k * math.log(p_e0))


def warmup_increases(problem, warmup_steps: int, rng: RngStream) -> list[float]:
    """Positive energy increases seen along an unconditioned random walk."""
    if warmup_steps < 10:
        raise ParameterError("warmup_steps must be at least 10")
    x = problem.random_solution(rng)
    e = problem.energy(x)
    increases = []
    for _ in range(warmup_steps):
        try:
            y = problem.neighbor(x, rng, 1.0)
        except InfeasibleMove:
            continue
        ey = problem.energy(y)
        if ey > e:
            increases.append(ey - e)
        x, e = y, ey
    return increases


def calibrate_t0(problem, p_e0: float, k: float, warmup_steps: int, rng: RngStream) -> float:
    increases = warmup_increases(problem, warmup_steps, rng)
    if not increases:
        raise DegenerateLandscapeError("all warm-up moves were non-worsening")
    return t0_from_mean_increase(math.fsum(increases) / len(increases), p_e0, k)


def calibrated_params(
    problem,
    seed: int,
    *,
    p_e0: float = 0.8,
    k: float = 1.0,
    t_low: Optional[float] = None,
    t_low_ratio: float = 1e-3,
    alpha: float = 0.95,
    steps_per_temperature: int = 50,
    warmup_steps: int = 200,
) -> AnnealParams:
    """Default parameter set: t0 from the warm-up walk, t_low a fixed fraction of t0 unless given."""
    rng = RngStream(seed, CALIBRATION_STREAM)
    t0 = calibrate_t0(problem, p_e0, k, warmup_steps, rng)
    if t_low is None:
        t_low = t0 * t_low_ratio
    return AnnealParams(t0=t0, t_low=t_low, p_e0=p_e0, alpha=alpha,
                        steps_per_temperature=steps_per_temperature, k=k)


def init_chain(problem, params: AnnealParams, rng: RngStream, solution=None, temperature=None) -> ChainState:
    if solution is None:
        solution = problem.random_solution(rng)
    e = problem.energy(solution)
    t = params.t0 if temperature is None else temperature
    return ChainState(solution, e, solution, e, t)


def anneal_step(chain: ChainState, problem, params: AnnealParams, rng: RngStream, cooling: bool = True) -> ChainState:
    """One proposal/acceptance step; returns a new ChainState.

    Infeasible proposals are retried up to MAX_PROPOSAL_RETRIES times, after
    which the step only advances the counter. ``cooling=False`` freezes the
    temperature (used to model a node that never cools).
    """
    t = chain.temperature
    if t < params.t_low:
        raise StateError("chain temperature below t_low")
    ratio = t / params.t0
    cand = None
    for _ in range(MAX_PROPOSAL_RETRIES):
        try:
            cand = problem.neighbor(chain.current_solution, rng, ratio)
            cand_e = problem.energy(cand)
        except InfeasibleMove:
            cand = None
            continue
        break

    cur, cur_e = chain.current_solution, chain.current_energy
    if cand is not None and metropolis_accept(cur_e, cand_e, t, params.k, rng):
        cur, cur_e = cand, cand_e
    best, best_e = chain.best_solution, chain.best_energy
    if cur_e < best_e:
        best, best_e = cur, cur_e

    step = chain.step_count + 1
    finished = chain.finished
    if cooling and step % params.steps_per_temperature == 0:
        if t <= params.t_low:
            finished = True
        else:
            t = cool(params, t)
    return ChainState(cur, cur_e, best, best_e, t, step, finished)


def run_chain(
    problem,
    params: AnnealParams,
    rng: RngStream,
    budget: int,
    on_step: Optional[Callable[[ChainState], None]] = None,
) -> ChainState:
    """Anneal until one full plateau at t_low has elapsed or ``budget`` steps are spent."""
    if budget < 1:
        raise ParameterError("budget must be at least 1")
    chain = init_chain(problem, params, rng)
    for _ in range(budget):
        chain = anneal_step(chain, problem, params, rng)
        if on_step is not None:
            on_step(chain)
        if chain.finished:
            break
    return chain
