"""
Ground-Truth Oracles

Independent reference answers used to validate the model and the solver:
an exhaustive search over a rate grid, an exhaustive enumeration of integer
memory splits, and a seeded Monte-Carlo simulation of one generation window.
"""

import math
import logging
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict, replace
from typing import List, Optional

import numpy as np

from model import (
    AllocationStatus,
    ConstraintMode,
    NodeConfig,
    RateAllocation,
    Scenario,
    UserProfile,
    channel_success_prob,
    decoherence_success_prob,
    expected_success_pairs,
    objective,
    pair_yield,
)
from solver import (
    Feasibility,
    allocation_from_cells,
    check_feasibility,
    coefficients,
    integer_feasibility,
    improves,
    integer_problem,
    Relaxation,
    SolverOptions,
    solve,
)
from utils.logger import log_execution_time

logger = logging.getLogger(__name__)

MAX_GRID_USERS = 3
MAX_ENUMERATION_CAPACITY = 60
MAX_HEAD_POINTS = 5_000_000

# Largest slope of h(x) = x(1 - e^-x), reached at x = 2
MAX_YIELD_SLOPE = 1.0 + math.exp(-2.0)


class GridTooCoarseError(RuntimeError):
    """The scenario is feasible but no grid point satisfies the memory constraint."""


@dataclass(frozen=True)
class GridSpec:
    step: float = 1e7            # ebit/s
    slack: Optional[float] = None  # yield units below C; None derives it from the step

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"grid step must be > 0, got {self.step}")
        if self.slack is not None and not self.slack > 0:
            raise ValueError(f"grid slack must be > 0, got {self.slack}")

    def slack_for(self, scenario: Scenario) -> float:
        """One widest yield spacing between neighbouring grid rates per user."""
        if self.slack is not None:
            return self.slack
        return scenario.size * MAX_YIELD_SLOPE * self.step * scenario.tau


@dataclass(frozen=True)
class McReport:
    trials: int
    pairs_per_window: int
    mean: float
    stderr: float
    analytic: float
    analytic_discrete: float
    discretization_bias: float
    z_score: float
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def rate_grid(user: UserProfile, step: float) -> np.ndarray:
    count = int(math.floor((user.rate_max - user.rate_min) / step))
    grid = user.rate_min + step * np.arange(count + 1)
    if grid[-1] < user.rate_max:
        grid = np.append(grid, user.rate_max)
    return grid


@log_execution_time
def brute_force_best(scenario: Scenario, grid: Optional[GridSpec] = None) -> RateAllocation:
    """
    Best rate vector on the grid whose memory use lies in [C - slack, C]
    (anywhere up to C in at_most mode).

    No grid point may exceed the budget, so the result approaches the
    continuous optimum from below as the grid is refined. For every
    combination of the first N-1 users' grid rates the last user takes its
    largest grid rate that still fits, because the objective grows with every
    rate; searchsorted on that user's yields replaces the full product scan.
    """
    grid = grid or GridSpec()
    if scenario.size > MAX_GRID_USERS:
        raise ValueError(f"brute_force_best supports at most {MAX_GRID_USERS} users, got {scenario.size}")

    verdict = check_feasibility(scenario)
    if verdict != Feasibility.FEASIBLE:
        return RateAllocation.infeasible(verdict.value)

    tau = scenario.tau
    capacity = float(scenario.node.memory_capacity)
    at_most = scenario.node.constraint_mode == ConstraintMode.AT_MOST
    slack = grid.slack_for(scenario)
    coeffs = coefficients(scenario)

    grids = [rate_grid(user, grid.step) for user in scenario.users]
    yields = [pair_yield(g * tau) for g in grids]

    head_size = int(np.prod([len(g) for g in grids[:-1]])) if scenario.size > 1 else 1
    if head_size > MAX_HEAD_POINTS:
        raise ValueError(f"rate grid has {head_size} head points; use a coarser step")

    if scenario.size > 1:
        mesh = np.meshgrid(*[np.arange(len(g)) for g in grids[:-1]], indexing="ij")
        head_index = [m.ravel() for m in mesh]
        head_yield = sum(yields[j][head_index[j]] for j in range(scenario.size - 1))
        head_value = sum(coeffs[j] * yields[j][head_index[j]] for j in range(scenario.size - 1))
    else:
        head_index = []
        head_yield = np.zeros(1)
        head_value = np.zeros(1)

    last_yield = yields[-1]
    residual = capacity - head_yield
    fit_noise = 1e-12 * max(1.0, capacity)
    last_index = np.searchsorted(last_yield, residual + fit_noise, side="right") - 1
    valid = last_index >= 0
    safe_index = np.clip(last_index, 0, len(last_yield) - 1)
    if not at_most:
        valid &= last_yield[safe_index] >= residual - slack - fit_noise

    if not valid.any():
        raise GridTooCoarseError(
            f"no grid point within {slack:.3g} below C={scenario.node.memory_capacity}; "
            f"reduce the grid step (currently {grid.step:.3g} ebit/s)"
        )

    totals = np.where(valid, head_value + coeffs[-1] * last_yield[safe_index], -np.inf)
    best = int(np.argmax(totals))
    rates = [float(grids[j][head_index[j][best]]) for j in range(scenario.size - 1)]
    rates.append(float(grids[-1][safe_index[best]]))

    best_yields = pair_yield(np.array(rates) * tau)
    logger.debug(f"Grid search over {head_size} head points, best objective {totals[best]:.9g}")
    return RateAllocation(
        rates=tuple(rates),
        yields=tuple(float(y) for y in best_yields),
        memory_cells=tuple(int(m) for m in np.floor(best_yields)),
        objective=objective(scenario, rates),
        status=AllocationStatus.OPTIMAL,
        meta={"grid_step": grid.step, "slack": slack},
    )


def enumerate_integer_best(scenario: Scenario) -> RateAllocation:
    """Exhaustive search over integer memory splits with the lower-bound pinning rule."""
    if scenario.size > MAX_GRID_USERS:
        raise ValueError(f"enumerate_integer_best supports at most {MAX_GRID_USERS} users, got {scenario.size}")
    if scenario.node.memory_capacity > MAX_ENUMERATION_CAPACITY:
        raise ValueError(
            f"enumerate_integer_best supports C <= {MAX_ENUMERATION_CAPACITY}, "
            f"got {scenario.node.memory_capacity}"
        )

    problem = integer_problem(scenario)
    verdict = integer_feasibility(problem)
    if verdict != Feasibility.FEASIBLE:
        return RateAllocation.infeasible(f"integer_{verdict.value}", relaxation=Relaxation.INTEGER.value)

    capacity = problem.capacity
    head_ranges = [range(int(problem.m_floor[j]), int(problem.m_hi[j]) + 1) for j in range(scenario.size - 1)]
    last_lo, last_hi = int(problem.m_floor[-1]), int(problem.m_hi[-1])

    best_value: Optional[float] = None
    best_cells: Optional[np.ndarray] = None
    for head in itertools.product(*head_ranges):
        remaining = capacity - sum(head)
        if problem.at_most:
            last = min(last_hi, remaining)
            if last < last_lo:
                continue
        else:
            last = remaining
            if not last_lo <= last <= last_hi:
                continue
        cells = np.array(list(head) + [last], dtype=np.int64)
        value = float(np.dot(problem.coeffs, np.maximum(cells.astype(float), problem.y_lo)))
        if improves(value, best_value):
            best_value, best_cells = value, cells

    if best_cells is None:
        return RateAllocation.infeasible("integer_infeasible", relaxation=Relaxation.INTEGER.value)
    return allocation_from_cells(scenario, problem, best_cells)


def _simulate_block(seed_sequence: np.random.SeedSequence, size: int, pairs: int,
                    p_channel: float, p_storage: float) -> np.ndarray:
    rng = np.random.default_rng(seed_sequence)
    reached = rng.random((size, pairs)) < p_channel
    stored = rng.random((size, pairs)) < p_storage
    return np.count_nonzero(reached & stored, axis=1)


@log_execution_time
def monte_carlo_window(user: UserProfile, rate: float, node: NodeConfig, trials: int, seed: int,
                       block_size: int = 4096, workers: int = 1) -> McReport:
    """
    Simulate `trials` generation windows for one user.

    Each window generates K = round(rate * tau) pairs; every pair survives the
    channel and the storage with one Bernoulli draw each. Trials run in fixed
    blocks whose generators are spawned from the seed, so the report does not
    depend on the number of workers.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not rate > 0:
        raise ValueError(f"rate must be > 0, got {rate}")
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")

    tau = node.tau
    pairs = int(math.floor(rate * tau + 0.5))
    p_channel = channel_success_prob(user, node.attenuation_mode)
    p_storage = float(decoherence_success_prob(rate, tau))

    block_sizes: List[int] = [block_size] * (trials // block_size)
    if trials % block_size:
        block_sizes.append(trials % block_size)
    seeds = np.random.SeedSequence(seed).spawn(len(block_sizes))

    jobs = list(zip(seeds, block_sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(lambda job: _simulate_block(job[0], job[1], pairs, p_channel, p_storage), jobs))
    else:
        counts = [_simulate_block(s, n, pairs, p_channel, p_storage) for s, n in jobs]
    samples = np.concatenate(counts)

    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    analytic = float(expected_success_pairs(rate, tau, user, node.attenuation_mode))
    analytic_discrete = pairs * p_channel * p_storage
    if stderr > 0:
        z_score = (mean - analytic_discrete) / stderr
    else:
        z_score = 0.0 if math.isclose(mean, analytic_discrete, rel_tol=1e-12, abs_tol=1e-12) else math.inf

    logger.debug(f"Monte-Carlo K={pairs} trials={trials}: mean {mean:.6g} +/- {stderr:.3g}")
    return McReport(
        trials=trials,
        pairs_per_window=pairs,
        mean=mean,
        stderr=stderr,
        analytic=analytic,
        analytic_discrete=analytic_discrete,
        discretization_bias=analytic_discrete - analytic,
        z_score=z_score,
        seed=seed,
    )


@dataclass(frozen=True)
class OracleCheck:
    label: str
    solver: RateAllocation
    oracle: RateAllocation
    tolerance: float
    matched: bool

    @property
    def difference(self) -> float:
        if not (self.solver.is_optimal and self.oracle.is_optimal):
            return 0.0
        return self.solver.objective - self.oracle.objective


def _statuses_agree(found: RateAllocation, reference: RateAllocation) -> Optional[bool]:
    if found.is_optimal != reference.is_optimal:
        return False
    if not found.is_optimal:
        return True
    return None


def check_against_grid(scenario: Scenario, grid: Optional[GridSpec] = None,
                       options: Optional[SolverOptions] = None) -> OracleCheck:
    """
    Compare the continuous solver with the grid search.

    The grid never beats the optimum. Rounding every optimal rate down to the
    grid loses at most one yield spacing per user, so the shortfall is bounded
    by the slack times the largest coefficient.
    """
    grid = grid or GridSpec()
    options = replace(options or SolverOptions(), relaxation=Relaxation.CONTINUOUS)
    found = solve(scenario, options)
    reference = brute_force_best(scenario, grid)

    tolerance = grid.slack_for(scenario) * float(np.max(coefficients(scenario)))
    verdict = _statuses_agree(found, reference)
    if verdict is None:
        noise = 1e-9 * max(1.0, abs(found.objective))
        verdict = -noise <= found.objective - reference.objective <= tolerance + noise
    return OracleCheck("grid search", found, reference, tolerance, verdict)


def check_against_enumeration(scenario: Scenario, options: Optional[SolverOptions] = None) -> OracleCheck:
    """Compare the integer solver with exhaustive enumeration of memory splits."""
    options = replace(options or SolverOptions(), relaxation=Relaxation.INTEGER)
    found = solve(scenario, options)
    reference = enumerate_integer_best(scenario)

    tolerance = 0.0
    verdict = _statuses_agree(found, reference)
    if verdict is None:
        tolerance = 1e-9 * max(1.0, abs(reference.objective))
        verdict = abs(found.objective - reference.objective) <= tolerance
    return OracleCheck("integer enumeration", found, reference, tolerance, verdict)
