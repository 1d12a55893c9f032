"""
Rate Allocation Solver

Solves the weighted rate allocation problem under the shared memory budget.

With y_j = h(r_j * tau) the objective becomes sum_j c_j * y_j where
c_j = w_j * P_s1,j, subject to one budget constraint and box bounds on y_j.
That linear problem is a fractional knapsack and is solved exactly by a
greedy fill in decreasing coefficient order. A Lagrangian bisection gives an
independent cross-check, and the floored (integer) memory constraint is
solved by branch and bound over which users sit at their lower bound.
"""

import math
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from model import (
    AllocationStatus,
    AttenuationMode,
    ConstraintMode,
    RateAllocation,
    Scenario,
    ScenarioError,
    UserProfile,
    channel_success_prob,
    objective,
    pair_yield,
    pair_yield_inverse,
)

logger = logging.getLogger(__name__)

# Coefficients closer than this (relative) are treated as tied
TIE_RTOL = 1e-12


class Relaxation(str, Enum):
    CONTINUOUS = "continuous"
    INTEGER = "integer"


class TieBreak(str, Enum):
    """How budget is shared among users with equal coefficients."""
    WATERFILL = "waterfill"
    LEXICOGRAPHIC = "lexicographic"
    EQUAL_SURPLUS = "equal_surplus"


class Feasibility(str, Enum):
    FEASIBLE = "feasible"
    INFEASIBLE_LOW = "infeasible_low"
    INFEASIBLE_HIGH = "infeasible_high"


@dataclass(frozen=True)
class SolverOptions:
    relaxation: Relaxation = Relaxation.CONTINUOUS
    tolerance: float = 1e-9
    tie_break: TieBreak = TieBreak.WATERFILL

    def __post_init__(self):
        if not (self.tolerance > 0 and math.isfinite(self.tolerance)):
            raise ValueError(f"tolerance must be a positive finite number, got {self.tolerance}")
        object.__setattr__(self, "relaxation", Relaxation(self.relaxation))
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))


def coefficient(user: UserProfile, mode: AttenuationMode = AttenuationMode.NATURAL) -> float:
    """Objective coefficient of the user's yield: w_j * P_s1,j."""
    return user.weight * channel_success_prob(user, mode)


def coefficients(scenario: Scenario) -> np.ndarray:
    mode = scenario.node.attenuation_mode
    return np.array([coefficient(user, mode) for user in scenario.users])


def yield_bounds(scenario: Scenario) -> Tuple[np.ndarray, np.ndarray]:
    """Per-user yield interval [h(eps_min * tau), h(eps_max * tau)]."""
    tau = scenario.tau
    rate_min = np.array([user.rate_min for user in scenario.users])
    rate_max = np.array([user.rate_max for user in scenario.users])
    return pair_yield(rate_min * tau), pair_yield(rate_max * tau)


def check_feasibility(scenario: Scenario) -> Feasibility:
    """Whether the (relaxed) memory constraint can be met within the rate bounds."""
    y_lo, y_hi = yield_bounds(scenario)
    capacity = scenario.node.memory_capacity
    if math.fsum(y_lo) > capacity:
        return Feasibility.INFEASIBLE_HIGH
    if scenario.node.constraint_mode == ConstraintMode.EQUALITY and math.fsum(y_hi) < capacity:
        return Feasibility.INFEASIBLE_LOW
    return Feasibility.FEASIBLE


def _memory_target(scenario: Scenario, upper_total: float) -> float:
    # Every coefficient is positive, so at_most still fills as far as the bounds allow
    capacity = float(scenario.node.memory_capacity)
    if scenario.node.constraint_mode == ConstraintMode.AT_MOST:
        return min(capacity, upper_total)
    return capacity


def _tie_groups(coeffs: np.ndarray) -> List[List[int]]:
    """Indices grouped by equal coefficient, groups in decreasing order, members in scenario order."""
    order = sorted(range(len(coeffs)), key=lambda j: (-coeffs[j], j))
    groups: List[List[int]] = []
    for j in order:
        if groups and math.isclose(coeffs[groups[-1][0]], coeffs[j], rel_tol=TIE_RTOL, abs_tol=0.0):
            groups[-1].append(j)
        else:
            groups.append([j])
    return [sorted(group) for group in groups]


def _level_fill(lower: np.ndarray, upper: np.ndarray, target: float) -> np.ndarray:
    """
    Solve sum_j clip(L, lower_j, upper_j) = target for the level L.

    The sum is piecewise linear and nondecreasing in L, so the level is found
    exactly on the segment between two consecutive breakpoints.
    """
    breakpoints = np.unique(np.concatenate([lower, upper]))
    filled = np.array([np.clip(level, lower, upper).sum() for level in breakpoints])
    if target <= filled[0]:
        return lower.copy()
    if target >= filled[-1]:
        return upper.copy()
    k = int(np.searchsorted(filled, target, side="left"))
    base = breakpoints[k - 1]
    slope = np.count_nonzero((lower <= base) & (upper > base))
    level = base + (target - filled[k - 1]) / slope
    return np.clip(level, lower, upper)


def _share_continuous(lower: np.ndarray, upper: np.ndarray, budget: float,
                      tie_break: TieBreak) -> np.ndarray:
    """Split budget (< total headroom) among one tied group."""
    if tie_break == TieBreak.LEXICOGRAPHIC:
        values = lower.copy()
        remaining = budget
        for k in range(len(values)):
            step = min(upper[k] - lower[k], remaining)
            values[k] += step
            remaining -= step
            if remaining <= 0:
                break
        return values
    if tie_break == TieBreak.EQUAL_SURPLUS:
        return lower + _level_fill(np.zeros_like(lower), upper - lower, budget)
    return _level_fill(lower, upper, float(lower.sum()) + budget)


def _greedy_fill(coeffs: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                 target: float, tie_break: TieBreak) -> np.ndarray:
    """Fractional knapsack: raise the best coefficients to their upper bounds first."""
    values = lower.astype(float).copy()
    budget = target - math.fsum(lower)
    for group in _tie_groups(coeffs):
        if budget <= 0:
            break
        idx = np.array(group)
        headroom = math.fsum(upper[idx] - lower[idx])
        if headroom <= budget:
            values[idx] = upper[idx]
            budget -= headroom
        else:
            values[idx] = _share_continuous(lower[idx], upper[idx], budget, tie_break)
            budget = 0.0
    return values


def _allocation_from_yields(scenario: Scenario, yields: Sequence[float], relaxation: Relaxation,
                            memory_cells: Optional[Sequence[int]] = None,
                            meta: Optional[Dict] = None) -> RateAllocation:
    """Map yields back to rates; bound-attaining yields map to the exact bound rates."""
    tau = scenario.tau
    y_lo, y_hi = yield_bounds(scenario)
    rates = []
    for j, (user, y) in enumerate(zip(scenario.users, yields)):
        if y <= y_lo[j]:
            rate = user.rate_min
        elif y >= y_hi[j]:
            rate = user.rate_max
        else:
            rate = min(max(pair_yield_inverse(y) / tau, user.rate_min), user.rate_max)
        rates.append(float(rate))

    if memory_cells is None:
        memory_cells = [int(math.floor(y)) for y in yields]

    return RateAllocation(
        rates=tuple(rates),
        yields=tuple(float(y) for y in yields),
        memory_cells=tuple(int(m) for m in memory_cells),
        objective=objective(scenario, rates),
        status=AllocationStatus.OPTIMAL,
        relaxation=relaxation.value,
        meta=dict(meta or {}),
    )


def solve_continuous(scenario: Scenario, options: Optional[SolverOptions] = None) -> RateAllocation:
    """Exact optimum of the relaxed problem by greedy coefficient order."""
    options = options or SolverOptions()
    verdict = check_feasibility(scenario)
    if verdict != Feasibility.FEASIBLE:
        logger.debug(f"Scenario with {scenario.size} users is {verdict.value}")
        return RateAllocation.infeasible(verdict.value)

    y_lo, y_hi = yield_bounds(scenario)
    target = _memory_target(scenario, math.fsum(y_hi))
    yields = _greedy_fill(coefficients(scenario), y_lo, y_hi, target, options.tie_break)

    residual = math.fsum(yields) - target
    if abs(residual) > options.tolerance * max(1.0, target):
        logger.warning(f"Memory residual {residual:.3e} exceeds tolerance {options.tolerance:.1e}")
    return _allocation_from_yields(scenario, yields, Relaxation.CONTINUOUS,
                                   meta={"residual": residual})


def solve_dual(scenario: Scenario, options: Optional[SolverOptions] = None) -> RateAllocation:
    """
    Lagrangian cross-check of solve_continuous.

    For a multiplier lam every user sits at its upper bound when c_j > lam and
    at its lower bound when c_j < lam. Bisection narrows lam until the bracket
    holds a single coefficient level, whose users then absorb the remainder.
    """
    options = options or SolverOptions()
    verdict = check_feasibility(scenario)
    if verdict != Feasibility.FEASIBLE:
        return RateAllocation.infeasible(verdict.value)

    coeffs = coefficients(scenario)
    y_lo, y_hi = yield_bounds(scenario)
    target = _memory_target(scenario, math.fsum(y_hi))

    def supply(lam: float) -> float:
        return math.fsum(np.where(coeffs > lam, y_hi, y_lo))

    scale = float(np.max(np.abs(coeffs)))
    lam_lo = float(coeffs.min()) - scale  # supply == sum(y_hi) >= target
    lam_hi = float(coeffs.max()) + scale  # supply == sum(y_lo) <= target

    iterations = 0
    while iterations < 400:
        inside = coeffs[(coeffs >= lam_lo) & (coeffs <= lam_hi)]
        if len(_tie_groups(inside)) <= 1:
            break
        mid = 0.5 * (lam_lo + lam_hi)
        if mid in (lam_lo, lam_hi):
            break
        if supply(mid) >= target:
            lam_lo = mid
        else:
            lam_hi = mid
        iterations += 1

    above = coeffs > lam_hi
    below = coeffs < lam_lo
    marginal = ~(above | below)

    yields = np.where(above, y_hi, y_lo)
    if marginal.any():
        idx = np.flatnonzero(marginal)
        fixed = math.fsum(yields[~marginal])
        sub_target = min(max(target - fixed, math.fsum(y_lo[idx])), math.fsum(y_hi[idx]))
        yields[idx] = _greedy_fill(coeffs[idx], y_lo[idx], y_hi[idx], sub_target, options.tie_break)

    multiplier = 0.5 * (lam_lo + lam_hi)
    logger.debug(f"Dual bisection converged after {iterations} iterations, multiplier {multiplier:.12g}")
    return _allocation_from_yields(scenario, yields, Relaxation.CONTINUOUS,
                                   meta={"multiplier": multiplier, "iterations": iterations})


def _share_integer(lower: np.ndarray, upper: np.ndarray, budget: int,
                   tie_break: TieBreak) -> np.ndarray:
    """Integer split of budget inside one tied group; leftover units go to earlier users."""
    if tie_break == TieBreak.LEXICOGRAPHIC:
        values = lower.copy()
        for k in range(len(values)):
            step = min(int(upper[k] - lower[k]), budget)
            values[k] += step
            budget -= step
        return values
    if tie_break == TieBreak.EQUAL_SURPLUS:
        return lower + _share_integer(np.zeros_like(lower), upper - lower, budget, TieBreak.WATERFILL)

    target = int(lower.sum()) + budget
    lo_level, hi_level = int(lower.min()), int(upper.max())
    # Largest integer level whose clipped sum does not overshoot the target
    while lo_level < hi_level:
        mid = (lo_level + hi_level + 1) // 2
        if int(np.clip(mid, lower, upper).sum()) <= target:
            lo_level = mid
        else:
            hi_level = mid - 1
    values = np.clip(lo_level, lower, upper)
    leftover = target - int(values.sum())
    for k in range(len(values)):
        if leftover == 0:
            break
        if lower[k] <= lo_level < upper[k]:
            values[k] += 1
            leftover -= 1
    return values


def _integer_greedy(coeffs: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                    total: int, tie_break: TieBreak) -> np.ndarray:
    values = lower.copy()
    budget = total - int(lower.sum())
    for group in _tie_groups(coeffs):
        if budget <= 0:
            break
        idx = np.array(group)
        headroom = int((upper[idx] - lower[idx]).sum())
        if headroom <= budget:
            values[idx] = upper[idx]
            budget -= headroom
        else:
            values[idx] = _share_integer(lower[idx], upper[idx], budget, tie_break)
            budget = 0
    return values


@dataclass
class _IntegerProblem:
    coeffs: np.ndarray
    y_lo: np.ndarray
    m_floor: np.ndarray
    m_ceil: np.ndarray
    m_hi: np.ndarray
    capacity: int
    at_most: bool
    tie_break: TieBreak

    def total(self, upper: np.ndarray) -> int:
        return min(self.capacity, int(upper.sum())) if self.at_most else self.capacity

    def box(self, parked: Dict[int, bool]) -> Tuple[np.ndarray, np.ndarray]:
        """Integer bounds given the park decisions; undecided users keep the full range."""
        lower = self.m_floor.copy()
        upper = self.m_hi.copy()
        for j, is_parked in parked.items():
            if is_parked:
                upper[j] = self.m_floor[j]
            else:
                lower[j] = self.m_ceil[j]
        return lower, upper

    def fits(self, lower: np.ndarray, upper: np.ndarray) -> bool:
        if np.any(lower > upper):
            return False
        total = self.total(upper)
        return int(lower.sum()) <= total <= int(upper.sum())


def improves(value: float, incumbent: Optional[float]) -> bool:
    """True when value beats the incumbent by more than rounding noise; anything beats no incumbent."""
    if incumbent is None:
        return True
    return value > incumbent + 1e-12 * max(1.0, abs(incumbent))


def _pinned_yields(problem: _IntegerProblem, cells: np.ndarray) -> np.ndarray:
    """A user whose cell count is below its minimum yield stays at that yield."""
    return np.maximum(cells.astype(float), problem.y_lo)


def _branch_and_bound(problem: _IntegerProblem, parkable: List[int]) -> Tuple[Optional[np.ndarray], int]:
    best_value: Optional[float] = None
    best_cells: Optional[np.ndarray] = None
    nodes = 0

    def upper_bound(parked: Dict[int, bool]) -> float:
        lower, upper = problem.box(parked)
        total = problem.total(upper)
        relaxed = _greedy_fill(problem.coeffs, lower.astype(float), upper.astype(float),
                               float(total), TieBreak.LEXICOGRAPHIC)
        bonus = 0.0
        for j in parkable:
            if j not in parked:
                # max(m, y_lo) <= m + frac(y_lo) over the undecided range
                bonus += problem.coeffs[j] * (problem.y_lo[j] - problem.m_floor[j])
        for j, is_parked in parked.items():
            if is_parked:
                relaxed[j] = problem.y_lo[j]
        return float(np.dot(problem.coeffs, relaxed)) + bonus

    def visit(depth: int, parked: Dict[int, bool]) -> None:
        nonlocal best_value, best_cells, nodes
        nodes += 1
        lower, upper = problem.box(parked)
        if not problem.fits(lower, upper):
            return
        if depth == len(parkable):
            cells = _integer_greedy(problem.coeffs, lower, upper, problem.total(upper), problem.tie_break)
            value = float(np.dot(problem.coeffs, _pinned_yields(problem, cells)))
            if improves(value, best_value):
                best_value, best_cells = value, cells
            return
        if best_value is not None and not improves(upper_bound(parked), best_value):
            return
        j = parkable[depth]
        visit(depth + 1, {**parked, j: False})
        visit(depth + 1, {**parked, j: True})

    visit(0, {})
    return best_cells, nodes


def integer_problem(scenario: Scenario, tie_break: TieBreak = TieBreak.WATERFILL) -> _IntegerProblem:
    y_lo, y_hi = yield_bounds(scenario)
    return _IntegerProblem(
        coeffs=coefficients(scenario),
        y_lo=y_lo,
        m_floor=np.floor(y_lo).astype(np.int64),
        m_ceil=np.ceil(y_lo).astype(np.int64),
        m_hi=np.floor(y_hi).astype(np.int64),
        capacity=scenario.node.memory_capacity,
        at_most=scenario.node.constraint_mode == ConstraintMode.AT_MOST,
        tie_break=tie_break,
    )


def integer_feasibility(problem: _IntegerProblem) -> Feasibility:
    if int(problem.m_floor.sum()) > problem.capacity:
        return Feasibility.INFEASIBLE_HIGH
    if not problem.at_most and int(problem.m_hi.sum()) < problem.capacity:
        return Feasibility.INFEASIBLE_LOW
    return Feasibility.FEASIBLE


def allocation_from_cells(scenario: Scenario, problem: _IntegerProblem, cells: np.ndarray,
                          meta: Optional[Dict] = None) -> RateAllocation:
    return _allocation_from_yields(scenario, _pinned_yields(problem, cells), Relaxation.INTEGER,
                                   memory_cells=cells, meta=meta)


def solve_integer(scenario: Scenario, options: Optional[SolverOptions] = None) -> RateAllocation:
    """
    Optimum under the floored memory constraint sum_j floor(y_j) = C.

    A user either sits at its minimum yield (cells = floor of it, the
    fractional part comes for free) or holds exactly y_j = m_j cells with
    m_j >= ceil of its minimum yield. Branch and bound picks which users sit
    at their minimum; each leaf is a linear integer knapsack solved greedily.
    """
    options = options or SolverOptions(relaxation=Relaxation.INTEGER)
    problem = integer_problem(scenario, options.tie_break)

    verdict = integer_feasibility(problem)
    if verdict != Feasibility.FEASIBLE:
        reason = f"integer_{verdict.value}"
        logger.debug(f"Integer scenario is {reason}")
        return RateAllocation.infeasible(reason, relaxation=Relaxation.INTEGER.value)

    parkable = sorted(
        (j for j in range(scenario.size) if problem.m_ceil[j] > problem.m_floor[j]),
        key=lambda j: (problem.coeffs[j], j),
    )
    cells, nodes = _branch_and_bound(problem, parkable)
    logger.debug(f"Branch and bound explored {nodes} nodes over {len(parkable)} fractional users")
    if cells is None:
        return RateAllocation.infeasible("integer_infeasible", relaxation=Relaxation.INTEGER.value)
    return allocation_from_cells(scenario, problem, cells, meta={"nodes": nodes})


def solve(scenario: Scenario, options: Optional[SolverOptions] = None) -> RateAllocation:
    """Dispatch on options.relaxation."""
    options = options or SolverOptions()
    if options.relaxation == Relaxation.INTEGER:
        return solve_integer(scenario, options)
    return solve_continuous(scenario, options)


def _bisect_boundary(is_over, lo: float, hi: float, rel_tol: float) -> float:
    """Largest value with is_over False, given is_over(lo) False and is_over(hi) True."""
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if is_over(mid):
            hi = mid
        else:
            lo = mid
    return lo


def max_common_rate_min(scenario: Scenario, rel_tol: float = 1e-10) -> Optional[float]:
    """
    Largest minimum rate, shared by every user, for which the minimum-rate
    memory demand still fits in the node. None if even the smallest admissible
    value overflows.
    """
    def with_rate_min(rate: float) -> Scenario:
        return scenario.with_users(
            [replace(user, rate_min=rate, rate_max=max(user.rate_max, rate)) for user in scenario.users]
        )

    def overflows(rate: float) -> bool:
        return check_feasibility(with_rate_min(rate)) == Feasibility.INFEASIBLE_HIGH

    lo = math.nextafter(scenario.node.decoherence_rate, math.inf)
    if overflows(lo):
        return None
    hi = 2.0 * lo
    while not overflows(hi):
        hi *= 2.0
    return _bisect_boundary(overflows, lo, hi, rel_tol)


def max_feasible_tau(scenario: Scenario, rel_tol: float = 1e-10) -> Optional[float]:
    """Largest window length (seconds) at which the minimum rates still fit in memory."""
    def overflows(tau: float) -> bool:
        return check_feasibility(scenario.with_tau(tau)) == Feasibility.INFEASIBLE_HIGH

    # alpha must stay strictly above 2
    lo = (2.0 + 1e-9) / scenario.node.decoherence_rate
    try:
        if overflows(lo):
            return None
    except ScenarioError:
        return None
    hi = 2.0 * lo
    while not overflows(hi):
        hi *= 2.0
    return _bisect_boundary(overflows, lo, hi, rel_tol)
