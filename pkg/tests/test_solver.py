import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import build_scenario, random_feasible_scenario
from model import memory_usage, objective, pair_yield, pair_yield_inverse
from solver import (
    Feasibility,
    Relaxation,
    SolverOptions,
    TieBreak,
    check_feasibility,
    coefficients,
    max_common_rate_min,
    max_feasible_tau,
    solve,
    solve_continuous,
    solve_dual,
    solve_integer,
    yield_bounds,
)

C_NEAR = math.exp(-0.4)


def _pair(rate_min_2: float = 1.2e9, **kwargs):
    return build_scenario([(2.0, 1.0, 1.2e9, 1e10), (2.0, 1.0, rate_min_2, 1e10)], **kwargs)


def test_symmetric_pair_splits_memory_evenly(symmetric_pair):
    allocation = solve_continuous(symmetric_pair)
    assert allocation.is_optimal
    assert allocation.yields == pytest.approx((17.5, 17.5), rel=1e-12)
    assert allocation.rates[0] == pytest.approx(allocation.rates[1], rel=1e-12)
    assert allocation.rates[0] == pytest.approx(5.83333e9, rel=1e-5)
    assert allocation.objective == pytest.approx(35 * C_NEAR, rel=1e-9)
    assert allocation.memory_cells == (17, 17)


def test_waterfill_keeps_equal_yields_while_minimum_is_below_fair_share():
    allocation = solve_continuous(_pair(5e9))
    assert allocation.yields == pytest.approx((17.5, 17.5), rel=1e-12)
    assert allocation.rates[1] >= 5e9


def test_lexicographic_fills_earlier_user_first():
    allocation = solve_continuous(_pair(5e9), SolverOptions(tie_break="lexicographic"))
    y_lo_2 = float(pair_yield(15.0))
    assert allocation.yields[1] == pytest.approx(y_lo_2, rel=1e-12)
    assert allocation.yields[0] == pytest.approx(35.0 - y_lo_2, rel=1e-12)
    assert allocation.rates[1] == 5e9


def test_equal_surplus_lifts_both_users_by_the_same_amount():
    scenario = _pair(5e9)
    y_lo, _ = yield_bounds(scenario)
    allocation = solve_continuous(scenario, SolverOptions(tie_break="equal_surplus"))
    surplus = np.array(allocation.yields) - y_lo
    assert surplus[0] == pytest.approx(surplus[1], rel=1e-9)
    assert allocation.rates[1] > allocation.rates[0]
    assert sum(allocation.yields) == pytest.approx(35.0, rel=1e-12)


@pytest.mark.parametrize("tie_break", ["waterfill", "lexicographic", "equal_surplus"])
def test_objective_is_flat_across_minimum_rates_of_identical_users(tie_break):
    options = SolverOptions(tie_break=tie_break)
    values = [solve_continuous(_pair(rate), options).objective for rate in np.linspace(1.2e9, 5e9, 12)]
    spread = max(values) - min(values)
    assert spread <= 1e-9 * max(values)


def test_nearer_user_takes_the_memory():
    scenario = build_scenario([(2.0, 1.0, 1.2e9, 1e10), (5.0, 1.0, 2.4e9, 1e10)])
    allocation = solve_continuous(scenario)
    assert allocation.rates[1] == 2.4e9
    assert allocation.yields[0] == pytest.approx(35.0 - float(pair_yield(7.2)), rel=1e-12)


def test_heavier_weight_flips_the_assignment():
    scenario = build_scenario([(2.0, 1.0, 1.2e9, 1e10), (5.0, 2.5, 2.4e9, 1e10)], capacity=30)
    assert coefficients(scenario)[1] > coefficients(scenario)[0]
    allocation = solve_continuous(scenario)
    assert allocation.rates[0] == 1.2e9
    assert allocation.yields[1] == pytest.approx(30.0 - float(pair_yield(3.6)), rel=1e-12)


def test_upper_bound_caps_the_best_user():
    scenario = build_scenario([(1.0, 1.0, 1.2e9, 4e9), (3.0, 1.0, 1.2e9, 1e10)])
    allocation = solve_continuous(scenario)
    assert allocation.rates[0] == 4e9
    assert allocation.yields[1] == pytest.approx(35.0 - float(pair_yield(12.0)), rel=1e-12)


def test_minimum_demand_above_capacity_is_infeasible_high():
    scenario = _pair(6e9).with_user(0, rate_min=6e9)
    assert check_feasibility(scenario) == Feasibility.INFEASIBLE_HIGH
    allocation = solve_continuous(scenario)
    assert not allocation.is_optimal
    assert allocation.reason == "infeasible_high"
    assert allocation.rates == ()


def test_unreachable_capacity_is_infeasible_low_only_for_equality():
    users = [(2.0, 1.0, 1.2e9, 3e9), (2.0, 1.0, 1.2e9, 3e9)]
    assert solve_continuous(build_scenario(users)).reason == "infeasible_low"

    relaxed = solve_continuous(build_scenario(users, constraint_mode="at_most"))
    assert relaxed.is_optimal
    assert relaxed.rates == pytest.approx((3e9, 3e9), rel=1e-12)
    assert sum(relaxed.yields) == pytest.approx(2 * float(pair_yield(9.0)))


def test_at_most_fills_the_capacity_when_it_can():
    allocation = solve_continuous(build_scenario(
        [(2.0, 1.0, 1.2e9, 1e10), (4.0, 1.0, 1.2e9, 1e10)], constraint_mode="at_most"))
    assert sum(allocation.yields) == pytest.approx(35.0, rel=1e-12)


def test_single_user_takes_the_whole_memory():
    scenario = build_scenario([(3.0, 1.0, 1.2e9, 1e10)], capacity=20)
    allocation = solve_continuous(scenario)
    assert allocation.yields[0] == pytest.approx(20.0, rel=1e-12)
    assert allocation.rates[0] == pytest.approx(pair_yield_inverse(20.0) / 3e-9, rel=1e-12)


def test_decibel_mode_changes_coefficients_only():
    natural = build_scenario([(2.0, 1.0, 1.2e9, 1e10), (6.0, 1.0, 1.2e9, 1e10)])
    decibel = build_scenario([(2.0, 1.0, 1.2e9, 1e10), (6.0, 1.0, 1.2e9, 1e10)], attenuation_mode="decibel")
    assert coefficients(decibel) == pytest.approx([10 ** (-0.04), 10 ** (-0.12)])
    assert solve_continuous(natural).yields == pytest.approx(solve_continuous(decibel).yields)


def test_continuous_solution_respects_bounds_and_memory():
    rng = np.random.default_rng(11)
    for _ in range(25):
        scenario = random_feasible_scenario(rng, size=int(rng.integers(1, 7)))
        allocation = solve_continuous(scenario)
        assert allocation.is_optimal
        for user, rate in zip(scenario.users, allocation.rates):
            assert user.rate_min <= rate <= user.rate_max
        used, _ = memory_usage(scenario, allocation.rates)
        assert used == pytest.approx(scenario.node.memory_capacity, rel=1e-9)
        assert allocation.objective == pytest.approx(objective(scenario, allocation.rates), rel=1e-15)


def test_dual_bisection_agrees_with_greedy():
    rng = np.random.default_rng(5)
    for _ in range(25):
        scenario = random_feasible_scenario(rng, size=int(rng.integers(1, 7)))
        greedy = solve_continuous(scenario)
        dual = solve_dual(scenario)
        assert dual.objective == pytest.approx(greedy.objective, rel=1e-9)
        assert "multiplier" in dual.meta


def test_dual_handles_tied_users(symmetric_pair):
    allocation = solve_dual(symmetric_pair)
    assert allocation.yields == pytest.approx((17.5, 17.5), rel=1e-12)


def test_greedy_beats_random_feasible_points():
    scenario = build_scenario([(1.0, 1.0, 1.2e9, 1e10), (3.0, 1.3, 1.5e9, 1e10), (6.0, 2.0, 2e9, 1e10)], capacity=40)
    best = solve_continuous(scenario).objective
    y_lo, y_hi = yield_bounds(scenario)
    rng = np.random.default_rng(3)
    tau = scenario.tau
    for _ in range(200):
        head = rng.uniform(y_lo[:2], y_hi[:2])
        last = 40.0 - head.sum()
        if not y_lo[2] <= last <= y_hi[2]:
            continue
        rates = [pair_yield_inverse(y) / tau for y in (*head, last)]
        assert objective(scenario, rates) <= best * (1 + 1e-12)


def test_objective_nondecreasing_in_capacity():
    scenario = build_scenario([(1.5, 1.0, 1.2e9, 1e10), (3.5, 1.0, 1.5e9, 1e10)])
    values = [solve_continuous(scenario.with_capacity(c)).objective for c in range(15, 51)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_objective_strictly_increasing_in_capacity_for_random_pairs():
    rng = np.random.default_rng(19)
    for _ in range(5):
        scenario = random_feasible_scenario(rng, size=2)
        values = []
        for capacity in range(1, 80):
            allocation = solve_continuous(scenario.with_capacity(capacity))
            if allocation.is_optimal:
                values.append((capacity, allocation.objective))
        assert values
        for (c_a, a), (c_b, b) in zip(values, values[1:]):
            assert c_b == c_a + 1
            assert b > a


def test_raising_a_weight_never_lowers_that_users_yield():
    rng = np.random.default_rng(31)
    for _ in range(30):
        scenario = random_feasible_scenario(rng, size=int(rng.integers(2, 5)))
        k = int(rng.integers(scenario.size))
        before = solve_continuous(scenario).yields[k]
        heavier = scenario.with_user(k, weight=scenario.users[k].weight * float(rng.uniform(1.0, 3.0)))
        assert solve_continuous(heavier).yields[k] >= before - 1e-9


def test_rates_decrease_as_window_grows():
    scenario = build_scenario([(2.0, 1.0, 2.4e9, 1e10), (2.0, 1.0, 2.4e9, 1e10)])
    rates = [solve_continuous(scenario.with_tau(t * 1e-9)).rates[0] for t in np.arange(3.0, 7.01, 0.5)]
    assert all(b < a for a, b in zip(rates, rates[1:]))


def test_integer_symmetric_pair_gives_extra_cell_to_first_user(symmetric_pair):
    allocation = solve_integer(symmetric_pair)
    assert allocation.is_optimal
    assert allocation.relaxation == "integer"
    assert allocation.memory_cells == (18, 17)
    assert allocation.yields == pytest.approx((18.0, 17.0), rel=1e-12)
    assert allocation.objective == pytest.approx(35 * C_NEAR, rel=1e-9)


def test_integer_user_parked_at_its_minimum_keeps_the_fraction():
    # floor(h(17.7)) = 17 per user fits C = 35 although h(17.7) * 2 > 35
    scenario = build_scenario([(2.0, 1.0, 5.9e9, 1e10), (2.0, 1.0, 5.9e9, 1e10)])
    assert not solve_continuous(scenario).is_optimal
    allocation = solve_integer(scenario)
    assert allocation.is_optimal
    assert allocation.memory_cells == (18, 17)
    assert allocation.rates[1] == 5.9e9
    assert sum(allocation.memory_cells) == 35


def test_integer_single_user_takes_every_cell():
    scenario = build_scenario([(2.0, 1.0, 1.2e9, 1e10)], capacity=20)
    allocation = solve_integer(scenario)
    assert allocation.is_optimal
    assert allocation.memory_cells == (20,)
    assert allocation.yields == pytest.approx((20.0,), rel=1e-12)
    assert pair_yield(allocation.rates[0] * scenario.tau) == pytest.approx(20.0, rel=1e-9)


def test_integer_infeasible_when_floored_minimums_overflow():
    scenario = build_scenario([(2.0, 1.0, 6.5e9, 1e10), (2.0, 1.0, 6.5e9, 1e10)])
    allocation = solve_integer(scenario)
    assert allocation.reason == "integer_infeasible_high"


def test_integer_solution_is_bounded_by_the_widened_relaxation():
    # Fractions of users held at their minimum add less than one cell each
    rng = np.random.default_rng(23)
    for _ in range(15):
        scenario = random_feasible_scenario(rng, size=int(rng.integers(1, 5)))
        integer = solve_integer(scenario)
        assert integer.is_optimal
        assert sum(integer.memory_cells) == scenario.node.memory_capacity
        y_lo, y_hi = yield_bounds(scenario)
        for j, y in enumerate(integer.yields):
            assert y_lo[j] - 1e-12 <= y <= y_hi[j] + 1e-12
            assert integer.memory_cells[j] == math.floor(y + 1e-12)

        widened = replace(scenario, node=replace(scenario.node, constraint_mode="at_most",
                                                  memory_capacity=scenario.node.memory_capacity + scenario.size))
        assert integer.objective <= solve_continuous(widened).objective * (1 + 1e-9)


def test_solve_dispatches_on_relaxation(symmetric_pair):
    assert solve(symmetric_pair).relaxation == "continuous"
    assert solve(symmetric_pair, SolverOptions(relaxation=Relaxation.INTEGER)).memory_cells == (18, 17)


def test_options_validate_inputs():
    with pytest.raises(ValueError):
        SolverOptions(tolerance=0.0)
    with pytest.raises(ValueError):
        SolverOptions(tie_break="random")
    assert SolverOptions(tie_break="equal_surplus").tie_break == TieBreak.EQUAL_SURPLUS


def test_largest_common_minimum_rate(symmetric_pair):
    rate = max_common_rate_min(symmetric_pair)
    assert rate == pytest.approx(35 / (2 * 3e-9), rel=2e-4)


def test_largest_window_lengths():
    unequal = build_scenario([(2.0, 1.0, 2.6e9, 1e10), (2.0, 1.0, 2.8e9, 1e10)])
    equal = build_scenario([(2.0, 1.0, 2.4e9, 1e10), (2.0, 1.0, 2.4e9, 1e10)])
    assert max_feasible_tau(unequal) * 1e9 == pytest.approx(6.4814, abs=1e-3)
    assert max_feasible_tau(equal) * 1e9 == pytest.approx(7.2916, abs=1e-3)
