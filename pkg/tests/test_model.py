import math

import numpy as np
import pytest

from conftest import build_scenario
from model import (
    AttenuationMode,
    NodeConfig,
    RateAllocation,
    Scenario,
    ScenarioError,
    UserProfile,
    channel_success_prob,
    decoherence_success_prob,
    expected_success_pairs,
    expected_transmitted,
    memory_usage,
    objective,
    objective_gradient,
    objective_hessian_diag,
    pair_yield,
    pair_yield_inverse,
)


def _user(**overrides) -> UserProfile:
    values = dict(distance=2.0, attenuation=0.2, weight=1.0, rate_min=1.2e9, rate_max=1.0e10)
    values.update(overrides)
    return UserProfile(**values)


def test_window_length_is_alpha_over_decoherence_rate(symmetric_pair):
    assert symmetric_pair.tau == pytest.approx(3e-9, rel=1e-15)


def test_pair_yield_known_values():
    assert pair_yield(0.0) == 0.0
    assert pair_yield(1.0) == pytest.approx(1.0 - math.exp(-1.0), rel=1e-15)
    assert pair_yield(2.0) == pytest.approx(2.0 * (1.0 - math.exp(-2.0)), rel=1e-15)
    assert pair_yield(17.5) == pytest.approx(17.5, rel=1e-7)


def test_pair_yield_keeps_precision_for_tiny_arguments():
    assert pair_yield(1e-8) == pytest.approx(1e-16, rel=1e-6)


def test_pair_yield_inverse_recovers_argument():
    for x in (0.05, 0.5, 2.0, 3.6, 17.5, 30.0):
        assert pair_yield_inverse(float(pair_yield(x))) == pytest.approx(x, rel=1e-9)


def test_pair_yield_inverse_round_trip_over_the_working_range():
    for x in np.linspace(0.0, 50.0, 1001):
        assert pair_yield_inverse(float(pair_yield(x))) == pytest.approx(x, abs=1e-9)


def test_pair_yield_inverse_edges():
    assert pair_yield_inverse(0.0) == 0.0
    with pytest.raises(ValueError):
        pair_yield_inverse(-1.0)
    with pytest.raises(ValueError):
        pair_yield_inverse(float("nan"))


def test_channel_success_modes():
    user = _user()
    assert channel_success_prob(user) == pytest.approx(math.exp(-0.4))
    assert channel_success_prob(user, AttenuationMode.DECIBEL) == pytest.approx(10 ** (-0.04))
    assert channel_success_prob(_user(distance=0.0)) == 1.0


def test_per_window_quantities():
    user = _user()
    tau = 3e-9
    assert expected_transmitted(2e9, tau, user) == pytest.approx(6.0 * math.exp(-0.4))
    assert decoherence_success_prob(2e9, tau) == pytest.approx(1.0 - math.exp(-6.0))
    assert expected_success_pairs(2e9, tau, user) == pytest.approx(
        math.exp(-0.4) * 6.0 * (1.0 - math.exp(-6.0))
    )


def test_objective_is_weighted_sum_of_success_pairs():
    scenario = build_scenario([(2.0, 1.0, 1.2e9, 1e10), (5.0, 2.0, 1.5e9, 1e10)])
    rates = [4e9, 3e9]
    expected = math.exp(-0.4) * pair_yield(12.0) + 2.0 * math.exp(-1.0) * pair_yield(9.0)
    assert objective(scenario, rates) == pytest.approx(expected, rel=1e-14)


def test_objective_rejects_wrong_dimension(symmetric_pair):
    with pytest.raises(ValueError):
        objective(symmetric_pair, [2e9])


def test_memory_usage_reports_sum_and_floored_cells(symmetric_pair):
    used, cells = memory_usage(symmetric_pair, [2e9, 4e9])
    assert used == pytest.approx(pair_yield(6.0) + pair_yield(12.0))
    assert cells == 5 + 11


def test_gradient_matches_central_difference(symmetric_pair):
    rates = np.array([2.5e9, 6.0e9])
    gradient = objective_gradient(symmetric_pair, rates)
    step = 1e3
    for j in range(2):
        shift = np.zeros(2)
        shift[j] = step
        numeric = (objective(symmetric_pair, rates + shift) - objective(symmetric_pair, rates - shift)) / (2 * step)
        assert gradient[j] == pytest.approx(numeric, rel=1e-5)


def test_hessian_is_negative_on_admissible_rates(symmetric_pair):
    rates = np.array([1.2e9, 9.9e9])
    assert np.all(objective_hessian_diag(symmetric_pair, rates) < 0)


def _random_single_user(rng):
    """One user at a random window; the rate lands on x = r * tau in [alpha, 7]."""
    alpha = float(rng.uniform(2.5, 4.0))
    scenario = build_scenario([(float(rng.uniform(0.0, 10.0)), float(rng.uniform(0.2, 2.0)), 1.2e9, 1e10)],
                              alpha=alpha)
    rate = float(rng.uniform(alpha, 7.0)) / scenario.tau
    return scenario, rate


def test_gradient_matches_central_difference_at_random_points():
    rng = np.random.default_rng(101)
    for _ in range(100):
        scenario, rate = _random_single_user(rng)
        step = 1e-4 / scenario.tau
        numeric = (objective(scenario, [rate + step]) - objective(scenario, [rate - step])) / (2 * step)
        assert objective_gradient(scenario, [rate])[0] == pytest.approx(numeric, rel=1e-6)


def test_hessian_matches_second_difference_at_random_points():
    rng = np.random.default_rng(103)
    for _ in range(100):
        scenario, rate = _random_single_user(rng)
        step = 1e-3 / scenario.tau
        numeric = (objective(scenario, [rate + step]) - 2 * objective(scenario, [rate])
                   + objective(scenario, [rate - step])) / step ** 2
        assert objective_hessian_diag(scenario, [rate])[0] == pytest.approx(numeric, rel=1e-5)


def test_objective_is_concave_on_random_admissible_rates():
    rng = np.random.default_rng(107)
    for _ in range(100):
        size = int(rng.integers(1, 6))
        users = [(float(rng.uniform(0.0, 10.0)), float(rng.uniform(0.2, 2.0)), float(rng.uniform(1.05e9, 3e9)), 1e10)
                 for _ in range(size)]
        scenario = build_scenario(users, alpha=float(rng.uniform(2.05, 6.0)))
        rates = [float(rng.uniform(user.rate_min, user.rate_max)) for user in scenario.users]
        assert np.all(objective_hessian_diag(scenario, rates) < 0)


def test_hessian_changes_sign_at_x_equal_two():
    scenario = build_scenario([(0.0, 1.0, 1.2e9, 1e10)], alpha=3.0)
    tau = scenario.tau
    assert objective_hessian_diag(scenario, [1.9 / tau])[0] > 0
    assert objective_hessian_diag(scenario, [2.1 / tau])[0] < 0


@pytest.mark.parametrize("alpha", [2.0, 1.5])
def test_alpha_must_exceed_two(alpha):
    with pytest.raises(ScenarioError) as error:
        NodeConfig(memory_capacity=35, decoherence_rate=1e9, alpha=alpha)
    assert error.value.field == "alpha"


def test_node_rejects_bad_capacity_and_modes():
    with pytest.raises(ScenarioError) as error:
        NodeConfig(memory_capacity=0, decoherence_rate=1e9, alpha=3.0)
    assert error.value.field == "memory_capacity"
    with pytest.raises(ScenarioError) as error:
        NodeConfig(memory_capacity=35, decoherence_rate=1e9, alpha=3.0, attenuation_mode="linear")
    assert error.value.field == "attenuation_mode"
    assert "natural" in str(error.value)


def test_user_validation_names_the_field():
    with pytest.raises(ScenarioError) as error:
        _user(weight=0.0)
    assert error.value.field == "weight"
    with pytest.raises(ScenarioError) as error:
        _user(rate_max=1.0e9)
    assert error.value.field == "rate_max_ebit_s"
    with pytest.raises(ScenarioError) as error:
        _user(distance=-1.0)
    assert error.value.field == "distance_km"


def test_minimum_rate_must_exceed_decoherence_rate():
    with pytest.raises(ScenarioError) as error:
        build_scenario([(2.0, 1.0, 1.2e9, 1e10), (2.0, 1.0, 1.0e9, 1e10)])
    assert error.value.field == "user[1].rate_min_ebit_s"


def test_scenario_needs_a_user():
    node = NodeConfig(memory_capacity=35, decoherence_rate=1e9, alpha=3.0)
    with pytest.raises(ScenarioError):
        Scenario(node=node, users=())


def test_with_tau_rescales_alpha(symmetric_pair):
    longer = symmetric_pair.with_tau(6e-9)
    assert longer.node.alpha == pytest.approx(6.0)
    assert longer.tau == pytest.approx(6e-9)
    with pytest.raises(ScenarioError):
        symmetric_pair.with_tau(1e-9)


def test_infeasible_allocation_serializes_without_nan():
    allocation = RateAllocation.infeasible("infeasible_high")
    data = allocation.to_dict()
    assert data["status"] == "infeasible"
    assert data["objective"] is None
    assert data["rates"] == []
    assert not allocation.is_optimal
