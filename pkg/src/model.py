"""
Entanglement Success Model

Pure evaluation of the single-node rate model: channel and decoherence
success probabilities, expected successful pairs per generation window,
the weighted objective, memory occupancy and the objective's curvature.

All solver math works on the dimensionless pair count x = r * tau and the
yield y = h(x) = x * (1 - exp(-x)); rates are converted at the boundary.
"""

import math
import logging
from dataclasses import dataclass, field, asdict, replace
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]


class AttenuationMode(str, Enum):
    """How attenuation * distance enters the channel success exponent."""
    NATURAL = "natural"
    DECIBEL = "decibel"


class ConstraintMode(str, Enum):
    """Whether the memory constraint is an equality or an upper bound."""
    EQUALITY = "equality"
    AT_MOST = "at_most"


class AllocationStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


class ScenarioError(ValueError):
    """Invariant or document-shape violation, addressed by field path."""

    def __init__(self, field_path: str, message: str):
        self.field = field_path
        self.detail = message
        super().__init__(f"{field_path}: {message}")

    def prefixed(self, prefix: str) -> "ScenarioError":
        """Return the same error with a parent path prepended."""
        return ScenarioError(f"{prefix}.{self.field}", self.detail)


def _require_finite(value: float, field_path: str) -> None:
    if not math.isfinite(value):
        raise ScenarioError(field_path, f"must be a finite number, got {value!r}")


@dataclass(frozen=True)
class UserProfile:
    """One user's link and service parameters."""
    distance: float      # km
    attenuation: float   # per km, see AttenuationMode
    weight: float
    rate_min: float      # ebit/s
    rate_max: float      # ebit/s

    def __post_init__(self):
        _require_finite(self.distance, "distance_km")
        _require_finite(self.attenuation, "attenuation_per_km")
        _require_finite(self.weight, "weight")
        _require_finite(self.rate_min, "rate_min_ebit_s")
        _require_finite(self.rate_max, "rate_max_ebit_s")
        if self.distance < 0:
            raise ScenarioError("distance_km", f"must be >= 0, got {self.distance}")
        if self.attenuation < 0:
            raise ScenarioError("attenuation_per_km", f"must be >= 0, got {self.attenuation}")
        if self.weight <= 0:
            raise ScenarioError("weight", f"must be > 0, got {self.weight}")
        if self.rate_min <= 0:
            raise ScenarioError("rate_min_ebit_s", f"must be > 0, got {self.rate_min}")
        if self.rate_max < self.rate_min:
            raise ScenarioError(
                "rate_max_ebit_s",
                f"must be >= rate_min_ebit_s ({self.rate_min}), got {self.rate_max}"
            )


@dataclass(frozen=True)
class NodeConfig:
    """Node-wide parameters. The window length is derived: tau = alpha / r_dec."""
    memory_capacity: int
    decoherence_rate: float
    alpha: float
    attenuation_mode: AttenuationMode = AttenuationMode.NATURAL
    constraint_mode: ConstraintMode = ConstraintMode.EQUALITY

    def __post_init__(self):
        if isinstance(self.memory_capacity, bool) or not isinstance(self.memory_capacity, (int, np.integer)):
            raise ScenarioError("memory_capacity", f"must be an integer, got {self.memory_capacity!r}")
        if self.memory_capacity < 1:
            raise ScenarioError("memory_capacity", f"must be >= 1, got {self.memory_capacity}")
        _require_finite(self.decoherence_rate, "decoherence_rate_ebit_s")
        _require_finite(self.alpha, "alpha")
        if self.decoherence_rate <= 0:
            raise ScenarioError("decoherence_rate_ebit_s", f"must be > 0, got {self.decoherence_rate}")
        if self.alpha <= 2:
            raise ScenarioError(
                "alpha",
                f"must be > 2 so every admissible rate lies in the concave region, got {self.alpha}"
            )
        object.__setattr__(self, "memory_capacity", int(self.memory_capacity))
        for name, enum_type in (("attenuation_mode", AttenuationMode), ("constraint_mode", ConstraintMode)):
            try:
                object.__setattr__(self, name, enum_type(getattr(self, name)))
            except ValueError:
                allowed = ", ".join(member.value for member in enum_type)
                raise ScenarioError(name, f"must be one of {allowed}, got {getattr(self, name)!r}") from None

    @property
    def tau(self) -> float:
        """Generation window length in seconds."""
        return self.alpha / self.decoherence_rate


@dataclass(frozen=True)
class Scenario:
    """A node plus its ordered users; the solver input."""
    node: NodeConfig
    users: Tuple[UserProfile, ...]

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if not self.users:
            raise ScenarioError("user", "at least one user is required")
        for index, user in enumerate(self.users):
            if user.rate_min <= self.node.decoherence_rate:
                raise ScenarioError(
                    f"user[{index}].rate_min_ebit_s",
                    f"must be greater than node.decoherence_rate_ebit_s "
                    f"({self.node.decoherence_rate}), got {user.rate_min}"
                )

    @property
    def tau(self) -> float:
        return self.node.tau

    @property
    def size(self) -> int:
        return len(self.users)

    def with_tau(self, tau: float) -> "Scenario":
        """Same scenario with alpha rescaled so the window length is tau seconds."""
        return replace(self, node=replace(self.node, alpha=tau * self.node.decoherence_rate))

    def with_capacity(self, memory_capacity: int) -> "Scenario":
        return replace(self, node=replace(self.node, memory_capacity=memory_capacity))

    def with_users(self, users: Sequence[UserProfile]) -> "Scenario":
        return replace(self, users=tuple(users))

    def with_user(self, index: int, **changes) -> "Scenario":
        users = list(self.users)
        users[index] = replace(users[index], **changes)
        return replace(self, users=tuple(users))


@dataclass(frozen=True)
class RateAllocation:
    """Solver output. Infeasible allocations carry empty vectors and a reason."""
    rates: Tuple[float, ...]
    yields: Tuple[float, ...]
    memory_cells: Tuple[int, ...]
    objective: float
    status: AllocationStatus
    reason: Optional[str] = None
    relaxation: str = "continuous"
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def infeasible(cls, reason: str, relaxation: str = "continuous") -> "RateAllocation":
        return cls(rates=(), yields=(), memory_cells=(), objective=float("nan"),
                   status=AllocationStatus.INFEASIBLE, reason=reason, relaxation=relaxation)

    @property
    def is_optimal(self) -> bool:
        return self.status == AllocationStatus.OPTIMAL

    def to_dict(self) -> dict:
        data = asdict(self)
        data["status"] = self.status.value
        data["rates"] = list(self.rates)
        data["yields"] = list(self.yields)
        data["memory_cells"] = list(self.memory_cells)
        data["objective"] = None if math.isnan(self.objective) else self.objective
        return data


def channel_success_prob(user: UserProfile, mode: AttenuationMode = AttenuationMode.NATURAL) -> float:
    """Probability that the transmitted photon survives the fiber."""
    loss = user.attenuation * user.distance
    if AttenuationMode(mode) == AttenuationMode.DECIBEL:
        return 10.0 ** (-loss / 10.0)
    return math.exp(-loss)


def channel_success_probs(scenario: Scenario) -> np.ndarray:
    mode = scenario.node.attenuation_mode
    return np.array([channel_success_prob(user, mode) for user in scenario.users])


def decoherence_success_prob(rate: ArrayLike, tau: float) -> ArrayLike:
    """Probability that a stored pair survives the window: 1 - exp(-rate * tau)."""
    return -np.expm1(-np.asarray(rate, dtype=float) * tau)


def expected_transmitted(rate: ArrayLike, tau: float, user: UserProfile,
                         mode: AttenuationMode = AttenuationMode.NATURAL) -> ArrayLike:
    """Expected photons that reach the user in one window."""
    return np.asarray(rate, dtype=float) * tau * channel_success_prob(user, mode)


def pair_yield(x: ArrayLike) -> ArrayLike:
    """h(x) = x * (1 - exp(-x)): expected stored pairs surviving one window."""
    x = np.asarray(x, dtype=float)
    return x * -np.expm1(-x)


def _pair_yield_scalar(x: float) -> float:
    return x * -math.expm1(-x)


def pair_yield_inverse(y: float, xtol: float = 1e-12) -> float:
    """
    Invert h on [0, inf).

    h(x) <= min(x, x**2) and h(x) >= x - 1/e, so the root lies in
    [max(y, sqrt(y)), y + 1]; brentq is bracketed there.
    """
    y = float(y)
    if not math.isfinite(y) or y < 0:
        raise ValueError(f"pair_yield_inverse requires a finite y >= 0, got {y}")
    if y == 0.0:
        return 0.0

    lower = max(y, math.sqrt(y))
    upper = y + 1.0
    f_lower = _pair_yield_scalar(lower) - y
    if f_lower >= 0.0:
        return lower
    return brentq(lambda x: _pair_yield_scalar(x) - y, lower, upper, xtol=xtol, maxiter=200)


def expected_success_pairs(rate: ArrayLike, tau: float, user: UserProfile,
                           mode: AttenuationMode = AttenuationMode.NATURAL) -> ArrayLike:
    """S_j: pairs that both reach the user and survive storage."""
    return channel_success_prob(user, mode) * pair_yield(np.asarray(rate, dtype=float) * tau)


def _rates_vector(scenario: Scenario, rates: ArrayLike) -> np.ndarray:
    vector = np.atleast_1d(np.asarray(rates, dtype=float))
    if vector.shape != (scenario.size,):
        raise ValueError(
            f"rates has {vector.size} entries but the scenario has {scenario.size} users"
        )
    return vector


def objective(scenario: Scenario, rates: ArrayLike) -> float:
    """Weighted sum of expected successful pairs."""
    vector = _rates_vector(scenario, rates)
    weights = np.array([user.weight for user in scenario.users])
    terms = weights * channel_success_probs(scenario) * pair_yield(vector * scenario.tau)
    return float(math.fsum(terms))


def memory_usage(scenario: Scenario, rates: ArrayLike) -> Tuple[float, int]:
    """Continuous occupancy and the per-user floored occupancy, summed."""
    vector = _rates_vector(scenario, rates)
    yields = pair_yield(vector * scenario.tau)
    return float(math.fsum(yields)), int(np.sum(np.floor(yields)))


def objective_gradient(scenario: Scenario, rates: ArrayLike) -> np.ndarray:
    vector = _rates_vector(scenario, rates)
    tau = scenario.tau
    x = vector * tau
    scale = np.array([user.weight for user in scenario.users]) * channel_success_probs(scenario)
    return scale * tau * (-np.expm1(-x) + x * np.exp(-x))


def objective_hessian_diag(scenario: Scenario, rates: ArrayLike) -> np.ndarray:
    """
    Diagonal of the objective's Hessian in r.

    Entry j is w_j * P_s1,j * (2 tau^2 - r_j tau^3) * exp(-r_j tau); it changes
    sign at r_j tau = 2, so alpha > 2 keeps every admissible rate concave.
    """
    vector = _rates_vector(scenario, rates)
    tau = scenario.tau
    scale = np.array([user.weight for user in scenario.users]) * channel_success_probs(scenario)
    return scale * (2.0 * tau ** 2 - vector * tau ** 3) * np.exp(-vector * tau)
