import sys
from pathlib import Path
from typing import Sequence, Tuple

import pytest

PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT / "src"))

from model import NodeConfig, Scenario, UserProfile  # noqa: E402

SCENARIOS_DIR = PROJECT_ROOT / "scenarios"
SWEEPS_DIR = PROJECT_ROOT / "sweeps"

# (distance_km, weight, rate_min, rate_max)
UserTuple = Tuple[float, float, float, float]


def build_scenario(users: Sequence[UserTuple], capacity: int = 35, alpha: float = 3.0,
                   decoherence_rate: float = 1e9, attenuation: float = 0.2,
                   attenuation_mode: str = "natural", constraint_mode: str = "equality") -> Scenario:
    node = NodeConfig(
        memory_capacity=capacity,
        decoherence_rate=decoherence_rate,
        alpha=alpha,
        attenuation_mode=attenuation_mode,
        constraint_mode=constraint_mode,
    )
    profiles = [
        UserProfile(distance=d, attenuation=attenuation, weight=w, rate_min=lo, rate_max=hi)
        for d, w, lo, hi in users
    ]
    return Scenario(node=node, users=tuple(profiles))


def random_feasible_scenario(rng, size: int, capacity_cap: int = 10_000, **kwargs) -> Scenario:
    """Random users at tau = 3 ns with a capacity inside the feasible range."""
    while True:
        users = []
        for _ in range(size):
            rate_min = float(rng.uniform(1.1e9, 3.0e9))
            rate_max = float(rng.uniform(1.5 * rate_min, 1.0e10))
            users.append((float(rng.uniform(0.5, 10.0)), float(rng.uniform(0.2, 2.0)), rate_min, rate_max))
        bounds_only = build_scenario(users, capacity=1, **kwargs)
        # x - 1/e <= h(x) <= x, and flooring costs at most one more cell per user
        low = sum(u.rate_min * bounds_only.tau for u in bounds_only.users)
        high = sum(u.rate_max * bounds_only.tau for u in bounds_only.users) - 2 * size
        lo_cap, hi_cap = int(low) + 2, min(int(high) - 1, capacity_cap)
        if lo_cap <= hi_cap:
            return build_scenario(users, capacity=int(rng.integers(lo_cap, hi_cap + 1)), **kwargs)


@pytest.fixture
def symmetric_pair() -> Scenario:
    """Two identical users at 2 km, C = 35, tau = 3 ns."""
    return build_scenario([(2.0, 1.0, 1.2e9, 1.0e10), (2.0, 1.0, 1.2e9, 1.0e10)])


@pytest.fixture
def settings_file(tmp_path: Path) -> Path:
    """Settings that keep logs inside tmp_path and the console quiet."""
    path = tmp_path / "settings.yaml"
    path.write_text(
        "logging:\n"
        "  level: WARNING\n"
        f"  log_dir: {tmp_path / 'logs'}\n"
        "oracle:\n"
        "  mc_trials: 2000\n",
        encoding="utf-8",
    )
    return path
