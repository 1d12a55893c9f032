"""
Sweep Harness

Reads scenario and sweep-spec files, runs one solver invocation per axis
value (averaged over randomized runs where requested), and writes the
results as CSV plus a metadata sidecar.
"""

import csv
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from model import (
    NodeConfig,
    RateAllocation,
    Scenario,
    ScenarioError,
    UserProfile,
)
from solver import SolverOptions, solve
from utils import __version__
from utils.logger import log_execution_time
from utils.validators import (
    RELAXATIONS,
    TIE_BREAKS,
    check_keys,
    parse_choice,
    parse_int,
    parse_number,
    require_list,
    require_mapping,
)

logger = logging.getLogger(__name__)

NODE_KEYS = ("memory_capacity", "decoherence_rate_ebit_s", "alpha")
NODE_OPTIONAL_KEYS = ("attenuation_mode", "constraint_mode")
USER_KEYS = ("distance_km", "attenuation_per_km", "weight", "rate_min_ebit_s", "rate_max_ebit_s")

CSV_HEADER = ("axis", "user_index", "rate_ebit_s", "yield", "memory_cells", "objective", "status")
RAW_CSV_HEADER = ("axis", "run", "user_index", "distance_km", "rate_ebit_s", "yield",
                  "memory_cells", "objective", "status")

PathLike = Union[str, Path]


# ---------------------------------------------------------------------------
# Scenario documents
# ---------------------------------------------------------------------------

def user_from_dict(data: Any, path: str) -> UserProfile:
    data = require_mapping(data, path)
    check_keys(data, USER_KEYS, (), path)
    values = {key: parse_number(data[key], f"{path}.{key}") for key in USER_KEYS}
    try:
        return UserProfile(
            distance=values["distance_km"],
            attenuation=values["attenuation_per_km"],
            weight=values["weight"],
            rate_min=values["rate_min_ebit_s"],
            rate_max=values["rate_max_ebit_s"],
        )
    except ScenarioError as error:
        raise error.prefixed(path) from None


def scenario_from_dict(data: Any) -> Scenario:
    data = require_mapping(data, "document")
    check_keys(data, ("node", "user"), (), "document")

    node_data = require_mapping(data["node"], "node")
    check_keys(node_data, NODE_KEYS, NODE_OPTIONAL_KEYS, "node")
    try:
        node = NodeConfig(
            memory_capacity=parse_int(node_data["memory_capacity"], "node.memory_capacity"),
            decoherence_rate=parse_number(node_data["decoherence_rate_ebit_s"], "node.decoherence_rate_ebit_s"),
            alpha=parse_number(node_data["alpha"], "node.alpha"),
            attenuation_mode=node_data.get("attenuation_mode", "natural"),
            constraint_mode=node_data.get("constraint_mode", "equality"),
        )
    except ScenarioError as error:
        if error.field.startswith("node."):
            raise
        raise error.prefixed("node") from None

    user_list = require_list(data["user"], "user")
    users = [user_from_dict(entry, f"user[{index}]") for index, entry in enumerate(user_list)]
    return Scenario(node=node, users=tuple(users))


def parse_scenario(text: str) -> Scenario:
    """Parse and fully validate a scenario document."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as error:
        raise ScenarioError("document", f"not valid YAML: {error}") from None
    return scenario_from_dict(data)


def load_scenario(path: PathLike) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def user_to_dict(user: UserProfile) -> Dict[str, float]:
    return {
        "distance_km": user.distance,
        "attenuation_per_km": user.attenuation,
        "weight": user.weight,
        "rate_min_ebit_s": user.rate_min,
        "rate_max_ebit_s": user.rate_max,
    }


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    node = scenario.node
    return {
        "node": {
            "memory_capacity": node.memory_capacity,
            "decoherence_rate_ebit_s": node.decoherence_rate,
            "alpha": node.alpha,
            "attenuation_mode": node.attenuation_mode.value,
            "constraint_mode": node.constraint_mode.value,
        },
        "user": [user_to_dict(user) for user in scenario.users],
    }


def serialize_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False)


# ---------------------------------------------------------------------------
# Sweep specs
# ---------------------------------------------------------------------------

class Axis(str, Enum):
    EPS_MIN_OF_USER = "eps_min_of_user"
    TAU = "tau"
    NUM_USERS = "num_users"
    DISTANCE_OF_USER = "distance_of_user"
    MEMORY_CAPACITY = "memory_capacity"


AXIS_UNITS = {
    Axis.EPS_MIN_OF_USER: "ebit/s",
    Axis.TAU: "ns",
    Axis.NUM_USERS: "users",
    Axis.DISTANCE_OF_USER: "km",
    Axis.MEMORY_CAPACITY: "qubits",
}

USER_AXES = (Axis.EPS_MIN_OF_USER, Axis.DISTANCE_OF_USER)


@dataclass(frozen=True)
class SweepRange:
    start: float
    stop: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ScenarioError("range.step", f"must be > 0, got {self.step}")
        if self.start > self.stop:
            raise ScenarioError("range.start", f"must be <= range.stop ({self.stop}), got {self.start}")

    def values(self) -> List[float]:
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        # 12 significant digits removes accumulated float noise such as 1.4000000000000001e9
        return [float(f"{self.start + k * self.step:.12g}") for k in range(count)]


@dataclass(frozen=True)
class Randomized:
    runs: int
    distance_min_km: float = 0.5
    distance_max_km: float = 5.0

    def __post_init__(self):
        if self.runs < 1:
            raise ScenarioError("randomized.runs", f"must be >= 1, got {self.runs}")
        if not 0 <= self.distance_min_km <= self.distance_max_km:
            raise ScenarioError("randomized.distance_min_km",
                                "must satisfy 0 <= distance_min_km <= distance_max_km")


@dataclass(frozen=True)
class SweepSpec:
    base: Scenario
    axis: Axis
    range: SweepRange
    user: Optional[int] = None
    randomized: Optional[Randomized] = None
    seed: int = 0
    extra_user: Optional[UserProfile] = None
    options: SolverOptions = field(default_factory=SolverOptions)
    name: str = "sweep"
    chart_kind: str = "rates"
    title: Optional[str] = None

    def __post_init__(self):
        if self.axis in USER_AXES:
            if self.user is None:
                raise ScenarioError("axis.user", f"required for axis {self.axis.value}")
            if not 0 <= self.user < self.base.size:
                raise ScenarioError("axis.user", f"must be in [0, {self.base.size}), got {self.user}")
        if self.axis == Axis.NUM_USERS:
            if self.range.start < 1:
                raise ScenarioError("range.start", "num_users axis must start at >= 1")
            if self.range.stop > self.base.size and self.extra_user is None:
                raise ScenarioError("extra_user", "required when num_users exceeds the scenario's users")

    @property
    def unit(self) -> str:
        return AXIS_UNITS[self.axis]


def parse_sweep_spec(text: str, base_dir: Optional[PathLike] = None,
                     default_options: Optional[SolverOptions] = None,
                     default_runs: int = 1000) -> SweepSpec:
    """Parse a sweep spec; `scenario_file` is resolved against base_dir."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as error:
        raise ScenarioError("document", f"not valid YAML: {error}") from None
    data = require_mapping(data, "document")
    check_keys(data, ("axis", "range"),
               ("name", "scenario", "scenario_file", "seed", "solver", "randomized", "extra_user", "chart"),
               "document")

    if ("scenario" in data) == ("scenario_file" in data):
        raise ScenarioError("scenario", "exactly one of scenario or scenario_file is required")
    if "scenario" in data:
        try:
            base = scenario_from_dict(data["scenario"])
        except ScenarioError as error:
            raise error.prefixed("scenario") from None
    else:
        scenario_path = Path(base_dir or ".") / str(data["scenario_file"])
        if not scenario_path.is_file():
            raise ScenarioError("scenario_file", f"file not found: {scenario_path}")
        base = load_scenario(scenario_path)

    axis_data = require_mapping(data["axis"], "axis")
    check_keys(axis_data, ("name",), ("user",), "axis")
    axis = Axis(parse_choice(axis_data["name"], [a.value for a in Axis], "axis.name"))
    user = parse_int(axis_data["user"], "axis.user") if "user" in axis_data else None

    range_data = require_mapping(data["range"], "range")
    check_keys(range_data, ("start", "stop", "step"), (), "range")
    sweep_range = SweepRange(*(parse_number(range_data[key], f"range.{key}") for key in ("start", "stop", "step")))

    randomized = None
    if "randomized" in data:
        random_data = require_mapping(data["randomized"], "randomized")
        check_keys(random_data, (), ("runs", "distance_min_km", "distance_max_km"), "randomized")
        randomized = Randomized(
            runs=parse_int(random_data.get("runs", default_runs), "randomized.runs"),
            distance_min_km=parse_number(random_data.get("distance_min_km", 0.5), "randomized.distance_min_km"),
            distance_max_km=parse_number(random_data.get("distance_max_km", 5.0), "randomized.distance_max_km"),
        )

    options = default_options or SolverOptions()
    if "solver" in data:
        solver_data = require_mapping(data["solver"], "solver")
        check_keys(solver_data, (), ("relaxation", "tie_break", "tolerance"), "solver")
        options = SolverOptions(
            relaxation=parse_choice(solver_data.get("relaxation", options.relaxation.value),
                                    RELAXATIONS, "solver.relaxation"),
            tie_break=parse_choice(solver_data.get("tie_break", options.tie_break.value),
                                   TIE_BREAKS, "solver.tie_break"),
            tolerance=parse_number(solver_data.get("tolerance", options.tolerance), "solver.tolerance"),
        )

    chart_kind, title = "rates", None
    if "chart" in data:
        chart_data = require_mapping(data["chart"], "chart")
        check_keys(chart_data, (), ("kind", "title"), "chart")
        chart_kind = parse_choice(chart_data.get("kind", "rates"), ("rates", "objective"), "chart.kind")
        title = chart_data.get("title")

    extra_user = user_from_dict(data["extra_user"], "extra_user") if "extra_user" in data else None

    return SweepSpec(
        base=base,
        axis=axis,
        range=sweep_range,
        user=user,
        randomized=randomized,
        seed=parse_int(data.get("seed", 0), "seed"),
        extra_user=extra_user,
        options=options,
        name=str(data.get("name", "sweep")),
        chart_kind=chart_kind,
        title=title,
    )


def load_sweep_spec(path: PathLike, default_options: Optional[SolverOptions] = None,
                    default_runs: int = 1000) -> SweepSpec:
    path = Path(path)
    return parse_sweep_spec(path.read_text(encoding="utf-8"), base_dir=path.parent,
                            default_options=default_options, default_runs=default_runs)


# ---------------------------------------------------------------------------
# Running sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    size: int
    status: str
    rates: Tuple[float, ...] = ()
    yields: Tuple[float, ...] = ()
    memory_cells: Tuple[int, ...] = ()
    objective: Optional[float] = None
    message: Optional[str] = None
    run: Optional[int] = None
    distances: Tuple[float, ...] = ()

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: List[SweepRow]
    raw_rows: List[SweepRow] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def feasible_rows(self) -> List[SweepRow]:
        return [row for row in self.rows if row.feasible]


def scenario_at(spec: SweepSpec, value: float) -> Scenario:
    """The base scenario with the swept parameter set to value."""
    base = spec.base
    if spec.axis == Axis.EPS_MIN_OF_USER:
        return base.with_user(spec.user, rate_min=value)
    if spec.axis == Axis.DISTANCE_OF_USER:
        return base.with_user(spec.user, distance=value)
    if spec.axis == Axis.TAU:
        return base.with_tau(value * 1e-9)
    if spec.axis == Axis.MEMORY_CAPACITY:
        return base.with_capacity(int(round(value)))
    count = int(round(value))
    users = list(base.users[:count])
    users.extend([spec.extra_user] * (count - len(users)))
    return base.with_users(users)


def _expected_size(spec: SweepSpec, value: float) -> int:
    return int(round(value)) if spec.axis == Axis.NUM_USERS else spec.base.size


def _row_from_allocation(value: float, size: int, allocation: RateAllocation, **extra) -> SweepRow:
    if not allocation.is_optimal:
        return SweepRow(axis_value=value, size=size, status="infeasible", message=allocation.reason, **extra)
    return SweepRow(
        axis_value=value,
        size=size,
        status="optimal",
        rates=allocation.rates,
        yields=allocation.yields,
        memory_cells=allocation.memory_cells,
        objective=allocation.objective,
        **extra,
    )


def _average_runs(value: float, size: int, runs: List[SweepRow]) -> SweepRow:
    feasible = [row for row in runs if row.feasible]
    message = f"{len(feasible)}/{len(runs)} runs feasible"
    if not feasible:
        return SweepRow(axis_value=value, size=size, status="infeasible", message=message)
    rates = np.mean([row.rates for row in feasible], axis=0)
    yields = np.mean([row.yields for row in feasible], axis=0)
    return SweepRow(
        axis_value=value,
        size=size,
        status="optimal",
        rates=tuple(float(r) for r in rates),
        yields=tuple(float(y) for y in yields),
        memory_cells=tuple(int(m) for m in np.floor(yields)),
        objective=float(math.fsum(row.objective for row in feasible) / len(feasible)),
        message=message,
    )


def _run_point(spec: SweepSpec, index: int, value: float) -> Tuple[SweepRow, List[SweepRow]]:
    size = _expected_size(spec, value)
    try:
        scenario = scenario_at(spec, value)
    except ValueError as error:
        logger.warning(f"Sweep {spec.name}: point {value:g} rejected: {error}")
        return SweepRow(axis_value=value, size=size, status="error", message=str(error)), []

    if spec.randomized is None:
        return _row_from_allocation(value, size, solve(scenario, spec.options)), []

    # One stream per point keeps results independent of the worker count
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, index]))
    raw: List[SweepRow] = []
    for run in range(spec.randomized.runs):
        distances = rng.uniform(spec.randomized.distance_min_km, spec.randomized.distance_max_km, size=size)
        trial = scenario.with_users([replace(user, distance=float(d)) for user, d in zip(scenario.users, distances)])
        raw.append(_row_from_allocation(value, size, solve(trial, spec.options), run=run,
                                        distances=tuple(float(d) for d in distances)))
    return _average_runs(value, size, raw), raw


@log_execution_time
def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Evaluate every axis point; infeasible and rejected points are kept as rows."""
    values = spec.range.values()
    logger.info(f"Sweep {spec.name}: {len(values)} points on axis {spec.axis.value}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda item: _run_point(spec, *item), enumerate(values)))
    else:
        outcomes = [_run_point(spec, index, value) for index, value in enumerate(values)]

    rows = [row for row, _ in outcomes]
    raw_rows = [row for _, raw in outcomes for row in raw]
    infeasible = sum(1 for row in rows if row.status != "optimal")
    if infeasible:
        logger.info(f"Sweep {spec.name}: {infeasible} of {len(rows)} points infeasible or rejected")

    metadata = {
        "tool_version": __version__,
        "name": spec.name,
        "axis": {"name": spec.axis.value, "user": spec.user, "unit": spec.unit},
        "range": {"start": spec.range.start, "stop": spec.range.stop, "step": spec.range.step},
        "randomized": None if spec.randomized is None else {
            "runs": spec.randomized.runs,
            "distance_min_km": spec.randomized.distance_min_km,
            "distance_max_km": spec.randomized.distance_max_km,
        },
        "seed": spec.seed,
        "solver": {
            "relaxation": spec.options.relaxation.value,
            "tie_break": spec.options.tie_break.value,
            "tolerance": spec.options.tolerance,
        },
        "extra_user": None if spec.extra_user is None else user_to_dict(spec.extra_user),
        "scenario": scenario_to_dict(spec.base),
        "points": len(rows),
    }
    return SweepResult(spec=spec, rows=rows, raw_rows=raw_rows, metadata=metadata)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    return format(value, ".9g")


def _csv_lines(row: SweepRow, leading: Sequence[str]) -> List[List[str]]:
    lines = []
    for j in range(row.size):
        if row.feasible:
            numbers = [_fmt(row.rates[j]), _fmt(row.yields[j]), str(row.memory_cells[j]), _fmt(row.objective)]
        else:
            numbers = ["", "", "", ""]
        lines.append([*leading, str(j), *numbers, row.status])
    return lines


def write_csv(result: SweepResult, destination: PathLike) -> None:
    """One line per (axis value, user), infeasible points included."""
    path = Path(destination)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in result.rows:
            writer.writerows(_csv_lines(row, [_fmt(row.axis_value)]))
    logger.info(f"Wrote {len(result.rows)} sweep points to {path}")


def write_raw_csv(result: SweepResult, destination: PathLike) -> None:
    """Per-run rows of a randomized sweep."""
    path = Path(destination)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(RAW_CSV_HEADER)
        for row in result.raw_rows:
            for j in range(row.size):
                if row.feasible:
                    numbers = [_fmt(row.rates[j]), _fmt(row.yields[j]), str(row.memory_cells[j]), _fmt(row.objective)]
                else:
                    numbers = ["", "", "", ""]
                writer.writerow([_fmt(row.axis_value), str(row.run), str(j), _fmt(row.distances[j]),
                                 *numbers, row.status])


def write_metadata(result: SweepResult, destination: PathLike) -> None:
    path = Path(destination)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        yaml.safe_dump(result.metadata, handle, sort_keys=False)


def sidecar_path(csv_path: PathLike, suffix: str) -> Path:
    """results/fig1.csv -> results/fig1.<suffix>"""
    path = Path(csv_path)
    return path.with_name(f"{path.stem}.{suffix}")
