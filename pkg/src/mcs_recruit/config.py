"""Experiment configuration: a flat key=value text format plus CLI overrides.

Every key is documented in the README; unknown keys are rejected so typos
fail loudly.  Values are parsed leniently: comma lists, ``a-b`` integer
ranges inside lists, ``|``-separated per-community groups, and
``kind:args`` distribution specs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Union

from .dataset import SynthesisParams
from .grid import CycleSpec, GridSpec
from .propagation import PropagationConfig

ALGORITHMS = ("maxdegree", "maxcov", "hg", "naivefast", "fast", "basic")


@dataclass(frozen=True)
class AttributeSpec:
    """How synthetic user attributes are drawn.

    Stands in for survey-derived distributions: interests are independent
    Bernoulli draws per topic, the minimum acceptable reward comes from a
    point mass, a uniform interval, or a uniform choice among listed values.
    """

    topics: int = 5
    interest_prob: float = 0.4
    minimum: tuple = ("uniform", 0.5, 5.0)
    task_topics: tuple[int, ...] = (0, 1)
    task_incentive: float = 3.0

    def __post_init__(self) -> None:
        if self.topics < 1:
            raise ValueError("topics must be >= 1")
        if not 0.0 <= self.interest_prob <= 1.0:
            raise ValueError("interest_prob must lie in [0, 1]")
        kind = self.minimum[0]
        if kind == "point":
            if len(self.minimum) != 2:
                raise ValueError("point distribution takes one value")
        elif kind == "uniform":
            if len(self.minimum) != 3 or self.minimum[1] > self.minimum[2]:
                raise ValueError("uniform distribution takes low <= high")
        elif kind == "choice":
            if len(self.minimum) < 2:
                raise ValueError("choice distribution needs at least one value")
        else:
            raise ValueError(f"unknown minimum distribution {kind!r}")
        if any(not 0 <= t < self.topics for t in self.task_topics):
            raise ValueError("task_topics indices must lie in [0, topics)")

    def task_vector(self) -> tuple[int, ...]:
        return tuple(1 if i in set(self.task_topics) else 0 for i in range(self.topics))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a benchmark run needs, resolvable from file + flag overrides."""

    # data source: either file paths or synthesis parameters
    edges: Optional[str] = None
    checkins: Optional[str] = None
    synth: Optional[SynthesisParams] = None

    grid: GridSpec = field(
        default_factory=lambda: GridSpec(0.0, 0.6, 0.0, 0.6, 11.119492664455873)
    )
    cycles: CycleSpec = field(default_factory=lambda: CycleSpec(8, 18, 2, 7))
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    attributes: AttributeSpec = field(default_factory=AttributeSpec)

    min_checkins: int = 1
    algorithms: tuple[str, ...] = ("fast", "naivefast", "maxdegree")
    p_values: tuple[int, ...] = (25, 50, 75, 100)
    q_values: tuple[int, ...] = (2000, 5000)
    beta: float = 0.6
    runs: int = 1000
    probe_runs: int = 10
    repetitions: int = 1
    seed: int = 0
    eval_draws: int = 1
    workers: int = 1
    timing: bool = True
    out: str = "results.csv"

    # budget-split experiment
    budget: float = 600.0
    seed_reward: float = 2.0
    nonseed_reward: float = 1.0
    z_values: tuple[float, ...] = (0.2, 0.5, 1.0, 2.0, 5.0)

    def __post_init__(self) -> None:
        has_files = self.edges is not None and self.checkins is not None
        if has_files == (self.synth is not None):
            raise ValueError("configure either edges+checkins paths or synth parameters")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithms {unknown}; choose from {ALGORITHMS}")
        if not self.algorithms:
            raise ValueError("at least one algorithm is required")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if min(self.p_values, default=1) < 1 or not self.p_values:
            raise ValueError("p values must be positive")
        if min(self.q_values, default=1) < 1 or not self.q_values:
            raise ValueError("q values must be positive")
        if self.propagation.seeds_count_toward_budget:
            bad = [(p, q) for p in self.p_values for q in self.q_values if p > q]
            if bad:
                raise ValueError(f"p > q while seeds count toward the budget: {bad}")
        if self.repetitions < 1 or self.runs < 1 or self.eval_draws < 1:
            raise ValueError("repetitions, runs and eval_draws must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.min_checkins < 1:
            raise ValueError("min_checkins must be >= 1")
        if min(self.z_values, default=1.0) < 0.0:
            raise ValueError("z values must be non-negative")


# -- parsing -------------------------------------------------------------------


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part and not part.lstrip().startswith("-"):
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def _parse_str_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip().lower() for p in text.split(",") if p.strip())


def _parse_minimum(text: str) -> tuple:
    if ":" not in text:
        return ("point", float(text))
    kind, args = text.split(":", 1)
    values = _parse_float_list(args)
    kind = kind.strip().lower()
    if kind == "point":
        return ("point", values[0])
    if kind == "uniform":
        return ("uniform", values[0], values[1])
    if kind == "choice":
        return ("choice",) + values
    raise ValueError(f"unknown minimum distribution {kind!r}")


def _parse_home_subareas(text: str) -> tuple[tuple[int, ...], ...]:
    return tuple(_parse_int_list(group) for group in text.split("|"))


def parse_config_text(text: str) -> dict[str, str]:
    """Read ``key = value`` lines; '#' starts a comment, blank lines ignored."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().lower()] = value.strip()
    return values


_KNOWN_KEYS = {
    "edges", "checkins",
    "synth", "communities", "users_per_community", "p_intra", "p_inter",
    "checkin_rate", "weeks", "home_subareas", "home_fraction", "synth_start",
    "lat_min", "lat_max", "lon_min", "lon_max", "cell_km", "grid_mask",
    "day_start", "day_end", "cycle_hours", "num_days",
    "model", "p0", "theta0", "imax1", "imax2", "similarity", "attraction",
    "seeds_count_toward_budget", "per_user_base_draw",
    "topics", "interest_prob", "task_topics", "task_incentive", "minimum",
    "min_checkins", "algorithms", "p", "q", "beta", "runs", "probe_runs",
    "reps", "seed", "eval_draws", "workers", "timing", "out",
    "budget", "seed_reward", "nonseed_reward", "z",
}


def build_config(values: Mapping[str, str]) -> ExperimentConfig:
    """Assemble an ExperimentConfig from flat string key/values."""
    unknown = set(values) - _KNOWN_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    def get(key: str, default: str) -> str:
        return values.get(key, default)

    grid = GridSpec(
        lat_min=float(get("lat_min", "0.0")),
        lat_max=float(get("lat_max", "0.6")),
        lon_min=float(get("lon_min", "0.0")),
        lon_max=float(get("lon_max", "0.6")),
        cell_size_km=float(get("cell_km", "11.119492664455873")),
        mask=frozenset(_parse_int_list(get("grid_mask", ""))),
    )
    cycles = CycleSpec(
        day_start_hour=int(get("day_start", "8")),
        day_end_hour=int(get("day_end", "18")),
        cycle_hours=int(get("cycle_hours", "2")),
        num_days=int(get("num_days", "7")),
    )
    p0 = _parse_float_list(get("p0", "0.1,0.5"))
    theta0 = _parse_float_list(get("theta0", "0.5,0.9"))
    propagation = PropagationConfig(
        model=get("model", "ic").lower(),
        q=1,  # placeholder; the harness substitutes each swept q
        p0_range=(p0[0], p0[-1]),
        theta0_range=(theta0[0], theta0[-1]),
        i_max1=float(get("imax1", "3.0")),
        i_max2=float(get("imax2", "1.5")),
        similarity_fn=get("similarity", "cosine").lower(),
        attraction_fn=get("attraction", "tanh").lower(),
        seeds_count_toward_budget=_parse_bool(get("seeds_count_toward_budget", "true")),
        per_user_base_draw=_parse_bool(get("per_user_base_draw", "false")),
    )
    attributes = AttributeSpec(
        topics=int(get("topics", "5")),
        interest_prob=float(get("interest_prob", "0.4")),
        minimum=_parse_minimum(get("minimum", "uniform:0.5,5.0")),
        task_topics=_parse_int_list(get("task_topics", "0,1")),
        task_incentive=float(get("task_incentive", "3.0")),
    )

    synth = None
    if _parse_bool(get("synth", "false")):
        start_text = get("synth_start", "2010-01-04")
        start = datetime.fromisoformat(start_text)
        if start.tzinfo is None:
            start = start.replace(tzinfo=timezone.utc)
        homes = values.get("home_subareas")
        synth = SynthesisParams(
            communities=int(get("communities", "2")),
            users_per_community=_parse_int_list(get("users_per_community", "100")),
            p_intra=_parse_float_list(get("p_intra", "0.05")),
            p_inter=float(get("p_inter", "0.002")),
            checkin_rate=_parse_float_list(get("checkin_rate", "0.1")),
            weeks=int(get("weeks", "4")),
            home_subareas=_parse_home_subareas(homes) if homes else None,
            home_fraction=float(get("home_fraction", "0.8")),
            start=start,
        )

    return ExperimentConfig(
        edges=values.get("edges"),
        checkins=values.get("checkins"),
        synth=synth,
        grid=grid,
        cycles=cycles,
        propagation=propagation,
        attributes=attributes,
        min_checkins=int(get("min_checkins", "1")),
        algorithms=_parse_str_list(get("algorithms", "fast,naivefast,maxdegree")),
        p_values=_parse_int_list(get("p", "25,50,75,100")),
        q_values=_parse_int_list(get("q", "2000,5000")),
        beta=float(get("beta", "0.6")),
        runs=int(get("runs", "1000")),
        probe_runs=int(get("probe_runs", "10")),
        repetitions=int(get("reps", "1")),
        seed=int(get("seed", "0")),
        eval_draws=int(get("eval_draws", "1")),
        workers=int(get("workers", "1")),
        timing=_parse_bool(get("timing", "true")),
        out=get("out", "results.csv"),
        budget=float(get("budget", "600")),
        seed_reward=float(get("seed_reward", "2.0")),
        nonseed_reward=float(get("nonseed_reward", "1.0")),
        z_values=_parse_float_list(get("z", "0.2,0.5,1,2,5")),
    )


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, str]] = None,
) -> ExperimentConfig:
    """Load a config file and apply flag overrides (flags win)."""
    values: dict[str, str] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    if overrides:
        values.update({k.lower(): v for k, v in overrides.items()})
    return build_config(values)
