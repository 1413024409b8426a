"""Per-user mobility profiling from historical check-ins.

A user's profile is the sparse matrix of mean check-in counts per
(subarea, cycle-slot) cell, estimated from training weeks.  Slots are keyed
by (weekday, time-of-day bin): slot ``d * cycles_per_day + b`` collects
check-ins that happened on weekday ``d`` (Monday = 0) in the b-th bin of
the daily sensing window, so the estimate transfers to any held-out
evaluation week that starts on a Monday.

Check-in behavior is modeled as a Poisson process, so the probability of a
user producing at least one reading in a cell is ``1 - exp(-rate)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Union

from .dataset import Dataset
from .grid import CycleSpec, GridSpec, locate_subarea, utc

Cell = tuple[int, int]  # (subarea index, cycle-slot index)


def checkin_count_pmf(rate: float, h: int) -> float:
    """Poisson probability of exactly ``h`` check-ins at mean ``rate``."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if h < 0:
        raise ValueError("count must be non-negative")
    if rate == 0.0:
        return 1.0 if h == 0 else 0.0
    return math.exp(h * math.log(rate) - rate - math.lgamma(h + 1))


def coverage_prob(rate: float) -> float:
    """Probability of at least one check-in: 1 - exp(-rate)."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    return -math.expm1(-rate)


@dataclass(frozen=True)
class MobilityVector:
    """Sparse flattening of a rate matrix, subarea-major and cycle-minor.

    Flat index = subarea * cycle_count + slot; the order is fixed and
    identical for all users so vectors are directly comparable.
    """

    entries: Mapping[int, float]
    length: int

    @cached_property
    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.entries.values()))

    def dot(self, other: "MobilityVector") -> float:
        a, b = self.entries, other.entries
        if len(b) < len(a):
            a, b = b, a
        return sum(v * b[i] for i, v in a.items() if i in b)


def trajectory_similarity(a: MobilityVector, b: MobilityVector) -> float:
    """Cosine similarity in [0, 1]; zero-norm vectors compare as 0."""
    if a.length != b.length:
        raise ValueError(f"vector lengths differ: {a.length} != {b.length}")
    if a.norm == 0.0 or b.norm == 0.0:
        return 0.0
    sim = a.dot(b) / (a.norm * b.norm)
    return min(max(sim, 0.0), 1.0)


def avg_similarity_to_set(u: MobilityVector, group: Iterable[MobilityVector]) -> float:
    """Mean cosine similarity of ``u`` to a set; smaller means more diverse.

    An empty set compares as 0 so the very first greedy pick is driven by
    degree alone.
    """
    sims = [trajectory_similarity(u, x) for x in group]
    if not sims:
        return 0.0
    return sum(sims) / len(sims)


@dataclass(frozen=True)
class MobilityProfile:
    """Per-user sparse check-in rate matrices over the cell grid.

    ``rates[user][(subarea, slot)]`` is the mean number of check-ins that
    user produced per occurrence of the weekly slot, restricted to unmasked
    subareas.  ``zero_occurrence_slots`` counts slots the training span
    never exercised (their rates stay 0).
    """

    rates: Mapping[int, Mapping[Cell, float]]
    subarea_count: int
    cycle_count: int
    zero_occurrence_slots: int = 0

    def users(self) -> list[int]:
        return sorted(self.rates)

    def rate_cells(self, user: int) -> Mapping[Cell, float]:
        return self.rates.get(user, {})

    def vector(self, user: int) -> MobilityVector:
        entries = {
            i * self.cycle_count + j: lam
            for (i, j), lam in self.rate_cells(user).items()
            if lam > 0.0
        }
        return MobilityVector(entries, self.subarea_count * self.cycle_count)

    def coverage_cells(self, user: int) -> dict[Cell, float]:
        """Per-cell probability of at least one check-in."""
        return {
            cell: coverage_prob(lam)
            for cell, lam in self.rate_cells(user).items()
            if lam > 0.0
        }

    def subareas_visited(self, user: int) -> int:
        return len({i for (i, _), lam in self.rate_cells(user).items() if lam > 0.0})


def _weekday_occurrences(first, last) -> list[int]:
    """How many times each weekday occurs between two dates, inclusive."""
    total_days = (last - first).days + 1
    counts = [total_days // 7] * 7
    for offset in range(total_days % 7):
        counts[(first.weekday() + offset) % 7] += 1
    return counts


def estimate_lambda(train: Dataset, grid: GridSpec, cycles: CycleSpec) -> MobilityProfile:
    """Estimate per-user rates: slot check-in count / slot occurrences.

    The denominator is the number of times the slot's weekday occurs in the
    training span (first to last check-in date, inclusive), so e.g. three
    check-ins in one slot over three training weeks give a rate of 1.0.
    Check-ins outside the grid, outside the daily window, or on weekdays
    beyond ``num_days`` are ignored.
    """
    dates = [utc(c.time).date() for recs in train.checkins.values() for c in recs]
    if not dates:
        raise ValueError("training dataset has no check-ins")
    occurrences = _weekday_occurrences(min(dates), max(dates))

    per_day = cycles.cycles_per_day
    counts: dict[int, dict[Cell, int]] = {}
    for user, recs in train.checkins.items():
        for c in recs:
            sub = locate_subarea(c.lat, c.lon, grid)
            if sub is None:
                continue
            t = utc(c.time)
            weekday = t.weekday()
            if weekday >= cycles.num_days:
                continue
            hour = t.hour + t.minute / 60.0 + (t.second + t.microsecond / 1e6) / 3600.0
            if not (cycles.day_start_hour <= hour < cycles.day_end_hour):
                continue
            slot_bin = min(
                int((hour - cycles.day_start_hour) / cycles.cycle_hours), per_day - 1
            )
            slot = weekday * per_day + slot_bin
            cell = (sub, slot)
            user_counts = counts.setdefault(user, {})
            user_counts[cell] = user_counts.get(cell, 0) + 1

    rates: dict[int, dict[Cell, float]] = {}
    for user in train.checkins:
        user_rates = {}
        for (sub, slot), cnt in counts.get(user, {}).items():
            occ = occurrences[slot // per_day]
            if occ > 0:
                user_rates[(sub, slot)] = cnt / occ
        rates[user] = user_rates

    zero_slots = sum(per_day for wd in range(cycles.num_days) if occurrences[wd] == 0)
    return MobilityProfile(
        rates=rates,
        subarea_count=grid.gross_subareas,
        cycle_count=cycles.total,
        zero_occurrence_slots=zero_slots,
    )


# -- profile cache -------------------------------------------------------------

_CACHE_VERSION = 1


def save_profile(profile: MobilityProfile, path: Union[str, Path]) -> None:
    """Write a profile cache: header line plus (user, subarea, cycle, rate) rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"#mobility-profile v{_CACHE_VERSION} "
            f"subareas={profile.subarea_count} cycles={profile.cycle_count} "
            f"zero_slots={profile.zero_occurrence_slots}\n"
        )
        fh.write("user,subarea,cycle,rate\n")
        for user in profile.users():
            for (sub, slot), lam in sorted(profile.rate_cells(user).items()):
                fh.write(f"{user},{sub},{slot},{lam!r}\n")


def load_profile(path: Union[str, Path]) -> MobilityProfile:
    """Read a profile cache written by :func:`save_profile`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith(f"#mobility-profile v{_CACHE_VERSION} "):
            raise ValueError(f"unsupported profile cache header: {header!r}")
        meta = dict(part.split("=", 1) for part in header.split()[2:])
        fh.readline()  # column names
        rates: dict[int, dict[Cell, float]] = {}
        for line in fh:
            if not line.strip():
                continue
            user, sub, slot, lam = line.rstrip("\n").split(",")
            rates.setdefault(int(user), {})[(int(sub), int(slot))] = float(lam)
    return MobilityProfile(
        rates=rates,
        subarea_count=int(meta["subareas"]),
        cycle_count=int(meta["cycles"]),
        zero_occurrence_slots=int(meta["zero_slots"]),
    )
