"""Spatiotemporal discretization of the sensing campaign.

The target region is a lat/lon bounding box cut into a fixed rectangular
grid of subareas; the sensing duration is a daily hour window cut into
equal-length cycles over a number of days.  A (subarea, cycle) pair is one
temporal-spatial cell, the unit every coverage number is measured against.

Cell edges are computed from ``cell_size_km`` with a flat equirectangular
degree-box projection (longitude scaled by cos of the box mid-latitude);
all algorithms share the same tiling, so projection exactness is
immaterial to their comparison.  Cell intervals are half-open
``[low, high)`` so boundary points belong to exactly one cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import NamedTuple, Optional

#: Arc length of one degree of latitude at the mean Earth radius (6371 km).
KM_PER_DEGREE = 6371.0 * math.pi / 180.0

SECONDS_PER_DAY = 86400.0


def utc(ts: datetime) -> datetime:
    """Return ``ts`` as an aware UTC datetime (naive input is taken as UTC)."""
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


class CellIndex(NamedTuple):
    """One temporal-spatial cell: a subarea index and a cycle index."""

    subarea: int
    cycle: int


@dataclass(frozen=True)
class GridSpec:
    """Rectangular subarea grid over a lat/lon bounding box.

    ``mask`` lists subarea indices excluded from the campaign (e.g. cells
    that fall into the sea).  Subareas are indexed row-major from the
    south-west corner: ``index = row * cols + col`` with row 0 at
    ``lat_min`` and col 0 at ``lon_min``.
    """

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    cell_size_km: float
    mask: frozenset[int] = frozenset()

    rows: int = field(init=False)
    cols: int = field(init=False)
    lat_step: float = field(init=False)
    lon_step: float = field(init=False)

    def __post_init__(self) -> None:
        if not (self.lat_min < self.lat_max):
            raise ValueError("lat_min must be < lat_max")
        if not (self.lon_min < self.lon_max):
            raise ValueError("lon_min must be < lon_max")
        if not self.cell_size_km > 0:
            raise ValueError("cell_size_km must be positive")
        object.__setattr__(self, "mask", frozenset(int(i) for i in self.mask))

        mid_lat = 0.5 * (self.lat_min + self.lat_max)
        lat_span_km = (self.lat_max - self.lat_min) * KM_PER_DEGREE
        lon_span_km = (self.lon_max - self.lon_min) * KM_PER_DEGREE * math.cos(
            math.radians(mid_lat)
        )
        # Nearest integer cell count: the box is tiled exactly, with cells as
        # close as possible to the requested size.
        rows = max(1, round(lat_span_km / self.cell_size_km))
        cols = max(1, round(lon_span_km / self.cell_size_km))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "lat_step", (self.lat_max - self.lat_min) / rows)
        object.__setattr__(self, "lon_step", (self.lon_max - self.lon_min) / cols)

        bad = [i for i in self.mask if not 0 <= i < rows * cols]
        if bad:
            raise ValueError(f"masked indices out of range [0, {rows * cols}): {sorted(bad)}")

    @property
    def gross_subareas(self) -> int:
        """Subarea count before mask removal."""
        return self.rows * self.cols

    @property
    def subareas(self) -> int:
        """Subarea count after mask removal."""
        return self.gross_subareas - len(self.mask)

    def unmasked_indices(self) -> list[int]:
        return [i for i in range(self.gross_subareas) if i not in self.mask]

    def subarea_bounds(self, index: int) -> tuple[float, float, float, float]:
        """(lat_lo, lat_hi, lon_lo, lon_hi) of a subarea cell."""
        if not 0 <= index < self.gross_subareas:
            raise ValueError(f"subarea index {index} out of range")
        row, col = divmod(index, self.cols)
        lat_lo = self.lat_min + row * self.lat_step
        lon_lo = self.lon_min + col * self.lon_step
        return lat_lo, lat_lo + self.lat_step, lon_lo, lon_lo + self.lon_step


@dataclass(frozen=True)
class CycleSpec:
    """Daily sensing window divided into equal-length cycles over several days.

    Cycle indices run day-major: cycle ``d * cycles_per_day + b`` is the
    b-th slot of day ``d``, with day 0 anchored at the evaluation epoch.
    """

    day_start_hour: int
    day_end_hour: int
    cycle_hours: int
    num_days: int

    def __post_init__(self) -> None:
        if not 0 <= self.day_start_hour < self.day_end_hour <= 24:
            raise ValueError("need 0 <= day_start_hour < day_end_hour <= 24")
        if self.cycle_hours <= 0:
            raise ValueError("cycle_hours must be positive")
        if (self.day_end_hour - self.day_start_hour) % self.cycle_hours != 0:
            raise ValueError("daily window must divide evenly into cycles")
        if self.num_days < 1:
            raise ValueError("num_days must be >= 1")

    @property
    def cycles_per_day(self) -> int:
        return (self.day_end_hour - self.day_start_hour) // self.cycle_hours

    @property
    def total(self) -> int:
        """Total number of cycles n."""
        return self.num_days * self.cycles_per_day


def locate_subarea(lat: float, lon: float, grid: GridSpec) -> Optional[int]:
    """Map a point to its subarea index, or None if outside the box or masked."""
    if not (grid.lat_min <= lat < grid.lat_max):
        return None
    if not (grid.lon_min <= lon < grid.lon_max):
        return None
    row = min(int((lat - grid.lat_min) / grid.lat_step), grid.rows - 1)
    col = min(int((lon - grid.lon_min) / grid.lon_step), grid.cols - 1)
    index = row * grid.cols + col
    if index in grid.mask:
        return None
    return index


def locate_cycle(ts: datetime, cycles: CycleSpec, epoch: datetime) -> Optional[int]:
    """Map a timestamp to its cycle index relative to ``epoch`` (day 0, 00:00).

    Returns None when the timestamp falls outside the daily hour window or
    outside the ``num_days`` evaluation span.
    """
    delta = (utc(ts) - utc(epoch)).total_seconds()
    if delta < 0:
        return None
    day, sec_of_day = divmod(delta, SECONDS_PER_DAY)
    day = int(day)
    if day >= cycles.num_days:
        return None
    hour = sec_of_day / 3600.0
    if not (cycles.day_start_hour <= hour < cycles.day_end_hour):
        return None
    slot = min(
        int((hour - cycles.day_start_hour) / cycles.cycle_hours),
        cycles.cycles_per_day - 1,
    )
    return day * cycles.cycles_per_day + slot


def locate_cell(
    lat: float, lon: float, ts: datetime, grid: GridSpec, cycles: CycleSpec, epoch: datetime
) -> Optional[CellIndex]:
    """Combined subarea + cycle lookup; None unless both resolve."""
    subarea = locate_subarea(lat, lon, grid)
    if subarea is None:
        return None
    cycle = locate_cycle(ts, cycles, epoch)
    if cycle is None:
        return None
    return CellIndex(subarea, cycle)


def cell_universe(grid: GridSpec, cycles: CycleSpec) -> tuple[int, int, int]:
    """(m, n, total) = unmasked subareas, cycles, unmasked temporal-spatial cells."""
    m = grid.subareas
    n = cycles.total
    return m, n, m * n
