"""Social graph and check-in trace ingestion.

Reads SNAP-style plain-text edge lists and tab-separated check-in records
(the Brightkite/Gowalla layout), filters users by region and activity,
splits traces into train/test by calendar week, and synthesizes
community-structured datasets for controlled experiments.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

from .grid import SECONDS_PER_DAY, CycleSpec, GridSpec, locate_subarea, utc
from .seeding import SeedLike, as_seedseq, derive

log = logging.getLogger(__name__)

Source = Union[str, Path, IO]


class CheckIn(NamedTuple):
    """One check-in record: <user-id, time, latitude, longitude, location-id>."""

    user: int
    time: datetime
    lat: float
    lon: float
    location: str


class SocialGraph:
    """Undirected friendship graph.

    Edges are symmetrized and deduplicated, self-loops dropped.  Besides the
    adjacency mapping, the graph carries CSR-style dense arrays (``ids``,
    ``indptr``, ``indices``, ``degrees``) used by the simulation hot paths;
    dense indices follow ascending user-id order.
    """

    def __init__(self, edges: Iterable[tuple[int, int]], nodes: Iterable[int] = ()) -> None:
        adj: dict[int, set[int]] = {int(u): set() for u in nodes}
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                continue
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        self._adj: dict[int, tuple[int, ...]] = {
            u: tuple(sorted(nbrs)) for u, nbrs in adj.items()
        }
        self.ids = np.array(sorted(self._adj), dtype=np.int64)
        self._index = {int(u): i for i, u in enumerate(self.ids)}
        counts = np.array([len(self._adj[int(u)]) for u in self.ids], dtype=np.int64)
        self.indptr = np.zeros(len(self.ids) + 1, dtype=np.int64)
        np.cumsum(counts, out=self.indptr[1:])
        self.indices = np.empty(int(self.indptr[-1]), dtype=np.int64)
        for i, u in enumerate(self.ids):
            nbrs = self._adj[int(u)]
            self.indices[self.indptr[i] : self.indptr[i + 1]] = [self._index[v] for v in nbrs]
        self.degrees = counts

    # -- basic queries ----------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self.ids)

    @property
    def edge_count(self) -> int:
        return int(self.indptr[-1]) // 2

    def __contains__(self, user: int) -> bool:
        return user in self._adj

    def nodes(self) -> list[int]:
        return [int(u) for u in self.ids]

    def neighbors(self, user: int) -> tuple[int, ...]:
        return self._adj[user]

    def degree(self, user: int) -> int:
        return len(self._adj[user])

    def dense_index(self, user: int) -> int:
        return self._index[user]

    def edges(self) -> Iterator[tuple[int, int]]:
        """Each undirected edge once, as (low-id, high-id)."""
        for u in self.ids:
            for v in self._adj[int(u)]:
                if int(u) < v:
                    yield int(u), v

    def induced(self, users: Iterable[int]) -> "SocialGraph":
        """Vertex-induced subgraph on ``users`` (edges between removed users drop)."""
        keep = {u for u in users if u in self._adj}
        edges = [(u, v) for u in keep for v in self._adj[u] if u < v and v in keep]
        return SocialGraph(edges, nodes=keep)


@dataclass(frozen=True)
class Dataset:
    """A social graph plus its users' check-ins, grouped by user.

    Every check-in user must exist in the graph; use :meth:`build` to
    assemble a dataset from a raw record list (unknown users' records are
    dropped with a log line).
    """

    graph: SocialGraph
    checkins: Mapping[int, tuple[CheckIn, ...]]

    def __post_init__(self) -> None:
        missing = [u for u in self.checkins if u not in self.graph]
        if missing:
            raise ValueError(f"check-in users missing from graph: {missing[:5]}...")

    @classmethod
    def build(cls, graph: SocialGraph, records: Iterable[CheckIn]) -> "Dataset":
        grouped: dict[int, list[CheckIn]] = {}
        dropped = 0
        for rec in records:
            if rec.user in graph:
                grouped.setdefault(rec.user, []).append(rec)
            else:
                dropped += 1
        if dropped:
            log.info("dropped %d check-ins from users absent in the graph", dropped)
        return cls(graph, {u: tuple(rs) for u, rs in grouped.items()})

    @property
    def num_checkins(self) -> int:
        return sum(len(rs) for rs in self.checkins.values())

    def all_checkins(self) -> Iterator[CheckIn]:
        for user in sorted(self.checkins):
            yield from self.checkins[user]


# -- loaders ---------------------------------------------------------------


def _text_stream(source: Source) -> tuple[IO, bool]:
    """(text stream, owns-it) for a path, text stream, or byte stream."""
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8"), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8"), False


def load_edges(source: Source) -> SocialGraph:
    """Parse a SNAP edge list: one whitespace-separated integer pair per line.

    Lines starting with ``#`` are comments.  Malformed lines raise a
    ValueError naming the line number; duplicate edges and self-loops are
    silently discarded.
    """
    stream, owned = _text_stream(source)
    edges = []
    try:
        for lineno, raw in enumerate(stream, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"edge file line {lineno}: expected two ids, got {line!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(
                    f"edge file line {lineno}: non-integer id in {line!r}"
                ) from None
            edges.append((a, b))
    finally:
        if owned:
            stream.close()
    return SocialGraph(edges)


def _parse_timestamp(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return utc(datetime.fromisoformat(text))


class CheckInLoad(NamedTuple):
    records: list[CheckIn]
    dropped: int


def load_checkins(source: Source) -> CheckInLoad:
    """Parse tab-separated check-ins: user, ISO-8601 time, lat, lon, location-id.

    Rows with unparsable fields or out-of-range coordinates are dropped and
    counted rather than fatal — real SNAP dumps contain null coordinates.
    Records are returned in file order.
    """
    stream, owned = _text_stream(source)
    records: list[CheckIn] = []
    dropped = 0
    try:
        for raw in stream:
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                dropped += 1
                continue
            try:
                user = int(parts[0])
                ts = _parse_timestamp(parts[1])
                lat = float(parts[2])
                lon = float(parts[3])
            except (ValueError, OverflowError):
                dropped += 1
                continue
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                dropped += 1
                continue
            records.append(CheckIn(user, ts, lat, lon, parts[4]))
    finally:
        if owned:
            stream.close()
    if dropped:
        log.info("dropped %d unparsable check-in rows", dropped)
    return CheckInLoad(records, dropped)


def save_edges(graph: SocialGraph, target: Union[str, Path]) -> None:
    """Write the graph back out in SNAP edge-list format (low-id first)."""
    with open(target, "w", encoding="utf-8") as fh:
        for a, b in graph.edges():
            fh.write(f"{a}\t{b}\n")


def save_checkins(records: Iterable[CheckIn], target: Union[str, Path]) -> None:
    """Write check-ins in the 5-column tab-separated layout."""
    with open(target, "w", encoding="utf-8") as fh:
        for rec in records:
            ts = utc(rec.time).strftime("%Y-%m-%dT%H:%M:%SZ")
            fh.write(f"{rec.user}\t{ts}\t{rec.lat:.6f}\t{rec.lon:.6f}\t{rec.location}\n")


# -- filtering and splitting -------------------------------------------------


def filter_active_region(ds: Dataset, grid: GridSpec, min_checkins: int = 1) -> Dataset:
    """Keep users with >= min_checkins check-ins inside the unmasked grid.

    Surviving users keep only their in-region check-ins; the graph is the
    vertex-induced subgraph on survivors (edges incident to removed users
    are dropped, not re-wired).
    """
    if min_checkins < 1:
        raise ValueError("min_checkins must be >= 1")
    kept: dict[int, tuple[CheckIn, ...]] = {}
    for user, recs in ds.checkins.items():
        in_region = tuple(
            c for c in recs if locate_subarea(c.lat, c.lon, grid) is not None
        )
        if len(in_region) >= min_checkins:
            kept[user] = in_region
    graph = ds.graph.induced(kept.keys())
    return Dataset(graph, kept)


def week_key(ts: datetime) -> tuple[int, int]:
    """(ISO year, ISO week) of a timestamp in UTC."""
    iso = utc(ts).isocalendar()
    return iso[0], iso[1]


def week_start(ts: datetime) -> datetime:
    """Monday 00:00 UTC of the timestamp's calendar week."""
    d = utc(ts).date()
    monday = d - timedelta(days=d.weekday())
    return datetime(monday.year, monday.month, monday.day, tzinfo=timezone.utc)


def _in_daily_window(c: CheckIn, cycles: CycleSpec) -> bool:
    t = utc(c.time)
    hour = t.hour + t.minute / 60.0 + (t.second + t.microsecond / 1e6) / 3600.0
    return cycles.day_start_hour <= hour < cycles.day_end_hour


def split_train_test(
    ds: Dataset, cycles: CycleSpec, rng_seed: SeedLike
) -> tuple[Dataset, Dataset]:
    """Hold out one calendar week, chosen uniformly at random, as the test set.

    Only check-ins inside the daily sensing window take part in the split;
    the remaining weeks form the training set and both halves share the
    graph.  Deterministic given the seed.
    """
    windowed: dict[int, list[CheckIn]] = {
        u: [c for c in recs if _in_daily_window(c, cycles)]
        for u, recs in ds.checkins.items()
    }
    weeks = sorted({week_key(c.time) for recs in windowed.values() for c in recs})
    if len(weeks) < 2:
        raise ValueError(
            f"dataset spans {len(weeks)} calendar week(s) inside the sensing "
            "window; need at least 2 to split"
        )
    rng = np.random.default_rng(as_seedseq(rng_seed))
    test_week = weeks[int(rng.integers(len(weeks)))]

    train: dict[int, tuple[CheckIn, ...]] = {}
    test: dict[int, tuple[CheckIn, ...]] = {}
    for user, recs in windowed.items():
        tr = tuple(c for c in recs if week_key(c.time) != test_week)
        te = tuple(c for c in recs if week_key(c.time) == test_week)
        if tr:
            train[user] = tr
        if te:
            test[user] = te
    return Dataset(ds.graph, train), Dataset(ds.graph, test)


def evaluation_epoch(ds: Dataset) -> Optional[datetime]:
    """Monday 00:00 UTC of the earliest check-in's week; None if no check-ins."""
    times = [c.time for recs in ds.checkins.values() for c in recs]
    if not times:
        return None
    return week_start(min(utc(t) for t in times))


# -- synthetic datasets ------------------------------------------------------


def _per_community(value, communities: int, name: str) -> list:
    if isinstance(value, (int, float)):
        return [value] * communities
    values = list(value)
    if len(values) == 1:
        return values * communities
    if len(values) != communities:
        raise ValueError(f"{name} needs 1 or {communities} values, got {len(values)}")
    return values


@dataclass(frozen=True)
class SynthesisParams:
    """Planted-partition graph plus community-localized Poisson check-ins.

    ``users_per_community``, ``p_intra`` and ``checkin_rate`` accept either
    a scalar (shared by all communities) or one value per community.
    ``home_subareas`` lists, per community, the subareas where the
    ``home_fraction`` share of its users' check-ins lands; None splits the
    unmasked subareas round-robin between communities.  ``checkin_rate`` is
    the Poisson mean per user per cycle slot.
    """

    communities: int
    users_per_community: Union[int, Sequence[int]]
    p_intra: Union[float, Sequence[float]]
    p_inter: float
    checkin_rate: Union[float, Sequence[float]]
    weeks: int
    home_subareas: Optional[Sequence[Sequence[int]]] = None
    home_fraction: float = 0.8
    start: datetime = datetime(2010, 1, 4, tzinfo=timezone.utc)

    def __post_init__(self) -> None:
        if self.communities < 1:
            raise ValueError("communities must be >= 1")
        if self.weeks < 1:
            raise ValueError("weeks must be >= 1")
        for p in _per_community(self.p_intra, self.communities, "p_intra") + [self.p_inter]:
            if not 0.0 <= p <= 1.0:
                raise ValueError("edge probabilities must lie in [0, 1]")
        if not 0.0 <= self.home_fraction <= 1.0:
            raise ValueError("home_fraction must lie in [0, 1]")
        begin = utc(self.start)
        if begin.weekday() != 0 or begin.time() != begin.min.time():
            raise ValueError("start must be a Monday at 00:00 UTC")


def synthesize(
    params: SynthesisParams, grid: GridSpec, cycles: CycleSpec, rng_seed: SeedLike
) -> Dataset:
    """Generate a deterministic community-structured dataset.

    Users are numbered consecutively, community by community.  Check-ins of
    a user land in the community's home subareas with probability
    ``home_fraction`` and anywhere else on the unmasked grid otherwise;
    times are uniform within their cycle slot.
    """
    k = params.communities
    sizes = _per_community(params.users_per_community, k, "users_per_community")
    p_intra = _per_community(params.p_intra, k, "p_intra")
    rates = _per_community(params.checkin_rate, k, "checkin_rate")
    unmasked = np.array(grid.unmasked_indices(), dtype=np.int64)
    if unmasked.size == 0:
        raise ValueError("grid has no unmasked subareas")
    if params.home_subareas is not None:
        homes = [np.array(sorted(set(h)), dtype=np.int64) for h in params.home_subareas]
        if len(homes) != k:
            raise ValueError(f"home_subareas needs {k} entries")
        for h in homes:
            if h.size == 0:
                raise ValueError("every community needs at least one home subarea")
            if not np.isin(h, unmasked).all():
                raise ValueError("home subareas must be unmasked grid indices")
    else:
        homes = [unmasked[c::k] for c in range(k)]
        if any(h.size == 0 for h in homes):
            raise ValueError("too few unmasked subareas to give every community a home")

    members = []
    offset = 0
    for size in sizes:
        members.append(np.arange(offset, offset + size, dtype=np.int64))
        offset += size
    all_users = np.arange(offset, dtype=np.int64)

    # planted-partition graph
    rng_graph = np.random.default_rng(derive(rng_seed, "synth-graph"))
    edges: list[tuple[int, int]] = []
    for c in range(k):
        m = members[c]
        if len(m) >= 2:
            iu, ju = np.triu_indices(len(m), 1)
            keep = rng_graph.random(iu.size) < p_intra[c]
            edges.extend(zip(m[iu[keep]].tolist(), m[ju[keep]].tolist()))
    for c1 in range(k):
        for c2 in range(c1 + 1, k):
            m1, m2 = members[c1], members[c2]
            if len(m1) and len(m2) and params.p_inter > 0:
                keep = rng_graph.random((len(m1), len(m2))) < params.p_inter
                rows, cols = np.nonzero(keep)
                edges.extend(zip(m1[rows].tolist(), m2[cols].tolist()))
    graph = SocialGraph(edges, nodes=all_users.tolist())

    # Poisson check-ins on the cycle grid
    rng_mob = np.random.default_rng(derive(rng_seed, "synth-checkins"))
    per_day = cycles.cycles_per_day
    slots = params.weeks * cycles.num_days * per_day
    start_ts = utc(params.start).timestamp()
    cycle_seconds = cycles.cycle_hours * 3600.0
    lat_lo = np.array([grid.subarea_bounds(int(i))[0] for i in range(grid.gross_subareas)])
    lon_lo = np.array([grid.subarea_bounds(int(i))[2] for i in range(grid.gross_subareas)])

    records: dict[int, tuple[CheckIn, ...]] = {}
    for c in range(k):
        for user in members[c].tolist():
            counts = rng_mob.poisson(rates[c], size=slots)
            total = int(counts.sum())
            if total == 0:
                continue
            slot_idx = np.repeat(np.arange(slots), counts)
            at_home = rng_mob.random(total) < params.home_fraction
            sub = np.where(
                at_home,
                homes[c][rng_mob.integers(len(homes[c]), size=total)],
                unmasked[rng_mob.integers(len(unmasked), size=total)],
            )
            week, rest = np.divmod(slot_idx, cycles.num_days * per_day)
            day, slot = np.divmod(rest, per_day)
            seconds = (
                start_ts
                + week * 7 * SECONDS_PER_DAY
                + day * SECONDS_PER_DAY
                + (cycles.day_start_hour + slot * cycles.cycle_hours) * 3600.0
                + rng_mob.random(total) * cycle_seconds
            )
            lat = lat_lo[sub] + rng_mob.random(total) * grid.lat_step
            lon = lon_lo[sub] + rng_mob.random(total) * grid.lon_step
            recs = [
                CheckIn(
                    user,
                    datetime.fromtimestamp(seconds[i], tz=timezone.utc),
                    float(lat[i]),
                    float(lon[i]),
                    f"cell{int(sub[i])}",
                )
                for i in range(total)
            ]
            recs.sort(key=lambda r: r.time)
            records[user] = tuple(recs)
    return Dataset(graph, records)
