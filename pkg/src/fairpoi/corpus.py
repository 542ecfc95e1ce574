"""Check-in datasets: ingestion, sparsity filtering, chronological splits,
activity/popularity groups and a seeded synthetic generator.

Identifiers are opaque strings and every tie is broken by ascending id, so
all operations here are deterministic.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .kernels import _numpy as _np_kernels
from .errors import ConfigError, DataError, EmptyDatasetError, ParseError, UnknownEntityError
from .rng import SplitMix64

logger = logging.getLogger(__name__)

DELIMITERS = {"tab": "\t", "comma": ",", "\t": "\t", ",": ","}
GROUP_FRACTION = Fraction(1, 5)


class CheckIn(NamedTuple):
    user_id: str
    poi_id: str
    timestamp: int
    split: Optional[str] = None  # provenance tag set by chronological_split


class Poi(NamedTuple):
    poi_id: str
    latitude: float
    longitude: float
    category_id: Optional[str] = None


@dataclass(frozen=True)
class SocialGraph:
    """Undirected friendship edges stored as sorted ``(a, b)`` pairs, ``a < b``."""

    edges: frozenset = frozenset()

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "SocialGraph":
        edges = set()
        for a, b in pairs:
            if a == b:
                continue
            edges.add((a, b) if a < b else (b, a))
        return cls(frozenset(edges))

    @cached_property
    def adjacency(self) -> dict[str, frozenset]:
        adj = defaultdict(set)
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return {u: frozenset(v) for u, v in adj.items()}

    def friends(self, user_id: str) -> frozenset:
        return self.adjacency.get(user_id, frozenset())

    def restrict(self, users) -> "SocialGraph":
        return SocialGraph(frozenset(e for e in self.edges if e[0] in users and e[1] in users))

    def __len__(self):
        return len(self.edges)


@dataclass(frozen=True)
class Dataset:
    users: frozenset
    pois: Mapping[str, Poi]
    checkins: tuple
    social: SocialGraph = field(default_factory=SocialGraph)

    def __post_init__(self):
        for c in self.checkins:
            if c.poi_id not in self.pois:
                raise UnknownEntityError("POI", c.poi_id)
            if c.user_id not in self.users:
                raise UnknownEntityError("user", c.user_id)
            if c.timestamp < 0:
                raise DataError(f"negative timestamp {c.timestamp} for user {c.user_id!r}")
        for p in self.pois.values():
            if not (-90.0 <= p.latitude <= 90.0 and -180.0 < p.longitude <= 180.0):
                raise DataError(f"POI {p.poi_id!r} has out-of-range coordinates")
        for a, b in self.social.edges:
            if a == b or a not in self.users or b not in self.users:
                raise DataError(f"invalid social edge ({a!r}, {b!r})")

    @cached_property
    def user_ids(self) -> tuple:
        return tuple(sorted(self.users))

    @cached_property
    def poi_ids(self) -> tuple:
        return tuple(sorted(self.pois))

    @cached_property
    def poi_index(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.poi_ids)}

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.user_ids)}

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """(lat, lon) arrays in ``poi_ids`` order."""
        lat = np.array([self.pois[p].latitude for p in self.poi_ids], dtype=np.float64)
        lon = np.array([self.pois[p].longitude for p in self.poi_ids], dtype=np.float64)
        return lat, lon

    @cached_property
    def poi_checkin_counts(self) -> Counter:
        return Counter(c.poi_id for c in self.checkins)

    @cached_property
    def user_checkin_counts(self) -> Counter:
        return Counter(c.user_id for c in self.checkins)

    @cached_property
    def visits(self) -> dict[str, tuple]:
        """Per-user check-ins sorted by (timestamp, poi_id)."""
        out = defaultdict(list)
        for c in self.checkins:
            out[c.user_id].append(c)
        return {u: tuple(sorted(cs, key=lambda c: (c.timestamp, c.poi_id))) for u, cs in out.items()}

    def popularity_vector(self) -> np.ndarray:
        """Check-in count per POI in ``poi_ids`` order."""
        counts = self.poi_checkin_counts
        return np.array([counts.get(p, 0) for p in self.poi_ids], dtype=np.int64)

    def with_checkins(self, checkins: Sequence[CheckIn]) -> "Dataset":
        return replace(self, checkins=tuple(checkins))

    @property
    def has_categories(self) -> bool:
        return any(p.category_id is not None for p in self.pois.values())


@dataclass(frozen=True)
class SplitDataset:
    train: Dataset
    validation: Dataset
    test: Dataset


class UserGroup(str, Enum):
    ACTIVE = "Active"
    INACTIVE = "Inactive"


class ItemGroup(str, Enum):
    SHORT_HEAD = "ShortHead"
    LONG_TAIL = "LongTail"


@dataclass(frozen=True)
class GroupAssignment:
    user_group: Mapping[str, UserGroup]
    item_group: Mapping[str, ItemGroup]

    def users_in(self, group: UserGroup) -> list[str]:
        return sorted(u for u, g in self.user_group.items() if g == group)

    def pois_in(self, group: ItemGroup) -> list[str]:
        return sorted(p for p, g in self.item_group.items() if g == group)

    def is_active(self, user_id: str) -> bool:
        return self.user_group[user_id] == UserGroup.ACTIVE


@dataclass(frozen=True)
class SyntheticConfig:
    n_users: int = 200
    n_pois: int = 500
    power_law_exponent: float = -1.5
    n_geo_clusters: int = 5
    mean_checkins_per_user: float = 40.0
    social_edge_probability: float = 0.02
    rng_seed: int = 0
    cluster_radius_km: float = 15.0
    n_categories: int = 8
    locality_km: float = 60.0
    max_popularity: Optional[int] = None

    def __post_init__(self):
        if min(self.n_users, self.n_pois, self.n_geo_clusters, self.n_categories) < 1:
            raise ConfigError("synthetic counts must be >= 1")
        if self.mean_checkins_per_user < 1:
            raise ConfigError("mean_checkins_per_user must be >= 1")
        if not self.power_law_exponent < 0:
            raise ConfigError("power_law_exponent must be negative")
        if not 0.0 <= self.social_edge_probability <= 1.0:
            raise ConfigError("social_edge_probability must lie in [0, 1]")
        if self.cluster_radius_km <= 0 or self.locality_km <= 0:
            raise ConfigError("cluster_radius_km and locality_km must be positive")


@dataclass(frozen=True)
class StatsSummary:
    users: int
    pois: int
    checkins: int
    sparsity: float
    active_users: int
    inactive_users: int
    short_head_pois: int
    long_tail_pois: int
    active_checkins: int
    inactive_checkins: int
    short_head_checkins: int
    long_tail_checkins: int

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.as_dict().items())

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2) + "\n"


# ---------------------------------------------------------------- ingestion

def _parse_timestamp(text: str) -> int:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    iso = text[:-1] + "+00:00" if text.endswith("Z") else text
    dt = datetime.fromisoformat(iso)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _rows(path: Path, delimiter: str):
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if not row or all(not f.strip() for f in row):
                continue
            yield lineno, [f.strip() for f in row]


def _read_checkins(path: Path, delimiter: str) -> list[CheckIn]:
    out = []
    first = True
    for lineno, row in _rows(path, delimiter):
        if len(row) != 3:
            raise ParseError(path, lineno, min(len(row) + 1, 4), f"expected 3 columns, found {len(row)}")
        try:
            ts = _parse_timestamp(row[2])
        except ValueError:
            if first:
                first = False
                continue
            raise ParseError(path, lineno, 3, f"unparseable timestamp {row[2]!r}") from None
        first = False
        if ts < 0:
            raise ParseError(path, lineno, 3, "timestamp must be >= 0")
        for col in (0, 1):
            if not row[col]:
                raise ParseError(path, lineno, col + 1, "empty identifier")
        out.append(CheckIn(row[0], row[1], ts))
    return out


def _read_pois(path: Path, delimiter: str) -> dict[str, Poi]:
    pois = {}
    first = True
    for lineno, row in _rows(path, delimiter):
        if len(row) not in (3, 4):
            raise ParseError(path, lineno, min(len(row) + 1, 5), f"expected 3 or 4 columns, found {len(row)}")
        try:
            lat = float(row[1])
        except ValueError:
            if first:
                first = False
                continue
            raise ParseError(path, lineno, 2, f"unparseable latitude {row[1]!r}") from None
        first = False
        try:
            lon = float(row[2])
        except ValueError:
            raise ParseError(path, lineno, 3, f"unparseable longitude {row[2]!r}") from None
        if not -90.0 <= lat <= 90.0:
            raise ParseError(path, lineno, 2, f"latitude {lat} outside [-90, 90]")
        if lon == -180.0:
            lon = 180.0
        if not -180.0 < lon <= 180.0:
            raise ParseError(path, lineno, 3, f"longitude {lon} outside (-180, 180]")
        if row[0] in pois:
            raise ParseError(path, lineno, 1, f"duplicate POI id {row[0]!r}")
        cat = row[3] if len(row) == 4 and row[3] else None
        pois[row[0]] = Poi(row[0], lat, lon, cat)
    return pois


def _read_social(path: Path, delimiter: str, users) -> SocialGraph:
    pairs, dropped = [], 0
    for lineno, row in _rows(path, delimiter):
        if len(row) != 2:
            raise ParseError(path, lineno, min(len(row) + 1, 3), f"expected 2 columns, found {len(row)}")
        # Header rows and friends outside the check-in data fall out here.
        if row[0] not in users or row[1] not in users:
            dropped += 1
            continue
        pairs.append((row[0], row[1]))
    if dropped:
        logger.info("%s: dropped %d edges with unknown endpoints", path, dropped)
    return SocialGraph.from_pairs(pairs)


def load_dataset(checkin_path, poi_path, social_path=None, delimiter: str = "\t") -> Dataset:
    """Read check-in, POI and (optional) friendship files.

    Duplicate check-in rows are kept; repeat visits count toward popularity.
    """
    delimiter = DELIMITERS.get(delimiter, delimiter)
    checkin_path, poi_path = Path(checkin_path), Path(poi_path)
    pois = _read_pois(poi_path, delimiter)
    checkins = _read_checkins(checkin_path, delimiter)
    for c in checkins:
        if c.poi_id not in pois:
            raise UnknownEntityError("POI", c.poi_id)
    users = frozenset(c.user_id for c in checkins)
    social = _read_social(Path(social_path), delimiter, users) if social_path else SocialGraph()
    return Dataset(users, pois, tuple(checkins), social)


def write_dataset(d: Dataset, directory, checkin_name: str = "checkins.tsv") -> None:
    """Write ``d`` in the ingest format (tab separated, with headers)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / checkin_name, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["user_id", "poi_id", "timestamp"])
        for c in sorted(d.checkins, key=lambda c: (c.user_id, c.timestamp, c.poi_id)):
            w.writerow([c.user_id, c.poi_id, c.timestamp])
    with open(directory / "pois.tsv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["poi_id", "latitude", "longitude", "category_id"])
        for pid in d.poi_ids:
            p = d.pois[pid]
            w.writerow([pid, repr(p.latitude), repr(p.longitude), p.category_id or ""])
    with open(directory / "social.tsv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["user_id", "friend_id"])
        for a, b in sorted(d.social.edges):
            w.writerow([a, b])


def write_split(s: SplitDataset, directory) -> None:
    directory = Path(directory)
    write_dataset(s.train, directory, "train.tsv")
    write_dataset(s.validation, directory, "validation.tsv")
    write_dataset(s.test, directory, "test.tsv")


def load_split(directory, delimiter: str = "\t") -> SplitDataset:
    """Inverse of :func:`write_split`.  All three parts share users, POIs and edges."""
    directory = Path(directory)
    delim = DELIMITERS.get(delimiter, delimiter)
    pois = _read_pois(directory / "pois.tsv", delim)
    parts = {name: _read_checkins(directory / f"{name}.tsv", delim) for name in ("train", "validation", "test")}
    users = frozenset(c.user_id for cs in parts.values() for c in cs)
    social_path = directory / "social.tsv"
    social = _read_social(social_path, delim, users) if social_path.exists() else SocialGraph()
    made = {
        name: Dataset(users, pois, tuple(c._replace(split=name) for c in cs), social)
        for name, cs in parts.items()
    }
    return SplitDataset(made["train"], made["validation"], made["test"])


# ---------------------------------------------------------------- filtering

def filter_sparse(d: Dataset, min_users_per_poi: int = 10, min_pois_per_user: int = 10) -> Dataset:
    """Drop POIs with too few distinct visitors and users with too few
    distinct POIs, alternating until neither rule removes anything."""
    pairs = {(c.user_id, c.poi_id) for c in d.checkins}
    while True:
        visitors = Counter(p for _, p in pairs)
        kept = {(u, p) for u, p in pairs if visitors[p] >= min_users_per_poi}
        breadth = Counter(u for u, _ in kept)
        kept = {(u, p) for u, p in kept if breadth[u] >= min_pois_per_user}
        if kept == pairs:
            break
        pairs = kept
    if not pairs:
        raise EmptyDatasetError("dataset fully filtered")
    users = frozenset(u for u, _ in pairs)
    poi_keep = {p for _, p in pairs}
    checkins = tuple(c for c in d.checkins if (c.user_id, c.poi_id) in pairs)
    pois = {p: d.pois[p] for p in sorted(poi_keep)}
    return Dataset(users, pois, checkins, d.social.restrict(users))


def _ceil_frac(fraction, n: int) -> int:
    return math.ceil(Fraction(fraction).limit_denominator(10**6) * n)


def chronological_split(d: Dataset, fractions=(0.7, 0.2, 0.1)) -> SplitDataset:
    """Per user: oldest ceil(0.7 n) check-ins train, next ceil(0.2 n)
    validation, the rest test.  Ties in time are ordered by poi_id.

    When the two ceilings add up to n (n = 11, 16, ...) validation gets one
    fewer check-in so that every user keeps at least one test check-in.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")
    parts = {"train": [], "validation": [], "test": []}
    for user in d.user_ids:
        seq = d.visits.get(user, ())
        n = len(seq)
        n_train = min(_ceil_frac(fractions[0], n), n)
        if n - n_train < 1:
            raise DataError(f"user {user!r} has {n} check-ins, too few for a non-empty test split")
        # Validation yields one check-in when both ceilings would empty the test split.
        n_val = max(0, min(_ceil_frac(fractions[1], n), n - n_train - 1))
        parts["train"].extend(c._replace(split="train") for c in seq[:n_train])
        parts["validation"].extend(c._replace(split="validation") for c in seq[n_train:n_train + n_val])
        parts["test"].extend(c._replace(split="test") for c in seq[n_train + n_val:])
    return SplitDataset(*(d.with_checkins(parts[k]) for k in ("train", "validation", "test")))


def assign_groups(train: Dataset) -> GroupAssignment:
    """Top 20% of users (by train check-ins) are Active, top 20% of POIs
    are ShortHead.  Ties go to the smaller id."""
    if not train.checkins:
        raise DataError("cannot assign groups on an empty training set")
    ucount, pcount = train.user_checkin_counts, train.poi_checkin_counts
    users = sorted(train.users, key=lambda u: (-ucount.get(u, 0), u))
    pois = sorted(train.pois, key=lambda p: (-pcount.get(p, 0), p))
    n_active = math.ceil(GROUP_FRACTION * len(users))
    n_head = math.ceil(GROUP_FRACTION * len(pois))
    user_group = {u: UserGroup.ACTIVE if i < n_active else UserGroup.INACTIVE for i, u in enumerate(users)}
    item_group = {p: ItemGroup.SHORT_HEAD if i < n_head else ItemGroup.LONG_TAIL for i, p in enumerate(pois)}
    return GroupAssignment(user_group, item_group)


def dataset_stats(d: Dataset, g: GroupAssignment) -> StatsSummary:
    n_u, n_p, n_c = len(d.users), len(d.pois), len(d.checkins)
    ucount, pcount = d.user_checkin_counts, d.poi_checkin_counts
    active = sum(1 for u in d.users if g.user_group.get(u) == UserGroup.ACTIVE)
    head = sum(1 for p in d.pois if g.item_group.get(p) == ItemGroup.SHORT_HEAD)
    active_c = sum(n for u, n in ucount.items() if g.user_group.get(u) == UserGroup.ACTIVE)
    head_c = sum(n for p, n in pcount.items() if g.item_group.get(p) == ItemGroup.SHORT_HEAD)
    return StatsSummary(
        users=n_u, pois=n_p, checkins=n_c,
        sparsity=n_c / (n_u * n_p) if n_u and n_p else 0.0,
        active_users=active, inactive_users=n_u - active,
        short_head_pois=head, long_tail_pois=n_p - head,
        active_checkins=active_c, inactive_checkins=n_c - active_c,
        short_head_checkins=head_c, long_tail_checkins=n_c - head_c,
    )


# ---------------------------------------------------------------- synthetic

_KM_PER_DEG_LAT = 111.195
_BASE_LAT, _BASE_LON = 40.0, -100.0
_REGION_DEG = 4.0
_T0 = 1_262_304_000  # 2010-01-01T00:00:00Z
_SPAN_S = 2 * 365 * 86_400


def _discrete_power_law(rng: SplitMix64, exponent: float, kmax: int, n: int) -> np.ndarray:
    k = np.arange(1, kmax + 1, dtype=np.float64)
    cdf = np.cumsum(k ** exponent)
    return rng.choice_cdf(cdf, n) + 1


def _offsets_km(rng: SplitMix64, n: int, radius_km: float) -> tuple[np.ndarray, np.ndarray]:
    r = radius_km * np.sqrt(rng.uniform(n))
    theta = 2.0 * np.pi * rng.uniform(n)
    return r * np.cos(theta), r * np.sin(theta)


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Seeded LBSN-like dataset.

    POI check-in totals follow a discrete power law with ``cfg.power_law_exponent``
    (scaled by an integer factor when the draw falls short of
    ``n_users * mean_checkins_per_user``, which keeps the log-log slope).
    POIs sit uniformly inside disks around ``n_geo_clusters`` centres.  Every
    check-in slot of a POI goes to a user drawn with probability
    proportional to ``activity * exp(-d(home, poi) / locality_km)``; users
    have Pareto-distributed activity and a home cluster.  Friendships are
    four times likelier between users sharing a home cluster.
    """
    seed = cfg.rng_seed
    rng_geo = SplitMix64.substream(seed, "geo")
    rng_pop = SplitMix64.substream(seed, "popularity")
    rng_user = SplitMix64.substream(seed, "users")
    rng_slot = SplitMix64.substream(seed, "slots")
    rng_time = SplitMix64.substream(seed, "time")
    rng_soc = SplitMix64.substream(seed, "social")

    # Cluster centres inside a regional box; cos(lat) scales longitude offsets.
    c_lat = _BASE_LAT + _REGION_DEG * (rng_geo.uniform(cfg.n_geo_clusters) - 0.5)
    c_lon = _BASE_LON + _REGION_DEG * (rng_geo.uniform(cfg.n_geo_clusters) - 0.5)
    poi_cluster = np.minimum((rng_geo.uniform(cfg.n_pois) * cfg.n_geo_clusters).astype(np.int64),
                             cfg.n_geo_clusters - 1)
    dx, dy = _offsets_km(rng_geo, cfg.n_pois, cfg.cluster_radius_km)
    lat = c_lat[poi_cluster] + dy / _KM_PER_DEG_LAT
    lon = c_lon[poi_cluster] + dx / (_KM_PER_DEG_LAT * np.cos(np.radians(c_lat[poi_cluster])))
    cat_shift = (rng_geo.uniform(cfg.n_pois) * 3).astype(np.int64)
    category = (poi_cluster + cat_shift) % cfg.n_categories

    kmax = cfg.max_popularity or max(cfg.n_pois, 2)
    popularity = _discrete_power_law(rng_pop, cfg.power_law_exponent, kmax, cfg.n_pois)
    target = int(round(cfg.n_users * cfg.mean_checkins_per_user))
    scale = max(1, int(round(target / popularity.sum())))
    popularity = popularity * scale

    home = np.minimum((rng_user.uniform(cfg.n_users) * cfg.n_geo_clusters).astype(np.int64),
                      cfg.n_geo_clusters - 1)
    hx, hy = _offsets_km(rng_user, cfg.n_users, cfg.cluster_radius_km)
    h_lat = c_lat[home] + hy / _KM_PER_DEG_LAT
    h_lon = c_lon[home] + hx / (_KM_PER_DEG_LAT * np.cos(np.radians(c_lat[home])))
    activity = (1.0 - rng_user.uniform(cfg.n_users)) ** -0.5  # Pareto, shape 2

    # Always the numpy path: the sampled data must not depend on the kernel backend.
    dist = _np_kernels.distance_matrix(lat, lon, h_lat, h_lon)  # (pois, users)
    weight = activity[None, :] * np.exp(-dist / cfg.locality_km) + 1e-12
    cdf = np.cumsum(weight, axis=1)

    width = len(str(max(cfg.n_users, cfg.n_pois) - 1))
    uid = [f"u{i:0{width}d}" for i in range(cfg.n_users)]
    pid = [f"p{i:0{width}d}" for i in range(cfg.n_pois)]
    checkins = []
    for p in range(cfg.n_pois):
        who = rng_slot.choice_cdf(cdf[p], int(popularity[p]))
        when = _T0 + (rng_time.uniform(len(who)) * _SPAN_S).astype(np.int64)
        checkins.extend(CheckIn(uid[u], pid[p], int(t)) for u, t in zip(who, when))
    checkins.sort(key=lambda c: (c.user_id, c.timestamp, c.poi_id))

    iu, ju = np.triu_indices(cfg.n_users, k=1)
    prob = np.where(home[iu] == home[ju], min(1.0, 4.0 * cfg.social_edge_probability),
                    cfg.social_edge_probability)
    hit = rng_soc.uniform(len(iu)) < prob
    visited = {c.user_id for c in checkins}
    social = SocialGraph.from_pairs(
        (uid[a], uid[b]) for a, b in zip(iu[hit], ju[hit]) if uid[a] in visited and uid[b] in visited
    )
    pois = {
        pid[i]: Poi(pid[i], float(lat[i]), float(lon[i]), f"c{int(category[i])}")
        for i in range(cfg.n_pois)
    }
    return Dataset(frozenset(visited), pois, tuple(checkins), social)
