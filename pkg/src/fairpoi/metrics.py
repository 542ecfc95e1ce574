"""Accuracy, exposure, GCE fairness and geographic metrics, plus Pareto fronts."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import Dataset, GroupAssignment, ItemGroup, UserGroup
from .errors import ConfigError, DataError, DegenerateDistributionError
from .kernels import EARTH_RADIUS_KM
from .recommenders import RecommendationList

logger = logging.getLogger(__name__)

GCE_ORDER = 2.0
USER_GROUPS = (UserGroup.ACTIVE, UserGroup.INACTIVE)
ITEM_GROUPS = (ItemGroup.SHORT_HEAD, ItemGroup.LONG_TAIL)


# ---------------------------------------------------------------- precision

def precision_at_k(recs: RecommendationList, test_visits, k: int, hit_rate: bool = False) -> float:
    """``|top-k ∩ test_visits| / k``; with ``hit_rate`` 1.0 on any hit."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    hits = len(set(recs.poi_ids[:k]) & set(test_visits))
    if hit_rate:
        return 1.0 if hits else 0.0
    return hits / k


def per_user_precision(all_recs: Mapping[str, RecommendationList], test: Dataset, k: int,
                       hit_rate: bool = False) -> dict[str, float]:
    targets = {u: {c.poi_id for c in cs} for u, cs in test.visits.items()}
    return {u: precision_at_k(all_recs[u], targets.get(u, ()), k, hit_rate) for u in sorted(all_recs)}


def mean_precision(all_recs, test: Dataset, k: int, users: Optional[Iterable[str]] = None,
                   hit_rate: bool = False) -> float:
    per_user = per_user_precision(all_recs, test, k, hit_rate)
    keys = sorted(per_user) if users is None else sorted(set(users) & set(per_user))
    if not keys:
        return math.nan
    return float(np.mean([per_user[u] for u in keys]))


# ---------------------------------------------------------------- exposure

@dataclass(frozen=True)
class ExposureTable:
    counts: Mapping[str, int]  # every known POI, zeros included

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def vector(self, poi_ids: Sequence[str]) -> np.ndarray:
        return np.array([self.counts.get(p, 0) for p in poi_ids], dtype=np.int64)


def exposure_table(all_recs, poi_ids: Iterable[str] = ()) -> ExposureTable:
    """Binary attention: a POI gains one unit per list it appears in."""
    counts = Counter({p: 0 for p in poi_ids})
    lists = all_recs.values() if isinstance(all_recs, Mapping) else all_recs
    for rec in lists:
        for p in set(rec.poi_ids):
            counts[p] += 1
    return ExposureTable(dict(sorted(counts.items())))


def group_mean_exposure(t: ExposureTable, g: GroupAssignment, group: ItemGroup) -> float:
    members = g.pois_in(ItemGroup(group))
    if not members:
        raise DataError(f"item group {ItemGroup(group).value} is empty")
    return sum(t.counts.get(p, 0) for p in members) / len(members)


# ---------------------------------------------------------------- GCE

@dataclass(frozen=True)
class MetricDistribution:
    groups: tuple
    masses: tuple
    normaliser: float

    def __post_init__(self):
        if len(self.groups) != len(self.masses):
            raise ConfigError("groups and masses differ in length")
        if any(m < 0 for m in self.masses) or abs(sum(self.masses) - 1.0) > 1e-9:
            raise ConfigError(f"masses must be non-negative and sum to 1, got {self.masses}")

    def as_dict(self) -> dict:
        return {str(getattr(g, "value", g)): m for g, m in zip(self.groups, self.masses)}


@dataclass(frozen=True)
class FairDistribution:
    groups: tuple
    masses: tuple

    def __post_init__(self):
        if any(m <= 0 for m in self.masses) or abs(sum(self.masses) - 1.0) > 1e-9:
            raise ConfigError("fair distribution must be strictly positive and sum to 1")

    @classmethod
    def uniform(cls, groups) -> "FairDistribution":
        groups = tuple(groups)
        return cls(groups, tuple(1.0 / len(groups) for _ in groups))


def _distribution(groups, totals) -> MetricDistribution:
    z = float(sum(totals))
    if z <= 0:
        raise DegenerateDistributionError("metric distribution has zero total mass")
    return MetricDistribution(tuple(groups), tuple(t / z for t in totals), z)


def user_gain_distribution(all_recs, test: Dataset, g: GroupAssignment) -> MetricDistribution:
    """Share of recommendation hits (recommended POIs visited in test) per user group."""
    targets = {u: {c.poi_id for c in cs} for u, cs in test.visits.items()}
    totals = dict.fromkeys(USER_GROUPS, 0)
    for u, rec in all_recs.items():
        hits = targets.get(u, set())
        totals[g.user_group[u]] += sum(1 for p in rec.poi_ids if p in hits)
    return _distribution(USER_GROUPS, [totals[k] for k in USER_GROUPS])


def item_gain_distribution(all_recs, g: GroupAssignment) -> MetricDistribution:
    """Share of recommendation slots per item group."""
    totals = dict.fromkeys(ITEM_GROUPS, 0)
    for rec in all_recs.values():
        for p in rec.poi_ids:
            totals[g.item_group[p]] += 1
    if sum(totals.values()) == 0:
        raise DegenerateDistributionError("no recommendations to distribute")
    return _distribution(ITEM_GROUPS, [totals[k] for k in ITEM_GROUPS])


class DegenerateGCE:
    """GCE is minus infinity: some group with positive fair mass got none."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DEGENERATE_GCE"

    def __str__(self):
        return "degenerate"

    def __reduce__(self):
        return (DegenerateGCE, ())


DEGENERATE_GCE = DegenerateGCE()


def gce(p_m: MetricDistribution, p_f: Optional[FairDistribution] = None, order: float = GCE_ORDER):
    """Generalised cross entropy between the observed and the fair distribution.

    ``(sum_j p_f^order * p_m^(1-order) - 1) / (order * (1 - order))``.  Zero
    means the distributions match; at ``order=2`` it is always <= 0.
    Returns :data:`DEGENERATE_GCE` instead of ``-inf``.
    """
    if p_f is None:
        p_f = FairDistribution.uniform(p_m.groups)
    if tuple(p_f.groups) != tuple(p_m.groups):
        raise ConfigError("fair and observed distributions cover different groups")
    if order in (0, 1):
        raise ConfigError("GCE order must differ from 0 and 1")
    f = np.asarray(p_f.masses, dtype=np.float64)
    m = np.asarray(p_m.masses, dtype=np.float64)
    if order > 1 and np.any((m == 0) & (f > 0)):
        return DEGENERATE_GCE
    with np.errstate(divide="ignore"):
        total = float(np.sum(f ** order * m ** (1.0 - order)))
    return (total - 1.0) / (order * (1.0 - order))


def is_degenerate(value) -> bool:
    return value is DEGENERATE_GCE


# ---------------------------------------------------------------- distance

def haversine_km(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    h = np.sin((p2 - p1) / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(np.radians(np.subtract(lon2, lon1)) / 2) ** 2
    d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(h, 1.0)))
    return float(d) if np.ndim(d) == 0 else d


def user_centroid(visited_poi_ids: Iterable[str], pois) -> tuple[float, float]:
    """Arithmetic mean of the coordinates of the distinct POIs visited."""
    ids = sorted(set(visited_poi_ids))
    if not ids:
        raise DataError("centroid of an empty visit set")
    lat = np.array([pois[p].latitude for p in ids])
    lon = np.array([pois[p].longitude for p in ids])
    if lon.max() - lon.min() > 180.0:
        logger.warning("visit longitudes span more than 180 degrees; the centroid may straddle the antimeridian")
    return float(lat.mean()), float(lon.mean())


def train_centroids(train: Dataset) -> dict[str, tuple[float, float]]:
    return {u: user_centroid((c.poi_id for c in cs), train.pois) for u, cs in sorted(train.visits.items())}


def mean_median_distance(all_recs, centroids, pois) -> float:
    """Mean over users of the median centroid-to-recommendation distance (km)."""
    medians = []
    for u in sorted(all_recs):
        rec = all_recs[u]
        if not rec.poi_ids:
            continue
        clat, clon = centroids[u]
        lat = np.array([pois[p].latitude for p in rec.poi_ids])
        lon = np.array([pois[p].longitude for p in rec.poi_ids])
        medians.append(float(np.median(haversine_km(clat, clon, lat, lon))))
    return float(np.mean(medians)) if medians else math.nan


# ---------------------------------------------------------------- reports

REPORT_COLUMNS = (
    "model", "alpha", "beta", "exposure_family", "k", "precision", "precision_active",
    "precision_inactive", "exp_longtail", "exp_shorthead", "gce_users", "gce_items",
    "mean_median_dist_km",
)


@dataclass(frozen=True)
class MetricsReport:
    model: str
    alpha: float
    beta: float
    exposure_family: str
    k: int
    precision: float
    precision_active: float
    precision_inactive: float
    exp_longtail: float
    exp_shorthead: float
    gce_users: object
    gce_items: object
    mean_median_dist_km: float

    def key(self) -> tuple:
        return (self.model, self.exposure_family, self.alpha, self.beta, self.k)

    def csv_row(self) -> list[str]:
        return [format_value(getattr(self, c)) for c in REPORT_COLUMNS]

    def as_dict(self) -> dict:
        out = {}
        for c in REPORT_COLUMNS:
            v = getattr(self, c)
            out[c] = str(v) if is_degenerate(v) else v
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2) + "\n"


def format_value(v) -> str:
    if is_degenerate(v):
        return "degenerate"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def evaluate(all_recs: Mapping[str, RecommendationList], train: Dataset, test: Dataset,
             groups: GroupAssignment, k: int, *, model: str = "", alpha: float = 0.0,
             beta: float = 0.0, exposure_family: str = "", centroids=None,
             hit_rate: bool = False) -> MetricsReport:
    """All report metrics for one set of lists cut at ``k``."""
    recs = {u: r.prefix(k) for u, r in all_recs.items()}
    per_user = per_user_precision(recs, test, k, hit_rate)
    active = set(groups.users_in(UserGroup.ACTIVE))

    def _mean(keys):
        vals = [per_user[u] for u in sorted(keys)]
        return float(np.mean(vals)) if vals else math.nan

    table = exposure_table(recs, train.poi_ids)
    try:
        g_users = gce(user_gain_distribution(recs, test, groups))
    except DegenerateDistributionError:
        g_users = DEGENERATE_GCE
    try:
        g_items = gce(item_gain_distribution(recs, groups))
    except DegenerateDistributionError:
        g_items = DEGENERATE_GCE
    centroids = train_centroids(train) if centroids is None else centroids
    return MetricsReport(
        model=model, alpha=float(alpha), beta=float(beta), exposure_family=exposure_family, k=int(k),
        precision=_mean(per_user),
        precision_active=_mean(set(per_user) & active),
        precision_inactive=_mean(set(per_user) - active),
        exp_longtail=group_mean_exposure(table, groups, ItemGroup.LONG_TAIL),
        exp_shorthead=group_mean_exposure(table, groups, ItemGroup.SHORT_HEAD),
        gce_users=g_users, gce_items=g_items,
        mean_median_dist_km=mean_median_distance(recs, centroids, train.pois),
    )


# ---------------------------------------------------------------- Pareto

@dataclass(frozen=True)
class ParetoPoint:
    label: str
    user_gce: float
    item_gce: float
    precision: float = math.nan
    extra: Mapping[str, object] = field(default_factory=dict, compare=False)


def dominates(a: ParetoPoint, b: ParetoPoint) -> bool:
    return (a.user_gce >= b.user_gce and a.item_gce >= b.item_gce
            and (a.user_gce > b.user_gce or a.item_gce > b.item_gce))


def pareto_front(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """Points not dominated when maximising (user_gce, item_gce); input order kept.

    Sort by user GCE descending (item GCE descending within ties) and sweep:
    a point survives when its item GCE beats everything seen at a strictly
    larger user GCE, and ties the best within its own user-GCE block.
    """
    if not points:
        return []
    order = sorted(range(len(points)), key=lambda i: (-points[i].user_gce, -points[i].item_gce))
    keep = set()
    best_prev = -math.inf  # best item GCE among strictly larger user GCE
    i = 0
    while i < len(order):
        j = i
        ug = points[order[i]].user_gce
        while j < len(order) and points[order[j]].user_gce == ug:
            j += 1
        block_best = points[order[i]].item_gce
        if block_best > best_prev:
            for idx in order[i:j]:
                if points[idx].item_gce == block_best:
                    keep.add(idx)
        best_prev = max(best_prev, block_best)
        i = j
    return [p for i, p in enumerate(points) if i in keep]
