"""Provider and consumer fairness factors and the fairness-aware re-scoring.

The provider factor F_p(p) comes from an exposure model fitted to the
training popularity histogram (how many POIs have exactly x check-ins) and
decreases with a POI's check-in count.  The consumer factor F_c(u, p) is the
normalised popularity of POIs close to an inactive user's past visits and is
zero for active users.  :func:`rescore` blends both into the base score:

    final = (base + alpha * F_p + beta * F_c) / (1 + alpha + beta)
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from . import kernels
from .corpus import Dataset, GroupAssignment, UserGroup
from .errors import ConfigError, FitError, UnknownEntityError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
NEARBY_PERCENTILE = 20


class ExposureFamily(str, Enum):
    POWERLAW = "powerlaw"
    LINEAR = "linear"
    LOGISTIC = "logistic"

    @classmethod
    def parse(cls, name) -> "ExposureFamily":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower().replace("_", "").replace("-", ""))
        except ValueError:
            raise ConfigError(f"unknown exposure family {name!r}; choose from powerlaw, linear, logistic") from None


@dataclass(frozen=True)
class PopularityHistogram:
    x: np.ndarray  # distinct check-in counts >= 1, increasing
    y: np.ndarray  # number of POIs with exactly that count
    zero_count: int = 0

    @classmethod
    def from_counts(cls, counts) -> "PopularityHistogram":
        counts = np.asarray(counts, dtype=np.int64)
        pos = counts[counts > 0]
        x, y = np.unique(pos, return_counts=True)
        return cls(x.astype(np.int64), y.astype(np.int64), int((counts == 0).sum()))

    @property
    def n_pois(self) -> int:
        return int(self.y.sum()) + self.zero_count

    @property
    def points(self) -> list[tuple[int, int]]:
        return [(int(a), int(b)) for a, b in zip(self.x, self.y)]


def build_popularity_histogram(train: Dataset) -> PopularityHistogram:
    return PopularityHistogram.from_counts(train.popularity_vector())


@dataclass(frozen=True)
class ExposureModel:
    """A fitted provider-score curve.

    ``params`` holds ``w0, w1`` (power law), ``a, b`` (linear) or
    ``intercept, slope`` of the logit in ``ln x`` (logistic).
    """

    family: ExposureFamily
    params: Mapping[str, float]
    score_ceiling: float
    x_min: int = 1

    def predict(self, x) -> np.ndarray:
        """Raw curve value at check-in count(s) ``x`` (zero treated as one)."""
        x = np.maximum(np.asarray(x, dtype=np.float64), 1.0)
        p = self.params
        if self.family is ExposureFamily.POWERLAW:
            return p["w0"] * x ** p["w1"]
        if self.family is ExposureFamily.LINEAR:
            return np.maximum(p["a"] + p["b"] * x, 0.0)
        z = p["intercept"] + p["slope"] * np.log(x)
        return 0.5 * (1.0 + np.tanh(0.5 * z))  # overflow-free sigmoid

    def to_dict(self) -> dict:
        return {
            "schema": "fairpoi.exposure",
            "version": SCHEMA_VERSION,
            "family": self.family.value,
            "params": {k: float(v) for k, v in self.params.items()},
            "score_ceiling": float(self.score_ceiling),
            "x_min": int(self.x_min),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExposureModel":
        if doc.get("schema") != "fairpoi.exposure" or doc.get("version") != SCHEMA_VERSION:
            raise ConfigError("not a version-1 exposure model document")
        return cls(ExposureFamily.parse(doc["family"]), dict(doc["params"]),
                   float(doc["score_ceiling"]), int(doc["x_min"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExposureModel":
        return cls.from_dict(json.loads(text))


def _require_spread(h: PopularityHistogram):
    if len(h.x) < 2:
        raise FitError("exposure fit needs at least two distinct check-in counts")


def _ridge_line(x: np.ndarray, y: np.ndarray, lam: float) -> tuple[float, float]:
    """Minimise sum (y - c - s x)^2 + lam s^2 with the intercept unpenalised."""
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    s = float(np.dot(dx, y - ym) / (np.dot(dx, dx) + lam))
    return float(ym - s * xm), s


def fit_power_law(h: PopularityHistogram, ridge_lambda: float = 10.0) -> ExposureModel:
    """Ridge fit of ``ln y = ln w0 + w1 ln x``.

    A positive slope would make the provider score reward popularity, so it
    is clipped to zero (flat curve) with a warning.
    """
    _require_spread(h)
    if ridge_lambda < 0:
        raise ConfigError("ridge_lambda must be >= 0")
    c, s = _ridge_line(np.log(h.x.astype(np.float64)), np.log(h.y.astype(np.float64)), ridge_lambda)
    if s > 0:
        logger.warning("power-law slope %.4g > 0; clipping to a flat curve", s)
        c, s = float(np.log(h.y.astype(np.float64)).mean()), 0.0
    x_min = int(h.x[0])
    w0 = math.exp(c)
    return ExposureModel(ExposureFamily.POWERLAW, {"w0": w0, "w1": s}, w0 * x_min ** s, x_min)


def fit_linear(h: PopularityHistogram) -> ExposureModel:
    """Least squares ``y = a + b x`` on the histogram points (b clipped at 0)."""
    _require_spread(h)
    x, y = h.x.astype(np.float64), h.y.astype(np.float64)
    a, b = _ridge_line(x, y, 0.0)
    if b > 0:
        logger.warning("linear slope %.4g > 0; clipping to a flat curve", b)
        a, b = float(y.mean()), 0.0
    x_min = int(h.x[0])
    ceiling = a + b * x_min
    if ceiling <= 0:
        raise FitError("linear exposure curve is non-positive at the least popular count")
    return ExposureModel(ExposureFamily.LINEAR, {"a": a, "b": b}, ceiling, x_min)


def _logistic_irls(feature, positives, totals, l2: float, max_iter: int = 100):
    """Weighted binary logistic regression on one feature by Newton steps.

    ``positives[i]`` of ``totals[i]`` samples at ``feature[i]`` are labelled 1.
    The slope carries an L2 penalty ``l2 / 2 * slope^2``; the intercept is free.
    """
    X = np.column_stack([np.ones_like(feature), feature])
    beta = np.zeros(2)
    pen = np.diag([0.0, l2])
    for _ in range(max_iter):
        z = X @ beta
        mu = 0.5 * (1.0 + np.tanh(0.5 * z))
        grad = X.T @ (positives - totals * mu) - pen @ beta
        w = totals * mu * (1.0 - mu)
        hess = X.T @ (X * w[:, None]) + pen
        step = np.linalg.solve(hess + 1e-12 * np.eye(2), grad)
        beta = beta + step
        if np.max(np.abs(step)) < 1e-12:
            break
    return float(beta[0]), float(beta[1])


def fit_logistic(h: PopularityHistogram, l2: float = 1.0) -> ExposureModel:
    """Long-tail membership classifier on ``ln(count)``.

    Each POI is one sample; the top 20% by count (rank order, as in
    :func:`fairpoi.corpus.assign_groups`) are labelled short-head (0) and
    the rest long-tail (1).  The score is the predicted long-tail
    probability.  Zero-count POIs enter with count 1.
    """
    _require_spread(h)
    xs, ys = h.x.copy(), h.y.copy()
    if h.zero_count and xs[0] == 1:
        ys[0] += h.zero_count
    elif h.zero_count:
        xs, ys = np.concatenate([[1], xs]), np.concatenate([[h.zero_count], ys])
    n = int(ys.sum())
    n_head = math.ceil(n / 5)
    # Walk counts from most popular down, labelling the first n_head samples short-head.
    head = np.zeros(len(xs), dtype=np.int64)
    left = n_head
    for i in range(len(xs) - 1, -1, -1):
        take = min(left, int(ys[i]))
        head[i] = take
        left -= take
    tail = ys - head
    if tail.sum() == 0 or head.sum() == 0:
        raise FitError("logistic exposure fit needs both long-tail and short-head POIs")
    intercept, slope = _logistic_irls(np.log(xs.astype(np.float64)), tail.astype(np.float64),
                                      ys.astype(np.float64), l2)
    if slope > 0:
        logger.warning("logistic slope %.4g > 0; clipping to a flat curve", slope)
        p = tail.sum() / n
        intercept, slope = math.log(p / (1 - p)), 0.0
    return ExposureModel(ExposureFamily.LOGISTIC, {"intercept": intercept, "slope": slope}, 1.0, int(xs[0]))


def fit_exposure(h: PopularityHistogram, family, ridge_lambda: float = 10.0) -> ExposureModel:
    family = ExposureFamily.parse(family)
    if family is ExposureFamily.POWERLAW:
        return fit_power_law(h, ridge_lambda)
    if family is ExposureFamily.LINEAR:
        return fit_linear(h)
    return fit_logistic(h)


def provider_score(m: ExposureModel, checkin_count):
    """F_p for one count or an array of counts; in [0, 1], non-increasing."""
    raw = m.predict(checkin_count)
    if m.family is ExposureFamily.LOGISTIC:
        out = raw
    else:
        out = np.clip(raw / m.score_ceiling, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- consumer side

def nearest_rank_percentile(values: np.ndarray, pct: float) -> float:
    """Smallest value with at least ``pct`` percent of the data at or below it."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if len(v) == 0:
        return math.nan
    rank = max(1, math.ceil(pct / 100.0 * len(v) - 1e-12))
    return float(v[rank - 1])


@dataclass(frozen=True)
class ConsumerContext:
    """Inputs of the consumer factor, indexed by ``poi_ids`` order.

    ``nearest_km[u]`` holds every POI's distance to the closest POI that
    inactive user ``u`` visited in training; ``threshold_km[u]`` is the 20th
    percentile of those distances over the user's candidates.
    """

    poi_ids: tuple
    popularity: np.ndarray  # min-max normalised train counts
    active: frozenset
    nearest_km: Mapping[str, np.ndarray] = field(repr=False)
    threshold_km: Mapping[str, float] = field(repr=False)

    @property
    def poi_index(self) -> dict:
        return {p: i for i, p in enumerate(self.poi_ids)}

    def scores_for(self, user_id: str) -> np.ndarray:
        """F_c of every POI (``poi_ids`` order) for one user."""
        if user_id in self.active:
            return np.zeros(len(self.poi_ids))
        if user_id not in self.nearest_km:
            raise UnknownEntityError("user", user_id)
        near = self.nearest_km[user_id] <= self.threshold_km[user_id]
        return np.where(near, self.popularity, 0.0)


def build_consumer_context(train: Dataset, groups: GroupAssignment, pois=None) -> ConsumerContext:
    """Precompute nearest-visit distances and nearby thresholds for inactive users."""
    poi_ids = train.poi_ids if pois is None else tuple(sorted(pois))
    index = {p: i for i, p in enumerate(poi_ids)}
    counts = train.poi_checkin_counts
    pop = np.array([counts.get(p, 0) for p in poi_ids], dtype=np.float64)
    span = pop.max() - pop.min()
    popularity = (pop - pop.min()) / span if span > 0 else np.zeros_like(pop)
    lat = np.array([train.pois[p].latitude for p in poi_ids])
    lon = np.array([train.pois[p].longitude for p in poi_ids])

    active = frozenset(u for u, g in groups.user_group.items() if g == UserGroup.ACTIVE)
    nearest, threshold = {}, {}
    visits = train.visits
    for user in sorted(groups.user_group):
        if user in active:
            continue
        seen = sorted({c.poi_id for c in visits.get(user, ())})
        assert seen, f"inactive user {user!r} has no training visits"
        idx = np.fromiter((index[p] for p in seen), dtype=np.int64)
        d = kernels.min_distance(lat, lon, lat[idx], lon[idx])
        d[idx] = 0.0
        cand = np.ones(len(poi_ids), dtype=bool)
        cand[idx] = False
        nearest[user] = d
        threshold[user] = nearest_rank_percentile(d[cand], NEARBY_PERCENTILE) if cand.any() else 0.0
    return ConsumerContext(poi_ids, popularity, active, nearest, threshold)


def consumer_score(ctx: ConsumerContext, user_id: str, poi_id: str) -> float:
    if user_id in ctx.active:
        return 0.0
    i = ctx.poi_index.get(poi_id)
    if i is None:
        raise UnknownEntityError("POI", poi_id)
    return float(ctx.scores_for(user_id)[i])


# ---------------------------------------------------------------- re-scoring

@dataclass(frozen=True)
class FairnessWeights:
    alpha: float = 0.0
    beta: float = 0.0
    exposure_family: ExposureFamily = ExposureFamily.LINEAR

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {v!r}")
        object.__setattr__(self, "exposure_family", ExposureFamily.parse(self.exposure_family))


def rescore(base, f_p, f_c, w: FairnessWeights):
    """Apply the fairness blend to ``ScoredCandidates`` (or a raw score array).

    ``f_p`` and ``f_c`` are aligned with the candidate order.  With
    ``alpha = beta = 0`` the scores come back bit-identical.
    """
    if not isinstance(w, FairnessWeights):
        raise ConfigError("weights must be a FairnessWeights instance")
    scores = getattr(base, "scores", base)
    scores = np.asarray(scores, dtype=np.float64)
    f_p = np.asarray(f_p, dtype=np.float64)
    f_c = np.asarray(f_c, dtype=np.float64)
    if f_p.shape != scores.shape or f_c.shape != scores.shape:
        raise ConfigError("fairness factor arrays must align with the candidates")
    final = (scores + w.alpha * f_p + w.beta * f_c) / (1.0 + w.alpha + w.beta)
    if hasattr(base, "with_scores"):
        return base.with_scores(final)
    return final
