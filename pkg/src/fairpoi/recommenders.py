"""Contextual baseline POI recommenders.

Four kinds are supported, each producing a raw score for every POI that is
then min-max normalised per user over the user's candidates (POIs not
visited in training):

Popularity
    Training check-in count.
USG
    ``(1 - w_s - w_g) * CF + w_s * SOC + w_g * GEO``.  CF is user-based
    collaborative filtering with cosine similarity on the binary visit
    matrix.  SOC is the same estimator with a similarity that averages the
    cosine and the Jaccard overlap of friend sets.  GEO uses a power law
    ``a * d**b`` fitted to the distances between POIs visited by the same
    user; a candidate scores the geometric mean of ``d**b`` over the user's
    visited POIs, divided by the best such mean.
GeoSoCa
    ``G * S * C``: a Gaussian kernel density over the user's visits
    (bandwidth by Scott's rule on the visit spread), friends' check-in
    counts (+1 smoothing), and category affinity times category popularity.
LORE
    ``SEQ * G * S``: a recency-weighted first-order additive Markov score
    whose transition matrix averages the user's own transitions and the
    global ones, times the same G and S as GeoSoCa.

Every component lies in [0, 1] and is floored at ``PROB_FLOOR`` before the
products so one zero factor cannot erase the others.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp

from . import kernels
from .corpus import Dataset, SocialGraph
from .errors import CapabilityError, ConfigError, DataError, FitError, UnknownEntityError

SCHEMA_VERSION = 1
PROB_FLOOR = 1e-12
CONSTANT_SCORE = 0.5
MIN_BANDWIDTH_KM = 0.5
DISTANCE_FLOOR_KM = 0.01
_GEO_BINS = np.geomspace(DISTANCE_FLOOR_KM, 20038.0, 61)


class ModelKind(str, Enum):
    USG = "USG"
    GEOSOCA = "GeoSoCa"
    LORE = "LORE"
    POPULARITY = "Popularity"

    @classmethod
    def parse(cls, name) -> "ModelKind":
        if isinstance(name, cls):
            return name
        for kind in cls:
            if kind.value.lower() == str(name).strip().lower():
                return kind
        raise ConfigError(f"unknown model kind {name!r}; choose from {', '.join(k.value for k in cls)}")


DEFAULT_PARAMS = {
    ModelKind.POPULARITY: {},
    ModelKind.USG: {"social_weight": 0.1, "geo_weight": 0.1},
    ModelKind.GEOSOCA: {"require_categories": True},
    ModelKind.LORE: {"recency_decay": 0.5},
}


@dataclass(frozen=True)
class CheckinMatrix:
    user_ids: tuple
    poi_ids: tuple
    counts: sp.csr_matrix

    @property
    def binary(self) -> sp.csr_matrix:
        b = self.counts.copy()
        b.data = (b.data > 0).astype(np.float64)
        b.eliminate_zeros()
        return b


def build_checkin_matrix(train: Dataset) -> CheckinMatrix:
    ui, pi = train.user_index, train.poi_index
    rows = np.fromiter((ui[c.user_id] for c in train.checkins), dtype=np.int64, count=len(train.checkins))
    cols = np.fromiter((pi[c.poi_id] for c in train.checkins), dtype=np.int64, count=len(train.checkins))
    m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(ui), len(pi)))
    m.sum_duplicates()
    return CheckinMatrix(train.user_ids, train.poi_ids, m)


@dataclass(frozen=True)
class ScoredCandidates:
    user_id: str
    poi_ids: tuple
    scores: np.ndarray
    indices: np.ndarray  # positions in the dataset's poi_ids

    @property
    def entries(self) -> list[tuple[str, float]]:
        return list(zip(self.poi_ids, map(float, self.scores)))

    def with_scores(self, scores) -> "ScoredCandidates":
        return ScoredCandidates(self.user_id, self.poi_ids, np.asarray(scores, dtype=np.float64), self.indices)

    def __len__(self):
        return len(self.poi_ids)


@dataclass(frozen=True)
class RecommendationList:
    user_id: str
    poi_ids: tuple
    scores: tuple
    k: int
    indices: tuple = ()

    @property
    def short(self) -> bool:
        return len(self.poi_ids) < self.k

    def __len__(self):
        return len(self.poi_ids)

    def prefix(self, k: int) -> "RecommendationList":
        return RecommendationList(self.user_id, self.poi_ids[:k], self.scores[:k], k, self.indices[:k])


def top_k(s: ScoredCandidates, k: int) -> RecommendationList:
    """Highest scores first, ties by ascending poi_id; shorter than k only
    when there are fewer candidates."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    # Candidates arrive in poi_id order, so a stable sort settles ties by id.
    order = np.argsort(-s.scores, kind="stable")[:k]
    return RecommendationList(
        s.user_id,
        tuple(s.poi_ids[i] for i in order),
        tuple(float(s.scores[i]) for i in order),
        k,
        tuple(int(s.indices[i]) for i in order),
    )


def minmax_normalise(raw: np.ndarray) -> np.ndarray:
    if raw.size == 0:
        return raw.astype(np.float64)
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.full(raw.shape, CONSTANT_SCORE)
    return (raw - lo) / (hi - lo)


def train_fingerprint(train: Dataset) -> str:
    h = hashlib.sha256()
    for c in sorted(train.checkins, key=lambda c: (c.user_id, c.timestamp, c.poi_id)):
        h.update(f"{c.user_id}\t{c.poi_id}\t{c.timestamp}\n".encode())
    for a, b in sorted(train.social.edges):
        h.update(f"{a}\t{b}\n".encode())
    return h.hexdigest()


@dataclass(frozen=True)
class BaseModel:
    """A trained recommender.  ``fitted`` holds the learned values that the
    JSON document stores; ``state`` holds structures re-derived from the
    training data (not serialised)."""

    kind: ModelKind
    params: Mapping[str, object]
    fitted: Mapping[str, object]
    train: Dataset = field(repr=False)
    state: Mapping[str, object] = field(repr=False, compare=False)

    # -- scoring
    def raw_scores(self, user_id: str) -> np.ndarray:
        u = self.train.user_index.get(user_id)
        if u is None:
            raise UnknownEntityError("user", user_id)
        return _SCORERS[self.kind](self, u)

    def visited_mask(self, user_id: str) -> np.ndarray:
        u = self.train.user_index[user_id]
        counts = self.state["matrix"].counts
        mask = np.zeros(counts.shape[1], dtype=bool)
        mask[counts.indices[counts.indptr[u]:counts.indptr[u + 1]]] = True
        return mask

    # -- serialisation
    def to_dict(self) -> dict:
        return {
            "schema": "fairpoi.model",
            "version": SCHEMA_VERSION,
            "kind": self.kind.value,
            "params": dict(self.params),
            "fitted": {k: _jsonable(v) for k, v in self.fitted.items()},
            "train_fingerprint": self.state["fingerprint"],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict, train: Dataset, social: Optional[SocialGraph] = None) -> "BaseModel":
        if doc.get("schema") != "fairpoi.model" or doc.get("version") != SCHEMA_VERSION:
            raise ConfigError("not a version-1 model document")
        train = _with_social(train, social)
        if doc["train_fingerprint"] != train_fingerprint(train):
            raise DataError("model document was trained on different data")
        kind = ModelKind.parse(doc["kind"])
        fitted = {k: np.asarray(v, dtype=np.float64) if isinstance(v, list) else v
                  for k, v in doc["fitted"].items()}
        return cls(kind, dict(doc["params"]), fitted, train, _build_state(kind, train, doc["params"]))

    @classmethod
    def from_json(cls, text: str, train: Dataset, social: Optional[SocialGraph] = None) -> "BaseModel":
        return cls.from_dict(json.loads(text), train, social)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [float(x) for x in v]
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def _with_social(train: Dataset, social: Optional[SocialGraph]) -> Dataset:
    if social is None or social == train.social:
        return train
    return Dataset(train.users, train.pois, train.checkins, social.restrict(train.users))


# ---------------------------------------------------------------- training

def train(kind, train: Dataset, social: Optional[SocialGraph] = None, params: Optional[dict] = None) -> BaseModel:
    """Fit a base recommender on the training split only."""
    kind = ModelKind.parse(kind)
    foreign = {c.split for c in train.checkins} - {None, "train"}
    if foreign:
        raise DataError(f"training data contains check-ins from {sorted(foreign)} splits")
    if not train.checkins:
        raise DataError("cannot train on an empty dataset")
    merged = dict(DEFAULT_PARAMS[kind])
    for key, value in (params or {}).items():
        if key not in merged:
            raise ConfigError(f"{kind.value} has no parameter {key!r}")
        merged[key] = value
    train = _with_social(train, social)
    if kind is ModelKind.USG:
        ws, wg = float(merged["social_weight"]), float(merged["geo_weight"])
        if ws < 0 or wg < 0 or ws + wg > 1:
            raise ConfigError("USG weights must be non-negative with social_weight + geo_weight <= 1")
    if kind is ModelKind.GEOSOCA and merged["require_categories"] and not train.has_categories:
        raise CapabilityError("GeoSoCa needs POI categories; the dataset has none "
                              "(set require_categories=false to use a neutral category factor)")
    state = _build_state(kind, train, merged)
    fitted = {}
    if kind is ModelKind.USG:
        fitted.update(_fit_distance_power_law(train, state))
    if kind in (ModelKind.GEOSOCA, ModelKind.LORE):
        fitted["bandwidth_km"] = _fit_bandwidths(train, state)
    return BaseModel(kind, merged, fitted, train, state)


def _build_state(kind: ModelKind, train: Dataset, params) -> dict:
    mat = build_checkin_matrix(train)
    lat, lon = train.coordinates
    state = {"matrix": mat, "lat": lat, "lon": lon, "fingerprint": train_fingerprint(train)}
    counts = mat.counts
    if kind is ModelKind.POPULARITY:
        state["popularity"] = np.asarray(counts.sum(axis=0)).ravel()
        return state
    state["friends"] = _friend_matrix(train)
    if kind is ModelKind.USG:
        b = mat.binary
        state["binary"] = b
        state["binary_t"] = b.T.tocsr()
        state["norms"] = np.sqrt(np.asarray(b.sum(axis=1)).ravel())
        state["degree"] = np.asarray(state["friends"].sum(axis=1)).ravel()
        state["has_social"] = len(train.social) > 0
    if kind is ModelKind.GEOSOCA:
        cats = [train.pois[p].category_id for p in train.poi_ids]
        names = sorted({c for c in cats if c is not None})
        state["use_categories"] = bool(names)
        if names:
            lookup = {c: i for i, c in enumerate(names)}
            n_cat = len(names) + 1  # last slot: POIs without a category
            cat = np.array([lookup.get(c, n_cat - 1) for c in cats], dtype=np.int64)
            onehot = sp.csr_matrix((np.ones(len(cat)), (np.arange(len(cat)), cat)), shape=(len(cat), n_cat))
            per_user = (counts @ onehot).toarray()  # users x categories
            total = per_user.sum(axis=0)
            state["category"] = cat
            state["category_counts"] = per_user
            state["category_popularity"] = (total + 1.0) / (total.sum() + n_cat)
    if kind is ModelKind.LORE:
        state["sequences"] = _sequences(train)
        state["transitions"] = _transition_matrix(state["sequences"], len(train.poi_ids))
    return state


def _friend_matrix(train: Dataset) -> sp.csr_matrix:
    ui = train.user_index
    n = len(ui)
    if not train.social.edges:
        return sp.csr_matrix((n, n))
    a = np.array([ui[x] for x, _ in sorted(train.social.edges)])
    b = np.array([ui[y] for _, y in sorted(train.social.edges)])
    rows, cols = np.concatenate([a, b]), np.concatenate([b, a])
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def _user_visits(state, u: int) -> tuple[np.ndarray, np.ndarray]:
    counts = state["matrix"].counts
    lo, hi = counts.indptr[u], counts.indptr[u + 1]
    return counts.indices[lo:hi], counts.data[lo:hi]


def _fit_distance_power_law(train: Dataset, state) -> dict:
    """Fit ``density(d) = a * d**b`` to same-user visited-POI distances on log bins."""
    lat, lon = state["lat"], state["lon"]
    hist = np.zeros(len(_GEO_BINS) - 1)
    for u in range(len(train.user_ids)):
        idx, _ = _user_visits(state, u)
        if len(idx) < 2:
            continue
        d = np.maximum(kernels.pairwise_within(lat[idx], lon[idx]), DISTANCE_FLOOR_KM)
        hist += np.histogram(d, bins=_GEO_BINS)[0]
    widths = np.diff(_GEO_BINS)
    centres = np.sqrt(_GEO_BINS[:-1] * _GEO_BINS[1:])
    keep = hist > 0
    if keep.sum() < 2:
        # Too little spread to fit; a flat curve makes GEO neutral.
        return {"geo_a": 1.0, "geo_b": 0.0}
    density = hist[keep] / (hist.sum() * widths[keep])
    x, y = np.log(centres[keep]), np.log(density)
    xm, ym = x.mean(), y.mean()
    b = float(np.dot(x - xm, y - ym) / np.dot(x - xm, x - xm))
    a = float(math.exp(ym - b * xm))
    if b > 0:
        raise FitError(f"distance power law has positive exponent {b:.3g}")
    return {"geo_a": a, "geo_b": b}


def _fit_bandwidths(train: Dataset, state) -> np.ndarray:
    """Per-user Gaussian KDE bandwidth in km (Scott's rule, 2-D)."""
    lat, lon = state["lat"], state["lon"]
    out = np.empty(len(train.user_ids))
    for u in range(len(train.user_ids)):
        idx, w = _user_visits(state, u)
        if len(idx) == 0:
            out[u] = MIN_BANDWIDTH_KM
            continue
        w = w / w.sum()
        la, lo = lat[idx], lon[idx]
        mlat = float(np.dot(w, la))
        mlon = float(np.dot(w, lo))
        y = (la - mlat) * 111.195
        x = (lo - mlon) * 111.195 * math.cos(math.radians(mlat))
        sigma = math.sqrt(0.5 * (np.dot(w, x * x) + np.dot(w, y * y)))
        n_eff = float(state["matrix"].counts[u].sum())
        out[u] = max(sigma * n_eff ** (-1.0 / 6.0), MIN_BANDWIDTH_KM)
    return out


def _sequences(train: Dataset) -> list[np.ndarray]:
    pi = train.poi_index
    visits = train.visits
    return [np.array([pi[c.poi_id] for c in visits.get(u, ())], dtype=np.int64) for u in train.user_ids]


def _row_normalise(m: sp.csr_matrix) -> sp.csr_matrix:
    sums = np.asarray(m.sum(axis=1)).ravel()
    inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    return sp.diags(inv) @ m


def _transitions(seqs, n_pois: int) -> sp.csr_matrix:
    src = [s[:-1] for s in seqs if len(s) > 1]
    dst = [s[1:] for s in seqs if len(s) > 1]
    if not src:
        return sp.csr_matrix((n_pois, n_pois))
    src, dst = np.concatenate(src), np.concatenate(dst)
    m = sp.csr_matrix((np.ones(len(src)), (src, dst)), shape=(n_pois, n_pois))
    m.sum_duplicates()
    return m


def _transition_matrix(seqs, n_pois: int) -> sp.csr_matrix:
    return _row_normalise(_transitions(seqs, n_pois)).tocsr()


# ---------------------------------------------------------------- components

def _floor(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, PROB_FLOOR)


def _cf_estimate(sim: np.ndarray, state) -> np.ndarray:
    total = sim.sum()
    if total <= 0:
        return np.zeros(state["binary"].shape[1])
    return np.asarray(state["binary_t"] @ sim).ravel() / total


def cosine_similarity_row(state, u: int) -> np.ndarray:
    b = state["binary"]
    dots = np.asarray(b @ b[u].T.toarray()).ravel()
    norms = state["norms"]
    denom = norms * norms[u]
    sim = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
    sim[u] = 0.0
    return sim


def jaccard_friends_row(state, u: int) -> np.ndarray:
    f = state["friends"]
    inter = np.asarray(f @ f[u].T.toarray()).ravel()
    deg = state["degree"]
    union = deg + deg[u] - inter
    jac = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)
    jac[u] = 0.0
    return jac


def usg_components(m: BaseModel, u: int) -> dict[str, np.ndarray]:
    st = m.state
    cos = cosine_similarity_row(st, u)
    cf = _cf_estimate(cos, st)
    if st["has_social"]:
        soc = _cf_estimate(0.5 * cos + 0.5 * jaccard_friends_row(st, u), st)
    else:
        soc = np.zeros_like(cf)
    idx, _ = _user_visits(st, u)
    b = float(m.fitted["geo_b"])
    if len(idx) == 0 or b == 0.0:
        geo = np.ones_like(cf)
    else:
        mlog = kernels.mean_log_distance(st["lat"], st["lon"], st["lat"][idx], st["lon"][idx], DISTANCE_FLOOR_KM)
        score = b * mlog
        geo = np.exp(score - score.max())
    return {"cf": cf, "soc": soc, "geo": geo}


def kde_component(m: BaseModel, u: int) -> np.ndarray:
    st = m.state
    idx, w = _user_visits(st, u)
    if len(idx) == 0:
        return np.ones(len(st["lat"]))
    h = float(m.fitted["bandwidth_km"][u])
    logd = kernels.kde_log_density(st["lat"], st["lon"], st["lat"][idx], st["lon"][idx], w, h)
    return _floor(np.exp(logd - logd.max()))


def social_component(m: BaseModel, u: int) -> np.ndarray:
    st = m.state
    friends = st["friends"][u]
    s = np.asarray((friends @ st["matrix"].counts).todense()).ravel()
    return _floor((s + 1.0) / (s.max() + 1.0))


def category_component(m: BaseModel, u: int) -> np.ndarray:
    st = m.state
    if not st.get("use_categories"):
        return np.ones(len(st["lat"]))
    per_user = st["category_counts"][u]
    affinity = (per_user + 1.0) / (per_user.sum() + len(per_user))
    cat = st["category"]
    c = affinity[cat] * st["category_popularity"][cat]
    return _floor(c / c.max())


def sequence_component(m: BaseModel, u: int) -> np.ndarray:
    st = m.state
    seq = st["sequences"][u]
    n_pois = len(st["lat"])
    if len(seq) == 0:
        return np.ones(n_pois)
    decay = float(m.params["recency_decay"])
    weights = 2.0 ** (-decay * (len(seq) - 1 - np.arange(len(seq))))
    source = np.bincount(seq, weights=weights, minlength=n_pois)
    personal = _transition_matrix([seq], n_pois)
    blended = 0.5 * personal + 0.5 * st["transitions"]
    score = np.asarray(blended.T @ source).ravel() / weights.sum()
    top = score.max()
    if top <= 0:
        return np.ones(n_pois)
    return _floor(score / top)


def _score_popularity(m: BaseModel, u: int) -> np.ndarray:
    return m.state["popularity"].astype(np.float64)


def _score_usg(m: BaseModel, u: int) -> np.ndarray:
    c = usg_components(m, u)
    ws, wg = float(m.params["social_weight"]), float(m.params["geo_weight"])
    return (1.0 - ws - wg) * c["cf"] + ws * c["soc"] + wg * c["geo"]


def _score_geosoca(m: BaseModel, u: int) -> np.ndarray:
    return kde_component(m, u) * social_component(m, u) * category_component(m, u)


def _score_lore(m: BaseModel, u: int) -> np.ndarray:
    return sequence_component(m, u) * kde_component(m, u) * social_component(m, u)


_SCORERS = {
    ModelKind.POPULARITY: _score_popularity,
    ModelKind.USG: _score_usg,
    ModelKind.GEOSOCA: _score_geosoca,
    ModelKind.LORE: _score_lore,
}


def score_candidates(m: BaseModel, user_id: str) -> ScoredCandidates:
    """Normalised base scores for every POI the user did not visit in training."""
    raw = m.raw_scores(user_id)
    cand = np.flatnonzero(~m.visited_mask(user_id))
    poi_ids = m.train.poi_ids
    return ScoredCandidates(
        user_id,
        tuple(poi_ids[i] for i in cand),
        minmax_normalise(raw[cand]),
        cand,
    )
