import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairpoi.corpus import ItemGroup, UserGroup, assign_groups, chronological_split
from fairpoi.errors import ConfigError, DataError
from fairpoi.metrics import (DEGENERATE_GCE, FairDistribution, MetricDistribution, ParetoPoint, dominates, evaluate,
                             exposure_table, gce, group_mean_exposure, haversine_km, is_degenerate,
                             item_gain_distribution, mean_median_distance, pareto_front, precision_at_k,
                             user_centroid, user_gain_distribution)
from fairpoi.recommenders import RecommendationList, score_candidates, top_k

GROUPS = ("A", "B")


def _rec(u, ids, k=None):
    return RecommendationList(u, tuple(ids), tuple(1.0 for _ in ids), k or len(ids))


# ---------------------------------------------------------------- precision

def test_precision_examples():
    r = _rec("u", ["a", "b", "c", "d"])
    assert precision_at_k(r, {"b", "z"}, 4) == 0.25
    assert precision_at_k(r, {"b", "z"}, 2) == 0.5
    assert precision_at_k(r, {"z"}, 4) == 0.0
    assert precision_at_k(r, {"b", "c"}, 4, hit_rate=True) == 1.0
    # a short list still divides by k
    assert precision_at_k(_rec("u", ["a"], 5), {"a"}, 5) == 0.2
    with pytest.raises(ConfigError):
        precision_at_k(r, set(), 0)


# ---------------------------------------------------------------- exposure

@settings(max_examples=60)
@given(st.lists(st.lists(st.sampled_from("abcdefgh"), min_size=3, max_size=3, unique=True), min_size=1,
                max_size=20))
def test_exposure_conservation(lists):
    recs = {f"u{i}": _rec(f"u{i}", ids) for i, ids in enumerate(lists)}
    t = exposure_table(recs, "abcdefghij")
    assert t.total == 3 * len(lists)
    assert t.counts["j"] == 0
    assert t.vector("ab").sum() == sum(("a" in ids) + ("b" in ids) for ids in lists)


def test_group_mean_exposure(tiny):
    g = assign_groups(tiny)
    t = exposure_table({"x": _rec("x", ["a", "f"]), "y": _rec("y", ["f"])}, tiny.poi_ids)
    head = g.pois_in(ItemGroup.SHORT_HEAD)
    tail = g.pois_in(ItemGroup.LONG_TAIL)
    assert group_mean_exposure(t, g, ItemGroup.SHORT_HEAD) == sum(t.counts[p] for p in head) / len(head)
    assert group_mean_exposure(t, g, ItemGroup.LONG_TAIL) == sum(t.counts[p] for p in tail) / len(tail)


# ---------------------------------------------------------------- GCE

def test_gce_hand_value():
    pm = MetricDistribution(GROUPS, (0.8, 0.2), 1.0)
    assert abs(gce(pm, FairDistribution(GROUPS, (0.5, 0.5))) - (-0.28125)) <= 1e-12


@given(st.floats(0.001, 0.999))
def test_gce_zero_on_match_and_non_positive(p):
    pm = MetricDistribution(GROUPS, (p, 1 - p), 1.0)
    assert abs(gce(pm, FairDistribution(GROUPS, (p, 1 - p)))) <= 1e-12
    assert gce(pm) <= 1e-15


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.sampled_from([0.5, 2.0, 3.0]))
def test_gce_matches_formula(p, q, order):
    pm = MetricDistribution(GROUPS, (p, 1 - p), 1.0)
    pf = FairDistribution(GROUPS, (q, 1 - q))
    want = (q ** order * p ** (1 - order) + (1 - q) ** order * (1 - p) ** (1 - order) - 1) / (order * (1 - order))
    assert gce(pm, pf, order) == pytest.approx(want, rel=1e-12, abs=1e-15)


def test_gce_degenerate_and_errors():
    pm = MetricDistribution(GROUPS, (1.0, 0.0), 1.0)
    g = gce(pm)
    assert g is DEGENERATE_GCE and is_degenerate(g) and str(g) == "degenerate"
    with pytest.raises(ConfigError):
        gce(MetricDistribution(GROUPS, (0.5, 0.5), 1.0), order=1.0)
    with pytest.raises(ConfigError):
        MetricDistribution(GROUPS, (0.5, 0.6), 1.0)


def test_gain_distributions(tiny):
    s = chronological_split(tiny)
    g = assign_groups(s.train)
    test_targets = {u: {c.poi_id for c in cs} for u, cs in s.test.visits.items()}
    recs = {u: _rec(u, sorted(test_targets[u])) for u in s.train.user_ids}
    ud = user_gain_distribution(recs, s.test, g)
    active = sum(len(test_targets[u]) for u in g.users_in(UserGroup.ACTIVE))
    assert ud.groups == (UserGroup.ACTIVE, UserGroup.INACTIVE)
    assert ud.masses[0] == pytest.approx(active / ud.normaliser)
    idist = item_gain_distribution(recs, g)
    assert sum(idist.masses) == pytest.approx(1.0)


# ---------------------------------------------------------------- distance

def test_haversine_known_values():
    # one degree of latitude, and a quarter meridian
    assert haversine_km(0, 0, 1, 0) == pytest.approx(6371.0088 * math.pi / 180)
    assert haversine_km(0, 0, 90, 0) == pytest.approx(6371.0088 * math.pi / 2)
    assert haversine_km(10, 170, 10, -170) == pytest.approx(haversine_km(10, -10, 10, 10))


def test_centroid_and_median_distance(tiny):
    c = user_centroid(["a", "a", "c"], tiny.pois)
    assert c == (pytest.approx(40.01), pytest.approx(-100.0))
    with pytest.raises(DataError):
        user_centroid([], tiny.pois)
    cents = {"x": (40.0, -100.0)}
    recs = {"x": _rec("x", ["a", "d", "e"])}
    want = np.median([haversine_km(40, -100, tiny.pois[p].latitude, tiny.pois[p].longitude) for p in "ade"])
    assert mean_median_distance(recs, cents, tiny.pois) == pytest.approx(want)


def test_antimeridian_warning(tiny, caplog):
    from fairpoi.corpus import Poi
    pois = {"w": Poi("w", 0, 179.0), "e": Poi("e", 0, -179.0)}
    user_centroid(["w", "e"], pois)
    assert "antimeridian" in caplog.text


# ---------------------------------------------------------------- evaluate

def test_evaluate_report(fixture_split, fixture_groups, fixture_models):
    m = fixture_models["USG"]
    recs = {u: top_k(score_candidates(m, u), 10) for u in fixture_split.train.user_ids}
    r = evaluate(recs, fixture_split.train, fixture_split.test, fixture_groups, 10, model="USG")
    n_head = len(fixture_groups.pois_in(ItemGroup.SHORT_HEAD))
    n_tail = len(fixture_groups.pois_in(ItemGroup.LONG_TAIL))
    assert r.exp_longtail * n_tail + r.exp_shorthead * n_head == pytest.approx(10 * len(recs))
    assert 0 <= r.precision <= 1 and r.mean_median_dist_km > 0
    assert r.key() == ("USG", "", 0.0, 0.0, 10)
    assert len(r.csv_row()) == 13


# ---------------------------------------------------------------- Pareto

def brute_front(points):
    return [p for p in points if not any(dominates(q, p) for q in points)]


@settings(max_examples=150)
@given(st.lists(st.tuples(st.integers(-5, 0), st.integers(-5, 0)), min_size=0, max_size=40))
def test_pareto_matches_quadratic_oracle_with_ties(coords):
    pts = [ParetoPoint(f"p{i}", float(a), float(b)) for i, (a, b) in enumerate(coords)]
    assert pareto_front(pts) == brute_front(pts)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(-10, 0), st.floats(-10, 0)), min_size=1, max_size=60))
def test_pareto_front_properties(coords):
    pts = [ParetoPoint(f"p{i}", a, b) for i, (a, b) in enumerate(coords)]
    front = pareto_front(pts)
    assert front
    for p, q in itertools.combinations(front, 2):
        assert not dominates(p, q) and not dominates(q, p)
    assert pareto_front(front) == front
