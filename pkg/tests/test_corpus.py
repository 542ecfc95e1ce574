import math
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairpoi.corpus import (CheckIn, Dataset, ItemGroup, Poi, SocialGraph, SyntheticConfig, UserGroup,
                            assign_groups, chronological_split, dataset_stats, filter_sparse,
                            generate_synthetic, load_dataset, load_split, write_dataset, write_split)
from fairpoi.errors import (ConfigError, DataError, EmptyDatasetError, ParseError, UnknownEntityError)


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------- ingestion

def test_load_with_headers_and_iso_timestamps(tmp_path):
    ck = _write(tmp_path / "c.tsv", "user\tpoi\ttime\nu1\tp1\t2020-01-01T00:00:00Z\nu2\tp1\t60\n")
    po = _write(tmp_path / "p.tsv", "poi\tlat\tlon\tcat\np1\t40.0\t-100.0\tfood\n")
    so = _write(tmp_path / "s.tsv", "a\tb\nu1\tu2\nu1\tghost\n")
    d = load_dataset(ck, po, so)
    assert d.user_ids == ("u1", "u2")
    assert [c.timestamp for c in d.checkins] == [1577836800, 60]
    assert len(d.social) == 1 and d.social.friends("u1") == {"u2"}
    assert d.pois["p1"].category_id == "food"


def test_comma_delimiter(tmp_path):
    ck = _write(tmp_path / "c.csv", "u1,p1,5\n")
    po = _write(tmp_path / "p.csv", "p1,1.5,2.5\n")
    d = load_dataset(ck, po, delimiter="comma")
    assert d.pois["p1"].latitude == 1.5 and d.pois["p1"].category_id is None


def test_parse_error_names_line_and_column(tmp_path):
    ck = _write(tmp_path / "c.tsv", "u1\tp1\t5\nu1\tp1\tnot-a-time\n")
    po = _write(tmp_path / "p.tsv", "p1\t40\t-100\n")
    with pytest.raises(ParseError) as err:
        load_dataset(ck, po)
    assert (err.value.line, err.value.column) == (2, 3)


@pytest.mark.parametrize("row,column", [("p1\t95\t0", 2), ("p1\t0\t181", 3), ("p1\t0", 3)])
def test_bad_poi_rows(tmp_path, row, column):
    ck = _write(tmp_path / "c.tsv", "u1\tp1\t5\n")
    po = _write(tmp_path / "p.tsv", f"p0\t1\t1\n{row}\n")
    with pytest.raises(ParseError) as err:
        load_dataset(ck, po)
    assert err.value.line == 2 and err.value.column == column


def test_unknown_poi_reference(tmp_path):
    ck = _write(tmp_path / "c.tsv", "u1\tp9\t5\n")
    po = _write(tmp_path / "p.tsv", "p1\t40\t-100\n")
    with pytest.raises(UnknownEntityError):
        load_dataset(ck, po)


def test_write_load_roundtrip(tmp_path, tiny):
    write_dataset(tiny, tmp_path)
    back = load_dataset(tmp_path / "checkins.tsv", tmp_path / "pois.tsv", tmp_path / "social.tsv")
    assert sorted(back.checkins) == sorted(tiny.checkins)
    assert back.pois == tiny.pois and back.social == tiny.social


# ---------------------------------------------------------------- filtering

def brute_force_filter(pairs, min_u, min_p):
    """Remove one violating entity at a time until nothing violates."""
    pairs = set(pairs)
    while True:
        visitors = Counter(p for _, p in pairs)
        breadth = Counter(u for u, _ in pairs)
        bad_p = sorted(p for p, n in visitors.items() if n < min_u)
        bad_u = sorted(u for u, n in breadth.items() if n < min_p)
        if bad_u:
            pairs = {(u, p) for u, p in pairs if u != bad_u[0]}
        elif bad_p:
            pairs = {(u, p) for u, p in pairs if p != bad_p[0]}
        else:
            return pairs


def _dataset_from_pairs(pairs):
    pois = {p: Poi(p, 0.0, 0.0) for _, p in pairs}
    checkins = tuple(CheckIn(u, p, i) for i, (u, p) in enumerate(pairs))
    return Dataset(frozenset(u for u, _ in pairs), pois, checkins, SocialGraph())


pair_lists = st.lists(st.tuples(st.sampled_from([f"u{i}" for i in range(8)]),
                                st.sampled_from([f"p{i}" for i in range(8)])), min_size=1, max_size=60)


@settings(max_examples=150)
@given(pairs=pair_lists, min_u=st.integers(1, 4), min_p=st.integers(1, 4))
def test_filter_matches_brute_force_fixpoint(pairs, min_u, min_p):
    want = brute_force_filter(pairs, min_u, min_p)
    d = _dataset_from_pairs(pairs)
    if not want:
        with pytest.raises(EmptyDatasetError):
            filter_sparse(d, min_u, min_p)
        return
    got = filter_sparse(d, min_u, min_p)
    assert {(c.user_id, c.poi_id) for c in got.checkins} == want
    # idempotent, and repeat visits survive with their pair
    again = filter_sparse(got, min_u, min_p)
    assert again.checkins == got.checkins
    assert len(got.checkins) == sum(1 for pr in pairs if pr in want)


def test_filter_everything_removed(tiny):
    with pytest.raises(EmptyDatasetError, match="fully filtered"):
        filter_sparse(tiny, 10, 10)


# ---------------------------------------------------------------- split

def expected_sizes(n):
    tr = math.ceil(0.7 * n - 1e-9)
    va = min(math.ceil(0.2 * n - 1e-9), n - tr - 1)
    return tr, va, n - tr - va


@pytest.mark.parametrize("n,sizes", [(10, (7, 2, 1)), (11, (8, 2, 1)), (16, (12, 3, 1)), (20, (14, 4, 2))])
def test_split_sizes(n, sizes):
    d = _dataset_from_pairs([("u", f"p{i % 3}") for i in range(n)])
    s = chronological_split(d)
    assert (len(s.train.checkins), len(s.validation.checkins), len(s.test.checkins)) == sizes


@settings(max_examples=60)
@given(st.dictionaries(st.sampled_from(["a", "b", "c", "d"]), st.lists(st.integers(0, 50), min_size=4, max_size=40),
                       min_size=1))
def test_split_is_chronological_and_complete(times):
    checkins = tuple(CheckIn(u, f"p{t % 5}", t) for u, ts in times.items() for t in ts)
    d = Dataset(frozenset(times), {f"p{i}": Poi(f"p{i}", 0, 0) for i in range(5)}, checkins, SocialGraph())
    s = chronological_split(d)
    for u, ts in times.items():
        parts = [[c for c in part.checkins if c.user_id == u] for part in (s.train, s.validation, s.test)]
        assert [len(p) for p in parts] == list(expected_sizes(len(ts)))
        keys = [[(c.timestamp, c.poi_id) for c in p] for p in parts]
        flat = keys[0] + keys[1] + keys[2]
        assert flat == sorted(flat)
    assert {c.split for c in s.train.checkins} == {"train"}
    assert {c.split for c in s.test.checkins} == {"test"}


@pytest.mark.parametrize("n", [1, 2, 3])
def test_split_rejects_users_whose_train_ceiling_takes_everything(n):
    d = _dataset_from_pairs([("u", f"p{i}") for i in range(n)])
    with pytest.raises(DataError):
        chronological_split(d)


def test_split_fraction_validation(tiny):
    with pytest.raises(ConfigError):
        chronological_split(tiny, (0.5, 0.5, 0.5))


def test_split_roundtrip(tmp_path, tiny):
    s = chronological_split(tiny)
    write_split(s, tmp_path)
    back = load_split(tmp_path)
    for a, b in zip((s.train, s.validation, s.test), (back.train, back.validation, back.test)):
        assert sorted(a.checkins) == sorted(b.checkins)


# ---------------------------------------------------------------- groups / stats

@settings(max_examples=60)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=30))
def test_group_sizes_are_ceil_fifth(counts):
    checkins = tuple(CheckIn(f"u{i:02d}", f"p{i:02d}", j) for i, n in enumerate(counts) for j in range(n))
    d = _dataset_from_pairs([(c.user_id, c.poi_id) for c in checkins])
    g = assign_groups(d)
    n = len(counts)
    assert len(g.users_in(UserGroup.ACTIVE)) == math.ceil(n / 5)
    assert len(g.pois_in(ItemGroup.SHORT_HEAD)) == math.ceil(n / 5)
    # every active user has at least as many check-ins as every inactive one
    uc = d.user_checkin_counts
    lo = min(uc[u] for u in g.users_in(UserGroup.ACTIVE))
    assert all(uc[u] <= lo for u in g.users_in(UserGroup.INACTIVE))


def test_group_ties_break_on_id():
    d = _dataset_from_pairs([(f"u{i}", "p") for i in range(5)])
    g = assign_groups(d)
    assert g.users_in(UserGroup.ACTIVE) == ["u0"]


def test_stats_add_up(fixture_data):
    g = assign_groups(fixture_data)
    s = dataset_stats(fixture_data, g)
    assert s.active_users + s.inactive_users == s.users
    assert s.short_head_pois + s.long_tail_pois == s.pois
    assert s.active_checkins + s.inactive_checkins == s.checkins
    assert s.sparsity == pytest.approx(s.checkins / (s.users * s.pois))
    assert "users=" in s.to_text() and '"checkins"' in s.to_json()


# ---------------------------------------------------------------- synthetic

def test_synthetic_is_deterministic():
    cfg = SyntheticConfig(n_users=30, n_pois=60, mean_checkins_per_user=12)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    assert a == b
    c = generate_synthetic(SyntheticConfig(n_users=30, n_pois=60, mean_checkins_per_user=12, rng_seed=1))
    assert c.checkins != a.checkins


def test_synthetic_shape(fixture_data):
    raw = generate_synthetic(SyntheticConfig(mean_checkins_per_user=60))
    assert len(raw.users) == 200 and len(raw.pois) == 500
    assert len(fixture_data.pois) == 500
    breadth = Counter(u for u, _ in {(c.user_id, c.poi_id) for c in fixture_data.checkins})
    assert min(breadth.values()) >= 10
    counts = np.sort(fixture_data.popularity_vector())[::-1]
    assert counts[:100].sum() > counts[100:].sum()  # heavy head
    assert fixture_data.has_categories


@pytest.mark.parametrize("kwargs", [{"n_users": 0}, {"power_law_exponent": 1.0},
                                    {"social_edge_probability": 2.0}, {"mean_checkins_per_user": 0}])
def test_synthetic_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SyntheticConfig(**kwargs)
