"""Acceptance criteria 1-11.  Each test records one PASS/FAIL line, printed
in the pytest terminal summary (and by ``python tests/test_acceptance.py``)."""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, FIXTURE_CONFIG, make_fixture_dataset, tiny_dataset
from fairpoi.cli import main as cli_main
from fairpoi.config import ExperimentConfig
from fairpoi.corpus import UserGroup, assign_groups, chronological_split, filter_sparse, load_dataset
from fairpoi.fairness import (ExposureFamily, FairnessWeights, PopularityHistogram, build_consumer_context,
                              build_popularity_histogram, consumer_score, fit_exposure, fit_power_law,
                              provider_score, rescore)
from fairpoi.metrics import (FairDistribution, MetricDistribution, ParetoPoint, dominates, exposure_table, gce,
                             pareto_front)
from fairpoi.recommenders import ModelKind, score_candidates, top_k, train
from fairpoi.runner import run_pipeline
from fairpoi.stats import kruskal_wallis, mann_whitney_u, wilcoxon_signed_rank

from test_stats import permutation_mw_p

ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)
FAMILIES = tuple(f.value for f in ExposureFamily)
MODELS = tuple(k.value for k in ModelKind)


def record(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _fixtures():
    return {"synthetic": make_fixture_dataset(), "tiny": tiny_dataset()}


def _sweep_config(out, models, **kw):
    return ExperimentConfig(synthetic=FIXTURE_CONFIG, min_users_per_poi=1, min_pois_per_user=10, models=models,
                            families=FAMILIES, alpha_grid=ALPHAS, beta_grid=(0.0,), k_list=(10,),
                            tradeoff_pairs=(), out_dir=str(out), **kw)


@pytest.fixture(scope="module")
def all_model_sweep(tmp_path_factory):
    return run_pipeline(_sweep_config(tmp_path_factory.mktemp("acc"), MODELS))


def test_criterion_01_gce_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    groups = ("g1", "g2")
    worst = 0.0
    for _ in range(1000):
        p = float(rng.uniform(1e-6, 1 - 1e-6))
        pm = MetricDistribution(groups, (p, 1 - p), 1.0)
        worst = max(worst, abs(gce(pm, FairDistribution(groups, (p, 1 - p)), order=2)))
    hand = gce(MetricDistribution(groups, (0.8, 0.2), 1.0), FairDistribution(groups, (0.5, 0.5)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and abs(hand + 0.28125) <= 1e-12 and dt < 1.0
    record(1, ok, f"max|gce(p,p)|={worst:.1e}, gce((.8,.2)|(.5,.5))={hand!r}, {dt:.3f}s")


def test_criterion_02_power_law_recovery():
    t0 = time.perf_counter()
    x = np.arange(1, 51)
    h = PopularityHistogram(x, 100.0 * x ** -1.5)
    free, ridge = fit_power_law(h, 0.0), fit_power_law(h, 10.0)
    dt = time.perf_counter() - t0
    ok = (abs(free.params["w0"] - 100) <= 1e-6 and abs(free.params["w1"] + 1.5) <= 1e-6
          and abs(ridge.params["w1"]) < abs(free.params["w1"]) and dt < 1.0)
    record(2, ok, f"lambda=0 -> (w0, w1)=({free.params['w0']:.9f}, {free.params['w1']:.9f}); "
                  f"lambda=10 -> w1={ridge.params['w1']:.6f}; {dt:.3f}s")


def test_criterion_03_zero_weights_reproduce_baseline():
    t0 = time.perf_counter()
    mismatches, checked = 0, 0
    for name, data in _fixtures().items():
        split = chronological_split(data)
        groups = assign_groups(split.train)
        ctx = build_consumer_context(split.train, groups)
        fp = provider_score(fit_exposure(build_popularity_histogram(split.train), "linear"),
                            split.train.popularity_vector())
        for kind in MODELS:
            m = train(kind, split.train)
            for u in split.train.user_ids:
                base = score_candidates(m, u)
                re = rescore(base, fp[base.indices], ctx.scores_for(u)[base.indices], FairnessWeights(0.0, 0.0))
                checked += 1
                mismatches += top_k(base, 10).poi_ids != top_k(re, 10).poi_ids
    dt = time.perf_counter() - t0
    record(3, mismatches == 0 and dt < 10.0,
           f"{checked} (model, user) lists over 2 fixtures, {mismatches} differ; {dt:.2f}s")


def test_criterion_04_long_tail_exposure_trend(tmp_path):
    t0 = time.perf_counter()
    r = run_pipeline(_sweep_config(tmp_path, ("Popularity",)))
    dt = time.perf_counter() - t0
    parts, ok = [], dt < 60.0
    for fam in FAMILIES:
        ex = [r.row("Popularity", fam, a, 0.0, 10).exp_longtail for a in ALPHAS]
        mono = all(b >= a for a, b in zip(ex, ex[1:]))
        grow = ex[-1] > ex[0] and ex[-1] >= 1.5 * ex[0]
        ok &= mono and grow
        parts.append(f"{fam}: " + "/".join(f"{v:.3g}" for v in ex))
    record(4, ok, "Popularity long-tail exposure a=0..1 " + "; ".join(parts) + f"; {dt:.1f}s")


def test_criterion_05_precision_trend(all_model_sweep):
    r = all_model_sweep
    bad, parts = [], []
    for model in MODELS:
        for fam in FAMILIES:
            p0 = r.row(model, fam, 0.0, 0.0, 10).precision
            p1 = r.row(model, fam, 1.0, 0.0, 10).precision
            if p1 > p0:
                bad.append(f"{model}/{fam}")
        parts.append(f"{model} {r.row(model, 'linear', 0, 0, 10).precision:.4f}->"
                     f"{r.row(model, 'linear', 1, 0, 10).precision:.4f}")
    record(5, not bad, "P@10 a=0->1 (linear) " + ", ".join(parts) + (f"; violations: {bad}" if bad else ""))


def test_criterion_06_exposure_conservation(all_model_sweep):
    r = all_model_sweep
    n_users = len(r.user_ids)
    totals = {int(s["exposure"].sum()) for s in r.samples.values()}
    tiny = tiny_dataset()
    split = chronological_split(tiny)
    tiny_ok = True
    for kind in MODELS:
        m = train(kind, split.train)
        recs = {u: top_k(score_candidates(m, u), 1) for u in split.train.user_ids}
        tiny_ok &= exposure_table(recs, split.train.poi_ids).total == len(recs)
    ok = totals == {n_users * 10} and tiny_ok
    record(6, ok, f"sum E_p over {len(r.samples)} sweep cells = {sorted(totals)} (|U|k = {n_users * 10}); "
                  f"tiny fixture k=1 {'exact' if tiny_ok else 'mismatch'}")


def test_criterion_07_consumer_scoping():
    nonzero, changed, lists = 0, 0, 0
    for name, data in _fixtures().items():
        split = chronological_split(data)
        groups = assign_groups(split.train)
        ctx = build_consumer_context(split.train, groups)
        active = groups.users_in(UserGroup.ACTIVE)
        nonzero += sum(consumer_score(ctx, u, p) != 0 for u in active for p in split.train.poi_ids)
        fps = {f: provider_score(fit_exposure(build_popularity_histogram(split.train), f),
                                 split.train.popularity_vector()) for f in FAMILIES}
        for kind in MODELS:
            m = train(kind, split.train)
            for u in active:
                base = score_candidates(m, u)
                fc = ctx.scores_for(u)[base.indices]
                for fam, fp in fps.items():
                    for a in ALPHAS:
                        lo = top_k(rescore(base, fp[base.indices], fc, FairnessWeights(a, 0.0, fam)), 10)
                        hi = top_k(rescore(base, fp[base.indices], fc, FairnessWeights(a, 1.0, fam)), 10)
                        lists += 1
                        changed += lo.poi_ids != hi.poi_ids
    record(7, nonzero == 0 and changed == 0,
           f"non-zero F_c for Active users: {nonzero}; Active lists changed by beta 0->1: {changed}/{lists}")


def test_criterion_08_statistical_tests():
    t0 = time.perf_counter()
    h = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]]).statistic
    w = wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0, 5.0]).p_value
    rng = np.random.default_rng(8)
    gaps = []
    for seed in range(3):
        a, b = rng.normal(0, 1, 15), rng.normal(0.5, 1, 15)
        gaps.append(abs(mann_whitney_u(a, b).p_value - permutation_mw_p(a, b, 100_000, seed)))
    dt = time.perf_counter() - t0
    ok = h == 7.2 and w == 0.0625 and max(gaps) < 0.02 and dt < 30.0
    record(8, ok, f"H={h!r}, Wilcoxon p={w!r}, max |MW p - permutation p|={max(gaps):.4f}; {dt:.2f}s")


def test_criterion_09_pareto_oracle():
    rng = np.random.default_rng(9)
    pts = [ParetoPoint(f"p{i}", float(u), float(v)) for i, (u, v) in enumerate(rng.uniform(-1, 0, (200, 2)))]
    oracle = {p.label for p in pts if not any(dominates(q, p) for q in pts)}
    got = {p.label for p in pareto_front(pts)}
    record(9, got == oracle, f"front of 200 random points: {len(got)} found, {len(oracle)} by O(n^2) oracle, "
                             f"{'equal' if got == oracle else 'different'}")


def test_criterion_10_sweep_determinism(tmp_path):
    ini = tmp_path / "fixture.ini"
    ini.write_text("[synthetic]\nmean_checkins_per_user = 60\n"
                   "[data]\nmin_users_per_poi = 1\nmin_pois_per_user = 10\n"
                   "[sweep]\nmodels = USG, GeoSoCa, LORE, Popularity\n")
    codes = [cli_main(["sweep", "--config", str(ini), "--seed", "0", "--out", str(tmp_path / d)])
             for d in ("run1", "run2")]
    names = sorted(p.name for p in (tmp_path / "run1").glob("*.csv"))
    same = [n for n in names if (tmp_path / "run1" / n).read_bytes() == (tmp_path / "run2" / n).read_bytes()]
    ok = codes == [0, 0] and names and same == names
    record(10, ok, f"{len(same)}/{len(names)} CSVs byte-identical across two sweeps ({', '.join(names)})")


YELP = os.environ.get("FAIRPOI_YELP_DIR")


@pytest.mark.skipif(not YELP, reason="set FAIRPOI_YELP_DIR to a directory with checkins.tsv, pois.tsv, social.tsv")
def test_criterion_11_yelp_scale():
    root = Path(YELP)
    social = root / "social.tsv"
    d = filter_sparse(load_dataset(root / "checkins.tsv", root / "pois.tsv", social if social.exists() else None))
    n_u, n_p, n_c = len(d.users), len(d.pois), len(d.checkins)
    sparsity = n_c / (n_u * n_p)
    record(11, (n_u, n_p, n_c) == (7135, 16621, 774320),
           f"users={n_u}, pois={n_p}, checkins={n_c}, sparsity={sparsity:.4%} (expected 7135/16621/774320)")


def test_criterion_11_skip_notice():
    if not YELP:
        ACCEPTANCE_LINES.append("[SKIP] criterion 11: no Yelp data (set FAIRPOI_YELP_DIR); optional at full scale")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
