"""Experiment sweeps over (model, exposure family, alpha, beta, k) and table emission."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .config import ExperimentConfig
from .corpus import (Dataset, SplitDataset, assign_groups, chronological_split,
                     filter_sparse, generate_synthetic, load_dataset)
from .errors import ConfigError, DataError, FairPoiError, StageError
from .fairness import (ExposureFamily, ExposureModel, FairnessWeights, build_consumer_context,
                       build_popularity_histogram, fit_exposure, provider_score, rescore)
from .metrics import (REPORT_COLUMNS, MetricsReport, ParetoPoint, evaluate, exposure_table, format_value,
                      is_degenerate, pareto_front, per_user_precision, train_centroids)
from .recommenders import BaseModel, score_candidates, top_k, train
from .stats import TestResult, kruskal_wallis, mann_whitney_u, wilcoxon_signed_rank

logger = logging.getLogger(__name__)

MANIFEST = "MANIFEST.json"
POINT_COLUMNS = ("label", "model", "exposure_family", "alpha", "beta", "k",
                 "user_gce", "item_gce", "precision", "on_front")


@dataclass(frozen=True)
class SweepResult:
    rows: tuple  # MetricsReport, sorted by MetricsReport.key()
    provenance: Mapping[str, object]
    config: ExperimentConfig
    user_ids: tuple = ()
    poi_ids: tuple = ()
    # row key -> {"precision": per-user vector, "exposure": per-POI vector}
    samples: Mapping[tuple, Mapping[str, np.ndarray]] = field(default_factory=dict, repr=False)
    tuning: Optional[Mapping[str, object]] = None

    def __len__(self):
        return len(self.rows)

    def row(self, model, family, alpha, beta, k) -> MetricsReport:
        key = (model, ExposureFamily.parse(family).value, float(alpha), float(beta), int(k))
        for r in self.rows:
            if r.key() == key:
                return r
        raise KeyError(key)


def sweep_combinations(cfg: ExperimentConfig) -> list[tuple[str, float, float]]:
    """Distinct (family, alpha, beta) settings: the full grid plus the trade-off pairs."""
    combos = set(itertools.product(cfg.families, cfg.alpha_grid, cfg.beta_grid))
    combos.update((cfg.tradeoff_family, a, b) for a, b in cfg.tradeoff_pairs)
    return sorted(combos)


def _fan_out(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map; threads only when asked for more than one worker."""
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------- stages

def _load_data(cfg: ExperimentConfig) -> Dataset:
    if cfg.checkins:
        return load_dataset(cfg.checkins, cfg.pois, cfg.social, cfg.delimiter)
    return generate_synthetic(cfg.synthetic)


def _cache_dir(cfg: ExperimentConfig) -> Optional[Path]:
    if not cfg.out_dir:
        return None
    return Path(cfg.out_dir) / "cache" / cfg.data_hash()[:16]


def _load_or_train(cfg: ExperimentConfig, kind: str, data: Dataset, prov: dict) -> BaseModel:
    cache = _cache_dir(cfg)
    path = cache / f"model-{kind}.json" if cache else None
    if path is not None and path.is_file():
        try:
            model = BaseModel.from_json(path.read_text(encoding="utf-8"), data)
            prov["cached_models"].append(kind)
            return model
        except (FairPoiError, ValueError, KeyError) as exc:
            logger.warning("ignoring stale cached model %s: %s", path, exc)
    model = train(kind, data, params=cfg.params_for(kind))
    prov["trained_models"].append(kind)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(model.to_json(), encoding="utf-8")
    return model


def _load_or_fit(cfg: ExperimentConfig, family: str, data: Dataset, prov: dict) -> ExposureModel:
    cache = _cache_dir(cfg)
    path = cache / f"exposure-{family}.json" if cache else None
    if path is not None and path.is_file():
        try:
            model = ExposureModel.from_json(path.read_text(encoding="utf-8"))
            prov["cached_exposure"].append(family)
            return model
        except (FairPoiError, ValueError, KeyError) as exc:
            logger.warning("ignoring stale cached exposure model %s: %s", path, exc)
    model = fit_exposure(build_popularity_histogram(data), family, cfg.ridge_lambda)
    prov["fitted_exposure"].append(family)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(model.to_json(), encoding="utf-8")
    return model


class _Rescorer:
    """Immutable per-model snapshot shared by the scoring workers."""

    def __init__(self, base: Mapping[str, object], f_p: Mapping[str, np.ndarray], consumer, k_max: int):
        self.base, self.f_p, self.consumer, self.k_max = base, f_p, consumer, k_max

    def lists(self, users: Sequence[str], family: str, alpha: float, beta: float, jobs: int):
        w = FairnessWeights(alpha, beta, family)
        fp = self.f_p[family]

        def one(u):
            cand = self.base[u]
            fc = self.consumer.scores_for(u)[cand.indices] if beta > 0 else np.zeros(len(cand))
            return top_k(rescore(cand, fp[cand.indices], fc, w), self.k_max)

        return dict(zip(users, _fan_out(one, users, jobs)))


def run_pipeline(cfg: ExperimentConfig) -> SweepResult:
    """ingest -> filter -> split -> group -> train -> (fit exposure, rescore, top-k, evaluate).

    Each base model is trained once and each exposure family fitted once;
    both are cached under ``out_dir`` keyed by the data/model config hash.
    A failing stage raises :class:`StageError`; rows finished so far are
    flushed next to a MANIFEST marked incomplete.
    """
    prov = {"config_hash": cfg.config_hash(), "data_hash": cfg.data_hash(), "seed": cfg.seed,
            "kernel_backend": kernels.BACKEND, "started": _now(), "trained_models": [],
            "cached_models": [], "fitted_exposure": [], "cached_exposure": []}
    rows: dict[tuple, MetricsReport] = {}
    stage = "ingest"
    try:
        data = _load_data(cfg)
        stage = "filter"
        data = filter_sparse(data, cfg.min_users_per_poi, cfg.min_pois_per_user)
        stage = "split"
        split = chronological_split(data)
        stage = "group"
        groups = assign_groups(split.train)
        stage = "fit-exposure"
        families = sorted(set(cfg.families) | {cfg.tradeoff_family})
        exposure = {f: _load_or_fit(cfg, f, split.train, prov) for f in families}
        popularity = split.train.popularity_vector()
        f_p = {f: np.asarray(provider_score(m, popularity), dtype=np.float64) for f, m in exposure.items()}
        stage = "consumer"
        consumer = build_consumer_context(split.train, groups)
        centroids = train_centroids(split.train)

        users = split.train.user_ids
        samples: dict = {}
        tuning: dict = {}
        k_max = max(cfg.k_list + (cfg.tune_k,))
        combos = sweep_combinations(cfg)
        for model_name in cfg.models:
            stage = f"train:{model_name}"
            model = _load_or_train(cfg, model_name, split.train, prov)
            stage = f"score:{model_name}"
            base = dict(zip(users, _fan_out(lambda u: score_candidates(model, u), users, cfg.jobs)))
            scorer = _Rescorer(base, f_p, consumer, k_max)
            stage = f"evaluate:{model_name}"
            for family, alpha, beta in combos:
                lists = scorer.lists(users, family, alpha, beta, cfg.jobs)
                for k in cfg.k_list:
                    report = evaluate(lists, split.train, split.test, groups, k, model=model_name,
                                      alpha=alpha, beta=beta, exposure_family=family,
                                      centroids=centroids, hit_rate=cfg.hit_rate)
                    rows[report.key()] = report
                    samples[report.key()] = _samples(lists, split, k, cfg.hit_rate)
            if cfg.tune:
                stage = f"tune:{model_name}"
                tuning[model_name] = _tune(cfg, scorer, users, split, groups, centroids, model_name)
    except Exception as exc:
        prov["finished"] = _now()
        if cfg.out_dir:
            _flush_partial(cfg, sorted(rows.values(), key=MetricsReport.key), prov, stage, exc)
        raise StageError(stage, exc) from exc
    prov["finished"] = _now()
    return SweepResult(
        rows=tuple(sorted(rows.values(), key=MetricsReport.key)), provenance=prov, config=cfg,
        user_ids=users, poi_ids=split.train.poi_ids, samples=samples,
        tuning=tuning if cfg.tune else None,
    )


def _samples(lists, split: SplitDataset, k: int, hit_rate: bool) -> dict:
    recs = {u: r.prefix(k) for u, r in lists.items()}
    per_user = per_user_precision(recs, split.test, k, hit_rate)
    users = sorted(recs)
    return {
        "precision": np.array([per_user[u] for u in users], dtype=np.float64),
        "exposure": exposure_table(recs, split.train.poi_ids).vector(split.train.poi_ids).astype(np.float64),
    }


def _tune(cfg, scorer: _Rescorer, users, split: SplitDataset, groups, centroids, model_name) -> dict:
    """Pick (family, alpha, beta) maximising validation precision above a long-tail exposure floor."""
    best = None
    for family, alpha, beta in itertools.product(cfg.families, cfg.alpha_grid, cfg.beta_grid):
        lists = scorer.lists(users, family, alpha, beta, cfg.jobs)
        r = evaluate(lists, split.train, split.validation, groups, cfg.tune_k, model=model_name,
                     alpha=alpha, beta=beta, exposure_family=family, centroids=centroids,
                     hit_rate=cfg.hit_rate)
        if r.exp_longtail < cfg.tune_exposure_floor:
            continue
        if best is None or r.precision > best.precision:
            best = r
    if best is None:
        return {"feasible": False, "exposure_floor": cfg.tune_exposure_floor}
    return {"feasible": True, "exposure_family": best.exposure_family, "alpha": best.alpha,
            "beta": best.beta, "k": best.k, "validation_precision": best.precision,
            "validation_exp_longtail": best.exp_longtail, "exposure_floor": cfg.tune_exposure_floor}


# ---------------------------------------------------------------- output

def _csv_text(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def _write(path: Path, text: str) -> str:
    path.write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode()).hexdigest()


def results_csv(rows: Sequence[MetricsReport]) -> str:
    return _csv_text(REPORT_COLUMNS, [r.csv_row() for r in rows])


def table1_csv(r: SweepResult) -> str:
    """Precision and long-tail exposure by model x family x k, one column pair per alpha."""
    cfg = r.config
    beta = min(cfg.beta_grid)
    header = ["model", "exposure_family", "k", "beta"]
    for a in cfg.alpha_grid:
        header += [f"precision_a{format_value(a)}", f"exp_longtail_a{format_value(a)}"]
    index = {row.key(): row for row in r.rows}
    out = []
    for model in cfg.models:
        for family in cfg.families:
            for k in cfg.k_list:
                line = [model, family, k, beta]
                for a in cfg.alpha_grid:
                    row = index.get((model, family, a, beta, k))
                    line += [row.precision, row.exp_longtail] if row else ["", ""]
                out.append(line)
    return _csv_text(header, out)


_TABLE2_METRICS = ("precision", "gce_users", "gce_items", "mean_median_dist_km")


def table2_csv(r: SweepResult) -> str:
    """Trade-off pairs: precision, GCE and distance per k."""
    cfg = r.config
    header = ["model", "exposure_family", "alpha", "beta"]
    header += [f"{m}_k{k}" for k in cfg.k_list for m in _TABLE2_METRICS]
    index = {row.key(): row for row in r.rows}
    out = []
    for model in cfg.models:
        for a, b in cfg.tradeoff_pairs:
            line = [model, cfg.tradeoff_family, a, b]
            for k in cfg.k_list:
                row = index.get((model, cfg.tradeoff_family, a, b, k))
                line += [getattr(row, m) for m in _TABLE2_METRICS] if row else [""] * len(_TABLE2_METRICS)
            out.append(line)
    return _csv_text(header, out)


def point_label(row: MetricsReport) -> str:
    return f"{row.model}|{row.exposure_family}|a={format_value(row.alpha)}|b={format_value(row.beta)}|k={row.k}"


def mark_front(points: Sequence[ParetoPoint], group_of: Callable[[ParetoPoint], object]) -> list[bool]:
    """Front membership per point, fronts computed within each group.
    Points with a non-finite GCE never sit on a front."""
    flags = [False] * len(points)
    groups: dict = {}
    for i, p in enumerate(points):
        if math.isfinite(p.user_gce) and math.isfinite(p.item_gce):
            groups.setdefault(group_of(p), []).append(i)
    for idx in groups.values():
        front = {id(p) for p in pareto_front([points[i] for i in idx])}
        for i in idx:
            flags[i] = id(points[i]) in front
    return flags


def _gce_float(v) -> float:
    return math.nan if is_degenerate(v) else float(v)


def points_csv(r: SweepResult) -> str:
    """Pareto scatter data; fronts are taken per (model, k)."""
    points = [ParetoPoint(point_label(row), _gce_float(row.gce_users), _gce_float(row.gce_items),
                          row.precision, {"row": row}) for row in r.rows]
    flags = mark_front(points, lambda p: (p.extra["row"].model, p.extra["row"].k))
    out = []
    for p, on in zip(points, flags):
        row = p.extra["row"]
        out.append([p.label, row.model, row.exposure_family, row.alpha, row.beta, row.k,
                    row.gce_users, row.gce_items, row.precision, "true" if on else "false"])
    return _csv_text(POINT_COLUMNS, out)


def emit_tables(r: SweepResult, out_dir=None) -> dict[str, Path]:
    """Write results.csv, table1.csv, table2.csv, points.csv (plus tune.json) and a complete MANIFEST.

    CSV bytes depend only on the rows; timestamps live in the MANIFEST alone.
    """
    if not r.rows:
        raise DataError("sweep produced no rows")
    out = Path(out_dir if out_dir is not None else r.config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    texts = {
        "results.csv": results_csv(r.rows),
        "table1.csv": table1_csv(r),
        "table2.csv": table2_csv(r),
        "points.csv": points_csv(r),
    }
    if r.tuning is not None:
        texts["tune.json"] = json.dumps(r.tuning, indent=2, sort_keys=True) + "\n"
    digests = {name: _write(out / name, text) for name, text in texts.items()}
    _write_manifest(out, r.config, r.provenance, complete=True, rows=len(r.rows), files=digests)
    return {name: out / name for name in texts}


def _write_manifest(out: Path, cfg: ExperimentConfig, prov: Mapping, *, complete: bool, rows: int,
                    files: Mapping[str, str], stage: Optional[str] = None, error: Optional[str] = None):
    from . import __version__
    doc = {"complete": complete, "rows": rows, "files": dict(sorted(files.items())),
           "version": __version__, "config": cfg.as_dict(), **prov}
    if stage is not None:
        doc["failed_stage"] = stage
        doc["error"] = error
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST).write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def _flush_partial(cfg: ExperimentConfig, rows, prov, stage: str, exc: BaseException) -> None:
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = {"results.partial.csv": _write(out / "results.partial.csv", results_csv(rows))} if rows else {}
        _write_manifest(out, cfg, prov, complete=False, rows=len(rows), files=files,
                        stage=stage, error=f"{type(exc).__name__}: {exc}")
    except OSError as io_exc:  # keep the original failure visible
        logger.error("could not flush partial results to %s: %s", out, io_exc)


# ---------------------------------------------------------------- significance

@dataclass(frozen=True)
class Selector:
    """Which samples ``compare_models`` tests."""
    alpha: float = 0.5
    beta: float = 0.0
    k: int = 10
    metrics: tuple = ("precision", "exposure")
    baseline_alpha: float = 0.0
    models: Optional[tuple] = None


COMPARISON_COLUMNS = ("test", "model", "metric", "comparison", "alpha", "beta", "k",
                      "statistic", "p_value", "n", "method", "significant")


def _sample(r: SweepResult, model, family, alpha, beta, k, metric) -> np.ndarray:
    key = (model, family, float(alpha), float(beta), int(k))
    if key not in r.samples:
        raise ConfigError(f"no samples for {key}; was it part of the sweep?")
    if metric not in r.samples[key]:
        raise ConfigError(f"unknown metric {metric!r}; use 'precision' or 'exposure'")
    return r.samples[key][metric]


def _paired(before: np.ndarray, after: np.ndarray) -> TestResult:
    if len(before) != len(after):
        raise DataError(f"paired samples differ in length ({len(before)} vs {len(after)})")
    diffs = after - before
    if not np.any(diffs != 0):
        return TestResult(0.0, 1.0, (0,), "no-difference")
    return wilcoxon_signed_rank(diffs)


def compare_models(r: SweepResult, test: str, selector: Optional[Selector] = None) -> list[dict]:
    """Significance grid across exposure families at a fixed (alpha, beta, k).

    ``kruskal``: one row per (model, metric) over all families;
    ``mannwhitney``: one row per family pair;
    ``wilcoxon``: per family, paired deltas against ``baseline_alpha``.
    """
    sel = selector or Selector()
    models = sel.models or r.config.models
    families = r.config.families
    out = []

    def emit(model, metric, comparison, res: TestResult):
        out.append({"test": test, "model": model, "metric": metric, "comparison": comparison,
                    "alpha": float(sel.alpha), "beta": float(sel.beta), "k": int(sel.k),
                    "statistic": res.statistic, "p_value": res.p_value, "n": list(res.n),
                    "method": res.method, "significant": res.significant})

    for model in models:
        for metric in sel.metrics:
            vecs = {f: _sample(r, model, f, sel.alpha, sel.beta, sel.k, metric) for f in families}
            if test == "kruskal":
                if len(families) < 2:
                    raise ConfigError("Kruskal-Wallis needs at least two exposure families")
                emit(model, metric, " vs ".join(families), kruskal_wallis([vecs[f] for f in families]))
            elif test == "mannwhitney":
                for f1, f2 in itertools.combinations(families, 2):
                    emit(model, metric, f"{f1} vs {f2}", mann_whitney_u(vecs[f1], vecs[f2]))
            elif test == "wilcoxon":
                for f in families:
                    before = _sample(r, model, f, sel.baseline_alpha, sel.beta, sel.k, metric)
                    comparison = f"{f}: a={format_value(float(sel.baseline_alpha))} -> a={format_value(float(sel.alpha))}"
                    emit(model, metric, comparison, _paired(before, vecs[f]))
            else:
                raise ConfigError(f"unknown test {test!r}; use kruskal, mannwhitney or wilcoxon")
    return out


def comparisons_csv(rows: Sequence[dict]) -> str:
    return _csv_text(COMPARISON_COLUMNS, [[row[c] if c != "n" else " ".join(map(str, row[c]))
                                           for c in COMPARISON_COLUMNS] for row in rows])
