"""``fairpoi`` command line.  Exit codes: 0 ok, 1 usage, 2 data, 3 internal."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import build_config, env_overrides, merge_sections, param_value, read_config_file, synthetic_value
from .corpus import (DELIMITERS, SyntheticConfig, assign_groups, chronological_split, dataset_stats,
                     filter_sparse, generate_synthetic, load_dataset, load_split, write_dataset, write_split)
from .errors import ConfigError, DataError, ParseError, StageError
from .fairness import (ExposureFamily, ExposureModel, FairnessWeights, build_consumer_context,
                       build_popularity_histogram, fit_exposure, provider_score, rescore)
from .metrics import REPORT_COLUMNS, ParetoPoint, evaluate
from .recommenders import BaseModel, ModelKind, RecommendationList, score_candidates, top_k, train
from .runner import (Selector, compare_models, comparisons_csv, emit_tables, mark_front, run_pipeline)
from .stats import kruskal_wallis, mann_whitney_u, wilcoxon_signed_rank

logger = logging.getLogger("fairpoi")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- settings

def _sections(args) -> dict:
    """defaults < config file < environment < flags."""
    file_layer = read_config_file(args.config) if getattr(args, "config", None) else {}
    flags: dict = {}
    for attr, sec, key in (("seed", "run", "seed"), ("out", "run", "out"), ("jobs", "run", "jobs"),
                           ("delimiter", "data", "delimiter")):
        v = getattr(args, attr, None)
        if v is not None:
            flags.setdefault(sec, {})[key] = v
    models = [m.value for m in ModelKind]
    return merge_sections(file_layer, env_overrides(os.environ, models), flags)


def _get(sections, sec, key, default=None, kind=str):
    v = sections.get(sec, {}).get(key)
    if v is None:
        return default
    try:
        return kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"[{sec}] {key}: cannot parse {v!r}") from None


def _out(sections) -> Path:
    out = Path(_get(sections, "run", "out", "results"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _delim(sections) -> str:
    d = _get(sections, "data", "delimiter", "tab")
    if d not in DELIMITERS:
        raise ConfigError(f"delimiter must be 'tab' or 'comma', got {d!r}")
    return DELIMITERS[d]


def _write_stats(out: Path, stats) -> None:
    (out / "stats.txt").write_text(stats.to_text(), encoding="utf-8")
    (out / "stats.json").write_text(stats.to_json(), encoding="utf-8")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"expected comma separated numbers, got {text!r}") from None


# ---------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    s = _sections(args)
    checkins = args.checkins or _get(s, "data", "checkins")
    pois = args.pois or _get(s, "data", "pois")
    if not checkins or not pois:
        raise ConfigError("ingest needs --checkins and --pois (or [data] checkins/pois)")
    social = args.social or _get(s, "data", "social")
    d = load_dataset(checkins, pois, social, _delim(s))
    if not args.no_filter:
        d = filter_sparse(d, args.min_users_per_poi or _get(s, "data", "min_users_per_poi", 10, int),
                          args.min_pois_per_user or _get(s, "data", "min_pois_per_user", 10, int))
    out = _out(s)
    write_dataset(d, out)
    stats = dataset_stats(d, assign_groups(d))
    _write_stats(out, stats)
    sys.stdout.write(stats.to_text())
    return EXIT_OK


def cmd_synth(args) -> int:
    s = _sections(args)
    values = {k: synthetic_value(k, v) for k, v in s.get("synthetic", {}).items()}
    for attr, key in (("users", "n_users"), ("pois", "n_pois"), ("exponent", "power_law_exponent"),
                      ("clusters", "n_geo_clusters"), ("mean_checkins", "mean_checkins_per_user"),
                      ("social_p", "social_edge_probability")):
        v = getattr(args, attr)
        if v is not None:
            values[key] = v
    values["rng_seed"] = _get(s, "run", "seed", values.get("rng_seed", 0), int)
    d = generate_synthetic(SyntheticConfig(**values))
    out = _out(s)
    write_dataset(d, out)
    stats = dataset_stats(d, assign_groups(d))
    _write_stats(out, stats)
    sys.stdout.write(stats.to_text())
    return EXIT_OK


def _load_dir(path, delimiter):
    path = Path(path)
    return load_dataset(path / "checkins.tsv", path / "pois.tsv",
                        path / "social.tsv" if (path / "social.tsv").exists() else None, delimiter)


def cmd_split(args) -> int:
    s = _sections(args)
    d = _load_dir(args.data, _delim(s))
    split = chronological_split(d)
    groups = assign_groups(split.train)
    out = _out(s)
    write_split(split, out)
    with open(out / "groups.tsv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["kind", "id", "group"])
        for u in sorted(groups.user_group):
            w.writerow(["user", u, groups.user_group[u].value])
        for p in sorted(groups.item_group):
            w.writerow(["poi", p, groups.item_group[p].value])
    stats = dataset_stats(split.train, groups)
    _write_stats(out, stats)
    sys.stdout.write(stats.to_text())
    return EXIT_OK


def _parse_params(items) -> dict:
    params = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        params[key.strip()] = param_value(value)
    return params


def cmd_train(args) -> int:
    s = _sections(args)
    kind = ModelKind.parse(args.model)
    params = {k: param_value(v) for k, v in s.get(f"model.{kind.value}", {}).items()}
    params.update(_parse_params(args.param))
    split = load_split(args.data, _delim(s))
    model = train(kind, split.train, params=params)
    out = _out(s)
    path = out / f"model-{kind.value}.json"
    path.write_text(model.to_json(), encoding="utf-8")
    print(path)
    return EXIT_OK


def cmd_fit_exposure(args) -> int:
    s = _sections(args)
    split = load_split(args.data, _delim(s))
    lam = args.ridge_lambda if args.ridge_lambda is not None else _get(s, "sweep", "ridge_lambda", 10.0, float)
    model = fit_exposure(build_popularity_histogram(split.train), ExposureFamily.parse(args.family), lam)
    out = _out(s)
    path = out / f"exposure-{model.family.value}.json"
    path.write_text(model.to_json(), encoding="utf-8")
    print(path)
    return EXIT_OK


def cmd_recommend(args) -> int:
    s = _sections(args)
    split = load_split(args.data, _delim(s))
    model = BaseModel.from_json(Path(args.model_file).read_text(encoding="utf-8"), split.train)
    if args.alpha > 0 and not args.exposure_file:
        raise ConfigError("--alpha > 0 needs --exposure-file")
    family = ExposureFamily.LINEAR
    f_p = np.zeros(len(split.train.poi_ids))
    if args.exposure_file:
        em = ExposureModel.from_json(Path(args.exposure_file).read_text(encoding="utf-8"))
        family = em.family
        f_p = np.asarray(provider_score(em, split.train.popularity_vector()), dtype=np.float64)
    w = FairnessWeights(args.alpha, args.beta, family)
    consumer = build_consumer_context(split.train, assign_groups(split.train)) if args.beta > 0 else None
    out = _out(s)
    path = out / "recommendations.tsv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, delimiter="\t", lineterminator="\n")
        wr.writerow(["user_id", "rank", "poi_id", "score"])
        for u in split.train.user_ids:
            cand = score_candidates(model, u)
            fc = consumer.scores_for(u)[cand.indices] if consumer else np.zeros(len(cand))
            rec = top_k(rescore(cand, f_p[cand.indices], fc, w), args.k)
            for rank, (p, sc) in enumerate(zip(rec.poi_ids, rec.scores), 1):
                wr.writerow([u, rank, p, repr(sc)])
    print(path)
    return EXIT_OK


def read_recommendations(path, k: int) -> dict:
    lists: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header != ["user_id", "rank", "poi_id", "score"]:
            raise ParseError(path, 1, 1, "expected header user_id, rank, poi_id, score")
        for lineno, row in enumerate(reader, 2):
            if len(row) != 4:
                raise ParseError(path, lineno, 1, f"expected 4 fields, got {len(row)}")
            try:
                rank, score = int(row[1]), float(row[3])
            except ValueError:
                raise ParseError(path, lineno, 2, "rank must be an integer and score a number") from None
            lists.setdefault(row[0], []).append((rank, row[2], score))
    out = {}
    for u, items in lists.items():
        items.sort()
        out[u] = RecommendationList(u, tuple(p for _, p, _ in items), tuple(sc for _, _, sc in items), k)
    return out


def cmd_evaluate(args) -> int:
    s = _sections(args)
    split = load_split(args.data, _delim(s))
    groups = assign_groups(split.train)
    ks = [int(k) for k in _floats(args.k_list)] if args.k_list else [args.k]
    recs = read_recommendations(args.recs, max(ks))
    unknown = sorted(set(recs) - set(split.train.users))
    if unknown:
        raise DataError(f"recommendations for unknown user {unknown[0]!r}")
    reports = [evaluate(recs, split.train, split.test, groups, k, model=args.model_name, alpha=args.alpha,
                        beta=args.beta, exposure_family=args.family, hit_rate=args.hit_rate) for k in ks]
    out = _out(s)
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow(r.csv_row())
    (out / "metrics.json").write_text(json.dumps([r.as_dict() for r in reports], indent=2) + "\n",
                                      encoding="utf-8")
    sys.stdout.write((out / "metrics.csv").read_text(encoding="utf-8"))
    return EXIT_OK


def cmd_sweep(args) -> int:
    s = _sections(args)
    flags: dict = {}
    if args.synthetic and not _get(s, "data", "checkins"):
        flags.setdefault("synthetic", {})
    for attr, key in (("models", "models"), ("families", "families"), ("alpha_grid", "alpha_grid"),
                      ("beta_grid", "beta_grid"), ("k_list", "k_list")):
        v = getattr(args, attr)
        if v is not None:
            flags.setdefault("sweep", {})[key] = v
    if args.tune:
        flags.setdefault("sweep", {})["tune"] = "true"
    cfg = build_config(merge_sections(s, flags))
    result = run_pipeline(cfg)
    files = emit_tables(result)
    for test in args.compare or ():
        rows = compare_models(result, test, Selector(alpha=args.compare_alpha, k=args.compare_k))
        path = Path(cfg.out_dir) / f"compare_{test}.csv"
        path.write_text(comparisons_csv(rows), encoding="utf-8")
        files[path.name] = path
    for name in sorted(files):
        print(files[name])
    return EXIT_OK


def read_columns(path, delimiter=",", columns=None) -> dict:
    """Numeric columns of a CSV with a header row; blank cells are skipped."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    wanted = columns or header
    missing = [c for c in wanted if c not in header]
    if missing:
        raise ConfigError(f"{path}: no column {missing[0]!r}")
    out = {c: [] for c in wanted}
    for lineno, row in enumerate(rows[1:], 2):
        for c in wanted:
            j = header.index(c)
            cell = row[j].strip() if j < len(row) else ""
            if not cell:
                continue
            try:
                out[c].append(float(cell))
            except ValueError:
                raise ParseError(path, lineno, j + 1, f"not a number: {cell!r}") from None
    return out


def cmd_stats(args) -> int:
    s = _sections(args)
    delim = _delim(s) if getattr(args, "delimiter", None) else ","
    cols = read_columns(args.input, delim, args.columns.split(",") if args.columns else None)
    samples = list(cols.values())
    if args.test == "kruskal":
        res = kruskal_wallis(samples)
    elif args.test == "mannwhitney":
        if len(samples) != 2:
            raise ConfigError("mannwhitney needs exactly two columns")
        res = mann_whitney_u(*samples)
    else:
        if len(samples) == 1:
            diffs = np.asarray(samples[0])
        elif len(samples) == 2:
            a, b = (np.asarray(x) for x in samples)
            if len(a) != len(b):
                raise DataError(f"paired columns differ in length ({len(a)} vs {len(b)})")
            diffs = b - a
        else:
            raise ConfigError("wilcoxon takes one column of differences or two paired columns")
        res = wilcoxon_signed_rank(diffs)
    print(res.to_json())
    return EXIT_OK


def cmd_pareto(args) -> int:
    s = _sections(args)
    with open(args.input, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for col in ("label", "user_gce", "item_gce"):
        if rows and col not in rows[0]:
            raise DataError(f"{args.input}: missing column {col!r}")

    def num(v):
        try:
            return float(v)
        except (TypeError, ValueError):
            return float("nan")

    points = [ParetoPoint(r["label"], num(r["user_gce"]), num(r["item_gce"]), num(r.get("precision")), r)
              for r in rows]
    keys = [k for k in (args.group_by or "").split(",") if k]
    flags = mark_front(points, lambda p: tuple(p.extra.get(k) for k in keys))
    out = Path(args.output) if args.output else _out(s) / "pareto.csv"
    fields = list(rows[0].keys()) if rows else ["label", "user_gce", "item_gce", "precision"]
    if "on_front" not in fields:
        fields.append("on_front")
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r, flag in zip(rows, flags):
            w.writerow({**r, "on_front": "true" if flag else "false"})
    for p, flag in zip(points, flags):
        if flag:
            print(p.label)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=argparse.SUPPRESS, help="INI config file")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="scoring threads")
    g.add_argument("--delimiter", choices=("tab", "comma"), default=argparse.SUPPRESS)
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="fairpoi", description=__doc__, parents=[common])
    parser.add_argument("--version", action="version", version=f"fairpoi {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, parents=[common])
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "load raw files, filter, write normalised dataset + stats")
    p.add_argument("--checkins")
    p.add_argument("--pois")
    p.add_argument("--social")
    p.add_argument("--min-users-per-poi", type=int)
    p.add_argument("--min-pois-per-user", type=int)
    p.add_argument("--no-filter", action="store_true")

    p = add("synth", cmd_synth, "generate a synthetic dataset")
    p.add_argument("--users", type=int)
    p.add_argument("--pois", type=int)
    p.add_argument("--exponent", type=float)
    p.add_argument("--clusters", type=int)
    p.add_argument("--mean-checkins", type=float)
    p.add_argument("--social-p", type=float)

    p = add("split", cmd_split, "chronological 70/20/10 split of a dataset directory")
    p.add_argument("--data", required=True, help="directory with checkins.tsv and pois.tsv")

    p = add("train", cmd_train, "train one base recommender on a split")
    p.add_argument("--data", required=True, help="split directory")
    p.add_argument("--model", required=True, choices=[m.value for m in ModelKind])
    p.add_argument("--param", action="append", metavar="KEY=VALUE")

    p = add("fit-exposure", cmd_fit_exposure, "fit a provider exposure model on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--family", required=True, choices=[f.value for f in ExposureFamily])
    p.add_argument("--ridge-lambda", type=float)

    p = add("recommend", cmd_recommend, "write fairness re-scored top-k lists")
    p.add_argument("--data", required=True)
    p.add_argument("--model-file", required=True)
    p.add_argument("--exposure-file")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("-k", type=int, default=10)

    p = add("evaluate", cmd_evaluate, "score a recommendations file against the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--recs", required=True)
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--k-list")
    p.add_argument("--model-name", default="")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--family", default="")
    p.add_argument("--hit-rate", action="store_true")

    p = add("sweep", cmd_sweep, "run the full (model, family, alpha, beta, k) sweep")
    p.add_argument("--synthetic", action="store_true", help="use synthetic data when no paths are configured")
    p.add_argument("--models")
    p.add_argument("--families")
    p.add_argument("--alpha-grid")
    p.add_argument("--beta-grid")
    p.add_argument("--k-list")
    p.add_argument("--tune", action="store_true")
    p.add_argument("--compare", action="append", choices=("kruskal", "mannwhitney", "wilcoxon"))
    p.add_argument("--compare-alpha", type=float, default=0.5)
    p.add_argument("--compare-k", type=int, default=10)

    p = add("stats", cmd_stats, "rank test on the columns of a CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--test", required=True, choices=("kruskal", "mannwhitney", "wilcoxon"))
    p.add_argument("--columns", help="comma separated column names (default: all)")

    p = add("pareto", cmd_pareto, "mark the Pareto front of a points CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--group-by", default="", help="comma separated columns defining separate fronts")
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, (ConfigError, UsageError)):
        return EXIT_USAGE
    if isinstance(exc, (DataError, OSError)):
        return EXIT_DATA
    return EXIT_INTERNAL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = _exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        if code == EXIT_INTERNAL:
            traceback.print_exc()
        return code


if __name__ == "__main__":
    raise SystemExit(main())
