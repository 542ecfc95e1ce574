"""Experiment configuration: defaults < INI file < ``FAIRPOI_*`` environment < CLI flags.

File grammar (``configparser`` INI, ``#``/``;`` comments, lists are comma
separated, (alpha, beta) pairs are written ``alpha:beta``)::

    [data]
    checkins = raw/checkins.tsv      # omit to use [synthetic]
    pois = raw/pois.tsv
    social = raw/social.tsv
    delimiter = tab                  # tab | comma
    min_users_per_poi = 10
    min_pois_per_user = 10

    [synthetic]                      # any SyntheticConfig field
    n_users = 200

    [sweep]
    models = USG, GeoSoCa, LORE
    families = powerlaw, linear, logistic
    alpha_grid = 0, 0.25, 0.5, 0.75, 1
    beta_grid = 0
    k_list = 5, 10, 20
    tradeoff_pairs = 0:0, 0:0.5, 0:1, 0.25:0.25, 0.5:0, 0.5:0.5, 1:0
    tradeoff_family = linear
    ridge_lambda = 10
    hit_rate = false
    tune = false
    tune_k = 10
    tune_exposure_floor = 0

    [model.USG]                      # per-model hyperparameters
    social_weight = 0.1

    [run]
    seed = 0
    jobs = 1
    out = results

Every key can be overridden from the environment as
``FAIRPOI_<SECTION>_<KEY>`` (``FAIRPOI_SWEEP_ALPHA_GRID=0,1``,
``FAIRPOI_MODEL_USG_SOCIAL_WEIGHT=0.2``); the ``[run]`` keys and the data
delimiter also answer to the short forms ``FAIRPOI_SEED``, ``FAIRPOI_JOBS``,
``FAIRPOI_OUT`` and ``FAIRPOI_DELIMITER``.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .corpus import DELIMITERS, SyntheticConfig
from .errors import ConfigError
from .fairness import ExposureFamily
from .recommenders import ModelKind

ENV_PREFIX = "FAIRPOI_"
DEFAULT_ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_TRADEOFF_PAIRS = ((0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.25, 0.25), (0.5, 0.0), (0.5, 0.5), (1.0, 0.0))
_SHORT_ENV = {"SEED": ("run", "seed"), "JOBS": ("run", "jobs"), "OUT": ("run", "out"),
              "DELIMITER": ("data", "delimiter")}
_SECTIONS = ("data", "synthetic", "sweep", "run")


@dataclass(frozen=True)
class ExperimentConfig:
    checkins: Optional[str] = None
    pois: Optional[str] = None
    social: Optional[str] = None
    delimiter: str = "tab"
    synthetic: Optional[SyntheticConfig] = None
    min_users_per_poi: int = 10
    min_pois_per_user: int = 10
    models: tuple = ("USG", "GeoSoCa", "LORE")
    families: tuple = ("powerlaw", "linear", "logistic")
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    beta_grid: tuple = (0.0,)
    k_list: tuple = (5, 10, 20)
    tradeoff_pairs: tuple = DEFAULT_TRADEOFF_PAIRS
    tradeoff_family: str = "linear"
    ridge_lambda: float = 10.0
    hit_rate: bool = False
    model_params: Mapping[str, Mapping[str, object]] = field(default_factory=dict)
    tune: bool = False
    tune_k: int = 10
    tune_exposure_floor: float = 0.0
    out_dir: str = "results"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.synthetic is None and not (self.checkins and self.pois):
            raise ConfigError("configure either check-in and POI paths or a [synthetic] section")
        if self.delimiter not in DELIMITERS:
            raise ConfigError(f"delimiter must be 'tab' or 'comma', got {self.delimiter!r}")
        object.__setattr__(self, "models", tuple(ModelKind.parse(m).value for m in self.models))
        fams = tuple(ExposureFamily.parse(f).value for f in self.families)
        object.__setattr__(self, "families", fams)
        object.__setattr__(self, "tradeoff_family", ExposureFamily.parse(self.tradeoff_family).value)
        if not self.models:
            raise ConfigError("at least one model is required")
        for name in ("alpha_grid", "beta_grid"):
            grid = tuple(float(v) for v in getattr(self, name))
            if any(not 0.0 <= v <= 1.0 for v in grid):
                raise ConfigError(f"{name} values must lie in [0, 1], got {grid}")
            object.__setattr__(self, name, grid)
        pairs = tuple((float(a), float(b)) for a, b in self.tradeoff_pairs)
        if any(not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0) for a, b in pairs):
            raise ConfigError(f"tradeoff pairs must lie in [0, 1]^2, got {pairs}")
        object.__setattr__(self, "tradeoff_pairs", pairs)
        ks = tuple(int(k) for k in self.k_list)
        if not ks or any(k < 1 for k in ks):
            raise ConfigError(f"k_list values must be >= 1, got {self.k_list}")
        object.__setattr__(self, "k_list", ks)
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.tune_k < 1:
            raise ConfigError("tune_k must be >= 1")
        if self.ridge_lambda < 0:
            raise ConfigError("ridge_lambda must be >= 0")
        if self.min_users_per_poi < 1 or self.min_pois_per_user < 1:
            raise ConfigError("filter thresholds must be >= 1")
        if self.synthetic is not None and self.synthetic.rng_seed != self.seed:
            object.__setattr__(self, "synthetic", dataclasses.replace(self.synthetic, rng_seed=self.seed))

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model_params"] = {k: dict(sorted(v.items())) for k, v in sorted(self.model_params.items())}
        return d

    def data_hash(self) -> str:
        """Hash of everything that determines the trained models."""
        d = self.as_dict()
        keys = ("checkins", "pois", "social", "delimiter", "synthetic", "min_users_per_poi",
                "min_pois_per_user", "model_params", "ridge_lambda", "seed")
        return _digest({k: d[k] for k in keys})

    def config_hash(self) -> str:
        d = self.as_dict()
        for k in ("out_dir", "jobs"):
            d.pop(k)
        return _digest(d)

    def params_for(self, model: str) -> dict:
        return dict(self.model_params.get(model, {}))


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


# ---------------------------------------------------------------- parsing

def _list(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _num(text, kind=float):
    try:
        return kind(text)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {kind.__name__}, got {text!r}") from None


def _pairs(text) -> tuple:
    out = []
    for item in _list(text):
        a, sep, b = item.partition(":")
        if not sep:
            raise ConfigError(f"tradeoff pair must be written alpha:beta, got {item!r}")
        out.append((_num(a), _num(b)))
    return tuple(out)


def param_value(text: str):
    t = str(text).strip()
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    for kind in (int, float):
        try:
            return kind(t)
        except ValueError:
            pass
    return t


_SWEEP_KEYS = {
    "models": lambda v: tuple(_list(v)),
    "families": lambda v: tuple(_list(v)),
    "alpha_grid": lambda v: tuple(_num(x) for x in _list(v)),
    "beta_grid": lambda v: tuple(_num(x) for x in _list(v)),
    "k_list": lambda v: tuple(_num(x, int) for x in _list(v)),
    "tradeoff_pairs": _pairs,
    "tradeoff_family": str,
    "ridge_lambda": _num,
    "hit_rate": _bool,
    "tune": _bool,
    "tune_k": lambda v: _num(v, int),
    "tune_exposure_floor": _num,
}
_DATA_KEYS = {
    "checkins": str, "pois": str, "social": str, "delimiter": str,
    "min_users_per_poi": lambda v: _num(v, int),
    "min_pois_per_user": lambda v: _num(v, int),
}
_RUN_KEYS = {"seed": lambda v: _num(v, int), "jobs": lambda v: _num(v, int), "out": str}
_SYNTH_FIELDS = {f.name: f.type for f in dataclasses.fields(SyntheticConfig)}


def synthetic_value(key: str, value):
    if key not in _SYNTH_FIELDS:
        raise ConfigError(f"unknown [synthetic] key {key!r}")
    if key == "max_popularity":
        return None if str(value).strip().lower() in ("", "none") else _num(value, int)
    kind = int if key in ("n_users", "n_pois", "n_geo_clusters", "rng_seed", "n_categories") else float
    return _num(value, kind)


def read_config_file(path) -> dict[str, dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep model names' case
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {s: {k.lower(): v for k, v in parser.items(s)} for s in parser.sections()}


def env_overrides(environ: Mapping[str, str], model_names=()) -> dict[str, dict[str, str]]:
    """Map ``FAIRPOI_*`` variables onto config sections."""
    out: dict[str, dict[str, str]] = {}
    sections = list(_SECTIONS) + [f"model.{m}" for m in model_names]
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        if rest in _SHORT_ENV:
            sec, key = _SHORT_ENV[rest]
            out.setdefault(sec, {})[key] = value
            continue
        for sec in sorted(sections, key=len, reverse=True):
            tag = sec.upper().replace(".", "_") + "_"
            if rest.upper().startswith(tag) and len(rest) > len(tag):
                out.setdefault(sec, {})[rest[len(tag):].lower()] = value
                break
    return out


def build_config(sections: Mapping[str, Mapping[str, object]]) -> ExperimentConfig:
    """Turn merged ``{section: {key: value}}`` text into a validated config."""
    kwargs: dict = {}
    for sec, keys in sections.items():
        if sec not in _SECTIONS and not sec.startswith("model."):
            raise ConfigError(f"unknown config section [{sec}]")
    for key, value in sections.get("data", {}).items():
        if key not in _DATA_KEYS:
            raise ConfigError(f"unknown [data] key {key!r}")
        kwargs[key] = _DATA_KEYS[key](value)
    for key, value in sections.get("sweep", {}).items():
        if key not in _SWEEP_KEYS:
            raise ConfigError(f"unknown [sweep] key {key!r}")
        kwargs[key] = _SWEEP_KEYS[key](value)
    for key, value in sections.get("run", {}).items():
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown [run] key {key!r}")
        kwargs["out_dir" if key == "out" else key] = _RUN_KEYS[key](value)
    synth = sections.get("synthetic")
    if synth is not None and not kwargs.get("checkins"):
        values = {k: synthetic_value(k, v) for k, v in synth.items()}
        try:
            kwargs["synthetic"] = SyntheticConfig(**values)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    params = {}
    for sec, keys in sections.items():
        if sec.startswith("model."):
            name = ModelKind.parse(sec[len("model."):]).value
            params[name] = {k: param_value(v) for k, v in keys.items()}
    kwargs["model_params"] = params
    return ExperimentConfig(**kwargs)


def merge_sections(*layers: Mapping[str, Mapping[str, object]]) -> dict[str, dict[str, object]]:
    out: dict[str, dict[str, object]] = {}
    for layer in layers:
        for sec, keys in layer.items():
            out.setdefault(sec, {}).update(keys)
    return out


def load_config(path=None, environ: Optional[Mapping[str, str]] = None,
                overrides: Optional[Mapping[str, Mapping[str, object]]] = None) -> ExperimentConfig:
    file_layer = read_config_file(path) if path else {}
    environ = os.environ if environ is None else environ
    models = [s[len("model."):] for s in file_layer if s.startswith("model.")] + [m.value for m in ModelKind]
    return build_config(merge_sections(file_layer, env_overrides(environ, models), overrides or {}))
