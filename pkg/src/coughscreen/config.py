"""YAML run configuration with line-numbered diagnostics."""

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .balance import SmoteConfig
from .crossval import SearchGrid
from .errors import ConfigError
from .evaluation import SCORE_FUNCTIONS
from .features import FeatureConfig
from .models import ModelSpec
from .preprocess import TrimConfig

TOP_KEYS = {"manifest", "external_manifest", "output_dir", "seed", "J", "K", "n_inner", "budget",
            "workers", "preprocess", "smote", "grid", "sfs", "cache_dir"}
SFS_KEYS = {"max_dims", "n_splits", "K", "model", "score_function", "features"}


@dataclass(frozen=True)
class SfsSettings:
    max_dims: int = 42
    n_splits: int = 2
    K: int = None
    model: ModelSpec = None
    score_function: str = "I2"
    features: FeatureConfig = None


@dataclass(frozen=True)
class RunConfig:
    path: Path
    manifest: Path
    output_dir: Path
    grid: SearchGrid
    J: int
    K: int
    seed: int = 0
    n_inner: int = 4
    budget: int = None
    workers: int = None
    external_manifest: Path = None
    cache_dir: Path = None
    trim: TrimConfig = TrimConfig()
    smote: SmoteConfig = SmoteConfig()
    sfs: SfsSettings = field(default_factory=SfsSettings)


def _line_index(node, prefix=(), out=None):
    """Map key paths to 1-based source lines."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (k.value,)
            out[path] = k.start_mark.line + 1
            _line_index(v, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            path = prefix + (i,)
            out[path] = v.start_mark.line + 1
            _line_index(v, path, out)
    return out


class _Reader:
    def __init__(self, path, lines):
        self.path = str(path)
        self.lines = lines

    def fail(self, key_path, reason):
        line = 0
        for n in range(len(key_path), -1, -1):
            if tuple(key_path[:n]) in self.lines:
                line = self.lines[tuple(key_path[:n])]
                break
        raise ConfigError(line, reason, self.path)

    def check_keys(self, mapping, allowed, where):
        if not isinstance(mapping, dict):
            self.fail(where, f"{'.'.join(map(str, where)) or 'config'} must be a mapping")
        for k in mapping:
            if k not in allowed:
                self.fail(where + (k,), f"unknown key {k!r}")

    def number(self, value, where, kind=int, minimum=None):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(where, f"{'.'.join(map(str, where))} must be a number")
        if kind is int and value != int(value):
            self.fail(where, f"{'.'.join(map(str, where))} must be an integer")
        value = kind(value)
        if minimum is not None and value < minimum:
            self.fail(where, f"{'.'.join(map(str, where))} must be >= {minimum}")
        return value


def _expand(reader, mapping, where):
    """Cartesian product of list-valued entries; scalars are single-valued axes."""
    names = list(mapping)
    axes = []
    for n in names:
        v = mapping[n]
        v = v if isinstance(v, list) else [v]
        if not v:
            reader.fail(where + (n,), f"empty value list for {n!r}")
        axes.append(v)
    return [dict(zip(names, combo)) for combo in itertools.product(*axes)]


def _resolve(base, value):
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def load_run_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(0, f"cannot read config: {exc.strerror}", str(path)) from None
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(mark.line + 1 if mark else 0, str(getattr(exc, "problem", exc)),
                          str(path)) from None
    r = _Reader(path, _line_index(node) if node is not None else {})
    data = data or {}
    r.check_keys(data, TOP_KEYS, ())
    for key in ("manifest", "grid", "J", "K"):
        if key not in data:
            r.fail((), f"missing required key {key!r}")
    base = path.parent

    trim_d = data.get("preprocess") or {}
    r.check_keys(trim_d, {"margin_ms", "window_ms", "threshold_db"}, ("preprocess",))
    try:
        trim = TrimConfig(**{k: float(v) for k, v in trim_d.items()})
    except (TypeError, ValueError) as exc:
        r.fail(("preprocess",), str(exc))
    smote_d = data.get("smote") or {}
    r.check_keys(smote_d, {"n_candidates", "target_ratio"}, ("smote",))
    try:
        smote = SmoteConfig(**smote_d)
    except (TypeError, ValueError) as exc:
        r.fail(("smote",), str(exc))

    grid_d = data["grid"]
    r.check_keys(grid_d, {"features", "models", "score_functions"}, ("grid",))
    feats = []
    for combo in _expand(r, grid_d.get("features") or {}, ("grid", "features")):
        try:
            feats.append(FeatureConfig(**combo))
        except (TypeError, ValueError) as exc:
            r.fail(("grid", "features"), str(exc))
    models = []
    model_list = grid_d.get("models")
    if not isinstance(model_list, list) or not model_list:
        r.fail(("grid", "models"), "grid.models must be a non-empty list")
    for i, m in enumerate(model_list):
        where = ("grid", "models", i)
        if not isinstance(m, dict) or "family" not in m:
            r.fail(where, "each model entry needs a 'family'")
        for combo in _expand(r, m, where):
            try:
                models.append(ModelSpec(**combo))
            except (TypeError, ValueError) as exc:
                r.fail(where, str(exc))
    scores = grid_d.get("score_functions", list(SCORE_FUNCTIONS))
    scores = scores if isinstance(scores, list) else [scores]
    for i, s in enumerate(scores):
        if s not in SCORE_FUNCTIONS:
            r.fail(("grid", "score_functions"), f"unknown score function {s!r}")
    grid = SearchGrid(tuple(feats), tuple(models), tuple(scores))

    sfs_d = data.get("sfs") or {}
    r.check_keys(sfs_d, SFS_KEYS, ("sfs",))
    sfs_model = None
    if "model" in sfs_d:
        try:
            sfs_model = ModelSpec(**sfs_d["model"])
        except (TypeError, ValueError) as exc:
            r.fail(("sfs", "model"), str(exc))
    sfs_feat = None
    if "features" in sfs_d:
        try:
            sfs_feat = FeatureConfig(**sfs_d["features"])
        except (TypeError, ValueError) as exc:
            r.fail(("sfs", "features"), str(exc))
    sfs = SfsSettings(
        max_dims=r.number(sfs_d.get("max_dims", 42), ("sfs", "max_dims"), minimum=1),
        n_splits=r.number(sfs_d.get("n_splits", 2), ("sfs", "n_splits"), minimum=1),
        K=None if sfs_d.get("K") is None else r.number(sfs_d["K"], ("sfs", "K"), minimum=1),
        model=sfs_model, score_function=sfs_d.get("score_function", "I2"), features=sfs_feat)
    if sfs.score_function not in SCORE_FUNCTIONS:
        r.fail(("sfs", "score_function"), f"unknown score function {sfs.score_function!r}")

    budget = data.get("budget")
    workers = data.get("workers")
    return RunConfig(
        path=path,
        manifest=_resolve(base, data["manifest"]),
        output_dir=_resolve(base, data.get("output_dir", "run")),
        grid=grid,
        J=r.number(data["J"], ("J",), minimum=1),
        K=r.number(data["K"], ("K",), minimum=1),
        seed=r.number(data.get("seed", 0), ("seed",), minimum=0),
        n_inner=r.number(data.get("n_inner", 4), ("n_inner",), minimum=1),
        budget=None if budget is None else r.number(budget, ("budget",), minimum=1),
        workers=None if workers is None else r.number(workers, ("workers",), minimum=1),
        external_manifest=_resolve(base, data.get("external_manifest")),
        cache_dir=_resolve(base, data.get("cache_dir")),
        trim=trim, smote=smote, sfs=sfs)
