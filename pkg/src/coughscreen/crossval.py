"""Nested leave-p-out cross-validation with per-patient separation and grid search."""

import csv
import hashlib
import itertools
import json
import logging
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .balance import SmoteConfig, smote_with_parents
from .errors import (ConfigError, DegenerateLabels, DivergedError, EmptyInput, InsufficientMinority,
                     InvalidPlan, LeakageError, SearchFailed)
from .evaluation import (SCORE_FUNCTIONS, PatientScore, covid_indexes, eer_threshold, mean_metrics,
                         report, roc_auc, write_report, write_roc_csv)
from .features import FeatureConfig
from .models import ModelSpec, fit, load_model, predict_segments_batch, save_model
from .numerics import derive_seed, make_rng

log = logging.getLogger(__name__)

# integer tags keep per-unit seeds for different purposes apart
_SEED_INNER, _SEED_OUTER, _SEED_SMOTE, _SEED_PLAN, _SEED_BUDGET = range(5)


@dataclass(frozen=True)
class InnerSplit:
    fit: tuple
    dev: tuple


@dataclass(frozen=True)
class OuterFold:
    test: tuple
    train: tuple
    inner: tuple


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple
    seed: int
    J: int
    K: int

    def to_dict(self):
        return {"seed": self.seed, "J": self.J, "K": self.K,
                "folds": [{"test": list(f.test), "train": list(f.train),
                           "inner": [{"fit": list(s.fit), "dev": list(s.dev)} for s in f.inner]}
                          for f in self.folds]}

    @classmethod
    def from_dict(cls, d):
        folds = tuple(OuterFold(tuple(f["test"]), tuple(f["train"]),
                                tuple(InnerSplit(tuple(s["fit"]), tuple(s["dev"])) for s in f["inner"]))
                      for f in d["folds"])
        return cls(folds, int(d["seed"]), int(d["J"]), int(d["K"]))

    def fingerprint(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _patient_pairs(patients):
    """Normalise ids, ``(id, label)`` pairs or record objects into (id, label) pairs."""
    out = []
    for p in patients:
        if isinstance(p, str):
            out.append((p, None))
        elif hasattr(p, "patient_id"):
            out.append((p.patient_id, int(p.label.is_positive)))
        else:
            pid, lab = p
            out.append((pid, None if lab is None else int(getattr(lab, "is_positive", lab))))
    return out


def _stratified_order(pairs, rng):
    """Shuffle, then interleave classes so every contiguous chunk keeps the class mix."""
    perm = rng.permutation(len(pairs))
    shuffled = [pairs[i] for i in perm]
    labels = [lab for _, lab in shuffled]
    if any(lab is None for lab in labels):
        return [pid for pid, _ in shuffled]
    counts = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    seen = {}
    keys = []
    for idx, lab in enumerate(labels):
        r = seen.get(lab, 0)
        seen[lab] = r + 1
        keys.append(((r + 0.5) / counts[lab], lab, idx))
    return [shuffled[k[2]][0] for k in sorted(keys)]


def make_fold_plan(patients, J, K, seed=0, n_inner=4):
    """Outer test sets of ``J`` patients and ``n_inner`` dev sets of ``K`` per outer fold.

    ``patients`` holds ids, ``(id, label)`` pairs or objects with
    ``patient_id`` and ``label``. With labels the shuffle is stratified.
    The ``N mod J`` leftover patients are never tested; they always train.
    """
    pairs = _patient_pairs(patients)
    ids = [pid for pid, _ in pairs]
    n = len(ids)
    if len(set(ids)) != n:
        raise InvalidPlan("patient ids must be unique")
    if J < 1 or K < 1 or n_inner < 1 or J + K >= n:
        raise InvalidPlan(f"infeasible plan: N={n}, J={J}, K={K}, n_inner={n_inner}")
    rng = make_rng(derive_seed(seed, _SEED_PLAN))
    order = _stratified_order(pairs, rng)
    label_of = dict(pairs)
    folds = []
    for o in range(n // J):
        test = tuple(order[o * J:(o + 1) * J])
        test_set = set(test)
        train = tuple(pid for pid in order if pid not in test_set)
        train_pairs = [(pid, label_of[pid]) for pid in train]
        splits = []
        inner_order = []
        for s in range(n_inner):
            chunk = s % (len(train) // K)
            if chunk == 0:
                inner_order = _stratified_order(train_pairs, rng)
            dev = tuple(inner_order[chunk * K:(chunk + 1) * K])
            dev_set = set(dev)
            splits.append(InnerSplit(tuple(pid for pid in train if pid not in dev_set), dev))
        folds.append(OuterFold(test, train, tuple(splits)))
    plan = FoldPlan(tuple(folds), int(seed), int(J), int(K))
    check_plan(plan, ids)
    return plan


def make_dev_splits(patients, K, n_splits=2, seed=0):
    """``n_splits`` stratified (fit, dev) splits of ``patients`` with ``K`` dev patients each."""
    pairs = _patient_pairs(patients)
    n = len(pairs)
    if K < 1 or K >= n or n_splits < 1:
        raise InvalidPlan(f"infeasible dev splits: N={n}, K={K}, n_splits={n_splits}")
    rng = make_rng(derive_seed(seed, _SEED_PLAN))
    ids = [pid for pid, _ in pairs]
    splits = []
    order = []
    for s in range(n_splits):
        chunk = s % (n // K)
        if chunk == 0:
            order = _stratified_order(pairs, rng)
        dev = tuple(order[chunk * K:(chunk + 1) * K])
        dev_set = set(dev)
        splits.append(InnerSplit(tuple(pid for pid in ids if pid not in dev_set), dev))
    return tuple(splits)

def check_plan(plan, patient_ids=None):
    """Raise :class:`LeakageError` unless every split keeps patients apart."""
    seen_test = set()
    universe = None if patient_ids is None else set(patient_ids)
    for o, fold in enumerate(plan.folds):
        test, train = set(fold.test), set(fold.train)
        if len(test) != len(fold.test) or len(train) != len(fold.train):
            raise LeakageError(f"outer fold {o} lists a patient twice")
        if test & train:
            raise LeakageError(f"outer fold {o}: patients in train and test: {sorted(test & train)}")
        if test & seen_test:
            raise LeakageError(f"outer fold {o}: test patients reused: {sorted(test & seen_test)}")
        seen_test |= test
        if universe is not None and not (test | train) <= universe:
            raise LeakageError(f"outer fold {o}: unknown patients {sorted((test | train) - universe)}")
        for s, split in enumerate(fold.inner):
            fit_ids, dev = set(split.fit), set(split.dev)
            if fit_ids & dev:
                raise LeakageError(f"fold {o} split {s}: patients in fit and dev: {sorted(fit_ids & dev)}")
            if (fit_ids | dev) & test:
                raise LeakageError(f"fold {o} split {s}: test patients inside inner split")
            if not (fit_ids | dev) <= train:
                raise LeakageError(f"fold {o} split {s}: inner split exceeds the training side")


def _as_tuple(v):
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


@dataclass(frozen=True)
class SearchGrid:
    feature_configs: tuple
    model_specs: tuple
    score_functions: tuple = SCORE_FUNCTIONS

    def __post_init__(self):
        object.__setattr__(self, "feature_configs", _as_tuple(self.feature_configs))
        object.__setattr__(self, "model_specs", _as_tuple(self.model_specs))
        object.__setattr__(self, "score_functions", _as_tuple(self.score_functions))
        if not self.feature_configs or not self.model_specs or not self.score_functions:
            raise ConfigError(0, "search grid needs at least one value on every axis")
        for sf in self.score_functions:
            if sf not in SCORE_FUNCTIONS:
                raise ConfigError(0, f"unknown score function {sf!r}")

    def __len__(self):
        return len(self.feature_configs) * len(self.model_specs) * len(self.score_functions)

    def coordinates(self):
        """Every ``(feature, model, score)`` index triple in lexicographic order."""
        return list(itertools.product(range(len(self.feature_configs)), range(len(self.model_specs)),
                                      range(len(self.score_functions))))

    def subsample(self, budget, seed=0):
        """Coordinates of at most ``budget`` grid points, chosen by seed, in lexicographic order."""
        coords = self.coordinates()
        if budget is None or budget >= len(coords):
            return coords
        if budget < 1:
            raise ConfigError(0, "budget must be positive")
        rng = make_rng(derive_seed(seed, _SEED_BUDGET))
        pick = np.sort(rng.choice(len(coords), size=budget, replace=False))
        return [coords[i] for i in pick]

    def point(self, coord):
        fi, mi, si = coord
        return self.feature_configs[fi], self.model_specs[mi], self.score_functions[si]

    def fingerprint(self):
        d = {"features": [c.to_dict() for c in self.feature_configs],
             "models": [m.to_dict() for m in self.model_specs],
             "scores": list(self.score_functions)}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# ---- training with in-fold balancing ---------------------------------------------------------

@dataclass(frozen=True)
class BalancedSet:
    matrices: list
    labels: np.ndarray
    parent_patients: tuple  # one (patient, patient) pair per synthetic


def balance_training_set(fms, smote_config, seed):
    """Add SMOTE coughs to the minority class of ``fms``, tracking each synthetic's parents."""
    mats = [fm.values for fm in fms]
    labels = np.array([int(fm.label.is_positive) for fm in fms], dtype=np.int64)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == n_neg or min(n_pos, n_neg) == 0:
        return BalancedSet(mats, labels, ())
    minority = 1 if n_pos < n_neg else 0
    idx = np.flatnonzero(labels == minority)
    shape = mats[idx[0]].shape
    vecs = np.stack([mats[i].ravel() for i in idx])
    cfg = SmoteConfig(smote_config.n_candidates, smote_config.target_ratio, seed)
    try:
        res = smote_with_parents(vecs, max(n_pos, n_neg), cfg)
    except InsufficientMinority:
        log.warning("minority class has fewer than 2 coughs; training without SMOTE")
        return BalancedSet(mats, labels, ())
    parents = tuple((fms[idx[a]].patient_id, fms[idx[b]].patient_id) for a, b in res.parents)
    synth = [v.reshape(shape) for v in res.synthetic]
    return BalancedSet(mats + synth, np.concatenate([labels, np.full(len(synth), minority)]), parents)


def train_on(spec, fms, fit_ids, smote_config, seed):
    """Fit ``spec`` on the coughs in ``fms`` after in-fold SMOTE; verifies provenance."""
    allowed = set(fit_ids)
    stray = {fm.patient_id for fm in fms} - allowed
    if stray:
        raise LeakageError(f"training coughs from patients outside the fit set: {sorted(stray)}")
    bal = balance_training_set(fms, smote_config, derive_seed(seed, _SEED_SMOTE))
    for pa, pb in bal.parent_patients:
        if pa not in allowed or pb not in allowed:
            raise LeakageError(f"synthetic cough derived from non-fit patients {pa!r}, {pb!r}")
    return fit(spec, bal.matrices, bal.labels, seed=seed)


def cough_probabilities(model, fms):
    """(per-cough mean probability, per-cough segment probabilities)."""
    segs = predict_segments_batch(model, [fm.values for fm in fms])
    return np.array([s.mean() for s in segs]), segs


def patient_scores(model, fms, gamma_ee, labels):
    """One :class:`PatientScore` per patient in ``fms``, in first-seen order."""
    phat, segs = cough_probabilities(model, fms)
    groups = {}
    for fm, p, s in zip(fms, phat, segs):
        groups.setdefault(fm.patient_id, ([], []))
        groups[fm.patient_id][0].append(p)
        groups[fm.patient_id][1].append(s)
    return [covid_indexes(ph, sg, gamma_ee, pid, labels[pid]) for pid, (ph, sg) in groups.items()]


def cough_gamma(model, fms):
    """Equal-error threshold of per-cough probabilities on ``fms``."""
    phat, _ = cough_probabilities(model, fms)
    y = np.array([int(fm.label.is_positive) for fm in fms])
    return eer_threshold(roc_auc(phat, y))


# ---- worker side ------------------------------------------------------------------------------

_STATE = {}


def _select(groups, ids):
    return [fm for pid in ids for fm in groups[pid]]


def _inner_unit(key):
    """Train one (outer fold, feature config, model spec, inner split) unit."""
    o, fi, mi, s = key
    st = _STATE
    grid, plan = st["grid"], st["plan"]
    groups = st["groups"][fi]
    split = plan.folds[o].inner[s]
    spec = grid.model_specs[mi]
    seed = derive_seed(st["seed"], _SEED_INNER, o, fi, mi, s)
    rec = {"outer": o, "feature": fi, "model": mi, "split": s}
    try:
        model = train_on(spec, _select(groups, split.fit), split.fit, st["smote"], seed)
    except (DivergedError, DegenerateLabels) as exc:
        rec.update(diverged=True, error=exc.to_record())
        return rec
    dev = _select(groups, split.dev)
    gamma = cough_gamma(model, dev)
    scores = patient_scores(model, dev, gamma, st["labels"])
    y = np.array([p.label for p in scores])
    rec["gamma"] = gamma
    rec["auc"] = {sf: roc_auc(np.array([p.index(sf) for p in scores]), y).auc
                  for sf in grid.score_functions}
    return rec


# ---- checkpoint -----------------------------------------------------------------------------

class Checkpoint:
    """Append-only JSONL log of finished inner units, keyed by a run fingerprint."""

    def __init__(self, path, fingerprint):
        self.path = Path(path) if path else None
        self.fingerprint = fingerprint
        self.records = {}
        if self.path is None:
            return
        if self.path.exists():
            with open(self.path) as fh:
                for lineno, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        log.warning("ignoring truncated checkpoint line %d", lineno)
                        continue
                    if "fingerprint" in rec:
                        if rec["fingerprint"] != fingerprint:
                            raise ConfigError(lineno, "checkpoint belongs to a different run",
                                              str(self.path))
                        continue
                    self.records[self._key(rec)] = rec
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._append({"fingerprint": fingerprint})

    @staticmethod
    def _key(rec):
        return (rec["outer"], rec["feature"], rec["model"], rec["split"])

    def _append(self, rec):
        with open(self.path, "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def add(self, rec):
        self.records[self._key(rec)] = rec
        if self.path is not None:
            self._append(rec)


def _run_units(keys, workers, ckpt):
    todo = [k for k in keys if k not in ckpt.records]
    if not todo:
        return
    if workers > 1 and len(todo) > 1:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            for rec in pool.map(_inner_unit, todo, chunksize=1):
                ckpt.add(rec)
    else:
        for key in todo:
            ckpt.add(_inner_unit(key))


# ---- driver ---------------------------------------------------------------------------------

@dataclass(eq=False)
class FoldOutcome:
    outer: int
    coords: tuple
    feature_config: FeatureConfig
    model_spec: ModelSpec
    score_function: str
    dev_auc: float
    gamma_ee: float
    report: object
    model: object
    test_patients: tuple
    train_patients: tuple
    test_scores: list = field(default_factory=list)

    def chosen(self):
        return {"outer": self.outer, "coords": list(self.coords),
                "features": self.feature_config.to_dict(), "model": self.model_spec.to_dict(),
                "score_function": self.score_function, "dev_auc": self.dev_auc,
                "gamma_ee": self.gamma_ee}


@dataclass(eq=False)
class NestedCVResult:
    folds: list
    grid_scores: dict
    skipped: list = field(default_factory=list)

    @property
    def reports(self):
        return [f.report for f in self.folds]

    @property
    def mean(self):
        return mean_metrics(self.reports)

    @property
    def mean_auc(self):
        return self.mean["auc"]

    def pooled_roc(self):
        """ROC over every outer test patient, each scored by its own fold's index."""
        s = [p.index(f.score_function) for f in self.folds for p in f.test_scores]
        y = [p.label for f in self.folds for p in f.test_scores]
        return roc_auc(np.array(s), np.array(y))


def default_workers():
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_nested_cv(corpus, grid, plan, seed=0, smote_config=SmoteConfig(), budget=None,
                  workers=1, checkpoint=None):
    """Grid search inside each outer fold, then a single held-out evaluation per fold.

    Every grid point is scored by mean dev-patient AUC over the inner
    splits. The best point (ties go to the smallest coordinates) is
    retrained on the whole training side and evaluated on the test side.
    """
    check_plan(plan, corpus.patient_ids)
    for fold in plan.folds:
        if not fold.test:
            raise EmptyInput("outer fold with no test patients")
    coords = grid.subsample(budget, seed)
    pairs = sorted({(fi, mi) for fi, mi, _ in coords})
    feature_idx = sorted({fi for fi, _ in pairs})
    groups = {fi: corpus.by_patient(grid.feature_configs[fi]) for fi in feature_idx}
    fingerprint = hashlib.sha256(json.dumps(
        [grid.fingerprint(), plan.fingerprint(), seed, budget, smote_config.n_candidates,
         smote_config.target_ratio]).encode()).hexdigest()[:16]
    ckpt = Checkpoint(checkpoint, fingerprint)
    _STATE.clear()
    _STATE.update(grid=grid, plan=plan, groups=groups, labels=dict(corpus.labels), seed=seed,
                  smote=smote_config)
    keys = [(o, fi, mi, s) for o, fold in enumerate(plan.folds) for fi, mi in pairs
            for s in range(len(fold.inner))]
    _run_units(keys, workers, ckpt)

    outcomes, grid_scores, skipped = [], {}, []
    for o, fold in enumerate(plan.folds):
        scores = {}
        gammas = {}
        for fi, mi in pairs:
            recs = [ckpt.records[(o, fi, mi, s)] for s in range(len(fold.inner))]
            if any(r.get("diverged") for r in recs):
                log.warning("outer fold %d: grid point (%d, %d) diverged; skipped", o, fi, mi)
                skipped.append({"outer": o, "feature": fi, "model": mi})
                continue
            gammas[(fi, mi)] = float(np.mean([r["gamma"] for r in recs]))
            for c in coords:
                if c[:2] == (fi, mi):
                    sf = grid.score_functions[c[2]]
                    scores[c] = float(np.mean([r["auc"][sf] for r in recs]))
        if not scores:
            raise SearchFailed(f"every grid point diverged in outer fold {o}")
        best = max(scores, key=lambda c: (scores[c], tuple(-v for v in c)))
        fc, spec, sf = grid.point(best)
        gamma = gammas[best[:2]]
        g = groups[best[0]]
        model = train_on(spec, _select(g, fold.train), fold.train, smote_config,
                         derive_seed(seed, _SEED_OUTER, o))
        test_scores = patient_scores(model, _select(g, fold.test), gamma, corpus.labels)
        rep = report(test_scores, sf, gamma_ee=gamma)
        outcomes.append(FoldOutcome(o, best, fc, spec, sf, scores[best], gamma, rep, model,
                                    fold.test, fold.train, test_scores))
        grid_scores[o] = scores
    return NestedCVResult(outcomes, grid_scores, skipped)


# ---- fitted pipelines and external evaluation ------------------------------------------------

@dataclass(eq=False)
class FittedPipeline:
    feature_config: FeatureConfig
    model: object
    gamma_ee: float
    score_function: str

    @classmethod
    def from_outcome(cls, outcome):
        return cls(outcome.feature_config, outcome.model, outcome.gamma_ee, outcome.score_function)


def save_run(result, out_dir, plan=None):
    """Write per-fold models, reports and ROC data plus the aggregate report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chosen = []
    for f in result.folds:
        d = out / f"fold_{f.outer}"
        d.mkdir(exist_ok=True)
        save_model(f.model, d / "model.csmd")
        (d / "pipeline.json").write_text(json.dumps(
            {"features": f.feature_config.to_dict(), "gamma_ee": f.gamma_ee,
             "score_function": f.score_function}, indent=2, sort_keys=True))
        write_report(d / "report.json", f.report, chosen=f.chosen(),
                     test_patients=list(f.test_patients))
        write_roc_csv(d / "roc.csv", f.report.roc)
        write_patient_scores(d / "scores.csv", f.test_scores)
        chosen.append(f.chosen())
    write_roc_csv(out / "roc.csv", result.pooled_roc())
    (out / "chosen.json").write_text(json.dumps(chosen, indent=2, sort_keys=True))
    summary = {"mean": result.mean, "n_folds": len(result.folds), "skipped": result.skipped,
               "folds": [{"outer": f.outer, "auc": f.report.auc, "sensitivity": f.report.sensitivity,
                          "specificity": f.report.specificity, "accuracy": f.report.accuracy}
                         for f in result.folds]}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    if plan is not None:
        (out / "plan.json").write_text(json.dumps(plan.to_dict(), indent=2, sort_keys=True))
    return out


def write_patient_scores(path, scores):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "label", "covid_i1", "covid_i2", "n_coughs", "n_segments"])
        for p in scores:
            w.writerow([p.patient_id, p.label, repr(p.covid_i1), repr(p.covid_i2), p.n1, p.n2])


def load_pipelines(run_dir):
    """Fitted pipelines from every ``fold_*`` directory of a saved run."""
    run = Path(run_dir)
    dirs = sorted(run.glob("fold_*"), key=lambda p: int(p.name.split("_")[1]))
    if not dirs:
        raise EmptyInput(f"no fold directories under {run}")
    out = []
    for d in dirs:
        meta = json.loads((d / "pipeline.json").read_text())
        out.append(FittedPipeline(FeatureConfig(**meta["features"]), load_model(d / "model.csmd"),
                                  float(meta["gamma_ee"]), meta["score_function"]))
    return out


def evaluate_external(pipelines, corpus):
    """Patient-level report on a held-out corpus; nothing is refit and nothing is resampled.

    With several pipelines (one per outer fold) the patient indexes are
    averaged across them before scoring.
    """
    if isinstance(pipelines, FittedPipeline):
        pipelines = [pipelines]
    pipelines = list(pipelines)
    if len(corpus) == 0:
        raise EmptyInput("external corpus has no patients")
    if not pipelines:
        raise EmptyInput("no fitted pipelines to evaluate")
    per_model = []
    for p in pipelines:
        fms = corpus.features(p.feature_config)
        per_model.append(patient_scores(p.model, fms, p.gamma_ee, corpus.labels))
    sf = pipelines[0].score_function
    gamma = float(np.mean([p.gamma_ee for p in pipelines]))
    if len(per_model) == 1:
        scores = per_model[0]
    else:
        scores = []
        for items in zip(*per_model):
            scores.append(PatientScore(items[0].patient_id,
                                       float(np.mean([s.covid_i1 for s in items])),
                                       float(np.mean([s.covid_i2 for s in items])),
                                       items[0].n1, items[0].n2, items[0].label))
    return report(scores, sf, gamma_ee=gamma)

