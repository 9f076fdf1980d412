"""Greedy sequential forward search over feature dimensions."""

import csv
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .balance import SmoteConfig
from .crossval import make_dev_splits, patient_scores, cough_gamma, train_on
from .errors import DegenerateLabels, DivergedError, ShapeError
from .evaluation import roc_auc
from .features import FeatureMatrix
from .numerics import derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SfsResult:
    order: tuple  # selected dim indices, in selection order
    trace: tuple  # (step, dim_name, dev_auc)
    best_subset: tuple
    best_auc: float
    dim_names: tuple

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "dim_name", "dev_auc"])
            for step, name, auc in self.trace:
                w.writerow([step, name, repr(float(auc))])


def restrict(fms, subset, remove):
    """Keep only ``subset`` dims: drop the rest when ``remove`` else zero them."""
    cols = list(subset)
    out = []
    for fm in fms:
        if remove:
            v = fm.values[:, cols]
            names = tuple(fm.dim_names[c] for c in cols)
        else:
            v = np.zeros_like(fm.values)
            v[:, cols] = fm.values[:, cols]
            names = fm.dim_names
        out.append(FeatureMatrix(v, names, fm.patient_id, fm.cough_id, fm.label, fm.meta))
    return out


_STATE = {}


def _subset_auc(subset):
    """Mean dev AUC of the fixed model on ``subset``, or ``None`` if every split diverged."""
    st = _STATE
    fms = restrict(st["features"], subset, st["remove"])
    by_pid = {}
    for fm in fms:
        by_pid.setdefault(fm.patient_id, []).append(fm)
    aucs = []
    for s, split in enumerate(st["splits"]):
        fit_fms = [fm for pid in split.fit for fm in by_pid[pid]]
        dev_fms = [fm for pid in split.dev for fm in by_pid[pid]]
        try:
            model = train_on(st["spec"], fit_fms, split.fit, st["smote"], derive_seed(st["seed"], s))
        except (DivergedError, DegenerateLabels) as exc:
            log.warning("subset %s split %d failed: %s", subset, s, exc)
            continue
        gamma = cough_gamma(model, dev_fms)
        scores = patient_scores(model, dev_fms, gamma, st["labels"])
        y = np.array([p.label for p in scores])
        aucs.append(roc_auc(np.array([p.index(st["score_function"]) for p in scores]), y).auc)
    return float(np.mean(aucs)) if aucs else None


def sfs(features, spec, splits=None, max_dims=None, seed=0, score_function="I2", K=None,
        n_splits=2, smote_config=SmoteConfig(), workers=1):
    """Add, one at a time, the dim whose inclusion gives the highest mean dev AUC.

    ``splits`` are (fit, dev) patient splits; by default ``n_splits``
    stratified splits with ``K`` (a fifth of the patients) dev patients.
    Ties go to the lowest dim index. Dims outside the subset are removed for
    segment-level families and zeroed for matrix families.
    """
    features = list(features)
    if not features:
        raise ShapeError("no feature matrices")
    names = features[0].dim_names
    d = len(names)
    if d < 2:
        raise ShapeError("forward search needs at least 2 dims")
    if any(fm.dim_names != names for fm in features):
        raise ShapeError("feature matrices disagree on dim names")
    labels = {fm.patient_id: int(fm.label.is_positive) for fm in features}
    if splits is None:
        pairs = list(labels.items())
        splits = make_dev_splits(pairs, K or max(1, len(pairs) // 5), n_splits, seed)
    max_dims = d if max_dims is None else min(max_dims, d)
    _STATE.clear()
    _STATE.update(features=features, spec=spec.resolved(), splits=tuple(splits), labels=labels,
                  seed=seed, smote=smote_config, score_function=score_function,
                  remove=spec.segment_level)

    chosen, trace = [], []
    pool = None
    if workers > 1:
        pool = ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("fork"))
    try:
        while len(chosen) < max_dims:
            candidates = [j for j in range(d) if j not in chosen]
            subsets = [sorted(chosen + [j]) for j in candidates]
            if pool is not None:
                aucs = list(pool.map(_subset_auc, subsets))
            else:
                aucs = [_subset_auc(sub) for sub in subsets]
            valid = [(a, j) for a, j in zip(aucs, candidates) if a is not None]
            for a, j in zip(aucs, candidates):
                if a is None:
                    log.warning("dim %s skipped at step %d: every run diverged", names[j], len(chosen) + 1)
            if not valid:
                break
            best_auc, best_j = max(valid, key=lambda t: (t[0], -t[1]))
            chosen.append(best_j)
            trace.append((len(chosen), names[best_j], best_auc))
    finally:
        if pool is not None:
            pool.shutdown()
    if not trace:
        return SfsResult((), (), (), float("nan"), names)
    k = int(np.argmax([t[2] for t in trace]))
    return SfsResult(tuple(chosen), tuple(trace), tuple(chosen[:k + 1]), float(trace[k][2]), names)
