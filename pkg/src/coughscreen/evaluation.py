"""ROC analysis, equal-error-rate thresholds and patient-level COVID index scores."""

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateLabels, EmptyInput

SCORE_FUNCTIONS = ("I1", "I2")


def _split_pairs(scores, labels):
    if labels is None:
        pairs = list(scores)
        scores = [s for s, _ in pairs]
        labels = [lab for _, lab in pairs]
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray([int(getattr(v, "is_positive", v)) for v in labels], dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise DegenerateLabels("ROC analysis needs both classes")
    return s, y


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Operating points for thresholds ``score >= t``, from ``t = +inf`` down to the lowest score."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    tp: np.ndarray
    fp: np.ndarray
    n_pos: int
    n_neg: int

    def trapezoid_area(self):
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))


def _class_counts(s, y):
    values, inv = np.unique(s, return_inverse=True)
    pos = np.bincount(inv, weights=y, minlength=values.size).astype(np.int64)
    neg = np.bincount(inv, minlength=values.size).astype(np.int64) - pos
    return values, pos, neg


def roc_auc(scores, labels=None):
    """ROC curve over every distinct score; AUC by the Mann-Whitney statistic with ties as 1/2.

    Accepts ``(score, label)`` pairs or parallel ``scores``/``labels``.
    """
    s, y = _split_pairs(scores, labels)
    values, pos, neg = _class_counts(s, y)
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    neg_below = np.concatenate([[0], np.cumsum(neg)[:-1]])
    twice_u = int(np.sum(pos * (2 * neg_below + neg)))
    auc = twice_u / (2 * n_pos * n_neg)
    tp = np.concatenate([[0], np.cumsum(pos[::-1])])
    fp = np.concatenate([[0], np.cumsum(neg[::-1])])
    thresholds = np.concatenate([[np.inf], values[::-1]])
    return RocCurve(thresholds, fp / n_neg, tp / n_pos, auc, tp, fp, n_pos, n_neg)


def eer_index(roc):
    # |FPR - FNR| scaled by n_pos * n_neg stays an exact integer
    fn = roc.n_pos - roc.tp[1:]
    gap = np.abs(roc.fp[1:] * roc.n_pos - fn * roc.n_neg)
    return 1 + int(np.argmin(gap))  # first minimum = largest threshold


def eer_threshold(roc):
    """Threshold minimising ``|FPR - FNR|``; ties resolve to the larger threshold."""
    return float(roc.thresholds[eer_index(roc)])


@dataclass(frozen=True)
class PatientScore:
    patient_id: str
    covid_i1: float
    covid_i2: float
    n1: int
    n2: int
    label: int

    def index(self, score_function):
        if score_function == "I1":
            return self.covid_i1
        if score_function == "I2":
            return self.covid_i2
        raise ValueError(f"unknown score function {score_function!r}")


def covid_indexes(per_cough_phat, per_segment_probs, gamma_ee, patient_id="", label=0):
    """Patient scores from per-cough mean probabilities and raw segment probabilities.

    ``I1`` is the fraction of coughs whose probability reaches ``gamma_ee``;
    ``I2`` is the flat mean over every segment probability of the patient.
    """
    phat = np.asarray(per_cough_phat, dtype=np.float64).ravel()
    if phat.size == 0:
        raise EmptyInput(f"patient {patient_id!r} has no coughs")
    segs = np.concatenate([np.atleast_1d(np.asarray(p, dtype=np.float64))
                           for p in per_segment_probs]) if len(per_segment_probs) else np.empty(0)
    if segs.size == 0:
        raise EmptyInput(f"patient {patient_id!r} has no segment probabilities")
    c = phat >= gamma_ee
    return PatientScore(patient_id, float(c.mean()), float(segs.mean()), int(phat.size),
                        int(segs.size), int(getattr(label, "is_positive", label)))


def confusion(scores, labels, threshold):
    pred = np.asarray(scores) >= threshold
    y = np.asarray(labels).astype(bool)
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    tn = int(np.sum(~pred & ~y))
    fn = int(np.sum(~pred & y))
    return tp, fp, tn, fn


def operating_point(scores, labels, threshold):
    tp, fp, tn, fn = confusion(scores, labels, threshold)
    return {
        "threshold": float(threshold),
        "sensitivity": tp / (tp + fn) if tp + fn else float("nan"),
        "specificity": tn / (tn + fp) if tn + fp else float("nan"),
        "accuracy": (tp + tn) / (tp + fp + tn + fn),
        "tp": tp, "fp": fp, "tn": tn, "fn": fn,
    }


@dataclass(frozen=True, eq=False)
class EvalReport:
    roc: RocCurve
    auc: float
    gamma_ee: float
    decision_threshold: float
    sensitivity: float
    specificity: float
    accuracy: float
    score_function: str
    n_patients: int
    operating_points: dict = field(default_factory=dict)

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k != "roc"}
        d["roc"] = {
            "thresholds": [None if not np.isfinite(t) else float(t) for t in self.roc.thresholds],
            "fpr": self.roc.fpr.tolist(),
            "tpr": self.roc.tpr.tolist(),
        }
        return d


def report(patient_scores, score_function, decision_threshold=None, gamma_ee=None):
    """Patient-level metrics for the chosen COVID index.

    A patient is called positive when the index reaches ``decision_threshold``
    (default 0.5 for ``I1``; ``gamma_ee`` for ``I2``). Metrics are also given
    at the patient-level equal-error point and at 0.5.
    """
    if score_function not in SCORE_FUNCTIONS:
        raise ValueError(f"unknown score function {score_function!r}")
    scores = np.array([p.index(score_function) for p in patient_scores])
    labels = np.array([p.label for p in patient_scores])
    roc = roc_auc(scores, labels)
    eer_t = eer_threshold(roc)
    if gamma_ee is None:
        gamma_ee = eer_t
    if decision_threshold is None:
        decision_threshold = 0.5 if score_function == "I1" else gamma_ee
    at = operating_point(scores, labels, decision_threshold)
    return EvalReport(
        roc=roc, auc=roc.auc, gamma_ee=float(gamma_ee),
        decision_threshold=float(decision_threshold),
        sensitivity=at["sensitivity"], specificity=at["specificity"], accuracy=at["accuracy"],
        score_function=score_function, n_patients=len(patient_scores),
        operating_points={"decision": at, "eer": operating_point(scores, labels, eer_t),
                          "half": operating_point(scores, labels, 0.5)})


def mean_metrics(reports):
    keys = ("auc", "sensitivity", "specificity", "accuracy")
    return {k: float(np.mean([getattr(r, k) for r in reports])) for k in keys}


def write_roc_csv(path, roc):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
            w.writerow([repr(float(t)) if np.isfinite(t) else "inf", repr(float(f)),
                        repr(float(p))])


def read_roc_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return (np.array([float(r["threshold"]) for r in rows]),
            np.array([float(r["fpr"]) for r in rows]),
            np.array([float(r["tpr"]) for r in rows]))


def write_report(path, rep, **extra):
    d = rep.to_dict()
    d.update(extra)
    Path(path).write_text(json.dumps(d, indent=2, sort_keys=True, default=_jsonable))


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")
