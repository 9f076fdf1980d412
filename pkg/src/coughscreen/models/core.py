"""Fit and predict for all six classifier families behind one contract.

Segment-level families (LR, SVM, MLP) treat every segment row of a cough
matrix as an example carrying the cough's label, and a cough's probability
is the mean of its segment probabilities. Matrix families (CNN, LSTM,
ResNet) see the whole ``S x D`` matrix and emit one probability per cough.
Every model standardizes feature columns with statistics of its own
training rows.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateLabels, DivergedError, ShapeError
from ..numerics import make_rng
from .layers import softmax_cross_entropy, softmax_positive
from .networks import build_network, network_input
from .spec import ModelSpec

PREDICT_CHUNK = 256


def as_matrix(x):
    """2-D float array from a FeatureMatrix, a matrix, or a single vector (one row)."""
    v = getattr(x, "values", x)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        v = v[None, :]
    if v.ndim != 2:
        raise ShapeError(f"expected a vector or matrix, got shape {v.shape}")
    return v


def as_label(y):
    if hasattr(y, "is_positive"):
        return int(y.is_positive)
    return int(bool(y))


@dataclass(eq=False)
class TrainedModel:
    spec: ModelSpec
    input_shape: tuple          # (segments, dims); segments is None for segment-level families
    params: dict                # name -> float64 array, in a stable order
    seed: int = 0
    loss_trace: tuple = ()
    _net: object = field(default=None, repr=False)

    @property
    def family(self):
        return self.spec.family

    def network(self):
        if self._net is None:
            self._net = _rebuild(self)
        return self._net


def _rebuild(model):
    spec = model.spec.resolved()
    shape = model.input_shape if model.input_shape[0] is not None else (1, model.input_shape[1])
    net = build_network(spec, shape, make_rng(0))
    for name, arr, _ in net.named_params():
        arr[...] = model.params["net." + name]
    for name, arr in net.named_buffers():
        arr[...] = model.params["buf." + name]
    return net


def _network_params(net):
    out = {}
    for name, arr, _ in net.named_params():
        out["net." + name] = arr.copy()
    for name, arr in net.named_buffers():
        out["buf." + name] = arr.copy()
    return out


def _check_shapes(mats, segment_level):
    dims = {m.shape[1] for m in mats}
    if len(dims) != 1:
        raise ShapeError(f"inconsistent feature dimensions {sorted(dims)}")
    if segment_level:
        return (None, dims.pop())
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise ShapeError(f"inconsistent input shapes {sorted(shapes)}")
    return shapes.pop()


def _standardizer(rows):
    mean = rows.mean(axis=0)
    scale = rows.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _batches(n, batch_size, rng):
    if batch_size is None or batch_size >= n:
        yield np.arange(n)
        return
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _check_finite(value, epoch):
    if not np.isfinite(value):
        raise DivergedError(epoch, value)


def _fit_lr(x, y, spec, rng):
    """Elastic-net logistic regression by proximal gradient descent.

    The ridge and lasso weights are divided by ``reg_strength``. Step sizes
    come from the curvature bound of the objective, so any penalty level
    converges monotonically under full-batch training.
    """
    n, d = x.shape
    lam1 = spec.l1_weight / spec.reg_strength
    lam2 = spec.l2_weight / spec.reg_strength
    xa = np.hstack([x, np.ones((n, 1))])
    curv = 0.25 * np.linalg.eigvalsh(xa.T @ xa / n).max()
    step_b = 1.0 / (curv + lam2)
    step_a = 1.0 / curv
    a = 0.0
    b = np.zeros(d)
    trace = []
    for epoch in range(spec.epochs):
        for idx in _batches(n, spec.batch_size, rng):
            r = _sigmoid(a + x[idx] @ b) - y[idx]
            gb = x[idx].T @ r / idx.size + lam2 * b
            z = b - step_b * gb
            b = np.sign(z) * np.maximum(np.abs(z) - step_b * lam1, 0.0)
            a -= step_a * r.mean()
        z = a + x @ b
        ce = np.mean(np.logaddexp(0.0, z) - y * z)
        obj = ce + lam1 * np.abs(b).sum() + 0.5 * lam2 * b @ b
        _check_finite(obj, epoch)
        trace.append(float(obj))
    return {"lr.a": np.array([a]), "lr.b": b}, trace


def platt_fit(margins, y, iterations=100):
    """Sigmoid calibration ``P = 1 / (1 + exp(-(A m + B)))`` with Platt's smoothed targets."""
    n_pos = float(np.sum(y == 1))
    n_neg = float(np.sum(y == 0))
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    a, b = 1.0, 0.0

    def nll(a, b):
        z = a * margins + b
        return np.sum(np.logaddexp(0.0, z) - t * z)

    cur = nll(a, b)
    for _ in range(iterations):
        p = _sigmoid(a * margins + b)
        r = p - t
        g = np.array([r @ margins, r.sum()])
        w = p * (1 - p)
        h = np.array([[w @ (margins * margins), w @ margins], [w @ margins, w.sum()]])
        h += 1e-12 * np.eye(2)
        delta = np.linalg.solve(h, g)
        stepsize = 1.0
        while stepsize > 1e-10:
            na, nb = a - stepsize * delta[0], b - stepsize * delta[1]
            new = nll(na, nb)
            if new <= cur:
                break
            stepsize *= 0.5
        else:
            break
        if cur - new < 1e-12 * max(1.0, abs(cur)):
            a, b, cur = na, nb, new
            break
        a, b, cur = na, nb, new
    return a, b


def _fit_svm(x, y, spec, rng):
    """Linear soft-margin SVM by subgradient descent on mean hinge + ridge.

    The ridge weight is ``1 / (reg_strength * n)``, the usual ``C``
    parametrisation divided through by ``C n``.
    """
    n, d = x.shape
    ys = 2.0 * y - 1.0
    lam = 1.0 / (spec.reg_strength * n)
    eta0 = 1.0 / max(np.mean(np.sum(x * x, axis=1)) + 1.0, 1e-12)
    w = np.zeros(d)
    b = 0.0
    trace = []
    step = 0
    for epoch in range(spec.epochs):
        for idx in _batches(n, spec.batch_size, rng):
            m = x[idx] @ w + b
            viol = ys[idx] * m < 1.0
            gw = -(x[idx][viol].T @ ys[idx][viol]) / idx.size + lam * w
            gb = -ys[idx][viol].sum() / idx.size
            eta = min(eta0 / np.sqrt(1.0 + step), 1.0 / lam)
            w -= eta * gw
            b -= eta * gb
            step += 1
        obj = np.mean(np.maximum(0.0, 1.0 - ys * (x @ w + b))) + 0.5 * lam * w @ w
        _check_finite(obj, epoch)
        trace.append(float(obj))
    pa, pb = platt_fit(x @ w + b, y)
    return {"svm.w": w, "svm.b": np.array([b]), "platt.A": np.array([pa]),
            "platt.B": np.array([pb])}, trace


def _weight_names(net):
    return {name for name, _, _ in net.named_params() if name.endswith("W")}


def _fit_network(x, y, spec, rng, input_shape):
    net = build_network(spec, input_shape, rng)
    family = spec.family
    weights = _weight_names(net)
    n = x.shape[0]
    # MLP ridge term: l2_penalty / (2 n) * ||W||^2
    l2 = spec.l2_penalty / n if family == "MLP" else 0.0
    lr = spec.learning_rate
    trace = []
    # overflow shows up as a non-finite epoch loss, which _check_finite reports
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(spec.epochs):
            total = 0.0
            for idx in _batches(n, spec.batch_size, rng):
                logits = net.forward(network_input(family, x[idx]), train=True, rng=rng)
                loss, dlogits = softmax_cross_entropy(logits, y[idx])
                net.backward(dlogits)
                total += loss * idx.size
                for name, arr, grad in net.named_params():
                    if l2 and name in weights:
                        grad = grad + l2 * arr
                    arr -= lr * grad
            mean = total / n
            if l2:
                mean += 0.5 * l2 * sum(float(np.sum(a * a)) for k, a, _ in net.named_params()
                                       if k in weights)
            _check_finite(mean, epoch)
            trace.append(float(mean))
    return net, trace


def fit(spec, inputs, labels, seed=0):
    """Train ``spec`` on cough matrices (or single vectors) with binary ``labels``."""
    spec = spec.resolved()
    mats = [as_matrix(x) for x in inputs]
    y_cough = np.array([as_label(v) for v in labels], dtype=np.int64)
    if len(mats) == 0 or len(mats) != y_cough.size:
        raise ShapeError(f"{len(mats)} inputs for {y_cough.size} labels")
    if y_cough.min() == y_cough.max():
        raise DegenerateLabels("training data needs both classes")
    input_shape = _check_shapes(mats, spec.segment_level)
    rows = np.vstack(mats)
    mean, scale = _standardizer(rows)
    rng = make_rng(seed)
    params = {"norm.mean": mean, "norm.scale": scale}
    if spec.segment_level:
        x = (rows - mean) / scale
        y = np.repeat(y_cough, [m.shape[0] for m in mats])
        if spec.family == "LR":
            learned, trace = _fit_lr(x, y.astype(np.float64), spec, rng)
        elif spec.family == "SVM":
            learned, trace = _fit_svm(x, y.astype(np.float64), spec, rng)
        else:
            net, trace = _fit_network(x, y, spec, rng, (1, input_shape[1]))
            learned = _network_params(net)
    else:
        x = (np.stack(mats) - mean) / scale
        net, trace = _fit_network(x, y_cough, spec, rng, input_shape)
        learned = _network_params(net)
    params.update(learned)
    return TrainedModel(spec, input_shape, params, seed, tuple(trace))


def init_model(spec, input_shape, seed=0):
    """Untrained model: zero linear weights, seeded network initialisation, identity scaling."""
    spec = spec.resolved()
    seg = spec.segment_level
    shape = (None, input_shape[-1]) if seg else tuple(input_shape)
    d = input_shape[-1]
    params = {"norm.mean": np.zeros(d), "norm.scale": np.ones(d)}
    if spec.family == "LR":
        params.update({"lr.a": np.zeros(1), "lr.b": np.zeros(d)})
    elif spec.family == "SVM":
        params.update({"svm.w": np.zeros(d), "svm.b": np.zeros(1), "platt.A": np.ones(1),
                       "platt.B": np.zeros(1)})
    else:
        net = build_network(spec, (1, d) if seg else shape, make_rng(seed))
        params.update(_network_params(net))
    return TrainedModel(spec, shape, params, seed, ())


def _check_input(model, mat):
    s, d = model.input_shape
    if mat.shape[1] != d or (s is not None and mat.shape[0] != s):
        raise ShapeError(f"input shape {mat.shape} does not match model shape {(s, d)}")


def _segment_probs(model, rows):
    p = model.params
    x = (rows - p["norm.mean"]) / p["norm.scale"]
    fam = model.family
    if fam == "LR":
        return _sigmoid(p["lr.a"][0] + x @ p["lr.b"])
    if fam == "SVM":
        margin = x @ p["svm.w"] + p["svm.b"][0]
        return _sigmoid(p["platt.A"][0] * margin + p["platt.B"][0])
    net = model.network()
    out = np.empty(x.shape[0])
    step = PREDICT_CHUNK * 16
    for start in range(0, x.shape[0], step):
        out[start:start + step] = softmax_positive(net.forward(x[start:start + step]))
    return out


def predict_segments_batch(model, inputs):
    """Per-input arrays of segment probabilities (length 1 for matrix families)."""
    mats = [as_matrix(x) for x in inputs]
    for m in mats:
        _check_input(model, m)
    if not mats:
        return []
    if model.spec.segment_level:
        probs = _segment_probs(model, np.vstack(mats))
        bounds = np.cumsum([0] + [m.shape[0] for m in mats])
        return [probs[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    p = model.params
    net = model.network()
    x = (np.stack(mats) - p["norm.mean"]) / p["norm.scale"]
    out = []
    for start in range(0, x.shape[0], PREDICT_CHUNK):
        logits = net.forward(network_input(model.family, x[start:start + PREDICT_CHUNK]))
        out.extend(softmax_positive(logits))
    return [np.array([v]) for v in out]


def predict_segments(model, x):
    return predict_segments_batch(model, [x])[0]


def predict_proba_batch(model, inputs):
    """Per-cough probability: the mean of segment probabilities."""
    return np.array([s.mean() for s in predict_segments_batch(model, inputs)])


def predict_proba(model, x):
    return float(predict_segments(model, x).mean())
