"""Analytic-versus-finite-difference gradient comparison for the network families."""

import numpy as np

from ..numerics import make_rng
from .layers import softmax_cross_entropy
from .networks import build_network, network_input


def relative_error(analytic, numeric, floor=1e-8):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(spec, x, labels, seed=0, n_params=100, step=1e-5):
    """Largest relative error between backprop and central differences.

    ``x`` is a ``(B, S, D)`` batch. The loss is the mean softmax
    cross-entropy in training mode; dropout masks are redrawn from the same
    seed on every evaluation so the loss is a deterministic function of the
    parameters. Returns ``(max_error, n_checked)``.
    """
    spec = spec.resolved()
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    shape = x.shape[1:]
    net = build_network(spec, shape, make_rng(seed))
    inp = network_input(spec.family, x)
    if spec.segment_level:
        # one example per segment row, each inheriting its matrix's label
        inp = x.reshape(-1, x.shape[-1])
        labels = np.repeat(labels, x.shape[1])

    def loss():
        logits = net.forward(inp, train=True, rng=make_rng(seed + 1))
        return softmax_cross_entropy(logits, labels)

    _, dlogits = loss()
    net.backward(dlogits)
    entries = [(arr, grad.copy()) for _, arr, grad in net.named_params()]
    sizes = np.array([a.size for a, _ in entries])
    total = int(sizes.sum())
    picks = make_rng(seed + 2).choice(total, size=min(n_params, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        arr, grad = entries[k]
        i = np.unravel_index(int(flat - offsets[k]), arr.shape)
        orig = arr[i]
        arr[i] = orig + step
        up, _ = loss()
        arr[i] = orig - step
        down, _ = loss()
        arr[i] = orig
        numeric = (up - down) / (2 * step)
        worst = max(worst, relative_error(grad[i], numeric))
    return worst, len(picks)
