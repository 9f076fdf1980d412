"""Layers with hand-written backward passes.

Every layer caches what its backward pass needs during ``forward`` and
overwrites (never accumulates) its gradients in ``backward``. Parameters
live in ``self.p`` and gradients in ``self.g`` under the same keys;
non-trainable state (batch-norm running statistics) lives in ``self.buf``.
"""

import numpy as np

from .._backend import kernels


class Layer:
    def __init__(self):
        self.p = {}
        self.g = {}
        self.buf = {}

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def named_params(self, prefix=""):
        for k, v in self.p.items():
            yield prefix + k, v, self.g.get(k)

    def named_buffers(self, prefix=""):
        for k, v in self.buf.items():
            yield prefix + k, v

    def output_shape(self, shape):
        """Per-example output shape for a per-example input shape."""
        raise NotImplementedError

    def describe(self):
        return type(self).__name__


def _uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Dense(Layer):
    def __init__(self, n_in, n_out, rng):
        super().__init__()
        self.p["W"] = _uniform(rng, (n_in, n_out), n_in)
        self.p["b"] = np.zeros(n_out)

    def forward(self, x, train=False, rng=None):
        self._x = x
        return x @ self.p["W"] + self.p["b"]

    def backward(self, dout):
        self.g["W"] = self._x.T @ dout
        self.g["b"] = dout.sum(axis=0)
        return dout @ self.p["W"].T

    def output_shape(self, shape):
        return (self.p["W"].shape[1],)

    def describe(self):
        return f"Dense({self.p['W'].shape[0]}->{self.p['W'].shape[1]})"


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)

    def output_shape(self, shape):
        return shape


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    def __init__(self, rate):
        super().__init__()
        self.rate = float(rate)

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask

    def output_shape(self, shape):
        return shape

    def describe(self):
        return f"Dropout({self.rate})"


class Flatten(Layer):
    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


def conv_out(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


class Conv2D(Layer):
    """2-D cross-correlation over ``(B, C, H, W)`` inputs via im2col."""

    def __init__(self, c_in, c_out, k, rng, stride=1, pad=0, bias=True):
        super().__init__()
        self.k, self.stride, self.pad = k, stride, pad
        self.p["W"] = _uniform(rng, (c_out, c_in, k, k), c_in * k * k)
        if bias:
            self.p["b"] = np.zeros(c_out)

    def forward(self, x, train=False, rng=None):
        nb, _, h, w = x.shape
        oh, ow = conv_out(h, self.k, self.stride, self.pad), conv_out(w, self.k, self.stride, self.pad)
        self._shape = x.shape
        self._cols = kernels.im2col(np.ascontiguousarray(x), self.k, self.k, self.stride, self.pad)
        wmat = self.p["W"].reshape(self.p["W"].shape[0], -1)
        out = self._cols @ wmat.T
        if "b" in self.p:
            out += self.p["b"]
        return out.reshape(nb, oh, ow, -1).transpose(0, 3, 1, 2)

    def backward(self, dout):
        c_out = dout.shape[1]
        d2 = dout.transpose(0, 2, 3, 1).reshape(-1, c_out)
        wmat = self.p["W"].reshape(c_out, -1)
        self.g["W"] = (d2.T @ self._cols).reshape(self.p["W"].shape)
        if "b" in self.p:
            self.g["b"] = d2.sum(axis=0)
        dcols = np.ascontiguousarray(d2 @ wmat)
        return kernels.col2im(dcols, tuple(self._shape), self.k, self.k, self.stride, self.pad)

    def output_shape(self, shape):
        _, h, w = shape
        return (self.p["W"].shape[0], conv_out(h, self.k, self.stride, self.pad),
                conv_out(w, self.k, self.stride, self.pad))

    def describe(self):
        c_out, c_in = self.p["W"].shape[:2]
        return f"Conv2D({c_in}->{c_out}, {self.k}x{self.k}, stride={self.stride}, pad={self.pad})"


class MaxPool2D(Layer):
    def __init__(self, k, stride=None, pad=0):
        super().__init__()
        self.k = k
        self.stride = k if stride is None else stride
        self.pad = pad

    def forward(self, x, train=False, rng=None):
        nb, c, h, w = x.shape
        xp = x
        if self.pad:
            xp = np.pad(x, ((0, 0), (0, 0), (self.pad,) * 2, (self.pad,) * 2),
                        constant_values=-np.inf)
        flat = np.ascontiguousarray(xp.reshape(nb * c, 1, *xp.shape[2:]))
        cols = kernels.im2col(flat, self.k, self.k, self.stride, 0)
        arg = np.argmax(cols, axis=1)
        oh, ow = conv_out(h, self.k, self.stride, self.pad), conv_out(w, self.k, self.stride, self.pad)
        self._cache = (x.shape, flat.shape, arg, cols.shape)
        return cols[np.arange(cols.shape[0]), arg].reshape(nb, c, oh, ow)

    def backward(self, dout):
        shape, flat_shape, arg, cols_shape = self._cache
        dcols = np.zeros(cols_shape)
        dcols[np.arange(cols_shape[0]), arg] = dout.ravel()
        dx = kernels.col2im(dcols, tuple(flat_shape), self.k, self.k, self.stride, 0)
        dx = dx.reshape(shape[0], shape[1], *flat_shape[2:])
        if self.pad:
            dx = dx[:, :, self.pad:-self.pad, self.pad:-self.pad]
        return np.ascontiguousarray(dx)

    def output_shape(self, shape):
        c, h, w = shape
        return (c, conv_out(h, self.k, self.stride, self.pad),
                conv_out(w, self.k, self.stride, self.pad))

    def describe(self):
        return f"MaxPool2D({self.k}x{self.k}, stride={self.stride}, pad={self.pad})"


def _bins(size, n):
    edges = np.concatenate([[0], np.cumsum([len(a) for a in np.array_split(np.arange(size), n)])])
    return list(zip(edges[:-1], edges[1:]))


class AdaptiveAvgPool2D(Layer):
    """Average over a fixed ``out_h x out_w`` grid of near-equal bins."""

    def __init__(self, out_h=1, out_w=1):
        super().__init__()
        self.out_h, self.out_w = out_h, out_w

    def forward(self, x, train=False, rng=None):
        nb, c, h, w = x.shape
        self._shape = x.shape
        self._rb, self._cb = _bins(h, self.out_h), _bins(w, self.out_w)
        out = np.empty((nb, c, self.out_h, self.out_w))
        for i, (r0, r1) in enumerate(self._rb):
            for j, (c0, c1) in enumerate(self._cb):
                out[:, :, i, j] = x[:, :, r0:r1, c0:c1].mean(axis=(2, 3))
        return out

    def backward(self, dout):
        dx = np.zeros(self._shape)
        for i, (r0, r1) in enumerate(self._rb):
            for j, (c0, c1) in enumerate(self._cb):
                area = (r1 - r0) * (c1 - c0)
                dx[:, :, r0:r1, c0:c1] += (dout[:, :, i, j] / area)[:, :, None, None]
        return dx

    def output_shape(self, shape):
        return (shape[0], self.out_h, self.out_w)

    def describe(self):
        return f"AdaptiveAvgPool2D({self.out_h}x{self.out_w})"


class BatchNorm2D(Layer):
    def __init__(self, c, momentum=0.1, eps=1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.p["gamma"] = np.ones(c)
        self.p["beta"] = np.zeros(c)
        self.buf["running_mean"] = np.zeros(c)
        self.buf["running_var"] = np.ones(c)

    def forward(self, x, train=False, rng=None):
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = self.momentum
            self.buf["running_mean"][:] = (1 - m) * self.buf["running_mean"] + m * mean
            self.buf["running_var"][:] = (1 - m) * self.buf["running_var"] + m * var
        else:
            mean, var = self.buf["running_mean"], self.buf["running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
        self._cache = (xhat, inv, train)
        return xhat * self.p["gamma"][None, :, None, None] + self.p["beta"][None, :, None, None]

    def backward(self, dout):
        xhat, inv, train = self._cache
        self.g["gamma"] = (dout * xhat).sum(axis=(0, 2, 3))
        self.g["beta"] = dout.sum(axis=(0, 2, 3))
        dxhat = dout * self.p["gamma"][None, :, None, None]
        if not train:
            return dxhat * inv[None, :, None, None]
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        return (inv[None, :, None, None] / m) * (
            m * dxhat - dxhat.sum(axis=(0, 2, 3), keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True))

    def output_shape(self, shape):
        return shape

    def describe(self):
        return f"BatchNorm2D({self.p['gamma'].size})"


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LSTM(Layer):
    """Single-layer LSTM over ``(B, T, D)`` returning the final hidden state.

    Gate order in the stacked weights is input, forget, cell, output.
    """

    def __init__(self, n_in, units, rng):
        super().__init__()
        self.units = units
        limit = 1.0 / np.sqrt(units)
        self.p["Wx"] = rng.uniform(-limit, limit, size=(n_in, 4 * units))
        self.p["Wh"] = rng.uniform(-limit, limit, size=(units, 4 * units))
        b = np.zeros(4 * units)
        b[units:2 * units] = 1.0
        self.p["b"] = b

    def forward(self, x, train=False, rng=None):
        nb, steps, _ = x.shape
        hu = self.units
        h = np.zeros((nb, hu))
        c = np.zeros((nb, hu))
        cache = []
        for t in range(steps):
            z = x[:, t] @ self.p["Wx"] + h @ self.p["Wh"] + self.p["b"]
            i = _sigmoid(z[:, :hu])
            f = _sigmoid(z[:, hu:2 * hu])
            g = np.tanh(z[:, 2 * hu:3 * hu])
            o = _sigmoid(z[:, 3 * hu:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            cache.append((h_prev, c_prev, i, f, g, o, tc))
        self._x = x
        self._cache = cache
        return h

    def backward(self, dout):
        x = self._x
        hu = self.units
        dWx = np.zeros_like(self.p["Wx"])
        dWh = np.zeros_like(self.p["Wh"])
        db = np.zeros_like(self.p["b"])
        dx = np.zeros_like(x)
        dh = dout
        dc = np.zeros_like(dout)
        for t in range(x.shape[1] - 1, -1, -1):
            h_prev, c_prev, i, f, g, o, tc = self._cache[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.hstack([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)])
            dWx += x[:, t].T @ dz
            dWh += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, t] = dz @ self.p["Wx"].T
            dh = dz @ self.p["Wh"].T
            dc = dc * f
        self.g["Wx"], self.g["Wh"], self.g["b"] = dWx, dWh, db
        return dx

    def output_shape(self, shape):
        return (self.units,)

    def describe(self):
        return f"LSTM({self.p['Wx'].shape[0]}->{self.units})"


class Sequential(Layer):
    def __init__(self, *layers, name=None):
        super().__init__()
        self.layers = list(layers)
        self.name = name

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def named_params(self, prefix=""):
        for i, layer in enumerate(self.layers):
            yield from layer.named_params(f"{prefix}{i}.")

    def named_buffers(self, prefix=""):
        for i, layer in enumerate(self.layers):
            yield from layer.named_buffers(f"{prefix}{i}.")

    def output_shape(self, shape):
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def trace(self, x):
        """Forward ``x`` (eval mode) recording ``(description, per-example shape)`` per layer."""
        rows = []
        for layer in self.layers:
            x = layer.forward(x)
            rows.append((layer.describe(), tuple(x.shape[1:])))
        return x, rows

    def describe(self):
        return self.name or f"Sequential[{len(self.layers)}]"


class Residual(Layer):
    """``relu(main(x) + shortcut(x))``; identity shortcut when ``shortcut`` is None."""

    def __init__(self, main, shortcut=None, name="Residual"):
        super().__init__()
        self.main = main
        self.shortcut = shortcut
        self.name = name

    def forward(self, x, train=False, rng=None):
        s = x if self.shortcut is None else self.shortcut.forward(x, train, rng)
        out = self.main.forward(x, train, rng) + s
        self._mask = out > 0
        return np.where(self._mask, out, 0.0)

    def backward(self, dout):
        d = np.where(self._mask, dout, 0.0)
        dx = self.main.backward(d)
        return dx + (d if self.shortcut is None else self.shortcut.backward(d))

    def named_params(self, prefix=""):
        yield from self.main.named_params(prefix + "main.")
        if self.shortcut is not None:
            yield from self.shortcut.named_params(prefix + "short.")

    def named_buffers(self, prefix=""):
        yield from self.main.named_buffers(prefix + "main.")
        if self.shortcut is not None:
            yield from self.shortcut.named_buffers(prefix + "short.")

    def output_shape(self, shape):
        return self.main.output_shape(shape)

    def describe(self):
        return self.name


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of integer ``labels``; returns ``(loss, dlogits)``."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1.0
    return float(loss), d / n


def softmax_positive(logits):
    """Probability of class 1 from 2-way logits."""
    return _sigmoid(logits[:, 1] - logits[:, 0])
