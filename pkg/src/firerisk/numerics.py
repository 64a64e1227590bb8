"""Dense float64 tensor math with hand-paired analytic gradients.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. ``as_tensor``
is the validating constructor used at public boundaries. Every layer below
caches what its backward pass needs during ``forward``; calling ``backward``
first raises :class:`StateError`.

Batched layers take the batch on axis 0. Convolution is cross-correlation
(no kernel flip) with zero padding.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError, StateError

BCE_EPS = 1e-7


def as_tensor(data, shape=None):
    """Validated float64 copy of ``data``; rejects empty shapes and non-finite values."""
    arr = np.array(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(d) for d in shape)
        if arr.size != int(np.prod(shape)):
            raise DimensionError(f"{arr.size} values do not fill shape {shape}")
        arr = arr.reshape(shape)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(d <= 0 for d in arr.shape):
        raise DimensionError(f"tensor dimensions must be positive, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains NaN or Inf")
    return arr


# ---------------------------------------------------------------- matmul

def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def matmul_backward(a, b, grad):
    """Gradients of ``sum(grad * (a @ b))`` with respect to ``a`` and ``b``."""
    return grad @ b.T, a.T @ grad


# ---------------------------------------------------------------- conv2d

def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"conv input must be c×h×w or n×c×h×w, got {x.shape}")


def _conv_windows(x, kh, kw, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(x, kernels, stride=1, pad=0):
    """Cross-correlate ``x`` (c×h×w, or batched) with ``kernels`` (f×c×kh×kw)."""
    if stride < 1 or pad < 0:
        raise ConfigError("stride must be >= 1 and pad >= 0")
    xb, single = _as_batch(x)
    k = np.asarray(kernels, dtype=np.float64)
    if k.ndim != 4 or k.shape[1] != xb.shape[1]:
        raise DimensionError(f"kernels {k.shape} do not match input {xb.shape[1:]}")
    _, _, h, w = xb.shape
    kh, kw = k.shape[2:]
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise DimensionError(
            f"kernel {kh}×{kw} larger than padded input {h + 2 * pad}×{w + 2 * pad}")
    win = _conv_windows(xb, kh, kw, stride, pad)
    out = np.tensordot(win, k, axes=([1, 4, 5], [1, 2, 3]))  # n, h', w', f
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    return out[0] if single else out


def conv2d_backward(x, kernels, grad, stride=1, pad=0):
    """Return (d_input, d_kernels) for upstream ``grad`` of shape f×h'×w' (or batched)."""
    xb, single = _as_batch(x)
    g = np.asarray(grad, dtype=np.float64)
    if single:
        g = g[None]
    k = np.asarray(kernels, dtype=np.float64)
    kh, kw = k.shape[2:]
    win = _conv_windows(xb, kh, kw, stride, pad)
    dk = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))  # f, c, kh, kw
    n, c, h, w = xb.shape
    ho, wo = g.shape[2:]
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(g, k[:, :, i, j], axes=([1], [0]))  # n, h', w', c
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                contrib.transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:pad + h, pad:pad + w]
    return (dx[0] if single else dx), dk


# ---------------------------------------------------------------- activations

def sigmoid(x):
    # tanh form keeps sigmoid(x) + sigmoid(-x) == 1 to rounding and never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def sigmoid_backward(y, grad):
    return grad * y * (1.0 - y)


def tanh_backward(y, grad):
    return grad * (1.0 - y * y)


def relu_backward(x, grad):
    return grad * (np.asarray(x) > 0)


# ---------------------------------------------------------------- losses

def bce_loss(p, y):
    """Mean binary cross-entropy with probabilities clamped to [eps, 1-eps]."""
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def balanced_bce_loss(p, y):
    """Mean of the per-class mean BCE; the expected loss on a class-balanced resample."""
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(y)
    parts = [-np.log(p[y == 1]).mean() if np.any(y == 1) else None,
             -np.log1p(-p[y == 0]).mean() if np.any(y == 0) else None]
    parts = [v for v in parts if v is not None]
    return float(np.mean(parts))


def bce_backward(p, y):
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    g = (pc - y) / (pc * (1.0 - pc)) / p.size
    return np.where((p > BCE_EPS) & (p < 1.0 - BCE_EPS), g, 0.0)


def mse_loss(pred, target):
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(d * d))


# ---------------------------------------------------------------- parameters

@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = None
    velocity: np.ndarray = None
    frozen: bool = False

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.velocity is None:
            self.velocity = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise DimensionError(f"{self.name}: grad shape {self.grad.shape} != {self.value.shape}")

    def zero_grad(self):
        self.grad[...] = 0.0


def sgd_step(params, lr, momentum=0.0, l2=0.0):
    """Momentum SGD with L2 weight decay folded into the velocity; frozen params are skipped.

    v <- momentum*v + grad + l2*value ; value <- value - lr*v ; grad <- 0
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if not 0.0 <= momentum < 1.0:
        raise ConfigError(f"momentum must lie in [0, 1), got {momentum}")
    if l2 < 0:
        raise ConfigError(f"l2 must be non-negative, got {l2}")
    for p in params:
        if not p.frozen:
            p.velocity *= momentum
            p.velocity += p.grad + l2 * p.value
            p.value -= lr * p.velocity
        p.zero_grad()
    return params


def dropout(x, rate, rng, training):
    """Inverted dropout; identity at inference."""
    out, _ = _dropout_mask(x, rate, rng, training)
    return out


def _dropout_mask(x, rate, rng, training):
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


# ---------------------------------------------------------------- layers

class Layer:
    _cache = None

    def parameters(self):
        return []

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        return self._cache


class Dense(Layer):
    """y = x @ W.T + b with W of shape (out, in)."""

    def __init__(self, name, n_in, n_out, rng=None):
        scale = np.sqrt(2.0 / (n_in + n_out))
        w = rng.normal(0.0, scale, size=(n_out, n_in)) if rng is not None else np.zeros((n_out, n_in))
        self.weight = Parameter(f"{name}.weight", w)
        self.bias = Parameter(f"{name}.bias", np.zeros(n_out))

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.weight.value.shape[1]:
            raise DimensionError(
                f"{self.weight.name}: expected width {self.weight.value.shape[1]}, got {x.shape[-1]}")
        self._cache = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, grad):
        x = self._cached()
        self.weight.grad += grad.T @ x
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.value


class Conv2D(Layer):
    def __init__(self, name, n_in, n_out, size=3, pad=1, rng=None):
        scale = np.sqrt(2.0 / (n_in * size * size))
        shape = (n_out, n_in, size, size)
        k = rng.normal(0.0, scale, size=shape) if rng is not None else np.zeros(shape)
        self.kernel = Parameter(f"{name}.kernel", k)
        self.bias = Parameter(f"{name}.bias", np.zeros(n_out))
        self.pad = pad

    def parameters(self):
        return [self.kernel, self.bias]

    def forward(self, x):
        self._cache = x
        return conv2d(x, self.kernel.value, 1, self.pad) + self.bias.value[:, None, None]

    def backward(self, grad):
        x = self._cached()
        dx, dk = conv2d_backward(x, self.kernel.value, grad, 1, self.pad)
        self.kernel.grad += dk
        self.bias.grad += grad.sum(axis=(0, 2, 3))
        return dx


def maxpool2(x):
    """Non-overlapping 2×2 max pool over the last two axes; odd trailing row/col dropped."""
    return _maxpool2(x)[0]


def _maxpool2(x):
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[-2:]
    if h < 2 or w < 2:
        raise DimensionError(f"maxpool2 needs h, w >= 2, got {h}×{w}")
    h2, w2 = h // 2, w // 2
    lead = x.shape[:-2]
    blocks = x[..., :2 * h2, :2 * w2].reshape(*lead, h2, 2, w2, 2)
    blocks = np.moveaxis(blocks, -3, -2).reshape(*lead, h2, w2, 4)
    # argmax returns the first maximum in row-major window order
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool2_backward(x_shape, arg, grad):
    lead = x_shape[:-2]
    h, w = x_shape[-2:]
    h2, w2 = arg.shape[-2:]
    blocks = np.zeros((*lead, h2, w2, 4))
    np.put_along_axis(blocks, arg[..., None], grad[..., None], axis=-1)
    blocks = blocks.reshape(*lead, h2, w2, 2, 2)
    blocks = np.moveaxis(blocks, -2, -3).reshape(*lead, 2 * h2, 2 * w2)
    dx = np.zeros(x_shape)
    dx[..., :2 * h2, :2 * w2] = blocks
    return dx


class MaxPool2(Layer):
    def forward(self, x):
        out, arg = _maxpool2(x)
        self._cache = (np.shape(x), arg)
        return out

    def backward(self, grad):
        shape, arg = self._cached()
        return maxpool2_backward(shape, arg, grad)


class GlobalAvgPool(Layer):
    """Mean over the two spatial axes: (n, c, h, w) -> (n, c)."""

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._cache = x.shape
        return x.mean(axis=(-2, -1))

    def backward(self, grad):
        shape = self._cached()
        return np.broadcast_to(grad[..., None, None] / (shape[-1] * shape[-2]), shape).copy()


class ReLU(Layer):
    def forward(self, x):
        self._cache = x
        return relu(x)

    def backward(self, grad):
        return relu_backward(self._cached(), grad)


class Sigmoid(Layer):
    def forward(self, x):
        y = sigmoid(x)
        self._cache = y
        return y

    def backward(self, grad):
        return sigmoid_backward(self._cached(), grad)


class Tanh(Layer):
    def forward(self, x):
        y = tanh(x)
        self._cache = y
        return y

    def backward(self, grad):
        return tanh_backward(self._cached(), grad)


class Dropout(Layer):
    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, rng=None, training=False):
        out, mask = _dropout_mask(x, self.rate, rng, training)
        self._cache = (mask,)
        return out

    def backward(self, grad):
        (mask,) = self._cached()
        return grad if mask is None else grad * mask
