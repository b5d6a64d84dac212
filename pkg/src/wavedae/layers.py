"""Reverse-mode differentiable layers over (batch, length, channels) arrays.

All activations and gradients are float64 numpy arrays laid out as
(batch, length, channels), C-contiguous, so a channel plane is length-major.
Every layer implements ``forward(x, train=False)`` and ``backward(grad_out)``;
``backward`` must follow the matching ``forward`` (layers cache what they
need), returns the input gradient, and accumulates parameter gradients
retrievable via ``grads()``.

Convolutions use "same"-style zero padding so the stride alone sets the
output length: for kernel k and stride s the total padding is
(L/s - 1)*s + k - L, split with the extra sample on the right.  Transpose
convolutions are the exact algebraic adjoints of the matching convolutions
and share their weight layout, so ``<conv(x), y> == <x, tconv(y)>`` holds
for bias-free parameters.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .wavelet import FilterBank, dwt_step, idwt_step, make_db6_filters

__all__ = [
    "Layer",
    "Conv1d",
    "TransposeConv1d",
    "BatchNorm",
    "Elu",
    "Dropout",
    "DwtLayer",
    "IdwtLayer",
    "gradient_check",
]


def _check_tensor3(x, name="x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be (batch, length, channels), got {arr.shape}")
    return arr


def _same_padding(length_in: int, kernel: int, stride: int) -> tuple[int, int]:
    length_out = length_in // stride
    total = (length_out - 1) * stride + kernel - length_in
    left = total // 2
    return left, total - left


def _im2col(x, kernel, stride):
    """(B*Lout, K*C) patch matrix matching the (K, C, O) weight layout."""
    batch, length_in, channels = x.shape
    left, right = _same_padding(length_in, kernel, stride)
    xp = np.pad(x, ((0, 0), (left, right), (0, 0)))
    win = sliding_window_view(xp, (kernel, channels), axis=(1, 2))[:, ::stride, 0]
    return win.reshape(batch * (length_in // stride), kernel * channels)


def _conv_forward_core(x, w, stride):
    """y[b,t,o] = sum_{k,c} w[k,c,o] * xpad[b, s*t + k, c]."""
    batch, length_in, channels = x.shape
    kernel, _, out_channels = w.shape
    flat = _im2col(x, kernel, stride)
    y = flat @ w.reshape(kernel * channels, out_channels)
    return y.reshape(batch, length_in // stride, out_channels)


def _conv_grad_weights_core(x, grad_out, kernel, stride):
    channels = x.shape[2]
    out_channels = grad_out.shape[2]
    flat = _im2col(x, kernel, stride)
    gw = flat.T @ grad_out.reshape(-1, out_channels)
    return gw.reshape(kernel, channels, out_channels)


def _conv_grad_input_core(grad_out, w, stride, length_in):
    batch, length_out, out_channels = grad_out.shape
    kernel, channels, _ = w.shape
    left, right = _same_padding(length_in, kernel, stride)
    # one matmul for every tap, then fold the taps back into the padding;
    # accumulating per stride phase keeps every tap-add contiguous
    gcol = grad_out.reshape(-1, out_channels) @ w.reshape(-1, out_channels).T
    gwin = gcol.reshape(batch, length_out, kernel, channels)
    padded_len = length_in + left + right
    phase_len = (padded_len + stride - 1) // stride
    phases = np.zeros((stride, batch, phase_len, channels))
    for k in range(kernel):
        phases[k % stride, :, k // stride:k // stride + length_out, :] += gwin[:, :, k, :]
    gxp = np.empty((batch, padded_len, channels))
    for p in range(stride):
        count = len(range(p, padded_len, stride))
        gxp[:, p::stride, :] = phases[p, :, :count, :]
    return gxp[:, left:left + length_in, :]


class Layer:
    """Minimal layer protocol; parameter-free layers inherit as-is."""

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def zero_grads(self):
        for g in self.grads().values():
            g[...] = 0.0

    def init(self, rng):
        pass

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError


class Conv1d(Layer):
    """Strided 1D convolution; output length = input length / stride."""

    kind = "conv"

    def __init__(self, in_channels, out_channels, kernel, stride=1):
        if kernel < 1 or stride < 1:
            raise ValueError("kernel and stride must be positive")
        if kernel < stride:
            raise ValueError("kernel must be >= stride")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.weights = np.zeros((kernel, in_channels, out_channels))
        self.bias = np.zeros(out_channels)
        self._gw = np.zeros_like(self.weights)
        self._gb = np.zeros_like(self.bias)
        self._x = None

    def params(self):
        return {"weights": self.weights, "bias": self.bias}

    def grads(self):
        return {"weights": self._gw, "bias": self._gb}

    def init(self, rng):
        fan_in = self.kernel * self.in_channels
        bound = np.sqrt(3.0 / fan_in)
        self.weights[...] = rng.uniform(-bound, bound, self.weights.shape)
        self.bias[...] = 0.0

    def forward(self, x, train=False):
        x = _check_tensor3(x)
        if x.shape[2] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels} input channels, got {x.shape[2]}"
            )
        if x.shape[1] % self.stride:
            raise ValueError(
                f"input length {x.shape[1]} not divisible by stride {self.stride}"
            )
        self._x = x
        return _conv_forward_core(x, self.weights, self.stride) + self.bias

    def backward(self, grad_out):
        x = self._x
        grad_out = _check_tensor3(grad_out, "grad_out")
        expected = (x.shape[0], x.shape[1] // self.stride, self.out_channels)
        if grad_out.shape != expected:
            raise ValueError(f"grad_out shape {grad_out.shape}, expected {expected}")
        self._gw += _conv_grad_weights_core(x, grad_out, self.kernel, self.stride)
        self._gb += grad_out.sum(axis=(0, 1))
        return _conv_grad_input_core(grad_out, self.weights, self.stride, x.shape[1])


class TransposeConv1d(Layer):
    """Adjoint of :class:`Conv1d`; output length = input length * stride.

    Weights are stored in the geometry of the convolution this layer is the
    adjoint of, (kernel, out_channels, in_channels), so sharing the array
    with a Conv1d realizes the exact transpose map.
    """

    kind = "tconv"

    def __init__(self, in_channels, out_channels, kernel, stride=1):
        if kernel < 1 or stride < 1:
            raise ValueError("kernel and stride must be positive")
        if kernel < stride:
            raise ValueError("kernel must be >= stride")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.weights = np.zeros((kernel, out_channels, in_channels))
        self.bias = np.zeros(out_channels)
        self._gw = np.zeros_like(self.weights)
        self._gb = np.zeros_like(self.bias)
        self._x = None

    def params(self):
        return {"weights": self.weights, "bias": self.bias}

    def grads(self):
        return {"weights": self._gw, "bias": self._gb}

    def init(self, rng):
        fan_in = self.kernel * self.in_channels
        bound = np.sqrt(3.0 / fan_in)
        self.weights[...] = rng.uniform(-bound, bound, self.weights.shape)
        self.bias[...] = 0.0

    def forward(self, x, train=False):
        x = _check_tensor3(x)
        if x.shape[2] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels} input channels, got {x.shape[2]}"
            )
        self._x = x
        out = _conv_grad_input_core(
            x, self.weights, self.stride, x.shape[1] * self.stride
        )
        return out + self.bias

    def backward(self, grad_out):
        x = self._x
        grad_out = _check_tensor3(grad_out, "grad_out")
        expected = (x.shape[0], x.shape[1] * self.stride, self.out_channels)
        if grad_out.shape != expected:
            raise ValueError(f"grad_out shape {grad_out.shape}, expected {expected}")
        self._gw += _conv_grad_weights_core(grad_out, x, self.kernel, self.stride)
        self._gb += grad_out.sum(axis=(0, 1))
        return _conv_forward_core(grad_out, self.weights, self.stride)


class BatchNorm(Layer):
    """Per-channel batch normalization over the (batch, length) axes.

    Train mode normalizes with batch statistics (biased variance) and blends
    them into the running estimates; infer mode uses the running estimates
    only.  Defaults follow the mainstream toolkit the architecture targets:
    momentum 0.99, epsilon 1e-3.
    """

    kind = "batchnorm"

    def __init__(self, channels, momentum=0.99, epsilon=1e-3):
        if not 0.0 < momentum < 1.0:
            raise ValueError("momentum must be in (0, 1)")
        self.channels = channels
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._ggamma = np.zeros(channels)
        self._gbeta = np.zeros(channels)
        self._cache = None

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self._ggamma, "beta": self._gbeta}

    def forward(self, x, train=False):
        x = _check_tensor3(x)
        if x.shape[2] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {x.shape[2]}")
        if train:
            count = x.shape[0] * x.shape[1]
            if count < 2:
                raise ValueError("train-mode batch norm needs at least 2 samples")
            mean = x.mean(axis=(0, 1))
            var = x.var(axis=(0, 1))
            self.running_mean[...] = (
                self.momentum * self.running_mean + (1 - self.momentum) * mean
            )
            self.running_var[...] = (
                self.momentum * self.running_var + (1 - self.momentum) * var
            )
        else:
            mean = self.running_mean
            var = self.running_var
        std = np.sqrt(var + self.epsilon)
        xhat = (x - mean) / std
        self._cache = (xhat, std, train)
        return self.gamma * xhat + self.beta

    def backward(self, grad_out):
        xhat, std, train = self._cache
        grad_out = _check_tensor3(grad_out, "grad_out")
        self._ggamma += (grad_out * xhat).sum(axis=(0, 1))
        self._gbeta += grad_out.sum(axis=(0, 1))
        if not train:
            return grad_out * (self.gamma / std)
        count = grad_out.shape[0] * grad_out.shape[1]
        gsum = grad_out.sum(axis=(0, 1))
        gxhat_sum = (grad_out * xhat).sum(axis=(0, 1))
        return (self.gamma / (std * count)) * (
            count * grad_out - gsum - xhat * gxhat_sum
        )


class Elu(Layer):
    """Exponential linear unit with alpha = 1."""

    kind = "elu"

    def forward(self, x, train=False):
        x = _check_tensor3(x)
        positive = x > 0
        # clamp the argument so the unused branch cannot overflow
        y = np.where(positive, x, np.expm1(np.minimum(x, 0.0)))
        self._cache = (positive, y)
        return y

    def backward(self, grad_out):
        positive, y = self._cache
        return grad_out * np.where(positive, 1.0, y + 1.0)


class Dropout(Layer):
    """Inverted dropout: train-time masking with survivor rescaling.

    ``rng`` may be reassigned between batches to draw masks from an
    externally managed stream; setting ``fixed_mask`` replays a given mask,
    which the gradient checker relies on.
    """

    kind = "dropout"

    def __init__(self, rate, rng=None):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng
        self.fixed_mask = None
        self._mask = None

    def forward(self, x, train=False):
        x = _check_tensor3(x)
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if self.fixed_mask is not None:
            mask = self.fixed_mask
        else:
            if self.rng is None:
                raise ValueError("train-mode dropout needs an rng or fixed_mask")
            mask = self.rng.random(x.shape) >= self.rate
        self._mask = mask
        return x * mask / (1.0 - self.rate)

    def backward(self, grad_out):
        if self._mask is None:
            return grad_out
        return grad_out * self._mask / (1.0 - self.rate)


def _dwt_along_length(x, bank):
    approx, detail = dwt_step(x.swapaxes(1, 2), bank)
    return approx.swapaxes(1, 2), detail.swapaxes(1, 2)


def _idwt_along_length(approx, detail, bank):
    out = idwt_step(approx.swapaxes(1, 2), detail.swapaxes(1, 2), bank)
    return out.swapaxes(1, 2)


class DwtLayer(Layer):
    """Wavelet analysis layer: frequency split, per-band convolutions, concat.

    The input is decomposed per channel into detail (high-band) and
    approximation (low-band) halves of the length.  A stride-1 convolution
    with out_channels/2 filters runs on each branch and the branch outputs
    are concatenated along channels, detail half first.  The factor-2 length
    reduction comes from the wavelet decimation alone.
    """

    kind = "dwt"

    def __init__(self, in_channels, out_channels, kernel=8, bank=None):
        if out_channels % 2:
            raise ValueError("out_channels must be even (two equal branches)")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.bank = bank if bank is not None else make_db6_filters()
        self.hp_conv = Conv1d(in_channels, out_channels // 2, kernel, stride=1)
        self.lp_conv = Conv1d(in_channels, out_channels // 2, kernel, stride=1)

    def params(self):
        out = {f"hp_{k}": v for k, v in self.hp_conv.params().items()}
        out.update({f"lp_{k}": v for k, v in self.lp_conv.params().items()})
        return out

    def grads(self):
        out = {f"hp_{k}": v for k, v in self.hp_conv.grads().items()}
        out.update({f"lp_{k}": v for k, v in self.lp_conv.grads().items()})
        return out

    def init(self, rng):
        self.hp_conv.init(rng)
        self.lp_conv.init(rng)

    def forward(self, x, train=False):
        x = _check_tensor3(x)
        if x.shape[2] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels} input channels, got {x.shape[2]}"
            )
        if x.shape[1] % 2:
            raise ValueError(f"input length {x.shape[1]} must be even")
        approx, detail = _dwt_along_length(x, self.bank)
        hp_out = self.hp_conv.forward(detail, train)
        lp_out = self.lp_conv.forward(approx, train)
        return np.concatenate([hp_out, lp_out], axis=2)

    def backward(self, grad_out):
        half = self.out_channels // 2
        grad_detail = self.hp_conv.backward(grad_out[..., :half])
        grad_approx = self.lp_conv.backward(grad_out[..., half:])
        # adjoint of the orthogonal analysis map is the synthesis map
        return _idwt_along_length(grad_approx, grad_detail, self.bank)


class IdwtLayer(Layer):
    """Wavelet synthesis layer: channel split, transpose convolutions, merge.

    The first half of the input channels feeds the detail branch and the
    second half the approximation branch; each branch runs a stride-1
    transpose convolution with out_channels filters and the two results are
    merged by wavelet synthesis, doubling the length.  A single-channel
    input (the bottleneck expansion position) feeds both branches.
    """

    kind = "idwt"

    def __init__(self, in_channels, out_channels, kernel=8, bank=None):
        if in_channels != 1 and in_channels % 2:
            raise ValueError("in_channels must be even (or 1 at the bottleneck)")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.bank = bank if bank is not None else make_db6_filters()
        branch_in = 1 if in_channels == 1 else in_channels // 2
        self.hp_tconv = TransposeConv1d(branch_in, out_channels, kernel, stride=1)
        self.lp_tconv = TransposeConv1d(branch_in, out_channels, kernel, stride=1)

    def params(self):
        out = {f"hp_{k}": v for k, v in self.hp_tconv.params().items()}
        out.update({f"lp_{k}": v for k, v in self.lp_tconv.params().items()})
        return out

    def grads(self):
        out = {f"hp_{k}": v for k, v in self.hp_tconv.grads().items()}
        out.update({f"lp_{k}": v for k, v in self.lp_tconv.grads().items()})
        return out

    def init(self, rng):
        self.hp_tconv.init(rng)
        self.lp_tconv.init(rng)

    def forward(self, x, train=False):
        x = _check_tensor3(x)
        if x.shape[2] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels} input channels, got {x.shape[2]}"
            )
        if self.in_channels == 1:
            x_detail = x_approx = x
        else:
            half = self.in_channels // 2
            x_detail, x_approx = x[..., :half], x[..., half:]
        detail = self.hp_tconv.forward(x_detail, train)
        approx = self.lp_tconv.forward(x_approx, train)
        return _idwt_along_length(approx, detail, self.bank)

    def backward(self, grad_out):
        # adjoint of the orthogonal synthesis map is the analysis map
        grad_approx, grad_detail = _dwt_along_length(grad_out, self.bank)
        gx_detail = self.hp_tconv.backward(grad_detail)
        gx_approx = self.lp_tconv.backward(grad_approx)
        if self.in_channels == 1:
            return gx_detail + gx_approx
        return np.concatenate([gx_detail, gx_approx], axis=2)


def gradient_check(layer, x, h=1e-3, seed=0, train=False):
    """Compare analytic gradients against central finite differences.

    Runs the layer once, backpropagates a random cotangent, then perturbs
    every input element and every parameter element by +-h.  Returns the
    maximum relative error, |analytic - numeric| / max(|analytic|, |numeric|,
    1e-3).  The layer must be deterministic: put dropout in infer mode or
    set ``fixed_mask``.
    """
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    y = layer.forward(x, train=train)
    cotangent = rng.standard_normal(y.shape)
    layer.zero_grads()
    grad_x = layer.backward(cotangent)
    analytic = {"__input__": grad_x}
    analytic.update({k: v.copy() for k, v in layer.grads().items()})

    def loss():
        return float(np.sum(layer.forward(x, train=train) * cotangent))

    targets = {"__input__": x}
    targets.update(layer.params())
    worst = 0.0
    for name, arr in targets.items():
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss()
            flat[i] = orig - h
            down = loss()
            flat[i] = orig
            num_flat[i] = (up - down) / (2 * h)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-3)
        worst = max(worst, float((np.abs(a - numeric) / denom).max()))
    return worst
