"""Model specifications and the builder for the autoencoder variants.

The architecture is a 13-row sequential autoencoder: five down-sampling
rows, a bottleneck projection to one channel, a matching expansion row,
five up-sampling rows, and an output projection.  Wavelet variants swap
convolution rows for wavelet layers:

* ``forward`` with depth k replaces encoder rows 1..k and, mirrored through
  the bottleneck, the last k up-sampling rows (nearest the output);
* ``backward`` with depth k replaces encoder rows (6-k)..5 and the first k
  up-sampling rows (nearest the bottleneck);
* ``all`` replaces every down/up-sampling row (same as either type at k=5);
* ``fcn`` is the all-convolution baseline.

Every non-terminal row is followed by batch norm, ELU, and dropout(0.1);
the bottleneck and output projections are bare.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import (
    BatchNorm,
    Conv1d,
    Dropout,
    DwtLayer,
    Elu,
    IdwtLayer,
    Layer,
    TransposeConv1d,
)

__all__ = ["ModelSpec", "Network", "build_model", "init_parameters", "shape_trace", "describe"]

VARIANTS = ("fcn", "forward", "backward", "all")
DOWN_LAYERS = 5
DROPOUT_RATE = 0.1


@dataclass(frozen=True)
class ModelSpec:
    """Declarative architecture description."""

    variant: str = "fcn"
    k: int = 0
    input_length: int = 1024
    encoder_channels: tuple = (40, 20, 20, 20, 40)
    kernel_conv: int = 16
    kernel_wavelet_branch: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.variant in ("forward", "backward") and not 1 <= self.k <= DOWN_LAYERS:
            raise ValueError(f"wavelet depth k must be in 1..{DOWN_LAYERS}, got {self.k}")
        if len(self.encoder_channels) != DOWN_LAYERS:
            raise ValueError("encoder_channels must list one width per down-sampling row")
        if self.input_length % 2**DOWN_LAYERS:
            raise ValueError(f"input_length must be divisible by {2**DOWN_LAYERS}")
        if any(c % 2 for c in self.encoder_channels):
            raise ValueError("channel widths must be even (wavelet branches split them)")

    @property
    def bottleneck_length(self) -> int:
        return self.input_length // 2**DOWN_LAYERS

    def wavelet_depth(self) -> int:
        """Effective number of wavelet down/up rows for this variant."""
        if self.variant == "fcn":
            return 0
        if self.variant == "all":
            return DOWN_LAYERS
        return self.k

    def encoder_is_wavelet(self, position: int) -> bool:
        """Whether down-sampling row ``position`` (1-based) is a wavelet layer."""
        depth = self.wavelet_depth()
        if self.variant == "forward":
            return position <= depth
        return position > DOWN_LAYERS - depth  # backward / all; fcn has depth 0

    def decoder_is_wavelet(self, position: int) -> bool:
        """Mirror of the encoder: up row j pairs with down row 6-j."""
        return self.encoder_is_wavelet(DOWN_LAYERS + 1 - position)


@dataclass
class Row:
    """One architecture row: the main layer plus its post-activation chain."""

    index: int
    name: str
    main: Layer
    post: list = field(default_factory=list)

    def layers(self):
        return [self.main] + self.post


class Network:
    """An instantiated sequential model."""

    def __init__(self, spec: ModelSpec, rows: list[Row]):
        self.spec = spec
        self.rows = rows

    def layers(self):
        for row in self.rows:
            yield from row.layers()

    def forward(self, x, train=False):
        for layer in self.layers():
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad_out):
        for layer in reversed(list(self.layers())):
            grad_out = layer.backward(grad_out)
        return grad_out

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers()):
            for name, arr in layer.params().items():
                out[f"{i}.{name}"] = arr
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers()):
            for name, arr in layer.grads().items():
                out[f"{i}.{name}"] = arr
        return out

    def zero_grads(self):
        for layer in self.layers():
            layer.zero_grads()

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All persistent arrays: parameters plus batch-norm running stats."""
        out = dict(self.params())
        for i, layer in enumerate(self.layers()):
            if isinstance(layer, BatchNorm):
                out[f"{i}.running_mean"] = layer.running_mean
                out[f"{i}.running_var"] = layer.running_var
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_arrays().items()}

    def restore(self, snap: dict[str, np.ndarray]):
        for name, arr in self.state_arrays().items():
            arr[...] = snap[name]

    def set_dropout_rng(self, rng):
        for layer in self.layers():
            if isinstance(layer, Dropout):
                layer.rng = rng

    def parameter_count(self) -> int:
        return sum(arr.size for arr in self.params().values())


def _down_channels(spec: ModelSpec):
    """(in, out) channel pairs for the five down-sampling rows."""
    widths = (1,) + tuple(spec.encoder_channels)
    return list(zip(widths[:-1], widths[1:]))


def _up_channels(spec: ModelSpec):
    """(in, out) channel pairs for the five up-sampling rows."""
    outs = tuple(spec.encoder_channels)  # decoder mirrors the encoder widths
    ins = (1,) + outs[:-1]
    return list(zip(ins, outs))


def build_model(spec: ModelSpec) -> Network:
    """Instantiate the layer chain for ``spec`` with zeroed parameters."""
    rows = []

    def add(index, name, main, terminal=False):
        post = []
        if not terminal:
            channels = main.out_channels
            post = [BatchNorm(channels), Elu(), Dropout(DROPOUT_RATE)]
        rows.append(Row(index=index, name=name, main=main, post=post))

    k_conv = spec.kernel_conv
    k_branch = spec.kernel_wavelet_branch
    for pos, (c_in, c_out) in enumerate(_down_channels(spec), start=1):
        if spec.encoder_is_wavelet(pos):
            main = DwtLayer(c_in, c_out, kernel=k_branch)
        else:
            main = Conv1d(c_in, c_out, kernel=k_conv, stride=2)
        add(pos, f"encoder_{pos}", main)
    add(6, "bottleneck", Conv1d(spec.encoder_channels[-1], 1, kernel=k_conv), terminal=True)
    add(7, "expand", Conv1d(1, 1, kernel=k_conv))
    for pos, (c_in, c_out) in enumerate(_up_channels(spec), start=1):
        if spec.decoder_is_wavelet(pos):
            main = IdwtLayer(c_in, c_out, kernel=k_branch)
        else:
            main = TransposeConv1d(c_in, c_out, kernel=k_conv, stride=2)
        add(7 + pos, f"decoder_{pos}", main)
    add(13, "output", Conv1d(spec.encoder_channels[0], 1, kernel=k_conv), terminal=True)
    return Network(spec, rows)


def init_parameters(net: Network, seed: int) -> Network:
    """Fan-in-scaled uniform weights, zero biases, unit gains; deterministic."""
    rng = np.random.default_rng(seed)
    for layer in net.layers():
        layer.init(rng)
    return net


def shape_trace(spec: ModelSpec) -> list[tuple[int, int, int]]:
    """(row, length, channels) for input row 0 through output row 13."""
    trace = [(0, spec.input_length, 1)]
    length = spec.input_length
    for pos, (_c_in, c_out) in enumerate(_down_channels(spec), start=1):
        length //= 2
        trace.append((pos, length, c_out))
    trace.append((6, length, 1))
    trace.append((7, length, 1))
    for pos, (_c_in, c_out) in enumerate(_up_channels(spec), start=1):
        length *= 2
        trace.append((7 + pos, length, c_out))
    trace.append((13, length, 1))
    return trace


def describe(spec: ModelSpec) -> str:
    """Line-oriented key=value layer trace with parameter counts."""
    net = build_model(spec)
    trace = shape_trace(spec)
    lines = [
        f"variant={spec.variant}",
        f"k={spec.wavelet_depth()}",
        f"input_length={spec.input_length}",
        f"bottleneck_length={spec.bottleneck_length}",
        f"total_parameters={net.parameter_count()}",
    ]
    for row, (index, length, channels) in zip(net.rows, trace[1:]):
        row_params = sum(
            arr.size for layer in row.layers() for arr in layer.params().values()
        )
        lines.append(
            f"row={index} name={row.name} kind={row.main.kind} "
            f"out_length={length} out_channels={channels} parameters={row_params}"
        )
    return "\n".join(lines)
