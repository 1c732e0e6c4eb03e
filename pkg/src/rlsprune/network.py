"""Layer topologies, forward propagation, MSE loss and backpropagation.

Networks are sequences of conv / maxpool / fully-connected layers with no
bias terms. Convolutions are valid (no padding), activations are relu or
linear, and the final layer must be linear so the MSE loss acts directly on
its pre-activation.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor
from .errors import ConfigError, DimensionError, StateError

CONV = "conv"
MAXPOOL = "maxpool"
FC = "fc"

RELU = "relu"
LINEAR = "linear"


@dataclass
class LayerTopology:
    """Static description of one layer."""

    kind: str
    in_channels: int = 0
    out_channels: int = 0
    in_nodes: int = 0
    out_nodes: int = 0
    kernel: tuple = (0, 0)
    stride: int = 1
    window: int = 0
    activation: str = LINEAR

    def weight_shape(self):
        if self.kind == CONV:
            kh, kw = self.kernel
            return (self.in_channels * kh * kw, self.out_channels)
        if self.kind == FC:
            return (self.in_nodes, self.out_nodes)
        return None


@dataclass
class LayerState:
    """Mutable per-learnable-layer state: weights, velocity, inverse autocorrelation."""

    W: np.ndarray
    psi: np.ndarray
    P: np.ndarray = None  # allocated only by the RLS optimizer


@dataclass
class LayerTrace:
    """Cached activations of one layer from a forward pass."""

    X: np.ndarray = None        # layer input (im2col matrix for conv)
    Z: np.ndarray = None        # pre-activation
    Y: np.ndarray = None        # activation output
    argmax: np.ndarray = None   # maxpool winner indices
    in_shape: tuple = None      # spatial input shape for conv backward


@dataclass
class ForwardTrace:
    layers: list = field(default_factory=list)
    output: np.ndarray = None   # Z of the last layer (linear, so also Y)


def conv_layer(in_channels, out_channels, kernel=3, stride=1, activation=RELU):
    k = (kernel, kernel) if np.isscalar(kernel) else tuple(kernel)
    return LayerTopology(CONV, in_channels=in_channels, out_channels=out_channels,
                         kernel=k, stride=stride, activation=activation)


def maxpool_layer(window=2, stride=None):
    return LayerTopology(MAXPOOL, window=window, stride=stride or window)


def fc_layer(in_nodes, out_nodes, activation=RELU):
    return LayerTopology(FC, in_nodes=in_nodes, out_nodes=out_nodes,
                         activation=activation)


def fnn_arch(in_features=784, hidden=(1024, 512), num_classes=10):
    """Fully-connected relu net with a linear output layer."""
    layers = []
    prev = in_features
    for n in hidden:
        layers.append(fc_layer(prev, n, RELU))
        prev = n
    layers.append(fc_layer(prev, num_classes, LINEAR))
    return layers


def minivgg_arch(in_channels=3, num_classes=10):
    """Small VGG-style conv net for 32x32 inputs.

    Valid 3x3 convolutions shrink the spatial extents (32-30-28-14-12-10-5-3),
    so the last pool uses a 3x3 window to reach 1x1.
    """
    return [
        conv_layer(in_channels, 64),
        conv_layer(64, 64),
        maxpool_layer(2),
        conv_layer(64, 128),
        conv_layer(128, 128),
        maxpool_layer(2),
        conv_layer(128, 256),
        maxpool_layer(3),
        fc_layer(256, 1024, RELU),
        fc_layer(1024, num_classes, LINEAR),
    ]


def _activate(z, activation):
    if activation == RELU:
        return np.maximum(z, 0.0)
    if activation == LINEAR:
        return z
    raise ConfigError(f"unknown activation {activation!r}")


class Network:
    """A sequential network owning topologies and learnable-layer states."""

    def __init__(self, topologies, seed=0, input_shape=None):
        self.topologies = list(topologies)
        self._validate_chain()
        self.input_shape = input_shape  # (C, H, W) for conv nets, (N,) for fc nets
        self.input_mask = None  # retained original feature/channel indices, set by pruning
        self.states = {}
        rng = np.random.default_rng(seed)
        for idx, topo in enumerate(self.topologies):
            shape = topo.weight_shape()
            if shape is None:
                continue
            bound = 1.0 / np.sqrt(shape[0])
            w = rng.uniform(-bound, bound, size=shape).astype(tensor.DTYPE)
            self.states[idx] = LayerState(W=w, psi=np.zeros(shape, dtype=tensor.DTYPE))
        # frozen originals for retained-percentage reporting
        self.original_unit_counts = self.unit_counts()
        self.original_weight_counts = self.weight_counts()

    def _validate_chain(self):
        learnable = [t for t in self.topologies if t.kind in (CONV, FC)]
        if not learnable:
            raise ConfigError("network has no learnable layers")
        if learnable[-1].kind != FC or learnable[-1].activation != LINEAR:
            raise ConfigError("final layer must be fully-connected and linear")
        prev_channels = None
        for topo in self.topologies:
            if topo.kind == CONV and prev_channels is not None:
                if topo.in_channels != prev_channels:
                    raise ConfigError(
                        f"channel chain broken: {prev_channels} -> {topo.in_channels}"
                    )
            if topo.kind == CONV:
                prev_channels = topo.out_channels

    # -- layer bookkeeping -------------------------------------------------

    def learnable_indices(self):
        return [i for i, t in enumerate(self.topologies) if t.kind in (CONV, FC)]

    def layer_names(self):
        """Report row names: 'input' plus conv1..convN, fc1..fcM."""
        names = ["input"]
        nconv = nfc = 0
        for t in self.topologies:
            if t.kind == CONV:
                nconv += 1
                names.append(f"conv{nconv}")
            elif t.kind == FC:
                nfc += 1
                names.append(f"fc{nfc}")
        return names

    def input_unit_count(self):
        first = self.topologies[self.learnable_indices()[0]]
        if first.kind == CONV:
            return first.in_channels
        return first.in_nodes

    def unit_counts(self):
        """Output unit count per report row: input features, then per learnable layer."""
        counts = [self.input_unit_count()]
        spatial = None
        if self.input_shape is not None and len(self.input_shape) == 3:
            spatial = self.input_shape[1:]
        for topo in self.topologies:
            if topo.kind == CONV:
                if spatial is not None:
                    u = tensor.conv_output_extent(spatial[0], topo.kernel[0], topo.stride)
                    v = tensor.conv_output_extent(spatial[1], topo.kernel[1], topo.stride)
                    spatial = (u, v)
                    counts.append(topo.out_channels * u * v)
                else:
                    counts.append(topo.out_channels)
            elif topo.kind == MAXPOOL and spatial is not None:
                spatial = (spatial[0] // topo.window, spatial[1] // topo.window)
            elif topo.kind == FC:
                counts.append(topo.out_nodes)
        return counts

    def weight_counts(self):
        counts = [0]  # input row carries no weights
        for idx in self.learnable_indices():
            counts.append(self.states[idx].W.size)
        return counts

    # -- forward / backward ------------------------------------------------

    def forward(self, x):
        """Run the whole network, caching everything backward needs."""
        x = np.asarray(x, dtype=tensor.DTYPE)
        trace = ForwardTrace()
        y = x
        for idx, topo in enumerate(self.topologies):
            rec = LayerTrace()
            if topo.kind == CONV:
                state = self.states[idx]
                rec.in_shape = y.shape
                cols = tensor.extract_receptive_fields(y, topo.kernel, topo.stride)
                z_rows = tensor.matmul(cols, state.W)
                m = y.shape[0]
                u = tensor.conv_output_extent(y.shape[2], topo.kernel[0], topo.stride)
                v = tensor.conv_output_extent(y.shape[3], topo.kernel[1], topo.stride)
                z = z_rows.reshape(m, u, v, topo.out_channels).transpose(0, 3, 1, 2)
                rec.X = cols
                rec.Z = z
                rec.Y = _activate(z, topo.activation)
            elif topo.kind == MAXPOOL:
                rec.in_shape = y.shape
                out, argmax = _maxpool_forward(y, topo.window, topo.stride)
                rec.Y = out
                rec.argmax = argmax
            elif topo.kind == FC:
                state = self.states[idx]
                if y.ndim == 4:
                    y = y.reshape(y.shape[0], -1)  # channel-major flatten
                if y.shape[1] != state.W.shape[0]:
                    raise DimensionError(
                        f"fc layer expects {state.W.shape[0]} inputs, got {y.shape[1]}"
                    )
                z = tensor.matmul(y, state.W)
                rec.X = y
                rec.Z = z
                rec.Y = _activate(z, topo.activation)
            else:
                raise ConfigError(f"unknown layer kind {topo.kind!r}")
            trace.layers.append(rec)
            y = rec.Y
        trace.output = trace.layers[-1].Z
        return trace

    def backward(self, trace, y_star):
        """Per-layer weight gradients of the MSE loss for a completed trace."""
        if trace.output is None or len(trace.layers) != len(self.topologies):
            raise StateError("backward requires a completed forward trace")
        y_star = np.asarray(y_star, dtype=tensor.DTYPE)
        m = trace.output.shape[0]
        grads = {}
        d = (trace.output - y_star) / m  # dJ/dZ_L for the 1/(2M) Frobenius loss
        for idx in range(len(self.topologies) - 1, -1, -1):
            topo = self.topologies[idx]
            rec = trace.layers[idx]
            if topo.kind == FC:
                if topo.activation == RELU:
                    d = d * (rec.Z > 0)
                grads[idx] = tensor.matmul(rec.X.T, d)
                d = tensor.matmul(d, self.states[idx].W.T)
            elif topo.kind == MAXPOOL:
                d = _maxpool_backward(d, rec.argmax, rec.in_shape, topo.window, topo.stride)
            elif topo.kind == CONV:
                if d.ndim == 2:  # gradient arrived from an fc layer: unflatten
                    d = d.reshape(rec.Z.shape)
                if topo.activation == RELU:
                    d = d * (rec.Z > 0)
                d_rows = d.transpose(0, 2, 3, 1).reshape(-1, topo.out_channels)
                grads[idx] = tensor.matmul(rec.X.T, d_rows)
                d_cols = tensor.matmul(d_rows, self.states[idx].W.T)
                d = tensor.fold_receptive_fields(d_cols, rec.in_shape, topo.kernel, topo.stride)
        return grads


def _maxpool_forward(x, window, stride):
    m, c, h, w = x.shape
    if h < window or w < window or (h - window) % stride or (w - window) % stride:
        raise DimensionError(f"pool window {window}/{stride} does not tile {x.shape}")
    u = (h - window) // stride + 1
    v = (w - window) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, (window, window), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride].reshape(m, c, u, v, window * window)
    argmax = windows.argmax(axis=-1)  # ties -> smallest window-local index
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def _maxpool_backward(d, argmax, in_shape, window, stride):
    m, c, h, w = in_shape
    u, v = argmax.shape[2], argmax.shape[3]
    if d.ndim == 2:
        d = d.reshape(m, c, u, v)
    grad = np.zeros(in_shape, dtype=d.dtype)
    wi, wj = np.divmod(argmax, window)
    mi, ci, ui, vi = np.indices(argmax.shape)
    rows = ui * stride + wi
    cols = vi * stride + wj
    np.add.at(grad, (mi, ci, rows, cols), d)
    return grad


def mse_loss(z_l, y_star):
    """J = ||Z - Y*||_F^2 / (2M)."""
    z_l = np.asarray(z_l)
    y_star = np.asarray(y_star)
    if z_l.shape != y_star.shape:
        raise DimensionError(f"loss operands disagree: {z_l.shape} vs {y_star.shape}")
    m = z_l.shape[0]
    diff = z_l - y_star
    return float(np.sum(diff * diff) / (2.0 * m))


def forward_fc(x, w, activation):
    """Single fc layer: Z = XW, Y = f(Z)."""
    z = tensor.matmul(x, w)
    return z, _activate(z, activation)


def forward_conv(x, w, kernel, stride, activation):
    """Single conv layer via im2col; returns (Z, Y, im2col matrix)."""
    cols = tensor.extract_receptive_fields(x, kernel, stride)
    z_rows = tensor.matmul(cols, w)
    m = x.shape[0]
    u = tensor.conv_output_extent(x.shape[2], kernel[0], stride)
    v = tensor.conv_output_extent(x.shape[3], kernel[1], stride)
    z = z_rows.reshape(m, u, v, w.shape[1]).transpose(0, 3, 1, 2)
    return z, _activate(z, activation), cols


def forward_maxpool(x, window, stride=None):
    """Single maxpool layer; returns (output, argmax indices)."""
    return _maxpool_forward(np.asarray(x, dtype=tensor.DTYPE), window, stride or window)
