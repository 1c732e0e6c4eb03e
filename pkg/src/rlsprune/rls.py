"""Recursive-least-squares optimization.

Two levels live here: the classic vector RLS recursion (used as a small-scale
verification oracle) and the layer-wise variant that preconditions momentum
updates with each layer's inverse input-autocorrelation matrix P. P doubles
as the pruning importance signal, so the optimizer keeps it on LayerState.
"""

from dataclasses import dataclass, field

import numpy as np

from . import network, tensor
from .errors import ConfigError, DimensionError, SingularityError


@dataclass
class RlsHyperParams:
    lam: float = 1.0       # forgetting factor
    k: float = 0.1         # average scaling factor
    alpha: float = 0.5     # momentum factor
    eta: float = 1.0       # gradient scaling factor (scalar broadcast or per-layer list)
    delta: float = 1.0     # P0 = I / delta
    eps_h: float = 1e-8    # denominator floor

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError(f"forgetting factor must be in (0,1], got {self.lam}")
        if self.k <= 0.0:
            raise ConfigError(f"average scaling factor must be > 0, got {self.k}")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"momentum factor must be in [0,1), got {self.alpha}")
        etas = self.eta if isinstance(self.eta, (list, tuple)) else [self.eta]
        if any(e <= 0.0 for e in etas):
            raise ConfigError(f"gradient scaling factors must be > 0, got {self.eta}")
        if self.delta <= 0.0 or self.eps_h <= 0.0:
            raise ConfigError("delta and eps_h must be > 0")

    def eta_for(self, layer_pos, n_layers):
        if isinstance(self.eta, (list, tuple)):
            if len(self.eta) != n_layers:
                raise ConfigError(
                    f"expected {n_layers} per-layer eta values, got {len(self.eta)}"
                )
            return float(self.eta[layer_pos])
        return float(self.eta)


@dataclass
class ClassicRlsState:
    w: np.ndarray
    P: np.ndarray


def classic_rls_init(dim, delta=1.0):
    return ClassicRlsState(
        w=np.zeros(dim, dtype=tensor.DTYPE),
        P=np.eye(dim, dtype=tensor.DTYPE) / delta,
    )


def classic_rls_step(state, x, y_star, lam=1.0, eps_h=1e-8):
    """One step of the classic RLS recursion (Sherman-Morrison form)."""
    x = np.asarray(x, dtype=tensor.DTYPE)
    if x.shape != state.w.shape or state.P.shape != (x.size, x.size):
        raise DimensionError(f"state/input extents disagree: {x.shape} vs {state.w.shape}")
    u = state.P @ x
    denom = lam + u @ x
    if denom <= eps_h:
        raise SingularityError(f"gain denominator {denom} below floor {eps_h}")
    g = u / denom
    p_new = (state.P - np.outer(g, u)) / lam
    e = state.w @ x - y_star
    return ClassicRlsState(w=state.w - g * e, P=0.5 * (p_new + p_new.T))


def average_input(x_mat):
    """Mean input vector of a layer: mean over the rows of its input matrix.

    For an fc layer the rows are the M samples; for a conv layer the rows are
    the M*U*V im2col patches, so this is the spatial-and-batch average.
    """
    x_mat = np.asarray(x_mat)
    if x_mat.ndim != 2 or x_mat.shape[0] == 0:
        raise DimensionError(f"expected a non-empty 2-D input matrix, got {x_mat.shape}")
    return x_mat.mean(axis=0)


def update_P(P, xbar, lam, k, eps_h=1e-8):
    """Rank-one inverse-autocorrelation update.

    Returns (P', h, u) where u = P xbar and h = lam + k xbar'u. h feeds the
    weight update; a non-positive h means degenerate curvature and aborts.
    """
    xbar = np.asarray(xbar, dtype=tensor.DTYPE)
    if P.shape != (xbar.size, xbar.size):
        raise DimensionError(f"P extent {P.shape} does not match input dim {xbar.size}")
    u = P @ xbar
    h = lam + k * (xbar @ u)
    if h <= eps_h:
        raise SingularityError(f"curvature denominator {h} below floor {eps_h}")
    p_new = P / lam - (k / (lam * h)) * np.outer(u, u)
    return 0.5 * (p_new + p_new.T), h, u


def update_weights(state, grad, h, alpha, eta):
    """Momentum update preconditioned by the pre-update P: psi, then W += psi."""
    if grad.shape != state.W.shape:
        raise DimensionError(f"gradient shape {grad.shape} != weight shape {state.W.shape}")
    state.psi = alpha * state.psi - (eta / h) * (state.P @ grad)
    state.W = state.W + state.psi
    return state


class RlsOptimizer:
    """Applies the layer-wise RLS update to every learnable layer of a network."""

    def __init__(self, params: RlsHyperParams):
        self.params = params

    def attach(self, net: network.Network):
        for idx in net.learnable_indices():
            state = net.states[idx]
            dim = state.W.shape[0]
            state.P = np.eye(dim, dtype=tensor.DTYPE) / self.params.delta
        return self

    def step(self, net: network.Network, trace: network.ForwardTrace, grads):
        """One training step: for each layer update psi/W with P_{t-1}, then P."""
        learnable = net.learnable_indices()
        n = len(learnable)
        for pos in range(n - 1, -1, -1):
            idx = learnable[pos]
            state = net.states[idx]
            xbar = average_input(trace.layers[idx].X)
            u = state.P @ xbar
            h = self.params.lam + self.params.k * (xbar @ u)
            if h <= self.params.eps_h:
                raise SingularityError(
                    f"curvature denominator {h} below floor at layer {idx}"
                )
            eta = self.params.eta_for(pos, n)
            update_weights(state, grads[idx], h, self.params.alpha, eta)
            p_new = state.P / self.params.lam - (
                self.params.k / (self.params.lam * h)
            ) * np.outer(u, u)
            state.P = 0.5 * (p_new + p_new.T)


class MomentumOptimizer:
    """Baseline momentum SGD with L2 weight decay; allocates no P matrices."""

    def __init__(self, lr=0.1, beta=0.9, weight_decay=1e-4):
        if lr <= 0:
            raise ConfigError(f"learning rate must be > 0, got {lr}")
        self.lr = lr
        self.beta = beta
        self.weight_decay = weight_decay

    def attach(self, net: network.Network):
        return self

    def step(self, net: network.Network, trace, grads):
        for idx in net.learnable_indices():
            state = net.states[idx]
            momentum_step(state, grads[idx], self.lr, self.beta, self.weight_decay)


def momentum_step(state, grad, lr, beta, weight_decay):
    """v <- beta v - lr (grad + wd W); W <- W + v."""
    if grad.shape != state.W.shape:
        raise DimensionError(f"gradient shape {grad.shape} != weight shape {state.W.shape}")
    state.psi = beta * state.psi - lr * (grad + weight_decay * state.W)
    state.W = state.W + state.psi
    return state
