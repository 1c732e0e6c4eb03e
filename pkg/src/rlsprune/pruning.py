"""Importance scoring and structural surgery for channel/node pruning.

Each learnable layer scores its *input* units two ways: row-group sums of its
inverse input-autocorrelation matrix P (large sum = less important) and the
L1 norm of the previous layer's weight slice producing the unit (small norm =
less important). Units in the top cut of both rankings are physically removed
from the layer, its P and velocity, and from the producing layer's weights.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, StateError
from .network import CONV, FC, Network

INPUT_NODE = "input-node"
INPUT_CHANNEL = "input-channel"
FLATTENED_CONV = "channel-of-flattened-conv"


@dataclass
class PruneSet:
    layer_pos: int              # position among learnable layers, 0-based
    indices: np.ndarray         # input-unit indices to remove, ascending
    kind: str
    priority: np.ndarray = None  # same indices in selection-priority order


@dataclass
class PruneEvent:
    step: int
    epoch: int
    loss: float
    removed: dict               # layer_pos -> number of input units removed
    retained_nodes_pct: float
    retained_weights_pct: float


@dataclass
class PruneReport:
    events: list = field(default_factory=list)


def score_P(P, kind, kernel_hw=1):
    """Unit importance from P row sums; conv units group kernel_hw rows each.

    Larger score means less important input.
    """
    P = np.asarray(P)
    row_sums = P.sum(axis=1)
    if kind == FC:
        return row_sums
    n = row_sums.size
    if n % kernel_hw != 0:
        raise DimensionError(f"P extent {n} not divisible by kernel size {kernel_hw}")
    return row_sums.reshape(n // kernel_hw, kernel_hw).sum(axis=1)


def score_W(prev_w):
    """Per-output-unit L1 norm of the producing weight slice (column norms).

    Works for both layer kinds: conv weights are stored (C_in*H*W) x C_out,
    fc weights N_in x N_out, so column i always produces unit i.
    """
    return np.abs(np.asarray(prev_w)).sum(axis=0)


def rank(s_p, s_w=None):
    """Sorted index lists: s_p descending, s_w ascending; stable ties."""
    s_p = np.asarray(s_p)
    k_p = np.argsort(-s_p, kind="stable")
    if s_w is None:
        return k_p, None
    s_w = np.asarray(s_w)
    if s_w.size != s_p.size:
        raise DimensionError(f"score lengths disagree: {s_p.size} vs {s_w.size}")
    return k_p, np.argsort(s_w, kind="stable")


def select_prune_set(k_p, k_w, xi, n_units, layer_pos, kind=INPUT_NODE):
    """Intersect the top-xi cuts of both rankings (P-only, halved, for layer 1)."""
    if not 0.0 < xi < 1.0:
        raise DimensionError(f"pruning ratio must be in (0,1), got {xi}")
    if layer_pos == 0 or k_w is None:
        cut = int(0.5 * xi * n_units)
        chosen = list(k_p[:cut])
    else:
        cut = int(xi * n_units)
        top_w = set(k_w[:cut])
        chosen = [i for i in k_p[:cut] if i in top_w]
    # survivor floor: never remove every unit
    chosen = chosen[: max(0, n_units - 1)]
    return PruneSet(layer_pos=layer_pos,
                    indices=np.array(sorted(chosen), dtype=np.intp),
                    kind=kind,
                    priority=np.array(chosen, dtype=np.intp))


def _delete_rows(state, rows):
    state.W = np.delete(state.W, rows, axis=0)
    state.psi = np.delete(state.psi, rows, axis=0)
    if state.P is not None:
        state.P = np.delete(np.delete(state.P, rows, axis=0), rows, axis=1)


def _delete_columns(state, cols):
    state.W = np.delete(state.W, cols, axis=1)
    state.psi = np.delete(state.psi, cols, axis=1)


def _expand_channel_rows(channels, block):
    return np.concatenate([np.arange(c * block, (c + 1) * block) for c in channels])


def _shrink_mask(net, n_units, removed, kind):
    if net.input_mask is None:
        net.input_mask = np.arange(n_units, dtype=np.intp)
    keep = np.setdiff1d(np.arange(net.input_mask.size), removed)
    net.input_mask = net.input_mask[keep]


class LayerInfo:
    """Resolved geometry of one learnable layer inside a network."""

    def __init__(self, idx, topo, prev_idx, prev_topo, flatten_uv):
        self.idx = idx
        self.topo = topo
        self.prev_idx = prev_idx
        self.prev_topo = prev_topo
        self.flatten_uv = flatten_uv  # spatial node count per channel at conv->fc


def layer_infos(net: Network):
    infos = []
    prev_idx = prev_topo = None
    for idx in net.learnable_indices():
        topo = net.topologies[idx]
        flatten_uv = None
        if topo.kind == FC and prev_topo is not None and prev_topo.kind == CONV:
            if topo.in_nodes % prev_topo.out_channels != 0:
                raise StateError(
                    f"fc input {topo.in_nodes} not a multiple of "
                    f"{prev_topo.out_channels} conv channels"
                )
            flatten_uv = topo.in_nodes // prev_topo.out_channels
        infos.append(LayerInfo(idx, topo, prev_idx, prev_topo, flatten_uv))
        prev_idx, prev_topo = idx, topo
    return infos


def apply_prune(net: Network, prune_set: PruneSet):
    """Physically remove the selected input units of one layer.

    Deletes the matching rows of W/psi, rows+columns of P, and the producing
    columns (or filters) of the previous learnable layer; layer 1 instead
    records an input mask. Topology counts are kept in sync.
    """
    indices = np.asarray(prune_set.indices, dtype=np.intp)
    if indices.size == 0:
        return
    infos = layer_infos(net)
    info = infos[prune_set.layer_pos]
    topo, state = info.topo, net.states[info.idx]

    if topo.kind == CONV:
        n_units = topo.in_channels
    else:
        n_units = topo.in_nodes
    if indices.min() < 0 or indices.max() >= n_units:
        raise DimensionError(f"prune indices out of range for {n_units} units")
    if np.unique(indices).size != indices.size:
        raise DimensionError("prune indices must be unique")

    if topo.kind == CONV:
        block = topo.kernel[0] * topo.kernel[1]
        rows = _expand_channel_rows(indices, block)
        if indices.size >= n_units:
            raise StateError("cannot remove every input channel of a layer")
        _delete_rows(state, rows)
        topo.in_channels -= indices.size
        if info.prev_topo is None:
            _shrink_mask(net, n_units, indices, INPUT_CHANNEL)
            if net.input_shape is not None:
                net.input_shape = (topo.in_channels,) + tuple(net.input_shape[1:])
        else:
            prev = net.states[info.prev_idx]
            if indices.size >= info.prev_topo.out_channels:
                raise StateError("cannot remove every output channel of a layer")
            _delete_columns(prev, indices)
            info.prev_topo.out_channels -= indices.size
        return

    # fully-connected layer
    if info.prev_topo is not None and info.prev_topo.kind == CONV:
        # conv->fc boundary: a node maps to the channel that produced it and
        # the whole channel (all of its spatial nodes) is deleted
        uv = info.flatten_uv
        order = prune_set.priority if prune_set.priority is not None else indices
        seen = dict.fromkeys(int(n) // uv for n in order)  # priority-ordered dedup
        chans = list(seen)
        if len(chans) >= info.prev_topo.out_channels:
            # survivor floor at channel granularity: truncate the selection
            chans = chans[: info.prev_topo.out_channels - 1]
        channels = np.array(sorted(chans), dtype=np.intp)
        if channels.size == 0:
            return
        rows = _expand_channel_rows(channels, uv)
        _delete_rows(state, rows)
        topo.in_nodes -= rows.size
        prev = net.states[info.prev_idx]
        _delete_columns(prev, channels)
        info.prev_topo.out_channels -= channels.size
        return

    if indices.size >= n_units:
        raise StateError("cannot remove every input node of a layer")
    _delete_rows(state, indices)
    topo.in_nodes -= indices.size
    if info.prev_topo is None:
        _shrink_mask(net, n_units, indices, INPUT_NODE)
        if net.input_shape is not None and len(net.input_shape) == 1:
            net.input_shape = (topo.in_nodes,)
    else:
        prev = net.states[info.prev_idx]
        if indices.size >= info.prev_topo.out_nodes:
            raise StateError("cannot remove every output node of a layer")
        _delete_columns(prev, indices)
        info.prev_topo.out_nodes -= indices.size


def prune_round(net: Network, xi, min_input_channels=3):
    """One full pruning pass, layer by layer in ascending order (Algorithm flow).

    Returns {layer_pos: units removed}. Conv-net input pruning is skipped when
    the image has min_input_channels or fewer channels.
    """
    removed = {}
    n_layers = len(net.learnable_indices())
    for pos in range(n_layers):
        info = layer_infos(net)[pos]
        topo = info.topo
        state = net.states[info.idx]
        if state.P is None:
            raise StateError("pruning requires RLS state (P matrices)")
        if topo.kind == CONV:
            n_units = topo.in_channels
            s_p = score_P(state.P, CONV, topo.kernel[0] * topo.kernel[1])
            kind = INPUT_CHANNEL
        else:
            n_units = topo.in_nodes
            s_p = score_P(state.P, FC)
            kind = INPUT_NODE
        if pos == 0:
            if topo.kind == CONV and topo.in_channels <= min_input_channels:
                continue
            s_w = None
        else:
            s_w = score_W(net.states[info.prev_idx].W)
            if info.flatten_uv is not None:
                s_w = np.repeat(s_w, info.flatten_uv)  # per-node score at the boundary
                kind = FLATTENED_CONV
        k_p, k_w = rank(s_p, s_w)
        pset = select_prune_set(k_p, k_w, xi, n_units, pos, kind)
        if pset.indices.size == 0:
            continue
        before = _input_units(net, pos)
        apply_prune(net, pset)
        removed[pos] = before - _input_units(net, pos)
    return removed


def _input_units(net, pos):
    info = layer_infos(net)[pos]
    return info.topo.in_channels if info.topo.kind == CONV else info.topo.in_nodes


def retained_percentages(net: Network):
    """Per report row (input + learnable layers): retained node % and weight %."""
    current_units = net.unit_counts()
    current_weights = net.weight_counts()
    nodes_pct = [
        100.0 * c / o for c, o in zip(current_units, net.original_unit_counts)
    ]
    weights_pct = [100.0] + [
        100.0 * c / o
        for c, o in zip(current_weights[1:], net.original_weight_counts[1:])
    ]
    return nodes_pct, weights_pct


def totals(net: Network):
    """Aggregate retained node/weight percentages over the whole network."""
    cu, cw = net.unit_counts(), net.weight_counts()
    ou, ow = net.original_unit_counts, net.original_weight_counts
    return 100.0 * sum(cu) / sum(ou), 100.0 * sum(cw) / sum(ow)
