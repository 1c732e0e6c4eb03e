"""Binary checkpointing of network + optimizer state.

Layout: 8 magic bytes, u32 format version, u32 JSON header length, JSON
header (topology table, counters, mask, array manifest), then the raw
little-endian float64 buffers of every W / psi / P in manifest order. Floats
round-trip bitwise, so a resumed run continues exactly.
"""

import json
import struct

import numpy as np

from . import tensor
from .errors import FormatError
from .network import LayerTopology, Network

MAGIC = b"RLSPCKPT"
VERSION = 1


def _topo_dict(t):
    return {
        "kind": t.kind, "in_channels": t.in_channels, "out_channels": t.out_channels,
        "in_nodes": t.in_nodes, "out_nodes": t.out_nodes, "kernel": list(t.kernel),
        "stride": t.stride, "window": t.window, "activation": t.activation,
    }


def _topo_from_dict(d):
    d = dict(d)
    d["kernel"] = tuple(d["kernel"])
    return LayerTopology(**d)


def save_checkpoint(path, net: Network, config: dict, epoch: int, sentinel: float):
    """Write the full training state; epoch is the number of completed epochs."""
    manifest = []
    buffers = []
    for idx in net.learnable_indices():
        state = net.states[idx]
        entry = {"layer": idx, "W": list(state.W.shape), "psi": list(state.psi.shape)}
        buffers.append(np.ascontiguousarray(state.W, dtype="<f8").tobytes())
        buffers.append(np.ascontiguousarray(state.psi, dtype="<f8").tobytes())
        if state.P is not None:
            entry["P"] = list(state.P.shape)
            buffers.append(np.ascontiguousarray(state.P, dtype="<f8").tobytes())
        manifest.append(entry)
    header = {
        "topologies": [_topo_dict(t) for t in net.topologies],
        "input_shape": list(net.input_shape) if net.input_shape is not None else None,
        "input_mask": None if net.input_mask is None else net.input_mask.tolist(),
        "original_unit_counts": net.original_unit_counts,
        "original_weight_counts": net.original_weight_counts,
        "config": config,
        "epoch": epoch,
        "sentinel": sentinel,
        "manifest": manifest,
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for buf in buffers:
            fh.write(buf)


def load_checkpoint(path):
    """Restore (network, config, epoch, sentinel) from a checkpoint file."""
    raw = open(path, "rb").read()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if len(raw) < 16 + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header: {exc}") from exc

    topologies = [_topo_from_dict(d) for d in header["topologies"]]
    input_shape = tuple(header["input_shape"]) if header["input_shape"] else None
    net = Network(topologies, seed=0, input_shape=input_shape)
    net.original_unit_counts = header["original_unit_counts"]
    net.original_weight_counts = header["original_weight_counts"]
    if header["input_mask"] is not None:
        net.input_mask = np.array(header["input_mask"], dtype=np.intp)

    offset = 16 + hlen
    for entry in header["manifest"]:
        state = net.states[entry["layer"]]
        for key in ("W", "psi", "P"):
            if key not in entry:
                continue
            shape = tuple(entry[key])
            nbytes = 8 * int(np.prod(shape))
            if offset + nbytes > len(raw):
                raise FormatError(f"{path}: truncated tensor data at byte {offset}")
            arr = np.frombuffer(raw, dtype="<f8", count=int(np.prod(shape)), offset=offset)
            setattr(state, key if key != "W" else "W",
                    arr.reshape(shape).astype(tensor.DTYPE))
            offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return net, header["config"], header["epoch"], header["sentinel"]
