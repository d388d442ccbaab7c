"""Binary checkpoints for plain and branching MERA states.

Layout (all little-endian):

    magic      8 bytes   b"BMERACKP"
    version    uint32
    n_records  uint32
    records    n_records times:
        name_len uint16, name (utf-8)
        kind     uint8    0 = complex128 array, 1 = utf-8 text
        ndim     uint32, dims uint32 * ndim     (arrays)
        nbytes   uint32                         (text)
        payload  raw complex128 values in row-major order, or the text bytes
"""
from __future__ import annotations

import struct

import numpy as np

from .branching import BranchingMeraState
from .mera import LayerSpec, Mera

MAGIC = b"BMERACKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_record(fh, name: str, value):
    nb = name.encode()
    fh.write(struct.pack("<H", len(nb)) + nb)
    if isinstance(value, str):
        data = value.encode()
        fh.write(struct.pack("<BI", 1, len(data)) + data)
        return
    arr = np.ascontiguousarray(value, dtype="<c16")
    fh.write(struct.pack("<BI", 0, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


def _read_exact(fh, n):
    b = fh.read(n)
    if len(b) != n:
        raise CheckpointError("truncated checkpoint")
    return b


def _read_record(fh):
    (nl,) = struct.unpack("<H", _read_exact(fh, 2))
    name = _read_exact(fh, nl).decode()
    kind, n = struct.unpack("<BI", _read_exact(fh, 5))
    if kind == 1:
        return name, _read_exact(fh, n).decode()
    if kind != 0:
        raise CheckpointError(f"unknown record kind {kind}")
    dims = struct.unpack(f"<{n}I", _read_exact(fh, 4 * n))
    count = int(np.prod(dims)) if dims else 1
    arr = np.frombuffer(_read_exact(fh, 16 * count), dtype="<c16").reshape(dims)
    return name, arr.astype(complex)


def _layer_records(prefix, layer: LayerSpec):
    out = [(f"{prefix}/kind", layer.kind)]
    if layer.swap_kind is not None:
        out.append((f"{prefix}/swap_kind", layer.swap_kind))
    out += [(f"{prefix}/{k}", t) for k, t in sorted(layer.tensors.items())]
    out += [(f"{prefix}/parity_in", layer.parity_in), (f"{prefix}/parity_out", layer.parity_out)]
    return out


def _mera_records(prefix, m: Mera):
    out = [(f"{prefix}/n_layers", np.array([len(m.layers)]))]
    for k, layer in enumerate(m.layers):
        out += _layer_records(f"{prefix}/{k}", layer)
    if m.rho_top is not None:
        out.append((f"{prefix}/rho_top", m.rho_top))
    return out


def save_checkpoint(path, state, meta: dict | None = None):
    """Write a Mera or BranchingMeraState; ``meta`` values are stored as text."""
    if isinstance(state, BranchingMeraState):
        recs = [("type", "branching"), ("s_star", np.array([state.s_star]))]
        recs += [("trunk/n_layers", np.array([len(state.trunk)]))]
        for k, layer in enumerate(state.trunk):
            recs += _layer_records(f"trunk/{k}", layer)
        recs += _layer_records("V", state.v)
        for b in ("A", "B"):
            recs += _mera_records(b, state.branches[b])
    elif isinstance(state, Mera):
        recs = [("type", "mera")] + _mera_records("M", state)
    else:
        raise TypeError("state must be a Mera or a BranchingMeraState")
    for k, v in (meta or {}).items():
        recs.append((f"meta/{k}", str(v)))
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(recs)))
        for name, value in recs:
            _write_record(fh, name, value)


def _layer_from(rec, prefix):
    kind = rec[f"{prefix}/kind"]
    names = ("u", "w") if kind == "W" else ("u", "v")
    tensors = {n: rec[f"{prefix}/{n}"] for n in names}
    pin = np.real(rec[f"{prefix}/parity_in"]).astype(int)
    pout = np.real(rec[f"{prefix}/parity_out"]).astype(int)
    return LayerSpec(kind, tensors, pin, pout, rec.get(f"{prefix}/swap_kind"))


def _mera_from(rec, prefix):
    n = int(np.real(rec[f"{prefix}/n_layers"][0]))
    layers = [_layer_from(rec, f"{prefix}/{k}") for k in range(n)]
    return Mera(layers, rec.get(f"{prefix}/rho_top"))


def load_checkpoint(path):
    """Returns (state, meta dict)."""
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:8] != MAGIC:
            raise CheckpointError("not a branching-MERA checkpoint")
        version, n = struct.unpack("<II", head[8:])
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        rec = dict(_read_record(fh) for _ in range(n))
    meta = {k[5:]: v for k, v in rec.items() if k.startswith("meta/")}
    try:
        if rec["type"] == "mera":
            return _mera_from(rec, "M"), meta
        s_star = int(np.real(rec["s_star"][0]))
        n_trunk = int(np.real(rec["trunk/n_layers"][0]))
        trunk = [_layer_from(rec, f"trunk/{k}") for k in range(n_trunk)]
        state = BranchingMeraState(trunk, _layer_from(rec, "V"),
                                   {b: _mera_from(rec, b) for b in ("A", "B")}, s_star)
        return state, meta
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing record {exc}") from exc
