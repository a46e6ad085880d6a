"""Binary and CSV formats for replicate sets, censored tensors and checkpoints.

All integers and floats are little-endian. Every file opens with a 16-byte
header: an 8-byte magic, a u32 format version and a u32 that gives the
length of the f64 parameter block (or is zero for checkpoints).
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .censoring import C_POLICIES, CensoredTensor, CensoringScheme
from .exceptions import CheckpointError, InvalidData
from .margins import MarginTag
from .network import Architecture, EstimatorWeights
from .processes import FAMILIES, ProcessSpec, ReplicateSet
from .spatial import AnisotropyParams, build_grid

__all__ = [
    "save_replicates",
    "load_replicates",
    "export_replicates_csv",
    "save_censored_tensor",
    "load_censored_tensor",
    "save_weights",
    "load_weights",
]

RSET_MAGIC = b"CNBERSET"
CTEN_MAGIC = b"CNBECTEN"
CKPT_MAGIC = b"CNBECKPT"
VERSION = 1
N_PARAMS = 9  # lam, kappa, delta, A, omega, x_min, x_max, y_min, y_max
NO_FAMILY = 0xFFFFFFFF
_FAMILY_NAMES = {v: k for k, v in FAMILIES.items()}


def _param_block(spec: ProcessSpec | None) -> np.ndarray:
    block = np.full(N_PARAMS, np.nan)
    if spec is None:
        return block
    block[0], block[1] = spec.lam, spec.kappa
    if spec.delta is not None:
        block[2] = spec.delta
    if spec.aniso is not None:
        block[3], block[4] = spec.aniso.A, spec.aniso.omega
    block[5:] = spec.grid.extent
    return block


def _spec_from_block(family_id, G, block) -> ProcessSpec | None:
    if family_id == NO_FAMILY:
        return None
    try:
        family = _FAMILY_NAMES[family_id]
    except KeyError:
        raise InvalidData(f"unknown family id {family_id}") from None
    grid = build_grid(G, tuple(block[5:]))
    delta = None if np.isnan(block[2]) else float(block[2])
    aniso = None if np.isnan(block[3]) else AnisotropyParams(float(block[3]), float(block[4]))
    return ProcessSpec(family, grid, float(block[0]), float(block[1]), delta, aniso)


def _read_header(buf: bytes, magic: bytes, err):
    if len(buf) < 16 or buf[:8] != magic:
        raise err(f"not a {magic.decode()} file")
    version, n_params = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise err(f"unsupported format version {version}")
    return n_params


def save_replicates(rset: ReplicateSet, path) -> None:
    """Write a replicate set; values are stored as float32."""
    m, d = rset.data.shape
    G = rset.grid.side_length
    with open(path, "wb") as fh:
        fh.write(RSET_MAGIC + struct.pack("<II", VERSION, N_PARAMS))
        fh.write(struct.pack("<5I", m, d, G, FAMILIES[rset.spec.family], rset.margin.code))
        fh.write(_param_block(rset.spec).astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(rset.data, dtype="<f4").tobytes())


def load_replicates(path) -> ReplicateSet:
    buf = Path(path).read_bytes()
    n_params = _read_header(buf, RSET_MAGIC, InvalidData)
    off = 16
    try:
        m, d, G, fam, margin = struct.unpack_from("<5I", buf, off)
        off += 20
        block = np.frombuffer(buf, "<f8", n_params, off)
        off += 8 * n_params
        if len(buf) != off + 4 * m * d:
            raise InvalidData(f"expected {m * d} values, file holds {(len(buf) - off) // 4}")
        data = np.frombuffer(buf, "<f4", m * d, off).reshape(m, d).astype(np.float64)
    except struct.error as exc:
        raise InvalidData(f"truncated replicate file: {exc}") from None
    spec = _spec_from_block(fam, G, block)
    if spec.grid.d != d:
        raise InvalidData(f"grid side {G} inconsistent with d={d}")
    return ReplicateSet(spec, data, MarginTag.from_code(margin))


def export_replicates_csv(rset: ReplicateSet, path) -> None:
    """One row per replicate, one column per site (row-major site order)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"s{k}" for k in range(rset.d)])
        for row in rset.data:
            w.writerow([f"{v:.9g}" for v in row])


def save_censored_tensor(tensor: CensoredTensor, path, spec: ProcessSpec | None = None) -> None:
    m, G = tensor.m, tensor.side_length
    fam = NO_FAMILY if spec is None else FAMILIES[spec.family]
    with open(path, "wb") as fh:
        fh.write(CTEN_MAGIC + struct.pack("<II", VERSION, N_PARAMS))
        fh.write(struct.pack("<6I", m, G * G, G, fam, tensor.scheme.margin.code,
                             C_POLICIES.index(tensor.scheme.c_policy)))
        fh.write(_param_block(spec).astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(tensor.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(tensor.indicator, dtype="u1").tobytes())
        fh.write(struct.pack("<d", tensor.tau))


def load_censored_tensor(path, with_spec=False):
    """Read a tensor; ``with_spec`` also returns the stored process spec (or None)."""
    buf = Path(path).read_bytes()
    n_params = _read_header(buf, CTEN_MAGIC, InvalidData)
    try:
        m, d, G, fam, margin, policy = struct.unpack_from("<6I", buf, 16)
        off = 16 + 24
        block = np.frombuffer(buf, "<f8", n_params, off)
        off += 8 * n_params
        if len(buf) != off + 9 * m * d + 8:
            raise InvalidData("censored tensor file has the wrong length")
        values = np.frombuffer(buf, "<f8", m * d, off).reshape(m, G, G).copy()
        off += 8 * m * d
        ind = np.frombuffer(buf, "u1", m * d, off).reshape(m, G, G).copy()
        off += m * d
        (tau,) = struct.unpack_from("<d", buf, off)
    except (struct.error, ValueError) as exc:
        raise InvalidData(f"truncated censored tensor file: {exc}") from None
    scheme = CensoringScheme(tau, MarginTag.from_code(margin), C_POLICIES[policy])
    tensor = CensoredTensor(values, ind, tau, scheme)
    if with_spec:
        return tensor, _spec_from_block(fam, G, block)
    return tensor


def save_weights(weights: EstimatorWeights, path) -> None:
    """Checkpoint: header, 32-byte architecture fingerprint, u64 count,
    float32 parameters, u32 length and a JSON metadata blob."""
    meta = {
        "architecture": weights.arch.to_dict(),
        "out_center": weights.out_center.tolist(),
        "out_scale": weights.out_scale.tolist(),
        "metadata": weights.metadata,
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    params = np.ascontiguousarray(weights.params, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC + struct.pack("<II", VERSION, 0))
        fh.write(weights.fingerprint())
        fh.write(struct.pack("<Q", params.size))
        fh.write(params.tobytes())
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def load_weights(path, arch: Architecture | None = None) -> EstimatorWeights:
    """Read a checkpoint; when ``arch`` is given its fingerprint must match."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from None
    _read_header(buf, CKPT_MAGIC, CheckpointError)
    try:
        fp = buf[16:48]
        (n,) = struct.unpack_from("<Q", buf, 48)
        off = 56
        if len(buf) < off + 4 * n + 4:
            raise CheckpointError("checkpoint is truncated")
        params = np.frombuffer(buf, "<f4", n, off).astype(np.float32)
        off += 4 * n
        (nb,) = struct.unpack_from("<I", buf, off)
        off += 4
        if len(buf) != off + nb:
            raise CheckpointError("checkpoint metadata is truncated")
        meta = json.loads(buf[off:off + nb].decode())
        file_arch = Architecture.from_dict(meta["architecture"])
    except (struct.error, ValueError, KeyError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None
    if file_arch.fingerprint() != fp:
        raise CheckpointError("architecture fingerprint does not match the stored layer spec")
    if arch is not None and arch.fingerprint() != fp:
        raise CheckpointError("fingerprint mismatch: checkpoint was written for a different "
                              "architecture")
    if n != file_arch.n_params:
        raise CheckpointError(f"parameter count {n} does not match architecture")
    return EstimatorWeights(file_arch, params, np.array(meta["out_center"]),
                            np.array(meta["out_scale"]), meta.get("metadata", {}))
