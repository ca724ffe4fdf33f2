"""Binary snapshots of a streaming estimator.

Layout: the 4-byte magic ``OPE1``, a little-endian ``uint32`` header length,
a UTF-8 JSON header, then the arrays listed in the header as raw
little-endian float64 in header order. Everything needed to keep streaming
bit-exactly is stored, including the cached design matrix.
"""

from __future__ import annotations

import io
import json
import math
import struct

import numpy as np

from .additive import AdditiveEstimator
from .eigensystems import EigenSystem, Gaussian, PeriodicBernoulli, make_system
from .projection import EstimatorConfig, ProjectionEstimator

MAGIC = b"OPE1"
VERSION = 1


class SnapshotError(ValueError):
    """Malformed or incompatible snapshot."""


def _leaf(system: EigenSystem) -> EigenSystem:
    while hasattr(system, "base"):
        system = system.base
    return system


def system_params(system: EigenSystem) -> dict:
    """Constructor parameters not recoverable from the kernel id."""
    leaf = _leaf(system)
    if isinstance(leaf, Gaussian):
        return {"alpha": leaf.alpha, "eps": leaf.eps}
    if isinstance(leaf, PeriodicBernoulli) and not leaf.orthonormal:
        return {"orthonormal": False}
    return {}


def _float(v: float) -> str:
    return repr(float(v))


def _arrays(est: ProjectionEstimator) -> list[tuple[str, np.ndarray]]:
    iu = np.triu_indices(est.p)
    return [
        ("theta", est.theta),
        ("phi_upper", est.phi[iu] if est.initialized else np.empty(0)),
        ("s", est.s),
        ("X", est.X),
        ("Y", est.Y),
        ("design", est.design),
    ]


def dumps(est: ProjectionEstimator) -> bytes:
    cfg = est.config
    additive = isinstance(est, AdditiveEstimator)
    arrays = _arrays(est)
    header = {
        "version": VERSION,
        "kind": "additive" if additive else "projection",
        "kernel": est.features.system.kernel_id,
        "kernel_params": system_params(est.features.system),
        "dim": est.d if additive else est.features.point_dim,
        "alpha": _float(cfg.alpha),
        "d": cfg.d,
        "c": _float(cfg.c),
        "n0": cfg.n0,
        "clamp": _float(cfg.clamp),
        "jitter_tol": _float(cfg.jitter_tol),
        "buffer": cfg.buffer,
        "N": est.N,
        "n": est.n,
        "initialized": est.initialized,
        "flops": est.flops,
        "deferred_additions": est.deferred_additions,
        "next_add": est._next_add,
        "arrays": [[name, list(a.shape)] for name, a in arrays],
    }
    buf = io.BytesIO()
    head = json.dumps(header, sort_keys=True).encode()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(head)))
    buf.write(head)
    for _, a in arrays:
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def read_header(data: bytes) -> tuple[dict, int]:
    if data[:4] != MAGIC:
        raise SnapshotError("not a snapshot (bad magic)")
    if len(data) < 8:
        raise SnapshotError("truncated snapshot")
    (size,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8 : 8 + size].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"corrupt snapshot header: {exc}") from exc
    if header.get("version") != VERSION:
        raise SnapshotError(f"unsupported snapshot version {header.get('version')!r}")
    return header, 8 + size


def loads(data: bytes) -> ProjectionEstimator:
    header, offset = read_header(data)
    arrays = {}
    for name, shape in header["arrays"]:
        count = math.prod(shape)
        end = offset + 8 * count
        if end > len(data):
            raise SnapshotError("truncated snapshot body")
        arrays[name] = np.frombuffer(data[offset:end], dtype="<f8").astype(float).reshape(shape)
        offset = end
    if offset != len(data):
        raise SnapshotError("trailing bytes after snapshot body")

    system = make_system(header["kernel"], **header["kernel_params"])
    common = dict(
        alpha=float(header["alpha"]),
        c=float(header["c"]),
        n0=header["n0"],
        clamp=float(header["clamp"]),
        jitter_tol=float(header["jitter_tol"]),
        buffer=header["buffer"],
    )
    if header["kind"] == "additive":
        est = AdditiveEstimator(system, header["dim"], **common)
    elif header["kind"] == "projection":
        est = ProjectionEstimator(EstimatorConfig(system, d=header["d"], **common))
    else:
        raise SnapshotError(f"unknown estimator kind {header['kind']!r}")

    n = header["n"]
    p = est.features.n_columns(header["N"])
    est._reserve(max(n, 1), p)
    est.N = header["N"]
    est._X[:n] = arrays["X"]
    est._Y[:n] = arrays["Y"]
    est._Psi[:n, :p] = arrays["design"]
    est.n = n
    est.initialized = header["initialized"]
    if est.initialized:
        phi = np.zeros((p, p))
        iu = np.triu_indices(p)
        phi[iu] = arrays["phi_upper"]
        phi.T[iu] = arrays["phi_upper"]
        est.phi = phi
    est.s = arrays["s"].copy()
    est.theta = arrays["theta"].copy()
    est.flops = header["flops"]
    est.deferred_additions = header["deferred_additions"]
    est._next_add = header["next_add"]
    return est


def save(est: ProjectionEstimator, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(est))


def load(path) -> ProjectionEstimator:
    with open(path, "rb") as fh:
        return loads(fh.read())
