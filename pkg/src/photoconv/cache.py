"""Binary cache for the expensive intermediates (radiation and base state).

File layout (everything little-endian):

    magic  b"PHCV"
    u16    format version
    u16    payload kind (1 = radiation, 2 = base state)
    16s    parameter digest (md5 of the canonical key string)
    u32    number of arrays
    per array:
        u16  name length, then the utf-8 name
        u8   dtype code (0 = float64, 1 = complex128)
        u8   ndim, then ndim u64 dimensions
        raw  values as little-endian 64-bit floats (complex = re/im pairs)

The digest ties a file to the exact parameter set that produced it, so a
loader asked for different parameters recomputes instead of trusting the
file name.  Any structural problem (bad magic, other version, truncated
payload, digest mismatch) is reported with a warning and treated as a
cache miss; the cache is an accelerator, never a source of truth.
"""

import hashlib
import struct
import warnings

import numpy as np

__all__ = [
    "param_key",
    "save_arrays",
    "load_arrays",
    "save_radiation",
    "load_radiation",
    "save_base_state",
    "load_base_state",
]

MAGIC = b"PHCV"
VERSION = 1
KIND_RADIATION = 1
KIND_BASESTATE = 2

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


def param_key(kind, params):
    """Canonical key string + digest for a parameter mapping."""
    parts = [f"kind={kind}"]
    for name in sorted(params):
        parts.append(f"{name}={params[name]!r}")
    key = ";".join(parts)
    return key, hashlib.md5(key.encode()).digest()


def save_arrays(path, kind, params, arrays):
    """Write named float/complex arrays under a parameter digest."""
    _, digest = param_key(kind, params)
    chunks = [MAGIC, struct.pack("<HH16sI", VERSION, kind, digest,
                                 len(arrays))]
    for name, arr in arrays.items():
        a = np.asarray(arr)
        if np.iscomplexobj(a):
            code, a = 1, np.ascontiguousarray(a, dtype="<c16")
        else:
            code, a = 0, np.ascontiguousarray(a, dtype="<f8")
        nb = name.encode()
        chunks.append(struct.pack(f"<H{len(nb)}sBB", len(nb), nb, code,
                                  a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        chunks.append(a.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_arrays(path, kind, params):
    """Read arrays back; None (with a warning) on any mismatch."""
    _, digest = param_key(kind, params)
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError:
        return None
    try:
        if blob[:4] != MAGIC:
            raise ValueError("bad magic")
        version, f_kind, f_digest, n_arrays = struct.unpack_from(
            "<HH16sI", blob, 4)
        if version != VERSION:
            raise ValueError(f"format version {version} != {VERSION}")
        if f_kind != kind:
            raise ValueError(f"payload kind {f_kind} != {kind}")
        if f_digest != digest:
            raise ValueError("parameter digest mismatch")
        off = 4 + struct.calcsize("<HH16sI")
        arrays = {}
        for _ in range(n_arrays):
            (n_name,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + n_name].decode()
            off += n_name
            code, ndim = struct.unpack_from("<BB", blob, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}Q", blob, off)
            off += 8 * ndim
            dt = _DTYPES[code]
            nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64))
            if off + nbytes > len(blob):
                raise ValueError("truncated payload")
            arrays[name] = np.frombuffer(
                blob[off:off + nbytes], dtype=dt).reshape(shape).copy()
            off += nbytes
        return arrays
    except (ValueError, KeyError, struct.error) as exc:
        warnings.warn(f"ignoring cache file {path}: {exc}")
        return None


# ---------------------------------------------------------------------------
# typed wrappers

_RAD_ARRAYS = ("tau", "G", "q", "G_coll", "q_coll",
               "_tau_src", "_G_src", "_q_src")


def _radiation_params(tau_total, omega, A1, B, mu0, n_tau):
    return {"tau_total": float(tau_total), "omega": float(omega),
            "A1": float(A1), "B": float(B), "mu0": float(mu0),
            "n_tau": int(n_tau)}


def save_radiation(path, rad, n_tau):
    params = _radiation_params(rad.tau_total, rad.omega, rad.A1, rad.B,
                               rad.mu0, n_tau)
    arrays = {name: getattr(rad, name) for name in _RAD_ARRAYS}
    arrays["meta"] = np.array([float(rad.iterations), rad.residual])
    save_arrays(path, KIND_RADIATION, params, arrays)


def load_radiation(path, tau_total, omega, A1, B, theta0, n_tau):
    from .radiative import RadiationField

    params = _radiation_params(tau_total, omega, A1, B, np.cos(theta0),
                               n_tau)
    arrays = load_arrays(path, KIND_RADIATION, params)
    if arrays is None or set(arrays) != set(_RAD_ARRAYS) | {"meta"}:
        return None
    meta = arrays.pop("meta")
    return RadiationField(omega=float(omega), A1=float(A1), B=float(B),
                          mu0=float(np.cos(theta0)),
                          iterations=int(meta[0]), residual=float(meta[1]),
                          **arrays)


_BS_ARRAYS = ("z", "n_s", "tau_of_z", "G_s", "q_s", "G_s_coll", "M_s",
              "dMdG")


def _basestate_params(p, n_z):
    return {"Sc": p.Sc, "Vc": p.Vc, "tauH": p.tauH, "omega": p.omega,
            "A1": p.A1, "B": p.B, "theta_i_deg": p.theta_i_deg, "n0": p.n0,
            "upsilon": p.curve.upsilon, "n_z": int(n_z)}


def save_base_state(path, bs, n_z):
    arrays = {name: getattr(bs, name) for name in _BS_ARRAYS}
    arrays["n_top"] = np.array([bs.n_top])
    save_arrays(path, KIND_BASESTATE, _basestate_params(bs.params, n_z),
                arrays)


def load_base_state(path, p, rad, n_z):
    """Rebuild a BaseState for params ``p``; the caller supplies the
    matching radiation field (cached separately)."""
    from .basestate import BaseState

    arrays = load_arrays(path, KIND_BASESTATE, _basestate_params(p, n_z))
    if arrays is None or set(arrays) != set(_BS_ARRAYS) | {"n_top"}:
        return None
    n_top = float(arrays.pop("n_top")[0])
    return BaseState(params=p, n_top=n_top, radiation=rad, **arrays)
