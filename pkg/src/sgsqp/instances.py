"""Desk-scale instance generation and a lossless on-disk format.

Instances are JSON documents with every floating-point number written as
a 17-significant-digit decimal string, which round-trips IEEE doubles
exactly; keys are sorted and the layout is fixed, so identical seeds
produce byte-identical files.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigvalsh, qr

from .blockla import BlockPartition, BlockSymOperator, BlockVector
from .errors import InvalidParams
from .palm import LinConQP, QsdpData, qsdp_to_lincon
from .proxmap import ProxSpec, prox, smat, svec, svec_dim
from .sgs import CompositeQP

__all__ = [
    "Instance",
    "gen",
    "gen_lincon",
    "gen_qsdp",
    "read_instance",
    "write_instance",
    "dumps_instance",
    "loads_instance",
]

_FMT = ".17g"


def _e(x):
    return format(float(x), _FMT)


def _earr(a):
    def rec(v):
        if isinstance(v, list):
            return [rec(u) for u in v]
        return _e(v)
    return rec(np.asarray(a, dtype=float).tolist())


def _darr(v):
    def rec(u):
        if isinstance(u, list):
            return [rec(w) for w in u]
        return float(u)
    return np.array(rec(v), dtype=float)


def _enc_prox(spec):
    doc = {"kind": spec.kind}
    if spec.kind == "l1":
        doc["lam"] = _e(spec.lam)
    elif spec.kind == "box":
        doc["lo"] = _earr(list(spec.lo))
        doc["hi"] = _earr(list(spec.hi))
    elif spec.kind == "psd_cone":
        doc["side"] = spec.side
    return doc


def _dec_prox(doc):
    kind = doc["kind"]
    if kind == "zero":
        return ProxSpec.zero()
    if kind == "l1":
        return ProxSpec.l1(float(doc["lam"]))
    if kind == "nonneg":
        return ProxSpec.nonneg()
    if kind == "box":
        return ProxSpec.box(_darr(doc["lo"]), _darr(doc["hi"]))
    if kind == "psd_cone":
        return ProxSpec.psd_cone(int(doc["side"]))
    raise InvalidParams(f"unknown prox kind {kind!r} in instance file")


def _enc_blocks(blocks):
    return {f"{i},{j}": _earr(M) for (i, j), M in sorted(blocks.items())}


def _dec_blocks(doc):
    out = {}
    for key, M in doc.items():
        i, j = (int(t) for t in key.split(","))
        out[(i, j)] = _darr(M)
    return out


def _enc_meta(meta):
    out = {}
    for k, v in sorted(meta.items()):
        if isinstance(v, bool) or isinstance(v, (int, np.integer)):
            out[k] = int(v) if not isinstance(v, bool) else v
        elif isinstance(v, (float, np.floating)):
            out[k] = _e(v)
        else:
            out[k] = v
    return out


@dataclass
class Instance:
    """Parsed instance: a composite QP, optionally with constraint or
    QSDP sections attached."""

    dims: tuple
    Q: dict
    b: np.ndarray
    prox: ProxSpec
    lincon: dict = None
    qsdp: QsdpData = None
    meta: dict = field(default_factory=dict)

    @property
    def partition(self):
        return BlockPartition(self.dims)

    def composite(self):
        part = self.partition
        op = BlockSymOperator(part, dict(self.Q))
        return CompositeQP(op, BlockVector(part, np.array(self.b)), self.prox)

    def has_constraints(self):
        return self.lincon is not None or self.qsdp is not None

    def lincon_problem(self):
        if self.lincon is not None:
            part = self.partition
            P = BlockSymOperator(part, dict(self.lincon["P"]),
                                 factor_diag=False)
            return LinConQP(P, self.lincon["A"], self.lincon["g"],
                            self.lincon["d"], prox=self.prox)
        if self.qsdp is not None:
            return qsdp_to_lincon(self.qsdp)
        raise InvalidParams("instance has no constraint section")


def dumps_instance(inst):
    doc = {
        "partition": {"dims": [int(n) for n in inst.dims]},
        "Q": _enc_blocks(inst.Q),
        "b": _earr(inst.b),
        "prox": _enc_prox(inst.prox),
        "meta": _enc_meta(inst.meta),
    }
    if inst.lincon is not None:
        doc["lincon"] = {
            "P": _enc_blocks(inst.lincon["P"]),
            "A": _earr(inst.lincon["A"]),
            "g": _earr(inst.lincon["g"]),
            "d": _earr(inst.lincon["d"]),
        }
    if inst.qsdp is not None:
        q = inst.qsdp
        doc["qsdp"] = {
            "n": q.n, "p": q.p,
            "H": _earr(q.H), "B": _earr(q.B),
            "h": _earr(q.h), "C": _earr(q.C),
        }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def loads_instance(text):
    doc = json.loads(text)
    lincon = None
    if "lincon" in doc:
        lc = doc["lincon"]
        lincon = {"P": _dec_blocks(lc["P"]), "A": _darr(lc["A"]),
                  "g": _darr(lc["g"]), "d": _darr(lc["d"])}
    qsdp = None
    if "qsdp" in doc:
        qd = doc["qsdp"]
        qsdp = QsdpData(int(qd["n"]), _darr(qd["H"]), _darr(qd["B"]),
                        _darr(qd["h"]), _darr(qd["C"]))
    return Instance(
        dims=tuple(int(n) for n in doc["partition"]["dims"]),
        Q=_dec_blocks(doc["Q"]),
        b=_darr(doc["b"]),
        prox=_dec_prox(doc["prox"]),
        lincon=lincon,
        qsdp=qsdp,
        meta=doc.get("meta", {}),
    )


def write_instance(inst, path):
    with open(path, "w") as fh:
        fh.write(dumps_instance(inst))


def read_instance(path):
    with open(path) as fh:
        return loads_instance(fh.read())


# ---------------------------------------------------------------------------
# generators


def _check_dims(dims):
    dims = tuple(int(n) for n in dims)
    if len(dims) < 2:
        raise InvalidParams("need at least two blocks")
    if any(n < 1 for n in dims):
        raise InvalidParams(f"block dimensions must be positive, got {dims}")
    return dims


def _rand_orth(rng, n):
    M = rng.standard_normal((n, n))
    O, R = qr(M)
    return O * np.sign(np.diag(R))


def _spd_block(rng, n, kappa):
    O = _rand_orth(rng, n)
    lo, hi = 1.0 / np.sqrt(kappa), np.sqrt(kappa)
    w = np.geomspace(lo, hi, n) if n > 1 else np.array([np.sqrt(lo * hi)])
    M = (O * w) @ O.T
    return 0.5 * (M + M.T)


def _spd_blocks(rng, dims, kappa, coupling, identity_first=False):
    """Diagonal SPD blocks plus scaled random coupling, PD overall."""
    s = len(dims)
    blocks = {}
    for i, n in enumerate(dims):
        if i == 0 and identity_first:
            blocks[(0, 0)] = (0.5 + 1.5 * rng.random()) * np.eye(n)
        else:
            blocks[(i, i)] = _spd_block(rng, n, kappa)
    lam_min = min(eigvalsh(blocks[(i, i)]).min() for i in range(s))
    off = {}
    N = sum(dims)
    part = BlockPartition(dims)
    C = np.zeros((N, N))
    for i in range(s):
        for j in range(i + 1, s):
            M = rng.standard_normal((dims[i], dims[j]))
            if rng.random() < coupling:
                off[(i, j)] = M
                C[part.slice(i), part.slice(j)] = M
                C[part.slice(j), part.slice(i)] = M.T
    cnorm = np.linalg.norm(C, 2)
    if cnorm > 0:
        scale = 0.9 * lam_min / cnorm
        for key in off:
            blocks[key] = off[key] * scale
    return blocks


def _prox_for(rng, kind, n1):
    if kind == "zero":
        return ProxSpec.zero()
    if kind == "l1":
        return ProxSpec.l1(0.05 + 0.2 * rng.random())
    if kind == "nonneg":
        return ProxSpec.nonneg()
    if kind == "box":
        return ProxSpec.box(-(0.5 + rng.random(n1)), 0.5 + rng.random(n1))
    raise InvalidParams(f"unknown prox kind {kind!r}")


def gen(dims, kappa=10.0, coupling=0.5, prox_kind="zero", seed=0,
        singular=False, identity_block1=True):
    """Random composite QP instance, deterministic per seed.

    Nonsingular instances have SPD diagonal blocks with spectra spread
    over a condition range ``kappa`` and coupling blocks scaled so the
    assembled operator stays PD.  ``singular`` builds a PSD rank
    deficient operator with PD diagonal blocks and a consistent linear
    term (only the trivial nonsmooth term is supported there).
    """
    dims = _check_dims(dims)
    if kappa < 1.0:
        raise InvalidParams("kappa must be >= 1")
    rng = np.random.default_rng(seed)
    N = sum(dims)
    meta = {"seed": int(seed), "kappa": float(kappa),
            "coupling": float(coupling), "prox": prox_kind,
            "singular": bool(singular)}

    if singular:
        if prox_kind != "zero":
            raise InvalidParams(
                "singular instances support only the trivial nonsmooth term"
            )
        K = N - max(1, N // 6)
        if K < max(dims) + 1:
            raise InvalidParams(
                "partition too small to be rank deficient with PD diagonal blocks"
            )
        part = BlockPartition(dims)
        for _ in range(20):
            G = rng.standard_normal((K, N))
            Qd = G.T @ G
            ok = all(eigvalsh(Qd[part.slice(i), part.slice(i)]).min()
                     > 1e-8 * np.linalg.norm(Qd, 2) for i in range(len(dims)))
            if ok:
                break
        else:
            raise InvalidParams("failed to draw a usable singular instance")
        blocks = {}
        for i in range(len(dims)):
            for j in range(i, len(dims)):
                blocks[(i, j)] = Qd[part.slice(i), part.slice(j)].copy()
        x_true = rng.standard_normal(N)
        b = Qd @ x_true
        return Instance(dims=dims, Q=blocks, b=b, prox=ProxSpec.zero(),
                        meta=meta)

    spec = _prox_for(rng, prox_kind, dims[0])
    blocks = _spd_blocks(rng, dims, kappa, coupling,
                         identity_first=identity_block1 and prox_kind != "zero")
    b = rng.standard_normal(N)
    return Instance(dims=dims, Q=blocks, b=b, prox=spec, meta=meta)


def gen_lincon(dims, m, prox_kind="zero", kappa=10.0, coupling=0.5, seed=0):
    """Feasible linearly constrained instance with PD quadratic part."""
    dims = _check_dims(dims)
    N = sum(dims)
    m = int(m)
    if not (1 <= m < N):
        raise InvalidParams(f"need 1 <= m < {N} constraint rows, got {m}")
    rng = np.random.default_rng(seed)
    P = _spd_blocks(rng, dims, kappa, coupling)
    spec = _prox_for(rng, prox_kind, dims[0])
    for _ in range(20):
        A = rng.standard_normal((m, N))
        sv = np.linalg.svd(A, compute_uv=False)
        if sv.min() > 1e-8 * sv.max():
            break
    else:
        raise InvalidParams("failed to draw a full-row-rank constraint map")
    x_feas = rng.standard_normal(N)
    x_feas[:dims[0]] = prox(spec, 1.0, x_feas[:dims[0]])
    d = A @ x_feas
    g = rng.standard_normal(N)
    meta = {"seed": int(seed), "kappa": float(kappa),
            "coupling": float(coupling), "prox": prox_kind, "m": m}
    return Instance(dims=dims, Q=dict(P), b=g, prox=spec,
                    lincon={"P": P, "A": A, "g": g, "d": d}, meta=meta)


def gen_qsdp(n, p, seed=0, rank_H=None):
    """QSDP instance built around a known KKT point (hence solvable).

    The PSD variable and its multiplier are constructed with
    complementary eigenspaces, the linear data derived from the
    stationarity conditions, and the right hand side from feasibility.
    """
    n, p = int(n), int(p)
    d = svec_dim(n)
    if n < 1:
        raise InvalidParams("matrix order must be positive")
    if not (1 <= p <= d):
        raise InvalidParams(f"need 1 <= p <= {d} constraint rows, got {p}")
    rank_H = d if rank_H is None else int(rank_H)
    if not (0 <= rank_H <= d):
        raise InvalidParams(f"rank_H must lie in [0, {d}]")
    rng = np.random.default_rng(seed)

    if rank_H > 0:
        M = rng.standard_normal((d, rank_H))
        H = M @ M.T
        H = 0.5 * (H + H.T)
        H /= np.linalg.norm(H, 2)
    else:
        H = np.zeros((d, d))
    for _ in range(20):
        B = rng.standard_normal((p, d))
        sv = np.linalg.svd(B, compute_uv=False)
        if sv.min() > 1e-8 * sv.max():
            break
    else:
        raise InvalidParams("failed to draw a surjective constraint map")

    O = _rand_orth(rng, n)
    rz = max(1, n // 2)
    az = 0.5 + rng.random(rz)
    Zs = (O[:, :rz] * az) @ O[:, :rz].T
    if rz < n:
        ay = 0.5 + rng.random(n - rz)
        Ys = (O[:, rz:] * ay) @ O[:, rz:].T
    else:
        Ys = np.zeros((n, n))
    y = svec(0.5 * (Ys + Ys.T))
    h = B @ y
    xi = rng.standard_normal(p)
    w = -y
    C = smat(svec(0.5 * (Zs + Zs.T)) + B.T @ xi + H @ w, n)

    q = QsdpData(n, H, B, h, C)
    lp = qsdp_to_lincon(q)
    blocks = {key: np.array(M) for key, M in lp.P.stored_items()}
    meta = {"seed": int(seed), "n": n, "p": p, "rank_H": rank_H}
    return Instance(dims=tuple(lp.partition.dims), Q=blocks, b=np.array(lp.g),
                    prox=lp.prox, qsdp=q, meta=meta)
