"""Proximal augmented Lagrangian method for linearly constrained
composite QPs, with the x-subproblem solved by one sweep cycle on the
penalized operator ``P + sigma A^T A``.

Also carries the explicit matrix-form instantiation for quadratic SDP:
the three-block (Z, xi, W) subproblem whose W variable only ever enters
through ``H W``, solved by the five forward/backward matrix steps, and
shown equal to the generic cycle on the assembled operator.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .blockla import BlockPartition, BlockSymOperator, BlockVector
from .errors import (DimensionMismatch, InvalidParams, ShapeMismatch,
                     TauOutOfRange)
from .oracle import psd_project, range_basis, spectral_norm
from .proxmap import (ProxSpec, prox_value, smat, subgrad_residual, svec,
                      svec_dim)
from .sgs import CompositeQP, sgs_cycle

__all__ = [
    "LinConQP",
    "PalmStop",
    "PalmRow",
    "PalmTrace",
    "assemble_penalized",
    "palm_solve",
    "lagrangian",
    "QsdpData",
    "qsdp_assemble",
    "qsdp_sgs_step",
    "qsdp_to_lincon",
]


class LinConQP:
    """min  p(x_1) + (1/2) <x, P x> - <g, x>   s.t.  A x = d.

    ``P`` is block symmetric PSD (diagonal blocks may be singular — they
    are never factored here); ``A`` maps the full variable to the
    constraint space.
    """

    def __init__(self, P, A, g, d, prox=None):
        if not isinstance(P, BlockSymOperator):
            raise InvalidParams("P must be a BlockSymOperator")
        self.P = P
        part = P.partition
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[1] != part.total:
            raise DimensionMismatch(
                f"A has {A.shape[1]} columns for a variable of size {part.total}"
            )
        self.A = A
        g = g.data if isinstance(g, BlockVector) else np.asarray(g, dtype=float)
        if g.shape != (part.total,):
            raise DimensionMismatch("g length does not match the partition")
        self.g = g
        d = np.asarray(d, dtype=float).ravel()
        if d.shape != (A.shape[0],):
            raise DimensionMismatch("d length does not match the rows of A")
        self.d = d
        self.prox = prox if prox is not None else ProxSpec.zero()
        bd = self.prox.block_dim()
        if bd is not None and bd != part.dims[0]:
            raise ShapeMismatch(
                f"prox expects block dimension {bd}, partition has {part.dims[0]}"
            )

    @property
    def partition(self):
        return self.P.partition

    def objective(self, x):
        xd = x.data if isinstance(x, BlockVector) else np.asarray(x)
        n1 = self.partition.dims[0]
        return (prox_value(self.prox, xd[:n1])
                + 0.5 * xd @ self.P.matvec(xd) - self.g @ xd)

    def constraint_residual(self, x):
        xd = x.data if isinstance(x, BlockVector) else np.asarray(x)
        return self.A @ xd - self.d

    def kkt(self, x, y):
        """(dual residual, primal infeasibility) at a primal-dual pair.

        The dual part measures the distance of ``g - P x - A^T y`` to
        the subdifferential of the nonsmooth term on block 1 (and to
        zero elsewhere); both parts vanish exactly at KKT points.
        """
        xd = x.data if isinstance(x, BlockVector) else np.asarray(x)
        r = self.g - self.P.matvec(xd) - self.A.T @ y
        n1 = self.partition.dims[0]
        dual = np.hypot(subgrad_residual(self.prox, xd[:n1], r[:n1]),
                        np.linalg.norm(r[n1:]))
        primal = np.linalg.norm(self.constraint_residual(xd))
        return dual, primal


def assemble_penalized(prob, sigma):
    """CompositeQP for the x-subproblem at penalty ``sigma`` (rhs zeroed).

    Blocks are ``P_ij + sigma A_i^T A_j``; when the nonsmooth term is
    nontrivial and the first diagonal block is not a multiple of the
    identity, a conservative first-block shift is attached so the prox
    step applies.
    """
    from .proxmap import _identity_multiple

    if sigma <= 0:
        raise InvalidParams(f"sigma must be positive, got {sigma}")
    part = prob.partition
    cols = [prob.A[:, part.slice(i)] for i in range(part.s)]
    blocks = {}
    for i in range(part.s):
        for j in range(i, part.s):
            M = sigma * (cols[i].T @ cols[j])
            if prob.P.has_block(i, j) or i == j:
                M = M + prob.P.block(i, j)
            if i == j:
                M = 0.5 * (M + M.T)
            blocks[(i, j)] = M
    Q = BlockSymOperator(part, blocks)
    shifts = None
    if prob.prox.kind != "zero":
        Q00 = np.asarray(Q.block(0, 0))
        if _identity_multiple(Q00) is None:
            J1 = spectral_norm(Q00) * np.eye(part.dims[0]) - Q00
            shifts = [J1] + [None] * (part.s - 1)
    return CompositeQP(Q, BlockVector.zeros(part), prob.prox, shifts=shifts)


@dataclass(frozen=True)
class PalmStop:
    kkt_tol: float = 1e-6
    max_iter: int = 10000


@dataclass
class PalmRow:
    k: int
    F: float
    primal_inf: float
    kkt: float
    y_norm: float
    time_s: float


_PALM_HEADER = "k,F,primal_inf,kkt,y_norm,time_s"


@dataclass
class PalmTrace:
    rows: list = field(default_factory=list)
    termination: str = "max_iter"

    @property
    def iterations(self):
        return len(self.rows)

    def to_csv(self, path_or_file):
        close = False
        if isinstance(path_or_file, (str, bytes)):
            fh = open(path_or_file, "w", newline="")
            close = True
        else:
            fh = path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(_PALM_HEADER.split(","))
            for r in self.rows:
                w.writerow([r.k] + [repr(float(v)) for v in (
                    r.F, r.primal_inf, r.kkt, r.y_norm, r.time_s)])
        finally:
            if close:
                fh.close()


def palm_solve(prob, sigma, tau, x0=None, y0=None, stop=None,
               multiplier_update="new"):
    """Run the proximal augmented Lagrangian loop.

    Each iteration takes one exact sweep cycle on the penalized operator
    with right hand side ``g + A^T (sigma d - y)`` and the previous
    iterate as proximal center, then updates the multiplier
    ``y <- y + tau sigma (A x - d)``.  ``multiplier_update`` selects
    which iterate enters that update: ``"new"`` (default) uses the
    freshly computed x, ``"previous"`` the proximal center.

    Returns ``(x, y, trace)``; termination is ``"tol"`` once both the
    primal infeasibility and the dual KKT residual fall below
    ``stop.kkt_tol``.
    """
    if not (0.0 < tau < 2.0):
        raise TauOutOfRange(f"tau must lie in (0, 2), got {tau}")
    if multiplier_update not in ("new", "previous"):
        raise InvalidParams(f"unknown multiplier_update {multiplier_update!r}")
    stop = stop if stop is not None else PalmStop()
    part = prob.partition
    inner = assemble_penalized(prob, sigma)

    if x0 is None:
        x = BlockVector.zeros(part)
        if prob.prox.kind != "zero":
            from .proxmap import prox as _prox
            x.set_block(0, _prox(prob.prox, 1.0, np.zeros(part.dims[0])))
    else:
        x = x0.copy() if isinstance(x0, BlockVector) else BlockVector(part, np.array(x0, dtype=float))
    y = np.zeros(prob.A.shape[0]) if y0 is None else np.array(y0, dtype=float).ravel()

    trace = PalmTrace()
    t0 = time.perf_counter()
    for k in range(1, stop.max_iter + 1):
        # Step 1: one cycle of the T-weighted subproblem at the current x
        inner.b.data[:] = prob.g + prob.A.T @ (sigma * prob.d - y)
        res = sgs_cycle(inner, x, mode="exact")
        x_new = res.x_plus
        # Step 2: multiplier ascent
        x_for_y = x_new if multiplier_update == "new" else x
        y = y + tau * sigma * prob.constraint_residual(x_for_y)
        x = x_new

        dual, primal = prob.kkt(x, y)
        trace.rows.append(PalmRow(
            k=k, F=prob.objective(x), primal_inf=primal, kkt=dual,
            y_norm=np.linalg.norm(y), time_s=time.perf_counter() - t0,
        ))
        if max(dual, primal) <= stop.kkt_tol:
            trace.termination = "tol"
            return x, y, trace
    trace.termination = "max_iter"
    return x, y, trace


def lagrangian(prob, sigma, x, y, via="definition"):
    """Augmented Lagrangian value, computed one of two ways.

    ``"definition"``: F(x) + <y, Ax-d> + (sigma/2)||Ax-d||^2.
    ``"expansion"``: the quadratic form actually minimized in Step 1,
    p(x_1) + (1/2)<x, (P + sigma A^T A) x> - <g + A^T(sigma d - y), x>
    plus the constant (sigma/2)||d||^2 - <d, y>.  The two must agree.
    """
    xd = x.data if isinstance(x, BlockVector) else np.asarray(x)
    if via == "definition":
        r = prob.A @ xd - prob.d
        return prob.objective(xd) + y @ r + 0.5 * sigma * (r @ r)
    if via == "expansion":
        n1 = prob.partition.dims[0]
        Ax = prob.A @ xd
        quad = prob.P.matvec(xd) + sigma * (prob.A.T @ Ax)
        lin = prob.g + prob.A.T @ (sigma * prob.d - y)
        return (prox_value(prob.prox, xd[:n1]) + 0.5 * xd @ quad - lin @ xd
                + 0.5 * sigma * (prob.d @ prob.d) - prob.d @ y)
    raise InvalidParams(f"unknown evaluation path {via!r}")


# ---------------------------------------------------------------------------
# quadratic SDP: three blocks (Z, xi, W), the W variable only through H W


class QsdpData:
    """min  delta_PSD(Z) + (1/2)<W, H W> - <h, xi>
    s.t.  Z + B^T xi + H W = C   (all matrices in packed symmetric
    coordinates; ``H`` acts on that space, ``B`` maps it to R^p).
    """

    def __init__(self, n, H, B, h, C):
        self.n = int(n)
        dim = svec_dim(self.n)
        H = np.asarray(H, dtype=float)
        if H.shape != (dim, dim):
            raise ShapeMismatch(f"H must be {dim}x{dim} for n={n}")
        if np.linalg.norm(H - H.T) > 1e-12 * max(1.0, np.linalg.norm(H)):
            raise ShapeMismatch("H must be symmetric")
        self.H = 0.5 * (H + H.T)
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if B.shape[1] != dim:
            raise DimensionMismatch(f"B must have {dim} columns")
        self.B = B
        self.p = B.shape[0]
        h = np.asarray(h, dtype=float).ravel()
        if h.shape != (self.p,):
            raise DimensionMismatch("h length must match the rows of B")
        self.h = h
        C = np.asarray(C, dtype=float)
        if C.shape != (self.n, self.n):
            raise ShapeMismatch("C must be n x n")
        self.C = 0.5 * (C + C.T)

    @property
    def dim(self):
        return svec_dim(self.n)

    def range_coords(self):
        """Orthonormal basis of Range(H) in packed coordinates."""
        return range_basis(self.H)


def _qsdp_rhs(q, sigma, Y):
    u = svec(sigma * q.C - Y)
    return u, q.h + q.B @ u, q.H @ u


def qsdp_assemble(q, sigma, Y):
    """Composite QP for one Step-1 subproblem, W in Range(H) coordinates.

    Variable order (Z; xi; w) with ``w`` the coefficient vector of W in
    an orthonormal basis of Range(H); when H = 0 the W block vanishes
    and the problem has two blocks.
    """
    if sigma <= 0:
        raise InvalidParams(f"sigma must be positive, got {sigma}")
    V = q.range_coords()
    r = V.shape[1]
    bZ, bxi, bW = _qsdp_rhs(q, sigma, Y)
    d = q.dim
    HV = q.H @ V
    blocks = {
        (0, 0): sigma * np.eye(d),
        (0, 1): sigma * q.B.T,
        (1, 1): sigma * (q.B @ q.B.T),
    }
    if r > 0:
        part = BlockPartition((d, q.p, r))
        blocks[(0, 2)] = sigma * HV
        blocks[(1, 2)] = sigma * (q.B @ HV)
        blocks[(2, 2)] = V.T @ (q.H + sigma * (q.H @ q.H)) @ V
        b = np.concatenate([bZ, bxi, V.T @ bW])
    else:
        part = BlockPartition((d, q.p))
        b = np.concatenate([bZ, bxi])
    Q = BlockSymOperator(part, blocks)
    return CompositeQP(Q, BlockVector(part, b), ProxSpec.psd_cone(q.n))


def qsdp_sgs_step(q, sigma, state, Y):
    """One sweep of the Step-1 subproblem in explicit matrix form.

    ``state = (Z, xi, HW)`` — the W variable is never materialized, only
    its image under H.  Backward: solve for HW', then xi'; block 1:
    project onto the PSD cone; forward: re-solve xi then HW with the
    updated earlier blocks.  Returns ``(Z_new, xi_new, HW_new)``.
    """
    Z, xi, HW = state
    if sigma <= 0:
        raise InvalidParams(f"sigma must be positive, got {sigma}")
    z = svec(np.asarray(Z, dtype=float))
    hw = svec(np.asarray(HW, dtype=float))
    xi = np.asarray(xi, dtype=float).ravel()
    bZ, bxi, bW = _qsdp_rhs(q, sigma, Y)
    d = q.dim

    use_w = spectral_norm(q.H) > 0.0
    if use_w:
        Hfac = cho_factor(np.eye(d) / sigma + q.H, lower=True)
    Bfac = cho_factor(q.B @ q.B.T, lower=True)

    # backward sweep
    if use_w:
        hw_p = cho_solve(Hfac, bW / sigma - q.H @ z - q.H @ (q.B.T @ xi))
    else:
        hw_p = np.zeros(d)
    xi_p = cho_solve(Bfac, bxi / sigma - q.B @ z - q.B @ hw_p)
    # first block: PSD projection
    Z_new = psd_project(smat(bZ / sigma - q.B.T @ xi_p - hw_p, q.n))
    z_new = svec(Z_new)
    # forward sweep
    xi_new = cho_solve(Bfac, bxi / sigma - q.B @ z_new - q.B @ hw_p)
    if use_w:
        hw_new = cho_solve(Hfac, bW / sigma - q.H @ z_new - q.H @ (q.B.T @ xi_new))
    else:
        hw_new = np.zeros(d)
    return Z_new, xi_new, smat(hw_new, q.n)


def qsdp_to_lincon(q):
    """The QSDP as a linearly constrained composite QP (W in Range(H))."""
    V = q.range_coords()
    r = V.shape[1]
    d = q.dim
    if r > 0:
        part = BlockPartition((d, q.p, r))
        P = BlockSymOperator(part, {(2, 2): V.T @ q.H @ V},
                             factor_diag=False)
        A = np.hstack([np.eye(d), q.B.T, q.H @ V])
        g = np.concatenate([np.zeros(d), q.h, np.zeros(r)])
    else:
        part = BlockPartition((d, q.p))
        P = BlockSymOperator(part, {}, factor_diag=False)
        A = np.hstack([np.eye(d), q.B.T])
        g = np.concatenate([np.zeros(d), q.h])
    return LinConQP(P, A, g, svec(q.C), prox=ProxSpec.psd_cone(q.n))
