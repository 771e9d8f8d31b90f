"""One-cycle block symmetric Gauss-Seidel (and over-relaxed) solvers for
convex composite quadratic subproblems.

A cycle runs a backward block sweep, an exact first-block minimization,
and a forward block sweep.  Its output is not an approximation: it is the
*exact* minimizer of the proximal subproblem

    p(x_1) + 0.5 <x, Q x> - <b, x> + 0.5 ||x - xbar||_T^2 - <x, Delta>

where ``T`` is the cycle's majorizer weight and ``Delta`` aggregates the
per-block solve errors.  Exact block solves give ``Delta = 0``; inexact
ones report honest residual vectors from which ``Delta`` and its weighted
norm bound are formed.
"""

import numpy as np
from dataclasses import dataclass, field
from scipy.sparse.linalg import cg

from .blockla import (
    BlockVector,
    sgs_operator,
    ssor_operator,
)
from .errors import (
    DimensionMismatch,
    FirstBlockMismatch,
    IdentityViolation,
    InvalidParams,
    OmegaOutOfRange,
)
from .proxmap import ProxSpec, prox_value, solve_block1, subgrad_residual

__all__ = [
    "CompositeQP",
    "CycleResult",
    "ExactMode",
    "IterativeMode",
    "NoisyMode",
    "sgs_cycle",
    "ssor_cycle",
    "classical_sgs_step",
    "perturbation",
    "exact_xi",
    "error_bound",
    "forward_reuse_check",
    "forward_reuse_delta",
    "subproblem_kkt",
    "SsorTuning",
    "ssor_tuning",
]


@dataclass(frozen=True)
class ExactMode:
    """Solve every block system with the cached factorization."""


@dataclass(frozen=True)
class IterativeMode:
    """Solve block systems by conjugate gradients from a zero start.

    ``rel_tol`` is the relative residual target per block; a block that
    still misses it after ``max_inner`` iterations is flagged as stalled
    (its honest residual is reported either way).
    """

    rel_tol: float = 1e-8
    max_inner: int = 500


@dataclass(frozen=True)
class NoisyMode:
    """Exact solves followed by a random relative perturbation.

    A certification aid: it produces cycles with nonzero, honestly
    reported residual vectors without any iterative solver in the loop.
    The first block is never perturbed.
    """

    seed: int = 0
    scale: float = 1e-6


def _as_mode(mode):
    if isinstance(mode, (ExactMode, IterativeMode, NoisyMode)):
        return mode
    if mode == "exact":
        return ExactMode()
    raise InvalidParams(f"unknown cycle mode {mode!r}")


class CompositeQP:
    """A convex composite quadratic program on a block-partitioned space.

    Minimize ``p(x_1) + 0.5 <x, Q x> - <b, x>`` where ``p`` is one of the
    supported proximal kinds.  Optional PSD diagonal shifts ``J_i`` are
    folded into the sweeps (they enlarge the proximal weight, never the
    objective); a nonsmooth ``p`` whose ``Q_11`` is not a multiple of the
    identity needs ``J_1 = ||Q_11|| I - Q_11`` to become solvable.

    Parameters
    ----------
    Q : BlockSymOperator
    b : BlockVector or array_like
    p : ProxSpec
    shifts : list of (ndarray or None), optional
    """

    def __init__(self, Q, b, p=None, shifts=None):
        self.Q = Q
        part = Q.partition
        if not isinstance(b, BlockVector):
            b = BlockVector(part, b)
        if b.partition.dims != part.dims:
            raise DimensionMismatch("b is partitioned differently from Q")
        self.b = b
        self.prox = p if p is not None else ProxSpec.zero()
        want = self.prox.block_dim()
        if want is not None and want != part.dims[0]:
            raise DimensionMismatch(
                f"prox kind {self.prox.kind!r} needs first block of length "
                f"{want}, partition has {part.dims[0]}"
            )
        if shifts is not None:
            if len(shifts) != part.s:
                raise DimensionMismatch(
                    f"expected {part.s} shifts, got {len(shifts)}"
                )
            if all(J is None for J in shifts):
                shifts = None
        self.shifts = shifts
        self._eff = None
        self._majs = {}

    @property
    def partition(self):
        return self.Q.partition

    @property
    def shifted_Q(self):
        """``Q + diag(J_i)`` (``Q`` itself when unshifted)."""
        if self.shifts is None:
            return self.Q
        if self._eff is None:
            self._eff = self.Q.with_added_diag(self.shifts)
        return self._eff

    def majorizer(self, kind="sgs", omega=None):
        key = (kind, omega)
        if key not in self._majs:
            if kind == "sgs":
                self._majs[key] = sgs_operator(self.Q, self.shifts)
            elif kind == "ssor":
                self._majs[key] = ssor_operator(self.Q, omega, self.shifts)
            else:
                raise InvalidParams(f"unknown majorizer kind {kind!r}")
        return self._majs[key]

    def effective_b(self, xbar):
        """``b + diag(J) xbar`` — the sweeps' right-hand side."""
        if self.shifts is None:
            return self.b
        out = self.b.copy()
        for i, J in enumerate(self.shifts):
            if J is not None:
                out.set_block(i, out.block(i) + J @ xbar.block(i))
        return out

    def objective(self, x):
        """``F(x) = p(x_1) + 0.5 <x, Q x> - <b, x>`` (original operator)."""
        vec = x.data if isinstance(x, BlockVector) else np.asarray(x, dtype=float)
        n1 = self.partition.dims[0]
        head = prox_value(self.prox, vec[:n1])
        if not np.isfinite(head):
            return np.inf
        return float(head + 0.5 * (vec @ self.Q.matvec(vec)) - self.b.data @ vec)

    def kkt_residual(self, x):
        """Distance of ``b - Q x`` from ``partial p(x_1) x {0} x ...``."""
        vec = x.data if isinstance(x, BlockVector) else np.asarray(x, dtype=float)
        r = self.b.data - self.Q.matvec(vec)
        n1 = self.partition.dims[0]
        head = subgrad_residual(self.prox, vec[:n1], r[:n1])
        if not np.isfinite(head):
            return np.inf
        return float(np.hypot(head, np.linalg.norm(r[n1:])))


@dataclass
class CycleResult:
    """Everything one cycle produced, with its error certificates.

    ``x_prime`` holds the backward-sweep intermediates (its first block
    equals ``x_plus``'s for the Gauss-Seidel kind); ``delta_prime`` and
    ``delta`` are the realized backward/forward residuals, ``Delta``
    their aggregate perturbation, and ``xi``/``xi_bound`` the exact and
    bounding values of ``||Qhat^{-1/2} Delta||``.
    """

    x_plus: BlockVector
    x_prime: BlockVector
    delta_prime: BlockVector
    delta: BlockVector
    gamma1: np.ndarray
    Delta: BlockVector
    xi: float
    xi_bound: float
    variant: str = "sgs"
    omega: float = None
    stalled: tuple = ()
    reused: tuple = ()
    inner_iters: tuple = ()

    @property
    def delta_tilde_norm(self):
        return self.delta_prime.norm()

    @property
    def delta_norm(self):
        return self.delta.norm()


def _cg_solve(M, rhs, rel_tol, max_inner):
    nrm = np.linalg.norm(rhs)
    if nrm == 0.0:
        return np.zeros_like(rhs), 0, False
    iters = [0]

    def _cb(_):
        iters[0] += 1

    x, info = cg(M, rhs, rtol=rel_tol, atol=0.0, maxiter=max_inner, callback=_cb)
    return x, iters[0], info != 0


def _cycle(prob, xbar, mode, tau, variant, omega=None, reuse_c=None):
    mode = _as_mode(mode)
    part = prob.partition
    s = part.s
    A = prob.shifted_Q
    maj = prob.majorizer(variant, omega)
    if not isinstance(xbar, BlockVector):
        xbar = BlockVector(part, xbar)
    xb = [xbar.block(i).copy() for i in range(s)]
    beff = prob.effective_b(xbar)
    be = [beff.block(i) for i in range(s)]
    rho = 2.0 * tau - 1.0
    one_m_tau = 1.0 - tau

    rng = np.random.default_rng(mode.seed) if isinstance(mode, NoisyMode) else None

    def _solve_block(i, rhs):
        """Solve ``tau * A_ii x = rhs`` per mode; returns (x, resid, iters, stall)."""
        if isinstance(mode, ExactMode):
            return A.diag_solve(i, rhs) / tau, None, 0, False
        if isinstance(mode, IterativeMode):
            M = tau * A.block(i, i)
            x, it, stall = _cg_solve(M, rhs, mode.rel_tol, mode.max_inner)
            return x, M @ x - rhs, it, stall
        # NoisyMode: exact solve plus a relative perturbation, honest resid
        x = A.diag_solve(i, rhs) / tau
        noise = rng.standard_normal(x.shape[0])
        x = x + mode.scale * max(1.0, np.linalg.norm(x)) * noise / max(
            np.linalg.norm(noise), np.finfo(float).tiny
        )
        return x, tau * (A.block(i, i) @ x) - rhs, 0, False

    xp = [None] * s          # backward intermediates
    dprime = [np.zeros(n) for n in part.dims]
    delta = [np.zeros(n) for n in part.dims]
    stalled = []
    inner = [0] * s

    # backward sweep over blocks s..2
    for i in range(s - 1, 0, -1):
        rhs = be[i].copy()
        if one_m_tau != 0.0:
            rhs -= one_m_tau * (A.block(i, i) @ xb[i])
        for j in range(i):
            if A.has_block(j, i):
                rhs -= A.block(j, i).T @ xb[j]
        for j in range(i + 1, s):
            if A.has_block(i, j):
                rhs -= A.block(i, j) @ xp[j]
        xp[i], resid, it, stall = _solve_block(i, rhs)
        if resid is not None:
            dprime[i] = resid
        inner[i] += it
        if stall:
            stalled.append(i)

    # first block: exact composite minimization
    c1_raw = be[0].copy()
    for j in range(1, s):
        if A.has_block(0, j):
            c1_raw -= A.block(0, j) @ xp[j]
    A00 = A.block(0, 0)
    c1 = c1_raw.copy()
    if one_m_tau != 0.0:
        c1 = c1 + (one_m_tau * one_m_tau / rho) * (A00 @ xb[0])
    scale1 = tau * tau / rho
    if prob.prox.kind == "zero" and isinstance(mode, IterativeMode):
        M = scale1 * A00
        x1, it, stall = _cg_solve(M, c1, mode.rel_tol, mode.max_inner)
        d1 = M @ x1 - c1
        gamma1 = np.zeros_like(x1)
        inner[0] += it
        if stall:
            stalled.append(0)
    else:
        x1, gamma1 = solve_block1(prob.prox, scale1 * A00, c1)
        d1 = np.zeros_like(x1)
    delta[0] = d1
    dprime[0] = d1

    xplus = [None] * s
    xplus[0] = x1
    if tau == 1.0:
        xp[0] = x1
    else:
        # backward row-1 identity recovers the intermediate first block
        rhs = c1_raw + d1 - gamma1
        if one_m_tau != 0.0:
            rhs -= one_m_tau * (A00 @ xb[0])
        xp[0] = A.diag_solve(0, rhs) / tau

    # forward sweep over blocks 2..s
    reuse_thresh = None
    reused = []
    if reuse_c is not None:
        if variant != "sgs":
            raise InvalidParams("forward reuse applies to the Gauss-Seidel cycle")
        dp_norm = np.sqrt(sum(float(d @ d) for d in dprime))
        reuse_thresh = (reuse_c / np.sqrt(s)) * dp_norm
    for i in range(1, s):
        coupling = np.zeros(part.dims[i])
        for j in range(i):
            if A.has_block(j, i):
                coupling += A.block(j, i).T @ (xplus[j] - xb[j])
        if reuse_thresh is not None and np.linalg.norm(coupling) <= reuse_thresh:
            xplus[i] = xp[i]
            delta[i] = dprime[i] + coupling
            reused.append(i)
            continue
        rhs = be[i].copy()
        if one_m_tau != 0.0:
            rhs -= one_m_tau * (A.block(i, i) @ xp[i])
        for j in range(i):
            if A.has_block(j, i):
                rhs -= A.block(j, i).T @ xplus[j]
        for j in range(i + 1, s):
            if A.has_block(i, j):
                rhs -= A.block(i, j) @ xp[j]
        if reuse_thresh is not None:
            # under reuse the fresh path must stay exact so the enlarged
            # error budget remains certifiable
            xplus[i] = A.diag_solve(i, rhs) / tau
        else:
            xplus[i], resid, it, stall = _solve_block(i, rhs)
            if resid is not None:
                delta[i] = resid
            inner[i] += it
            if stall:
                stalled.append(i)

    dp_vec = BlockVector.from_blocks(part, dprime)
    d_vec = BlockVector.from_blocks(part, delta)
    if dp_vec.norm() == 0.0 and d_vec.norm() == 0.0:
        Dl = BlockVector.zeros(part)
        xi = 0.0
        bound = 0.0
    else:
        Dl = maj.perturbation(dp_vec, d_vec)
        xi = maj.quad_norm(Dl, "Qhat_inv")
        bound = maj.dinv_norm(d_vec.data - dp_vec.data) + maj.quad_norm(
            dp_vec, "Qhat_inv"
        )
    return CycleResult(
        x_plus=BlockVector.from_blocks(part, xplus),
        x_prime=BlockVector.from_blocks(part, xp),
        delta_prime=dp_vec,
        delta=d_vec,
        gamma1=gamma1,
        Delta=Dl,
        xi=xi,
        xi_bound=bound,
        variant=variant,
        omega=omega,
        stalled=tuple(sorted(stalled)),
        reused=tuple(reused),
        inner_iters=tuple(inner),
    )


def sgs_cycle(prob, xbar, mode="exact", forward_reuse=None):
    """One backward/forward symmetric Gauss-Seidel cycle at ``xbar``.

    Parameters
    ----------
    prob : CompositeQP
    xbar : BlockVector or array_like
    mode : ExactMode, IterativeMode, NoisyMode or "exact"
    forward_reuse : float or None
        When set (a positive constant ``c``), forward-sweep blocks whose
        coupling change is within ``(c/sqrt(s)) ||delta_prime||`` keep
        their backward intermediates; rejected blocks are recomputed with
        the direct factorization.

    Returns
    -------
    CycleResult
        Its ``x_plus`` exactly minimizes the proximal subproblem at
        ``xbar`` perturbed by the reported ``Delta``.
    """
    if forward_reuse is not None and forward_reuse <= 0:
        raise InvalidParams("forward_reuse must be a positive constant")
    return _cycle(prob, xbar, mode, 1.0, "sgs", reuse_c=forward_reuse)


def ssor_cycle(prob, xbar, omega, mode="exact"):
    """One symmetric over-relaxed cycle, ``omega in [1, 2)``.

    At ``omega = 1`` this coincides with :func:`sgs_cycle` (the code path
    is the over-relaxed one; the arithmetic agrees exactly).
    """
    omega = float(omega)
    if not (1.0 <= omega < 2.0):
        raise OmegaOutOfRange(f"omega must lie in [1, 2), got {omega}")
    return _cycle(prob, xbar, mode, 1.0 / omega, "ssor", omega=omega)


def classical_sgs_step(Q, b, xk, maj=None):
    """Fixed-point step ``x + Qhat^{-1} (b - Q x)`` of the classical
    symmetric Gauss-Seidel iteration (no nonsmooth term involved)."""
    maj = maj if maj is not None else sgs_operator(Q)
    bvec = b.data if isinstance(b, BlockVector) else np.asarray(b, dtype=float)
    xvec = xk.data if isinstance(xk, BlockVector) else np.asarray(xk, dtype=float)
    step = maj.solve_Qhat(bvec - Q.matvec(xvec))
    out = xvec + step
    if isinstance(xk, BlockVector):
        return BlockVector(Q.partition, out)
    return out


def perturbation(maj, delta_prime, delta):
    """Aggregate perturbation vector of an inexact cycle.

    The two residual vectors must agree exactly on the first block
    (the first block is solved once per cycle); otherwise
    :class:`FirstBlockMismatch` is raised.
    """
    part = maj.partition
    dp = delta_prime if isinstance(delta_prime, BlockVector) else BlockVector(part, delta_prime)
    d = delta if isinstance(delta, BlockVector) else BlockVector(part, delta)
    if not np.array_equal(dp.block(0), d.block(0)):
        raise FirstBlockMismatch(
            "backward and forward residuals differ on the first block"
        )
    return maj.perturbation(dp, d)


def exact_xi(maj, delta_prime, delta):
    """``||Qhat^{-1/2} Delta(delta', delta)||`` computed exactly."""
    return maj.quad_norm(perturbation(maj, delta_prime, delta), "Qhat_inv")


def error_bound(maj, delta_prime, delta, check=True):
    """Upper bound on ``||Qhat^{-1/2} Delta||`` from the raw residuals.

    Returns ``||M^{-1/2}(delta - delta')|| + ||Qhat^{-1/2} delta'||``
    where ``M`` is the majorizer's middle diagonal.  With ``check`` the
    exact value is recomputed and must not exceed the bound (beyond
    1e-12); a violation raises :class:`IdentityViolation`.
    """
    part = maj.partition
    dp = delta_prime if isinstance(delta_prime, BlockVector) else BlockVector(part, delta_prime)
    d = delta if isinstance(delta, BlockVector) else BlockVector(part, delta)
    bound = maj.dinv_norm(d.data - dp.data) + maj.quad_norm(dp, "Qhat_inv")
    if check:
        xi = exact_xi(maj, dp, d)
        if xi > bound + 1e-12 * max(1.0, bound):
            raise IdentityViolation(
                f"exact perturbation norm {xi:.16e} exceeds its bound "
                f"{bound:.16e}",
                magnitude=xi - bound,
            )
    return bound


def forward_reuse_check(Q, xbar, xplus_partial, delta_prime, c, i):
    """Whether forward block ``i`` may keep its backward intermediate.

    Accepts when ``||sum_{j<i} Q_{ji}^* (xplus_j - xbar_j)||`` is within
    ``(c / sqrt(s)) ||delta_prime||``; ``xbar`` is the cycle's input point.
    """
    if not 1 <= i < Q.s:
        raise InvalidParams(f"reuse applies to blocks 2..s, got index {i}")
    coupling = _reuse_coupling(Q, xbar, xplus_partial, i)
    thresh = (float(c) / np.sqrt(Q.s)) * (
        delta_prime.norm() if isinstance(delta_prime, BlockVector)
        else float(np.linalg.norm(delta_prime))
    )
    return bool(np.linalg.norm(coupling) <= thresh)


def forward_reuse_delta(Q, xbar, xplus_partial, delta_prime, i):
    """Realized forward residual for a reused block ``i``."""
    part = Q.partition
    dp = delta_prime if isinstance(delta_prime, BlockVector) else BlockVector(part, delta_prime)
    return dp.block(i) + _reuse_coupling(Q, xbar, xplus_partial, i)


def _reuse_coupling(Q, xbar, xplus_partial, i):
    out = np.zeros(Q.partition.dims[i])
    for j in range(i):
        if Q.has_block(j, i):
            out += Q.block(j, i).T @ (xplus_partial.block(j) - xbar.block(j))
    return out


def subproblem_kkt(prob, xbar, result):
    """Composite KKT residual of ``result.x_plus`` for the proximal
    subproblem it claims to minimize (with its own ``Delta``)."""
    maj = prob.majorizer(result.variant, result.omega)
    x = result.x_plus.data
    xb = xbar.data if isinstance(xbar, BlockVector) else np.asarray(xbar, dtype=float)
    r = (prob.b.data + maj.apply_T(xb - x) - prob.Q.matvec(x)
         + result.Delta.data)
    n1 = prob.partition.dims[0]
    head = subgrad_residual(prob.prox, x[:n1], r[:n1])
    if not np.isfinite(head):
        return np.inf
    return float(np.hypot(head, np.linalg.norm(r[n1:])))


@dataclass(frozen=True)
class SsorTuning:
    """Best relaxation parameter and its guaranteed per-step rate.

    ``gamma`` is the largest constant with ``gamma D <= Q`` and
    ``Gamma/4`` the smallest with ``(D/2 + U) D^{-1} (D/2 + U^T) <=
    (Gamma/4) Q`` — both by generalized eigenvalues.  The optimal
    relaxation is ``2 / (1 + sqrt(gamma Gamma))`` (clamped into the
    admissible interval) and the predicted contraction per step is
    ``(1 - sqrt(gamma/Gamma)) / (1 + sqrt(gamma/Gamma))``.
    """

    gamma: float
    Gamma: float
    omega_star: float
    rate_bound: float


def ssor_tuning(Q):
    from scipy.linalg import eigh, solve as _dsolve

    part = Q.partition
    Qd = Q.dense()
    scale = max(np.linalg.norm(Qd, 2), np.finfo(float).tiny)
    if np.linalg.eigvalsh(Qd).min() <= 1e-10 * scale:
        from .errors import NotPD
        raise NotPD("relaxation tuning needs a positive definite operator")
    Dd = np.zeros_like(Qd)
    for i in range(part.s):
        sl = part.slice(i)
        Dd[sl, sl] = Qd[sl, sl]
    U = np.triu(Qd - Dd)
    gamma = float(eigh(Qd, Dd, eigvals_only=True).min())
    half = 0.5 * Dd + U
    W = half @ _dsolve(Dd, half.T, assume_a="pos")
    Gamma = 4.0 * float(eigh(0.5 * (W + W.T), Qd, eigvals_only=True).max())
    root = np.sqrt(gamma * Gamma)
    omega = min(max(2.0 / (1.0 + root), 1.0), 2.0 - 1e-9)
    g = np.sqrt(gamma / Gamma)
    return SsorTuning(gamma=gamma, Gamma=Gamma, omega_star=float(omega),
                      rate_bound=float((1.0 - g) / (1.0 + g)))
