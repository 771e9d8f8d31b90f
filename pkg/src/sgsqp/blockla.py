"""Block-partitioned symmetric operators and their Gauss-Seidel style majorizers.

A symmetric positive semidefinite operator on a product space
``R^{n_1} x ... x R^{n_s}`` is stored through its upper block triangle
only; diagonal blocks are kept together with a Cholesky factorization so
that all sweeps can run with triangular block substitutions.  The
splitting ``Q = U + D + U^*`` (``U`` the strict upper block triangle,
``D`` the block diagonal) induces the majorizers handled here:

* ``sgs``:          ``T = U D^{-1} U^*`` and ``Qhat = (D+U) D^{-1} (D+U^*)``
* ``sgs-shifted``:  ``D`` replaced by ``Dhat = D + diag(J_i)`` with PSD
  shifts, ``T = diag(J) + U Dhat^{-1} U^*``
* ``ssor``:         with ``tau = 1/omega``, ``rho = 2 tau - 1``,
  ``T = ((1-tau)D+U)(rho D)^{-1}((1-tau)D+U^*)`` and
  ``Qhat = (tau D+U)(rho D)^{-1}(tau D+U^*)``

In every case ``Qhat = Q + T`` and ``Qhat`` is positive definite as soon
as the diagonal blocks are.  Nothing is densified unless the ``densify``
test hook is called explicitly.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigvalsh

from .errors import (
    DiagonalNotPD,
    DimensionMismatch,
    InvalidParams,
    NotPSD,
    NotSymmetric,
    OmegaOutOfRange,
    ShapeMismatch,
    ShiftNotPSD,
)

__all__ = [
    "BlockPartition",
    "BlockVector",
    "BlockSymOperator",
    "Majorizer",
    "assemble",
    "sgs_operator",
    "ssor_operator",
    "shifted_sgs_operator",
    "conservative_shifts",
    "quad_norm",
]

_SYM_RTOL = 1e-12
_PSD_RTOL = 1e-10


@dataclass(frozen=True)
class BlockPartition:
    """Sizes ``(n_1, ..., n_s)`` of a product space, ``s >= 2``."""

    dims: tuple

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) < 2:
            raise InvalidParams("a block partition needs at least two blocks")
        if any(n <= 0 for n in dims):
            raise InvalidParams(f"block sizes must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)
        offsets = np.concatenate(([0], np.cumsum(dims)))
        object.__setattr__(self, "offsets", tuple(int(o) for o in offsets))

    @property
    def s(self):
        return len(self.dims)

    @property
    def total(self):
        return self.offsets[-1]

    def slice(self, i):
        return slice(self.offsets[i], self.offsets[i + 1])

    def split(self, vec):
        """Views of a flat vector, one per block."""
        vec = np.asarray(vec)
        if vec.shape != (self.total,):
            raise DimensionMismatch(
                f"expected a vector of length {self.total}, got shape {vec.shape}"
            )
        return [vec[self.slice(i)] for i in range(self.s)]


class BlockVector:
    """A flat vector together with its block partition.

    Parameters
    ----------
    partition : BlockPartition
    data : array_like, shape (partition.total,)
    tags : tuple or None
        Optional per-block shape metadata (e.g. a symmetric-matrix block
        stored in packed form); carried along, never interpreted here.
    """

    __slots__ = ("partition", "data", "tags")

    def __init__(self, partition, data, tags=None):
        data = np.ascontiguousarray(data, dtype=float)
        if data.shape != (partition.total,):
            raise DimensionMismatch(
                f"expected length {partition.total}, got shape {data.shape}"
            )
        self.partition = partition
        self.data = data
        self.tags = tags

    @classmethod
    def zeros(cls, partition, tags=None):
        return cls(partition, np.zeros(partition.total), tags=tags)

    @classmethod
    def from_blocks(cls, partition, blocks, tags=None):
        if len(blocks) != partition.s:
            raise DimensionMismatch(
                f"expected {partition.s} blocks, got {len(blocks)}"
            )
        return cls(partition, np.concatenate([np.ravel(b) for b in blocks]), tags=tags)

    def block(self, i):
        return self.data[self.partition.slice(i)]

    def set_block(self, i, value):
        self.data[self.partition.slice(i)] = value

    def blocks(self):
        return self.partition.split(self.data)

    def copy(self):
        return BlockVector(self.partition, self.data.copy(), tags=self.tags)

    def norm(self):
        return float(np.linalg.norm(self.data))

    def dot(self, other):
        other = other.data if isinstance(other, BlockVector) else other
        return float(self.data @ other)

    def __add__(self, other):
        other = other.data if isinstance(other, BlockVector) else other
        return BlockVector(self.partition, self.data + other, tags=self.tags)

    def __sub__(self, other):
        other = other.data if isinstance(other, BlockVector) else other
        return BlockVector(self.partition, self.data - other, tags=self.tags)

    def __rmul__(self, alpha):
        return BlockVector(self.partition, float(alpha) * self.data, tags=self.tags)

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        return f"BlockVector(dims={self.partition.dims}, data={self.data!r})"


def _check_symmetric(M, what):
    nrm = np.linalg.norm(M)
    if nrm == 0.0:
        return
    if np.linalg.norm(M - M.T) > _SYM_RTOL * nrm:
        raise NotSymmetric(f"{what} is not symmetric to relative tolerance {_SYM_RTOL}")


class BlockSymOperator:
    """Symmetric operator stored by its upper block triangle.

    Only blocks ``(i, j)`` with ``i <= j`` may be supplied; the lower
    triangle is served as transposed views.  Diagonal blocks must be
    symmetric (relative tolerance 1e-12) and positive definite — they are
    Cholesky-factored once at assembly.  Semidefiniteness of the full
    operator is *not* assumed; call :meth:`check_psd` when needed.

    Parameters
    ----------
    partition : BlockPartition
    blocks : dict
        Mapping ``(i, j) -> ndarray`` with zero-based ``i <= j``.
        Missing off-diagonal blocks are treated as zero; every diagonal
        block is required.
    factor_diag : bool
        Factor the diagonal blocks (required for sweeps).  Pass False
        for operators used only through :meth:`matvec`/:meth:`dense`
        (e.g. a possibly singular PSD cost term).
    """

    def __init__(self, partition, blocks, factor_diag=True):
        self.partition = partition
        s = partition.s
        self._blocks = {}
        for key, val in blocks.items():
            i, j = key
            if not (0 <= i <= j < s):
                raise InvalidParams(
                    f"block key {key} is not an upper-triangle index pair"
                )
            arr = np.ascontiguousarray(val, dtype=float)
            want = (partition.dims[i], partition.dims[j])
            if arr.shape != want:
                raise DimensionMismatch(
                    f"block {key} has shape {arr.shape}, expected {want}"
                )
            if np.any(arr != 0.0):
                self._blocks[(i, j)] = arr
        self._chol = None
        for i in range(s):
            if (i, i) not in self._blocks:
                if factor_diag:
                    raise DiagonalNotPD(i, f"diagonal block {i} is missing or zero")
                continue
            _check_symmetric(self._blocks[(i, i)], f"diagonal block {i}")
            # store the exactly symmetrized version so sweeps and dense()
            # agree to the last bit
            sym = 0.5 * (self._blocks[(i, i)] + self._blocks[(i, i)].T)
            self._blocks[(i, i)] = sym
        if factor_diag:
            self._chol = []
            for i in range(s):
                try:
                    c = cho_factor(self._blocks[(i, i)], lower=True)
                except np.linalg.LinAlgError as exc:
                    raise DiagonalNotPD(i) from exc
                except ValueError as exc:  # scipy raises this for NaN/inf
                    raise DiagonalNotPD(i, f"diagonal block {i}: {exc}") from exc
                self._chol.append(c)
                # cho_factor succeeds on some indefinite inputs only when
                # the trailing pivot is tiny; double-check positivity
                if not np.all(np.diag(c[0]) > 0.0):
                    raise DiagonalNotPD(i)

    # -- basic access -------------------------------------------------

    @property
    def s(self):
        return self.partition.s

    @property
    def n(self):
        return self.partition.total

    def block(self, i, j):
        """The ``(i, j)`` block; transposed view below the diagonal."""
        if i <= j:
            got = self._blocks.get((i, j))
            if got is None:
                return np.zeros((self.partition.dims[i], self.partition.dims[j]))
            return got
        got = self._blocks.get((j, i))
        if got is None:
            return np.zeros((self.partition.dims[i], self.partition.dims[j]))
        return got.T

    def has_block(self, i, j):
        return ((i, j) if i <= j else (j, i)) in self._blocks

    def stored_items(self):
        return self._blocks.items()

    def dense(self):
        """Full symmetric matrix (test/certification hook)."""
        N = self.n
        M = np.zeros((N, N))
        for (i, j), arr in self._blocks.items():
            M[self.partition.slice(i), self.partition.slice(j)] = arr
            if i != j:
                M[self.partition.slice(j), self.partition.slice(i)] = arr.T
        return M

    # -- products -----------------------------------------------------

    def matvec(self, x):
        """``Q x`` for a flat vector ``x``, using only stored blocks."""
        x = np.asarray(x, dtype=float)
        xb = self.partition.split(x)
        yb = [np.zeros(n) for n in self.partition.dims]
        for (i, j), arr in self._blocks.items():
            yb[i] += arr @ xb[j]
            if i != j:
                yb[j] += arr.T @ xb[i]
        return np.concatenate(yb)

    def apply(self, x):
        """``Q x`` for a :class:`BlockVector`."""
        return BlockVector(self.partition, self.matvec(x.data), tags=x.tags)

    def upper_matvec_blocks(self, xb):
        """``U x`` blockwise (strict upper triangle only)."""
        yb = [np.zeros(n) for n in self.partition.dims]
        for (i, j), arr in self._blocks.items():
            if i < j:
                yb[i] += arr @ xb[j]
        return yb

    def upper_t_matvec_blocks(self, xb):
        """``U^* x`` blockwise."""
        yb = [np.zeros(n) for n in self.partition.dims]
        for (i, j), arr in self._blocks.items():
            if i < j:
                yb[j] += arr.T @ xb[i]
        return yb

    def diag_matvec_blocks(self, xb):
        return [self._blocks[(i, i)] @ xb[i] for i in range(self.s)]

    def diag_solve(self, i, rhs):
        """``Q_{ii}^{-1} rhs`` through the cached Cholesky factor."""
        if self._chol is None:
            raise InvalidParams("operator was assembled with factor_diag=False")
        return cho_solve(self._chol[i], rhs)

    # -- derived operators -------------------------------------------

    def with_added_diag(self, shifts):
        """A new operator with ``shifts[i]`` added to each diagonal block.

        Each shift must be symmetric PSD (eigenvalues >= -1e-10 relative);
        ``None`` entries mean a zero shift.
        """
        if len(shifts) != self.s:
            raise DimensionMismatch(
                f"expected {self.s} shift blocks, got {len(shifts)}"
            )
        blocks = {k: v.copy() for k, v in self._blocks.items()}
        for i, J in enumerate(shifts):
            if J is None:
                continue
            J = np.asarray(J, dtype=float)
            if J.shape != blocks[(i, i)].shape:
                raise ShapeMismatch(
                    f"shift {i} has shape {J.shape}, expected {blocks[(i, i)].shape}"
                )
            _check_symmetric(J, f"shift block {i}")
            scale = max(np.linalg.norm(J, 2), 1.0)
            if eigvalsh(0.5 * (J + J.T)).min() < -_PSD_RTOL * scale:
                raise ShiftNotPSD(i)
            blocks[(i, i)] = blocks[(i, i)] + 0.5 * (J + J.T)
        return BlockSymOperator(self.partition, blocks)

    def diag_spectral_norms(self):
        return [np.linalg.norm(self._blocks[(i, i)], 2) for i in range(self.s)]

    def check_psd(self, rtol=_PSD_RTOL):
        """Raise :class:`NotPSD` unless ``Q`` is PSD to ``rtol`` (relative)."""
        M = self.dense()
        scale = max(np.linalg.norm(M, 2), 1.0)
        lo = eigvalsh(M).min()
        if lo < -rtol * scale:
            raise NotPSD(
                f"operator has eigenvalue {lo:.3e} < -{rtol:.1e} * {scale:.3e}"
            )
        return lo


def assemble(partition, blocks):
    """Build a :class:`BlockSymOperator` from its upper-triangle blocks."""
    return BlockSymOperator(partition, blocks)


def from_dense(partition, M, factor_diag=True):
    """Cut a dense symmetric matrix into a :class:`BlockSymOperator`."""
    M = np.asarray(M, dtype=float)
    N = partition.total
    if M.shape != (N, N):
        raise DimensionMismatch(f"expected shape {(N, N)}, got {M.shape}")
    _check_symmetric(M, "matrix")
    M = 0.5 * (M + M.T)
    blocks = {}
    for i in range(partition.s):
        for j in range(i, partition.s):
            blocks[(i, j)] = M[partition.slice(i), partition.slice(j)].copy()
    return BlockSymOperator(partition, blocks, factor_diag=factor_diag)


def conservative_shifts(Q, blocks=None):
    """Shifts ``J_i = ||Q_ii||_2 I - Q_ii`` (PSD by construction).

    ``blocks`` limits the construction to the given indices, leaving the
    others ``None``.
    """
    out = [None] * Q.s
    todo = range(Q.s) if blocks is None else blocks
    for i in todo:
        Qii = Q.block(i, i)
        mu = np.linalg.norm(Qii, 2)
        out[i] = mu * np.eye(Qii.shape[0]) - Qii
    return out


class Majorizer:
    """Implicit proximal weight ``T`` and majorized operator ``Qhat = Q + T``.

    Built by :func:`sgs_operator`, :func:`ssor_operator` or
    :func:`shifted_sgs_operator`; never instantiated directly.  All
    applications and solves run through block triangular substitutions
    with the factored (shifted) diagonal.  ``densify`` is the only way
    to obtain dense matrices, and exists for certification.
    """

    def __init__(self, base, eff, kind, a, c, shifts=None, omega=None):
        self.base = base          # the operator Q being majorized
        self.eff = eff            # Q with shifts folded into the diagonal
        self.kind = kind
        self.omega = omega
        self.shifts = shifts
        self._a = a               # diagonal scale in the outer factors
        self._c = c               # diagonal scale in the middle inverse
        self.partition = base.partition

    # -- triangular substitutions ------------------------------------

    def _solve_scaled_upper(self, yb, a):
        """Solve ``(a*Dhat + U) z = y`` (backward block substitution)."""
        op, s = self.eff, self.eff.s
        zb = [None] * s
        for i in range(s - 1, -1, -1):
            rhs = yb[i].copy()
            for j in range(i + 1, s):
                if op.has_block(i, j):
                    rhs -= op.block(i, j) @ zb[j]
            zb[i] = op.diag_solve(i, rhs) / a
        return zb

    def _solve_scaled_lower(self, yb, a):
        """Solve ``(a*Dhat + U^*) z = y`` (forward block substitution)."""
        op, s = self.eff, self.eff.s
        zb = [None] * s
        for i in range(s):
            rhs = yb[i].copy()
            for j in range(i):
                if op.has_block(j, i):
                    rhs -= op.block(j, i).T @ zb[j]
            zb[i] = op.diag_solve(i, rhs) / a
        return zb

    def _factored_apply(self, xb, g):
        """``(g*Dhat + U)(c*Dhat)^{-1}(g*Dhat + U^*) x`` blockwise."""
        op, c = self.eff, self._c
        wb = op.upper_t_matvec_blocks(xb)
        if g != 0.0:
            db = op.diag_matvec_blocks(xb)
            wb = [w + g * d for w, d in zip(wb, db)]
        zb = [op.diag_solve(i, wb[i]) / c for i in range(op.s)]
        yb = op.upper_matvec_blocks(zb)
        if g != 0.0:
            db = op.diag_matvec_blocks(zb)
            yb = [y + g * d for y, d in zip(yb, db)]
        return yb

    # -- public operator interface -----------------------------------

    def apply_T(self, x):
        """``T x`` for a flat vector or BlockVector."""
        vec = x.data if isinstance(x, BlockVector) else np.asarray(x, dtype=float)
        xb = self.partition.split(vec)
        yb = self._factored_apply(xb, 1.0 - self._a)
        if self.shifts is not None:
            for i, J in enumerate(self.shifts):
                if J is not None:
                    yb[i] = yb[i] + J @ xb[i]
        out = np.concatenate(yb)
        return BlockVector(self.partition, out) if isinstance(x, BlockVector) else out

    def apply_Qhat(self, x):
        """``Qhat x = (Q + T) x`` through the product factorization."""
        vec = x.data if isinstance(x, BlockVector) else np.asarray(x, dtype=float)
        xb = self.partition.split(vec)
        yb = self._factored_apply(xb, self._a)
        out = np.concatenate(yb)
        return BlockVector(self.partition, out) if isinstance(x, BlockVector) else out

    def solve_Qhat(self, y):
        """``Qhat^{-1} y`` via two triangular sweeps and a diagonal product."""
        vec = y.data if isinstance(y, BlockVector) else np.asarray(y, dtype=float)
        yb = self.partition.split(vec)
        zb = self._solve_scaled_upper(yb, self._a)
        wb = self.eff.diag_matvec_blocks(zb)
        wb = [self._c * w for w in wb]
        xb = self._solve_scaled_lower(wb, self._a)
        out = np.concatenate(xb)
        return BlockVector(self.partition, out) if isinstance(y, BlockVector) else out

    def dinv_norm(self, v):
        """Norm ``||M^{-1/2} v||`` for the middle diagonal ``M`` of ``T``.

        ``M`` is ``Dhat`` for the Gauss-Seidel kinds and ``rho * D`` for
        the over-relaxed kind; this is the weight appearing in the
        perturbation bound.
        """
        vec = v.data if isinstance(v, BlockVector) else np.asarray(v, dtype=float)
        vb = self.partition.split(vec)
        acc = 0.0
        for i in range(self.eff.s):
            acc += float(vb[i] @ self.eff.diag_solve(i, vb[i]))
        return np.sqrt(max(acc, 0.0) / self._c)

    def perturbation(self, delta_prime, delta):
        """Aggregate perturbation of an inexact cycle.

        For the Gauss-Seidel kinds this is ``delta + U Dhat^{-1} (delta -
        delta')``; for the over-relaxed kind,
        ``delta' + (tau D + U)(rho D)^{-1}(delta - delta')``.  Both
        vectors must agree on block 1 (checked by the caller).
        """
        dp = delta_prime.data if isinstance(delta_prime, BlockVector) else delta_prime
        d = delta.data if isinstance(delta, BlockVector) else delta
        diffb = self.partition.split(np.asarray(d) - np.asarray(dp))
        op = self.eff
        if self.kind == "ssor":
            zb = [op.diag_solve(i, diffb[i]) / self._c for i in range(op.s)]
            yb = op.upper_matvec_blocks(zb)
            db = op.diag_matvec_blocks(zb)
            out = np.asarray(dp) + np.concatenate(
                [y + self._a * dd for y, dd in zip(yb, db)]
            )
        else:
            zb = [op.diag_solve(i, diffb[i]) for i in range(op.s)]
            out = np.asarray(d) + np.concatenate(op.upper_matvec_blocks(zb))
        return BlockVector(self.partition, out)

    # -- norms and dense hooks ---------------------------------------

    def quad_norm(self, x, which):
        """``sqrt(<x, M x>)`` for ``M`` in ``{Q, T, Qhat, Qhat_inv, Dinv}``."""
        vec = x.data if isinstance(x, BlockVector) else np.asarray(x, dtype=float)
        if which == "Q":
            val = vec @ self.base.matvec(vec)
        elif which == "T":
            val = vec @ self.apply_T(vec)
        elif which == "Qhat":
            val = vec @ self.apply_Qhat(vec)
        elif which == "Qhat_inv":
            val = vec @ self.solve_Qhat(vec)
        elif which == "Dinv":
            return self.dinv_norm(vec)
        else:
            raise InvalidParams(f"unknown quadratic norm {which!r}")
        return float(np.sqrt(max(val, 0.0)))

    def densify(self, which="Qhat"):
        """Dense ``T``, ``Qhat`` or ``Q`` — certification hook only."""
        if which == "Q":
            return self.base.dense()
        P, op = self.partition, self.eff
        N = P.total
        Dh = np.zeros((N, N))
        Uf = np.zeros((N, N))
        for (i, j), arr in op.stored_items():
            if i == j:
                Dh[P.slice(i), P.slice(i)] = arr
            else:
                Uf[P.slice(i), P.slice(j)] = arr
        if which == "Qhat":
            F = self._a * Dh + Uf
        elif which == "T":
            F = (1.0 - self._a) * Dh + Uf
        else:
            raise InvalidParams(f"unknown densify target {which!r}")
        mid = np.linalg.solve(self._c * Dh, F.T)
        M = F @ mid
        M = 0.5 * (M + M.T)
        if which == "T" and self.shifts is not None:
            for i, J in enumerate(self.shifts):
                if J is not None:
                    M[P.slice(i), P.slice(i)] += J
        return M

    def m_constant(self):
        """``2 ||M^{-1/2}||_2 + ||Qhat^{-1/2}||_2`` for the error analysis."""
        lam_d = min(
            eigvalsh(self.eff.block(i, i)).min() for i in range(self.eff.s)
        )
        lam_qhat = eigvalsh(self.densify("Qhat")).min()
        return 2.0 / np.sqrt(self._c * lam_d) + 1.0 / np.sqrt(lam_qhat)


def sgs_operator(Q, shifts=None):
    """Symmetric Gauss-Seidel majorizer of ``Q`` (optionally shifted)."""
    if shifts is not None and any(J is not None for J in shifts):
        return shifted_sgs_operator(Q, shifts)
    return Majorizer(Q, Q, "sgs", 1.0, 1.0)


def shifted_sgs_operator(Q, shifts):
    """Gauss-Seidel majorizer with PSD diagonal shifts folded in."""
    eff = Q.with_added_diag(shifts)
    kept = [None if J is None else np.asarray(J, dtype=float) for J in shifts]
    return Majorizer(Q, eff, "sgs-shifted", 1.0, 1.0, shifts=kept)


def ssor_operator(Q, omega, shifts=None):
    """Symmetric over-relaxed majorizer, ``omega in [1, 2)``."""
    omega = float(omega)
    if not (1.0 <= omega < 2.0):
        raise OmegaOutOfRange(f"omega must lie in [1, 2), got {omega}")
    tau = 1.0 / omega
    rho = 2.0 * tau - 1.0
    if shifts is not None and any(J is not None for J in shifts):
        eff = Q.with_added_diag(shifts)
        kept = [None if J is None else np.asarray(J, dtype=float) for J in shifts]
        return Majorizer(Q, eff, "ssor", tau, rho, shifts=kept, omega=omega)
    return Majorizer(Q, Q, "ssor", tau, rho, omega=omega)


def quad_norm(maj, x, which):
    """Functional form of :meth:`Majorizer.quad_norm`."""
    return maj.quad_norm(x, which)
