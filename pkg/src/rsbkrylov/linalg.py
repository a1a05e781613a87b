"""Dense and sparse kernels shared by every solver in the package.

All arithmetic is done in complex double precision.  Sparse operators are
``scipy.sparse.csr_matrix`` instances with sorted, duplicate-free column
indices; block vectors are plain 2-D ``numpy`` arrays of shape ``(n, s)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

__all__ = [
    "DTYPE",
    "BreakdownError",
    "SingularMatrixError",
    "NotPositiveDefiniteError",
    "OpCounter",
    "as_sparse",
    "as_block",
    "sparse_fro_norm",
    "spmv_block",
    "reduced_qr",
    "factor_dense",
    "solve_dense",
    "least_squares",
    "gen_eig",
]

DTYPE = np.complex128

QR_BREAKDOWN_TOL = 1e-12
# reciprocal condition number below which a small matrix is treated as singular
SINGULAR_RCOND = 10 * np.finfo(float).eps


class BreakdownError(ArithmeticError):
    """Rank deficiency in a (block) Gram-Schmidt / QR step.

    ``column`` is the zero-based index of the first deficient column and
    ``step`` the Arnoldi step at which it happened (0 for the starting block).
    """

    def __init__(self, message, column=None, step=None):
        super().__init__(message)
        self.column = column
        self.step = step


class SingularMatrixError(np.linalg.LinAlgError):
    """A small dense system is singular to working precision."""

    def __init__(self, message, context=None, rcond=None):
        super().__init__(message)
        self.context = context
        self.rcond = rcond


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


@dataclass
class OpCounter:
    """Mutable tallies of the expensive operations a solve performs.

    ``matvecs`` counts sparse-matrix times block-vector products (one per
    product, whatever the block width), ``projections`` counts applications
    of a shift-dependent projector and ``refresh`` counts the single-column
    products spent recomputing ``C = A U`` for a new matrix.
    """

    matvecs: int = 0
    projections: int = 0
    refresh: int = 0

    def snapshot(self):
        return OpCounter(self.matvecs, self.projections, self.refresh)


def as_sparse(A) -> scipy.sparse.csr_matrix:
    """Return ``A`` as a square complex CSR matrix with canonical indices."""
    M = scipy.sparse.csr_matrix(A, dtype=DTYPE)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"operator must be square, got shape {M.shape}")
    if not M.has_canonical_format:
        M = M.copy()
        M.sum_duplicates()
        M.sort_indices()
    return M


def as_block(V) -> np.ndarray:
    V = np.asarray(V, dtype=DTYPE)
    if V.ndim == 1:
        V = V[:, None]
    if V.ndim != 2:
        raise ValueError(f"block vector must be 1-D or 2-D, got {V.ndim}-D")
    return V


def sparse_fro_norm(A) -> float:
    if scipy.sparse.issparse(A):
        return float(scipy.sparse.linalg.norm(A, "fro"))
    return float(np.linalg.norm(A, "fro"))


def spmv_block(A, V, counter: OpCounter | None = None) -> np.ndarray:
    """Compute ``A @ V`` for a block of columns and count one MAT-VEC.

    A 1-D ``V`` is accepted and a 1-D result returned.
    """
    V = np.asarray(V)
    if V.shape[0] != A.shape[1]:
        raise ValueError(
            f"dimension mismatch: operator is {A.shape[0]}x{A.shape[1]}, "
            f"block has {V.shape[0]} rows"
        )
    out = A @ V
    if counter is not None:
        counter.matvecs += 1
    return np.asarray(out, dtype=DTYPE)


def reduced_qr(V, tol: float = QR_BREAKDOWN_TOL):
    """Reduced QR factorization ``V = Q R`` with a non-negative real diagonal.

    Parameters
    ----------
    V : (n, s) array_like
        Block to factor, ``s <= n``.
    tol : float
        A diagonal entry of ``R`` below ``tol * ||V||_F`` is reported as
        a breakdown.

    Returns
    -------
    Q : (n, s) ndarray
        Orthonormal columns.
    R : (s, s) ndarray
        Upper triangular factor.

    Raises
    ------
    BreakdownError
        If ``V`` is numerically rank deficient.
    """
    V = as_block(V)
    n, s = V.shape
    if s > n:
        raise ValueError(f"reduced QR needs s <= n, got s={s}, n={n}")
    vnorm = np.linalg.norm(V)
    if vnorm == 0.0:
        raise BreakdownError("zero block in reduced QR (column 1)", column=0)
    Q, R = np.linalg.qr(V, mode="reduced")
    d = np.diag(R).copy()
    absd = np.abs(d)
    bad = np.flatnonzero(absd < tol * vnorm)
    if bad.size:
        c = int(bad[0])
        raise BreakdownError(
            f"rank-deficient block in reduced QR (column {c + 1}, "
            f"|r_cc| = {absd[c]:.3e}, ||V||_F = {vnorm:.3e})",
            column=c,
        )
    phase = d / absd
    Q = Q * phase[None, :]
    R = phase.conj()[:, None] * R
    # diagonal is real by construction; drop rounding in the imaginary part
    R[np.diag_indices(s)] = absd
    return Q, R


def _rcond(M) -> float:
    if M.size == 0:
        return 1.0
    sv = np.linalg.svd(M, compute_uv=False)
    if not np.all(np.isfinite(sv)) or sv[0] == 0.0:
        return 0.0
    return float(sv[-1] / sv[0])


class _Factored:
    """LU factors of a small square matrix, checked for singularity."""

    def __init__(self, M, context=""):
        M = np.asarray(M, dtype=DTYPE)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {M.shape}")
        self.n = M.shape[0]
        self.rcond = _rcond(M)
        if self.rcond < SINGULAR_RCOND:
            where = f" ({context})" if context else ""
            raise SingularMatrixError(
                f"matrix singular to working precision{where}: "
                f"rcond = {self.rcond:.3e}",
                context=context,
                rcond=self.rcond,
            )
        self._lu = scipy.linalg.lu_factor(M, check_finite=False) if self.n else None

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=DTYPE)
        if self.n == 0:
            return np.zeros_like(rhs)
        return scipy.linalg.lu_solve(self._lu, rhs, check_finite=False)


def factor_dense(M, context: str = "") -> _Factored:
    """Factor ``M`` once for repeated solves; raises if it is singular."""
    return _Factored(M, context)


def solve_dense(M, rhs, context: str = "") -> np.ndarray:
    """Solve the square system ``M Y = rhs``.

    ``context`` is attached to the :class:`SingularMatrixError` raised when
    ``M`` is singular to working precision, so the caller can tell which
    small solve failed.
    """
    return factor_dense(M, context).solve(rhs)


def least_squares(M, rhs, context: str = "") -> np.ndarray:
    """Column-wise minimizer of ``||rhs - M z||_2`` via a QR factorization of ``M``."""
    M = np.asarray(M, dtype=DTYPE)
    rhs = np.asarray(rhs, dtype=DTYPE)
    p, q = M.shape
    if p < q:
        raise ValueError(f"least squares needs p >= q, got {p}x{q}")
    Q, R = scipy.linalg.qr(M, mode="economic", check_finite=False)
    rc = _rcond(R)
    if rc < SINGULAR_RCOND:
        where = f" ({context})" if context else ""
        raise SingularMatrixError(
            f"rank-deficient least-squares matrix{where}: rcond = {rc:.3e}",
            context=context,
            rcond=rc,
        )
    return scipy.linalg.solve_triangular(R, Q.conj().T @ rhs, check_finite=False)


def gen_eig(L, R):
    """Generalized eigenpairs of ``L g = mu R g`` for Hermitian positive definite ``R``.

    ``R`` is Cholesky-factored, ``R = F F^H``, the pencil is reduced to the
    standard problem ``F^{-1} L F^{-H} z = mu z`` and the eigenvectors are
    mapped back with ``g = F^{-H} z``.

    Returns
    -------
    values : (m,) ndarray
    vectors : (m, m) ndarray
        Column ``l`` is the eigenvector for ``values[l]``.
    """
    L = np.asarray(L, dtype=DTYPE)
    R = np.asarray(R, dtype=DTYPE)
    if L.shape != R.shape or L.shape[0] != L.shape[1]:
        raise ValueError(f"pencil matrices must be square and equal size: {L.shape}, {R.shape}")
    R = 0.5 * (R + R.conj().T)
    try:
        F = scipy.linalg.cholesky(R, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefiniteError(
            "right-hand matrix of the pencil is not positive definite"
        ) from exc
    fd = np.abs(np.diag(F))
    if fd.size and fd.min() ** 2 <= np.finfo(float).eps * fd.max() ** 2:
        raise NotPositiveDefiniteError(
            "right-hand matrix of the pencil is numerically singular "
            f"(min/max Cholesky pivot ratio {fd.min() / fd.max():.3e})"
        )
    T = scipy.linalg.solve_triangular(F, L, lower=True)
    S = scipy.linalg.solve_triangular(F, T.conj().T, lower=True).conj().T
    values, Z = np.linalg.eig(S)
    G = scipy.linalg.solve_triangular(F.conj().T, Z, lower=False)
    return values, G
