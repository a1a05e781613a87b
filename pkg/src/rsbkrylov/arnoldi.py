"""Single-vector Arnoldi with modified Gram-Schmidt and restarted FOM/GMRES."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .linalg import (
    DTYPE,
    OpCounter,
    as_sparse,
    least_squares,
    solve_dense,
    sparse_fro_norm,
    spmv_block,
)
from .report import SolveReport, converged_mask

__all__ = [
    "ArnoldiFactorization",
    "arnoldi_cycle",
    "fom_step",
    "gmres_step",
    "solve_restarted",
]

LUCKY_TOL = 1e-13


@dataclass(frozen=True)
class ArnoldiFactorization:
    """``A V[:, :j] = V Hbar`` after ``j`` Arnoldi steps.

    On a lucky breakdown the last basis vector is zero and ``Hbar[j, j-1]``
    is set to zero; the first ``j`` columns of ``V`` stay orthonormal.
    """

    V: np.ndarray
    Hbar: np.ndarray
    beta: float
    j: int
    breakdown: bool = False

    @property
    def H(self) -> np.ndarray:
        return self.Hbar[: self.j, :]

    @property
    def Vj(self) -> np.ndarray:
        return self.V[:, : self.j]


def arnoldi_cycle(A, r0, m: int, counter: OpCounter | None = None,
                  reorth: bool = False, anorm: float | None = None) -> ArnoldiFactorization:
    """Run ``m`` steps of Arnoldi with modified Gram-Schmidt from ``r0``.

    Stops early with ``breakdown=True`` when the new subdiagonal entry drops
    below ``1e-13 * ||A||_F`` (an invariant subspace has been found).
    ``reorth`` adds a second full MGS pass per step.
    """
    if m < 1:
        raise ValueError("cycle length m must be >= 1")
    r0 = np.asarray(r0, dtype=DTYPE).reshape(-1)
    n = r0.shape[0]
    beta = float(np.linalg.norm(r0))
    if beta == 0.0:
        raise ValueError("Arnoldi needs a nonzero starting vector")
    if anorm is None:
        anorm = sparse_fro_norm(A)

    V = np.zeros((n, m + 1), dtype=DTYPE)
    Hbar = np.zeros((m + 1, m), dtype=DTYPE)
    V[:, 0] = r0 / beta
    for j in range(m):
        w = spmv_block(A, V[:, j], counter)
        for _ in range(2 if reorth else 1):
            for i in range(j + 1):
                h = np.vdot(V[:, i], w)
                Hbar[i, j] += h
                w = w - h * V[:, i]
        h = np.linalg.norm(w)
        if h < LUCKY_TOL * anorm:
            return ArnoldiFactorization(V[:, : j + 2], Hbar[: j + 2, : j + 1], beta, j + 1, True)
        Hbar[j + 1, j] = h
        V[:, j + 1] = w / h
    return ArnoldiFactorization(V, Hbar, beta, m, False)


def fom_step(fact: ArnoldiFactorization):
    """FOM coefficients ``H_j y = beta e_1`` and the residual norm ``h_{j+1,j} |e_j^T y|``."""
    rhs = np.zeros(fact.j, dtype=DTYPE)
    rhs[0] = fact.beta
    y = solve_dense(fact.H, rhs, context="FOM Hessenberg system")
    resnorm = abs(fact.Hbar[fact.j, fact.j - 1]) * abs(y[-1])
    return y, float(resnorm)


def gmres_step(fact: ArnoldiFactorization):
    rhs = np.zeros(fact.j + 1, dtype=DTYPE)
    rhs[0] = fact.beta
    y = least_squares(fact.Hbar, rhs, context="GMRES Hessenberg least squares")
    resnorm = np.linalg.norm(rhs - fact.Hbar @ y)
    return y, float(resnorm)


def solve_restarted(A, b, x0=None, m: int = 20, tol: float = 1e-8,
                    max_cycles: int = 500, method: str = "gmres",
                    residual_mode: str = "relative", reorth: bool = False,
                    counter: OpCounter | None = None, audit: bool = False) -> SolveReport:
    """Restarted FOM(m) or GMRES(m) for ``A x = b``.

    The residual is updated recursively as ``r <- r0 - V_{j+1} Hbar y``;
    with ``audit=True`` the explicit residual ``b - A x`` is also computed
    after every cycle (without counting it) and the discrepancy relative to
    ``||b||`` is stored in ``report.audit``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    method = method.lower()
    if method not in ("fom", "gmres"):
        raise ValueError(f"method must be 'fom' or 'gmres', got {method!r}")
    A = as_sparse(A)
    counter = OpCounter() if counter is None else counter
    start = counter.matvecs
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=DTYPE).reshape(-1)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=DTYPE).reshape(-1)
    r = b - spmv_block(A, x, counter) if np.any(x) else b.copy()
    bnorm = np.linalg.norm(b)
    anorm = sparse_fro_norm(A)

    report = SolveReport(X=x[:, None], shifts=np.zeros(1, dtype=DTYPE), method=method)

    def record():
        report.trace.append(np.array([np.linalg.norm(r)]))
        report.matvec_trace.append(counter.matvecs - start)
        report.seconds.append(time.perf_counter() - t0)

    record()
    step = fom_step if method == "fom" else gmres_step
    while not converged_mask(report.trace[-1], [bnorm], tol, residual_mode).all():
        if report.cycles >= max_cycles:
            break
        fact = arnoldi_cycle(A, r, m, counter, reorth=reorth, anorm=anorm)
        y, _ = step(fact)
        x = x + fact.Vj @ y
        r = r - fact.V @ (fact.Hbar @ y)
        report.cycles += 1
        record()
        if audit:
            explicit = b - A @ x
            report.audit.append(float(np.linalg.norm(explicit - r) / max(bnorm, 1.0e-300)))
    report.X = x[:, None]
    report.matvecs = counter.matvecs - start
    report.converged = bool(converged_mask(report.trace[-1], [bnorm], tol, residual_mode).all())
    return report
