"""Restarted shifted block FOM and GMRES (sbFOM / sbGMRES).

Every shift ``sigma_i`` is paired with column ``i`` of the right-hand side
block, and all of them are solved over the block Krylov subspace of the
unshifted matrix built from the block of current residuals.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .block import BlockArnoldiFactorization, block_arnoldi
from .linalg import (
    DTYPE,
    BreakdownError,
    OpCounter,
    as_block,
    as_sparse,
    least_squares,
    solve_dense,
    sparse_fro_norm,
    spmv_block,
)
from .report import SolveReport, converged_mask

__all__ = [
    "ShiftedFamily",
    "initial_residuals",
    "is_rank_deficient",
    "decollinearize",
    "sbfom_cycle",
    "sbgmres_cycle",
    "shifted_update",
    "solve_shifted_family",
]

RANK_TOL = 1e-12
MAX_RESEEDS = 3


@dataclass
class ShiftedFamily:
    """The systems ``(A + shifts[i] I) x_i = B[:, i]`` for ``i < s``."""

    A: object
    shifts: np.ndarray
    B: np.ndarray
    X0: np.ndarray | None = None

    def __post_init__(self):
        self.A = as_sparse(self.A)
        self.shifts = np.atleast_1d(np.asarray(self.shifts, dtype=DTYPE))
        self.B = as_block(self.B)
        n = self.A.shape[0]
        if self.B.shape[0] != n:
            raise ValueError(f"B has {self.B.shape[0]} rows, matrix is {n}x{n}")
        if self.shifts.shape[0] != self.B.shape[1]:
            raise ValueError(
                f"{self.shifts.shape[0]} shifts but {self.B.shape[1]} right-hand sides"
            )
        if self.X0 is None:
            self.X0 = np.zeros_like(self.B)
        else:
            self.X0 = as_block(self.X0).copy()
            if self.X0.shape != self.B.shape:
                raise ValueError(f"X0 shape {self.X0.shape} != B shape {self.B.shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def s(self) -> int:
        return self.B.shape[1]


def _apply_shifted(A, shifts, X, counter=None):
    """Column ``i`` of the result is ``(A + shifts[i] I) X[:, i]``."""
    return spmv_block(A, X, counter) + X * shifts[None, :]


def initial_residuals(fam: ShiftedFamily, counter: OpCounter | None = None) -> np.ndarray:
    if not np.any(fam.X0):
        return fam.B.copy()
    return fam.B - _apply_shifted(fam.A, fam.shifts, fam.X0, counter)


def is_rank_deficient(R, tol: float = RANK_TOL) -> bool:
    """Rank test on the column-normalized block, so small columns still count."""
    R = as_block(R)
    cn = np.linalg.norm(R, axis=0)
    if R.shape[1] > R.shape[0] or np.any(cn == 0):
        return True
    Rn = R / cn[None, :]
    sv = np.linalg.svd(Rn, compute_uv=False)
    return bool(sv[-1] <= tol * np.linalg.norm(Rn))


def decollinearize(A, shifts, R, seed, scale: float | None = None,
                   counter: OpCounter | None = None):
    """Perturb the iterate so the residual block gets full column rank.

    A full-rank ``R`` is passed through with a zero perturbation.  Otherwise
    a seeded random ``delta`` (entries with real and imaginary parts uniform
    in ``[-scale, scale]``) is added to the iterate and the residual becomes
    ``R - (A delta + delta diag(shifts))``.  ``scale`` may be a scalar or one
    value per column.  Up to three seeds are tried.

    Returns
    -------
    delta, R_new : ndarray
    """
    R = as_block(R)
    shifts = np.atleast_1d(np.asarray(shifts, dtype=DTYPE))
    if not is_rank_deficient(R):
        return np.zeros_like(R), R
    n, s = R.shape
    if scale is None:
        scale = max(np.linalg.norm(R), 1.0) / n
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (s,))[None, :]
    for attempt in range(MAX_RESEEDS):
        rng = np.random.default_rng([int(seed), attempt])
        delta = scale * (rng.uniform(-1, 1, (n, s)) + 1j * rng.uniform(-1, 1, (n, s)))
        R_new = R - _apply_shifted(A, shifts, delta, counter)
        if not is_rank_deficient(R_new):
            return delta, R_new
    raise BreakdownError(
        f"could not render residuals linearly independent after {MAX_RESEEDS} seeds"
    )


def sbfom_cycle(fact: BlockArnoldiFactorization, shifts, S0=None) -> np.ndarray:
    """Column ``i`` solves ``(H_j + sigma_i I) y = E_j S0 e_i``."""
    shifts = np.atleast_1d(np.asarray(shifts, dtype=DTYPE))
    rhs = fact.E(fact.j) if S0 is None else np.vstack(
        [S0, np.zeros(((fact.j - 1) * fact.s, fact.s), dtype=DTYPE)])
    Y = np.empty((fact.js, shifts.size), dtype=DTYPE)
    for i, sigma in enumerate(shifts):
        Hs = fact.shifted_hbar(sigma)[: fact.js]
        Y[:, i] = solve_dense(Hs, rhs[:, i], context=f"sbFOM system, shift index {i}")
    return Y


def sbgmres_cycle(fact: BlockArnoldiFactorization, shifts, S0=None) -> np.ndarray:
    """Column ``i`` minimizes ``||E_{j+1} S0 e_i - (Hbar + sigma_i Ibar) z||``."""
    shifts = np.atleast_1d(np.asarray(shifts, dtype=DTYPE))
    rhs = fact.E(fact.j + 1) if S0 is None else np.vstack(
        [S0, np.zeros((fact.j * fact.s, fact.s), dtype=DTYPE)])
    Y = np.empty((fact.js, shifts.size), dtype=DTYPE)
    for i, sigma in enumerate(shifts):
        Y[:, i] = least_squares(fact.shifted_hbar(sigma), rhs[:, i],
                                context=f"sbGMRES least squares, shift index {i}")
    return Y


def shifted_update(fact: BlockArnoldiFactorization, shifts, Y, R0):
    """Return ``(W_j Y, R_new)`` with ``r_i <- r0_i - W_{j+1}(Hbar + sigma_i Ibar) y_i``."""
    coeff = fact.Hbar @ Y
    coeff[: fact.js] += Y * shifts[None, :]
    return fact.Wj @ Y, R0 - fact.W @ coeff


def restart_scale(fam: ShiftedFamily, R, cycle: int):
    """Perturbation size for re-randomizing the residual block.

    Before the first cycle this is ``||B||_F / n``.  Later it is shrunk per
    column by the relative residual, so a shift that has already converged
    is not thrown back.
    """
    base = np.linalg.norm(fam.B) / fam.n
    if cycle == 0:
        return base
    bn = np.linalg.norm(fam.B, axis=0)
    rel = np.linalg.norm(R, axis=0) / np.where(bn > 0, bn, 1.0)
    return base * np.maximum(rel, np.finfo(float).eps)


class _Recorder:
    """Appends trace entries to a report while a solve runs."""

    def __init__(self, report, counter, bnorms):
        self.report = report
        self.counter = counter
        self.start = counter.matvecs
        self.t0 = time.perf_counter()
        self.bnorms = bnorms

    def __call__(self, R):
        self.report.trace.append(np.linalg.norm(R, axis=0))
        self.report.matvec_trace.append(self.counter.matvecs - self.start)
        self.report.seconds.append(time.perf_counter() - self.t0)

    def audit(self, fam, X, R):
        explicit = fam.B - _apply_shifted(fam.A, fam.shifts, X)
        denom = np.where(self.bnorms > 0, self.bnorms, 1.0)
        self.report.audit.append(float(np.max(np.linalg.norm(explicit - R, axis=0) / denom)))

    def finish(self, X, tol, residual_mode):
        self.report.X = X
        self.report.matvecs = self.counter.matvecs - self.start
        self.report.converged = bool(
            converged_mask(self.report.trace[-1], self.bnorms, tol, residual_mode).all())
        return self.report


def solve_shifted_family(fam: ShiftedFamily, j: int = 20, tol: float = 1e-8,
                         max_cycles: int = 500, method: str = "sbgmres",
                         seed: int = 0, reorth: bool = False,
                         residual_mode: str = "relative",
                         counter: OpCounter | None = None,
                         audit: bool = False) -> SolveReport:
    """Restarted sbFOM(j) or sbGMRES(j) on a shifted family.

    Iterates until every shift satisfies ``||r_i|| / ||b_i|| <= tol`` (or
    ``||r_i|| <= tol`` with ``residual_mode="absolute"``) or ``max_cycles``
    cycles have run.  The residual block is checked for rank deficiency
    before every cycle and re-randomized when needed; the cycle indices at
    which that happened are listed in ``report.decollinearized``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    method = method.lower()
    cycle = {"sbfom": sbfom_cycle, "sbgmres": sbgmres_cycle}.get(method)
    if cycle is None:
        raise ValueError(f"method must be 'sbfom' or 'sbgmres', got {method!r}")
    counter = OpCounter() if counter is None else counter
    A, shifts = fam.A, fam.shifts
    anorm = sparse_fro_norm(A)
    bnorms = np.linalg.norm(fam.B, axis=0)
    report = SolveReport(X=fam.X0.copy(), shifts=shifts.copy(), method=method)
    rec = _Recorder(report, counter, bnorms)

    X = fam.X0.copy()
    R = initial_residuals(fam, counter)
    rec(R)
    while not converged_mask(report.trace[-1], bnorms, tol, residual_mode).all():
        if report.cycles >= max_cycles:
            break
        if is_rank_deficient(R):
            delta, R = decollinearize(A, shifts, R, seed + report.cycles,
                                      scale=restart_scale(fam, R, report.cycles),
                                      counter=counter)
            X = X + delta
            report.decollinearized.append(report.cycles)
        fact = block_arnoldi(A, R, j, counter, reorth=reorth, anorm=anorm)
        Y = cycle(fact, shifts)
        dX, R = shifted_update(fact, shifts, Y, R)
        X = X + dX
        report.cycles += 1
        rec(R)
        if audit:
            rec.audit(fam, X, R)
    return rec.finish(X, tol, residual_mode)
