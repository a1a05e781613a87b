"""Unprojected recycled shifted block FOM and GMRES.

The block Krylov subspace is built from the unshifted matrix and the
current residual block, exactly as for sbFOM/sbGMRES.  The augmentation
space ``range(U)`` (with ``C = A U``) enters only through the
shift-dependent projector

    FOM:   Phi_i = (C + s_i U) (U^H C + s_i U^H U)^{-1} U^H
    GMRES: Phi_i = (C + s_i U) ((C + s_i U)^H (C + s_i U))^{-1} (C + s_i U)^H

which is folded into the small per-shift problem after the Arnoldi cycle.
Nothing of size ``n x n`` is ever formed: each cycle precomputes the
handful of ``k x (j+1)s`` and ``js x k`` products the projectors need and
reuses them for every shift; only a ``k x k`` matrix is shift dependent.
"""
from __future__ import annotations

import enum

import numpy as np

from .basis import RecycleBasis
from .block import BlockArnoldiFactorization, block_arnoldi
from .harmonic_ritz import harmonic_ritz_update
from .linalg import (
    DTYPE,
    OpCounter,
    as_block,
    factor_dense,
    solve_dense,
    sparse_fro_norm,
)
from .report import SolveReport, converged_mask
from .shifted import (
    ShiftedFamily,
    _Recorder,
    decollinearize,
    restart_scale,
    initial_residuals,
    is_rank_deficient,
    sbfom_cycle,
    sbgmres_cycle,
    shifted_update,
    solve_shifted_family,
)

__all__ = [
    "ProjectorKind",
    "SequenceError",
    "apply_projector",
    "ursbfom_cycle",
    "ursbgmres_cycle",
    "constraint_residual",
    "solve_recycled_family",
    "solve_sequence",
]


class ProjectorKind(enum.Enum):
    FOM = "fom"
    GMRES = "gmres"


class SequenceError(RuntimeError):
    """A family in a sequence failed; ``reports`` holds the finished ones."""

    def __init__(self, message, reports, family):
        super().__init__(message)
        self.reports = reports
        self.family = family


def _inner_matrix(basis: RecycleBasis, kind: ProjectorKind, sigma):
    U, C = basis.U, basis.C
    if kind is ProjectorKind.FOM:
        return U.conj().T @ C + sigma * (U.conj().T @ U), U
    P = C + sigma * U
    return P.conj().T @ P, P


def apply_projector(basis: RecycleBasis, kind: ProjectorKind, sigma, V,
                    counter: OpCounter | None = None):
    """Apply ``Phi(sigma)`` to the block ``V`` without forming it.

    Returns
    -------
    PhiV : ndarray
        ``Phi V``, same shape as ``V``.
    coeff : (k, s) ndarray
        Solution of the inner ``k x k`` system; ``U @ coeff`` is the
        augmentation-space correction matching ``PhiV``.
    """
    kind = ProjectorKind(kind)
    V = as_block(V)
    if basis.k == 0:
        return np.zeros_like(V), np.zeros((0, V.shape[1]), dtype=DTYPE)
    K, left = _inner_matrix(basis, kind, sigma)
    coeff = solve_dense(K, left.conj().T @ V,
                        context=f"{kind.value} projector inner matrix, sigma={complex(sigma)}")
    if counter is not None:
        counter.projections += 1
    return (basis.C + sigma * basis.U) @ coeff, coeff


def _check_basis(basis, n):
    if basis is None:
        return RecycleBasis.empty(n)
    if basis.n != n:
        raise ValueError(f"recycle basis has {basis.n} rows, system has {n}")
    return basis


def ursbfom_cycle(fact: BlockArnoldiFactorization, basis: RecycleBasis, shifts, R0,
                  counter: OpCounter | None = None):
    """Per-shift small solves and updates of one unprojected rsbFOM cycle.

    Returns ``(Y, dX, R_new)``: the ``js x s`` Krylov coefficients, the
    iterate update ``W_j y_i + U z_i`` and the new residual block.
    """
    shifts = np.atleast_1d(np.asarray(shifts, dtype=DTYPE))
    R0 = as_block(R0)
    basis = _check_basis(basis, R0.shape[0])
    if basis.k == 0:
        Y = sbfom_cycle(fact, shifts)
        return (Y, *shifted_update(fact, shifts, Y, R0))

    U, C, W, Wj, js = basis.U, basis.C, fact.W, fact.Wj, fact.js
    UhU = U.conj().T @ U
    UhC = U.conj().T @ C
    UhW = U.conj().T @ W
    WjhU = UhW[:, :js].conj().T
    WjhC = Wj.conj().T @ C
    UhR = U.conj().T @ R0
    rhs0 = fact.E(fact.j)

    s = shifts.size
    Y = np.empty((js, s), dtype=DTYPE)
    dX = np.empty_like(R0)
    R_new = np.empty_like(R0)
    for i, sigma in enumerate(shifts):
        Hs = fact.shifted_hbar(sigma)
        Kf = factor_dense(UhC + sigma * UhU, context=f"U^H(C + sigma U), shift index {i}")
        left = WjhC + sigma * WjhU
        UhWHs = UhW @ Hs
        sol = Kf.solve(np.column_stack([UhWHs, UhR[:, i]]))
        M = Hs[:js] - left @ sol[:, :js]
        g = rhs0[:, i] - left @ sol[:, js]
        y = solve_dense(M, g, context=f"rsbFOM projected system, shift index {i}")
        svec = R0[:, i] - W @ (Hs @ y)
        z = Kf.solve(UhR[:, i] - UhWHs @ y)
        Y[:, i] = y
        dX[:, i] = Wj @ y + U @ z
        R_new[:, i] = svec - (C + sigma * U) @ z
        if counter is not None:
            counter.projections += 4
    return Y, dX, R_new


def ursbgmres_cycle(fact: BlockArnoldiFactorization, basis: RecycleBasis, shifts, R0,
                    counter: OpCounter | None = None, c_orthonormal: bool = False):
    """Per-shift small solves and updates of one unprojected rsbGMRES cycle.

    ``c_orthonormal`` declares that ``C^H C = I`` so the Gram matrix of
    ``C`` is not recomputed.
    """
    shifts = np.atleast_1d(np.asarray(shifts, dtype=DTYPE))
    R0 = as_block(R0)
    basis = _check_basis(basis, R0.shape[0])
    if basis.k == 0:
        Y = sbgmres_cycle(fact, shifts)
        return (Y, *shifted_update(fact, shifts, Y, R0))

    U, C, W, Wj, js, k = basis.U, basis.C, fact.W, fact.Wj, fact.js, basis.k
    UhU = U.conj().T @ U
    UhC = U.conj().T @ C
    ChC = np.eye(k, dtype=DTYPE) if c_orthonormal else C.conj().T @ C
    UhW = U.conj().T @ W
    ChW = C.conj().T @ W
    UhR = U.conj().T @ R0
    ChR = C.conj().T @ R0
    rhs0 = fact.E(fact.j + 1)

    s = shifts.size
    Y = np.empty((js, s), dtype=DTYPE)
    dX = np.empty_like(R0)
    R_new = np.empty_like(R0)
    for i, sigma in enumerate(shifts):
        sc = np.conj(sigma)
        Hs = fact.shifted_hbar(sigma)
        K = ChC + sigma * UhC.conj().T + sc * UhC + abs(sigma) ** 2 * UhU
        Kf = factor_dense(K, context=f"(C + sigma U)^H (C + sigma U), shift index {i}")
        PhZ = (ChW + sc * UhW) @ Hs
        Phr = ChR[:, i] + sc * UhR[:, i]
        sol = Kf.solve(np.column_stack([PhZ, Phr]))
        HsH = Hs.conj().T
        M = HsH @ Hs - PhZ.conj().T @ sol[:, :js]
        g = HsH @ rhs0[:, i] - PhZ.conj().T @ sol[:, js]
        y = solve_dense(M, g, context=f"rsbGMRES projected system, shift index {i}")
        svec = R0[:, i] - W @ (Hs @ y)
        z = Kf.solve(Phr - PhZ @ y)
        Y[:, i] = y
        dX[:, i] = Wj @ y + U @ z
        R_new[:, i] = svec - (C + sigma * U) @ z
        if counter is not None:
            counter.projections += 4
    return Y, dX, R_new


def constraint_residual(fact: BlockArnoldiFactorization, basis: RecycleBasis, kind,
                        shifts, R0, R_new) -> float:
    """Worst relative violation of the residual constraint over all shifts.

    FOM: ``||[U W_j]^H r|| / ||r0||``.  GMRES:
    ``||[(C + sigma U)  (A + sigma I) W_j]^H r|| / (||r0|| ||Z||_2)`` with
    ``Z`` that constraint basis, using ``(A + sigma I) W_j = W (Hbar + sigma Ibar)``.
    """
    kind = ProjectorKind(kind)
    shifts = np.atleast_1d(np.asarray(shifts, dtype=DTYPE))
    worst = 0.0
    for i, sigma in enumerate(shifts):
        r0n = np.linalg.norm(R0[:, i])
        if r0n == 0:
            continue
        if kind is ProjectorKind.FOM:
            Z = np.hstack([basis.U, fact.Wj])
            val = np.linalg.norm(Z.conj().T @ R_new[:, i]) / r0n
        else:
            Z = np.hstack([basis.C + sigma * basis.U, fact.W @ fact.shifted_hbar(sigma)])
            val = np.linalg.norm(Z.conj().T @ R_new[:, i]) / (r0n * np.linalg.norm(Z, 2))
        worst = max(worst, float(val))
    return worst


_METHODS = {"ursbfom": ProjectorKind.FOM, "ursbgmres": ProjectorKind.GMRES}


def _ritz_shift(shifts, ritz_shift_index, cycle):
    if ritz_shift_index == "cycle":
        return shifts[cycle % shifts.size]
    return shifts[int(ritz_shift_index)]


def solve_recycled_family(fam: ShiftedFamily, basis: RecycleBasis | None = None,
                          j: int = 20, k: int = 10, tol: float = 1e-8,
                          max_cycles: int = 500, method: str = "ursbgmres",
                          ritz_shift_index=0, ritz_every_cycle: bool = True,
                          orthonormal_c: bool = False, reorth: bool = True,
                          seed: int = 0, residual_mode: str = "relative",
                          counter: OpCounter | None = None, audit: bool = False):
    """Restarted unprojected rsbFOM(j) / rsbGMRES(j) with harmonic Ritz recycling.

    Parameters
    ----------
    fam : ShiftedFamily
    basis : RecycleBasis, optional
        Augmentation basis with ``C = fam.A @ U``.  Without one the first
        cycle runs as plain sbFOM/sbGMRES and a basis is extracted from it.
    j, k : int
        Block Arnoldi cycle length and recycle dimension (``k = 0`` turns
        recycling off entirely).
    ritz_shift_index : int or "cycle"
        Shift whose harmonic Ritz vectors are recycled; ``"cycle"`` rotates
        through the shifts from one cycle to the next.
    ritz_every_cycle : bool
        Refresh the basis after every cycle, or only once the solve ends.
    orthonormal_c : bool
        GMRES variant only: keep ``C`` orthonormal so ``C^H C`` is skipped.

    Returns
    -------
    report : SolveReport
    basis : RecycleBasis
        Basis to carry over to the next system (still paired with ``fam.A``).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if k < 0:
        raise ValueError("k must be >= 0")
    kind = _METHODS.get(method.lower())
    if kind is None:
        raise ValueError(f"method must be one of {sorted(_METHODS)}, got {method!r}")
    counter = OpCounter() if counter is None else counter
    A, shifts = fam.A, fam.shifts
    basis = _check_basis(basis, fam.n)
    anorm = sparse_fro_norm(A)
    bnorms = np.linalg.norm(fam.B, axis=0)
    report = SolveReport(X=fam.X0.copy(), shifts=shifts.copy(), method=method.lower())
    proj0, refresh0 = counter.projections, counter.refresh
    rec = _Recorder(report, counter, bnorms)

    X = fam.X0.copy()
    R = initial_residuals(fam, counter)
    rec(R)
    done = converged_mask(report.trace[-1], bnorms, tol, residual_mode).all()
    while not done and report.cycles < max_cycles:
        if is_rank_deficient(R):
            delta, R = decollinearize(A, shifts, R, seed + report.cycles,
                                      scale=restart_scale(fam, R, report.cycles),
                                      counter=counter)
            X = X + delta
            report.decollinearized.append(report.cycles)
        fact = block_arnoldi(A, R, j, counter, reorth=reorth, anorm=anorm)
        R0 = R
        if kind is ProjectorKind.FOM:
            _, dX, R = ursbfom_cycle(fact, basis, shifts, R, counter)
        else:
            if orthonormal_c:
                basis = basis.with_orthonormal_c()
            _, dX, R = ursbgmres_cycle(fact, basis, shifts, R, counter,
                                       c_orthonormal=orthonormal_c)
        X = X + dX
        report.cycles += 1
        rec(R)
        if audit:
            rec.audit(fam, X, R)
            report.orthogonality.append(
                constraint_residual(fact, basis, kind, shifts, R0, R))
        done = converged_mask(report.trace[-1], bnorms, tol, residual_mode).all()
        last = done or report.cycles >= max_cycles
        if k > 0 and (ritz_every_cycle or last):
            sigma = _ritz_shift(shifts, ritz_shift_index, report.cycles - 1)
            basis, _ = harmonic_ritz_update(fact, basis, sigma, min(k, basis.k + fact.js))
    report.projections = counter.projections - proj0
    report.refresh_products = counter.refresh - refresh0
    return rec.finish(X, tol, residual_mode), basis


def solve_sequence(families, j: int = 20, k: int = 10, tol: float = 1e-8,
                   max_cycles: int = 500, method: str = "ursbgmres",
                   basis: RecycleBasis | None = None, seed: int = 0,
                   return_basis: bool = False, **options):
    """Solve shifted families in order, carrying the recycle space forward.

    Before each family the stored ``U`` is paired with the new matrix by
    recomputing ``C = A U``; those ``k`` single-column products appear in
    ``report.refresh_products``, not in ``report.matvecs``.  ``sbfom`` and
    ``sbgmres`` are accepted too and solve each family independently.

    A failure aborts the sequence with :class:`SequenceError`, whose
    ``reports`` attribute holds the families already solved.
    """
    families = list(families)
    if not families:
        return ([], basis) if return_basis else []
    n = families[0].n
    if any(f.n != n for f in families):
        raise ValueError("all families in a sequence must have the same dimension")
    method = method.lower()
    reports = []
    for ell, fam in enumerate(families):
        counter = OpCounter()
        try:
            if method in ("sbfom", "sbgmres"):
                opts = {key: v for key, v in options.items()
                        if key in ("reorth", "residual_mode", "audit")}
                rep = solve_shifted_family(fam, j=j, tol=tol, max_cycles=max_cycles,
                                           method=method, seed=seed + ell,
                                           counter=counter, **opts)
            else:
                if basis is not None and basis.k:
                    basis = basis.refresh(fam.A, counter)
                rep, basis = solve_recycled_family(
                    fam, basis, j=j, k=k, tol=tol, max_cycles=max_cycles, method=method,
                    seed=seed + ell, counter=counter, **options)
                rep.refresh_products = counter.refresh
        except Exception as exc:
            raise SequenceError(f"family {ell} failed: {exc}", reports, ell) from exc
        reports.append(rep)
    return (reports, basis) if return_basis else reports
