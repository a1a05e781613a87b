"""Shift-dependent harmonic Ritz extraction over an augmented block Krylov space.

With ``Vhat = [U W_j]``, ``What = [C W_{j+1}]``,
``Gbar = blkdiag(I_k, Hbar + sigma Ibar)`` and ``M = [sigma U, 0]`` one has
``(A + sigma I) Vhat = What Gbar + M``.  Harmonic Ritz pairs of
``A + sigma I`` over ``range(Vhat)`` are the eigenpairs of the pencil

    (What Gbar + M)^H Vhat g = mu (What Gbar + M)^H (What Gbar + M) g,

where ``mu`` approximates an eigenvalue of ``(A + sigma I)^{-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .basis import RecycleBasis
from .block import BlockArnoldiFactorization
from .linalg import DTYPE, gen_eig, sparse_fro_norm

__all__ = ["AugmentedPencil", "harmonic_ritz_update"]


@dataclass(frozen=True)
class AugmentedPencil:
    Vhat: np.ndarray
    What: np.ndarray
    Gbar: np.ndarray
    M: np.ndarray
    sigma: complex
    k: int

    @classmethod
    def build(cls, fact: BlockArnoldiFactorization, basis: RecycleBasis | None, sigma):
        n = fact.W.shape[0]
        basis = RecycleBasis.empty(n) if basis is None else basis
        k = basis.k
        Vhat = np.hstack([basis.U, fact.Wj])
        What = np.hstack([basis.C, fact.W])
        Gbar = scipy.linalg.block_diag(np.eye(k, dtype=DTYPE), fact.shifted_hbar(sigma))
        M = np.zeros_like(Vhat)
        M[:, :k] = sigma * basis.U
        return cls(Vhat, What, Gbar.astype(DTYPE), M, complex(sigma), k)

    def relation_residual(self, A) -> float:
        """Relative residual of ``(A + sigma I) Vhat = What Gbar + M``."""
        lhs = A @ self.Vhat + self.sigma * self.Vhat
        rhs = self.What @ self.Gbar + self.M
        scale = (sparse_fro_norm(A) + abs(self.sigma)) * max(np.linalg.norm(self.Vhat), 1.0)
        return float(np.linalg.norm(lhs - rhs) / scale)

    def matrices(self):
        """Left and right pencil matrices, assembled from Gram products."""
        k, sigma = self.k, self.sigma
        Gww = self.What.conj().T @ self.What
        Gwv = self.What.conj().T @ self.Vhat
        U = self.Vhat[:, :k]
        # What^H M, M^H Vhat and M^H M only involve the U columns
        WhM = np.zeros_like(Gwv)
        WhM[:, :k] = sigma * Gwv[:, :k]
        UhV = U.conj().T @ self.Vhat
        MhV = np.zeros((self.Vhat.shape[1],) * 2, dtype=DTYPE)
        MhV[:k] = np.conj(sigma) * UhV
        MhM = np.zeros_like(MhV)
        MhM[:k, :k] = abs(sigma) ** 2 * UhV[:, :k]
        G = self.Gbar
        Gh = G.conj().T
        L = Gh @ Gwv + MhV
        R = Gh @ Gww @ G + Gh @ WhM + WhM.conj().T @ G + MhM
        return L, 0.5 * (R + R.conj().T)


def harmonic_ritz_update(fact: BlockArnoldiFactorization, basis: RecycleBasis | None,
                         sigma_target=0.0, k_new: int = 0):
    """Extract a new recycle basis from harmonic Ritz vectors for shift ``sigma_target``.

    The ``k_new`` pairs with largest ``|mu|`` (eigenvalues of ``A + sigma I``
    closest to the origin) are kept.  ``U_new = Vhat G`` and
    ``C_new = What blkdiag(I, Hbar) G`` so ``C_new = A U_new`` holds without
    any new MAT-VEC; columns are scaled to unit 2-norm.

    Returns
    -------
    basis_new : RecycleBasis
    mu : ndarray
        All harmonic Ritz values, sorted by decreasing ``|mu|``; the first
        ``k_new`` correspond to the columns of ``basis_new``.
    """
    pencil = AugmentedPencil.build(fact, basis, sigma_target)
    dim = pencil.Vhat.shape[1]
    if k_new < 0 or k_new > dim:
        raise ValueError(f"k_new={k_new} outside [0, {dim}]")
    L, R = pencil.matrices()
    mu, G = gen_eig(L, R)
    finite = np.isfinite(mu)
    if np.count_nonzero(finite) < k_new:
        raise ArithmeticError(
            f"only {np.count_nonzero(finite)} finite harmonic Ritz values, {k_new} requested")
    order = np.argsort(np.where(finite, -np.abs(mu), np.inf), kind="stable")
    mu, G = mu[order], G[:, order]
    Gk = G[:, :k_new]

    k = pencil.k
    Gbar0 = pencil.Gbar.copy()
    idx = np.arange(k, dim)
    Gbar0[idx, idx] -= pencil.sigma
    U_new = pencil.Vhat @ Gk
    C_new = pencil.What @ (Gbar0 @ Gk)
    scale = np.linalg.norm(U_new, axis=0)
    scale[scale == 0] = 1.0
    return RecycleBasis(U_new / scale, C_new / scale), mu
