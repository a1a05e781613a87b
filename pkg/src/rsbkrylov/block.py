"""Block Arnoldi with modified block Gram-Schmidt, and block FOM/GMRES steps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    DTYPE,
    BreakdownError,
    OpCounter,
    as_block,
    least_squares,
    reduced_qr,
    solve_dense,
    sparse_fro_norm,
    spmv_block,
)

__all__ = [
    "BlockArnoldiFactorization",
    "block_arnoldi",
    "block_fom_step",
    "block_gmres_step",
    "padded_identity",
]

LUCKY_TOL = 1e-13


def padded_identity(j: int, s: int) -> np.ndarray:
    """The ``js x js`` identity with ``s`` zero rows appended."""
    return np.eye((j + 1) * s, j * s, dtype=DTYPE)


@dataclass(frozen=True)
class BlockArnoldiFactorization:
    """``A W[:, :js] = W Hbar`` after ``j`` block steps of width ``s``.

    ``S0`` is the triangular factor of the starting block, ``R = V_1 S0``.
    After a lucky breakdown (the whole new block vanished) the trailing
    block of ``W`` is zero and so is the last block row of ``Hbar``.
    """

    W: np.ndarray
    Hbar: np.ndarray
    S0: np.ndarray
    s: int
    j: int
    breakdown: bool = False

    @property
    def js(self) -> int:
        return self.j * self.s

    @property
    def Wj(self) -> np.ndarray:
        return self.W[:, : self.js]

    @property
    def H(self) -> np.ndarray:
        return self.Hbar[: self.js, :]

    @property
    def Ibar(self) -> np.ndarray:
        return padded_identity(self.j, self.s)

    def shifted_hbar(self, sigma) -> np.ndarray:
        """``Hbar + sigma * Ibar``."""
        Hs = self.Hbar.copy()
        idx = np.arange(self.js)
        Hs[idx, idx] += sigma
        return Hs

    def E(self, blocks: int) -> np.ndarray:
        """``E S0``: ``S0`` stacked on top of zeros, ``blocks * s`` rows."""
        out = np.zeros((blocks * self.s, self.s), dtype=DTYPE)
        out[: self.s] = self.S0
        return out


def block_arnoldi(A, R, m: int, counter: OpCounter | None = None,
                  reorth: bool = False, anorm: float | None = None) -> BlockArnoldiFactorization:
    """Run ``m`` steps of block Arnoldi on the starting block ``R``.

    Each step costs one block MAT-VEC.  The starting block must have full
    column rank; a partially rank-deficient intermediate block raises
    :class:`~rsbkrylov.linalg.BreakdownError` with the step index attached,
    while a block that vanishes entirely (norm below ``1e-13 ||A||_F``) ends
    the factorization early as a lucky breakdown.
    """
    if m < 1:
        raise ValueError("cycle length m must be >= 1")
    R = as_block(R)
    n, s = R.shape
    if anorm is None:
        anorm = sparse_fro_norm(A)
    # column scaling leaves the block Krylov space unchanged; it keeps a
    # nearly converged (small) residual column from reading as rank loss
    cn = np.linalg.norm(R, axis=0)
    if np.any(cn == 0):
        c = int(np.flatnonzero(cn == 0)[0])
        raise BreakdownError(f"starting block has a zero column ({c + 1})", column=c, step=0)
    try:
        V1, S0 = reduced_qr(R / cn[None, :])
        S0 = S0 * cn[None, :]
    except BreakdownError as exc:
        raise BreakdownError(
            f"starting block is rank deficient: {exc}", column=exc.column, step=0
        ) from exc

    W = np.zeros((n, (m + 1) * s), dtype=DTYPE)
    Hbar = np.zeros(((m + 1) * s, m * s), dtype=DTYPE)
    W[:, :s] = V1
    for j in range(m):
        cj = slice(j * s, (j + 1) * s)
        Wb = spmv_block(A, W[:, cj], counter)
        for _ in range(2 if reorth else 1):
            for i in range(j + 1):
                ci = slice(i * s, (i + 1) * s)
                Hij = W[:, ci].conj().T @ Wb
                Hbar[ci, cj] += Hij
                Wb = Wb - W[:, ci] @ Hij
        nxt = slice((j + 1) * s, (j + 2) * s)
        if np.linalg.norm(Wb) < LUCKY_TOL * anorm:
            k = j + 1
            return BlockArnoldiFactorization(
                W[:, : (k + 1) * s], Hbar[: (k + 1) * s, : k * s], S0, s, k, True
            )
        try:
            Q, Hn = reduced_qr(Wb)
        except BreakdownError as exc:
            raise BreakdownError(
                f"block Arnoldi breakdown at step {j + 1}: {exc}",
                column=exc.column,
                step=j + 1,
            ) from exc
        W[:, nxt] = Q
        Hbar[nxt, cj] = Hn
    return BlockArnoldiFactorization(W, Hbar, S0, s, m, False)


def block_fom_step(fact: BlockArnoldiFactorization) -> np.ndarray:
    """Solve ``H_j Y = E_j S0``."""
    return solve_dense(fact.H, fact.E(fact.j), context="block FOM Hessenberg system")


def block_gmres_step(fact: BlockArnoldiFactorization) -> np.ndarray:
    """Column-wise minimizer of ``||E_{j+1} S0 - Hbar Z||``."""
    return least_squares(fact.Hbar, fact.E(fact.j + 1), context="block GMRES least squares")
