from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .linalg import DTYPE, OpCounter, as_block, sparse_fro_norm

__all__ = ["RecycleBasis"]


@dataclass(frozen=True)
class RecycleBasis:
    """Augmentation basis ``U`` together with ``C = A U`` for the current matrix.

    Neither ``U`` nor ``C`` is assumed to have orthonormal columns.
    """

    U: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        U, C = as_block(self.U), as_block(self.C)
        if U.shape != C.shape:
            raise ValueError(f"U {U.shape} and C {C.shape} must have the same shape")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "C", C)

    @classmethod
    def empty(cls, n: int) -> "RecycleBasis":
        z = np.zeros((n, 0), dtype=DTYPE)
        return cls(z, z.copy())

    @classmethod
    def from_u(cls, A, U, counter: OpCounter | None = None) -> "RecycleBasis":
        """Build ``(U, A U)``; the product is tallied as ``k`` refresh products."""
        U = as_block(U)
        if counter is not None:
            counter.refresh += U.shape[1]
        return cls(U, np.asarray(A @ U, dtype=DTYPE))

    @property
    def k(self) -> int:
        return self.U.shape[1]

    @property
    def n(self) -> int:
        return self.U.shape[0]

    def refresh(self, A, counter: OpCounter | None = None) -> "RecycleBasis":
        """Recompute ``C`` for a new matrix, keeping ``U``."""
        if self.k == 0:
            return self
        return RecycleBasis.from_u(A, self.U, counter)

    def with_orthonormal_c(self) -> "RecycleBasis":
        """Equivalent basis with orthonormal ``C`` (``U`` transformed to keep ``C = A U``)."""
        if self.k == 0:
            return self
        Q, Rc = scipy.linalg.qr(self.C, mode="economic")
        U = scipy.linalg.solve_triangular(Rc.T, self.U.T, lower=True).T
        return RecycleBasis(U, Q)

    def relation_error(self, A) -> float:
        """``||A U - C||_F / (||A||_F ||U||_F)``."""
        if self.k == 0:
            return 0.0
        num = np.linalg.norm(A @ self.U - self.C)
        den = sparse_fro_norm(A) * np.linalg.norm(self.U)
        return float(num / den) if den else float(num)

    def independence(self) -> float:
        """Smallest singular value of ``U`` relative to ``||U||_F``."""
        if self.k == 0:
            return 1.0
        sv = np.linalg.svd(self.U, compute_uv=False)
        return float(sv[-1] / np.linalg.norm(self.U))
