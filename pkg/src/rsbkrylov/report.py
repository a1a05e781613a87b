from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["SolveReport", "converged_mask"]


@dataclass
class SolveReport:
    """Outcome of one restarted solve.

    ``trace[c]`` holds the per-shift residual 2-norms after ``c`` cycles
    (``trace[0]`` is the initial residual), so ``len(trace) == cycles + 1``.
    ``matvec_trace`` and ``seconds`` are aligned with ``trace`` and hold the
    cumulative MAT-VEC count and elapsed wall time at each entry.  With
    auditing on, ``audit`` holds the per-cycle gap between recursive and
    explicit residuals and ``orthogonality`` (recycled solvers) the
    per-cycle worst residual-constraint inner product, both relative.
    """

    X: np.ndarray
    shifts: np.ndarray
    method: str
    trace: list = field(default_factory=list)
    matvec_trace: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    matvecs: int = 0
    cycles: int = 0
    converged: bool = False
    projections: int = 0
    refresh_products: int = 0
    decollinearized: list = field(default_factory=list)
    audit: list = field(default_factory=list)
    orthogonality: list = field(default_factory=list)
    breakdown_info: str | None = None

    @property
    def residual_norms(self) -> np.ndarray:
        return np.asarray(self.trace[-1])

    def as_array(self) -> np.ndarray:
        """Trace as a ``(cycles + 1, s)`` real array."""
        return np.asarray(self.trace, dtype=float)


def converged_mask(resnorms, bnorms, tol, residual_mode="relative") -> np.ndarray:
    resnorms = np.asarray(resnorms, dtype=float)
    if residual_mode == "absolute":
        return resnorms <= tol
    if residual_mode != "relative":
        raise ValueError(f"unknown residual mode {residual_mode!r}")
    denom = np.where(np.asarray(bnorms) > 0, bnorms, 1.0)
    return resnorms / denom <= tol
