"""Recycled shifted block Krylov solvers for families of shifted sparse systems.

Solves ``(A + sigma_i I) x_i = b_i`` for several shifts at once over a
shared block Krylov subspace (sbFOM / sbGMRES), optionally augmented with a
recycled subspace carried across a sequence of slowly changing matrices
(unprojected rsbFOM / rsbGMRES with shift-dependent harmonic Ritz
extraction).
"""
from .arnoldi import ArnoldiFactorization, arnoldi_cycle, fom_step, gmres_step, solve_restarted
from .basis import RecycleBasis
from .block import BlockArnoldiFactorization, block_arnoldi, block_fom_step, block_gmres_step
from .harmonic_ritz import AugmentedPencil, harmonic_ritz_update
from .linalg import (
    BreakdownError,
    NotPositiveDefiniteError,
    OpCounter,
    SingularMatrixError,
    gen_eig,
    least_squares,
    reduced_qr,
    solve_dense,
    spmv_block,
)
from .problems import (
    SequenceSpec,
    build_sequence,
    perturb,
    poisson2d,
    random_block,
    read_matrix_market,
    write_matrix_market,
)
from .recycling import (
    ProjectorKind,
    SequenceError,
    apply_projector,
    constraint_residual,
    solve_recycled_family,
    solve_sequence,
    ursbfom_cycle,
    ursbgmres_cycle,
)
from .report import SolveReport
from .shifted import (
    ShiftedFamily,
    decollinearize,
    initial_residuals,
    sbfom_cycle,
    sbgmres_cycle,
    solve_shifted_family,
)

__version__ = "0.1.0"

__all__ = [
    "ArnoldiFactorization", "arnoldi_cycle", "fom_step", "gmres_step", "solve_restarted",
    "RecycleBasis",
    "BlockArnoldiFactorization", "block_arnoldi", "block_fom_step", "block_gmres_step",
    "AugmentedPencil", "harmonic_ritz_update",
    "BreakdownError", "NotPositiveDefiniteError", "OpCounter", "SingularMatrixError",
    "gen_eig", "least_squares", "reduced_qr", "solve_dense", "spmv_block",
    "SequenceSpec", "build_sequence", "perturb", "poisson2d", "random_block",
    "read_matrix_market", "write_matrix_market",
    "ProjectorKind", "SequenceError", "apply_projector", "constraint_residual", "solve_recycled_family",
    "solve_sequence", "ursbfom_cycle", "ursbgmres_cycle",
    "SolveReport",
    "ShiftedFamily", "decollinearize", "initial_residuals", "sbfom_cycle", "sbgmres_cycle",
    "solve_shifted_family",
]
