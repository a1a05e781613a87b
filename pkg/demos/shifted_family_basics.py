# One shifted family, three ways: a scalar solve per shift, then sbGMRES
# over a shared block Krylov space, then the recycled variant.

import numpy as np
import scipy.sparse

from rsbkrylov import (ShiftedFamily, poisson2d, random_block, solve_recycled_family,
                       solve_restarted, solve_shifted_family)

A = poisson2d(40)          # 1600 x 1600, eigenvalues in (0, 8)
shifts = [0.0, 0.5, 1.0]
B = random_block(A.shape[0], len(shifts), seed=0)

# scalar GMRES(20), shift by shift
total = 0
for i, sigma in enumerate(shifts):
    As = A + sigma * scipy.sparse.identity(A.shape[0])
    rep = solve_restarted(As, B[:, i], m=20, method="gmres")
    total += rep.matvecs
    print(f"GMRES  shift {sigma:4}: {rep.cycles:3d} cycles, {rep.matvecs} mat-vecs")
print("GMRES total mat-vecs:", total)

fam = ShiftedFamily(A, shifts, B)

# sbGMRES: one block mat-vec serves every shift
rep = solve_shifted_family(fam, j=20, method="sbgmres")
print(f"sbGMRES: {rep.cycles} cycles, {rep.matvecs} block mat-vecs, converged={rep.converged}")

# final residuals, recomputed from scratch
R = B - (A @ rep.X + rep.X * np.asarray(shifts)[None, :])
print("relative residuals:", np.linalg.norm(R, axis=0) / np.linalg.norm(B, axis=0))

# ursbGMRES builds a recycle space of dimension k as it goes
rep, basis = solve_recycled_family(fam, None, j=20, k=10, method="ursbgmres")
print(f"ursbGMRES (cold): {rep.cycles} cycles, recycle space {basis.U.shape}")
rep, _ = solve_recycled_family(fam, basis, j=20, k=10, method="ursbgmres")
print(f"ursbGMRES (warm): {rep.cycles} cycles")
