# A sequence of slowly changing matrices A_l = A + eps E_l, each with its
# own shifts and right-hand sides.  The recycle space found on one family
# is refreshed against the next matrix and reused.

import numpy as np

from rsbkrylov import SequenceSpec, build_sequence, solve_sequence

spec = SequenceSpec("poisson:40", count=5, eps=0.01, base_shifts=[0.0], s=4,
                    shift_increment=1e-4, seed=1)
families = build_sequence(spec)
for ell, fam in enumerate(families):
    print(ell, np.round(fam.shifts.real, 5))

rec = solve_sequence(families, j=15, k=5, method="ursbgmres")
base = solve_sequence(families, j=15, method="sbgmres")

print("family  ursbGMRES  sbGMRES   (solver mat-vecs, refresh products apart)")
for ell, (r, b) in enumerate(zip(rec, base)):
    print(f"{ell:6d}  {r.matvecs:9d}  {b.matvecs:7d}   refresh={r.refresh_products}")

# per-shift convergence curve of the last family, as stored in the report
tr = rec[-1].as_array()
print(tr / np.linalg.norm(families[-1].B, axis=0))
