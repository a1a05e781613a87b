# Harmonic Ritz extraction picks the k directions with the largest
# |mu| = 1/|theta|, i.e. the eigenvalues of A + sigma I nearest zero.
# On a diagonal matrix the answer is known in closed form.

import numpy as np

from rsbkrylov import block_arnoldi, harmonic_ritz_update
from rsbkrylov.linalg import as_sparse

lam = np.linspace(0.05, 4.0, 200)
A = as_sparse(np.diag(lam))
rng = np.random.default_rng(0)
R = rng.standard_normal((200, 2)) + 1j * rng.standard_normal((200, 2))

basis = None
for cycle in range(30):
    fact = block_arnoldi(A, R, 10)
    basis, mu = harmonic_ritz_update(fact, basis, 0.0, 4)
    # smallest harmonic Ritz values, against the smallest eigenvalues
    if cycle % 5 == 4:
        print(cycle, (1 / np.abs(mu[:4])).round(5), lam[:4].round(5))
    R = rng.standard_normal((200, 2)) + 1j * rng.standard_normal((200, 2))

# the recycled space U spans (nearly) the leading eigenvectors
U, _ = np.linalg.qr(basis.U)
print("sin of largest angle to e_1..e_4:", np.linalg.norm(U[4:, :], 2))
