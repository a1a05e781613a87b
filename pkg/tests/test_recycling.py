import numpy as np
import pytest
from hypothesis import given, strategies as st

from rsbkrylov import recycling
from rsbkrylov.basis import RecycleBasis
from rsbkrylov.block import block_arnoldi
from rsbkrylov.linalg import OpCounter, SingularMatrixError
from rsbkrylov.problems import SequenceSpec, build_sequence, poisson2d
from rsbkrylov.recycling import (
    ProjectorKind,
    SequenceError,
    apply_projector,
    constraint_residual,
    solve_recycled_family,
    solve_sequence,
    ursbfom_cycle,
    ursbgmres_cycle,
)
from rsbkrylov.shifted import (
    ShiftedFamily,
    sbfom_cycle,
    sbgmres_cycle,
    shifted_update,
    solve_shifted_family,
)

from conftest import crandn, random_sparse


def tiny_instance(seed, n=14, s=2, k=2, j=2):
    rng = np.random.default_rng(seed)
    A = random_sparse(n, 0.4, seed, shift=3.0)
    basis = RecycleBasis.from_u(A, crandn(rng, n, k))
    R0 = crandn(rng, n, s)
    shifts = np.array([0.0, 0.5 + 0.5j])[:s]
    fact = block_arnoldi(A, R0, j)
    return A, basis, shifts, R0, fact


def coupled_oracle(A, basis, fact, sigma, r0, kind):
    """Dense (k + js) system for (z, y) from the residual constraint."""
    As = A.toarray() + sigma * np.eye(A.shape[0])
    U, Wj = basis.U, fact.Wj
    if kind == "fom":
        Ut, Wt = U, Wj
    else:
        Ut, Wt = As @ U, As @ Wj
    K = np.block([[Ut.conj().T @ As @ U, Ut.conj().T @ As @ Wj],
                  [Wt.conj().T @ As @ U, Wt.conj().T @ As @ Wj]])
    rhs = np.concatenate([Ut.conj().T @ r0, Wt.conj().T @ r0])
    sol = np.linalg.solve(K, rhs)
    return sol[: basis.k], sol[basis.k:]


class TestProjector:
    @pytest.mark.parametrize("kind", list(ProjectorKind))
    def test_fixes_its_range(self, kind, rng):
        A = random_sparse(20, 0.3, 3, shift=2.0)
        basis = RecycleBasis.from_u(A, crandn(rng, 20, 3))
        sigma = 0.7 - 0.2j
        V = basis.C + sigma * basis.U
        PV, _ = apply_projector(basis, kind, sigma, V)
        np.testing.assert_allclose(PV, V, atol=1e-12 * np.linalg.norm(V))

    def test_fom_kernel(self, rng):
        A = random_sparse(20, 0.3, 4, shift=2.0)
        basis = RecycleBasis.from_u(A, crandn(rng, 20, 3))
        V = crandn(rng, 20, 2)
        Q, _ = np.linalg.qr(basis.U, mode="complete")
        V = Q[:, 3:] @ (Q[:, 3:].conj().T @ V)
        PV, _ = apply_projector(basis, ProjectorKind.FOM, 0.3, V)
        assert np.linalg.norm(PV) <= 1e-12 * np.linalg.norm(V)

    @pytest.mark.parametrize("kind", list(ProjectorKind))
    @given(seed=st.integers(0, 10_000), sigma=st.complex_numbers(max_magnitude=2))
    def test_idempotent(self, kind, seed, sigma):
        rng = np.random.default_rng(seed)
        A = random_sparse(25, 0.3, seed, shift=4.0)
        basis = RecycleBasis.from_u(A, crandn(rng, 25, 3))
        V = crandn(rng, 25, 2)
        P1, _ = apply_projector(basis, kind, sigma, V)
        P2, _ = apply_projector(basis, kind, sigma, P1)
        assert np.linalg.norm(P2 - P1) <= 1e-10 * max(np.linalg.norm(P1), 1e-300) + 1e-13

    def test_coefficients_reproduce_projection(self, rng):
        A = random_sparse(20, 0.3, 6, shift=2.0)
        basis = RecycleBasis.from_u(A, crandn(rng, 20, 2))
        V = crandn(rng, 20, 3)
        PV, coeff = apply_projector(basis, ProjectorKind.GMRES, 1.5, V)
        np.testing.assert_allclose((basis.C + 1.5 * basis.U) @ coeff, PV, atol=1e-12)

    def test_singular_inner_matrix_names_sigma(self):
        A = np.diag([1.0, 2.0, 3.0])
        basis = RecycleBasis.from_u(A, np.eye(3)[:, :1])
        with pytest.raises(SingularMatrixError, match="sigma"):
            apply_projector(basis, ProjectorKind.FOM, -1.0, np.ones((3, 1)))

    def test_counts_applications(self, rng):
        A = random_sparse(10, 0.4, 1, shift=2.0)
        basis = RecycleBasis.from_u(A, crandn(rng, 10, 2))
        c = OpCounter()
        apply_projector(basis, "gmres", 0.0, crandn(rng, 10, 1), c)
        assert c.projections == 1


class TestCycles:
    @pytest.mark.parametrize("seed", range(5))
    def test_fom_matches_coupled_system(self, seed):
        A, basis, shifts, R0, fact = tiny_instance(seed)
        Y, dX, R = ursbfom_cycle(fact, basis, shifts, R0)
        for i, sigma in enumerate(shifts):
            z, y = coupled_oracle(A, basis, fact, sigma, R0[:, i], "fom")
            np.testing.assert_allclose(Y[:, i], y, atol=1e-9 * max(1, np.linalg.norm(y)))
            np.testing.assert_allclose(dX[:, i], basis.U @ z + fact.Wj @ y, atol=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_gmres_matches_coupled_system(self, seed):
        A, basis, shifts, R0, fact = tiny_instance(seed)
        Y, dX, R = ursbgmres_cycle(fact, basis, shifts, R0)
        for i, sigma in enumerate(shifts):
            z, y = coupled_oracle(A, basis, fact, sigma, R0[:, i], "gmres")
            np.testing.assert_allclose(Y[:, i], y, atol=1e-9 * max(1, np.linalg.norm(y)))
            np.testing.assert_allclose(dX[:, i], basis.U @ z + fact.Wj @ y, atol=1e-9)

    @given(st.integers(0, 10_000))
    def test_fom_constraint_orthogonality(self, seed):
        A, basis, shifts, R0, fact = tiny_instance(seed, n=30, j=3)
        _, _, R = ursbfom_cycle(fact, basis, shifts, R0)
        for i in range(shifts.size):
            Z = np.hstack([basis.U, fact.Wj])
            assert np.linalg.norm(Z.conj().T @ R[:, i]) <= 1e-10 * np.linalg.norm(R0[:, i])

    @given(st.integers(0, 10_000))
    def test_gmres_constraint_orthogonality(self, seed):
        A, basis, shifts, R0, fact = tiny_instance(seed, n=30, j=3)
        _, _, R = ursbgmres_cycle(fact, basis, shifts, R0)
        assert constraint_residual(fact, basis, "gmres", shifts, R0, R) <= 1e-10
        for i, sigma in enumerate(shifts):
            As = A.toarray() + sigma * np.eye(30)
            Z = np.hstack([basis.C + sigma * basis.U, As @ fact.Wj])
            bound = 1e-10 * np.linalg.norm(R0[:, i]) * np.linalg.norm(Z, 2)
            assert np.linalg.norm(Z.conj().T @ R[:, i]) <= bound

    def test_gmres_minimality_by_sampling(self):
        A, basis, shifts, R0, fact = tiny_instance(11, n=12)
        _, _, R = ursbgmres_cycle(fact, basis, shifts, R0)
        rng = np.random.default_rng(0)
        for i, sigma in enumerate(shifts):
            As = A.toarray() + sigma * np.eye(12)
            best = np.linalg.norm(R[:, i])
            for _ in range(200):
                z = crandn(rng, basis.k)
                w = crandn(rng, fact.js)
                trial = R0[:, i] - As @ (basis.U @ z + fact.Wj @ w)
                assert best <= np.linalg.norm(trial) * (1 + 1e-12)

    def test_updates_are_consistent(self):
        A, basis, shifts, R0, fact = tiny_instance(3, n=20)
        for cycle in (ursbfom_cycle, ursbgmres_cycle):
            _, dX, R = cycle(fact, basis, shifts, R0)
            for i, sigma in enumerate(shifts):
                explicit = R0[:, i] - (A @ dX[:, i] + sigma * dX[:, i])
                np.testing.assert_allclose(R[:, i], explicit, atol=1e-11)

    @pytest.mark.parametrize("pair", [(ursbfom_cycle, sbfom_cycle),
                                      (ursbgmres_cycle, sbgmres_cycle)])
    def test_empty_basis_is_the_plain_cycle(self, pair):
        A, _, shifts, R0, fact = tiny_instance(5, n=20)
        Y, dX, R = pair[0](fact, RecycleBasis.empty(20), shifts, R0)
        Y2 = pair[1](fact, shifts)
        dX2, R2 = shifted_update(fact, shifts, Y2, R0)
        np.testing.assert_array_equal(Y, Y2)
        np.testing.assert_array_equal(dX, dX2)
        np.testing.assert_array_equal(R, R2)

    @pytest.mark.parametrize("cycle", [ursbfom_cycle, ursbgmres_cycle])
    def test_four_projector_applications_per_shift(self, cycle):
        _, basis, shifts, R0, fact = tiny_instance(2, n=20)
        c = OpCounter()
        cycle(fact, basis, shifts, R0, c)
        assert c.projections == 4 * shifts.size

    def test_orthonormal_c_mode_is_equivalent(self):
        A, basis, shifts, R0, fact = tiny_instance(8, n=20)
        a = ursbgmres_cycle(fact, basis, shifts, R0)
        b = ursbgmres_cycle(fact, basis.with_orthonormal_c(), shifts, R0, c_orthonormal=True)
        np.testing.assert_allclose(a[1], b[1], atol=1e-10)
        np.testing.assert_allclose(a[2], b[2], atol=1e-10)


def poisson_family(nx=20, shifts=(0.0, 1.0, 2.0), seed=1):
    return build_sequence(SequenceSpec(f"poisson:{nx}", base_shifts=list(shifts), seed=seed))[0]


class TestSolveRecycledFamily:
    @pytest.mark.parametrize("method,base", [("ursbfom", "sbfom"), ("ursbgmres", "sbgmres")])
    def test_k_zero_reproduces_shifted_solver(self, method, base):
        fam = poisson_family()
        rep, basis = solve_recycled_family(fam, None, j=10, k=0, method=method, reorth=False)
        ref = solve_shifted_family(fam, j=10, method=base, reorth=False)
        assert basis.k == 0 and rep.cycles == ref.cycles
        np.testing.assert_allclose(rep.as_array(), ref.as_array(), rtol=1e-13, atol=0)

    @pytest.mark.parametrize("method", ["ursbfom", "ursbgmres"])
    def test_audits_hold_every_cycle(self, method):
        fam = poisson_family()
        rep, basis = solve_recycled_family(fam, None, j=8, k=4, method=method, audit=True)
        rep2, _ = solve_recycled_family(fam, basis, j=8, k=4, method=method, audit=True)
        for r in (rep, rep2):
            assert r.converged
            assert max(r.audit) <= 1e-9
            assert max(r.orthogonality) <= 1e-10
        # the cold start runs its first cycle without a recycle space
        assert rep.projections == 4 * fam.s * (rep.cycles - 1)
        assert rep2.projections == 4 * fam.s * rep2.cycles
        assert basis.relation_error(fam.A) <= 1e-12

    def test_warm_start_helps(self):
        fam = poisson_family(shifts=(0.0, 0.5, 1.0))
        cold, basis = solve_recycled_family(fam, None, j=10, k=8, method="ursbgmres")
        warm, _ = solve_recycled_family(fam, basis, j=10, k=8, method="ursbgmres")
        base = solve_shifted_family(fam, j=10, method="sbgmres")
        assert warm.cycles <= cold.cycles <= base.cycles

    def test_exact_initial_guess(self, rng):
        A = poisson2d(6)
        X = crandn(rng, 36, 2)
        B = np.column_stack([A @ X[:, 0], A @ X[:, 1] + X[:, 1]])
        basis = RecycleBasis.from_u(A, crandn(rng, 36, 2))
        rep, out = solve_recycled_family(ShiftedFamily(A, [0, 1], B, X), basis, k=2)
        assert rep.cycles == 0 and rep.converged and out is basis

    @pytest.mark.parametrize("ritz", [1, "cycle"])
    def test_ritz_shift_choices(self, ritz):
        fam = poisson_family()
        rep, basis = solve_recycled_family(fam, None, j=8, k=4, ritz_shift_index=ritz)
        assert rep.converged and basis.k == 4

    def test_ritz_only_at_the_end(self):
        fam = poisson_family()
        rep, basis = solve_recycled_family(fam, None, j=8, k=4, ritz_every_cycle=False)
        # no basis during the solve, so it runs exactly like sbGMRES
        ref = solve_shifted_family(fam, j=8, method="sbgmres", reorth=True)
        assert rep.cycles == ref.cycles and basis.k == 4
        assert rep.projections == 0

    def test_orthonormal_c_flag(self):
        fam = poisson_family()
        _, basis = solve_recycled_family(fam, None, j=8, k=4)
        rep, out = solve_recycled_family(fam, basis, j=8, k=4, orthonormal_c=True, audit=True)
        assert rep.converged and max(rep.orthogonality) <= 1e-10

    def test_rejects_bad_arguments(self):
        fam = poisson_family(nx=4)
        with pytest.raises(ValueError):
            solve_recycled_family(fam, method="sbgmres")
        with pytest.raises(ValueError):
            solve_recycled_family(fam, k=-1)
        with pytest.raises(ValueError):
            solve_recycled_family(fam, RecycleBasis.empty(5))


class TestSolveSequence:
    def test_length_one_equals_single_solve(self):
        fam = poisson_family()
        (rep,) = solve_sequence([fam], j=8, k=4)
        ref, _ = solve_recycled_family(fam, None, j=8, k=4)
        np.testing.assert_array_equal(rep.as_array(), ref.as_array())

    def test_repeated_family_gets_cheaper(self):
        fam = poisson_family()
        reps = solve_sequence([fam, fam], j=8, k=6)
        assert reps[1].matvecs <= reps[0].matvecs
        assert reps[0].refresh_products == 0 and reps[1].refresh_products == 6

    def test_baseline_methods(self):
        fams = build_sequence(SequenceSpec("poisson:10", count=2, eps=0.01, base_shifts=[0, 1]))
        reps = solve_sequence(fams, j=8, method="sbfom")
        assert all(r.converged for r in reps)

    def test_failure_keeps_partial_reports(self, monkeypatch):
        fams = build_sequence(SequenceSpec("poisson:8", count=3, base_shifts=[0, 1]))
        real = recycling.solve_recycled_family
        calls = []

        def flaky(*args, **kw):
            calls.append(1)
            if len(calls) == 2:
                raise SingularMatrixError("boom")
            return real(*args, **kw)

        monkeypatch.setattr(recycling, "solve_recycled_family", flaky)
        with pytest.raises(SequenceError) as err:
            solve_sequence(fams, j=6, k=3)
        assert err.value.family == 1 and len(err.value.reports) == 1

    def test_dimension_check(self):
        a = poisson_family(nx=4)
        b = poisson_family(nx=5)
        with pytest.raises(ValueError, match="same dimension"):
            solve_sequence([a, b])
