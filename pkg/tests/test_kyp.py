import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import random_system
from soprbt.errors import ConvergenceError, NotPSDError, PreconditionError
from soprbt.fo_realization import kyp_residual, lift, signature
from soprbt.kyp import (
    SolverOptions,
    check_imaginary_controllability,
    factorize,
    lossless_subspace,
    solve_dual_min_kyp,
    solve_min_kyp,
)
from soprbt.so_model import SecondOrderSystem, generate_triple_chain

cp = pytest.importorskip("cvxpy")


def sdp_min_trace(fo):
    """Independent oracle: trace-minimal P of the KYP LMI by semidefinite programming."""
    N = fo.A.shape[0]
    P = cp.Variable((N, N), symmetric=True)
    cons = [P >> 0, fo.A.T @ P + P @ fo.A << 0, P @ fo.B == fo.B]
    cp.Problem(cp.Minimize(cp.trace(P)), cons).solve(solver="CLARABEL")
    return (P.value + P.value.T) / 2


def accept(fo, sol):
    nP = np.linalg.norm(sol.P, 2)
    r = sol.residuals
    assert r["lmi_max_eig"] <= 1e-6 * nP
    assert r["coupling_norm"] <= 1e-8 * np.linalg.norm(fo.B, 2)
    assert r["max_eig_minus_identity"] <= 1e-6


def test_unit_damped_oscillator_below_identity():
    fo = lift(SecondOrderSystem([[1.0]], [[1.0]], [[1.0]], [[1.0]]))
    sol = solve_min_kyp(fo)
    accept(fo, sol)
    assert la.eigvalsh(np.eye(2) - sol.P)[0] >= -1e-12


def test_scalar_grid_oracle():
    # n = m = 1, M = K = 1, D = d: P B = C^T pins the second column, leaving
    # P = [[x, 0], [0, 1]]; scan x and keep the LMI-feasible points
    for d in (0.3, 1.0, 4.0):
        fo = lift(SecondOrderSystem([[1.0]], [[d]], [[1.0]], [[1.0]]))
        grid = np.linspace(0.0, 2.0, 20001)
        feas = []
        for x in grid:
            P = np.diag([x, 1.0])
            res = kyp_residual(fo, P)
            if res["lmi_max_eig"] <= 1e-12 and la.eigvalsh(P)[0] >= 0:
                feas.append(x)
        x_min = min(feas)
        sol = solve_min_kyp(fo)
        assert np.allclose(sol.P, np.diag([x_min, 1.0]), atol=1e-4)
        # balancing oracle: both characteristic values of the scalar case
        Q = signature(1)[:, None] * sol.P * signature(1)[None, :]
        assert np.allclose(np.sqrt(la.eigvals(sol.P @ Q).real), [1.0, 1.0], atol=1e-4)


@pytest.mark.parametrize("seed", range(6))
def test_matches_sdp_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(2, 6))
    fo = lift(random_system(rng, n, int(rng.integers(1, 3))))
    sol = solve_min_kyp(fo)
    accept(fo, sol)
    P_sdp = sdp_min_trace(fo)
    assert np.linalg.norm(sol.P - P_sdp, 2) <= 1e-5 * max(np.linalg.norm(sol.P, 2), 1.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_dual_symmetry(seed):
    rng = np.random.default_rng(seed)
    fo = lift(random_system(rng, int(rng.integers(1, 7)), int(rng.integers(1, 3))))
    P = solve_min_kyp(fo).P
    Q = solve_dual_min_kyp(fo).P
    s = signature(fo.n)
    assert np.linalg.norm(s[:, None] * P * s[None, :] - Q, 2) <= 1e-6 * np.linalg.norm(P, 2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_accepted_solutions_meet_thresholds(seed):
    rng = np.random.default_rng(seed)
    fo = lift(random_system(rng, int(rng.integers(1, 9)), int(rng.integers(1, 3))))
    sol = solve_min_kyp(fo)
    accept(fo, sol)
    assert np.allclose(sol.L.T @ sol.L, sol.P, atol=1e-10 * max(1, np.linalg.norm(sol.P)))


def test_regularization_path_increases_toward_minimal_solution():
    # enlarging the feedthrough enlarges the feasible set, so as eps shrinks the
    # regularized minimal solutions grow: P_eps1 <= P_eps2 for eps1 > eps2
    rng = np.random.default_rng(21)
    fo = lift(random_system(rng, 5, 1))
    sol = solve_min_kyp(fo, SolverOptions(epsilon_schedule=(1e-1, 1e-2, 1e-3, 1e-4, 1e-6), keep_path=True,
                                                path_tol=1e-3))
    path = sol.path
    assert len(path) >= 5
    for Pa, Pb in zip(path, path[1:]):
        assert la.eigvalsh(Pb - Pa)[0] >= -1e-9
    assert np.linalg.norm(path[-1] - sol.P) <= 1e-12


def test_unobservable_part_is_removed():
    # five identical decoupled modes driven by one input: four are unobservable
    rng = np.random.default_rng(2)
    s = SecondOrderSystem(np.eye(5), 4 * np.eye(5), np.eye(5), rng.standard_normal((5, 1)))
    fo = lift(s)
    sol = solve_min_kyp(fo)
    accept(fo, sol)
    assert sol.unobservable_dim == 8 and sol.rank == 2


def test_lossless_subspace_of_undamped_block():
    A = np.zeros((4, 4))
    A[:2, 2:] = np.eye(2)
    A[2:, :2] = -np.eye(2)
    Cd = np.array([[0.0, 0.0, 1.0, 0.0]])
    V = lossless_subspace(A, Cd)
    # the second oscillator (coordinates 1 and 3) never reaches Cd
    assert V.shape[1] == 2
    assert np.allclose(V @ V.T, np.diag([0, 1, 0, 1]), atol=1e-12)


def test_eigenvector_lossless_subspace_matches_staircase():
    rng = np.random.default_rng(4)
    dims = []
    for trial in range(20):
        n = 6
        X = rng.standard_normal((2 * n, 2 * n))
        A = X - X.T - 0.1 * np.eye(2 * n)
        if trial % 4 == 3:
            # repeated decoupled modes
            A = la.block_diag(*([np.array([[0.0, 1.0], [-1.0, -0.5]])] * n))
        Cd = rng.standard_normal((1, 2 * n))
        # embed invariant subspaces inside ker Cd
        w, V = la.eig(A)
        for j in rng.choice(2 * n, size=int(rng.integers(0, 3)), replace=False):
            basis = la.orth(np.column_stack([V[:, j].real, V[:, j].imag]))
            Cd = Cd - (Cd @ basis) @ basis.T
        Ve = lossless_subspace(A, Cd)
        Vs = lossless_subspace(A, Cd, method="staircase")
        assert Ve.shape[1] == Vs.shape[1]
        if Ve.shape[1]:
            assert np.linalg.norm(Ve @ Ve.T - Vs @ Vs.T, 2) <= 1e-7
            assert np.linalg.norm(Cd @ Ve) <= 1e-8
        dims.append(Ve.shape[1])
    assert len(set(dims)) > 1


def test_uncontrollable_imaginary_mode_rejected():
    fo = lift(SecondOrderSystem(np.eye(2), np.zeros((2, 2)), np.diag([1.0, 4.0]), [[1.0], [0.0]]))
    with pytest.raises(PreconditionError) as info:
        check_imaginary_controllability(fo.A, fo.B)
    assert info.value.stage == "kyp"
    assert abs(abs(info.value.details["eigenvalue"]) - 2.0) < 1e-10


def test_unconverged_path_raises_with_last_iterate():
    rng = np.random.default_rng(9)
    fo = lift(random_system(rng, 4, 1))
    opts = SolverOptions(path_tol=0.0, exact_final=False)
    with pytest.raises(ConvergenceError) as info:
        solve_min_kyp(fo, opts)
    assert info.value.last_iterate.shape == (8, 8)
    assert info.value.exit_code == 3


def test_chain_lossless_part_is_the_static_direction():
    # A^{-1} B sits in the position half where A + A^T vanishes, so an
    # m-dimensional lossless block with eigenvalue 0 is always split off
    fo = lift(generate_triple_chain(5))
    sol = solve_min_kyp(fo)
    accept(fo, sol)
    assert sol.lossless_dim == fo.m
    assert sol.unobservable_dim == 0


# -- factorize ---------------------------------------------------------------------

def test_factorize_identity():
    L = factorize(np.eye(4))
    assert L.shape == (4, 4)
    assert np.allclose(L.T @ L, np.eye(4))
    assert np.allclose(L @ L.T, np.eye(4))


def test_factorize_drops_tiny_eigenvalues():
    L = factorize(np.diag([1.0, 1e-20]), rank_tol=1e-12)
    assert L.shape == (1, 2)


def test_factorize_random_rank3(rng):
    X = rng.standard_normal((6, 3))
    P = X @ X.T
    L = factorize(P)
    assert L.shape[0] == 3
    assert np.linalg.norm(L.T @ L - P) <= 1e-12 * np.linalg.norm(P)


def test_factorize_rejects_indefinite():
    with pytest.raises(NotPSDError):
        factorize(np.diag([1.0, -0.5]))
