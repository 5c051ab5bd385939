import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import random_system, spd
from soprbt.errors import ArtifactIOError, DataError, ParameterError, PreconditionError, StructuralError
from soprbt.so_model import (
    FrequencyGrid,
    SecondOrderSystem,
    frequency_response,
    generate_triple_chain,
    is_overdamped,
    overdamping_falsifier,
    read_system,
    transfer_function,
    validate,
    write_system,
)


# -- construction and validation -------------------------------------------------

def test_symmetrizes_and_records_asymmetry():
    M = np.array([[2.0, 0.1], [0.0, 2.0]])
    s = SecondOrderSystem(M, np.eye(2), np.eye(2), [1.0, 0.0])
    assert np.allclose(s.M, s.M.T)
    assert s.asymmetry["M"] == pytest.approx(np.linalg.norm(M - M.T) / 2)
    assert s.B.shape == (2, 1)


def test_construction_errors():
    with pytest.raises(StructuralError):
        SecondOrderSystem(np.eye(2), np.eye(3), np.eye(2), np.ones((2, 1)))
    with pytest.raises(StructuralError):
        SecondOrderSystem(np.eye(2), np.eye(2), np.eye(2), np.ones((3, 1)))
    with pytest.raises(DataError):
        SecondOrderSystem(np.eye(2), np.eye(2) * np.nan, np.eye(2), np.ones((2, 1)))


def test_validate_identity_case():
    rep = validate(SecondOrderSystem(np.eye(2), np.zeros((2, 2)), np.eye(2), [[1.0], [0.0]]))
    assert rep.passed and rep.rank_B == 1


def test_validate_rejects_indefinite_stiffness():
    rep = validate(SecondOrderSystem(np.eye(2), np.zeros((2, 2)), np.diag([1.0, -1.0]), np.eye(2)))
    assert not rep.passed
    assert not rep.checks["K_positive_definite"]


def test_validate_triple_chain_n1_min_eig():
    s = generate_triple_chain(1)
    rep = validate(s)
    assert rep.passed
    assert rep.min_eig["K"] == pytest.approx(la.eigvalsh(s.K)[0], rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_validate_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 10
    mats = {}
    for name in ("M", "D", "K"):
        X = rng.standard_normal((n, n))
        mats[name] = X @ X.T + rng.uniform(-3, 3) * np.eye(n)
    B = rng.standard_normal((n, rng.integers(1, 3)))
    if rng.random() < 0.3:
        B = np.hstack([B[:, :1], B[:, :1]])
    s = SecondOrderSystem(mats["M"], mats["D"], mats["K"], B)
    rep = validate(s)
    tol = {k: n * np.finfo(float).eps * np.max(np.abs(la.eigvalsh(v))) for k, v in mats.items()}
    expect = (la.eigvalsh(mats["M"])[0] > tol["M"] and la.eigvalsh(mats["K"])[0] > tol["K"]
              and la.eigvalsh(mats["D"])[0] >= -tol["D"] and np.linalg.matrix_rank(B) == B.shape[1])
    assert rep.passed == expect


# -- transfer function -------------------------------------------------------------

def test_transfer_zero_at_origin(rng):
    s = random_system(rng, 4, 2)
    assert np.all(transfer_function(s, 0) == 0)


def test_transfer_scalar_hand_value():
    s = SecondOrderSystem([[1.0]], [[1.0]], [[1.0]], [[1.0]])
    assert transfer_function(s, 1j)[0, 0] == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_transfer_symmetries(seed):
    rng = np.random.default_rng(seed)
    s = random_system(rng, 5, 2)
    eps = np.finfo(float).eps
    for w in np.logspace(-2, 2, 10):
        G = transfer_function(s, 1j * w)
        Gm = transfer_function(s, -1j * w)
        tol = 100 * eps * np.linalg.norm(G, 2)
        assert np.linalg.norm(Gm - G.conj()) <= tol
        assert np.linalg.norm(G - G.T) <= tol


def test_frequency_grid_checks():
    g = FrequencyGrid.logspace(1e-2, 1e2, 5)
    assert len(g) == 5
    with pytest.raises(ParameterError):
        FrequencyGrid([1.0, 1.0])
    with pytest.raises(ParameterError):
        FrequencyGrid.logspace(1.0, 0.5, 3)


def test_frequency_response_shape(rng):
    s = random_system(rng, 3, 2)
    assert frequency_response(s, FrequencyGrid.logspace(1e-1, 1e1, 7)).shape == (7, 2, 2)


# -- overdamping ---------------------------------------------------------------------

def test_overdamped_scalar():
    res = is_overdamped(SecondOrderSystem([[1.0]], [[3.0]], [[1.0]], [[1.0]]))
    assert res.overdamped
    # any witness mu between the roots (-2.618, -0.382) works, e.g. mu = -1 gives Q = -1
    assert -2.618 < res.witness_mu < -0.382
    assert 1.0 + 3.0 * -1.0 + 1.0 == -1.0


def test_underdamped_scalar_and_diagonal():
    assert not is_overdamped(SecondOrderSystem([[1.0]], [[1.0]], [[1.0]], [[1.0]])).overdamped
    assert not is_overdamped(SecondOrderSystem(np.eye(2), 0.1 * np.eye(2), np.eye(2), np.eye(2))).overdamped


def test_overdamping_needs_positive_damping():
    with pytest.raises(PreconditionError):
        is_overdamped(SecondOrderSystem(np.eye(2), np.diag([1.0, 0.0]), np.eye(2), np.eye(2)))


def test_falsifier_examples():
    assert overdamping_falsifier(SecondOrderSystem([[1.0]], [[3.0]], [[1.0]], [[1.0]]), trials=1000) is None
    v = overdamping_falsifier(SecondOrderSystem([[1.0]], [[1.0]], [[1.0]], [[1.0]]))
    assert v is not None and np.allclose(v, [1.0])
    mixed = SecondOrderSystem(np.eye(3), np.diag([3.0, 0.5, 4.0]), np.eye(3), np.eye(3))
    v = overdamping_falsifier(mixed)
    assert v is not None and np.allclose(np.abs(v), [0, 1, 0])


def test_overdamping_agrees_with_falsifier_on_diagonal_systems():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(1, 6))
        m_ = rng.uniform(0.5, 2, n)
        k_ = rng.uniform(0.5, 2, n)
        d_ = rng.uniform(0.2, 5, n)
        s = SecondOrderSystem(np.diag(m_), np.diag(d_), np.diag(k_), np.eye(n))
        scalar_ok = np.all(d_ ** 2 > 4 * m_ * k_)
        assert is_overdamped(s).overdamped == scalar_ok
        v = overdamping_falsifier(s, trials=200)
        if scalar_ok:
            assert v is None
        else:
            assert v is not None and np.count_nonzero(np.abs(v) > 0) == 1


# -- triple chain generator -----------------------------------------------------------

def test_triple_chain_n1_matches_formula():
    s = generate_triple_chain(1)
    K = np.array([[20, 0, 0, -10], [0, 40, 0, -20], [0, 0, 2, -1], [-10, -20, -1, 81]], dtype=float)
    assert np.array_equal(s.K, K)
    assert np.array_equal(s.M, np.diag([1.0, 2.0, 3.0, 1.0]))


@pytest.mark.parametrize("n", [1, 4, 10])
def test_triple_chain_damping_pattern(n):
    s = generate_triple_chain(n)
    R = s.D - 0.002 * s.M - 0.002 * s.K
    nz = np.argwhere(np.abs(R) > 1e-12)
    assert sorted(map(tuple, nz)) == [(0, 0), (n, n), (2 * n, 2 * n)]
    assert np.allclose(R[tuple(nz.T)], 5.0)
    assert la.eigvalsh(s.K)[0] > 0
    assert s.n == 3 * n + 1


def test_triple_chain_parameter_sweep_validates():
    rng = np.random.default_rng(5)
    for _ in range(20):
        kw = {k: rng.uniform(0.1, 100) for k in ("k0", "k1", "k2", "k3", "m0", "m1", "m2", "m3")}
        kw.update({k: rng.uniform(0, 1) for k in ("alpha", "beta")})
        kw["viscosity"] = rng.uniform(0, 10)
        assert validate(generate_triple_chain(int(rng.integers(1, 6)), **kw)).passed


def test_triple_chain_parameter_errors():
    with pytest.raises(ParameterError):
        generate_triple_chain(0)
    with pytest.raises(ParameterError):
        generate_triple_chain(2, k1=-1.0)


def test_full_benchmark_dimension():
    assert generate_triple_chain(500).n == 1501


# -- Matrix Market -----------------------------------------------------------------------

def test_system_roundtrip_and_idempotence(tmp_path, rng):
    s = random_system(rng, 4, 2)
    write_system(s, tmp_path / "a", meta={"x": 1})
    write_system(s, tmp_path / "b", meta={"x": 1})
    back = read_system(tmp_path / "a")
    for name in ("M", "D", "K", "B"):
        assert np.allclose(getattr(back, name), getattr(s, name), rtol=1e-15, atol=0)
        assert (tmp_path / "a" / f"{name}.mtx").read_bytes() == (tmp_path / "b" / f"{name}.mtx").read_bytes()
    assert "symmetric" in (tmp_path / "a" / "K.mtx").read_text().splitlines()[0]


def test_read_missing_file(tmp_path):
    with pytest.raises(ArtifactIOError):
        read_system(tmp_path)


def test_spd_helper_is_spd(rng):
    assert la.eigvalsh(spd(rng, 5))[0] > 0
