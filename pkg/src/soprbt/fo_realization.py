"""Signature-symmetric first-order realizations of second-order systems.

With ``M = H H^T`` and ``K = G G^T`` the state ``x = [G^T p; H^T p']``
gives

    A = [[0, G^T H^{-T}], [-H^{-1} G, -H^{-1} D H^{-T}]],
    B = [0; H^{-1} B],   C = B^T,

which satisfies ``S A S = A^T`` for ``S = diag(-I_n, I_n)`` and
``A + A^T <= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DefinitenessError, EvaluationError, NotStandardTripleError, StructuralError
from .so_model import EPS, SecondOrderSystem, _frozen


@dataclass(frozen=True)
class StructuredFirstOrder:
    """First-order system ``x' = A x + B u``, ``y = B^T x``.

    The signature ``S = diag(-I_k, I_k)`` is implicit, ``k = A.shape[0] // 2``.
    """

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2:
            raise StructuralError(f"A must be square of even order, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise StructuralError(f"B has {B.shape[0]} rows, expected {A.shape[0]}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))

    @property
    def n(self) -> int:
        return self.A.shape[0] // 2

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def C(self) -> np.ndarray:
        return self.B.T

    @property
    def Binput(self) -> np.ndarray:
        return self.B

    @property
    def signature(self) -> np.ndarray:
        return signature(self.n)

    def dual(self) -> "StructuredFirstOrder":
        """The dual system ``(A^T, C^T, B^T)``; again structured."""
        return StructuredFirstOrder(self.A.T, self.B)

    def structure_residuals(self) -> dict:
        """Residuals of the three structural invariants."""
        s = self.signature
        A = self.A
        nA = max(np.linalg.norm(A, 2), 1.0)
        return {
            "signature_symmetry": float(np.linalg.norm(s[:, None] * A * s[None, :] - A.T) / nA),
            "input_top_block": float(np.linalg.norm(self.B[: self.n])),
            "dissipation_max_eig": float(la.eigvalsh(A + A.T)[-1] / nA),
        }


def signature(n):
    """Diagonal of ``S_n = diag(-I_n, I_n)`` as a vector."""
    return np.concatenate([-np.ones(n), np.ones(n)])


def lift(sys: SecondOrderSystem) -> StructuredFirstOrder:
    """Structured first-order realization of a validated second-order system."""
    n = sys.n
    try:
        H = la.cholesky(sys.M, lower=True)
    except la.LinAlgError as exc:
        raise DefinitenessError("Cholesky factorization of M failed") from exc
    try:
        G = la.cholesky(sys.K, lower=True)
    except la.LinAlgError as exc:
        raise DefinitenessError("Cholesky factorization of K failed") from exc
    Gh = la.solve_triangular(H, G, lower=True)           # H^{-1} G
    Dh = la.solve_triangular(H, sys.D, lower=True)
    Dh = la.solve_triangular(H, Dh.T, lower=True)        # H^{-1} D H^{-T}
    Dh = (Dh + Dh.T) / 2
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = Gh.T
    A[n:, :n] = -Gh
    A[n:, n:] = -Dh
    B = np.zeros((2 * n, sys.m))
    B[n:] = la.solve_triangular(H, sys.B, lower=True)
    return StructuredFirstOrder(A, B)


def fo_transfer(fo: StructuredFirstOrder, s) -> np.ndarray:
    """Evaluate ``C (s I - A)^{-1} B``."""
    s = complex(s)
    N = fo.A.shape[0]
    X = s * np.eye(N) - fo.A
    try:
        lu = la.lu_factor(X, check_finite=False)
    except la.LinAlgError as exc:
        raise EvaluationError(f"singular resolvent at s = {s}", s=s) from exc
    if np.min(np.abs(np.diag(lu[0]))) <= EPS * np.max(np.abs(np.diag(lu[0]))):
        raise EvaluationError(f"singular resolvent at s = {s}", s=s)
    return fo.C @ la.lu_solve(lu, fo.B.astype(complex))


def state_space_response(A, B, C, omegas, Dt=None) -> np.ndarray:
    """``C (i w I - A)^{-1} B (+ Dt)`` for each ``w`` via one Hessenberg reduction."""
    A = np.asarray(A, dtype=float)
    H, Q = la.hessenberg(A, calc_q=True)
    Bq = Q.T @ B
    Cq = C @ Q
    N = A.shape[0]
    out = []
    for w in np.asarray(omegas, dtype=float):
        X = 1j * w * np.eye(N) - H
        val = Cq @ la.solve(X, Bq.astype(complex))
        if Dt is not None:
            val = val + Dt
        out.append(val)
    return np.array(out)


def fo_frequency_response(fo: StructuredFirstOrder, omegas) -> np.ndarray:
    omegas = np.asarray(getattr(omegas, "points", omegas), dtype=float)
    return state_space_response(fo.A, fo.B, fo.C, omegas)


# -- zeros ---------------------------------------------------------------------

@dataclass
class ZeroList:
    """Finite invariant zeros with multiplicity and semi-simplicity flags."""

    zeros: np.ndarray            # one entry per distinct zero
    multiplicity: np.ndarray     # algebraic multiplicities
    geometric: np.ndarray        # kernel dimensions of the evaluated pencil
    semi_simple: np.ndarray
    origin_count: int

    def all_zeros(self):
        """Zeros repeated according to algebraic multiplicity."""
        return np.repeat(self.zeros, self.multiplicity)

    def to_dict(self):
        return {
            "zeros": [[float(z.real), float(z.imag)] for z in self.zeros],
            "multiplicity": [int(k) for k in self.multiplicity],
            "semi_simple": [bool(b) for b in self.semi_simple],
            "origin_count": int(self.origin_count),
        }


def _pencil(A, B, C):
    N, m = B.shape
    Apen = np.block([[A, B], [C, np.zeros((m, m))]])
    E = np.zeros((N + m, N + m))
    E[:N, :N] = np.eye(N)
    return Apen, E


def _cluster(values, tol):
    """Group complex values whose distance to the group seed is <= tol."""
    order = np.argsort(np.round(values.real, 12) + 1e-3 * values.imag)
    groups = []
    for i in order:
        for g in groups:
            if abs(values[i] - values[g[0]]) <= tol * max(1.0, abs(values[g[0]])):
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def pencil_zeros(A, B, C, cluster_tol=1e-6):
    """Finite eigenvalues of ``[[A - s I, B], [C, 0]]`` with multiplicities."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    Apen, E = _pencil(A, B, C)
    rng = np.random.default_rng(12345)
    for s in (rng.standard_normal() + 1j * rng.standard_normal(), 0.7 + 1.3j):
        if np.linalg.matrix_rank(Apen - s * E) < Apen.shape[0]:
            if np.linalg.matrix_rank(Apen - (s + 0.37) * E) < Apen.shape[0]:
                raise StructuralError("system pencil is singular for all s (rank assumption violated)")
    alpha, beta = la.eig(Apen, E, right=False, homogeneous_eigvals=True)
    scale = max(np.linalg.norm(Apen, 2), 1.0)
    finite = np.abs(beta) > np.abs(alpha) * np.sqrt(EPS) / scale
    z = alpha[finite] / beta[finite]
    z = z[np.abs(z) <= scale / np.sqrt(EPS)]
    z = np.where(np.abs(z.imag) <= 1e-10 * scale, z.real + 0j, z)
    return z, Apen, E


def system_zeros(fo: StructuredFirstOrder, cluster_tol=1e-6) -> ZeroList:
    """Invariant zeros of ``[A, B, B^T]`` and their semi-simplicity."""
    z, Apen, E = pencil_zeros(fo.A, fo.B, fo.C)
    groups = _cluster(z, cluster_tol)
    zs, mult, geo, ss = [], [], [], []
    N = Apen.shape[0]
    for g in groups:
        val = np.mean(z[g])
        if abs(val.imag) <= 1e-10 * max(1.0, abs(val)):
            val = complex(val.real, 0.0)
        sv = la.svdvals(Apen - val * E)
        rtol = sv[0] * N * EPS * 1e3
        # the kernel at a cluster mean is only as sharp as the cluster spread
        spread = max((abs(z[i] - val) for i in g), default=0.0)
        rtol = max(rtol, 10 * spread * max(1.0, np.linalg.norm(E, 2)))
        k = int(np.sum(sv <= rtol))
        zs.append(val)
        mult.append(len(g))
        geo.append(k)
        ss.append(k == len(g))
    zs = np.array(zs, dtype=complex)
    mult = np.array(mult, dtype=int)
    origin = int(sum(k for v, k in zip(zs, mult) if abs(v) <= 1e-8 * max(1.0, np.linalg.norm(fo.A, 2))))
    return ZeroList(zs, mult, np.array(geo, dtype=int), np.array(ss, dtype=bool), origin)


def zero_sign_characteristic(fo: StructuredFirstOrder, mu: float, tol=1e-8) -> list:
    """Types ``-sign(v^T S v)`` of a real semi-simple zero ``mu``.

    ``v`` ranges over an S-diagonalizing basis of the state part of the
    pencil kernel at ``mu``. Returns one ``+1``/``-1`` per kernel dimension.
    """
    Apen, E = _pencil(fo.A, fo.B, fo.C)
    N = fo.A.shape[0]
    U, sv, Vh = la.svd(Apen - mu * E)
    rtol = max(sv[0] * Apen.shape[0] * EPS * 1e3, tol * sv[0])
    ker = Vh[sv <= rtol].T if np.any(sv <= rtol) else Vh[-1:].T
    X = ker[:N]
    gram = X.T @ (fo.signature[:, None] * X)
    w = la.eigvalsh((gram + gram.T) / 2)
    return [-int(np.sign(v)) for v in w]


# -- passivity certificate -------------------------------------------------------

def kyp_matrix(A, B, C, P, R=None):
    """The KYP block matrix ``[[A^T P + P A, P B - C^T], [B^T P - C, -R]]``."""
    m = B.shape[1]
    F = P @ B - C.T
    R = np.zeros((m, m)) if R is None else R
    W = np.block([[A.T @ P + P @ A, F], [F.T, -R]])
    return (W + W.T) / 2


def kyp_residual(fo: StructuredFirstOrder, P) -> dict:
    """Largest eigenvalue of the KYP matrix at ``P`` and ``||P B - C^T||``."""
    P = np.asarray(P, dtype=float)
    W = kyp_matrix(fo.A, fo.B, fo.C, P)
    return {
        "lmi_max_eig": float(la.eigvalsh(W)[-1]),
        "coupling_norm": float(np.linalg.norm(P @ fo.B - fo.C.T, 2)),
    }


# -- standard triples ------------------------------------------------------------

def moments_reconstruct(Z, Y, X, tol=1e-8):
    """Quadratic coefficients from the moments ``Gamma_j = X Z^j Y``.

    For a standard triple of ``L(s) = M s^2 + D s + K``, i.e.
    ``L(s)^{-1} = X (s I - Z)^{-1} Y``, one has ``X Y = 0`` and

        M = Gamma_1^{-1},  D = -M Gamma_2 M,  K = -M Gamma_3 M + D Gamma_1 D.

    Returns
    -------
    M, D, K : ndarray
    """
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim == 1:
        X = X[None, :]
    scale = max(np.linalg.norm(X, 2) * np.linalg.norm(Y, 2), 1e-300)
    g0 = X @ Y
    if np.linalg.norm(g0, 2) > tol * scale:
        raise NotStandardTripleError(f"X Y = {np.linalg.norm(g0, 2):.3e} is not zero")
    ZY = Z @ Y
    g1 = X @ ZY
    ZZY = Z @ ZY
    g2 = X @ ZZY
    g3 = X @ (Z @ ZZY)
    sv = la.svdvals(g1)
    if sv[-1] <= tol * sv[0] or sv[0] == 0:
        raise NotStandardTripleError("Gamma_1 = X Z Y is singular")
    M = np.linalg.inv(g1)
    D = -M @ g2 @ M
    K = -M @ g3 @ M + D @ g1 @ D
    return M, D, K


def companion_triple(coeffs):
    """Companion standard triple of ``L(s) = M s^2 + D s + K``.

    ``coeffs`` is ``(M, D, K)`` with square (or scalar) entries.
    """
    M, D, K = (np.atleast_2d(np.asarray(c, dtype=float)) for c in coeffs)
    k = M.shape[0]
    Minv = np.linalg.inv(M)
    Z = np.block([[np.zeros((k, k)), np.eye(k)], [-Minv @ K, -Minv @ D]])
    Y = np.vstack([np.zeros((k, k)), Minv])
    X = np.hstack([np.eye(k), np.zeros((k, k))])
    return Z, Y, X
