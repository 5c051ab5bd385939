"""Second-order systems ``M p'' + D p' + K p = B u``, ``y = B^T p'``.

Holds the user-facing model type, its validation, transfer-function
evaluation, the overdamping test and the triple-chain benchmark generator.
Matrix Market input/output of system directories also lives here.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg as la
import scipy.sparse as sp
from scipy.optimize import minimize_scalar

from .errors import (
    ArtifactIOError,
    DataError,
    EvaluationError,
    ParameterError,
    PreconditionError,
    StructuralError,
)

EPS = np.finfo(float).eps


def _frozen(x):
    x = np.array(x, dtype=float)
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class SecondOrderSystem:
    """Symmetric second-order system.

    Matrices are symmetrized on construction via ``(X + X^T)/2``; the
    Frobenius norm of the removed skew part is kept in ``asymmetry``.

    Parameters
    ----------
    M, D, K : (n, n) array_like
        Mass, damping and stiffness.
    B : (n, m) array_like
        Input map. A 1-D array is read as a single column.
    """

    M: np.ndarray
    D: np.ndarray
    K: np.ndarray
    B: np.ndarray
    asymmetry: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        mats = {}
        for name in ("M", "D", "K", "B"):
            val = getattr(self, name)
            if sp.issparse(val):
                val = val.toarray()
            val = np.asarray(val, dtype=float)
            if name == "B" and val.ndim == 1:
                val = val[:, None]
            if val.ndim != 2:
                raise StructuralError(f"{name} must be a 2-D array, got shape {val.shape}")
            if not np.all(np.isfinite(val)):
                raise DataError(f"{name} contains non-finite entries")
            mats[name] = val
        n = mats["M"].shape[0]
        for name in ("M", "D", "K"):
            if mats[name].shape != (n, n):
                raise StructuralError(
                    f"{name} has shape {mats[name].shape}, expected ({n}, {n})")
        if mats["B"].shape[0] != n:
            raise StructuralError(f"B has {mats['B'].shape[0]} rows, expected {n}")
        asym = {}
        for name in ("M", "D", "K"):
            X = mats[name]
            asym[name] = float(np.linalg.norm(X - X.T) / 2)
            mats[name] = (X + X.T) / 2
        for name, val in mats.items():
            object.__setattr__(self, name, _frozen(val))
        object.__setattr__(self, "asymmetry", asym)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing, finite list of angular frequencies (rad/s)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            raise ParameterError("frequency grid is empty")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("frequency grid has non-finite points")
        if np.any(np.diff(pts) <= 0):
            raise ParameterError("frequency grid must be strictly increasing")
        object.__setattr__(self, "points", _frozen(pts))

    @classmethod
    def logspace(cls, lo, hi, count):
        if not (lo > 0 and hi > lo and count >= 2):
            raise ParameterError(f"need 0 < lo < hi and count >= 2, got {lo}, {hi}, {count}")
        return cls(np.logspace(np.log10(lo), np.log10(hi), int(count)))

    def __len__(self):
        return len(self.points)


@dataclass
class ValidationReport:
    n: int
    m: int
    min_eig: dict
    max_eig: dict
    rank_B: int
    tolerances: dict
    checks: dict
    asymmetry: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self):
        return {
            "n": self.n,
            "m": self.m,
            "min_eig": self.min_eig,
            "max_eig": self.max_eig,
            "rank_B": self.rank_B,
            "tolerances": self.tolerances,
            "checks": self.checks,
            "asymmetry": self.asymmetry,
            "passed": self.passed,
        }


def default_tol(X):
    """Scale-aware definiteness tolerance ``n * eps * lambda_max(|X|)``."""
    n = X.shape[0]
    return n * EPS * max(float(np.max(np.abs(la.eigvalsh(X)))), 0.0)


def validate(sys: SecondOrderSystem, tol=None) -> ValidationReport:
    """Check M > 0, K > 0, D >= 0 and rank(B) = m.

    Parameters
    ----------
    sys : SecondOrderSystem
    tol : float, optional
        Absolute definiteness tolerance used for all three matrices. By
        default each matrix gets ``n * eps * lambda_max``.

    Returns
    -------
    ValidationReport
    """
    eigs = {name: la.eigvalsh(getattr(sys, name)) for name in ("M", "D", "K")}
    tols = {}
    for name, w in eigs.items():
        tols[name] = float(tol) if tol is not None else sys.n * EPS * float(np.max(np.abs(w)))
    rank_B = int(np.linalg.matrix_rank(sys.B))
    checks = {
        "M_positive_definite": bool(eigs["M"][0] > tols["M"]),
        "K_positive_definite": bool(eigs["K"][0] > tols["K"]),
        "D_positive_semidefinite": bool(eigs["D"][0] >= -tols["D"]),
        "B_full_column_rank": rank_B == sys.m,
    }
    return ValidationReport(
        n=sys.n,
        m=sys.m,
        min_eig={k: float(w[0]) for k, w in eigs.items()},
        max_eig={k: float(w[-1]) for k, w in eigs.items()},
        rank_B=rank_B,
        tolerances=tols,
        checks=checks,
        asymmetry=dict(sys.asymmetry),
    )


def _solve_checked(A, B, where):
    with warnings.catch_warnings():
        warnings.simplefilter("error", la.LinAlgWarning)
        try:
            return la.solve(A, B)
        except (la.LinAlgError, la.LinAlgWarning) as exc:
            raise EvaluationError(f"singular pencil at s = {where}: {exc}", s=complex(where)) from exc


def transfer_function(sys: SecondOrderSystem, s) -> np.ndarray:
    """Evaluate ``G(s) = s B^T (s^2 M + s D + K)^{-1} B``."""
    s = complex(s)
    if s == 0:
        return np.zeros((sys.m, sys.m), dtype=complex)
    Q = s * s * sys.M + s * sys.D + sys.K
    return s * (sys.B.T @ _solve_checked(Q, sys.B.astype(complex), s))


def frequency_response(sys: SecondOrderSystem, omegas) -> np.ndarray:
    """Stack ``G(i w)`` for each ``w``; shape ``(len(omegas), m, m)``."""
    omegas = np.asarray(getattr(omegas, "points", omegas), dtype=float)
    return np.array([transfer_function(sys, 1j * w) for w in omegas])


# -- overdamping ---------------------------------------------------------------

@dataclass
class OverdampingResult:
    overdamped: bool
    witness_mu: float | None
    min_lambda_max: float
    tol: float


def is_overdamped(sys: SecondOrderSystem, tol=None, n_scan=400) -> OverdampingResult:
    """Decide the overdamping condition through the hyperbolicity test.

    The system is declared overdamped iff some ``mu < 0`` gives
    ``mu^2 M + mu D + K < -tol I``. The search scans ``lambda_max`` of
    that quadratic on a log grid of ``(mu_lo, 0)`` with
    ``mu_lo = -2 lambda_max(M^{-1} D)`` and refines the best grid point
    with a bounded scalar minimization.
    """
    M, D, K = sys.M, sys.D, sys.K
    dmin = la.eigvalsh(D)[0]
    if dmin <= default_tol(D):
        raise PreconditionError("overdamping test needs D positive definite",
                                min_eig_D=float(dmin))
    if tol is None:
        tol = sys.n * EPS * max(la.eigvalsh(X)[-1] for X in (M, D, K))
    lam_md = la.eigvalsh(D, M)[-1]
    mu_lo = -2.0 * lam_md

    def qmax(mu):
        return la.eigvalsh(mu * mu * M + mu * D + K)[-1]

    grid = -np.logspace(np.log10(abs(mu_lo)) - 12, np.log10(abs(mu_lo)), n_scan)
    vals = np.array([qmax(mu) for mu in grid])
    i = int(np.argmin(vals))
    best_mu, best = float(grid[i]), float(vals[i])
    lo = grid[min(i + 1, len(grid) - 1)]
    hi = grid[max(i - 1, 0)]
    if lo < hi:
        res = minimize_scalar(qmax, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-14 * abs(best_mu)})
        if res.fun < best:
            best_mu, best = float(res.x), float(res.fun)
    over = best < -tol
    return OverdampingResult(over, best_mu if over else None, best, float(tol))


def overdamping_falsifier(sys: SecondOrderSystem, trials=1000, rng_seed=0):
    """Search for ``v`` with ``(v^* D v)^2 <= 4 (v^* M v)(v^* K v)``.

    Coordinate unit vectors are tried first, then ``trials`` random complex
    directions. Returns the first counterexample found (unit norm, first
    nonzero entry real and positive) or ``None``.
    """
    M, D, K = sys.M, sys.D, sys.K
    n = sys.n

    def violates(v):
        d = np.real(np.vdot(v, D @ v))
        mm = np.real(np.vdot(v, M @ v))
        k = np.real(np.vdot(v, K @ v))
        return d * d <= 4 * mm * k

    def normalize(v):
        v = v / np.linalg.norm(v)
        j = np.flatnonzero(np.abs(v) > 0)[0]
        return v * (abs(v[j]) / v[j])

    for j in range(n):
        e = np.zeros(n, dtype=complex)
        e[j] = 1.0
        if violates(e):
            return normalize(e)
    rng = np.random.default_rng(rng_seed)
    for _ in range(trials):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        if violates(v):
            return normalize(v)
    return None


# -- benchmark -----------------------------------------------------------------

TRIPLE_CHAIN_DEFAULTS = dict(k0=50.0, k1=10.0, k2=20.0, k3=1.0, m0=1.0, m1=1.0,
                             m2=2.0, m3=3.0, alpha=0.002, beta=0.002, viscosity=5.0)


def generate_triple_chain(n_per_row, k0=50.0, k1=10.0, k2=20.0, k3=1.0, m0=1.0,
                          m1=1.0, m2=2.0, m3=3.0, alpha=0.002, beta=0.002,
                          viscosity=5.0) -> SecondOrderSystem:
    """Three mass-spring chains of ``n_per_row`` masses joined at one mass.

    Positions are ordered row 1, row 2, row 3, then the coupling mass
    ``m0`` last (total ``3 n + 1``). Each row has stiffness
    ``k_i tridiag(-1, 2, -1)``; its last mass is tied to the coupling mass,
    which is also tied to the wall by ``k0``. Damping is Rayleigh
    ``alpha M + beta K`` plus a grounded damper of size ``viscosity`` on
    the first mass of each row. The input acts on every mass.
    """
    n = int(n_per_row)
    if n < 1:
        raise ParameterError(f"n_per_row must be >= 1, got {n_per_row}")
    for name, val in dict(k0=k0, k1=k1, k2=k2, k3=k3, m0=m0, m1=m1, m2=m2, m3=m3).items():
        if not val > 0:
            raise ParameterError(f"{name} must be positive, got {val}")
    for name, val in dict(alpha=alpha, beta=beta, viscosity=viscosity).items():
        if not val >= 0:
            raise ParameterError(f"{name} must be nonnegative, got {val}")
    N = 3 * n + 1
    tri = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    K = sp.lil_matrix((N, N))
    for i, k in enumerate((k1, k2, k3)):
        sl = slice(i * n, (i + 1) * n)
        K[sl, sl] = k * tri
        K[(i + 1) * n - 1, N - 1] = -k
        K[N - 1, (i + 1) * n - 1] = -k
    K[N - 1, N - 1] = k1 + k2 + k3 + k0
    K = K.toarray()
    M = np.diag(np.concatenate([np.full(n, m1), np.full(n, m2), np.full(n, m3), [m0]]))
    D = alpha * M + beta * K
    for j in (0, n, 2 * n):
        D[j, j] += viscosity
    B = np.ones((N, 1))
    return SecondOrderSystem(M, D, K, B)


# -- Matrix Market system directories ------------------------------------------

def write_system(sys: SecondOrderSystem, directory, meta=None):
    """Write ``M.mtx``, ``D.mtx``, ``K.mtx``, ``B.mtx`` (and ``meta.json``)."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name in ("M", "D", "K"):
            X = getattr(sys, name)
            scipy.io.mmwrite(out / f"{name}.mtx", sp.coo_array(X), symmetry="symmetric")
        scipy.io.mmwrite(out / "B.mtx", np.asarray(sys.B))
        if meta is not None:
            (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write system to {out}: {exc}") from exc
    return out


def read_matrix(path) -> np.ndarray:
    try:
        X = scipy.io.mmread(str(path))
    except (OSError, ValueError) as exc:
        raise ArtifactIOError(f"cannot read Matrix Market file {path}: {exc}") from exc
    if sp.issparse(X):
        X = X.toarray()
    return np.asarray(X, dtype=float)


def read_system(directory) -> SecondOrderSystem:
    """Read a system directory written by :func:`write_system`."""
    d = Path(directory)
    mats = {}
    for name in ("M", "D", "K", "B"):
        path = d / f"{name}.mtx"
        if not path.exists():
            raise ArtifactIOError(f"missing {path}")
        mats[name] = read_matrix(path)
    return SecondOrderSystem(**mats)
