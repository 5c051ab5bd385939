"""Minimal solution of the positive-real KYP inequality for structured lifts.

The inequality

    [[A^T P + P A, P B - C^T], [B^T P - C, 0]] <= 0,   P >= 0

has a zero (2,2) block, so every solution satisfies ``P B = C^T`` exactly.
For a lift ``C^T = B`` and we rotate to ``Q = [Q_a, Q_b]`` with
``range(Q_b) = range(B)``; then ``Q^T P Q = diag(X, I)`` and the problem
reduces to a KYP inequality for ``X`` with a nonzero feedthrough

    R = -(A_bb + A_bb^T).

Lossless directions (the largest ``A_aa``-invariant subspace on which the
dissipation ``A + A^T`` vanishes) carry ``X = I`` and are split off exactly.
The remainder is solved along a path of regularized Riccati equations
``R -> R + eps I``, each via the stabilizing solution of a CARE.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import ConvergenceError, NotPSDError, PreconditionError, SolverError
from .fo_realization import StructuredFirstOrder, kyp_residual

DEFAULT_SCHEDULE = (1e-4, 1e-6, 1e-8, 1e-10)


@dataclass(frozen=True)
class SolverOptions:
    """Knobs of :func:`solve_min_kyp`.

    ``epsilon_schedule`` values are relative to the scale of the reduced
    feedthrough ``R``. ``exact_final`` appends an unregularized solve when
    ``R`` is well conditioned (condition number below ``exact_cond``).
    """

    epsilon_schedule: tuple = DEFAULT_SCHEDULE
    path_tol: float = 1e-7
    imag_tol: float = 1e-10
    rank_tol: float = 1e-12
    lossless_tol: float = 1e-10
    exact_final: bool = True
    exact_cond: float = 1e10
    keep_path: bool = False


@dataclass
class KypSolution:
    P: np.ndarray
    L: np.ndarray
    epsilon_schedule: list
    residuals: dict
    rank: int
    lossless_dim: int = 0
    unobservable_dim: int = 0
    path: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "epsilon_schedule": [float(e) for e in self.epsilon_schedule],
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "rank": int(self.rank),
            "lossless_dim": int(self.lossless_dim),
            "unobservable_dim": int(self.unobservable_dim),
        }


def check_imaginary_controllability(A, B, imag_tol=1e-10):
    """PBH test on imaginary-axis and unstable eigenvalues of ``A``.

    Raises PreconditionError naming the offending eigenvalue.
    """
    nA = max(np.linalg.norm(A, 2), 1e-300)
    N = A.shape[0]
    for lam in la.eigvals(A):
        if lam.real < -imag_tol * nA:
            continue
        sv = la.svdvals(np.hstack([lam * np.eye(N) - A, B.astype(complex)]))
        if sv[-1] <= imag_tol * nA:
            kind = "imaginary-axis" if abs(lam.real) <= imag_tol * nA else "unstable"
            raise PreconditionError(
                f"uncontrollable {kind} eigenvalue {lam:.6g} (PBH sigma_min = {sv[-1]:.3e})",
                stage="kyp", eigenvalue=complex(lam))


def _lossless_from_eigvecs(A, Cd, tol=1e-8, cond_max=1e8):
    """Invariant subspace in ``ker Cd`` assembled from eigenvectors of ``A``.

    For diagonalizable ``A`` every invariant subspace is a sum of pieces of
    eigenspaces, so it suffices to intersect each eigenvalue cluster with
    ``ker Cd``. Returns None when the eigenvectors are too ill conditioned
    or the result fails the invariance check; the caller then falls back to
    the staircase.
    """
    N = A.shape[0]
    lam, X = la.eig(A)
    X = X / np.linalg.norm(X, axis=0)
    if not np.linalg.cond(X) <= cond_max:
        return None
    order = np.argsort(lam.real)
    lam, X = lam[order], X[:, order]
    scale = max(np.linalg.norm(A, 2), 1.0)
    cn = max(np.linalg.norm(Cd, 2), 1e-300)
    seen = np.zeros(N, dtype=bool)
    cols = []
    for i in range(N):
        if seen[i]:
            continue
        # mixing eigenvectors of eigenvalues a distance d apart leaves an
        # invariance residual of order d, so clusters are no wider than tol
        near = np.flatnonzero(np.abs(lam - lam[i]) <= tol * scale)
        seen[near] = True
        if lam[i].imag < -tol * scale:
            continue  # the conjugate cluster supplies the real basis
        Xc = X[:, near]
        _, s, Vh = la.svd(Cd @ Xc)
        s = np.concatenate([s, np.zeros(len(near) - len(s))]) if len(s) < len(near) else s
        K = Vh[s <= tol * cn].conj().T
        if K.shape[1]:
            Z = Xc @ K
            cols += [Z.real, Z.imag]
    if not cols:
        return np.zeros((N, 0))
    V = la.orth(np.hstack(cols), rcond=1e-8)
    AV = A @ V
    if (np.linalg.norm(Cd @ V, 2) > tol * cn
            or np.linalg.norm(AV - V @ (V.T @ AV), 2) > tol * scale):
        return None
    return V


def lossless_subspace(A, Cd, tol=1e-10, method="auto"):
    """Largest ``A``-invariant subspace contained in ``ker Cd``.

    ``method='staircase'`` runs an SVD staircase: start with ``null(Cd)``
    and keep shrinking to the part mapped back into the current subspace
    (up to ``N`` dense SVDs). ``'auto'`` first builds the subspace from one
    eigendecomposition and only falls back to the staircase when that is
    unreliable.
    """
    N = A.shape[0]
    if method == "auto" and N > 8 and Cd.size:
        V = _lossless_from_eigvecs(A, Cd)
        if V is not None:
            return V
    scale = max(np.linalg.norm(A, 2), np.linalg.norm(Cd, 2), 1.0)
    V = la.null_space(Cd, rcond=tol * scale / max(np.linalg.norm(Cd, 2), 1e-300)) if Cd.size else np.eye(N)
    while V.shape[1] > 0:
        AV = A @ V
        out = AV - V @ (V.T @ AV)
        if np.linalg.norm(out, 2) <= tol * scale:
            break
        Y = la.null_space(out, rcond=tol * scale / np.linalg.norm(out, 2))
        if Y.shape[1] == V.shape[1]:
            break
        V = V @ Y
    return V


def _care_residual(A, B, C, R, X):
    F = X @ B - C.T
    res = A.T @ X + X @ A + F @ np.linalg.solve(R, F.T)
    return np.linalg.norm(res, 1) / max(np.linalg.norm(X, 1) * np.linalg.norm(A, 1), 1e-300)


def _care_min(A, B, C, R, schur_cond=1e8):
    """Minimal solution of ``A^T X + X A + (X B - C^T) R^{-1} (B^T X - C) = 0``.

    With ``Y = -X`` this is the stabilizing solution of a standard CARE
    with cross term ``C^T``. For well-conditioned ``R`` the ordered real
    Schur form of the Hamiltonian is used (much cheaper than the extended
    pencil); scipy's extended-pencil solver is the fallback.
    """
    N = A.shape[0]
    evR = la.eigvalsh(R)
    if evR[0] > 0 and evR[-1] / evR[0] <= schur_cond:
        H = np.block([[A - B @ np.linalg.solve(R, C), -B @ np.linalg.solve(R, B.T)],
                      [C.T @ np.linalg.solve(R, C), -(A - B @ np.linalg.solve(R, C)).T]])
        _, Z, sdim = la.schur(H, sort="lhp")
        if sdim == N:
            U1, U2 = Z[:N, :N], Z[N:, :N]
            if 1 / np.linalg.cond(U1) > 1e-12:
                X = -np.linalg.solve(U1.T, U2.T).T
                X = (X + X.T) / 2
                if _care_residual(A, B, C, R, X) <= 1e-10:
                    return X
    Y = la.solve_continuous_are(A, B, np.zeros_like(A), R, s=C.T)
    X = -Y
    return (X + X.T) / 2


def _hamiltonian_eigs(A, B, C, R):
    Ri = np.linalg.inv(R)
    F = A - B @ Ri @ C
    H = np.block([[F, -B @ Ri @ B.T], [C.T @ Ri @ C, -F.T]])
    return la.eigvals(H)


def solve_min_kyp(fo: StructuredFirstOrder, opts: SolverOptions | None = None) -> KypSolution:
    """Minimal positive semidefinite solution of the KYP inequality.

    Parameters
    ----------
    fo : StructuredFirstOrder
    opts : SolverOptions, optional

    Returns
    -------
    KypSolution
    """
    opts = opts or SolverOptions()
    A, B = fo.A, fo.B
    check_imaginary_controllability(A, B, opts.imag_tol)

    # the minimal solution vanishes on the unobservable subspace of (A, B^T);
    # with C = B^T the observable quotient keeps the same structure
    Nu = lossless_subspace(A, B.T, opts.lossless_tol)
    if Nu.shape[1]:
        Wo = la.null_space(Nu.T)
        Ao, Bo = Wo.T @ A @ Wo, Wo.T @ B
    else:
        Wo, Ao, Bo = None, A, B
    Po, eps_used, gap, nv, path = _solve_core(Ao, Bo, opts)
    lift_back = (lambda X: X) if Wo is None else (lambda X: Wo @ X @ Wo.T)
    P = lift_back(Po)
    P = (P + P.T) / 2
    L = factorize(P, opts.rank_tol)
    res = kyp_residual(fo, P)
    res["minimality_gap"] = float(gap)
    res["max_eig_minus_identity"] = float(la.eigvalsh(P)[-1] - 1.0)
    sol = KypSolution(P=P, L=L, epsilon_schedule=eps_used, residuals=res, rank=L.shape[0],
                      lossless_dim=nv, unobservable_dim=Nu.shape[1])
    if opts.keep_path:
        sol.path = [lift_back(X) for X in path]
    return sol


def _solve_core(A, B, opts):
    """Minimal KYP solution for an observable ``(A, B, B^T)`` with ``A + A^T <= 0``."""
    N, m = B.shape
    # Q_b spans range(B), Q_a its complement
    Qfull, _ = la.qr(B, mode="full")
    Q = np.hstack([Qfull[:, m:], Qfull[:, :m]])
    Ah = Q.T @ A @ Q
    na = N - m
    a, b = slice(0, na), slice(na, N)
    Ssym = Ah + Ah.T
    Aaa = Ah[a, a]

    # exact split of the lossless part, where X = I
    V = lossless_subspace(Aaa, Ssym[:, a], opts.lossless_tol) if na else np.zeros((0, 0))
    nv = V.shape[1]
    Wb = la.null_space(V.T) if nv else np.eye(na)
    if nv == na:
        Wb = np.zeros((na, 0))
    nw = Wb.shape[1]

    R = -(Ah[b, b] + Ah[b, b].T)
    R = (R + R.T) / 2
    Xw = np.zeros((0, 0))
    eps_used, path = [], []
    gap = 0.0
    if nw:
        Aw = Wb.T @ Aaa @ Wb
        Bw = Wb.T @ Ah[a, b]
        Cw = -Ah[b, a] @ Wb
        rscale = max(np.linalg.norm(R, 2), 1e-300)
        sols = []
        evR = la.eigvalsh(R)
        exact_ok = opts.exact_final and evR[0] > 0 and evR[-1] / evR[0] <= opts.exact_cond
        schedule = opts.epsilon_schedule
        if exact_ok and not opts.keep_path:
            # the exact solve is the answer; one regularized solve checks continuity
            schedule = schedule[-1:]
        for eps in schedule:
            Re = R + eps * rscale * np.eye(m)
            try:
                X = _care_min(Aw, Bw, Cw, Re)
            except (la.LinAlgError, ValueError) as exc:
                ev = _hamiltonian_eigs(Aw, Bw, Cw, Re)
                close = ev[np.argsort(np.abs(ev.real))[:4]]
                raise SolverError(
                    f"regularized Riccati solve failed at eps={eps:g}: {exc}",
                    stage="kyp", eps=eps, closest_to_axis=[complex(z) for z in close]) from exc
            sols.append(X)
            eps_used.append(eps)
        if exact_ok:
            try:
                sols.append(_care_min(Aw, Bw, Cw, R))
                eps_used.append(0.0)
            except (la.LinAlgError, ValueError):
                pass
        incs = [np.linalg.norm(sols[k] - sols[k + 1], 2) / max(np.linalg.norm(sols[k], 2), 1e-300)
                for k in range(len(sols) - 1)]
        gap = incs[-1] if incs else 0.0
        path = [_assemble(Q, V, Wb, X, m) for X in sols]
        if incs and gap > opts.path_tol:
            raise ConvergenceError(
                f"regularization path not converged: last increment {gap:.3e} > {opts.path_tol:.1e}",
                stage="kyp", last_iterate=path[-1], increments=incs)
        Xw = sols[-1]
    return _assemble(Q, V, Wb, Xw, m), eps_used, gap, nv, path


def _assemble(Q, V, Wb, Xw, m):
    na = Q.shape[0] - m
    Xa = V @ V.T
    if Wb.shape[1]:
        Xa = Xa + Wb @ Xw @ Wb.T
    Ph = np.zeros((Q.shape[0], Q.shape[0]))
    Ph[:na, :na] = Xa
    Ph[na:, na:] = np.eye(m)
    P = Q @ Ph @ Q.T
    return (P + P.T) / 2


def factorize(P, rank_tol=1e-12) -> np.ndarray:
    """Factor ``P = L^T L`` with ``L`` of full row rank.

    Eigenvalues below ``rank_tol * lambda_max`` are dropped.

    Raises
    ------
    NotPSDError
        If ``lambda_min(P)`` is negative beyond rounding, i.e. below
        ``-max(rank_tol, 64 N eps) * lambda_max``.
    """
    P = np.asarray(P, dtype=float)
    P = (P + P.T) / 2
    lam, U = la.eigh(P)
    top = max(lam[-1], 0.0)
    # eigh is backward stable, so negatives of size N eps ||P|| are noise
    neg_tol = max(rank_tol, 64 * P.shape[0] * np.finfo(float).eps)
    if lam[0] < -neg_tol * max(top, 1.0):
        raise NotPSDError(f"matrix is indefinite: lambda_min = {lam[0]:.3e}", stage="factorize")
    keep = lam > rank_tol * top
    L = np.sqrt(lam[keep])[::-1, None] * U[:, keep][:, ::-1].T
    return L


def solve_dual_min_kyp(fo: StructuredFirstOrder, opts: SolverOptions | None = None) -> KypSolution:
    """Minimal solution of the dual inequality, solved on ``(A^T, C^T, B^T)``."""
    return solve_min_kyp(fo.dual(), opts)
