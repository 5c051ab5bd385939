"""Recovery of a second-order realization from a reduced structured system.

The reduced coordinates are ordered ``[N1 | neg-mid | pos-mid | P1]`` where
``N1``/``P1`` hold the ``sigma = 1`` states (``m + ell`` per sign). Only the
zero-dynamics block on ``[neg-mid | pos-mid]`` obstructs the second-order
form. It is diagonalized by an S-orthogonal transform (complex pairs turned
by a hyperbolic rotation so that their upper-left entry vanishes), real
zeros are paired across types and mixed by hyperbolic 2x2 transforms, and
the block ``[[0, G^T], [-G, -D]]`` is read off.

Sign conventions. For a real eigenvector ``v`` the pole type is
``sign(v^T S v)``; zeros of the reduced system are the eigenvalues of the
zero-dynamics block with zero type ``-sign(v^T S v)``. ``mu_plus`` are the
zeros of positive zero type, ``mu_minus`` those of negative zero type.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.optimize import linear_sum_assignment

from .errors import (
    AssemblyError,
    DegenerateSignError,
    NotDiagonalizableError,
    OverdampingViolation,
    PreconditionError,
    StabilityViolationError,
    StructureError,
)
from .fo_realization import StructuredFirstOrder, moments_reconstruct, signature, system_zeros
from .prbt import ReducedStructured
from .so_model import SecondOrderSystem, is_overdamped

THETA0 = np.array([[-1.0, 1.0], [1.0, 1.0]]) / np.sqrt(2)
J1 = np.array([[0.0, 1.0], [1.0, 0.0]])
S1 = np.diag([-1.0, 1.0])


def _sig_vec(S):
    S = np.asarray(S, dtype=float)
    return np.diag(S) if S.ndim == 2 else S


# -- block identification --------------------------------------------------------

@dataclass
class BalancedBlocks:
    """Block sizes ``(m, ell, p, p, ell, m)`` and the realization in that form."""

    m: int
    ell: int
    p: int
    A: np.ndarray
    B: np.ndarray
    T: np.ndarray
    residual: float

    @property
    def sizes(self):
        return (self.m, self.ell, self.p, self.p, self.ell, self.m)

    @property
    def n1(self):
        return self.m + self.ell

    @property
    def mid(self):
        return slice(self.n1, self.n1 + 2 * self.p)

    @property
    def last(self):
        return slice(self.A.shape[0] - self.m, self.A.shape[0])


def balanced_form_mask(m, ell, p):
    """Boolean mask of the entries allowed to be nonzero in the balanced form."""
    sizes = [m, ell, p, p, ell, m]
    allowed = [
        [0, 0, 0, 0, 0, 1],
        [0, 0, 0, 0, 1, 1],
        [0, 0, 1, 1, 0, 1],
        [0, 0, 1, 1, 0, 1],
        [0, 1, 0, 0, 0, 0],
        [1, 1, 1, 1, 0, 1],
    ]
    edges = np.concatenate([[0], np.cumsum(sizes)])
    N = edges[-1]
    mask = np.zeros((N, N), dtype=bool)
    for i in range(6):
        for j in range(6):
            if allowed[i][j]:
                mask[edges[i]:edges[i + 1], edges[j]:edges[j + 1]] = True
    return mask


def identify_balanced_blocks(red: ReducedStructured, tol_one: float = 1e-6, struct_tol: float = 1e-6) -> BalancedBlocks:
    """Split the ``sigma = 1`` groups into ``m`` and ``ell`` blocks.

    Orthogonal rotations inside each ``sigma = 1`` group separate the range
    of the input map (last ``m`` states) from the ``ell`` states coupled to
    nonzero imaginary zeros. The rotations keep both the signature and the
    diagonal KYP solution intact.

    Raises
    ------
    StructureError
        On unequal ``sigma = 1`` counts per sign, a negative ``ell``, or a
        balanced-form residual above ``struct_tol``.
    """
    r, m = red.r, red.m
    sig = red.sigma
    n1n = int(np.sum(np.abs(sig[:r] - 1) <= tol_one))
    n1p = int(np.sum(np.abs(sig[r:] - 1) <= tol_one))
    if n1n != n1p:
        raise StructureError(f"sigma=1 counts differ per sign ({n1n} vs {n1p})", stage="blocks")
    ell = n1n - m
    if ell < 0:
        raise StructureError(f"boundary group of size {2 * n1n} is smaller than 2m = {2 * m}", stage="blocks")
    n1 = n1n
    p = r - n1
    N = 2 * r
    A, B = red.Ared, red.Bred
    T = np.eye(N)
    if n1:
        P1 = slice(N - n1, N)
        N1 = slice(0, n1)
        Qp, _ = la.qr(B[P1], mode="full")
        Qp = np.hstack([Qp[:, m:], Qp[:, :m]])          # [ell | m]
        coup = A[N1, P1] @ Qp[:, :ell]                   # N1 -> ell-part of P1
        if ell:
            Qn, _ = la.qr(coup, mode="full")
            Qn = np.hstack([Qn[:, ell:], Qn[:, :ell]])   # [m | ell]
        else:
            Qn = np.eye(n1)
        T[N1, N1] = Qn
        T[P1, P1] = Qp
    Ab = T.T @ A @ T
    Bb = T.T @ B
    mask = balanced_form_mask(m, ell, p)
    nA = max(np.linalg.norm(Ab, 2), 1e-300)
    res = float(max(np.linalg.norm(Ab[~mask]) / nA,
                    np.linalg.norm(Bb[: N - m]) / max(np.linalg.norm(Bb), 1e-300)))
    if res > struct_tol:
        raise StructureError(f"reduced system is not in balanced block form (residual {res:.3e})",
                             stage="blocks", residual=res)
    Ab = np.where(mask, Ab, 0.0)
    Bb = Bb.copy()
    Bb[: N - m] = 0.0
    return BalancedBlocks(m=m, ell=ell, p=p, A=Ab, B=Bb, T=T, residual=res)


# -- zero dynamics ------------------------------------------------------------------

@dataclass
class ZeroDynamics:
    Az: np.ndarray
    Bz: np.ndarray
    Cz: np.ndarray
    Dz: np.ndarray
    eigs: np.ndarray
    zero_match: float


def zero_dynamics_block(red: ReducedStructured, blocks: BalancedBlocks, check_zeros: bool = True,
                        stab_tol: float = 1e-10) -> ZeroDynamics:
    """Extract ``[Az, Bz, Cz, Dz]`` and check it against the reduced zeros.

    Raises
    ------
    StabilityViolationError
        If ``Az`` has an eigenvalue with real part above ``-stab_tol * ||Az||``.
    """
    A = blocks.A
    mid, last = blocks.mid, blocks.last
    p = blocks.p
    Az = A[mid, mid]
    Bz = A[mid, last]
    Cz = Bz.T * signature(p)[None, :]
    Dz = -A[last, last]
    Dz = (Dz + Dz.T) / 2
    ev = la.eigvals(Az) if p else np.zeros(0, dtype=complex)
    nz = max(np.linalg.norm(Az, 2), 1.0) if p else 1.0
    if p and np.max(ev.real) >= -stab_tol * nz:
        raise StabilityViolationError(
            f"zero-dynamics block has eigenvalue {ev[np.argmax(ev.real)]:.6g} outside the open left half-plane",
            stage="zero_dynamics")
    match = 0.0
    if check_zeros and p:
        zl = system_zeros(red.fo)
        z = zl.all_zeros()
        scale = max(np.linalg.norm(red.Ared, 2), 1.0)
        z = z[z.real < -1e-8 * scale]
        if len(z) != len(ev):
            match = np.inf
        else:
            C = np.abs(z[:, None] - ev[None, :])
            i, j = linear_sum_assignment(C)
            match = float(np.max(C[i, j]) / max(np.max(np.abs(ev)), 1e-300))
    return ZeroDynamics(Az=Az, Bz=Bz, Cz=Cz, Dz=Dz, eigs=ev, zero_match=match)


# -- indefinite diagonalization -----------------------------------------------------

@dataclass
class SignTypedEigen:
    """Eigen data of an S-self-adjoint matrix.

    ``real_eigs`` holds ``(lam, type, v)`` with ``type = sign(v^T S v)`` and
    ``|v^T S v| = 1``; ``complex_pairs`` holds dicts with ``sigma``, ``tau``,
    the transformed block ``[[0, nu], [-nu, eta]]`` and ``theta``.
    """

    real_eigs: list
    complex_pairs: list
    T: np.ndarray = field(repr=False, default=None)
    form: np.ndarray = field(repr=False, default=None)
    n_complex: int = 0
    n_neg_real: int = 0
    n_pos_real: int = 0

    @property
    def neg_type(self):
        return np.array(sorted(l for l, t, _ in self.real_eigs if t < 0))

    @property
    def pos_type(self):
        return np.array(sorted(l for l, t, _ in self.real_eigs if t > 0))


def theta_block(sigma, tau):
    """Congruence ``Theta`` for the complex pair ``sigma +- i tau``.

    Returns ``(Theta, block)`` where ``Theta^T J1 Theta = diag(-1, 1)`` and
    ``block = Theta^{-1} P Theta = [[0, nu], [-nu, eta]]`` with
    ``P = [[sigma, tau], [-tau, sigma]]``, ``eta = 2 sigma`` and ``nu < 0``.
    """
    if tau == 0:
        raise PreconditionError("theta_block needs a nonreal pair (tau != 0)")
    P = np.array([[sigma, tau], [-tau, sigma]])
    # Theta0^{-1} = S1 Theta0^T J1
    B0 = S1 @ THETA0.T @ J1 @ P @ THETA0
    x, y, z = B0[0, 0], B0[0, 1], B0[1, 1]
    rho = np.sqrt(4 * y * y - (x - z) ** 2)
    sg = np.sign(2 * y)
    v0 = np.arctanh((x - z) / (2 * y))
    v = np.arcsinh(-(x + z) * sg / rho) - v0
    u = v / 2
    H = np.array([[np.cosh(u), np.sinh(u)], [np.sinh(u), np.cosh(u)]])
    Th = THETA0 @ H
    blk = S1 @ Th.T @ J1 @ P @ Th
    if blk[0, 1] > 0:
        F = np.diag([1.0, -1.0])
        Th = Th @ F
        blk = F @ blk @ F
    return Th, blk


def _bilinear_orthonormalize(X, s, tol):
    """Basis ``Y`` of ``span X`` with ``Y^T diag(s) Y = I`` (complex bilinear)."""
    X = X.astype(complex).copy()
    k = X.shape[1]
    out = []
    for _ in range(k):
        g = np.einsum("ij,i,ij->j", X, s, X)
        j = int(np.argmax(np.abs(g)))
        if abs(g[j]) <= tol:
            G = X.T @ (s[:, None] * X)
            a, b = np.unravel_index(np.argmax(np.abs(G)), G.shape)
            if abs(G[a, b]) <= tol:
                raise DegenerateSignError("complex eigenvector is S-neutral", stage="sign_typing")
            X[:, a] = X[:, a] + X[:, b]
            g = np.einsum("ij,i,ij->j", X, s, X)
            j = int(np.argmax(np.abs(g)))
        v = X[:, j] / np.sqrt(g[j])
        out.append(v)
        X = np.delete(X, j, axis=1)
        X = X - np.outer(v, v @ (s[:, None] * X))
    return np.column_stack(out)


def _clusters(ev, tol):
    done = np.zeros(len(ev), dtype=bool)
    groups = []
    for i in np.argsort(ev.real, kind="stable"):
        if done[i]:
            continue
        g = np.flatnonzero((~done) & (np.abs(ev - ev[i]) <= tol))
        done[g] = True
        groups.append(g)
    return groups


def _check_semisimple(sv, k, lam, nA, tol=1e-6):
    # a cluster of k eigenvalues needs a k-dimensional eigenspace
    if sv[len(sv) - k] > tol * nA:
        raise NotDiagonalizableError(
            f"eigenvalue {lam:.6g} has algebraic multiplicity {k} but a smaller eigenspace",
            stage="sign_typing")


def sign_typed_diagonalize(S, A, tol: float = 1e-8, cond_max: float = 1e8,
                           sa_tol: float = 1e-8) -> SignTypedEigen:
    """S-orthogonal diagonalization of an S-self-adjoint matrix.

    Returns ``SignTypedEigen`` whose ``T`` satisfies
    ``T^T S T = diag(-I_h, I_h)`` (``h = n/2`` when the inertia of ``S`` is
    balanced, otherwise the split of ``S``). The columns are ordered
    ``[complex first halves, negative-type reals | positive-type reals,
    complex second halves]``; reals ascending within each type. In these
    coordinates ``T^{-1} A T`` is diagonal on the reals and couples the
    ``i``-th complex first half only with the ``i``-th complex second half
    through ``[[0, nu], [-nu, eta]]``.

    Raises
    ------
    PreconditionError
        If ``S A != A^T S``.
    NotDiagonalizableError
        If the eigenvector condition number exceeds ``cond_max``.
    DegenerateSignError
        If a real eigenvector has ``|v^T S v| <= tol``.
    """
    s = _sig_vec(S)
    A = np.asarray(A, dtype=float)
    N = A.shape[0]
    if N == 0:
        return SignTypedEigen([], [], T=np.zeros((0, 0)), form=np.zeros((0, 0)))
    nA = max(np.linalg.norm(A, 2), 1e-300)
    if np.linalg.norm(s[:, None] * A - A.T * s[None, :]) > sa_tol * nA:
        raise PreconditionError("matrix is not S-self-adjoint", stage="sign_typing")
    ev, Vc = la.eig(A)
    Vn = Vc / np.linalg.norm(Vc, axis=0)
    cond = np.linalg.cond(Vn)
    if not np.isfinite(cond) or cond > cond_max:
        raise NotDiagonalizableError(
            f"eigenvector condition number {cond:.3e} exceeds {cond_max:.1e}; non-semi-simple "
            "eigenvalues need a perturbation repair, which is not implemented", stage="sign_typing")
    ctol = 1e-8 * max(nA, 1.0)
    ev = np.where(np.abs(ev.imag) <= ctol, ev.real + 0j, ev)
    reals, cplx = [], []
    for g in _clusters(ev, ctol * 10):
        lam = np.mean(ev[g])
        k = len(g)
        if lam.imag < -ctol:
            continue
        if abs(lam.imag) <= ctol:
            lam = float(lam.real)
            _, sv, Vh = la.svd(A - lam * np.eye(N))
            _check_semisimple(sv, k, lam, nA)
            X = Vh[N - k:].T
            G = X.T @ (s[:, None] * X)
            gv, Y = la.eigh((G + G.T) / 2)
            if np.min(np.abs(gv)) <= tol:
                raise DegenerateSignError(
                    f"eigenvalue {lam:.6g} has an S-neutral eigenvector (|v^T S v| = {np.min(np.abs(gv)):.2e})",
                    stage="sign_typing", eigenvalue=lam)
            Xs = (X @ Y) / np.sqrt(np.abs(gv))[None, :]
            for j in range(k):
                reals.append((lam, int(np.sign(gv[j])), Xs[:, j]))
        else:
            _, sv, Vh = la.svd(A - lam * np.eye(N))
            _check_semisimple(sv, k, lam, nA)
            X = Vh[N - k:].conj().T
            Vb = _bilinear_orthonormalize(X, s, tol)
            for j in range(k):
                v = Vb[:, j]
                u1 = v.real - v.imag
                u2 = v.real + v.imag
                Th, blk = theta_block(float(lam.real), float(lam.imag))
                cols = np.column_stack([u1, u2]) @ Th
                cplx.append({"sigma": float(lam.real), "tau": float(lam.imag), "block": blk,
                             "theta": Th, "cols": cols})
    neg = sorted([e for e in reals if e[1] < 0], key=lambda e: e[0])
    pos = sorted([e for e in reals if e[1] > 0], key=lambda e: e[0])
    cols = ([c["cols"][:, 0] for c in cplx] + [e[2] for e in neg]
            + [e[2] for e in pos] + [c["cols"][:, 1] for c in cplx])
    T = np.column_stack(cols)
    form = np.linalg.solve(T, A @ T)
    pairs = [{k: v for k, v in c.items() if k != "cols"} for c in cplx]
    return SignTypedEigen(real_eigs=neg + pos, complex_pairs=pairs, T=T, form=form,
                          n_complex=len(cplx), n_neg_real=len(neg), n_pos_real=len(pos))


def right_symmetry_pattern(n_complex, n_neg, n_pos):
    """Mask of entries allowed nonzero in the canonical form of the layout above."""
    N = 2 * n_complex + n_neg + n_pos
    mask = np.zeros((N, N), dtype=bool)
    c = n_complex
    for i in range(c):
        j = N - c + i
        mask[i, j] = mask[j, i] = mask[j, j] = True
    for i in range(c, N - c):
        mask[i, i] = True
    return mask


# -- condition, padding, de-balancing ------------------------------------------------

@dataclass
class ConditionResult:
    condition_ok: bool
    mu_minus: np.ndarray
    mu_plus: np.ndarray
    counts_equal: bool


def check_condition_lists(mu_minus, mu_plus) -> ConditionResult:
    """Index-wise test ``mu_minus[i] < mu_plus[i]`` after sorting ascending."""
    mm = np.sort(np.asarray(mu_minus, dtype=float))
    mp = np.sort(np.asarray(mu_plus, dtype=float))
    eq = len(mm) == len(mp)
    ok = bool(eq and np.all(mm < mp))
    return ConditionResult(condition_ok=ok, mu_minus=mm, mu_plus=mp, counts_equal=eq)


def check_condition(zeros_typed: SignTypedEigen) -> ConditionResult:
    """Condition on the typed real zeros of the zero-dynamics block.

    Zero type is the negated pole type, so ``mu_plus`` collects the
    eigenvalues with ``v^T S v < 0``.
    """
    return check_condition_lists(zeros_typed.pos_type, zeros_typed.neg_type)


def pad_spectrum(mu_minus, mu_plus):
    """Append synthetic typed zeros until the pairing condition holds.

    New ``mu_plus`` values start at ``max(mu_minus[-1], mu_plus[-1]) / 2`` and
    halve toward zero; new ``mu_minus`` values start at
    ``2 min(mu_minus[0], mu_plus[0])`` and double away from it.

    Returns
    -------
    mu_minus, mu_plus : ndarray
        Padded lists, sorted ascending.
    added_minus, added_plus : ndarray
        The synthetic values (``added_minus`` sorted ascending).
    """
    mm = np.sort(np.asarray(mu_minus, dtype=float))
    mp = np.sort(np.asarray(mu_plus, dtype=float))
    k = len(mm)
    if len(mp) != k:
        raise PreconditionError("padding needs equal counts of both zero types")
    if k == 0 or np.all(mm < mp):
        return mm, mp, np.zeros(0), np.zeros(0)
    hi = max(mm[-1], mp[-1])
    lo = min(mm[0], mp[0])
    for s in range(1, k + 1):
        add_p = hi / 2.0 ** np.arange(1, s + 1)            # ascending toward 0
        add_m = (lo * 2.0 ** np.arange(1, s + 1))[::-1]    # ascending
        nm = np.concatenate([add_m, mm])
        npl = np.concatenate([mp, add_p])
        if np.all(nm < npl):
            return nm, npl, add_m, add_p
    raise AssertionError("padding with k values always succeeds")


def debalance_pairs(mu_pairs):
    """Hyperbolic 2x2 transforms for pairs ``(mu_minus, mu_plus)``.

    For each pair, ``T_i = [[a, b], [b, a]]`` with
    ``a^2 = mu_minus / (mu_minus - mu_plus)`` and
    ``b^2 = mu_plus / (mu_minus - mu_plus)``. Acting on
    ``diag(mu_plus, mu_minus)`` it zeroes the (1,1) entry.

    Returns
    -------
    list of (2, 2) ndarray
    """
    out = []
    for mm, mp in mu_pairs:
        if not (mm < mp < 0):
            raise PreconditionError(f"pair ordering violated: need mu_minus < mu_plus < 0, got ({mm}, {mp})",
                                    stage="debalance")
        a = np.sqrt(mm / (mm - mp))
        b = np.sqrt(mp / (mm - mp))
        out.append(np.array([[a, b], [b, a]]))
    return out


# -- assembly --------------------------------------------------------------------

@dataclass
class ReducedSecondOrder:
    """``p'' + D p' + G G^T p = B u``, ``y = B^T p'`` with identity mass."""

    D: np.ndarray
    G: np.ndarray
    B: np.ndarray

    @property
    def r(self):
        return self.D.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def M(self):
        return np.eye(self.r)

    @property
    def K(self):
        K = self.G @ self.G.T
        return (K + K.T) / 2

    def to_system(self) -> SecondOrderSystem:
        return SecondOrderSystem(self.M, self.D, self.K, self.B)

    def first_order(self) -> StructuredFirstOrder:
        r = self.r
        A = np.block([[np.zeros((r, r)), self.G.T], [-self.G, -self.D]])
        B = np.vstack([np.zeros((r, self.m)), self.B])
        return StructuredFirstOrder(A, B)


def assemble_second_order(A, B, tol: float = 1e-8) -> ReducedSecondOrder:
    """Read ``G``, ``D``, ``B`` off ``A = [[0, G^T], [-G, -D]]``.

    Raises
    ------
    AssemblyError
        If the upper-left block or the top input block exceeds
        ``tol * ||A||``.
    """
    N = A.shape[0]
    h = N // 2
    nA = max(np.linalg.norm(A, 2), 1e-300)
    res = np.linalg.norm(A[:h, :h], 2) / nA
    resb = np.linalg.norm(B[:h]) / max(np.linalg.norm(B), 1e-300)
    if res > tol or resb > tol:
        raise AssemblyError(f"upper-left block residual {res:.3e} (input {resb:.3e}) exceeds {tol:.1e}",
                            stage="assembly", residual=float(res))
    G = (A[:h, h:].T - A[h:, :h]) / 2
    D = -(A[h:, h:] + A[h:, h:].T) / 2
    return ReducedSecondOrder(D=D, G=G, B=B[h:].copy())


@dataclass
class RecoveryReport:
    condition_ok: bool
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    padding: list
    final_r: int
    ell: int
    p: int
    transforms: list
    result: ReducedSecondOrder
    residuals: dict = field(default_factory=dict)
    weak_modes: list = field(default_factory=list)
    n_complex: int = 0
    A_padded: np.ndarray = field(repr=False, default=None)
    B_padded: np.ndarray = field(repr=False, default=None)
    T_total: np.ndarray = field(repr=False, default=None)

    def to_dict(self, emit_transforms=False):
        d = {
            "condition_ok": bool(self.condition_ok),
            "mu_plus": [float(x) for x in self.mu_plus],
            "mu_minus": [float(x) for x in self.mu_minus],
            "padding": [[float(a), float(b)] for a, b in self.padding],
            "final_r": int(self.final_r),
            "ell": int(self.ell),
            "p": int(self.p),
            "complex_pairs": int(self.n_complex),
            "weak_modes": self.weak_modes,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "transforms": [
                {"name": t["name"], "kind": t["kind"], "shape": list(t["matrix"].shape),
                 **({"matrix": t["matrix"].tolist()} if emit_transforms else {})}
                for t in self.transforms
            ],
        }
        return d


def recover(red: ReducedStructured, tol_one: float = 1e-6, assembly_tol: float = 1e-8,
            cond_max: float = 1e8, sign_tol: float = 1e-8, weak_tol: float = 1e-10,
            check_zeros: bool = True) -> RecoveryReport:
    """Full recovery pipeline from a reduced structured system.

    Returns
    -------
    RecoveryReport
    """
    blocks = identify_balanced_blocks(red, tol_one)
    zd = zero_dynamics_block(red, blocks, check_zeros=check_zeros)
    m, ell, p = blocks.m, blocks.ell, blocks.p
    n1 = m + ell
    r = red.r
    transforms = [{"name": "balanced_blocks", "kind": "orthogonal", "matrix": blocks.T}]

    st = sign_typed_diagonalize(signature(p), zd.Az, tol=sign_tol, cond_max=cond_max)
    c = st.n_complex
    k = st.n_neg_real
    Tz = np.eye(2 * r)
    if p:
        Tz[blocks.mid, blocks.mid] = st.T
    # Eigenvector signs are arbitrary, and the pair mixing below is not
    # invariant under flipping one side of a pair (it swaps [[a, b], [b, a]]
    # for [[a, -b], [-b, a]]). Fix each real column so its coupling into
    # the input block has a positive leading entry.
    A1 = np.linalg.solve(Tz, blocks.A @ Tz)
    last = blocks.last
    for i in range(c, 2 * p - c):
        idx = n1 + i
        row = A1[idx, last]
        key = row if np.linalg.norm(row) > 1e-12 * max(np.linalg.norm(A1, 2), 1e-300) else Tz[:, idx]
        if key[np.argmax(np.abs(key))] < 0:
            Tz[:, idx] *= -1
    transforms.append({"name": "zero_dynamics_diagonalize", "kind": "S-orthogonal", "matrix": Tz})
    A1 = np.linalg.solve(Tz, blocks.A @ Tz)
    B1 = np.linalg.solve(Tz, blocks.B)

    # weakly coupled real zero modes (controllability/observability via last block)
    bnorm = max(np.linalg.norm(red.Bred, 2), 1e-300)
    weak = []
    last = blocks.last
    for i in range(c, 2 * p - c):
        idx = n1 + i
        ai = A1[idx, last]
        bi = A1[last, idx]
        if np.max(np.abs(ai) * np.abs(bi)) <= weak_tol * bnorm:
            weak.append(int(i))

    cond = check_condition(st)
    mu_m, mu_p = cond.mu_minus, cond.mu_plus
    padding = []
    if not cond.condition_ok:
        mu_m, mu_p, add_m, add_p = pad_spectrum(cond.mu_minus, cond.mu_plus)
        padding = list(zip(add_p.tolist(), add_m.tolist()))
    s = len(padding)

    # padded realization: coordinates [N1, cplx1, neg reals (+ added mu_plus) |
    #                                   (added mu_minus +) pos reals, cplx2, P1]
    h = r + s
    Ap = np.zeros((2 * h, 2 * h))
    Bp = np.zeros((2 * h, m))
    # the old pos block [pos reals (k), cplx2 (c), P1 (n1)] shifts by s
    old_idx = np.arange(2 * r)
    new_idx = np.concatenate([np.arange(r), np.arange(h + s, 2 * h)])
    Ap[np.ix_(new_idx, new_idx)] = A1[np.ix_(old_idx, old_idx)]
    Bp[new_idx] = B1[old_idx]
    for j, (ap, am) in enumerate(padding):
        Ap[n1 + c + k + j, n1 + c + k + j] = ap
        Ap[h + j, h + j] = am

    # pair i: neg coordinate holding mu_plus[i], pos coordinate holding mu_minus[i]
    q = k + s
    Td = np.eye(2 * h)
    if q:
        negc = n1 + c + np.arange(q)
        posc = h + np.arange(q)
        for i, Ti in enumerate(debalance_pairs(list(zip(mu_m, mu_p)))):
            Td[negc[i], negc[i]] = Ti[0, 0]
            Td[negc[i], posc[i]] = Ti[0, 1]
            Td[posc[i], negc[i]] = Ti[1, 0]
            Td[posc[i], posc[i]] = Ti[1, 1]
        # the ordering inside Ap already matches ascending mu_plus / mu_minus
        dvals = np.diag(Ap)
        if (np.max(np.abs(dvals[negc] - mu_p)) > 1e-8 * max(1.0, np.max(np.abs(mu_p)))
                or np.max(np.abs(dvals[posc] - mu_m)) > 1e-8 * max(1.0, np.max(np.abs(mu_m)))):
            raise StructureError("typed zero ordering inconsistent with the pairing", stage="debalance")
    transforms.append({"name": "debalance", "kind": "S-orthogonal", "matrix": Td})
    Sd = signature(h)
    Tdi = Sd[:, None] * Td.T * Sd[None, :]
    A2 = Tdi @ Ap @ Td
    B2 = Tdi @ Bp

    res = {
        "balanced_form": blocks.residual,
        "zero_match": zd.zero_match,
        "sign_form": float(np.linalg.norm(st.form[~right_symmetry_pattern(c, k, st.n_pos_real)])
                           / max(np.linalg.norm(zd.Az, 2), 1e-300)) if p else 0.0,
    }
    nA = max(np.linalg.norm(A2, 2), 1e-300)
    res["assembly_upper_left"] = float(np.linalg.norm(A2[:h, :h], 2) / nA)
    result = assemble_second_order(A2, B2, tol=assembly_tol)

    # full S-orthogonal transform on the padded space
    Tpad = np.eye(2 * h)
    Tpad[np.ix_(new_idx, new_idx)] = (blocks.T @ Tz)[np.ix_(old_idx, old_idx)]
    T_total = Tpad @ Td
    Ap_red = np.zeros((2 * h, 2 * h))
    Ap_red[np.ix_(new_idx, new_idx)] = red.Ared[np.ix_(old_idx, old_idx)]
    for j, (ap, am) in enumerate(padding):
        Ap_red[n1 + c + k + j, n1 + c + k + j] = ap
        Ap_red[h + j, h + j] = am
    Bp_red = np.zeros((2 * h, m))
    Bp_red[new_idx] = red.Bred[old_idx]
    res["transform_replay"] = float(np.linalg.norm(Ap_red @ T_total - T_total @ A2, 2)
                                    / max(np.linalg.norm(Ap_red, 2), 1e-300))
    return RecoveryReport(condition_ok=cond.condition_ok, mu_plus=cond.mu_plus, mu_minus=cond.mu_minus,
                          padding=padding, final_r=h, ell=ell, p=p, transforms=transforms,
                          result=result, residuals=res, weak_modes=weak, n_complex=c,
                          A_padded=Ap_red, B_padded=Bp_red, T_total=T_total)


def moments_check(report: RecoveryReport) -> dict:
    """Compare ``(I, D, K)`` with the moments of the padded reduced realization."""
    res = report.result
    h = res.r
    T = report.T_total
    Sd = signature(h)
    Tinv = Sd[:, None] * T.T * Sd[None, :]
    Y = T[:, h:]
    Xf = np.hstack([np.linalg.inv(res.G).T, np.zeros((h, h))])
    X = Xf @ Tinv
    M, D, K = moments_reconstruct(report.A_padded, Y, X)
    scale = max(np.linalg.norm(res.K, 2), np.linalg.norm(res.D, 2), 1.0)
    return {
        "M": float(np.linalg.norm(M - np.eye(h), 2)),
        "D": float(np.linalg.norm(D - res.D, 2) / scale),
        "K": float(np.linalg.norm(K - res.K, 2) / scale),
    }


def overdamped_pipeline_check(original: SecondOrderSystem, result: ReducedSecondOrder, tol=None) -> dict:
    """Check that overdamping survived the reduction.

    Raises
    ------
    PreconditionError
        If ``original`` is not overdamped.
    OverdampingViolation
        If any preserved property fails.
    """
    if not is_overdamped(original).overdamped:
        raise PreconditionError("original system is not overdamped; check skipped", stage="overdamping")
    lamD = la.eigvalsh(result.D)
    lamK = la.eigvalsh(result.K)
    od = is_overdamped(result.to_system()) if lamD[0] > 0 else None
    fo = result.first_order()
    st = sign_typed_diagonalize(fo.signature, fo.A)
    neg = st.neg_type
    pos = st.pos_type
    out = {
        "D_min_eig": float(lamD[0]),
        "K_min_eig": float(lamK[0]),
        "overdamped": bool(od.overdamped) if od else False,
        "n_complex_poles": int(st.n_complex),
        "neg_type_poles": neg.tolist(),
        "pos_type_poles": pos.tolist(),
        # observed orientation: with S = diag(-I, I) the positive-type poles lie below
        "separated": bool(st.n_complex == 0 and (len(pos) == 0 or len(neg) == 0 or pos.max() < neg.min())),
    }
    fails = [k for k, ok in (("D_positive_definite", lamD[0] > 0), ("K_positive_definite", lamK[0] > 0),
                             ("overdamped", out["overdamped"]), ("real_poles", st.n_complex == 0),
                             ("type_separation", out["separated"])) if not ok]
    out["failures"] = fails
    if fails:
        raise OverdampingViolation(f"overdamping not preserved: {', '.join(fails)}", stage="overdamping",
                                   report=out)
    return out
