"""Positive-real balanced truncation with the lift's signature structure.

For the lift, the minimal dual solution is ``S P S``, so one factor
``P = L^T L`` suffices: the signed eigendecomposition of ``L S L^T`` gives
the positive real characteristic values ``sigma`` together with a sign.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import NumericalBreakdownError, PlanningError
from .fo_realization import StructuredFirstOrder, kyp_residual, signature


def _group(values, tol):
    """Consecutive clusters of a descending array, relative tolerance ``tol``."""
    groups = []
    for v in values:
        if groups and abs(groups[-1][0] - v) <= tol * max(abs(groups[-1][0]), 1e-300):
            groups[-1][1] += 1
        else:
            groups.append([float(v), 1])
    return [(s, k) for s, k in groups]


@dataclass
class SignedSpectrum:
    """Signed characteristic values and the eigenvector basis.

    ``sigma_neg`` and ``sigma_pos`` are per-state values, both descending.
    The columns of ``U`` are ordered ``[negatives descending, kernel,
    positives ascending]`` so that the ``sigma = 1`` states sit at both ends.
    """

    sigma_neg: np.ndarray
    sigma_pos: np.ndarray
    U: np.ndarray
    n: int
    kernel_dim: int
    cluster_tol: float = 1e-8

    @property
    def negatives(self):
        return _group(self.sigma_neg, self.cluster_tol)

    @property
    def positives(self):
        return _group(self.sigma_pos, self.cluster_tol)

    @property
    def total_multiplicity(self):
        return len(self.sigma_neg) + len(self.sigma_pos) + self.kernel_dim

    def signed_diagonal(self):
        """Eigenvalues of ``L S L^T`` in the column order of ``U``."""
        k = self.U.shape[0]
        kern = k - len(self.sigma_neg) - len(self.sigma_pos)
        return np.concatenate([-self.sigma_neg, np.zeros(kern), self.sigma_pos[::-1]])

    def rows(self):
        """``(index, sign, sigma, multiplicity)`` per cluster."""
        out = []
        for sign, groups in (("-", self.negatives), ("+", self.positives)):
            for i, (s, k) in enumerate(groups):
                out.append((i, sign, s, k))
        if self.kernel_dim:
            out.append((0, "0", 0.0, self.kernel_dim))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "sign", "sigma", "multiplicity"])
        for i, sign, s, k in self.rows():
            w.writerow([i, sign, repr(float(s)), k])
        return buf.getvalue()

    def to_dict(self):
        return {
            "negatives": [[s, k] for s, k in self.negatives],
            "positives": [[s, k] for s, k in self.positives],
            "kernel_dim": int(self.kernel_dim),
        }


def signed_eigendecomposition(L, n: int, cluster_tol: float = 1e-8, zero_tol: float = 1e-12) -> SignedSpectrum:
    """Eigendecomposition of ``L S_n L^T`` grouped by sign.

    Parameters
    ----------
    L : (k, 2n) array
        Factor with ``P = L^T L``.
    n : int
    cluster_tol : float
        Relative tolerance for grouping equal values.
    zero_tol : float
        Eigenvalues below ``zero_tol * max|lambda|`` count as kernel.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] != 2 * n:
        raise ValueError(f"L must have {2 * n} columns, got {L.shape[1]}")
    s = signature(n)
    Y = (L * s[None, :]) @ L.T
    Y = (Y + Y.T) / 2
    lam, Z = la.eigh(Y)
    top = max(np.max(np.abs(lam)), 1e-300) if lam.size else 1.0
    neg = lam < -zero_tol * top
    pos = lam > zero_tol * top
    mid = ~(neg | pos)
    # lam is ascending: negatives come out descending in |lam|
    ineg = np.flatnonzero(neg)
    ipos = np.flatnonzero(pos)
    imid = np.flatnonzero(mid)
    U = np.hstack([Z[:, ineg], Z[:, imid], Z[:, ipos]])
    return SignedSpectrum(
        sigma_neg=-lam[ineg],
        sigma_pos=lam[ipos][::-1],
        U=U,
        n=n,
        kernel_dim=int(mid.sum()) + (2 * n - L.shape[0]),
        cluster_tol=cluster_tol,
    )


@dataclass
class TruncationPlan:
    r: int
    kept_neg: np.ndarray
    kept_pos: np.ndarray
    truncated_sum_neg: float
    truncated_sum_pos: float
    error_bound: float
    n_one: int
    target_r: int
    spectrum: SignedSpectrum = field(repr=False, default=None)

    def to_dict(self):
        return {
            "r": int(self.r),
            "target_r": int(self.target_r),
            "n_one": int(self.n_one),
            "truncated_sum_neg": float(self.truncated_sum_neg),
            "truncated_sum_pos": float(self.truncated_sum_pos),
            "error_bound": float(self.error_bound),
        }


def _boundaries(sigma, tol):
    b = [0]
    for s, k in _group(sigma, tol):
        b.append(b[-1] + k)
    return b


def plan_truncation(spectrum: SignedSpectrum, target_r: int, cluster_tol: float | None = None,
                    one_tol: float = 1e-6, r_max: int | None = None) -> TruncationPlan:
    """Keep the ``r`` largest values of each sign without splitting clusters.

    ``r`` is the smallest cluster boundary common to both signs that is at
    least ``target_r`` (and at most ``r_max`` when given); failing that, the
    largest common boundary below ``target_r`` that still keeps every
    ``sigma = 1`` state.

    Raises
    ------
    PlanningError
        When no admissible ``r`` exists; ``feasible_r`` lists the common
        boundaries.
    """
    tol = spectrum.cluster_tol if cluster_tol is None else cluster_tol
    sn, sp = spectrum.sigma_neg, spectrum.sigma_pos
    n_one = max(int(np.sum(np.abs(sn - 1) <= one_tol)), int(np.sum(np.abs(sp - 1) <= one_tol)))
    avail = min(len(sn), len(sp))
    if target_r < max(n_one, 1):
        raise PlanningError(f"target_r={target_r} would truncate sigma=1 states (need r >= {n_one})",
                            stage="plan", feasible_r=[])
    if target_r > avail:
        raise PlanningError(f"target_r={target_r} exceeds the {avail} nonzero values available per sign",
                            stage="plan", feasible_r=[])
    common = sorted(set(_boundaries(sn, tol)) & set(_boundaries(sp, tol)))
    common = [c for c in common if c >= max(n_one, 1)]
    hi = r_max if r_max is not None else avail
    up = [c for c in common if target_r <= c <= hi]
    down = [c for c in common if c < target_r]
    if up:
        r = up[0]
    elif down:
        r = down[-1]
    else:
        raise PlanningError(f"no cluster-respecting r with equal sides near target_r={target_r}; "
                            f"feasible r: {common}", stage="plan", feasible_r=common)
    tn = math.fsum(sn[r:])
    tp = math.fsum(sp[r:])
    return TruncationPlan(r=r, kept_neg=np.arange(r), kept_pos=np.arange(r),
                          truncated_sum_neg=tn, truncated_sum_pos=tp, error_bound=2 * (tn + tp),
                          n_one=n_one, target_r=target_r, spectrum=spectrum)


@dataclass
class ReducedStructured:
    """Reduced system ``(Ared, Bred, Bred^T)`` with signature ``diag(-I_r, I_r)``."""

    Ared: np.ndarray
    Bred: np.ndarray
    sigma: np.ndarray
    W: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    residuals: dict = field(default_factory=dict)

    @property
    def r(self):
        return self.Ared.shape[0] // 2

    @property
    def m(self):
        return self.Bred.shape[1]

    @property
    def Sigma1(self):
        return np.diag(self.sigma)

    @property
    def fo(self) -> StructuredFirstOrder:
        return StructuredFirstOrder(self.Ared, self.Bred)


def reduce(fo: StructuredFirstOrder, L, plan: TruncationPlan, tol: float = 1e-10) -> ReducedStructured:
    """Project with ``W^T = Sigma^{-1/2} S_r U_1^T L`` and ``V = S_n L^T U_1 Sigma^{-1/2}``.

    Raises
    ------
    NumericalBreakdownError
        If ``W^T V`` deviates from the identity by more than
        ``tol * ||W|| ||V||``.
    """
    spectrum = plan.spectrum
    r = plan.r
    U = spectrum.U
    U1 = np.hstack([U[:, :r], U[:, U.shape[1] - r:]])
    sig = np.concatenate([spectrum.sigma_neg[:r], spectrum.sigma_pos[:r][::-1]])
    sr = signature(r)
    isq = 1 / np.sqrt(sig)
    L = np.asarray(L, dtype=float)
    Wt = (isq * sr)[:, None] * (U1.T @ L)
    V = (signature(fo.n)[:, None] * (L.T @ U1)) * isq[None, :]
    WtV = Wt @ V
    nWV = np.linalg.norm(Wt, 2) * np.linalg.norm(V, 2)
    dev = np.linalg.norm(WtV - np.eye(2 * r), 2)
    if dev > tol * nWV:
        raise NumericalBreakdownError(
            f"W^T V deviates from identity by {dev:.3e} (> {tol:g} * {nWV:.3e}); revisit rank_tol",
            stage="reduce", deviation=dev)
    A = Wt @ fo.A @ V
    B = Wt @ fo.B
    nA = max(np.linalg.norm(A, 2), 1e-300)
    res = {
        "WtV_deviation": float(dev / nWV),
        "signature_symmetry_raw": float(np.linalg.norm(sr[:, None] * A * sr[None, :] - A.T) / nA),
        "input_top_block_raw": float(np.linalg.norm(B[:r]) / max(np.linalg.norm(B), 1e-300)),
    }
    A = (A + sr[:, None] * A.T * sr[None, :]) / 2
    B = B.copy()
    B[:r] = 0.0
    red = ReducedStructured(Ared=A, Bred=B, sigma=sig, W=Wt.T, V=V, residuals=res)
    kr = kyp_residual(red.fo, red.Sigma1)
    res["kyp_sigma1_lmi_max_eig"] = kr["lmi_max_eig"]
    res["kyp_sigma1_coupling"] = kr["coupling_norm"]
    kd = kyp_residual(red.fo.dual(), red.Sigma1)
    res["kyp_dual_lmi_max_eig"] = kd["lmi_max_eig"]
    return red
