"""End-to-end reduction: lift, minimal KYP, balanced truncation, recovery."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DefinitenessError, ParameterError, StructureError
from .fo_realization import StructuredFirstOrder, fo_frequency_response, lift
from .kyp import SolverOptions, factorize, solve_min_kyp
from .prbt import ReducedStructured, SignedSpectrum, TruncationPlan, plan_truncation, reduce, signed_eigendecomposition
from .recovery import RecoveryReport, ReducedSecondOrder, moments_check, recover
from .so_model import SecondOrderSystem, frequency_response, validate

SCHEMA_VERSION = "1.0"

# acceptance thresholds re-verified on every successful run
THRESHOLDS = {
    "kyp_lmi": 1e-6,
    "kyp_coupling": 1e-8,
    "kyp_eig_minus_identity": 1e-6,
    "WtV_deviation": 1e-8,
    "balanced_form": 1e-6,
    "transform_replay": 1e-8,
    "assembly_upper_left": 1e-8,
    "moments": 1e-6,
}


@dataclass(frozen=True)
class PipelineOptions:
    cluster_tol: float = 1e-8
    tol_one: float = 1e-6
    rank_tol: float = 1e-12
    path_tol: float = 1e-7
    assembly_tol: float = 1e-8
    semi_simple_cond: float = 1e8
    r_max: int | None = None
    check_zeros: bool = True

    def __post_init__(self):
        for name in ("cluster_tol", "tol_one", "rank_tol", "path_tol", "assembly_tol", "semi_simple_cond"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive", stage="config")


@dataclass
class PipelineResult:
    original: SecondOrderSystem
    fo: StructuredFirstOrder
    spectrum: SignedSpectrum
    plan: TruncationPlan
    reduced_fo: ReducedStructured
    recovery: RecoveryReport
    kyp: dict
    timings: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def reduced(self) -> ReducedSecondOrder:
        return self.recovery.result

    def report(self, emit_transforms=False) -> dict:
        res = self.reduced
        lamD = np.linalg.eigvalsh(res.D)
        lamK = np.linalg.eigvalsh(res.K)
        rec = self.recovery.to_dict(emit_transforms)
        return {
            "schema_version": SCHEMA_VERSION,
            "n": int(self.original.n),
            "m": int(self.original.m),
            "target_r": int(self.plan.target_r),
            "r": int(self.plan.r),
            "final_r": int(self.recovery.final_r),
            "error_bound": float(self.plan.error_bound),
            "plan": self.plan.to_dict(),
            "spectrum": self.spectrum.to_dict(),
            "kyp": self.kyp,
            "reduce_residuals": {k: float(v) for k, v in self.reduced_fo.residuals.items()},
            "condition": {
                "condition_ok": rec["condition_ok"],
                "mu_plus": rec["mu_plus"],
                "mu_minus": rec["mu_minus"],
                "padding": rec["padding"],
            },
            "recovery": rec,
            "reduced": {
                "D_eigs_min": float(lamD[0]),
                "D_eigs_max": float(lamD[-1]),
                "D_negative_count": int(np.sum(lamD < 0)),
                "K_min_eig": float(lamK[0]),
            },
            "checks": self.checks,
            "timings": {k: float(v) for k, v in self.timings.items()},
        }


def _stage(name, timings):
    class _T:
        def __enter__(self):
            self.t = time.perf_counter()

        def __exit__(self, et, ev, tb):
            timings[name] = time.perf_counter() - self.t
            if ev is not None and getattr(ev, "stage", "x") is None:
                ev.stage = name
            return False
    return _T()


def verify(result: PipelineResult) -> dict:
    """Recompute the invariant residuals from the outputs and compare with thresholds.

    Returns a dict of ``{name: (value, threshold, ok)}``.
    """
    fo, red, rec = result.fo, result.reduced_fo, result.recovery
    k = result.kyp["residuals"]
    nP = max(result.kyp.get("P_norm", 1.0), 1.0)
    out = {
        "kyp_lmi": (k["lmi_max_eig"] / nP, THRESHOLDS["kyp_lmi"]),
        "kyp_coupling": (k["coupling_norm"] / max(np.linalg.norm(fo.B, 2), 1e-300), THRESHOLDS["kyp_coupling"]),
        "kyp_eig_minus_identity": (k["max_eig_minus_identity"], THRESHOLDS["kyp_eig_minus_identity"]),
        "WtV_deviation": (red.residuals["WtV_deviation"], THRESHOLDS["WtV_deviation"]),
        "balanced_form": (rec.residuals["balanced_form"], THRESHOLDS["balanced_form"]),
        "transform_replay": (rec.residuals["transform_replay"], THRESHOLDS["transform_replay"]),
        "assembly_upper_left": (rec.residuals["assembly_upper_left"], THRESHOLDS["assembly_upper_left"]),
    }
    mom = moments_check(rec)
    out["moments"] = (max(mom.values()), THRESHOLDS["moments"])
    res = rec.result
    out["D_symmetry"] = (float(np.linalg.norm(res.D - res.D.T)), 1e-12)
    lamK = np.linalg.eigvalsh(res.K)
    out["K_positive"] = (float(-lamK[0]), 0.0)
    return {n: {"value": float(v), "threshold": t, "ok": bool(v <= t) if n != "K_positive" else bool(v < 0)}
            for n, (v, t) in out.items()}


def run_pipeline(sys: SecondOrderSystem, target_r: int, options: PipelineOptions | None = None,
                 solver: SolverOptions | None = None, strict: bool = True) -> PipelineResult:
    """Reduce ``sys`` to order ``r`` near ``target_r`` and recover second-order form.

    Parameters
    ----------
    sys : SecondOrderSystem
    target_r : int
    options : PipelineOptions, optional
    solver : SolverOptions, optional
        Overrides ``rank_tol`` and ``path_tol`` from ``options`` when given.
    strict : bool
        Raise StructureError when a re-verified invariant fails.

    Raises
    ------
    ReductionError
        Any stage error, tagged with the stage name.
    """
    opts = options or PipelineOptions()
    if target_r < 1:
        raise ParameterError("target_r must be >= 1", stage="config")
    solver = solver or SolverOptions(rank_tol=opts.rank_tol, path_tol=opts.path_tol)
    timings = {}
    with _stage("validate", timings):
        vr = validate(sys)
    if not vr.passed:
        bad = [k for k, ok in vr.checks.items() if not ok]
        raise DefinitenessError(f"input system rejected: {', '.join(bad)}", stage="validate",
                                report=vr.to_dict())
    with _stage("lift", timings):
        fo = lift(sys)
    with _stage("kyp", timings):
        sol = solve_min_kyp(fo, solver)
    with _stage("factorize", timings):
        L = factorize(sol.P, solver.rank_tol)
    with _stage("signed_eig", timings):
        spectrum = signed_eigendecomposition(L, fo.n, cluster_tol=opts.cluster_tol)
    with _stage("plan", timings):
        plan = plan_truncation(spectrum, target_r, one_tol=opts.tol_one, r_max=opts.r_max)
    with _stage("reduce", timings):
        red = reduce(fo, L, plan)
    with _stage("recover", timings):
        rec = recover(red, tol_one=opts.tol_one, assembly_tol=opts.assembly_tol,
                      cond_max=opts.semi_simple_cond, check_zeros=opts.check_zeros)
    kyp = sol.to_dict()
    kyp["P_norm"] = float(np.linalg.norm(sol.P, 2))
    result = PipelineResult(original=sys, fo=fo, spectrum=spectrum, plan=plan, reduced_fo=red,
                            recovery=rec, kyp=kyp, timings=timings)
    with _stage("verify", timings):
        result.checks = verify(result)
    bad = [n for n, c in result.checks.items() if not c["ok"]]
    if strict and bad:
        raise StructureError(f"re-verification failed: {', '.join(bad)}", stage="verify",
                             checks=result.checks)
    return result


def response_errors(orig: SecondOrderSystem, red: SecondOrderSystem, omegas) -> dict:
    """Per-frequency largest singular values and errors of ``G - G_red``."""
    G = frequency_response(orig, omegas)
    Gr = frequency_response(red, omegas)
    if G.shape[1:] != Gr.shape[1:]:
        raise ParameterError(f"incompatible input dimensions {G.shape[1:]} vs {Gr.shape[1:]}", stage="analyze")
    sG = np.array([np.linalg.norm(g, 2) for g in G])
    sR = np.array([np.linalg.norm(g, 2) for g in Gr])
    ab = np.array([np.linalg.norm(d, 2) for d in G - Gr])
    rel = ab / np.maximum(sG, 1e-300)
    return {"omega": np.asarray(omegas, float), "sigma_G": sG, "sigma_Gr": sR, "abs": ab, "rel": rel}


def fo_vs_so_error(result: PipelineResult, omegas) -> float:
    """Largest relative gap between reduced first-order and recovered second-order responses."""
    Gf = fo_frequency_response(result.reduced_fo.fo, omegas)
    Gs = frequency_response(result.reduced.to_system(), omegas)
    return float(max(np.linalg.norm(a - b, 2) / max(np.linalg.norm(a, 2), 1e-300) for a, b in zip(Gf, Gs)))
