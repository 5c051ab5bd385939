"""Command-line front end: ``soprbt generate | reduce | analyze``."""
from __future__ import annotations

import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np
import scipy.io

from .errors import ArtifactIOError, ParameterError, ReductionError
from .pipeline import PipelineOptions, response_errors, run_pipeline
from .so_model import TRIPLE_CHAIN_DEFAULTS, SecondOrderSystem, generate_triple_chain, read_matrix, read_system, write_system


@dataclass(frozen=True)
class ReductionConfig:
    input_dir: Path
    target_r: int
    output_dir: Path
    options: PipelineOptions
    lo: float = 1e-2
    hi: float = 1e2
    count: int = 200
    emit_transforms: bool = False

    def __post_init__(self):
        if self.target_r < 1:
            raise ParameterError("target_r must be >= 1", stage="config")
        if not self.lo < self.hi:
            raise ParameterError("frequency grid needs lo < hi", stage="config")
        if self.count < 2:
            raise ParameterError("frequency grid needs count >= 2", stage="config")


def _dump_json(path: Path, obj):
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def _fail(exc: ReductionError):
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.exit_code)


def write_reduced(out: Path, result, report: dict):
    """Reduced files: identity mass marker, symmetric D and K, stiffness factor G, input B."""
    res = result.reduced
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "M.identity").write_text(f"{res.r}\n")
        scipy.io.mmwrite(out / "D.mtx", res.D, symmetry="symmetric")
        scipy.io.mmwrite(out / "K.mtx", res.K, symmetry="symmetric")
        scipy.io.mmwrite(out / "G.mtx", res.G)
        scipy.io.mmwrite(out / "B.mtx", res.B)
        (out / "spectrum.csv").write_text(result.spectrum.to_csv())
    except OSError as exc:
        raise ArtifactIOError(f"cannot write reduced system to {out}: {exc}") from exc
    _dump_json(out / "report.json", report)


def read_reduced_or_full(directory) -> SecondOrderSystem:
    """Read a full system directory, or a reduced one with an ``M.identity`` marker."""
    d = Path(directory)
    if (d / "M.identity").exists():
        mats = {}
        for name in ("D", "K", "B"):
            p = d / f"{name}.mtx"
            if not p.exists():
                raise ArtifactIOError(f"missing {p}")
            mats[name] = read_matrix(p)
        return SecondOrderSystem(np.eye(mats["D"].shape[0]), mats["D"], mats["K"], mats["B"])
    return read_system(d)


def cmd_reduce(cfg: ReductionConfig) -> dict:
    sys_ = read_system(cfg.input_dir)
    result = run_pipeline(sys_, cfg.target_r, cfg.options)
    report = result.report(emit_transforms=cfg.emit_transforms)
    report["config"] = {
        "target_r": cfg.target_r,
        "tolerances": {k: getattr(cfg.options, k) for k in
                       ("cluster_tol", "tol_one", "rank_tol", "path_tol", "assembly_tol", "semi_simple_cond")},
        "grid": {"lo": cfg.lo, "hi": cfg.hi, "count": cfg.count},
    }
    om = np.logspace(np.log10(cfg.lo), np.log10(cfg.hi), cfg.count)
    e = response_errors(sys_, result.reduced.to_system(), om)
    report["sampled_error"] = {"max_abs": float(e["abs"].max()), "max_rel": float(e["rel"].max())}
    write_reduced(Path(cfg.output_dir), result, report)
    return report


def cmd_analyze(orig_dir, red_dir, out_dir, lo=1e-2, hi=1e2, count=200) -> dict:
    if not lo < hi or count < 2:
        raise ParameterError("frequency grid needs lo < hi and count >= 2", stage="config")
    a = read_reduced_or_full(orig_dir)
    b = read_reduced_or_full(red_dir)
    if a.m != b.m:
        raise ParameterError(f"incompatible input dimension: {a.m} vs {b.m}", stage="analyze")
    om = np.logspace(np.log10(lo), np.log10(hi), count)
    e = response_errors(a, b, om)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "errors.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["omega", "sigma_max_G", "sigma_max_Gr", "abs_error", "rel_error"])
            for row in zip(e["omega"], e["sigma_G"], e["sigma_Gr"], e["abs"], e["rel"]):
                w.writerow([repr(float(x)) for x in row])
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {out}: {exc}") from exc
    summary = {"max_abs": float(e["abs"].max()), "max_rel": float(e["rel"].max()),
               "argmax_rel_omega": float(e["omega"][np.argmax(e["rel"])]), "count": int(count)}
    rep = Path(red_dir) / "report.json"
    if rep.exists():
        try:
            summary["error_bound"] = json.loads(rep.read_text()).get("error_bound")
        except (OSError, ValueError):
            summary["error_bound"] = None
    _dump_json(out / "summary.json", summary)
    return summary


@click.group()
def main():
    """Structure-preserving reduction of symmetric second-order systems."""


@main.command()
@click.option("--n-per-row", type=int, required=True)
@click.option("--out", "out", type=click.Path(file_okay=False), required=True)
@click.option("--k0", type=float, default=TRIPLE_CHAIN_DEFAULTS["k0"])
@click.option("--k1", type=float, default=TRIPLE_CHAIN_DEFAULTS["k1"])
@click.option("--k2", type=float, default=TRIPLE_CHAIN_DEFAULTS["k2"])
@click.option("--k3", type=float, default=TRIPLE_CHAIN_DEFAULTS["k3"])
@click.option("--m0", type=float, default=TRIPLE_CHAIN_DEFAULTS["m0"])
@click.option("--m1", type=float, default=TRIPLE_CHAIN_DEFAULTS["m1"])
@click.option("--m2", type=float, default=TRIPLE_CHAIN_DEFAULTS["m2"])
@click.option("--m3", type=float, default=TRIPLE_CHAIN_DEFAULTS["m3"])
@click.option("--alpha", type=float, default=TRIPLE_CHAIN_DEFAULTS["alpha"])
@click.option("--beta", type=float, default=TRIPLE_CHAIN_DEFAULTS["beta"])
@click.option("--viscosity", type=float, default=TRIPLE_CHAIN_DEFAULTS["viscosity"])
def generate(n_per_row, out, **params):
    """Write the triple-chain benchmark as Matrix Market files."""
    try:
        sys_ = generate_triple_chain(n_per_row, **params)
        meta = {"generator": "triple_chain", "n_per_row": n_per_row, "parameters": params,
                "n": sys_.n, "m": sys_.m}
        write_system(sys_, out, meta)
    except ReductionError as exc:
        _fail(exc)
    click.echo(f"wrote {sys_.n}x{sys_.n} system to {out}")


@main.command("reduce")
@click.option("--input", "input_dir", type=click.Path(), required=True)
@click.option("--r", "target_r", type=int, required=True)
@click.option("--out", "output_dir", type=click.Path(file_okay=False), required=True)
@click.option("--cluster-tol", type=float, default=1e-8)
@click.option("--tol-one", type=float, default=1e-6)
@click.option("--rank-tol", type=float, default=1e-12)
@click.option("--path-tol", type=float, default=1e-7)
@click.option("--assembly-tol", type=float, default=1e-8)
@click.option("--semi-simple-cond", type=float, default=1e8)
@click.option("--r-max", type=int, default=None)
@click.option("--lo", type=float, default=1e-2)
@click.option("--hi", type=float, default=1e2)
@click.option("--count", type=int, default=200)
@click.option("--emit-transforms", is_flag=True)
def reduce_cmd(input_dir, target_r, output_dir, cluster_tol, tol_one, rank_tol, path_tol,
               assembly_tol, semi_simple_cond, r_max, lo, hi, count, emit_transforms):
    """Reduce a system directory to order about R and write the recovered model."""
    try:
        opts = PipelineOptions(cluster_tol=cluster_tol, tol_one=tol_one, rank_tol=rank_tol,
                               path_tol=path_tol, assembly_tol=assembly_tol,
                               semi_simple_cond=semi_simple_cond, r_max=r_max)
        cfg = ReductionConfig(Path(input_dir), target_r, Path(output_dir), opts, lo, hi, count, emit_transforms)
        rep = cmd_reduce(cfg)
    except ReductionError as exc:
        _fail(exc)
    click.echo(f"r={rep['final_r']} error_bound={rep['error_bound']:.6g} "
               f"max_rel={rep['sampled_error']['max_rel']:.3e} -> {output_dir}")


@main.command()
@click.option("--orig", "orig_dir", type=click.Path(), required=True)
@click.option("--reduced", "red_dir", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--lo", type=float, default=1e-2)
@click.option("--hi", type=float, default=1e2)
@click.option("--count", type=int, default=200)
def analyze(orig_dir, red_dir, out_dir, lo, hi, count):
    """Sampled frequency-response errors between two systems."""
    try:
        s = cmd_analyze(orig_dir, red_dir, out_dir, lo, hi, count)
    except ReductionError as exc:
        _fail(exc)
    click.echo(f"max_abs={s['max_abs']:.3e} max_rel={s['max_rel']:.3e}")


if __name__ == "__main__":
    main()
