import json

import numpy as np
import pytest
import scipy.io
from click.testing import CliRunner

from builders import rel_err
from soprbt import errors
from soprbt import pipeline as pl
from soprbt.cli import main
from soprbt.errors import ParameterError, PlanningError, StructureError
from soprbt.fo_realization import signature
from soprbt.pipeline import PipelineOptions, fo_vs_so_error, response_errors, run_pipeline
from soprbt.so_model import SecondOrderSystem, frequency_response, generate_triple_chain, write_system


@pytest.fixture(scope="module")
def chain_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("chain")
    res = CliRunner().invoke(main, ["generate", "--n-per-row", "6", "--out", str(d)])
    assert res.exit_code == 0, res.output
    return d


def test_error_exit_codes():
    assert errors.ValidationError("x").exit_code == 2
    assert errors.ConvergenceError("x").exit_code == 3
    assert errors.PlanningError("x").exit_code == 4
    assert errors.AssemblyError("x").exit_code == 5
    assert errors.ArtifactIOError("x").exit_code == 6
    assert str(errors.DataError("bad", stage="validate")).startswith("[validate]")


def test_options_reject_nonpositive_tolerance():
    with pytest.raises(ParameterError):
        PipelineOptions(tol_one=0.0)


def test_pipeline_tags_stage():
    with pytest.raises(PlanningError) as info:
        run_pipeline(generate_triple_chain(2), 50)
    assert info.value.stage == "plan"
    bad = SecondOrderSystem(np.eye(2), np.eye(2), np.diag([1.0, -1.0]), np.ones((2, 1)))
    with pytest.raises(errors.DefinitenessError) as info:
        run_pipeline(bad, 1)
    assert info.value.stage == "validate"


def test_verify_failure_is_raised(monkeypatch, chain10):
    monkeypatch.setitem(pl.THRESHOLDS, "moments", 0.0)
    with pytest.raises(StructureError) as info:
        run_pipeline(chain10, 12)
    assert info.value.stage == "verify"
    res = run_pipeline(chain10, 12, strict=False)
    assert not res.checks["moments"]["ok"]


def test_report_fields(chain10_r12):
    rep = chain10_r12.report()
    for key in ("schema_version", "n", "m", "r", "final_r", "error_bound", "plan", "spectrum", "kyp",
                "reduce_residuals", "condition", "recovery", "reduced", "checks", "timings"):
        assert key in rep
    assert rep["n"] == 31 and rep["m"] == 1
    assert all(c["ok"] for c in rep["checks"].values())
    json.dumps(rep)


def test_transform_replay_from_report(chain10_r12):
    # compose the emitted transforms and replay them on the reduced realization
    rep = json.loads(json.dumps(chain10_r12.report(emit_transforms=True)))
    assert rep["condition"]["padding"] == []
    T = np.eye(2 * chain10_r12.plan.r)
    for t in rep["recovery"]["transforms"]:
        T = T @ np.array(t["matrix"])
    h = T.shape[0] // 2
    s = signature(h)
    assert np.allclose(T.T @ (s[:, None] * T), np.diag(s), atol=1e-8)
    Ared = chain10_r12.reduced_fo.Ared
    A2 = chain10_r12.reduced.first_order().A
    assert np.linalg.norm(Ared @ T - T @ A2, 2) <= 1e-8 * np.linalg.norm(Ared, 2)


def test_fo_and_so_agree(chain10_r12):
    assert fo_vs_so_error(chain10_r12, np.logspace(-2, 2, 50)) <= 1e-8


def test_response_errors_rejects_mismatch(rng):
    a = SecondOrderSystem(np.eye(2), np.eye(2), np.eye(2), np.ones((2, 1)))
    b = SecondOrderSystem(np.eye(2), np.eye(2), np.eye(2), np.eye(2))
    with pytest.raises(ParameterError):
        response_errors(a, b, [1.0])


# -- command line ---------------------------------------------------------------------------------

def test_generate_writes_files(chain_dir):
    for name in ("M.mtx", "D.mtx", "K.mtx", "B.mtx", "meta.json"):
        assert (chain_dir / name).exists()
    meta = json.loads((chain_dir / "meta.json").read_text())
    assert meta["n"] == 19 and meta["n_per_row"] == 6


def test_reduce_and_analyze(chain_dir, tmp_path):
    runner = CliRunner()
    out = tmp_path / "red"
    res = runner.invoke(main, ["reduce", "--input", str(chain_dir), "--r", "8", "--out", str(out)])
    assert res.exit_code == 0, res.output
    for name in ("M.identity", "D.mtx", "K.mtx", "G.mtx", "B.mtx", "spectrum.csv", "report.json"):
        assert (out / name).exists()
    rep = json.loads((out / "report.json").read_text())
    r = rep["final_r"]
    assert (out / "M.identity").read_text().strip() == str(r)
    D = scipy.io.mmread(out / "D.mtx")
    K = scipy.io.mmread(out / "K.mtx")
    G = scipy.io.mmread(out / "G.mtx")
    assert D.shape == (r, r) and np.allclose(K, G @ G.T)
    assert "symmetric" in (out / "D.mtx").read_text().splitlines()[0]

    an = tmp_path / "an"
    res = runner.invoke(main, ["analyze", "--orig", str(chain_dir), "--reduced", str(out), "--out", str(an),
                               "--count", "50"])
    assert res.exit_code == 0, res.output
    summary = json.loads((an / "summary.json").read_text())
    assert summary["error_bound"] == rep["error_bound"]
    assert summary["max_rel"] == pytest.approx(rep["sampled_error"]["max_rel"], rel=0.5)
    lines = (an / "errors.csv").read_text().splitlines()
    assert lines[0] == "omega,sigma_max_G,sigma_max_Gr,abs_error,rel_error" and len(lines) == 51


def test_analyze_identical_systems(chain_dir, tmp_path):
    res = CliRunner().invoke(main, ["analyze", "--orig", str(chain_dir), "--reduced", str(chain_dir),
                                    "--out", str(tmp_path)])
    assert res.exit_code == 0
    assert json.loads((tmp_path / "summary.json").read_text())["max_abs"] <= 1e-12


def test_reduce_is_deterministic(chain_dir, tmp_path):
    runner = CliRunner()
    for name in ("a", "b"):
        res = runner.invoke(main, ["reduce", "--input", str(chain_dir), "--r", "6", "--out", str(tmp_path / name)])
        assert res.exit_code == 0
    for f in ("D.mtx", "K.mtx", "G.mtx", "B.mtx", "spectrum.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_reduced_files_reproduce_model(chain_dir, tmp_path):
    runner = CliRunner()
    runner.invoke(main, ["reduce", "--input", str(chain_dir), "--r", "6", "--out", str(tmp_path)])
    res = run_pipeline(generate_triple_chain(6), 6).reduced
    D = scipy.io.mmread(tmp_path / "D.mtx")
    B = scipy.io.mmread(tmp_path / "B.mtx")
    K = scipy.io.mmread(tmp_path / "K.mtx")
    w = np.logspace(-2, 2, 30)
    a = frequency_response(res.to_system(), w)
    b = frequency_response(SecondOrderSystem(np.eye(len(D)), D, K, B), w)
    assert rel_err(a, b) <= 1e-12


@pytest.mark.parametrize("args,code", [
    (["--r", "500"], 4),
    (["--r", "6", "--path-tol", "0"], 2),
    (["--r", "0"], 2),
])
def test_reduce_exit_codes(chain_dir, tmp_path, args, code):
    res = CliRunner().invoke(main, ["reduce", "--input", str(chain_dir), "--out", str(tmp_path / "o"), *args])
    assert res.exit_code == code
    assert "error:" in res.output


def test_missing_input_is_io_error(tmp_path):
    res = CliRunner().invoke(main, ["reduce", "--input", str(tmp_path / "nope"), "--r", "2",
                                    "--out", str(tmp_path / "o")])
    assert res.exit_code == 6


def test_indefinite_input_exit_code(tmp_path):
    bad = SecondOrderSystem(np.eye(2), np.eye(2), np.diag([1.0, -1.0]), np.ones((2, 1)))
    write_system(bad, tmp_path / "in")
    res = CliRunner().invoke(main, ["reduce", "--input", str(tmp_path / "in"), "--r", "1",
                                    "--out", str(tmp_path / "o")])
    assert res.exit_code == 2
    assert "[validate]" in res.output


def test_analyze_dimension_mismatch(tmp_path):
    write_system(SecondOrderSystem(np.eye(2), np.eye(2), np.eye(2), np.ones((2, 1))), tmp_path / "a")
    write_system(SecondOrderSystem(np.eye(2), np.eye(2), np.eye(2), np.eye(2)), tmp_path / "b")
    res = CliRunner().invoke(main, ["analyze", "--orig", str(tmp_path / "a"), "--reduced", str(tmp_path / "b"),
                                    "--out", str(tmp_path / "o")])
    assert res.exit_code == 2
