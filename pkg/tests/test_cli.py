"""Command-line front end, exercised in-process through main(argv)."""
import json
import os

import numpy as np
import pytest

import reference as ref
from singarc.cli import _floats, load_config, main
from singarc.integrate import Trajectory, load_trajectory, save_trajectory


@pytest.fixture(scope="module")
def spiked_file(spiked, tmp_path_factory):
    traj, _ = spiked
    path = tmp_path_factory.mktemp("cli") / "spiked.csv"
    save_trajectory(traj, str(path))
    return str(path)


@pytest.fixture(scope="module")
def partial_file(extremal, tmp_path_factory):
    """lambda4 zeroed on two interior rows: the law is undefined there."""
    lam = np.array(extremal.lam)
    lam[3000:3002, 3] = 0.0
    traj = Trajectory(t=extremal.t, x=extremal.x, u=extremal.u, lam=lam)
    path = tmp_path_factory.mktemp("cli") / "partial.csv"
    save_trajectory(traj, str(path))
    return str(path)


@pytest.fixture(scope="module")
def u2_corrupt_file(extremal, tmp_path_factory):
    """u2 zeroed on five rows: a channel the rewrite never touches."""
    u = np.array(extremal.u)
    u[1000:1005, 1] = 0.0
    traj = Trajectory(t=extremal.t, x=extremal.x, u=u, lam=extremal.lam)
    path = tmp_path_factory.mktemp("cli") / "u2bad.csv"
    save_trajectory(traj, str(path))
    return str(path)


def test_load_config_defaults():
    cfg = load_config()
    np.testing.assert_allclose(cfg.x0, ref.X0, rtol=0, atol=1e-16)
    assert cfg.lambda0 is None
    assert cfg.lambda2 == ref.LAMBDA2 and cfg.lambda4 == ref.LAMBDA4
    assert cfg.u2 == ref.U2_BANG
    assert cfg.bounds.lower == (-20.0, -10.0)
    assert cfg.integrator.step == 1e-4 and cfg.integrator.horizon == 0.7
    assert cfg.tolerances.rel_band == 1e-3
    assert cfg.samples == 10000 and cfg.seed == 0
    assert _floats("1, 2") == (1.0, 2.0) == _floats("1 2")


def test_load_config_overrides_and_overlay(tmp_path):
    cfg = load_config(None, {"step": 1e-3, "samples": 50, "seed": 5,
                             "tol_phi": 0.25})
    assert cfg.integrator.step == 1e-3
    assert cfg.samples == 50 and cfg.seed == 5
    assert cfg.tolerances.phi_band == 0.25

    overlay = tmp_path / "overlay.cfg"
    overlay.write_text("[initial]\nlambda0 = -5.85, -3.0, -10.23, -6.0\n")
    cfg = load_config(str(overlay))
    np.testing.assert_array_equal(
        cfg.initial_costate(cfg.system()), [-5.85, -3.0, -10.23, -6.0])
    # without an explicit lambda0 the costate is lifted onto the surface
    base = load_config()
    np.testing.assert_array_equal(base.initial_costate(base.system()),
                                  ref.LAM0)


def test_missing_config_file_fails_cleanly(capsys):
    rc = main(["construct", "--config", "/nonexistent/file.cfg"])
    assert rc == 1
    assert "not found" in capsys.readouterr().err


def test_cli_requires_a_command():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_construct_writes_run_and_reports(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    rc = main(["construct", "--step", "1e-3"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "samples: 701" in out
    assert os.path.exists("extremal.csv")
    assert os.path.exists("extremal.csv.meta.json")
    traj = load_trajectory("extremal.csv")
    assert len(traj) == 701 and traj.has_costates
    rel = float(out.split("(")[1].split(" of")[0])
    assert rel <= 1e-6


def test_construct_reports_aborts_with_the_matching_exit_code(
        tmp_path, capsys):
    overlay = tmp_path / "tight.cfg"
    overlay.write_text("[bounds]\nlower = -17.0, -10.0\n")
    rc = main(["construct", "--step", "1e-3", "--config", str(overlay),
               "--out", str(tmp_path / "partial_run.csv")])
    out = capsys.readouterr().out
    assert rc == 10  # OutOfBounds
    assert "aborted early" in out
    assert load_trajectory(str(tmp_path / "partial_run.csv")).horizon < 0.7


def test_construct_rejects_inadmissible_starts(tmp_path, capsys):
    overlay = tmp_path / "wall.cfg"
    overlay.write_text(
        "[initial]\nx0 = 0.1, 1.5707963267948966, 0.3, 0.5\n")
    rc = main(["construct", "--config", str(overlay),
               "--out", str(tmp_path / "never.csv")])
    assert rc == 7  # RkViolation
    assert "RkViolation" in capsys.readouterr().err


def test_construct_zero_horizon_is_a_single_sample(tmp_path, capsys):
    overlay = tmp_path / "flat.cfg"
    overlay.write_text("[integrator]\nhorizon = 0.0\n")
    out = tmp_path / "one.csv"
    rc = main(["construct", "--config", str(overlay), "--out", str(out)])
    assert rc == 0
    assert "samples: 1" in capsys.readouterr().out
    assert len(load_trajectory(str(out))) == 1


def test_diagnose_full_summary(extremal_file, tmp_path, capsys):
    series = tmp_path / "series.csv"
    rc = main(["diagnose", extremal_file, "--out", str(series)])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["costates"] is True
    assert summary["samples"] == 7001
    assert summary["max_abs_phi1"] <= 1e-12
    assert summary["H_variation"] <= 1e-12
    assert summary["in_rk_fraction"] >= 0.99
    assert summary["classification"] == {"lower-bang": 7001,
                                         "singular": 7001}
    assert summary["lambda_degenerate_rows"] == []
    with open(series) as fh:
        header = fh.readline().strip()
    assert header.startswith("t,phi1,phi1_dot,phi2")
    assert sum(1 for _ in open(series)) == 7002


def test_diagnose_costate_free_files(extremal, tmp_path, capsys):
    bare = Trajectory(t=extremal.t[:101], x=extremal.x[:101],
                      u=extremal.u[:101])
    path = str(tmp_path / "bare.csv")
    save_trajectory(bare, path)
    rc = main(["diagnose", path, "--out", str(tmp_path / "series.csv")])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["costates"] is False
    assert "MissingCostates" in summary["notice"]
    assert summary["resim_endpoint_drift"] <= 1e-6


def test_diagnose_rejects_malformed_files(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,trajectory\n1,2,3\n")
    rc = main(["diagnose", str(bad), "--out", str(tmp_path / "s.csv")])
    assert rc == 3  # SchemaError
    assert "SchemaError" in capsys.readouterr().err
    rc = main(["diagnose", str(tmp_path / "missing.csv"),
               "--out", str(tmp_path / "s.csv")])
    assert rc == 1


def test_regularize_restores_the_spiked_file(spiked_file, extremal, tmp_path,
                                             capsys):
    out = tmp_path / "fixed.csv"
    rc = main(["regularize", spiked_file, "--out", str(out)])
    text = capsys.readouterr().out
    assert rc == 0
    assert "intervals: 1" in text
    assert "violations after regularization: 0" in text
    fixed = load_trajectory(str(out))
    assert float(np.abs(fixed.u[:, 0] - extremal.u[:, 0]).max()) == 0.0
    report = json.loads(open(str(out) + ".report.json").read())
    assert report["flags"] == []
    assert report["max_deviation"][0] == pytest.approx(5.0, abs=1e-9)
    assert report["endpoint_error"] <= 1e-3


def test_regularize_flags_partial_coverage(partial_file, tmp_path, capsys):
    out = tmp_path / "fixed.csv"
    rc = main(["regularize", partial_file, "--out", str(out)])
    assert rc == 14
    report = json.loads(open(str(out) + ".report.json").read())
    assert report["skipped_samples"] == [3000, 3001]
    assert "partial" in report["flags"]


def test_regularize_reports_remaining_violations(u2_corrupt_file, tmp_path,
                                                 capsys):
    out = tmp_path / "fixed.csv"
    rc = main(["regularize", u2_corrupt_file, "--out", str(out)])
    text = capsys.readouterr().out
    assert rc == 15
    assert "violations after regularization: 5" in text


def test_partial_takes_precedence_over_violations(extremal, tmp_path, capsys):
    lam = np.array(extremal.lam)
    lam[3000:3002, 3] = 0.0
    u = np.array(extremal.u)
    u[1000:1005, 1] = 0.0
    both = Trajectory(t=extremal.t, x=extremal.x, u=u, lam=lam)
    path = str(tmp_path / "both.csv")
    save_trajectory(both, path)
    rc = main(["regularize", path, "--out", str(tmp_path / "fixed.csv")])
    assert rc == 14


def test_regularize_needs_costates(extremal, tmp_path, capsys):
    bare = Trajectory(t=extremal.t[:30], x=extremal.x[:30],
                      u=extremal.u[:30])
    path = str(tmp_path / "bare.csv")
    save_trajectory(bare, path)
    rc = main(["regularize", path, "--out", str(tmp_path / "f.csv")])
    assert rc == 6  # MissingCostates
    assert "MissingCostates" in capsys.readouterr().err


def test_certify_is_deterministic_and_reports_the_sweep(tmp_path, capsys):
    args = ["certify", "--samples", "300", "--seed", "5",
            "--out", str(tmp_path / "cert.json")]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first

    report = json.loads(first)
    assert report["samples"] == 300 and report["seed"] == 5
    assert report["min_frame_rank"] > 0.0
    assert report["max_abs_alpha_ij1"] <= 1e-9
    for key in ("c=-20", "c=20"):
        assert 0.0 <= report["b_set"][key]["pass_rate"] <= 1.0
    with open(tmp_path / "cert.json") as fh:
        assert json.load(fh) == report
