"""End-to-end checks of the command-line surface.

Everything runs in-process through cli.main(argv) so coverage and monkeypatch
work; one subprocess test confirms the console-script wiring.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from certbayes import cli
from certbayes.errors import DivergentTrajectory


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv("CERTBAYES_SEED", raising=False)


def _gen(tmp_path, name="d.csv", n=40, d=2, extra=()):
    out = tmp_path / name
    rc = cli.main(
        ["gen-data", "--n", str(n), "--d", str(d), "--out", str(out), *extra]
    )
    assert rc == 0
    return out


# --- gen-data ---------------------------------------------------------------


def test_gen_data_writes_csv_and_sidecar(tmp_path):
    out = _gen(tmp_path)
    assert out.exists()
    sidecar = json.loads((tmp_path / "d.csv.json").read_text())
    assert set(sidecar) == {"config", "theta_star", "inputs_digest"}
    assert sidecar["config"]["n"] == 40
    assert sidecar["inputs_digest"].startswith("sha256:")
    assert len(sidecar["theta_star"]) == 2
    header = out.read_text().splitlines()[0]
    assert header == "x1,x2,y"


def test_gen_data_same_seed_same_bytes(tmp_path):
    a = _gen(tmp_path, "a.csv", extra=("--seed", "3"))
    b = _gen(tmp_path, "b.csv", extra=("--seed", "3"))
    assert a.read_bytes() == b.read_bytes()


def test_gen_data_invalid_spec_exits_1(tmp_path, capsys):
    rc = cli.main(["gen-data", "--n", "0", "--d", "2", "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_env_seed_matches_explicit_flag(tmp_path, monkeypatch):
    monkeypatch.setenv("CERTBAYES_SEED", "9")
    a = _gen(tmp_path, "env.csv")
    monkeypatch.delenv("CERTBAYES_SEED")
    b = _gen(tmp_path, "flag.csv", extra=("--seed", "9"))
    assert a.read_bytes() == b.read_bytes()
    assert json.loads((tmp_path / "env.csv.json").read_text())["config"]["seed"] == 9


# --- certify -----------------------------------------------------------------


def test_certify_degenerate_dataset_bound_is_one(tmp_path):
    data = tmp_path / "zero.csv"
    data.write_text("x1,y\n0,0\n")
    out = tmp_path / "cert.json"
    rc = cli.main(
        [
            "certify", "--data", str(data), "--sigma-sq", "1", "--sigma-p-sq", "0.5",
            "--sigma-x-sq", "1", "--theta-star-norm-sq", "0", "--beta", "1",
            "--theorem", "bayes-std", "--out", str(out),
        ]
    )
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["distribution_spec_source"] == "plug-in, not certified"
    (report,) = payload["reports"]
    assert report["theorem_id"] == "BayesStd"
    assert report["bound_value"] == 1.0
    assert report["precondition_ok"] is True


def test_certify_all_theorems_to_stdout(capsys):
    rc = cli.main(
        [
            "certify", "--n", "30", "--d", "3", "--seed", "1",
            "--sigma-p-sq", "0.05", "--sigma-x-sq", "1.0",
            "--theta-star-norm-sq", "0.5", "--delta", "0.1", "--delta-hat", "0.1",
        ]
    )
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["distribution_spec_source"] == "synthetic"
    by_id = {r["theorem_id"]: r for r in payload["reports"]}
    assert set(by_id) == {
        "BayesStd", "BayesAdv", "RobustStd", "RobustAdvMatched", "RobustAdvGeneral"
    }
    for r in by_id.values():
        assert np.isfinite(r["bound_value"]) and r["precondition_ok"]
    # with delta_hat == delta the matched certificate is the sharper one
    assert by_id["RobustAdvMatched"]["bound_value"] <= by_id["RobustAdvGeneral"]["bound_value"]


def test_certify_precondition_violation_exits_2(capsys):
    rc = cli.main(
        [
            "certify", "--n", "10", "--d", "2", "--sigma-p-sq", "2.0",
            "--sigma-x-sq", "1.0", "--theta-star-norm-sq", "1.0",
            "--theorem", "bayes-std",
        ]
    )
    assert rc == 2
    assert "precondition violation" in capsys.readouterr().err


def test_certify_missing_required_flag_exits_1(capsys):
    rc = cli.main(["certify", "--n", "10", "--d", "2"])
    assert rc == 1
    assert "sigma-p-sq" in capsys.readouterr().err


def test_certify_missing_file_exits_1(tmp_path, capsys):
    rc = cli.main(
        [
            "certify", "--data", str(tmp_path / "nope.csv"), "--sigma-p-sq", "0.1",
            "--sigma-x-sq", "1", "--theta-star-norm-sq", "1",
        ]
    )
    assert rc == 1


def test_unknown_flag_exits_1(capsys):
    rc = cli.main(["certify", "--bogus", "1"])
    assert rc == 1


# --- config file -----------------------------------------------------------------


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 5, "d": 2, "sigma_x_sq": 2.0}))
    a = _gen(tmp_path, "a.csv", n=5, d=2, extra=("--sigma-x-sq", "1.0"))
    out_b = tmp_path / "b.csv"
    rc = cli.main(
        [
            "gen-data", "--config", str(cfg), "--sigma-x-sq", "1.0",
            "--out", str(out_b),
        ]
    )
    assert rc == 0
    # n and d came from the config; the flag overrode sigma_x_sq
    assert a.read_bytes() == out_b.read_bytes()
    sidecar = json.loads((tmp_path / "b.csv.json").read_text())
    assert sidecar["config"]["n"] == 5
    assert sidecar["config"]["sigma_x_sq"] == 1.0


def test_config_file_unknown_key_exits_1(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    rc = cli.main(
        ["gen-data", "--config", str(cfg), "--n", "5", "--d", "2",
         "--out", str(tmp_path / "x.csv")]
    )
    assert rc == 1
    assert "unknown config keys" in capsys.readouterr().err


# --- fit-eval -----------------------------------------------------------------------


def test_fit_eval_structure(tmp_path):
    data = _gen(tmp_path, "fe.csv", n=40, d=2)
    out = tmp_path / "fe.json"
    rc = cli.main(
        [
            "fit-eval", "--data", str(data), "--sigma-p-sq", "0.25",
            "--delta", "0.1", "--delta-hat", "0,0.1", "--seeds", "2",
            "--hmc-samples", "200", "--hmc-warmup", "100", "--leapfrog", "8",
            "--out", str(out),
        ]
    )
    assert rc == 0
    payload = json.loads(out.read_text())
    assert len(payload["runs"]) == 2
    for run in payload["runs"]:
        assert run["n_train"] == 28 and run["n_test"] == 12
        assert 0.0 < run["hmc"]["accept_rate"] <= 1.0
        assert [m["delta_hat"] for m in run["metrics"]] == [0.0, 0.1]
        for m in run["metrics"]:
            for which in ("bayes", "robust"):
                assert np.isfinite(m[which]["value"])
                assert m[which]["std_error"] >= 0.0
    assert [s["delta_hat"] for s in payload["summary"]] == [0.0, 0.1]
    for s in payload["summary"]:
        assert s["bayes"]["sd"] >= 0.0 and s["robust"]["sd"] >= 0.0


def test_fit_eval_divergence_exits_3(tmp_path, monkeypatch, capsys):
    data = _gen(tmp_path, "dv.csv", n=20, d=2)

    def boom(*args, **kwargs):
        raise DivergentTrajectory("forced for the exit-code contract")

    monkeypatch.setattr(cli, "hmc_sample", boom)
    rc = cli.main(
        ["fit-eval", "--data", str(data), "--sigma-p-sq", "0.25",
         "--out", str(tmp_path / "x.json")]
    )
    assert rc == 3
    assert "sampler failure" in capsys.readouterr().err


# --- sweep ----------------------------------------------------------------------


def test_sweep_csv_shape_and_determinism(tmp_path):
    args = [
        "sweep", "--n-grid", "10,20", "--d", "2", "--n-test", "50",
        "--sigma-p-sq", "0.25", "--seeds", "2", "--theorem", "bayes-std",
    ]
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(args + ["--out", str(out_a)]) == 0
    assert cli.main(args + ["--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()

    lines = out_a.read_text().splitlines()
    assert lines[0].startswith("# config: ")
    assert "inputs_digest: sha256:" in lines[0]
    assert lines[1] == "n,seed,theorem,bound,cgf_c,cgf_s_sq,beta,empirical_risk,risk_std_error"
    rows = [line.split(",") for line in lines[2:]]
    assert [(r[0], r[1]) for r in rows] == [
        ("10", "0"), ("10", "1"), ("20", "0"), ("20", "1")
    ]
    assert all(r[2] == "BayesStd" for r in rows)
    assert all(np.isfinite(float(r[3])) for r in rows)


def test_sweep_requires_out(capsys):
    rc = cli.main(["sweep", "--sigma-p-sq", "0.25"])
    assert rc == 1
    assert "requires --out" in capsys.readouterr().err


# --- console script ------------------------------------------------------------


def test_console_script_runs(tmp_path):
    out = tmp_path / "cs.csv"
    proc = subprocess.run(
        ["certbayes", "gen-data", "--n", "4", "--d", "2", "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists() and (tmp_path / "cs.csv.json").exists()


def test_module_invocation_help():
    proc = subprocess.run(
        [sys.executable, "-m", "certbayes.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "gen-data" in proc.stdout and "sweep" in proc.stdout
