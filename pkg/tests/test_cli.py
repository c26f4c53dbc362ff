import json
import subprocess
import sys

import numpy as np
import pytest

from schrodinger_bmo.cli import main


def run_cli(args):
    return main(args)


def write_config(tmp_path, **overrides):
    cfg = {"grid": {"n": 1, "m": 64, "half_width": 2.0}, "potential": "constant:1"}
    for key, value in overrides.items():
        if isinstance(value, dict) and key in cfg:
            cfg[key].update(value)
        else:
            cfg[key] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_rho_emits_constant_column(tmp_path):
    cfg = write_config(tmp_path)
    code = run_cli(["rho", "--config", str(cfg), "--output-dir", str(tmp_path)])
    assert code == 0
    rows = (tmp_path / "rho" / "rho.csv").read_text().splitlines()[1:]
    values = np.asarray([float(r.split(",")[1]) for r in rows])
    assert np.allclose(values, 1 / np.sqrt(2), rtol=1e-6)
    manifest = json.loads((tmp_path / "rho" / "manifest.json").read_text())
    assert "config_hash" in manifest and manifest["artifacts"]


def test_decompose_zero_function_emits_empty_measure(tmp_path):
    cfg = write_config(tmp_path, decompose={"function": "zero"})
    code = run_cli(["decompose", "--config", str(cfg), "--output-dir", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "decompose" / "decomposition_report.json").read_text())
    assert report["residual_l1"] == 0.0
    mu_rows = (tmp_path / "decompose" / "mu.csv").read_text().splitlines()
    assert len(mu_rows) == 1  # header only
    g_rows = (tmp_path / "decompose" / "g.csv").read_text().splitlines()[1:]
    assert all(float(r.split(",")[-1]) == 0.0 for r in g_rows)


def test_decompose_sign_bump_artifacts(tmp_path):
    cfg = write_config(tmp_path, decompose={"function": "sign_bump"})
    code = run_cli(["decompose", "--config", str(cfg), "--output-dir", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "decompose" / "decomposition_report.json").read_text())
    assert report["packing"] <= 0.5
    assert report["residual_l1"] < 0.10


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_cli(["rho", "--config", str(bad), "--output-dir", str(tmp_path)]) == 2
    cfg = write_config(tmp_path, potential="mystery:1")
    assert run_cli(["rho", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 2


def test_convergence_failure_exit_code(tmp_path):
    cfg = write_config(tmp_path,
                       measures={"count": 2, "atoms": 4, "transform_nodes": 8})
    code = run_cli(["balayage", "--config", str(cfg), "--output-dir", str(tmp_path)])
    assert code == 3
    detail = json.loads((tmp_path / "balayage" / "convergence_error.json").read_text())
    assert detail["error"] == "convergence"


def test_kernels_and_manifest_determinism(tmp_path):
    cfg = write_config(tmp_path, kernels={"times": [0.5], "subordination_nodes": 200})
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_cli(["kernels", "--config", str(cfg), "--output-dir", str(out1)]) == 0
    assert run_cli(["kernels", "--config", str(cfg), "--output-dir", str(out2)]) == 0
    rep1 = json.loads((out1 / "kernels" / "kernels_report.json").read_text())
    rep2 = json.loads((out2 / "kernels" / "kernels_report.json").read_text())
    assert rep1 == rep2
    man1 = json.loads((out1 / "kernels" / "manifest.json").read_text())
    man2 = json.loads((out2 / "kernels" / "manifest.json").read_text())
    assert man1["config_hash"] == man2["config_hash"]


def test_module_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "schrodinger_bmo", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "subcommand" in proc.stdout or "usage" in proc.stdout.lower()
