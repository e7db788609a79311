import json
import subprocess
import sys

import pytest

from l2pos.cli import main, validate_config
from l2pos.errors import InputError


def run_cli(tmp_path, cfg, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if isinstance(cfg, dict) else cfg)
    out = tmp_path / "out"
    code = main(["--config", str(path), "--out", str(out), *extra])
    return code, out


def report(out):
    return json.loads((out / "report.json").read_text())


def test_check_positivity_passes(tmp_path):
    cfg = {"command": "check-positivity", "n": 2, "weight": "|z1|^2+|z2|^2", "q": 1, "c": 1,
           "domain": {"kind": "ball", "radii": 1.0}}
    code, out = run_cli(tmp_path, cfg)
    assert code == 0
    rep = report(out)
    assert rep["results"]["min_value"] == pytest.approx(1.0)
    assert rep["config"] == cfg and rep["version"]
    assert (out / "eigenvalues.csv").exists() and (out / "timings.json").exists()


def test_check_positivity_fails_with_witness(tmp_path):
    cfg = {"command": "check-positivity", "n": 2, "weight": "-|z1|^2+|z2|^2", "q": 1, "c": 0,
           "domain": {"kind": "polydisc", "radii": [1.0, 1.0]}}
    code, out = run_cli(tmp_path, cfg)
    assert code == 1
    assert report(out)["results"]["witness_point"]


def test_probe_counterexample_exit_one(tmp_path):
    cfg = {"command": "probe-counterexample", "n": 2, "weight": "-|z1|^2+|z2|^2", "q": 1, "c": 0, "r": 0.5}
    code, out = run_cli(tmp_path, cfg, "--plot")
    assert code == 1
    assert report(out)["results"]["m_star"] is not None
    assert (out / "probe_trace.csv").exists() and (out / "probe_trace.png").exists()


@pytest.mark.parametrize("bad", [
    {"command": "check-positivity", "n": 1, "weight": "z1 +", "q": 1, "domain": {"kind": "ball", "radii": 1}},
    {"command": "check-positivity", "n": 1, "weight": "|z1|^2", "q": 1, "c": -1,
     "domain": {"kind": "ball", "radii": 1}},
    {"command": "no-such-thing"},
    {"command": "check-positivity", "n": 1, "weight": "|z1|^2", "q": 1},
    {"command": "commutator", "theta": [[1, 2], [0, 1]], "q": 1},
])
def test_input_errors_exit_two(tmp_path, bad, capsys):
    code, _ = run_cli(tmp_path, bad)
    assert code == 2
    assert "input error" in capsys.readouterr().err


def test_malformed_json_reports_position(tmp_path, capsys):
    code, _ = run_cli(tmp_path, '{"command": "commutator",\n "q": }')
    assert code == 2
    assert "line 2" in capsys.readouterr().err


def test_numerical_error_exit_three(tmp_path, capsys):
    cfg = {"command": "verify-estimate", "n": 1, "weight": "|z1|^2", "psi": "-3*|z1|^2", "c": 1,
           "grid": {"points_per_axis": 32}, "domain": {"kind": "polydisc", "radii": 1.0},
           "source": {"kind": "probe", "radius": 0.6}}
    code, _ = run_cli(tmp_path, cfg)
    assert code == 3
    assert "numerical error" in capsys.readouterr().err


def test_deterministic_report(tmp_path):
    cfg = {"command": "monotone-limit", "n": 1, "sequence": ["2*|z1|^2", "1.5*|z1|^2"], "limit": "|z1|^2",
           "q": 1, "c": 1, "domain": {"kind": "polydisc", "radii": 1.0}}
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    code_a, out_a = run_cli(tmp_path / "a", cfg)
    code_b, out_b = run_cli(tmp_path / "b", cfg)
    assert code_a == code_b == 0
    assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()


def test_other_commands(tmp_path):
    cases = [
        ({"command": "commutator", "theta": [[1, [0, 1]], [[0, -1], 2]], "q": 1}, 0),
        ({"command": "solve-dbar", "n": 1, "weight": "0", "grid": {"points_per_axis": 32},
          "domain": {"kind": "polydisc", "radii": 1.0}, "source": {"kind": "constant"}}, 0),
        ({"command": "verify-estimate", "n": 1, "weight": "|z1|^2", "psi": "|z1|^2", "c": 1,
          "grid": {"points_per_axis": 64}, "domain": {"kind": "polydisc", "radii": 1.0}}, 0),
        ({"command": "prekopa", "n": 1, "weight": "|z1|^2*(1+|w1|^2)", "fiber": {"kind": "polydisc", "radii": 1.0},
          "grid": {"points_per_axis": 16, "half_width": 0.5}, "radial_nodes": 50}, 0),
    ]
    for k, (cfg, expected) in enumerate(cases):
        d = tmp_path / str(k)
        d.mkdir()
        code, out = run_cli(d, cfg, "--plot")
        assert code == expected, cfg["command"]
        assert report(out)["pass"] is True


def test_commutator_report_values(tmp_path):
    code, out = run_cli(tmp_path, {"command": "commutator", "theta": [[1, 0, 0], [0, -2, 0], [0, 0, 5]], "q": 2})
    res = report(out)["results"]
    assert res["lambda_min"] == pytest.approx(-1.0)
    assert res["subset_sums"] == pytest.approx([-1.0, 3.0, 6.0])


def test_validate_config_names_field():
    with pytest.raises(InputError, match="grid"):
        validate_config({"command": "solve-dbar", "grid": {"points_per_axis": 4}})


def test_console_entry_point(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"command": "commutator", "theta": [[1]], "q": 1}))
    proc = subprocess.run([sys.executable, "-m", "l2pos.cli", "--config", str(path), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True, env={"L2POS_NUM_THREADS": "1", "PATH": ""})
    assert proc.returncode == 0, proc.stderr
