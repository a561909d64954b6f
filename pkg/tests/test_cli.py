import json
import os
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from svamp import cli

SCHEMA = json.loads(resources.files("svamp").joinpath("schemas/output.schema.json").read_text())

COMMANDS = [
    ["threshold"],
    ["bounds", "--epsilon", "0.01", "--r-bits", "3"],
    ["bounds", "--epsilon", "0.01", "--r-min", "1", "--r-max", "6", "--kind", "ky_fan"],
    ["lp", "--epsilon", "0.01", "--r-bits", "3"],
    ["lp", "--epsilon", "0.05", "--r-bits", "1", "--m", "5", "--oracle", "--vector"],
    ["lp", "--epsilon", "0.01", "--r-bits", "5"],
    ["dual-check", "--epsilon", "0.01", "--r-bits", "5"],
    ["cloud-verify", "--m", "3", "--n", "2"],
    ["simulate", "--n", "8", "--M", "63", "--trials", "50", "--seed", "1"],
    ["simulate", "--n", "8", "--M", "63", "--trials", "50", "--supplier", "attack", "--attack-m", "16",
     "--attack-type", "2", "--bad-output", "fixed"],
    ["toy-example"],
]


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def run_proc(argv, env=None):
    return subprocess.run([sys.executable, "-m", "svamp.cli", *argv], capture_output=True, text=True,
                          env={**os.environ, **(env or {})})


@pytest.mark.parametrize("argv", COMMANDS, ids=lambda a: " ".join(a[:3]))
def test_outputs_validate_against_schema(argv, capsys):
    code, out, _ = run(argv, capsys)
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, SCHEMA)
    assert doc["command"] == argv[0]
    assert doc["parameters"]["command"] == argv[0]


def test_schema_rejects_malformed():
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"command": "threshold", "version": "x", "parameters": {"command": "threshold"},
                             "result": {}}, SCHEMA)


def test_threshold_values(capsys):
    _, out, _ = run(["threshold"], capsys)
    r = json.loads(out)["result"]
    assert round(r["epsilon1"], 4) == 0.0144
    assert round(r["epsilon_kyfan"], 4) == 0.0162
    assert round(r["epsilon2"], 4) == 0.0132
    assert r["entropy_constant"] == pytest.approx(0.2200557288767191, abs=1e-10)


def test_lp_primal_dual_agree(capsys):
    _, out, _ = run(["lp", "--epsilon", "0.01", "--r-bits", "5"], capsys)
    lp = json.loads(out)["result"]["lp"]
    assert lp["status"] == "optimal"
    assert abs(lp["value"] - lp["dual_value"]) <= 1e-9


def test_fifteen_significant_digits():
    assert cli.round_sig(1 / 3) == float(f"{1 / 3:.15g}")
    assert cli.round_sig({"a": [float("inf"), 2.0]}) == {"a": [None, 2.0]}
    assert cli.round_sig(7) == 7


def test_output_file(tmp_path, capsys):
    dest = tmp_path / "t.json"
    code, out, _ = run(["-o", str(dest), "threshold"], capsys)
    assert code == 0 and out == ""
    jsonschema.validate(json.loads(dest.read_text()), SCHEMA)


def test_gnuplot_and_csv(tmp_path, capsys):
    gp = tmp_path / "plot.gp"
    assert run(["bounds", "--epsilon", "0.0134", "--r-min", "2", "--r-max", "8", "--gnuplot-script", str(gp)],
               capsys)[0] == 0
    assert "plot" in gp.read_text()
    csv_path = tmp_path / "runs.csv"
    assert run(["simulate", "--n", "8", "--M", "20", "--trials", "3", "--csv", str(csv_path), "--csv-trials", "2"],
               capsys)[0] == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("trial,")
    assert len(lines) == 1 + 2 * 20


def test_computation_error_exit_one():
    p = run_proc(["bounds", "--epsilon", "0.7", "--r-bits", "2"])
    assert p.returncode == 1
    assert p.stderr.startswith("error: bounds:") and "epsilon" in p.stderr
    assert p.stdout == ""


def test_real_exponent_dual_reports_violation():
    p = run_proc(["dual-check", "--epsilon", "0.01", "--r-bits", "3", "--m", "30", "--form", "proof"])
    assert p.returncode == 1
    assert "28" in p.stderr


def test_usage_errors_exit_two():
    assert run_proc(["lp", "--epsilon", "0.01"]).returncode == 2
    assert run_proc(["threshold", "--bogus"]).returncode == 2
    assert run_proc(["nonsense"]).returncode == 2
    assert run_proc(["simulate", "--trials", "0"]).returncode == 2
    p = run_proc(["simulate", "--supplier", "attack", "--attack-probs", "0.5,0.4"])
    assert p.returncode in (1, 2) and p.stderr


def test_simulate_byte_identical():
    argv = ["simulate", "--supplier", "honest_quantum", "--n", "8", "--trials", "1000", "--seed", "1"]
    a, b = run_proc(argv), run_proc(argv)
    assert a.returncode == 0
    assert a.stdout == b.stdout
    c = run_proc(argv[:-1] + ["2"])
    assert c.stdout != a.stdout


def test_seed_from_environment():
    argv = ["simulate", "--n", "8", "--M", "63", "--trials", "30"]
    a = run_proc(argv, {"SVAMP_SEED": "7"})
    b = run_proc(argv + ["--seed", "7"], {"SVAMP_SEED": "0"})
    assert json.loads(a.stdout)["parameters"]["seed"] == 7
    assert a.stdout == b.stdout
    assert run_proc(argv, {"SVAMP_SEED": "x"}).returncode != 0


def test_toy_example_witness(capsys):
    _, out, _ = run(["toy-example"], capsys)
    r = json.loads(out)["result"]
    assert r["witness_max"] == 0.0
    assert all(w["p_source_equals_input"] == 0.0 for w in r["witness"])
    assert r["mixture_true_bell_value"] >= r["classical_floor"]
    assert r["n2_deterministic_values"] == [0.5]
