"""Problem files and the command-line pipeline: round-trips, exit codes, reports."""

import json

import numpy as np
import pytest

from lsocert.cli import main
from lsocert.errors import ProblemFileError
from lsocert.problems import (
    bundled_problem_path,
    load_bundled,
    load_problem,
    problem_from_dict,
    problem_to_dict,
    save_problem,
)

SCALAR = str(bundled_problem_path("scalar1d"))
TWODIM = str(bundled_problem_path("twodim"))


def test_bundled_problems_load():
    scalar = load_bundled("scalar1d")
    assert scalar.name == "scalar1d"
    assert scalar.space.names == ("x",)
    two = load_bundled("twodim")
    assert two.space.names == ("x", "y")
    assert len(two.boundary) == 4


def test_bundled_matches_fixture(scalar_problem, twodim_problem):
    assert load_bundled("scalar1d") == scalar_problem
    assert load_bundled("twodim") == twodim_problem


@pytest.mark.parametrize("name", ["scalar1d", "twodim"])
def test_roundtrip_parse_serialize_parse(name, tmp_path):
    prob = load_bundled(name)
    path = tmp_path / f"{name}.json"
    save_problem(prob, path)
    again = load_problem(path)
    assert again == prob


def test_malformed_polynomial_reports_field_path(tmp_path):
    doc = json.loads(open(SCALAR).read())
    doc["dynamics"]["f"][0] = "1*z^3 + oops"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ProblemFileError) as exc:
        load_problem(path)
    assert "dynamics.f[0]" in str(exc.value)


def test_missing_field_path():
    doc = json.loads(open(SCALAR).read())
    del doc["cost"]["R"]
    with pytest.raises(ProblemFileError) as exc:
        problem_from_dict(doc)
    assert "cost.R" in str(exc.value)


def test_bad_schema_version():
    doc = json.loads(open(SCALAR).read())
    doc["schema_version"] = 99
    with pytest.raises(ProblemFileError):
        problem_from_dict(doc)


# ---- CLI ----------------------------------------------------------------


def test_cli_parse_error_exit_code(tmp_path, capsys):
    doc = json.loads(open(SCALAR).read())
    doc["cost"]["q"] = "1*w + 2"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code = main(["solve", str(bad), "--deg-psi", "2"])
    assert code == 2
    assert "cost.q" in capsys.readouterr().err


def test_cli_model_error_exit_code(tmp_path, capsys):
    doc = json.loads(open(SCALAR).read())
    doc["cost"]["q"] = "1*x"  # negative on part of the domain
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code = main(["solve", str(bad), "--deg-psi", "2"])
    assert code == 3


def test_cli_solve_report_and_determinism(tmp_path, capsys):
    out1 = tmp_path / "r1.json"
    out2 = tmp_path / "r2.json"
    for out in (out1, out2):
        code = main([
            "solve", SCALAR, "--deg-psi", "4", "--direction", "both", "--out", str(out),
        ])
        assert code == 0
    d1 = json.loads(out1.read_text())
    d2 = json.loads(out2.read_text())

    def strip_time(doc):
        for run in doc["runs"].values():
            run.pop("wall_time_s")
        return doc

    assert strip_time(d1) == strip_time(d2)
    run = d1["runs"]["lower"]
    assert run["certificate"]["passed"] is True
    assert run["gamma"] == pytest.approx(0.544, abs=2e-3)


def test_cli_solve_with_verify_and_rollout(tmp_path):
    out = tmp_path / "report.json"
    code = main([
        "solve", SCALAR, "--deg-psi", "6", "--direction", "both", "--out", str(out),
        "--verify", "--grid", "801", "--rollouts", "60", "--dt", "1e-3", "--seed", "42",
    ])
    assert code == 0
    doc = json.loads(out.read_text())
    ver = doc["verification"]
    assert ver["fd"]["passed"] is True
    assert ver["bound_order"]["passed"] is True
    assert ver["rollout"]["consistent_with_value_bound"] is True


def test_cli_verify_subcommand(tmp_path):
    report = tmp_path / "report.json"
    assert main(["solve", SCALAR, "--deg-psi", "6", "--direction", "both",
                 "--out", str(report)]) == 0
    out = tmp_path / "verification.json"
    code = main([
        "verify", SCALAR, "--report", str(report), "--grid", "801",
        "--rollouts", "0", "--out", str(out),
    ])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["verification"]["fd"]["passed"] is True


def test_cli_hierarchy_single_cell_matches_solve(tmp_path):
    h_out = tmp_path / "h.json"
    s_out = tmp_path / "s.json"
    assert main(["hierarchy", SCALAR, "--deg-psi", "6", "--deg-mult", "6",
                 "--out", str(h_out)]) == 0
    assert main(["solve", SCALAR, "--deg-psi", "6", "--deg-mult", "6",
                 "--out", str(s_out)]) == 0
    h = json.loads(h_out.read_text())
    s = json.loads(s_out.read_text())
    assert h["tables"]["lower"][0][0] == pytest.approx(s["runs"]["lower"]["gamma"], abs=1e-9)


def test_cli_hierarchy_table_and_csv(tmp_path):
    out = tmp_path / "h.json"
    csv_path = tmp_path / "h.csv"
    code = main([
        "hierarchy", SCALAR, "--deg-psi", "2:6:2", "--deg-mult", "2:6:2",
        "--out", str(out), "--csv", str(csv_path),
    ])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["monotonicity_violations"]["lower"] == []
    table = doc["tables"]["lower"]
    assert len(table) == 3 and len(table[0]) == 3
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0].startswith("deg_psi,")
    assert len(lines) == 4


def test_cli_samples(tmp_path):
    report = tmp_path / "report.json"
    assert main(["solve", SCALAR, "--deg-psi", "4", "--out", str(report)]) == 0
    out = tmp_path / "samples.csv"
    code = main([
        "samples", SCALAR, "--report", str(report), "--grid", "11", "--out", str(out),
    ])
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "x,psi,value,clamped"
    assert len(lines) == 12


def test_cli_samples_constant_psi_zero_value(tmp_path):
    # a constant candidate psi = 1 must give V = 0 at every sample
    report = {
        "schema_version": 1,
        "kind": "run_report",
        "runs": {
            "lower": {
                "lambda": 1.0,
                "psi": {"variables": ["x"], "text": "1", "coefficients": [[[0], 1.0]]},
            }
        },
    }
    rp = tmp_path / "r.json"
    rp.write_text(json.dumps(report))
    out = tmp_path / "s.csv"
    assert main(["samples", SCALAR, "--report", str(rp), "--grid", "5", "--out", str(out)]) == 0
    rows = out.read_text().strip().splitlines()[1:]
    for row in rows:
        x, psi, value, clamped = row.split(",")
        assert float(value) == 0.0
        assert clamped == "0"


def test_cli_samples_clamped_inf(tmp_path):
    report = {
        "schema_version": 1,
        "kind": "run_report",
        "runs": {
            "lower": {
                "lambda": 1.0,
                "psi": {"variables": ["x"], "text": "-1", "coefficients": [[[0], -1.0]]},
            }
        },
    }
    rp = tmp_path / "r.json"
    rp.write_text(json.dumps(report))
    out = tmp_path / "s.csv"
    assert main(["samples", SCALAR, "--report", str(rp), "--grid", "5", "--out", str(out)]) == 0
    rows = out.read_text().strip().splitlines()[1:]
    for row in rows:
        x, psi, value, clamped = row.split(",")
        assert value == "inf" and clamped == "1"


def test_cli_dump_sdp(tmp_path):
    from lsocert.sdp import load_program

    dump = tmp_path / "prog.sdp"
    assert main(["solve", SCALAR, "--deg-psi", "2", "--dump-sdp", str(dump)]) == 0
    prog = load_program(dump)
    assert prog.A.shape[0] > 0
    assert any(c.kind == "psd" for c in prog.cones)
