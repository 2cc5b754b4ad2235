import json

import numpy as np
import pytest

from nvsigma.cli import SCENARIO_SCHEMA, UsageError, load_scenario, main, parse_complex
from nvsigma.torus import GridFunction, TorusShape, write_csv

ELL2 = {"schema": "nv-sigma/1", "tau": [0.0, 1.0], "grid": 128,
        "potential": {"kind": "instanton", "zeros": [[0, 0], [0.5, 0.5]], "poles": [[0.5, 0], [0, 0.5]]},
        "o3": {"r": [0.48, 0.6, 0.64]}}
CONST = {"schema": "nv-sigma/1", "grid": 16, "potential": {"kind": "constant", "value": [0.7, -0.2]}}
TRIG = {"schema": "nv-sigma/1", "grid": 16, "potential": {"kind": "trig", "modes": [
    {"m": 1, "n": 0, "c": [0.25, 0]}, {"m": -1, "n": 0, "c": [0.25, 0]},
    {"m": 0, "n": 1, "c": [0, -0.1]}, {"m": 0, "n": -1, "c": [0, 0.1]}]},
    "flow": {"n": 0, "m": 1, "dt": 1e-3, "steps": 3}}


def scenario(tmp_path, data, name="scn.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("text,value", [("1i", 1j), ("0.3", 0.3), ("-2+0.5i", -2 + 0.5j), ("i", 1j), ("-i", -1j),
                                        ("1j", 1j), (" 0.5 - 1i ", 0.5 - 1j)])
def test_parse_complex(text, value):
    assert parse_complex(text) == value


def test_parse_complex_rejects_garbage():
    with pytest.raises(UsageError):
        parse_complex("one")


def test_schema_rejects_unknown_fields(tmp_path, capsys):
    bad = dict(CONST, potentail={})
    out = tmp_path / "rep.json"
    code, _, err = run(["verify", "--suite", "bloch", "--scenario", scenario(tmp_path, bad), "--out", str(out)], capsys)
    assert code == 2
    assert "potentail" in err
    assert not out.exists()


@pytest.mark.parametrize("patch", [{"schema": "nv-sigma/2"}, {"grid": 9}, {"tau": [0, 1, 2]},
                                   {"potential": {"kind": "constant", "value": 1.0}}])
def test_schema_violations(tmp_path, patch):
    with pytest.raises(UsageError):
        load_scenario(scenario(tmp_path, dict(CONST, **patch)))


def test_unreadable_scenarios(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert run(["verify", "--suite", "bloch", "--scenario", str(path)], capsys)[0] == 2
    assert run(["verify", "--suite", "bloch", "--scenario", str(tmp_path / "missing.json")], capsys)[0] == 2
    assert run(["verify", "--suite", "nope", "--scenario", str(path)], capsys)[0] == 2
    assert run([], capsys)[0] == 2


def test_schema_document_is_valid():
    import jsonschema
    jsonschema.Draft202012Validator.check_schema(SCENARIO_SCHEMA)


def test_verify_instanton(tmp_path, capsys):
    out = tmp_path / "rep.json"
    code, _, err = run(["verify", "--suite", "instanton", "--scenario", scenario(tmp_path, ELL2),
                        "--grid", "128", "--out", str(out)], capsys)
    assert code == 0, err
    rep = json.loads(out.read_text())
    assert rep["instanton_charge"]["pass"]
    assert rep["instanton_charge"]["value"] == pytest.approx(2.0, abs=1e-5)
    assert rep["meta"]["passed"]
    for name, check in rep.items():
        if name != "meta":
            assert {"value", "tolerance", "pass"} <= set(check)


def test_verify_bloch_constant(tmp_path, capsys):
    out = tmp_path / "rep.json"
    code, _, _ = run(["verify", "--suite", "bloch", "--scenario", scenario(tmp_path, CONST),
                      "--order", "8", "--out", str(out)], capsys)
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["self_duality"]["pass"] and rep["even_ell"]["value"] == 0.0


def test_verify_reports_failures(tmp_path, capsys):
    s = TorusShape(1j, 16, 16)
    write_csv(GridFunction(s, np.random.default_rng(0).normal(size=(16, 16))), tmp_path / "noise.csv")
    data = {"schema": "nv-sigma/1", "grid": 16, "potential": {"kind": "csv", "path": "noise.csv"}}
    out = tmp_path / "rep.json"
    code, _, err = run(["verify", "--suite", "bloch", "--scenario", scenario(tmp_path, data), "--out", str(out)],
                       capsys)
    assert code == 1
    assert "check failed" in err
    assert json.loads(out.read_text())["meta"]["passed"] is False


def test_csv_grid_mismatch(tmp_path, capsys):
    write_csv(GridFunction.zeros(TorusShape(1j, 8, 8)), tmp_path / "u.csv")
    data = {"schema": "nv-sigma/1", "grid": 16, "potential": {"kind": "csv", "path": "u.csv"}}
    assert run(["verify", "--suite", "bloch", "--scenario", scenario(tmp_path, data)], capsys)[0] == 2


def test_suite_needs_matching_scenario(tmp_path, capsys):
    path = scenario(tmp_path, CONST)
    for suite in ("instanton", "o3", "ecm"):
        assert run(["verify", "--suite", suite, "--scenario", path], capsys)[0] == 2
    assert run(["verify", "--suite", "bloch", "--scenario", path, "--grid", "10"], capsys)[0] == 0
    assert run(["verify", "--suite", "bloch", "--scenario", path, "--grid", "7"], capsys)[0] == 2


def test_reports_do_not_depend_on_thread_count(tmp_path, capsys, monkeypatch):
    path = scenario(tmp_path, TRIG)
    reports = []
    for threads in ("1", "3"):
        monkeypatch.setenv("NVSIGMA_THREADS", threads)
        out = tmp_path / f"rep{threads}.json"
        assert run(["verify", "--suite", "flow", "--scenario", path, "--out", str(out)], capsys)[0] == 0
        rep = json.loads(out.read_text())
        rep["meta"].pop("seconds")
        reports.append(rep)
    assert reports[0] == reports[1]
    monkeypatch.setenv("NVSIGMA_THREADS", "many")
    assert run(["verify", "--suite", "flow", "--scenario", path], capsys)[0] == 2


def test_verify_o3_and_ecm(tmp_path, capsys):
    out = tmp_path / "o3.json"
    assert run(["verify", "--suite", "o3", "--scenario", scenario(tmp_path, ELL2), "--grid", "64",
                "--out", str(out)], capsys)[0] == 0
    rep = json.loads(out.read_text())
    assert rep["mobius_invariance"]["pass"] and rep["o3_x_w"]["pass"]
    data = {"schema": "nv-sigma/1", "ecm": {"particles": {"z": [[0.3, 0], [-0.3, 0]], "rho": [[0, 0], [0, 0]]}}}
    code, out_text, _ = run(["verify", "--suite", "ecm", "--scenario", scenario(tmp_path, data, "e.json")], capsys)
    assert code == 0
    rep = json.loads(out_text)
    assert rep["involution"]["value"] <= 1e-9 and rep["lax_antisymmetry"]["pass"]


def test_flow_zero_steps(tmp_path, capsys):
    code, out, _ = run(["flow", "--scenario", scenario(tmp_path, CONST), "--steps", "0"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 1
    rec = json.loads(lines[0])
    assert rec["step"] == 0 and rec["t"] == 0.0
    assert rec["mean_u"] == pytest.approx([0.7, -0.2], abs=1e-14)


@pytest.mark.parametrize("n", [0, 1, 2])
def test_flow_constant_is_stationary(tmp_path, capsys, n):
    out = tmp_path / "traj.jsonl"
    code, _, _ = run(["flow", "--scenario", scenario(tmp_path, CONST), "--n", str(n), "--steps", "3",
                      "--out", str(out), "--profiles", str(tmp_path / "prof")], capsys)
    assert code == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["step"] for r in recs[:-1]] == [0, 1, 2, 3]
    assert len({tuple(r["mean_u"]) for r in recs[:-1]}) == 1
    assert recs[-1]["summary"]["change"] == 0.0
    assert (tmp_path / "prof" / "u_00003.csv").exists()
    assert (tmp_path / "prof" / f"J{n}_00003.csv").exists()


def test_flow_drift_tolerance(tmp_path, capsys):
    path = scenario(tmp_path, TRIG)
    code, out, _ = run(["flow", "--scenario", path, "--steps", "3"], capsys)
    assert code == 0
    summary = json.loads(out.strip().splitlines()[-1])["summary"]
    assert summary["mean_drift"]["value"] <= 1e-12 and summary["change"] > 0
    # a flow that does not fit the scenario depth is a usage error
    assert run(["flow", "--scenario", path, "--n", "3"], capsys)[0] == 2


def test_flow_drift_failure(tmp_path, capsys, monkeypatch):
    import nvsigma.cli as cli
    monkeypatch.setattr(cli, "flow_step", lambda u, n, dt, S, D: u + 1e-6)
    code, _, err = run(["flow", "--scenario", scenario(tmp_path, TRIG), "--steps", "2"], capsys)
    assert code == 1 and "drifted" in err


def test_ecm_particles(capsys):
    code, out, _ = run(["ecm", "--particles", "z=0.3,-0.3", "rho=0,0", "--tau", "1i"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert abs(complex(*rep["I"][0])) <= 1e-9
    assert rep["involution_residual"] <= 1e-9
    assert rep["N"] == 2 and len(rep["cmsing"]) == 3


def test_ecm_integrals_with_turning_table(tmp_path, capsys):
    out = tmp_path / "curve.json"
    code, _, _ = run(["ecm", "--integrals", "I=0,0.5,0,0.1", "--check-turning", "1", "--out", str(out)], capsys)
    assert code == 0
    rep = json.loads(out.read_text())
    table = rep["turning_table"]
    assert len(table) == 3 and table[2][2] is None
    assert "error" in rep["cubic"]


@pytest.mark.parametrize("argv", [
    ["ecm", "--particles", "z=0.3,-0.3", "rho=0,0", "--integrals", "I=0,1"],
    ["ecm"],
    ["ecm", "--particles", "z=0.3,-0.3", "rho=0"],
    ["ecm", "--particles", "z=0.3,0.3", "rho=0,0"],
    ["ecm", "--integrals", "J=0,1"],
    ["ecm", "--integrals", "I=0,1", "--tau", "-1i"],
])
def test_ecm_usage_errors(capsys, argv):
    assert run(argv, capsys)[0] == 2
