import csv
import json
import math

import pytest

from cli_io import (EXIT_GATE, EXIT_OK, TRACE_COLUMNS, export_diagram, export_events, export_glimm_trace,
                    export_snapshot, load_config, main, parse_config, read_snapshot)
from errors import GateViolation, ParseError
from gas_core import GasParams, GasState
from tracking import InitialProfile, TrackingSettings, advance, initialize, slabs_at

GAS = GasParams(gamma=1.4)
MACH_TWO = GasState(2.0, 0.0, 1.0, 1.4)

TOML_SCENARIO = """
name = "flat"
p_bar = 0.5
delta = 0.1
x_max = 2.0
mu_delta = 1e-6
allow_gate_override = true

[U_plus]
u = 2.0
p = 1.0
rho = 1.4

[constants]
C0 = 0.1
C1 = 1.0
C1_prime = 1.0
C2 = 2.0
C_b = 1.0

[weight_overrides]
delta_star = 0.5
"""


def _background_field(x=1.0):
    settings = TrackingSettings(delta=0.1, mu=1e-12, lambda_hat=1.0, p_bar=0.5, params=GAS)
    return advance(initialize(InitialProfile.constant(MACH_TWO), settings), x)


def _write_json(tmp_path, payload, name="flat.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def test_snapshot_rows(tmp_path):
    field = _background_field()
    path = export_snapshot(field, 1.0, str(tmp_path / "snap.csv"))
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["y_low", "y_high", "u", "v", "p", "rho"]
    assert len(rows) == len(field.fronts) + 3
    assert rows[1][0] == "-inf"
    assert float(rows[1][4]) == 0.5 and float(rows[1][2]) == 0.0

    slabs = read_snapshot(path)
    expected = slabs_at(field, 1.0)
    assert [s.state for s in slabs] == [s.state for s in expected]
    assert [s.y_low for s in slabs] == [s.y_low for s in expected]
    assert math.isinf(expected[-1].y_high) and math.isfinite(slabs[-1].y_high)
    assert slabs[-1].y_high > slabs[-1].y_low


def test_read_snapshot_rejects_other_headers(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(ParseError):
        read_snapshot(str(path))


def test_empty_event_log_and_trace(tmp_path):
    events = export_events([], str(tmp_path / "events.jsonl"))
    trace = export_glimm_trace([], str(tmp_path / "trace.csv"))
    assert (tmp_path / "events.jsonl").read_text(encoding="utf-8") == ""
    with open(trace, newline="", encoding="utf-8") as f:
        assert list(csv.reader(f)) == [TRACE_COLUMNS]
    assert events.endswith("events.jsonl")


def test_diagram_is_deterministic(tmp_path):
    field = _background_field(2.0)
    first = export_diagram(field, str(tmp_path / "a.svg"))
    second = export_diagram(field, str(tmp_path / "b.svg"))
    with open(first, "rb") as a, open(second, "rb") as b:
        content = a.read()
        assert content == b.read()
    assert b"<svg" in content


def test_load_json_and_toml(tmp_path, flat_payload):
    from_json = load_config(_write_json(tmp_path, flat_payload))
    toml_path = tmp_path / "flat.toml"
    toml_path.write_text(TOML_SCENARIO, encoding="utf-8")
    from_toml = load_config(str(toml_path))
    assert from_json == from_toml


def test_load_config_parse_errors(tmp_path, flat_payload):
    broken = tmp_path / "broken.json"
    broken.write_text("{\"name\": ", encoding="utf-8")
    with pytest.raises(ParseError):
        load_config(str(broken))
    broken_toml = tmp_path / "broken.toml"
    broken_toml.write_text("name = ", encoding="utf-8")
    with pytest.raises(ParseError):
        load_config(str(broken_toml))
    with pytest.raises(ParseError):
        load_config(str(tmp_path / "missing.json"))
    flat_payload["U_plus"]["v"] = 0.2
    with pytest.raises(ParseError):
        parse_config(flat_payload)


def test_load_config_checks_gates(tmp_path, flat_payload):
    flat_payload["p_bar"] = 1.5
    with pytest.raises(GateViolation):
        load_config(_write_json(tmp_path, flat_payload))
    assert load_config(_write_json(tmp_path, flat_payload, "unchecked.json"), check_gates=False).p_bar == 1.5


def test_main_run_exports(tmp_path, flat_payload, monkeypatch, capsys):
    monkeypatch.setenv("CORNER_FLOW_OUTPUT_DIR", str(tmp_path / "default"))
    out = tmp_path / "out"
    code = main(["run", _write_json(tmp_path, flat_payload), "-o", str(out), "--x-max", "1.5"])
    assert code == EXIT_OK
    for name in ("flat_snapshot.csv", "flat_events.jsonl", "flat_glimm.csv", "flat_fronts.svg",
                 "flat_summary.json", "corner_flow.log"):
        assert (out / name).exists()
    summary = json.loads((out / "flat_summary.json").read_text(encoding="utf-8"))
    assert summary["x"] == 1.5
    assert summary["overridden_gates"] == ["strong_weak3_delta"]
    assert "- snapshot:" in capsys.readouterr().out


def test_main_gate_exit_codes(tmp_path, flat_payload, monkeypatch):
    monkeypatch.setenv("CORNER_FLOW_OUTPUT_DIR", str(tmp_path))
    flat_payload["weight_overrides"] = {}
    flat_payload["allow_gate_override"] = False
    assert main(["run", _write_json(tmp_path, flat_payload)]) == EXIT_GATE
    assert main(["background", "--U-plus", "2,0,1,1.4", "--p-bar", "1.2"]) == EXIT_GATE

    broken = tmp_path / "broken.json"
    broken.write_text("[", encoding="utf-8")
    assert main(["run", str(broken)]) == EXIT_GATE
    assert main(["run", str(tmp_path / "missing.toml")]) == EXIT_GATE


def test_main_run_rejects_variation_above_epsilon0(tmp_path, flat_payload, monkeypatch):
    monkeypatch.setenv("CORNER_FLOW_OUTPUT_DIR", str(tmp_path))
    flat_payload["perturbation"] = {"shape": "step_train", "epsilon": 0.05, "steps": 4}
    flat_payload["epsilon0"] = 1e-3
    assert main(["run", _write_json(tmp_path, flat_payload)]) == EXIT_GATE
    flat_payload["epsilon0"] = 0.5
    assert main(["run", _write_json(tmp_path, flat_payload, "within.json"), "-o", str(tmp_path / "out"),
                 "--x-max", "0.5"]) == EXIT_OK


def test_main_background_and_riemann(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CORNER_FLOW_OUTPUT_DIR", str(tmp_path))
    assert main(["background", "--U-plus", "2,0,1,1.4", "--p-bar", "0.5"]) == EXIT_OK
    background = json.loads(capsys.readouterr().out)
    assert background["p_star"] < 0.5
    assert background["k2"] < background["k1"]

    assert main(["riemann", "--U-L", "2,0,1,1.4", "--U-R", "2,0,1,1.4"]) == EXIT_OK
    riemann = json.loads(capsys.readouterr().out)
    assert riemann["strengths"] == pytest.approx([0.0, 0.0, 0.0, 0.0], abs=1e-12)


def test_main_validate_and_sweep(tmp_path, flat_payload, monkeypatch):
    monkeypatch.setenv("CORNER_FLOW_OUTPUT_DIR", str(tmp_path))
    path = _write_json(tmp_path, flat_payload)
    out = tmp_path / "out"
    assert main(["validate", path, "-o", str(out)]) == EXIT_OK
    report = json.loads((out / "flat_validation.json").read_text(encoding="utf-8"))
    assert report["invariant_region"]["inside"]
    assert report["consistency"]["adjacency"] <= 1e-12

    assert main(["sweep", path, "--deltas", "0.1,0.2", "--workers", "2", "-o", str(out)]) == EXIT_OK
    with open(out / "flat_sweep.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [row["status"] for row in rows] == ["ok", "ok"]
    assert [float(row["delta"]) for row in rows] == [0.1, 0.2]


def test_main_run_report(tmp_path, flat_payload, monkeypatch):
    monkeypatch.setenv("CORNER_FLOW_OUTPUT_DIR", str(tmp_path))
    out = tmp_path / "out"
    assert main(["run", _write_json(tmp_path, flat_payload), "-o", str(out), "--report"]) == EXIT_OK
    html = (out / "flat_report.html").read_text(encoding="utf-8")
    assert "Corner flow run: flat" in html
    assert "<svg" in html
    assert "strong_weak3_delta" in html
    assert not (out / "report_pdf").exists()
