import json

import pandas as pd
import pytest

from app.app import SUBCOMMANDS, build_parser, main
from app.orchestrator import Orchestrator
from app.report import render_report
from exact.checks import CheckReport
from utils.config import load_config


def _run(tmp_path, *args):
    return main([*args, "--output-dir", str(tmp_path), "--experiment", "test", "--workers", "1"])


def _outputs(tmp_path, subcommand):
    return tmp_path / "test" / subcommand


def test_tool_registry_covers_every_subcommand():
    tools = Orchestrator(load_config(environ={})).get_tools()
    assert set(tools) == set(SUBCOMMANDS)


def test_flags_map_to_config_keys():
    args = build_parser().parse_args(["survival", "--rho", "0.3", "--t-grid", "0,1", "--naive", "--max-states", "10"])
    assert args.rho == 0.3 and args.t_grid == "0,1" and args.naive == "true" and args.max_states == 10
    with pytest.raises(SystemExit):
        build_parser().parse_args(["frobnicate"])


def test_rates_writes_a_manifest(tmp_path, capsys):
    assert _run(tmp_path, "rates", "--d", "1", "--n", "1") == 0
    out = _outputs(tmp_path, "rates")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "pass"
    assert {a["name"] for a in manifest["artifacts"]} >= {"rates.csv", "report.md"}
    frame = pd.read_csv(out / "rates.csv", dtype={"row_state": str, "col_state": str})
    assert len(frame) == 12
    assert int(frame["killing"].sum()) == 4
    assert "🚀 Starting rates..." in capsys.readouterr().out


def test_harmonic_profile_files(tmp_path):
    assert _run(tmp_path, "harmonic", "--d", "2", "--n", "1") == 0
    out = _outputs(tmp_path, "harmonic")
    constants = json.loads((out / "constants.json").read_text())
    assert constants["C"] == pytest.approx(3.0, abs=1e-6)
    assert len(pd.read_csv(out / "profile.csv")) == 9


def test_spectrum_on_the_four_state_chain(tmp_path):
    assert _run(tmp_path, "spectrum", "--d", "1", "--n", "1") == 0
    out = _outputs(tmp_path, "spectrum")
    assert (out / "survival_ratio.csv").exists()
    assert len(pd.read_csv(out / "u.csv")) == 4
    assert "*Overall: PASS*" in (out / "report.md").read_text()


def test_walk_in_four_dimensions(tmp_path):
    assert _run(tmp_path, "walk", "--d", "4", "--n-grid", "1,2") == 0
    out = _outputs(tmp_path, "walk")
    assert (out / "expected_returns_below_quarter.json").exists()
    assert (out / "summability.csv").exists()


def test_failed_check_exits_with_one(tmp_path):
    code = _run(tmp_path, "monotone", "--model", "beta-bond", "--d", "2", "--n", "1", "--pattern", "A2", "--beta", "1", "--trials", "20")
    assert code == 1
    manifest = json.loads((_outputs(tmp_path, "monotone") / "manifest.json").read_text())
    assert manifest["status"] == "fail"
    assert {"check": "generator_monotone", "name": "generator_monotone", "pass": False} in manifest["checks"]


def test_config_errors_exit_with_two(tmp_path, capsys):
    assert _run(tmp_path, "rates", "--rho", "1.5") == 2
    assert "❌ Error during rates: model.rho" in capsys.readouterr().out


def test_cap_errors_exit_with_three(tmp_path):
    assert _run(tmp_path, "rates", "--d", "2", "--n", "1", "--max-states", "2") == 3


def test_report_marks_failures():
    config = load_config(environ={})
    checks = [
        CheckReport("alpha", True, {"x": 1}, [{"t": 0.0, "gap": 0.5}], 1e-6),
        CheckReport("beta", False, {}, []),
    ]
    text = render_report("spectrum", config, checks, {"lambda": 0.75})
    assert "#### ✅ alpha" in text
    assert "#### ❌ beta" in text
    assert "*Overall: FAIL*" in text


def test_walk_below_four_dimensions_reports_without_gating(tmp_path):
    assert _run(tmp_path, "walk", "--d", "3", "--n-grid", "1,2") == 0
    out = _outputs(tmp_path, "walk")
    assert (out / "two_point_bound.csv").exists()
    assert not (out / "two_point_bound.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["checks"] == []


def test_verify_psi_asserts_the_flat_control(tmp_path):
    assert _run(tmp_path, "verify-psi", "--d", "2", "--n", "1") == 0
    out = _outputs(tmp_path, "verify-psi")
    control = json.loads((out / "flat_weights_control.json").read_text())
    assert control["pass"] is True
    assert control["values"][0]["passed"] is False
    assert control["values"][0]["counterexample"] is not None
    checks = {c["check"] for c in json.loads((out / "manifest.json").read_text())["checks"]}
    assert {"V_increasing", "flat_weights_control", "u_over_psi", "survival_over_psi"} <= checks


def test_hprocess_reports_are_keyed_by_proposition(tmp_path):
    assert _run(tmp_path, "hprocess", "--d", "1", "--n", "1") == 0
    out = _outputs(tmp_path, "hprocess")
    keyed = json.loads((out / "propositions.json").read_text())
    assert set(keyed) == {"prop1.8", "prop1.9", "remark5.1", "remark5.2"}
    assert keyed["prop1.9"]["name"] == "window_law_scan"
    assert (out / "remark5.2.csv").exists()


def test_spectrum_for_the_birth_death_model(tmp_path):
    assert _run(tmp_path, "spectrum", "--model", "birth-death", "--d", "1", "--n", "2") == 0
    out = _outputs(tmp_path, "spectrum")
    assert json.loads((out / "irreducible.json").read_text())["pass"] is True
    moments = pd.read_csv(out / "density_moments.csv")
    assert list(moments["p"]) == [1, 2, 3, 4]
