"""Tests des artefacts (CSV, metrics.json, SVG) et de la CLI angleform."""
import json
import math

import numpy as np
import pytest

from angleform import build_parser, cmd_validate, main
from errors import ValidationError
from report import CSV_HEADER, format_decimal, run_scenario, to_jsonable, write_artifacts
from reproduction import SEEDED_CHECKS, check_integrator_order, load_fixture, run_check
from scenario_file import bundled_path

ARTIFACTS = ("trajectory.csv", "metrics.json", "angle_error.svg", "trajectory.svg", "rates.svg")

BAD_GRAPH = """\
[agents]
3
[graph]
1:
2: 1 3
3: 1 2
[target]
0 0
1 0
0 1
[initial]
0 0
1 0
0.5 0.5
"""

COLLINEAR = BAD_GRAPH.replace("2: 1 3", "2: 1").replace("0 1\n[initial]", "2 0\n[initial]")


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_to_jsonable_replaces_non_finite():
    data = {"a": np.float64(math.nan), "b": [np.int64(3), math.inf], 4: np.array([1.5])}
    assert to_jsonable(data) == {"a": None, "b": [3, None], "4": [1.5]}


def test_run_on_target_writes_all_artifacts(tmp_path):
    out = tmp_path / "on_target"
    assert main(["run", bundled_path("on_target"), "--out", str(out)]) == 0
    for name in ARTIFACTS:
        assert (out / name).is_file()
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + 1001 * 6
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    for agent in range(1, 7):
        xy = rows[rows[:, 1] == agent][:, 2:4]
        assert np.ptp(xy, axis=0).max() < 1e-9
    svg = (out / "trajectory.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    assert "xlink:href=\"http" not in svg


def test_csv_uses_nine_significant_digits(tmp_path):
    s = load_fixture("shape").with_overrides(duration=0.05)
    result = run_scenario(s)
    write_artifacts(str(tmp_path), result)
    first = (tmp_path / "trajectory.csv").read_text().splitlines()[3]
    t, agent, x, y, ux, uy = first.split(",")
    assert (t, agent) == ("0", "3")
    assert x == format_decimal(s.p0[2, 0])
    assert uy == format_decimal(result.record.inputs[0, 2, 1])
    assert "e" not in (tmp_path / "trajectory.csv").read_text().split("\n", 1)[1]


def test_format_decimal_never_uses_exponents():
    assert format_decimal(-1.2574386e-12) == "-0.0000000000012574386"
    assert format_decimal(2.5e-11) == "0.000000000025"
    assert format_decimal(0.0) == "0"
    assert format_decimal(0.07) == "0.07"
    assert format_decimal(-1.23456789012) == "-1.23456789"
    assert format_decimal(123456789.123) == "123456789"


def test_metrics_report_for_shape_fixture(tmp_path):
    assert main(["run", bundled_path("shape"), "--out", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["terminal"]["angle_error_rad"] < 1e-6
    assert metrics["scenario"]["mode"] == "shape"
    assert metrics["graph"]["formation"]["stats"]["closure_count"] == 1
    assert metrics["rates"]["3"]["predicted"] == pytest.approx(0.5)
    assert metrics["rates"]["5"]["predicted"] == pytest.approx(0.8)
    rel = metrics["limit"]["relative_error"]
    assert max(rel.values()) < 1e-6
    assert metrics["collision"] is None
    assert [a["triangle"] for a in metrics["angles"]] == [[1, 2, 3], [2, 3, 4], [1, 4, 5], [1, 4, 6]]


def test_metrics_report_for_maneuver_fixture(tmp_path):
    assert main(["run", bundled_path("maneuver"), "--out", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert len(metrics["segments"]) == 3
    assert metrics["segments"][1]["delta_12"] == [0.4, -0.4]
    assert metrics["limit"]["predicted"] is None


def test_metrics_report_for_sequential_fixture(tmp_path):
    assert main(["run", bundled_path("sequential"), "--out", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["collision"]["collision_free"] is True
    assert metrics["activation_times"]["3"] == 0.0


def test_run_overrides_and_step_guard(tmp_path, capsys):
    assert main(["run", bundled_path("shape"), "--out", str(tmp_path), "--dt", "0.1"]) == 1
    assert "stability guard" in capsys.readouterr().err
    assert main(["run", bundled_path("shape"), "--out", str(tmp_path),
                 "--dt", "0.02", "--duration", "1"]) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["scenario"]["dt"] == 0.02
    assert metrics["scenario"]["samples"] == 51


def test_validate_bundled_ok(capsys):
    assert main(["validate", bundled_path("shape")]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_reports_lff_violation(tmp_path, capsys):
    path = _write(tmp_path, "bad.scn", BAD_GRAPH)
    with pytest.raises(ValidationError) as exc:
        cmd_validate(path)
    assert any(v.startswith("agent 2: must sense exactly 1") for v in exc.value.violations)
    assert main(["validate", path]) == 1
    assert "LFF structure" in capsys.readouterr().err


def test_validate_reports_collinear_target(tmp_path, capsys):
    path = _write(tmp_path, "collinear.scn", COLLINEAR)
    assert main(["validate", path]) == 1
    assert "strong nondegeneracy" in capsys.readouterr().err


def test_validate_reports_parse_position(tmp_path, capsys):
    path = _write(tmp_path, "typo.scn", BAD_GRAPH.replace("0.5 0.5", "0.5 x"))
    assert main(["validate", path]) == 1
    assert f"{path}:14:5:" in capsys.readouterr().err


def test_missing_file_exits_one(tmp_path):
    assert main(["validate", str(tmp_path / "missing.scn")]) == 1


def test_unknown_fixture_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["reproduce", "orbit", "--out", "x"])
    assert exc.value.code == 2


def test_run_needs_file_or_all():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--out", "x"])
    assert exc.value.code == 2


def test_parser_accepts_run_all():
    args = build_parser().parse_args(["run", "--all", "--out", "out"])
    assert args.all and args.file is None


def test_log_level_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("ANGLEFORM_LOG", "verbose")
    assert main(["validate", bundled_path("on_target")]) == 0


def _key_paths(tree, prefix=""):
    paths = set()
    for key, value in tree.items():
        path = f"{prefix}{key}"
        paths.add(path)
        if isinstance(value, dict):
            paths |= _key_paths(value, path + ".")
    return paths


def test_metrics_keys_are_stable_across_runs():
    short = run_scenario(load_fixture("shape").with_overrides(duration=1.0)).metrics
    longer = run_scenario(load_fixture("shape").with_overrides(duration=3.0)).metrics
    resting = run_scenario(load_fixture("on_target")).metrics
    assert _key_paths(short) == _key_paths(longer) == _key_paths(resting)
    maneuver = run_scenario(load_fixture("maneuver").with_overrides(duration=10.0)).metrics
    sequential = run_scenario(load_fixture("sequential").with_overrides(duration=1.0)).metrics
    assert list(short) == list(maneuver) == list(sequential)
    for section in ("scenario", "terminal", "run"):
        assert set(short[section]) == set(maneuver[section]) == set(sequential[section])


def test_run_section_summarizes_whole_trajectory():
    result = run_scenario(load_fixture("shape").with_overrides(duration=2.0))
    run = result.metrics["run"]
    assert run["min_neighbor_distance"] == pytest.approx(float(result.record.min_neighbor_distance.min()))
    assert run["angle_error"]["samples"] == result.record.samples
    assert run["angle_error"]["initial"] == pytest.approx(float(result.record.angle_error[0]))
    assert run["shape_distance"]["terminal"] == result.metrics["terminal"]["shape_distance"]
    assert "min_neighbor_distance" not in result.metrics["terminal"]


def test_bundled_shape_seed_reaches_seeded_checks():
    assert load_fixture("shape").rng_seed == 7
    calls = []

    def seeded(seed=0):
        calls.append(seed)
        return {"passed": True}

    SEEDED_CHECKS.add(seeded)
    try:
        run_check(seeded, 42)
        run_check(seeded, None)
    finally:
        SEEDED_CHECKS.discard(seeded)
    assert calls == [42, 0]
    assert check_integrator_order not in SEEDED_CHECKS
