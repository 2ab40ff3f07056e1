import json
import math

import pytest
from click.testing import CliRunner

from wittenspec.cli import EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_LIBRARY, main, plain
from wittenspec.pipeline import two_well_polynomial


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def two_well_file(tmp_path):
    path = tmp_path / "two_well.json"
    path.write_text(json.dumps(two_well_polynomial().to_dict()))
    return str(path)


@pytest.fixture()
def abstract_file(tmp_path):
    path = tmp_path / "abstract.json"
    path.write_text(json.dumps({"points": [
        {"q": 0.1, "value": 0.0, "curvature": 6.0},
        {"q": 0.35, "value": 0.5, "curvature": -8.0},
        {"q": 0.6, "value": 0.15, "curvature": 5.0},
        {"q": 0.85, "value": 0.2, "curvature": -7.0},
    ]}))
    return str(path)


def test_exit_codes_are_distinct():
    assert len({0, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_LIBRARY}) == 4


def test_empty_input_is_an_input_error(runner, tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    result = runner.invoke(main, ["spectrum", str(path)])
    assert result.exit_code == EXIT_INPUT
    assert json.loads(result.output)["error"]["error"] == "input_format"


def test_missing_file_is_an_input_error(runner, tmp_path):
    result = runner.invoke(main, ["analyze", str(tmp_path / "absent.json")])
    assert result.exit_code == EXIT_INPUT


def test_library_errors_use_their_own_code(runner, tmp_path):
    path = tmp_path / "flat.json"
    path.write_text(json.dumps({"constant": 1.0}))
    result = runner.invoke(main, ["analyze", str(path)])
    assert result.exit_code == EXIT_LIBRARY
    assert "error" in json.loads(result.output)


def test_analyze_lists_critical_points(runner, two_well_file):
    result = runner.invoke(main, ["analyze", two_well_file])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    locs = [p["q"] for p in doc["critical_data"]["points"]]
    assert locs[0] == pytest.approx(1 / 8, abs=1e-10)
    assert len(doc["ingredients"]["tau"]) == 4


def test_spectrum_leads_with_the_tunnelling_term(runner, two_well_file):
    result = runner.invoke(main, ["spectrum", two_well_file])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    (nonzero,) = [s for s in doc["solutions"] if not s["zero"]]
    lead = nonzero["hEr"][0]  # records are listed in dominance order
    assert lead["c"] == pytest.approx(-9 / (8 * math.pi), abs=1e-9)
    assert (lead["k"], lead["l"]) == ("1/1", 0)
    assert lead["re"] == pytest.approx(6 * math.sqrt(5), rel=1e-9)


def test_output_is_deterministic(runner, two_well_file, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert runner.invoke(main, ["eigenfunctions", two_well_file, "-o", str(out)]).exit_code == 0
    assert a.read_bytes() == b.read_bytes()


def test_abstract_spectrum(runner, abstract_file):
    result = runner.invoke(main, ["spectrum", abstract_file])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    assert len(doc["solutions"]) == 2
    assert all(r.get("leading_key_stable", True) for r in doc["determinacy"])


def test_oracle_writes_csv_and_plot(runner, two_well_file, tmp_path):
    csv, plot = tmp_path / "fit.csv", tmp_path / "fit.dat"
    result = runner.invoke(main, ["oracle", two_well_file, "--csv", str(csv), "--plot", str(plot)])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    assert doc["rate_relative_error"] < 0.05
    lines = csv.read_text().splitlines()
    assert lines[0] == "h,E1,E2,prediction,ratio"
    assert len(lines) == 6
    assert len(plot.read_text().splitlines()) == 6


def test_oracle_needs_a_polynomial(runner, abstract_file):
    result = runner.invoke(main, ["oracle", abstract_file])
    assert result.exit_code == EXIT_INPUT


def test_bad_h_grid(runner, two_well_file):
    result = runner.invoke(main, ["oracle", two_well_file, "--h-grid", "0.1,abc"])
    assert result.exit_code == EXIT_INPUT


def test_verify_example1(runner):
    result = runner.invoke(main, ["verify-example1"])
    doc = json.loads(result.output)
    assert result.exit_code == 0, doc
    checks = {c["name"]: c for c in doc["checks"]}
    assert checks["eigenfunction_table"]["published_first_interval_sign_agrees"] is False


def test_verify_example2(runner):
    result = runner.invoke(main, ["verify-example2", "--a", "0.4", "--b", "0.3"])
    assert result.exit_code == 0, result.output


def test_verify_example2_outside_region(runner):
    result = runner.invoke(main, ["verify-example2", "--a", "0.45", "--b", "0.2"])
    assert result.exit_code == EXIT_CHECK_FAILED


def test_plain_handles_special_values():
    assert plain({"x": 1 + 2j, "y": float("inf"), "z": (1, 2)}) == {"x": [1.0, 2.0], "y": "inf", "z": [1, 2]}


def test_polygon_plot_file(runner, two_well_file, tmp_path):
    plot = tmp_path / "polygon.dat"
    result = runner.invoke(main, ["spectrum", two_well_file, "--polygon-plot", str(plot)])
    assert result.exit_code == 0
    blocks = plot.read_text().split("\n\n\n")
    assert len(blocks) == 2
    hull = [line.split() for line in blocks[1].splitlines() if line and not line.startswith("#")]
    assert [int(m) for m, _ in hull] == [p[0] for p in json.loads(result.output)["polygon"]["hull"]]


def test_oracle_extended_precision_flag(runner, two_well_file, monkeypatch):
    monkeypatch.delenv("WITTENSPEC_DIGITS", raising=False)
    result = runner.invoke(main, ["oracle", two_well_file, "--method", "extended", "--digits", "32", "-K", "28",
                                  "--h-grid", "0.12,0.11,0.10,0.095,0.09"])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output)["rate_relative_error"] < 0.1
