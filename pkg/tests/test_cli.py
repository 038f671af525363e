import csv
import json

import pytest

from atlab import cli, report, suite


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def test_grid_parsing():
    assert cli.parse_grid("0.1,0.2") == [0.1, 0.2]
    assert cli.parse_grid("0:1:3") == [0.0, 0.5, 1.0]
    assert cli.parse_grid("") == []
    with pytest.raises(cli.ConfigError):
        cli.parse_grid("a,b")


def test_region_and_boundary_parsing():
    assert cli.parse_region("point").n_interior == 1
    assert cli.parse_region("domino").n_interior == 2
    assert cli.parse_region("d2n1").n_interior == 9
    assert cli.parse_region("block2x3").n_interior == 6
    with pytest.raises(cli.ConfigError):
        cli.parse_region("triangle")
    s, t = cli.parse_boundary("+,alt")
    assert s.is_plus and t.kind == "alt"
    with pytest.raises(cli.ConfigError):
        cli.parse_boundary("+")


def test_negative_grids_as_flag_values():
    cfg = cli.resolve(["phase-map", "--U", "-4,-2", "--J", "0.05", "--seed", "-1"])
    assert cli.parse_grid(cfg["U"]) == [-4.0, -2.0] and cfg["seed"] == -1
    assert cli.resolve(["phase-map", "--U", "-.5"])["U"] == "-.5"


def test_precedence_defaults_config_flags(tmp_path):
    cfg_file = tmp_path / "c.yaml"
    cfg_file.write_text("J: 0.2\nJp: 0.15\nseed: 9\n")
    cfg = cli.resolve(["enumerate", "--config", str(cfg_file), "--J", "0.35"])
    assert cfg["J"] == 0.35 and cfg["Jp"] == 0.15 and cfg["seed"] == 9
    assert cfg["U"] == cli.DEFAULTS["enumerate"]["U"]


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    cfg_file = tmp_path / "c.yaml"
    cfg_file.write_text("temperature: 3\n")
    assert run(tmp_path, "enumerate", "--config", str(cfg_file)) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2


def test_bad_flag_exits_with_config_code(tmp_path, capsys):
    assert run(tmp_path, "enumerate", "--bogus", "1") == 2
    assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"


def test_cap_exceeded_exit_code(tmp_path, capsys):
    assert run(tmp_path, "enumerate", "--region", "d2n1") == 4
    assert json.loads(capsys.readouterr().err)["exit_code"] == 4


def test_failed_verification_exit_code(tmp_path, monkeypatch, capsys):
    row = {"check": "fake", "metric": "tv", "value": 1.0, "threshold": 1e-12, "passed": False}
    monkeypatch.setattr(suite, "run_suite", lambda *a, **k: [row])
    assert run(tmp_path, "verify", "--region", "point") == 3
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 3 and "fake" in err["message"]
    doc = json.loads((tmp_path / "verify.json").read_text())
    assert doc["summary"]["failed"] == ["fake"]


def test_enumerate_writes_csv_json(tmp_path):
    assert run(tmp_path, "enumerate", "--region", "point", "--kind", "at", "--no-plots") == 0
    rows = list(csv.DictReader((tmp_path / "enumerate.csv").open()))
    assert rows and set(report.BASE_COLUMNS) <= set(rows[0])
    doc = json.loads((tmp_path / "enumerate.json").read_text())
    assert doc["format_version"] == report.FORMAT_VERSION
    assert doc["timing"] is None and "out" not in doc["resolved_config"]


def test_outputs_are_byte_identical_across_worker_counts(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["sample", "--n", "1", "--sweeps", "400", "--burn-in", "50", "--chains", "2",
            "--thin", "2", "--seed", "3", "--no-plots"]
    assert cli.main(args + ["--out", str(a), "--workers", "1"]) == 0
    assert cli.main(args + ["--out", str(b), "--workers", "2"]) == 0
    for name in ("sample.csv", "sample.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_empty_grid_gives_header_only(tmp_path):
    assert run(tmp_path, "scan-curve", "--betas", "", "--no-plots") == 0
    lines = (tmp_path / "scan-curve.csv").read_text().splitlines()
    assert len(lines) == 1 and lines[0].endswith("seed")


def test_scan_curve_renders_svg(tmp_path):
    assert run(tmp_path, "scan-curve", "--betas", "0.2:0.8:3") == 0
    svgs = list(tmp_path.glob("*.svg"))
    assert svgs and svgs[0].read_text().lstrip().startswith("<?xml")


def test_timing_is_opt_in(tmp_path):
    assert run(tmp_path, "enumerate", "--region", "point", "--timing", "--no-plots") == 0
    doc = json.loads((tmp_path / "enumerate.json").read_text())
    assert doc["timing"]["elapsed_seconds"] >= 0
