import csv
import json
import logging
import math
from datetime import datetime

import numpy as np
import pytest

from nmdetumble.cli import build_parser, main, parse_gains
from nmdetumble.config import (
    OUTPUT_ENV_VAR,
    ConfigValidationError,
    UnitError,
    UnknownKeyError,
    parse_config,
    to_si,
)
from nmdetumble.harness import DEFAULT_CONTROLLERS

# --------------------------------------------------------------------------
# configuration


def test_empty_config_gives_defaults(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV_VAR, raising=False)
    cfg = parse_config("")
    camp = cfg.campaign
    assert cfg.output_dir == "out"
    assert camp.horizon == 7200.0 and camp.control_rate == 1.0 and camp.dt == 0.5
    assert [c.name for c in camp.controllers] == list(DEFAULT_CONTROLLERS)
    assert camp.controller("nonmonotonic").k == 3.0e3
    assert camp.controller("bcross").k == 4.0e-6
    np.testing.assert_array_equal(camp.spacecraft.mu_max, [0.070, 0.053, 0.070])
    assert camp.initial.altitude == 400e3
    assert camp.initial.omega_norm == pytest.approx(math.radians(30))
    assert (camp.initial.inclination_min, camp.initial.inclination_max) == pytest.approx((math.radians(20), math.radians(160)))


@pytest.mark.parametrize(
    "value, dim, expected",
    [
        ("400 km", "length", 400e3),
        ("30 deg/s", "rate", math.radians(30)),
        ("15 nT", "field", 15e-9),
        ("70 mA*m^2", "dipole", 0.07),
        ("2 h", "time", 7200.0),
        (3.5, "scalar", 3.5),
        (["1 km", 5], "length", [1e3, 5.0]),
    ],
)
def test_unit_conversion(value, dim, expected):
    assert to_si(value, dim) == pytest.approx(expected)


def test_units_applied(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(
        """
[spacecraft]
mu_max = ["50 mA*m^2", "50 mA*m^2", "60 mA*m^2"]
gyro_bias = "0.5 deg/s"

[controllers]
enabled = ["bdot", "nonmonotonic"]

[controllers.nonmonotonic]
k = 1e3
dt_pred = "5 min"

[campaign]
runs = 4
horizon = "30 min"
altitude = "500 km"
inclination = ["45 deg", "135 deg"]

[output]
dir = "somewhere"
"""
    )
    cfg = parse_config(path)
    camp = cfg.campaign
    assert camp.n_runs == 4 and camp.horizon == 1800.0
    assert camp.initial.altitude == 500e3
    assert camp.spacecraft.gyro_bias == pytest.approx(math.radians(0.5))
    nm = camp.controller("nonmonotonic")
    assert nm.k == 1e3 and nm.dt_pred == 300.0 and nm.mu_max == (0.05, 0.05, 0.06)
    assert [c.name for c in camp.controllers] == ["bdot", "nonmonotonic"]
    assert cfg.output_dir == "somewhere"
    assert cfg.to_dict()["campaign"]["n_runs"] == 4


@pytest.mark.parametrize(
    "text, error",
    [
        ("[spacecraft]\ncolour = 1\n", UnknownKeyError),
        ("[rocket]\n", UnknownKeyError),
        ("[controllers.bdot]\nkp = 1\n", UnknownKeyError),
        ("[controllers]\nfoo = 1\n", UnknownKeyError),
        ('[campaign]\naltitude = "400 deg"\n', UnitError),
        ('[campaign]\nhorizon = "two hours"\n', UnitError),
        ('[spacecraft]\nmu_max = [-0.07, 0.053, 0.07]\n', ConfigValidationError),
        ("[controllers.bdot]\nk = -1.0\n", ConfigValidationError),
        ("[controllers.nonmonotonic]\nbeta = 0\n", ConfigValidationError),
        ('[controllers]\nenabled = ["pid"]\n', ConfigValidationError),
        ("[campaign]\nruns = 2.5\n", ConfigValidationError),
        ("[campaign]\ninclination = [1.0]\n", ConfigValidationError),
        ("[environment]\nj2 = 1\n", ConfigValidationError),
    ],
)
def test_config_errors(text, error):
    with pytest.raises(error):
        parse_config(text)


def test_invalid_toml():
    from nmdetumble.config import ConfigError

    with pytest.raises(ConfigError, match="invalid TOML"):
        parse_config("[campaign\n")


def test_equatorial_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="nmdetumble.config"):
        cfg = parse_config('[campaign]\ninclination = ["0 deg", "9.9 deg"]\n')
    assert cfg.campaign.initial.inclination_max == pytest.approx(math.radians(9.9))
    assert "controllability" in caplog.text


def test_output_env_var(monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV_VAR, "/tmp/elsewhere")
    assert parse_config("").output_dir == "/tmp/elsewhere"
    assert parse_config('[output]\ndir = "mine"\n').output_dir == "mine"


# --------------------------------------------------------------------------
# gain grids


@pytest.mark.parametrize(
    "spec, expected",
    [
        ("4e-8:4e-3:log7", np.geomspace(4e-8, 4e-3, 7)),
        ("0:1:3", [0.0, 0.5, 1.0]),
        ("1,2.5,3", [1.0, 2.5, 3.0]),
    ],
)
def test_parse_gains(spec, expected):
    np.testing.assert_allclose(parse_gains(spec), expected)


@pytest.mark.parametrize("spec", ["1:2", "-1:2:log3", "a,b"])
def test_parse_gains_rejects(spec):
    with pytest.raises(ValueError):
        parse_gains(spec)


# --------------------------------------------------------------------------
# command line


def test_usage_error_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code != 0
    with pytest.raises(SystemExit) as exc:
        main(["single", "--controller", "pid"])
    assert exc.value.code != 0


def test_parser_subcommands():
    sub = build_parser()._subparsers._group_actions[0].choices
    assert set(sub) == {"single", "mc", "sweep", "validate-field"}


def test_single(tmp_path, capsys):
    out = tmp_path / "single"
    status = main(["single", "--controller", "bdot", "--horizon", "60", "--out", str(out), "--no-drag-torque"])
    assert status == 0
    assert (out / "runs" / "bdot_0000.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["horizon"] == 60.0
    assert manifest["config"]["env"]["drag_torque"] is False
    assert "bdot" in capsys.readouterr().out


def test_mc(tmp_path, capsys):
    out = tmp_path / "mc"
    status = main(["mc", "--seeds", "2", "--controller", "nonmonotonic", "--controller", "bdot", "--horizon", "30", "--out", str(out)])
    assert status == 0
    with open(out / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["controller"] for r in rows] == ["nonmonotonic", "bdot"]
    assert all(r["runs"] == "2" for r in rows)
    assert len(list((out / "runs").glob("*.csv"))) == 4


def test_mc_default_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("NMDETUMBLE_OUT", str(tmp_path / "env_out"))
    assert main(["mc", "--seeds", "1", "--controller", "bdot", "--horizon", "10"]) == 0
    assert (tmp_path / "env_out" / "summary.csv").exists()


def test_mc_uses_config_file(tmp_path):
    conf = tmp_path / "c.toml"
    conf.write_text('[campaign]\nruns = 1\nhorizon = "20 s"\n[controllers]\nenabled = ["bcross"]\n')
    out = tmp_path / "o"
    assert main(["mc", "--config", str(conf), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["n_runs"] == 1
    assert [c["name"] for c in manifest["config"]["controllers"]] == ["bcross"]


def test_sweep(tmp_path, capsys):
    out = tmp_path / "sw"
    status = main(["sweep", "--controller", "bcross", "--gains", "4e-8:4e-3:log7", "--horizon", "30", "--out", str(out)])
    assert status == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 7
    np.testing.assert_allclose([float(r["gain"]) for r in rows], np.geomspace(4e-8, 4e-3, 7))


def test_bad_config_returns_error(tmp_path, capsys):
    conf = tmp_path / "bad.toml"
    conf.write_text("[spacecraft]\nwings = 2\n")
    assert main(["single", "--config", str(conf), "--out", str(tmp_path / "x")]) == 2
    assert "unknown key" in capsys.readouterr().err


def _write_points(path, shift=0.0):
    ppigrf = pytest.importorskip("ppigrf")
    import os

    shc = os.path.join(os.path.dirname(ppigrf.__file__), "IGRF13.shc")
    lines = ["radius_km,lat_deg,lon_deg,year,B_north_nT,B_east_nT,B_down_nT"]
    for r_km, lat, lon in [(6778.137, 40.0, 30.0), (6878.137, -60.0, 200.0), (6978.137, 80.0, -100.0), (6778.137, -30.0, 120.0), (6828.137, 12.5, 287.0)]:
        br, bt, bp = (float(np.ravel(x)[0]) for x in ppigrf.igrf_gc(r_km, 90 - lat, lon, datetime(2024, 1, 1), coeff_fn=shc))
        lines.append(f"{r_km},{lat},{lon},2024.0,{-bt + shift!r},{bp!r},{-br!r}")
    path.write_text("\n".join(lines) + "\n")


def test_validate_field(tmp_path, capsys):
    pts = tmp_path / "pts.csv"
    _write_points(pts)
    assert main(["validate-field", "--points", str(pts)]) == 0
    out = capsys.readouterr().out
    assert "within 5 nT" in out
    assert len(out.strip().splitlines()) == 7


def test_validate_field_reports_mismatch(tmp_path, capsys):
    pts = tmp_path / "pts.csv"
    _write_points(pts, shift=50.0)
    assert main(["validate-field", "--points", str(pts)]) == 1
    assert "exceeds" in capsys.readouterr().out


def test_validate_field_missing_file(tmp_path, capsys):
    assert main(["validate-field", "--points", str(tmp_path / "nope.csv")]) == 2
