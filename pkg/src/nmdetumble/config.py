"""TOML campaign configuration.

Every key is optional; missing keys take the reference spacecraft,
sampling and controller defaults.  Quantities may be bare numbers (SI) or
strings with a unit suffix such as ``"400 km"``, ``"30 deg/s"`` or
``"15 nT"``.  Vector quantities accept a list of either form.  Units are
converted to SI here and nowhere else.

Example::

    [spacecraft]
    mu_max = ["70 mA*m^2", "53 mA*m^2", "70 mA*m^2"]
    gyro_bias = "1 deg/s"

    [environment]
    drag_torque = false

    [controllers]
    enabled = ["bdot", "nonmonotonic"]

    [controllers.nonmonotonic]
    k = 3e3
    dt_pred = "10 min"

    [campaign]
    runs = 20
    horizon = "2 h"
    inclination = ["20 deg", "160 deg"]

    [output]
    dir = "out/nm"
"""

from __future__ import annotations

import logging
import math
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .controllers import CONTROLLER_NAMES, ControllerConfig, ControllerError
from .dynamics import SpacecraftParams
from .harness import DEFAULT_CONTROLLERS, CampaignConfig, EnvConfig, InitialConditions

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

OUTPUT_ENV_VAR = "NMDETUMBLE_OUT"

# near-equatorial orbits lose magnetic controllability
CONTROLLABLE_INCLINATION = (math.radians(20.0), math.radians(160.0))


class ConfigError(ValueError):
    """Base class for configuration problems."""


class UnknownKeyError(ConfigError):
    pass


class UnitError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    pass


_DEG = math.pi / 180.0

UNITS = {
    "length": {"m": 1.0, "km": 1e3, "cm": 1e-2, "mm": 1e-3},
    "angle": {"rad": 1.0, "deg": _DEG},
    "rate": {"rad/s": 1.0, "deg/s": _DEG, "rpm": 2 * math.pi / 60},
    "rate_density": {"rad/s/rtHz": 1.0, "deg/s/rtHz": _DEG},
    "time": {"s": 1.0, "min": 60.0, "h": 3600.0},
    "frequency": {"Hz": 1.0},
    "field": {"T": 1.0, "uT": 1e-6, "nT": 1e-9},
    "dipole": {"A*m^2": 1.0, "Am2": 1.0, "mA*m^2": 1e-3},
    "mass": {"kg": 1.0, "g": 1e-3},
    "inertia": {"kg*m^2": 1.0, "kgm2": 1.0},
    "scalar": {},
}

_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*(\S*)\s*$")

# section -> key -> physical dimension ("bool", "str", "int" for plain values)
SCHEMA = {
    "spacecraft": {
        "inertia": "inertia",
        "mass": "mass",
        "dims": "length",
        "drag_coeff": "scalar",
        "mu_max": "dipole",
        "mag_noise": "field",
        "gyro_noise_density": "rate_density",
        "gyro_bias": "rate",
        "cp_offset": "length",
    },
    "environment": {
        "igrf_path": "str",
        "igrf_degree": "int",
        "epoch": "str",
        "j2": "bool",
        "drag": "bool",
        "drag_torque": "bool",
    },
    "controller": {
        "k": "scalar",
        "k1": "scalar",
        "k2": "scalar",
        "eps": "scalar",
        "alpha": "scalar",
        "beta": "scalar",
        "dt_pred": "time",
        "lowpass_alpha": "scalar",
    },
    "campaign": {
        "runs": "int",
        "seed": "int",
        "horizon": "time",
        "control_rate": "frequency",
        "dt": "time",
        "decimation": "time",
        "threshold": "scalar",
        "altitude": "length",
        "inclination": "angle",
        "omega_norm": "rate",
        "estimate_gyro_bias": "bool",
        "workers": "int",
    },
    "output": {"dir": "str"},
}


def to_si(value, dimension: str, where: str = "value"):
    """Convert a number, a ``"<number> <unit>"`` string or a list of those."""
    if isinstance(value, list):
        return [to_si(v, dimension, where) for v in value]
    if isinstance(value, bool):
        raise ConfigValidationError(f"{where}: expected a quantity, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigValidationError(f"{where}: expected a quantity, got {type(value).__name__}")
    m = _QUANTITY.match(value)
    if m is None:
        raise UnitError(f"{where}: cannot parse quantity {value!r}")
    number, unit = m.groups()
    try:
        x = float(number)
    except ValueError:
        raise UnitError(f"{where}: cannot parse quantity {value!r}") from None
    if not unit:
        return x
    table = UNITS[dimension]
    if unit not in table:
        expected = ", ".join(table) or "no unit"
        raise UnitError(f"{where}: unit {unit!r} does not fit a {dimension} quantity (expected {expected})")
    return x * table[unit]


def _plain(value, kind: str, where: str):
    types = {"bool": bool, "str": str, "int": int}
    ok = isinstance(value, types[kind]) and not (kind == "int" and isinstance(value, bool))
    if not ok:
        raise ConfigValidationError(f"{where}: expected {kind}, got {type(value).__name__}")
    return value


def _section(raw: dict, name: str, schema: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigValidationError(f"[{name}] must be a table")
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise UnknownKeyError(f"unknown key {key!r} in [{name}]")
        kind = schema[key]
        where = f"{name}.{key}"
        if kind in ("bool", "str", "int"):
            out[key] = _plain(value, kind, where)
        else:
            out[key] = to_si(value, kind, where)
    return out


@dataclass
class Config:
    """Effective configuration: the campaign plus where to write it."""

    campaign: CampaignConfig
    output_dir: str

    def to_dict(self) -> dict:
        return {"campaign": self.campaign.to_dict(), "output_dir": self.output_dir}


def build_config(raw: dict) -> Config:
    """Validate a parsed TOML document and apply defaults.

    The output directory comes from ``[output] dir``, else the
    ``NMDETUMBLE_OUT`` environment variable, else ``out``.
    """
    unknown = set(raw) - {"spacecraft", "environment", "controllers", "campaign", "output"}
    if unknown:
        raise UnknownKeyError(f"unknown section(s): {', '.join(sorted(unknown))}")

    sc = _section(raw.get("spacecraft", {}), "spacecraft", SCHEMA["spacecraft"])
    try:
        spacecraft = SpacecraftParams(**{k: np.asarray(v) if isinstance(v, list) else v for k, v in sc.items()})
    except (ValueError, TypeError) as exc:
        raise ConfigValidationError(f"spacecraft: {exc}") from exc

    env_raw = _section(raw.get("environment", {}), "environment", SCHEMA["environment"])
    env = EnvConfig(**env_raw)

    ctrl_raw = raw.get("controllers", {})
    if not isinstance(ctrl_raw, dict):
        raise ConfigValidationError("[controllers] must be a table")
    enabled = ctrl_raw.get("enabled", list(DEFAULT_CONTROLLERS))
    if not isinstance(enabled, list) or not all(isinstance(n, str) for n in enabled):
        raise ConfigValidationError("controllers.enabled must be a list of names")
    for key in ctrl_raw:
        if key != "enabled" and key not in CONTROLLER_NAMES:
            raise UnknownKeyError(f"unknown key {key!r} in [controllers]")
    controllers = []
    for name in enabled:
        if name not in CONTROLLER_NAMES:
            raise ConfigValidationError(f"unknown controller {name!r}")
        gains = _section(ctrl_raw.get(name, {}), f"controllers.{name}", SCHEMA["controller"])
        try:
            controllers.append(ControllerConfig(name, **gains))
        except ControllerError as exc:
            raise ConfigValidationError(f"controllers.{name}: {exc}") from exc

    camp = _section(raw.get("campaign", {}), "campaign", SCHEMA["campaign"])
    ic = InitialConditions()
    if "altitude" in camp:
        ic.altitude = camp.pop("altitude")
        if ic.altitude <= 0:
            raise ConfigValidationError("campaign.altitude must be positive")
    if "omega_norm" in camp:
        ic.omega_norm = camp.pop("omega_norm")
        if ic.omega_norm < 0:
            raise ConfigValidationError("campaign.omega_norm must be non-negative")
    if "inclination" in camp:
        inc = camp.pop("inclination")
        if not isinstance(inc, list) or len(inc) != 2 or not 0 <= inc[0] <= inc[1] <= math.pi:
            raise ConfigValidationError("campaign.inclination must be [min, max] within [0, 180] deg")
        ic.inclination_min, ic.inclination_max = inc
    lo, hi = CONTROLLABLE_INCLINATION
    if ic.inclination_min < lo or ic.inclination_max > hi:
        log.warning(
            "inclination range [%.1f, %.1f] deg reaches near-equatorial orbits, where magnetic "
            "control loses controllability",
            math.degrees(ic.inclination_min),
            math.degrees(ic.inclination_max),
        )
    if "runs" in camp:
        camp["n_runs"] = camp.pop("runs")

    out_raw = _section(raw.get("output", {}), "output", SCHEMA["output"])
    output_dir = out_raw.get("dir") or os.environ.get(OUTPUT_ENV_VAR) or "out"

    try:
        campaign = CampaignConfig(
            **camp,
            controllers=tuple(controllers),
            spacecraft=spacecraft,
            env=env,
            initial=ic,
            output=output_dir,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigValidationError(f"campaign: {exc}") from exc
    return Config(campaign, output_dir)


def parse_config(source=None) -> Config:
    """Parse a TOML file (path) or TOML text; ``None`` gives all defaults."""
    if source is None:
        text = ""
    elif isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).is_file()):
        text = Path(source).read_text()
    else:
        text = str(source)
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return build_config(raw)
