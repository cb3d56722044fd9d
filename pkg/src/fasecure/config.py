"""JSON scenario configs with unit-suffixed values, and CSV writing.

Values may be plain numbers (SI units; angles in degrees) or strings with
an explicit unit, e.g. ``"30 dBm"``, ``"-40 dB"``, ``"60 deg"``,
``"10 lambda"``. Everything is converted to watts, linear ratios, radians
and metres before a :class:`Scenario` is built.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .scenario import InfeasibleScenario, Scenario, ScenarioError


class ConfigError(ValueError):
    """Malformed or incomplete configuration file."""


REQUIRED = (
    "num_antennas", "num_users", "aperture_length", "min_spacing", "wavelength",
    "user_angles", "sensing_angle", "user_distances", "target_distance",
    "reference_gain", "pathloss_exponent", "noise_user", "noise_eve",
    "power_budget", "probing_threshold",
)
OPTIONAL = ("eavesdropper_angles", "eavesdropper_distances", "gain_convention", "solver")

ANGLES = {"user_angles", "sensing_angle", "eavesdropper_angles"}
LENGTHS = {"wavelength", "aperture_length", "min_spacing", "user_distances", "target_distance",
           "eavesdropper_distances"}
POWERS = {"noise_user", "noise_eve", "power_budget", "probing_threshold"}
RATIOS = {"reference_gain"}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z]*)\s*$")


def parse_quantity(value, kind, wavelength=None):
    """Convert one config value to SI. ``kind`` is angle/length/power/ratio/plain."""
    if isinstance(value, bool):
        raise ConfigError(f"boolean is not a quantity: {value!r}")
    if isinstance(value, (int, float)):
        return float(np.deg2rad(value)) if kind == "angle" else float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a number or unit string, got {value!r}")
    m = _QUANTITY.match(value)
    if not m:
        raise ConfigError(f"cannot parse quantity {value!r}")
    x, unit = float(m.group(1)), m.group(2).lower()
    if unit == "":
        return parse_quantity(x, kind, wavelength)
    table = {
        "angle": {"deg": np.deg2rad, "rad": lambda v: v},
        "length": {"m": lambda v: v, "mm": lambda v: v * 1e-3, "cm": lambda v: v * 1e-2,
                   "lambda": (lambda v: v * wavelength) if wavelength else None},
        "power": {"w": lambda v: v, "mw": lambda v: v * 1e-3,
                  "dbm": lambda v: 10 ** ((v - 30) / 10), "dbw": lambda v: 10 ** (v / 10)},
        "ratio": {"db": lambda v: 10 ** (v / 10)},
        "plain": {},
    }[kind]
    conv = table.get(unit)
    if conv is None:
        raise ConfigError(f"unit {unit!r} not accepted for a {kind} value ({value!r})")
    return float(conv(x))


def _kind(key):
    for kind, keys in (("angle", ANGLES), ("length", LENGTHS), ("power", POWERS),
                       ("ratio", RATIOS)):
        if key in keys:
            return kind
    return "plain"


def _convert(key, value, wavelength):
    kind = _kind(key)
    if isinstance(value, list):
        if not value:
            raise ConfigError(f"{key}: empty list")
        return tuple(parse_quantity(v, kind, wavelength) for v in value)
    return parse_quantity(value, kind, wavelength)


def scenario_from_dict(raw):
    """Build a :class:`Scenario` (and the raw solver section) from a dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    unknown = sorted(set(raw) - set(REQUIRED) - set(OPTIONAL))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    wl = parse_quantity(raw["wavelength"], "length")
    kw = {}
    for key in REQUIRED + OPTIONAL[:2]:
        if key in raw and raw[key] is not None:
            kw[key] = _convert(key, raw[key], wl)
    for key in ("num_antennas", "num_users"):
        if float(kw[key]) != int(kw[key]):
            raise ConfigError(f"{key} must be an integer")
        kw[key] = int(kw[key])
    for key in ("sensing_angle", "target_distance", "noise_eve", "power_budget",
                "probing_threshold", "reference_gain", "pathloss_exponent", "aperture_length",
                "min_spacing", "wavelength"):
        if isinstance(kw[key], tuple):
            raise ConfigError(f"{key} must be a scalar")
    if "gain_convention" in raw:
        kw["gain_convention"] = str(raw["gain_convention"])
    try:
        s = Scenario(**kw)
    except InfeasibleScenario:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    solver = raw.get("solver", {}) or {}
    if not isinstance(solver, dict):
        raise ConfigError("solver section must be an object")
    return s, solver


def load_config(path):
    """Read a JSON config. Returns ``(scenario, solver_section, raw_dict)``."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    s, solver = scenario_from_dict(raw)
    return s, solver, raw


def scenario_to_dict(s):
    """SI-unit echo of a scenario (angles in degrees) for summaries."""
    out = {}
    for key in REQUIRED + OPTIONAL[:3]:
        val = getattr(s, key)
        if key in ANGLES:
            val = np.rad2deg(val).tolist() if isinstance(val, tuple) else float(np.rad2deg(val))
        elif isinstance(val, tuple):
            val = list(val)
        out[key] = val
    return out


def write_csv(path, schema, header, rows):
    """CSV with a ``# schema`` comment line before the header."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {schema}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def read_csv(path):
    """Inverse of :func:`write_csv`: ``(schema, header, rows as strings)``."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema:"):
            raise ConfigError(f"{path}: missing schema comment")
        rows = list(csv.reader(fh))
    return first.split(":", 1)[1].strip(), rows[0], rows[1:]
