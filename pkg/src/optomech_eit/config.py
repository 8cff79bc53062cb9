"""Config-file schema, resolution to model objects, and canonical dumping.

Files are TOML with sections ``[cavity]``, repeated ``[[membrane]]`` tables,
``[drive]``, and optional ``[protocol]``, ``[sweep]``, ``[windows]``. Unknown
keys are a hard error; a typo in a physics parameter must not be silently
ignored.

Rates accept two spellings, disambiguated by suffix: ``*_hz`` values are
multiplied by 2*pi, ``*_rad_s`` values are taken as raw angular rates. Times
use ``*_s`` and are plain seconds. Where several alternative keys express the
same parameter (e.g. ``power_w`` vs ``eps_l_rad_s``), exactly one must be
given.

``dump_config`` re-emits a scenario in canonical absolute units
(``*_rad_s``/``*_s``) with full float precision, so a dumped preset re-parses
to bit-identical parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from .constants import SPEED_OF_LIGHT
from .core import CavityParams, DriveParams, MembraneMode, SystemModel, build_system
from .errors import ConfigError, EmptyMembraneList, UnknownConfigKey
from .spectral import CENTER_TOL_KAPPA, DIP_DEPTH_RATIO

TWO_PI = 2.0 * math.pi

_CAVITY_KEYS = {
    "kappa_hz", "kappa_rad_s",
    "delta_eff_hz", "delta_eff_rad_s",
    "omega_c_hz", "omega_c_rad_s", "wavelength_nm",
}
_MEMBRANE_KEYS = {
    "omega_hz", "omega_rad_s",
    "gamma_hz", "gamma_rad_s",
    "g_hz", "g_rad_s",
    "g0_rad_s_per_m", "mass_kg",
}
_DRIVE_KEYS = {
    "power_w", "eps_l_hz", "eps_l_rad_s",
    "eps_p_hz", "eps_p_rad_s", "eps_p_relative",
}
_PROTOCOL_KEYS = {
    "eps_p_peak_hz", "eps_p_peak_rad_s", "eps_p_peak_relative",
    "eps_l_peak_hz", "eps_l_peak_rad_s",
    "tau_p_s", "tau_l_s", "t_write_s", "t_read_s", "t_end_s",
    "delta_hz", "delta_rad_s", "delta_over_omega_m",
}
_SWEEP_KEYS = {"range_rad_s", "range_over_omega_m", "points"}
_WINDOW_KEYS = {"depth_ratio", "center_tol_kappa"}

_SECTIONS = {
    "cavity": _CAVITY_KEYS,
    "membrane": _MEMBRANE_KEYS,
    "drive": _DRIVE_KEYS,
    "protocol": _PROTOCOL_KEYS,
    "sweep": _SWEEP_KEYS,
    "windows": _WINDOW_KEYS,
}

# Alternative spellings of one parameter; an override replaces all siblings.
_ALTERNATIVE_GROUPS = [
    {"kappa_hz", "kappa_rad_s"},
    {"delta_eff_hz", "delta_eff_rad_s"},
    {"omega_c_hz", "omega_c_rad_s", "wavelength_nm"},
    {"omega_hz", "omega_rad_s"},
    {"gamma_hz", "gamma_rad_s"},
    {"g_hz", "g_rad_s"},
    {"power_w", "eps_l_hz", "eps_l_rad_s"},
    {"eps_p_hz", "eps_p_rad_s", "eps_p_relative"},
    {"eps_p_peak_hz", "eps_p_peak_rad_s", "eps_p_peak_relative"},
    {"eps_l_peak_hz", "eps_l_peak_rad_s"},
    {"delta_hz", "delta_rad_s", "delta_over_omega_m"},
    {"range_rad_s", "range_over_omega_m"},
]


@dataclass(frozen=True)
class Scenario:
    """A fully resolved run description.

    `sweep_range` is absolute (rad/s) when present; window-detection knobs
    fall back to the package defaults.
    """

    system: SystemModel
    protocol: object | None = None
    sweep_range: tuple[float, float] | None = None
    sweep_points: int | None = None
    depth_ratio: float = DIP_DEPTH_RATIO
    center_tol_kappa: float = CENTER_TOL_KAPPA
    preset: str | None = None


def _number(section, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{section}] {key} must be a number, got {value!r}")
    return float(value)


def _check_keys(section, table, allowed):
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    for key in table:
        if key not in allowed:
            raise UnknownConfigKey(section, key)


def _one_of(section, table, options, required=True):
    """Resolve a parameter with alternative spellings.

    `options` maps key -> transform(value); exactly one key may be present.
    Returns (key, transformed value) or (None, None) when optional and absent.
    """
    present = [k for k in options if k in table]
    if len(present) > 1:
        raise ConfigError(
            f"[{section}] keys {sorted(present)} conflict; give exactly one"
        )
    if not present:
        if required:
            raise ConfigError(
                f"[{section}] needs one of {sorted(options)}"
            )
        return None, None
    key = present[0]
    return key, options[key](_number(section, key, table[key]))


def _resolve_membrane(index, table):
    section = f"membrane #{index + 1}"
    _check_keys(section, table, _MEMBRANE_KEYS)
    _, omega = _one_of(section, table, {
        "omega_hz": lambda v: TWO_PI * v,
        "omega_rad_s": lambda v: v,
    })
    _, gamma = _one_of(section, table, {
        "gamma_hz": lambda v: TWO_PI * v,
        "gamma_rad_s": lambda v: v,
    })
    has_bare = "g0_rad_s_per_m" in table or "mass_kg" in table
    key_g, g = _one_of(section, table, {
        "g_hz": lambda v: TWO_PI * v,
        "g_rad_s": lambda v: v,
    }, required=not has_bare)
    if has_bare:
        if key_g is not None:
            raise ConfigError(
                f"[{section}] give either g_* or the (g0_rad_s_per_m, mass_kg) pair"
            )
        if "g0_rad_s_per_m" not in table or "mass_kg" not in table:
            raise ConfigError(
                f"[{section}] the bare-coupling form needs both g0_rad_s_per_m and mass_kg"
            )
        return MembraneMode.from_bare_coupling(
            omega=omega,
            gamma=gamma,
            g0=_number(section, "g0_rad_s_per_m", table["g0_rad_s_per_m"]),
            mass=_number(section, "mass_kg", table["mass_kg"]),
        )
    return MembraneMode(omega=omega, gamma=gamma, g=g)


def _resolve_cavity(table):
    _check_keys("cavity", table, _CAVITY_KEYS)
    _, kappa = _one_of("cavity", table, {
        "kappa_hz": lambda v: TWO_PI * v,
        "kappa_rad_s": lambda v: v,
    })
    _, delta_eff = _one_of("cavity", table, {
        "delta_eff_hz": lambda v: TWO_PI * v,
        "delta_eff_rad_s": lambda v: v,
    })
    _, omega_c = _one_of("cavity", table, {
        "omega_c_hz": lambda v: TWO_PI * v,
        "omega_c_rad_s": lambda v: v,
        "wavelength_nm": lambda v: TWO_PI * SPEED_OF_LIGHT / (v * 1e-9),
    })
    return CavityParams(kappa=kappa, delta_eff=delta_eff, omega_c=omega_c)


def _resolve_drive(table, cavity):
    _check_keys("drive", table, _DRIVE_KEYS)
    key, value = _one_of("drive", table, {
        "power_w": lambda v: v,
        "eps_l_hz": lambda v: TWO_PI * v,
        "eps_l_rad_s": lambda v: v,
    })
    power = value if key == "power_w" else None
    eps_l = None if key == "power_w" else value
    key_p, eps_p = _one_of("drive", table, {
        "eps_p_hz": lambda v: TWO_PI * v,
        "eps_p_rad_s": lambda v: v,
        "eps_p_relative": lambda v: v,
    }, required=False)
    if key_p is None:
        eps_p = 0.0
    elif key_p == "eps_p_relative":
        probe_scale = DriveParams(power=power, eps_l=eps_l).coupling_rate(
            cavity.kappa, cavity.omega_c
        )
        eps_p = eps_p * probe_scale
    return DriveParams(power=power, eps_l=eps_l, eps_p=eps_p)


def _resolve_protocol(table, system):
    from .dynamics import PulseProtocol

    _check_keys("protocol", table, _PROTOCOL_KEYS)
    _, delta = _one_of("protocol", table, {
        "delta_hz": lambda v: TWO_PI * v,
        "delta_rad_s": lambda v: v,
        "delta_over_omega_m": lambda v: v * system.omega_mean,
    })
    key_l, eps_l_peak = _one_of("protocol", table, {
        "eps_l_peak_hz": lambda v: TWO_PI * v,
        "eps_l_peak_rad_s": lambda v: v,
    }, required=False)
    if key_l is None:
        eps_l_peak = system.eps_l
    key_p, eps_p_peak = _one_of("protocol", table, {
        "eps_p_peak_hz": lambda v: TWO_PI * v,
        "eps_p_peak_rad_s": lambda v: v,
        "eps_p_peak_relative": lambda v: v * eps_l_peak,
    }, required=False)
    if key_p is None:
        eps_p_peak = system.drive.eps_p
    times = {}
    for key in ("tau_p_s", "tau_l_s", "t_write_s", "t_read_s", "t_end_s"):
        if key not in table:
            raise ConfigError(f"[protocol] needs {key}")
        times[key] = _number("protocol", key, table[key])
    return PulseProtocol(
        eps_p_peak=eps_p_peak,
        eps_l_peak=eps_l_peak,
        tau_p=times["tau_p_s"],
        tau_l=times["tau_l_s"],
        t_write=times["t_write_s"],
        t_read=times["t_read_s"],
        delta=delta,
        t_end=times["t_end_s"],
    )


def _resolve_sweep(table, system):
    _check_keys("sweep", table, _SWEEP_KEYS)
    sweep_range = None
    for key, scale in (("range_rad_s", 1.0), ("range_over_omega_m", system.omega_mean)):
        if key in table:
            if sweep_range is not None:
                raise ConfigError("[sweep] give only one of range_rad_s / range_over_omega_m")
            pair = table[key]
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ConfigError(f"[sweep] {key} must be a two-element list")
            lo = _number("sweep", key, pair[0]) * scale
            hi = _number("sweep", key, pair[1]) * scale
            sweep_range = (lo, hi)
    points = None
    if "points" in table:
        points = table["points"]
        if isinstance(points, bool) or not isinstance(points, int) or points < 2:
            raise ConfigError(f"[sweep] points must be an integer >= 2, got {points!r}")
    return sweep_range, points


def resolve_config(raw, preset=None):
    """Turn a parsed raw config dict into a :class:`Scenario`."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    for section in raw:
        if section not in _SECTIONS:
            raise UnknownConfigKey("top level", section)
    for required in ("cavity", "drive"):
        if required not in raw:
            raise ConfigError(f"config needs a [{required}] section")
    membranes_raw = raw.get("membrane", [])
    if not isinstance(membranes_raw, list):
        raise ConfigError("membranes must be given as repeated [[membrane]] tables")
    if not membranes_raw:
        raise EmptyMembraneList()

    cavity = _resolve_cavity(raw["cavity"])
    drive = _resolve_drive(raw["drive"], cavity)
    membranes = [_resolve_membrane(i, t) for i, t in enumerate(membranes_raw)]
    system = build_system(cavity, membranes, drive)

    protocol = None
    if "protocol" in raw:
        protocol = _resolve_protocol(raw["protocol"], system)

    sweep_range, sweep_points = (None, None)
    if "sweep" in raw:
        sweep_range, sweep_points = _resolve_sweep(raw["sweep"], system)

    depth_ratio = DIP_DEPTH_RATIO
    center_tol_kappa = CENTER_TOL_KAPPA
    if "windows" in raw:
        table = raw["windows"]
        _check_keys("windows", table, _WINDOW_KEYS)
        if "depth_ratio" in table:
            depth_ratio = _number("windows", "depth_ratio", table["depth_ratio"])
            if not 0 < depth_ratio < 1:
                raise ConfigError("[windows] depth_ratio must be in (0, 1)")
        if "center_tol_kappa" in table:
            center_tol_kappa = _number("windows", "center_tol_kappa", table["center_tol_kappa"])
            if center_tol_kappa <= 0:
                raise ConfigError("[windows] center_tol_kappa must be positive")

    return Scenario(
        system=system,
        protocol=protocol,
        sweep_range=sweep_range,
        sweep_points=sweep_points,
        depth_ratio=depth_ratio,
        center_tol_kappa=center_tol_kappa,
        preset=preset,
    )


def load_config(path):
    """Parse and resolve a TOML scenario file."""
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid TOML: {exc}") from exc
    return resolve_config(raw)


def apply_override(raw, assignment):
    """Apply a ``section.key=value`` override to a raw config dict.

    Membrane keys use ``membrane.<index>.<key>``. The override replaces any
    alternative spellings of the same parameter (e.g. setting
    ``drive.eps_l_rad_s`` drops a preset's ``power_w``).
    """
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    path, text = assignment.split("=", 1)
    parts = path.strip().split(".")
    try:
        value = int(text)
    except ValueError:
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"override value {text!r} is not a number") from None

    if len(parts) == 3 and parts[0] == "membrane":
        section, key = parts[0], parts[2]
        try:
            index = int(parts[1])
        except ValueError:
            raise ConfigError(f"bad membrane index in {path!r}") from None
        tables = raw.get("membrane", [])
        if not 0 <= index < len(tables):
            raise ConfigError(
                f"membrane index {index} out of range ({len(tables)} membranes)"
            )
        table = tables[index]
    elif len(parts) == 2:
        section, key = parts
        if section not in _SECTIONS:
            raise UnknownConfigKey("top level", section)
        if section == "membrane":
            raise ConfigError("membrane overrides need membrane.<index>.<key>")
        if section not in raw:
            raise ConfigError(f"config has no [{section}] section to override")
        table = raw[section]
    else:
        raise ConfigError(f"override path {path!r} must be section.key or membrane.i.key")

    if key not in _SECTIONS[section if section != "membrane" else "membrane"]:
        raise UnknownConfigKey(section, key)
    for group in _ALTERNATIVE_GROUPS:
        if key in group:
            for sibling in group:
                table.pop(sibling, None)
            break
    table[key] = value
    return raw


def _toml_value(value):
    if isinstance(value, bool):
        raise ConfigError(f"cannot serialize boolean config value {value!r}")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize config value {value!r}")


def canonical_raw(scenario):
    """Scenario parameters as a raw dict in canonical absolute units."""
    system = scenario.system
    raw = {
        "cavity": {
            "kappa_rad_s": system.cavity.kappa,
            "delta_eff_rad_s": system.cavity.delta_eff,
            "omega_c_rad_s": system.cavity.omega_c,
        },
        "membrane": [
            {"omega_rad_s": m.omega, "gamma_rad_s": m.gamma, "g_rad_s": m.g}
            for m in system.membranes
        ],
        "drive": {
            "eps_l_rad_s": system.eps_l,
            "eps_p_rad_s": system.drive.eps_p,
        },
    }
    if scenario.protocol is not None:
        p = scenario.protocol
        raw["protocol"] = {
            "eps_p_peak_rad_s": p.eps_p_peak,
            "eps_l_peak_rad_s": p.eps_l_peak,
            "tau_p_s": p.tau_p,
            "tau_l_s": p.tau_l,
            "t_write_s": p.t_write,
            "t_read_s": p.t_read,
            "delta_rad_s": p.delta,
            "t_end_s": p.t_end,
        }
    if scenario.sweep_range is not None or scenario.sweep_points is not None:
        sweep = {}
        if scenario.sweep_range is not None:
            sweep["range_rad_s"] = [scenario.sweep_range[0], scenario.sweep_range[1]]
        if scenario.sweep_points is not None:
            sweep["points"] = scenario.sweep_points
        raw["sweep"] = sweep
    if (
        scenario.depth_ratio != DIP_DEPTH_RATIO
        or scenario.center_tol_kappa != CENTER_TOL_KAPPA
    ):
        raw["windows"] = {
            "depth_ratio": scenario.depth_ratio,
            "center_tol_kappa": scenario.center_tol_kappa,
        }
    return raw


def dump_config(scenario):
    """Serialize a scenario to canonical TOML text (full float precision)."""
    raw = canonical_raw(scenario)
    lines = []
    for section in ("cavity", "membrane", "drive", "protocol", "sweep", "windows"):
        if section not in raw:
            continue
        tables = raw[section] if section == "membrane" else [raw[section]]
        for table in tables:
            lines.append(f"[[{section}]]" if section == "membrane" else f"[{section}]")
            for key, value in table.items():
                lines.append(f"{key} = {_toml_value(value)}")
            lines.append("")
    return "\n".join(lines)
