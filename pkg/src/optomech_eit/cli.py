"""Command-line front end: scenario execution and CSV emission.

Subcommands: ``spectrum`` (quadratures + group velocity over a detuning
grid), ``groupvel`` (group velocity at a grid or explicit detunings),
``windows`` (detected transparency windows), ``storage`` (pulse
storage/retrieval time series) and ``sweep`` (generic multi-parameter grid,
long-format CSV).

Every output starts with ``#`` metadata lines carrying the tool version and
the fully resolved parameter set, so runs are self-describing and exactly
reproducible. Floats are printed with 17 significant digits; identical
scenarios produce byte-identical files. Exit codes: 0 success, 1 runtime or
numerical failure, 2 configuration/usage error.

The OPTOMECH_EIT_THREADS environment variable caps sweep parallelism
(grid points are pure evaluations; results do not depend on it).
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import itertools
import sys

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from . import __version__
from .config import apply_override, dump_config, resolve_config
from .dynamics import integrate, storage_retrieval
from .errors import ConfigError, OptomechError
from .presets import preset_raw
from .spectral import _coefficient_grid, _group_velocity_grid, sweep_spectrum

DEFAULT_RANGE = (0.8, 1.2)
DEFAULT_SPECTRUM_POINTS = 4001
DEFAULT_REPORT_POINTS = 10_000


def _fmt(x):
    return format(float(x), ".17g")


def _metadata(command, scenario, extra=()):
    # No preset name or timestamps here: a dumped-and-reloaded preset must
    # reproduce byte-identical output.
    lines = [f"# optomech-eit {__version__}", f"# command: {command}"]
    lines.extend(f"# {item}" for item in extra)
    for line in dump_config(scenario).splitlines():
        if line:
            lines.append(f"# {line}")
    return lines


def _emit(args, text):
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _read_raw(path):
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid TOML: {exc}") from exc


def _load_scenario(args):
    if bool(args.preset) == bool(args.config):
        raise ConfigError("give exactly one of --preset or --config")
    raw = preset_raw(args.preset) if args.preset else _read_raw(args.config)
    for assignment in args.set or ():
        apply_override(raw, assignment)
    return resolve_config(raw, preset=args.preset)


def _parse_range(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"--range wants A,B in units of omega_m, got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"--range values must be numbers, got {text!r}") from None
    return lo, hi


def _sweep_window(args, scenario):
    """Absolute detuning range and point count for grid commands."""
    system = scenario.system
    if args.range is not None:
        lo, hi = _parse_range(args.range)
        window = (lo * system.omega_mean, hi * system.omega_mean)
    elif scenario.sweep_range is not None:
        window = scenario.sweep_range
    else:
        window = (DEFAULT_RANGE[0] * system.omega_mean, DEFAULT_RANGE[1] * system.omega_mean)
    if window[0] >= window[1]:
        raise ConfigError(f"empty detuning range {window!r}")
    points = args.points or scenario.sweep_points or DEFAULT_SPECTRUM_POINTS
    if points < 2:
        raise ConfigError(f"--points must be >= 2, got {points}")
    return window, points


def _effective_scenario(args, scenario):
    """Apply --reference-off; metadata must describe the system actually run."""
    if getattr(args, "reference_off", False):
        scenario = dataclasses.replace(
            scenario, system=scenario.system.without_coupling()
        )
        return scenario, ["coupling field off (reference spectrum)"]
    return scenario, []


def _spectrum_rows(system, grid, eps):
    vg = _group_velocity_grid(system, grid)
    om = system.omega_mean
    rows = []
    for d, e, v in zip(grid, eps, vg):
        rows.append(
            ",".join([_fmt(d), _fmt(d / om), _fmt(e.real), _fmt(e.imag), _fmt(v)])
        )
    return rows


def cmd_spectrum(args):
    scenario, extra = _effective_scenario(args, _load_scenario(args))
    system = scenario.system
    (lo, hi), points = _sweep_window(args, scenario)
    sweep = sweep_spectrum(
        system, lo, hi, points,
        depth_ratio=scenario.depth_ratio,
        center_tol=scenario.center_tol_kappa * system.cavity.kappa,
    )
    eps = np.array([r.eps_out_plus for r in sweep.responses])
    lines = _metadata("spectrum", scenario, extra)
    lines.append("delta_rad_s,delta_over_omega_m,v_p,v_tilde_p,vg_over_c")
    lines.extend(_spectrum_rows(system, sweep.grid, eps))
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_groupvel(args):
    scenario, extra = _effective_scenario(args, _load_scenario(args))
    system = scenario.system
    (lo, hi), points = _sweep_window(args, scenario)
    om = system.omega_mean
    if args.at:
        try:
            targets = [float(x) for x in args.at.split(",")]
        except ValueError:
            raise ConfigError(f"--at wants a comma list of numbers, got {args.at!r}") from None
        deltas = np.array([x * om for x in targets])
        outside = [x for x, d in zip(targets, deltas) if not lo <= d <= hi]
        if outside:
            raise ConfigError(
                f"--at values {outside} fall outside the swept range "
                f"[{lo / om:g}, {hi / om:g}] (units of omega_m)"
            )
    else:
        deltas = np.linspace(lo, hi, points)
    vg = _group_velocity_grid(system, deltas)
    lines = _metadata("groupvel", scenario, extra)
    lines.append("delta_rad_s,delta_over_omega_m,vg_over_c")
    for d, v in zip(deltas, vg):
        lines.append(",".join([_fmt(d), _fmt(d / om), _fmt(v)]))
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_windows(args):
    scenario, extra = _effective_scenario(args, _load_scenario(args))
    system = scenario.system
    (lo, hi), points = _sweep_window(args, scenario)
    sweep = sweep_spectrum(
        system, lo, hi, points,
        depth_ratio=scenario.depth_ratio,
        center_tol=scenario.center_tol_kappa * system.cavity.kappa,
    )
    lines = _metadata("windows", scenario)
    lines.append("center_delta,depth,fwhm_measured,fwhm_analytic")
    for w in sweep.windows:
        lines.append(
            ",".join(
                [_fmt(w.center_delta), _fmt(w.depth), _fmt(w.fwhm_measured), _fmt(w.fwhm_analytic)]
            )
        )
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_storage(args):
    scenario = _load_scenario(args)
    if scenario.protocol is None:
        raise ConfigError("storage needs a [protocol] section (or a fig8/fig9 preset)")
    system = scenario.system
    protocol = scenario.protocol
    points = args.points or DEFAULT_REPORT_POINTS

    if protocol.eps_p_peak == 0:
        # Null experiment: nothing is written in, so there is no peak to find.
        ts = integrate(system, protocol, points=points)
        summary = {"retrieval_efficiency": 0.0}
    else:
        report = storage_retrieval(system, protocol, points=points)
        ts = report.time_series
        summary = {
            "transmit_peak_time_s": report.transmit_peak_time,
            "retrieve_peak_time_s": report.retrieve_peak_time,
            "retrieval_efficiency": report.retrieval_efficiency,
        }

    n = system.n_membranes
    lines = _metadata("storage", scenario)
    header = [
        "t_s", "coupling_power_norm", "probe_power_norm",
        "output_power_norm", "output_raw_norm",
    ] + [f"mech_intensity_{j + 1}" for j in range(n)]
    lines.append(",".join(header))
    ch = ts.channels
    cols = [
        ts.times, ch["coupling_power_norm"], ch["probe_power_norm"],
        ch["output_power_norm"], ch["output_raw_norm"],
    ] + [ch[f"mech_intensity_{j + 1}"] for j in range(n)]
    for row in zip(*cols):
        lines.append(",".join(_fmt(x) for x in row))
    for key, value in summary.items():
        lines.append(f"# {key}={_fmt(value)}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


def _parse_vary(spec):
    if "=" not in spec:
        raise ConfigError(f"--vary wants KEY=A:B:N or KEY=v1,v2,..., got {spec!r}")
    key, text = spec.split("=", 1)
    key = key.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"--vary range form is KEY=A:B:N, got {spec!r}")
        try:
            lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ConfigError(f"--vary range values must be numeric, got {spec!r}") from None
        if count < 1:
            raise ConfigError(f"--vary point count must be >= 1, got {count}")
        values = [float(v) for v in np.linspace(lo, hi, count)]
    else:
        try:
            values = [float(v) for v in text.split(",")]
        except ValueError:
            raise ConfigError(f"--vary list values must be numeric, got {spec!r}") from None
    if not values:
        raise ConfigError(f"--vary produced no values: {spec!r}")
    return key, values


def cmd_sweep(args):
    if not args.vary:
        raise ConfigError("sweep needs at least one --vary KEY=SPEC")
    if bool(args.preset) == bool(args.config):
        raise ConfigError("give exactly one of --preset or --config")
    base_raw = preset_raw(args.preset) if args.preset else _read_raw(args.config)
    for assignment in args.set or ():
        apply_override(base_raw, assignment)
    varied = [_parse_vary(spec) for spec in args.vary]

    base_scenario = resolve_config(copy.deepcopy(base_raw), preset=args.preset)
    (lo, hi), points = _sweep_window(args, base_scenario)

    keys = [key for key, _ in varied]
    lines = _metadata(
        "sweep", base_scenario,
        extra=[f"vary: {key} = {values}" for key, values in varied],
    )
    lines.append(",".join(
        [k.replace(".", "_") for k in keys]
        + ["delta_rad_s", "delta_over_omega_m", "v_p", "v_tilde_p", "vg_over_c"]
    ))
    for combo in itertools.product(*(values for _, values in varied)):
        raw = copy.deepcopy(base_raw)
        for key, value in zip(keys, combo):
            apply_override(raw, f"{key}={value!r}")
        scenario = resolve_config(raw, preset=args.preset)
        system = scenario.system
        grid = np.linspace(lo, hi, points)
        eps = _coefficient_grid(system, grid)
        prefix = ",".join(_fmt(v) for v in combo)
        for row in _spectrum_rows(system, grid, eps):
            lines.append(f"{prefix},{row}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


def _add_common(parser, with_at=False, with_reference=False, with_vary=False):
    parser.add_argument("--config", metavar="PATH", help="TOML scenario file")
    parser.add_argument("--preset", metavar="NAME",
                        help="built-in scenario (fig2|fig3|fig4|fig6|fig7|fig8|fig9)")
    parser.add_argument("--set", metavar="KEY=VALUE", action="append",
                        help="override one config value (repeatable), e.g. drive.eps_p_rad_s=0")
    parser.add_argument("--out", metavar="PATH", default="-",
                        help="output CSV path (default: stdout)")
    parser.add_argument("--points", metavar="N", type=int, default=None,
                        help="grid / reporting points")
    parser.add_argument("--range", metavar="A,B", default=None,
                        help="detuning range in units of omega_m")
    if with_at:
        parser.add_argument("--at", metavar="LIST", default=None,
                            help="evaluate at these detunings (units of omega_m)")
    if with_reference:
        parser.add_argument("--reference-off", action="store_true",
                            help="switch the coupling field off (bare-cavity reference)")
    if with_vary:
        parser.add_argument("--vary", metavar="KEY=SPEC", action="append",
                            help="vary a config key over A:B:N or v1,v2,... (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="optomech-eit",
        description="Multi-window optomechanically induced transparency: "
                    "spectra, group velocities, and pulse storage.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="probe quadratures over a detuning grid")
    _add_common(p, with_reference=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("groupvel", help="normalized group velocity v_g/c")
    _add_common(p, with_at=True, with_reference=True)
    p.set_defaults(func=cmd_groupvel)

    p = sub.add_parser("windows", help="detected transparency windows")
    _add_common(p, with_reference=True)
    p.set_defaults(func=cmd_windows)

    p = sub.add_parser("storage", help="pulse write/store/read time series")
    _add_common(p)
    p.set_defaults(func=cmd_storage)

    p = sub.add_parser("sweep", help="multi-parameter grid, long-format CSV")
    _add_common(p, with_vary=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OptomechError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
