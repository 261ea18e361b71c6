"""Command-line front end.

    rydsim rabi CONFIG [--out CSV] [--seed N] [--threads N]
    rydsim spectrum CONFIG [--out CSV] [--seed N] [--threads N]
    rydsim fit MODEL CSV [--dips N] [--weighted]
    rydsim calc {photoion,lightshift,efftwophoton,heterodyne} [flags]

Exit codes: 0 ok, 2 configuration error, 3 simulation error, 4 fit failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import replace

import numpy as np

from . import calculators as calc
from .config import BEGIN, END, RunConfig, load_config
from .core import SystemParams
from .errors import ConfigError, FitError, RydsimError
from .experiments import RABI_GRID, SPECTRUM_GRID, ScanSpec, rabi_scan, spectrum_scan
from . import fitting

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_FIT = 0, 2, 3, 4

SCAN_DEFAULTS = {
    "rabi": {"variable": "T", "lo": RABI_GRID[0] * 1e3, "hi": RABI_GRID[1] * 1e3, "points": RABI_GRID[2]},
    "spectrum": {"variable": "delta", "lo": SPECTRUM_GRID[0], "hi": SPECTRUM_GRID[1],
                 "points": SPECTRUM_GRID[2]},
}
COLUMNS = {
    "rabi": ("T_ns", "recapture_mean", "recapture_stderr"),
    "spectrum": ("delta_mhz", "recapture_mean", "recapture_stderr"),
}


def fmt(x) -> str:
    return format(float(x), ".12g")


def _scan_spec(cfg: RunConfig, command: str) -> ScanSpec:
    scan = {**SCAN_DEFAULTS[command], **cfg.scan}
    cfg.scan = scan
    wanted = SCAN_DEFAULTS[command]["variable"]
    if scan["variable"] != wanted:
        raise ConfigError(f"{command} needs [scan] variable = {wanted}")
    try:
        if command == "rabi":
            return ScanSpec("T", scan["lo"] * 1e-3, scan["hi"] * 1e-3, scan["points"],
                            cfg.system, cfg.pulse(), cfg.fluctuations, cfg.delta_auto)
        return ScanSpec("delta", scan["lo"], scan["hi"], scan["points"],
                        cfg.system, cfg.pulse(), cfg.fluctuations, cfg.delta_auto)
    except ValueError as exc:
        raise ConfigError(f"[scan] {exc}") from None


def _render_csv(command, cfg, result) -> str:
    out = io.StringIO()
    out.write(f"# rydsim {command}\n")
    out.write(f"# seed = {cfg.fluctuations.seed}\n")
    out.write(f"# reference_detuning_mhz = {result.reference_detuning!r}\n")
    out.write(BEGIN + "\n")
    for line in cfg.to_ini().splitlines():
        out.write(f"# {line}".rstrip() + "\n")
    out.write(END + "\n")
    out.write(",".join(COLUMNS[command]) + "\n")
    x = result.x * 1e3 if command == "rabi" else result.x
    for xi, m, e in zip(x, result.mean, result.stderr):
        out.write(f"{fmt(xi)},{fmt(m)},{fmt(e)}\n")
    return out.getvalue()


def _emit(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def cmd_scan(args) -> int:
    cfg = load_config(args.config).with_seed(args.seed)
    spec = _scan_spec(cfg, args.command)
    run = rabi_scan if args.command == "rabi" else spectrum_scan
    result = run(spec, threads=args.threads)
    _emit(_render_csv(args.command, cfg, result), args.out)
    return EXIT_OK


# -- fit ------------------------------------------------------------------------


def read_columns(path):
    """Numeric columns of a CSV, skipping ``#`` comments and a header row."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.lstrip().startswith("#")) if r]
    header = None
    if rows:
        try:
            [float(v) for v in rows[0]]
        except ValueError:
            header, rows = [h.strip() for h in rows[0]], rows[1:]
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric data ({exc})") from None
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError(f"{path}: no data rows")
    return header, data


def _run_fit(model, x, y, sigma, dips):
    if model == "damped_cosine":
        return fitting.fit_damped_cosine(x, y, sigma)
    if model == "gaussian_dips":
        return fitting.fit_gaussian_dips(x, y, dips, sigma)
    if model == "exp_decay":
        return fitting.fit_exp_decay(x, y, sigma)
    return fitting.fit_beam_waist(x, y, sigma)


UNITS = {
    "damped_cosine": {"tau": "us", "omega": "MHz (Omega/2pi)"},
    "gaussian_dips": {"nu1": "MHz", "nu2": "MHz", "s1": "MHz", "s2": "MHz",
                      "fwhm1": "MHz", "fwhm2": "MHz", "separation": "MHz"},
    "exp_decay": {"tau": "same unit as t"},
    "beam_waist": {"x0": "same unit as x", "w": "same unit as x"},
}


def format_report(model, fit, n_points) -> str:
    lines = [
        f"model: {model}",
        f"points: {n_points}",
        f"converged: {'yes' if fit.converged else 'no'} after {fit.iterations} iterations",
        f"residual sum of squares: {fmt(fit.rss)}",
    ]
    units = UNITS[model]
    for name, v, e in zip(fit.names, fit.values, fit.errors):
        unit = units.get(name, "")
        lines.append(f"  {name:<10} = {fmt(v)} +/- {fmt(e)} {unit}".rstrip())
    for name, v in fit.derived.items():
        if name.endswith("_err"):
            continue
        unit = units.get(name, "")
        err = fit.derived.get(f"{name}_err")
        tail = f" +/- {fmt(err)}" if err is not None else ""
        lines.append(f"  {name:<10} = {fmt(v)}{tail} {unit}".rstrip())
    lines.append("[values]")
    lines.append(f"model={model}")
    lines.append(f"converged={int(fit.converged)}")
    lines.append(f"iterations={fit.iterations}")
    lines.append(f"rss={fmt(fit.rss)}")
    for key, value in fit.as_dict().items():
        lines.append(f"{key}={fmt(value)}")
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    try:
        header, data = read_columns(args.csv)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if data.shape[1] < 2:
        print("error: need at least two columns (x, y)", file=sys.stderr)
        return EXIT_CONFIG
    x, y = data[:, 0].copy(), data[:, 1]
    if header and header[0] == "T_ns":
        x *= 1e-3  # the oscillation model works in us
    sigma = None
    if args.weighted:
        if data.shape[1] < 3 or np.any(data[:, 2] <= 0):
            print("error: --weighted needs a third column of positive errors", file=sys.stderr)
            return EXIT_CONFIG
        sigma = data[:, 2]
    try:
        fit = _run_fit(args.model, x, y, sigma, args.dips)
    except FitError as exc:
        print(f"fit failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_FIT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(format_report(args.model, fit, y.size))
    return EXIT_OK if fit.converged else EXIT_FIT


# -- calculators ------------------------------------------------------------------


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ConfigError(f"missing required flag(s): {flags}")


def calc_photoion(args):
    _need(args, "power_mw", "wx_um", "wy_um")
    if args.f is None and args.imol is None:
        raise ConfigError("give either --f or --imol")
    beam = calc.BeamGeometry(args.power_mw * 1e-3, args.wx_um * 1e-6, args.wy_um * 1e-6)
    wavelength = args.wavelength_nm * 1e-9
    lines = [
        f"beam power         = {fmt(args.power_mw)} mW",
        f"waists             = {fmt(args.wx_um)} um x {fmt(args.wy_um)} um",
        f"peak intensity I0  = {fmt(beam.peak_intensity)} W/m^2",
        f"photon frequency   = {fmt(calc.photon_frequency(wavelength))} Hz",
    ]
    if args.f is not None:
        f = args.f
    else:
        mol = calc.MolassesParams(I_mol=args.imol)
        omega_mol = calc.molasses_rabi_frequency(mol)
        f = calc.excited_fraction(mol, omega_mol)
        lines.append(f"molasses intensity = {fmt(args.imol)} W/m^2")
        lines.append(f"Omega_mol / 2pi    = {fmt(omega_mol)} MHz")
    lines.append(f"excited fraction f = {fmt(f)}")
    if args.tau_ms is not None:
        sigma = calc.ionization_cross_section(args.tau_ms, f, beam, wavelength)
        lines.append(f"loss time tau      = {fmt(args.tau_ms)} ms")
        lines.append(f"cross section      = {fmt(sigma)} cm^2")
    else:
        _need(args, "sigma_cm2")
        rate = calc.ionization_rate(args.sigma_cm2, f, beam, wavelength)
        lines.append(f"cross section      = {fmt(args.sigma_cm2)} cm^2")
        lines.append(f"ionization rate    = {fmt(rate)} 1/ms")
        lines.append(f"loss time tau      = {fmt(1.0 / rate) if rate > 0 else 'inf'} ms")
    return lines


def calc_lightshift(args):
    _need(args, "power_mw", "waist_um")
    w = args.waist_um * 1e-6
    intensity = 2.0 * args.power_mw * 1e-3 / (math.pi * w * w)
    wavelength = args.wavelength_nm * 1e-9
    alpha = calc.rydberg_polarizability(wavelength)
    shift = calc.ponderomotive_shift(intensity, wavelength)
    return [
        f"trap power         = {fmt(args.power_mw)} mW",
        f"trap waist         = {fmt(args.waist_um)} um",
        f"wavelength         = {fmt(args.wavelength_nm)} nm",
        f"peak intensity     = {fmt(intensity)} W/m^2",
        f"polarizability     = {fmt(alpha)} m^3 (alpha / eps0)",
        f"Rydberg light shift = {fmt(shift)} MHz",
    ]


def calc_efftwophoton(args):
    _need(args, "omega_r", "omega_b", "delta_big")
    omega_eff, up, r = calc.effective_two_photon(args.omega_r, args.omega_b, args.delta_big)
    return [
        f"Omega_R / 2pi      = {fmt(args.omega_r)} MHz",
        f"Omega_B / 2pi      = {fmt(args.omega_b)} MHz",
        f"Delta / 2pi        = {fmt(args.delta_big)} MHz",
        f"ground light shift = {fmt(up)} MHz",
        f"Rydberg light shift = {fmt(r)} MHz",
        f"resonance delta    = {fmt(r - up)} MHz",
        f"Omega_eff / 2pi    = {fmt(omega_eff)} MHz",
    ]


def calc_heterodyne(args):
    _need(args, "beat_khz")
    return [
        f"beat FWHM          = {fmt(args.beat_khz)} kHz",
        f"laser linewidth    = {fmt(calc.heterodyne_linewidth(args.beat_khz))} kHz",
    ]


CALCULATORS = {
    "photoion": calc_photoion,
    "lightshift": calc_lightshift,
    "efftwophoton": calc_efftwophoton,
    "heterodyne": calc_heterodyne,
}


def cmd_calc(args) -> int:
    try:
        lines = CALCULATORS[args.what](args)
    except ZeroDivisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydsim", description="Two-photon Rydberg excitation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (("rabi", "recapture versus pulse duration"),
                           ("spectrum", "recapture versus two-photon detuning")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="run configuration (INI) or a CSV written by this tool")
        p.add_argument("--out", help="output CSV (default: stdout)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads, 0 = all cores")
        p.set_defaults(func=cmd_scan)

    p = sub.add_parser("fit", help="fit a model to a CSV")
    p.add_argument("model", choices=("damped_cosine", "gaussian_dips", "exp_decay", "beam_waist"))
    p.add_argument("csv")
    p.add_argument("--dips", type=int, default=1, choices=(1, 2))
    p.add_argument("--weighted", action="store_true", help="use the third column as 1-sigma errors")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calc", help="closed-form calculators")
    p.add_argument("what", choices=sorted(CALCULATORS))
    p.add_argument("--tau-ms", type=float)
    p.add_argument("--sigma-cm2", type=float)
    p.add_argument("--power-mw", type=float)
    p.add_argument("--wx-um", type=float)
    p.add_argument("--wy-um", type=float)
    p.add_argument("--f", type=float)
    p.add_argument("--imol", type=float, help="total molasses intensity, W/m^2")
    p.add_argument("--or", dest="omega_r", type=float, help="Omega_R / 2pi, MHz")
    p.add_argument("--ob", dest="omega_b", type=float, help="Omega_B / 2pi, MHz")
    p.add_argument("--d", dest="delta_big", type=float, help="Delta / 2pi, MHz")
    p.add_argument("--beat-khz", type=float)
    p.add_argument("--waist-um", type=float)
    p.add_argument("--wavelength-nm", type=float)
    p.set_defaults(func=cmd_calc)
    return parser


DEFAULT_WAVELENGTH_NM = {"photoion": 475.0, "lightshift": 810.0}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "calc" and args.wavelength_nm is None:
        args.wavelength_nm = DEFAULT_WAVELENGTH_NM.get(args.what)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RydsimError as exc:
        print(f"simulation error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
