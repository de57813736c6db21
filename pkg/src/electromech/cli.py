"""Command-line interface: ``electromech <subcommand> [options]``.

Every computing subcommand writes its CSV outputs plus ``manifest.json``;
``electromech replay manifest.json`` regenerates byte-identical files.

Exit codes: 0 success, 1 numerical failure (non-convergence), 2 usage or
input error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import fit as _fit
from . import formats, harness
from .device_model import PUBLISHED_PARAMETERS_HZ, TWO_PI, figures_of_merit
from .formats import InputError
from .response import DriveConfig

OUTPUT_ENV = "ELECTROMECH_OUTPUT_DIR"
MANIFEST_NAME = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- option groups ---------------------------------------------------------

def _common(p, points, span_hz, span_help):
    p.add_argument("--params", metavar="FILE",
                   help="device parameter file (JSON or key = value); default: published device")
    p.add_argument("--out", metavar="DIR",
                   help=f"output directory (default: ${OUTPUT_ENV} or current directory)")
    p.add_argument("--seed", type=int, default=0, help="noise seed (default: 0)")
    p.add_argument("--noise", type=float, default=0.0, metavar="SIGMA",
                   help="complex additive noise, E|n|^2 = SIGMA^2 (default: 0)")
    p.add_argument("--points", type=int, default=points,
                   help=f"grid points (default: {points})")
    p.add_argument("--span-hz", type=float, default=span_hz,
                   help=f"{span_help} (default: {span_hz:g})")


def _coupling(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--nd", type=float, help="intracavity drive photon number")
    g.add_argument("--g-hz", type=float, help="linearized coupling g/2pi in Hz")
    g.add_argument("--p-in", type=float, help="drive input power in W")


def _detuning(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--delta", type=float, default=None,
                   help="relative detuning (wd + Wm - wc)/2pi in Hz (default: 0)")
    g.add_argument("--detuning", type=float, default=None,
                   help="drive detuning (wd - wc)/2pi in Hz")


def build_parser():
    parser = _Parser(prog="electromech",
                     description="Simulate and fit a pumped microwave cavity coupled "
                                 "to a mechanical drum.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("figures", help="print derived figures of merit")
    p.add_argument("param_file", nargs="?", help="parameter file (default: published device)")
    p.add_argument("--json", action="store_true", help="structured output")

    p = sub.add_parser("spectrum", help="probe transmission spectrum")
    _common(p, 2001, harness.PROBE_SPAN_HZ, "probe half-span around wc in Hz")
    _coupling(p)
    _detuning(p)

    p = sub.add_parser("sweep-power", help="spectra and fitted g versus photon number")
    _common(p, 2001, harness.PROBE_SPAN_HZ, "probe half-span around wc in Hz")
    p.add_argument("--nd-list", default="1e2,1e3,1e4,1e5,1e6,5e6",
                   help="comma-separated photon numbers")
    _detuning(p)

    p = sub.add_parser("sweep-detuning", help="optical spring and damping versus delta")
    _common(p, 121, harness.DELTA_SPAN_HZ, "delta half-span in Hz")
    p.add_argument("--p-in", type=float, default=10e-12, help="drive power in W (default: 1e-11)")
    p.add_argument("--fit", action="store_true", help="also fit G to the sweep")

    p = sub.add_parser("map", help="two-tone |T| map over drive and probe frequency")
    _common(p, 2001, harness.MAP_PROBE_SPAN_HZ, "probe half-span around wc in Hz")
    _coupling(p)
    p.add_argument("--drive-points", type=int, default=61, help="drive grid points (default: 61)")
    p.add_argument("--drive-span-hz", type=float, default=harness.MAP_DRIVE_SPAN_HZ,
                   help="drive half-span around wc - Wm in Hz (default: %(default)g)")

    p = sub.add_parser("fit", help="fit a model to a CSV file")
    p.add_argument("input", help="spectrum CSV (cavity, coupling) or offset_freq_hz,power CSV")
    p.add_argument("--model", required=True, choices=["cavity", "mechanical", "coupling"])
    p.add_argument("--params", metavar="FILE", help="device parameters (coupling model)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--background", action="store_true", help="fit a complex background factor")
    _detuning(p)

    p = sub.add_parser("roundtrip", help="synthesize, fit and compare with the truth")
    _common(p, 2001, 1.7e6, "cavity-fit probe half-span around wc in Hz")
    p.add_argument("--nd-list", default="1e2,1e4,1e6", help="comma-separated photon numbers")
    p.add_argument("--p-in", type=float, default=10e-12, help="detuning-sweep drive power in W")

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("manifest", help="manifest.json written by an earlier run")
    p.add_argument("--out", metavar="DIR", help="output directory (default: as for other runs)")
    return parser


# --- helpers ---------------------------------------------------------------

def _param_mapping(path):
    return dict(PUBLISHED_PARAMETERS_HZ) if path is None else formats.read_param_mapping(path)


def _float_list(text, name):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise InputError(f"--{name}: empty list")
    return values


def _drive(params, opts, default_coupling=None):
    if opts.get("detuning") is not None:
        omega_d = params.omega_c + TWO_PI * opts["detuning"]
    else:
        omega_d = params.omega_c - params.Omega_m + TWO_PI * (opts.get("delta") or 0.0)
    coupling = {}
    for key, arg, factor in (("n_d", "nd", 1.0), ("g", "g_hz", TWO_PI), ("p_in", "p_in", 1.0)):
        if opts.get(arg) is not None:
            coupling[key] = factor * opts[arg]
    if not coupling:
        coupling = default_coupling or {"n_d": 0.0}
    try:
        return DriveConfig(omega_d=omega_d, **coupling)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _check_grid(opts):
    if opts.get("points") is not None and opts["points"] < 2:
        raise InputError("--points must be at least 2")
    if opts.get("span_hz") is not None and not opts["span_hz"] > 0:
        raise InputError("--span-hz must be positive")
    if opts.get("noise", 0.0) < 0:
        raise InputError("--noise must be non-negative")


def _noise(opts):
    return harness.NoiseModel(opts["noise"], opts["seed"]) if opts.get("noise") else None


def _probe_grid(params, opts):
    return params.omega_c + TWO_PI * np.linspace(-opts["span_hz"], opts["span_hz"],
                                                 opts["points"])


def _grid_def(center_hz, span_hz, points):
    return {"center_hz": center_hz, "span_hz": span_hz, "points": points}


# --- subcommands -----------------------------------------------------------
# Each takes (opts, param_mapping) and returns (outputs, grids, failure).
# ``outputs`` maps file name to text; ``failure`` is None or a message.

def run_spectrum(opts, pmap):
    params = formats.params_from_mapping(pmap)
    drive = _drive(params, opts)
    spec = harness.probe_sweep(params, drive, _probe_grid(params, opts), _noise(opts))
    grids = {"probe": _grid_def(params.omega_c / TWO_PI, opts["span_hz"], opts["points"]),
             "drive": drive.describe(params)}
    return {"spectrum.csv": formats.spectrum_to_csv(spec)}, grids, None


def run_sweep_power(opts, pmap):
    params = formats.params_from_mapping(pmap)
    n_list = _float_list(opts["nd_list"], "nd-list")
    if any(n < 0 for n in n_list):
        raise InputError("--nd-list: photon numbers must be non-negative")
    detuning = _drive(params, opts).detuning(params)
    res = harness.power_sweep(params, n_list, _probe_grid(params, opts), _noise(opts),
                              detuning=detuning)
    s = res.scalars
    rows = [(n, gt / TWO_PI, gf / TWO_PI, ge / TWO_PI, "true" if ok else "false", msg)
            for n, gt, gf, ge, ok, msg in zip(s["n_d"], s["g_true"], s["g_fit"], s["g_err"],
                                              s["converged"], res.extra["messages"])]
    outputs = {"power_sweep.csv": formats.table_to_csv(
        ["n_d", "g_true_hz", "g_fit_hz", "g_err_hz", "converged", "message"], rows)}
    report = {"points": len(rows)}
    if "sqrt_law" in res.extra:
        law = res.extra["sqrt_law"]
        report["sqrt_law"] = law.report(hz_keys=("g0",))
        report["g0_true_hz"] = params.g0 / TWO_PI
    else:
        report["sqrt_law_error"] = res.extra["sqrt_law_error"]
    outputs["power_sweep.json"] = formats.to_json(report)
    for i, spec in enumerate(res.spectra):
        outputs[f"spectrum_{i:03d}.csv"] = formats.spectrum_to_csv(spec)
    grids = {"probe": _grid_def(params.omega_c / TWO_PI, opts["span_hz"], opts["points"]),
             "n_d": n_list, "detuning_hz": detuning / TWO_PI}
    failure = None
    if not all(s["converged"]):
        failure = "coupling fit did not converge at one or more sweep points"
    elif "sqrt_law_error" in res.extra:
        failure = res.extra["sqrt_law_error"]
    return outputs, grids, failure


def run_sweep_detuning(opts, pmap):
    params = formats.params_from_mapping(pmap)
    if not opts["p_in"] >= 0:
        raise InputError("--p-in must be non-negative")
    grid = harness.default_delta_grid(opts["points"], opts["span_hz"])
    try:
        res = harness.detuning_sweep(params, opts["p_in"], grid)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    s = res.scalars
    rows = zip(s["delta"] / TWO_PI, s["n_d"], s["g"] / TWO_PI, s["Omega_m_eff"] / TWO_PI,
               s["Gamma_m_eff"] / TWO_PI)
    outputs = {"detuning_sweep.csv": formats.table_to_csv(
        ["delta_hz", "n_d", "g_hz", "omega_m_eff_hz", "gamma_m_eff_hz"], rows)}
    failure = None
    if opts.get("fit"):
        try:
            ba = _fit.fit_backaction(s, params, s["n_d"])
        except _fit.FitError as exc:
            raise InputError(str(exc)) from None
        rep = ba.report(hz_keys=("g0", "G"))
        rep["G_hz_per_nm"] = rep["estimates"]["G_hz"] * 1e-9
        outputs["backaction_fit.json"] = formats.to_json(rep)
        if not ba.converged:
            failure = f"backaction fit did not converge: {ba.message}"
    grids = {"delta": _grid_def(0.0, opts["span_hz"], opts["points"]), "p_in": opts["p_in"]}
    return outputs, grids, failure


def run_map(opts, pmap):
    params = formats.params_from_mapping(pmap)
    if opts["drive_points"] < 1 or not opts["drive_span_hz"] >= 0:
        raise InputError("--drive-points must be >= 1 and --drive-span-hz >= 0")
    drive = _drive(params, opts)
    coupling = {k: getattr(drive, k) for k in ("g", "n_d", "p_in")
                if getattr(drive, k) is not None}
    wd, wp = harness.default_map_grids(params, opts["drive_points"], opts["points"],
                                       opts["drive_span_hz"], opts["span_hz"])
    res = harness.two_tone_map(params, wd, wp, coupling, _noise(opts))
    grids = {"drive": _grid_def((params.omega_c - params.Omega_m) / TWO_PI,
                                opts["drive_span_hz"], opts["drive_points"]),
             "probe": _grid_def(params.omega_c / TWO_PI, opts["span_hz"], opts["points"])}
    return {"map.csv": formats.map_to_csv(res)}, grids, None


def _read_power_table(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    table = formats.csv_to_table(text)
    if set(table) != {"offset_freq_hz", "power"}:
        raise InputError(f"{path}:1: header must be offset_freq_hz,power")
    try:
        return _fit.Dataset(TWO_PI * np.array(table["offset_freq_hz"], dtype=float),
                            np.array(table["power"], dtype=float))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def run_fit(opts, pmap):
    model = opts["model"]
    if model == "mechanical":
        res = _fit.fit_mechanical(_read_power_table(opts["input"]), opts.get("background"))
        hz = ("Omega_m_eff", "Gamma_m_eff")
    else:
        spec = formats.read_spectrum(opts["input"])
        if model == "cavity":
            res = _fit.fit_cavity(spec, opts.get("background"))
            hz = ("omega_c", "kappa", "kappa_ex")
        else:
            params = formats.params_from_mapping(pmap)
            res = _fit.fit_coupling(spec, params, _drive(params, opts), opts.get("background"))
            hz = ("g", "g_squared")
    rep = res.report(hz_keys=hz)
    if "g_squared_hz" in rep["estimates"]:
        # g² converts with (2π)², not 2π
        rep["estimates"]["g_squared_hz2"] = rep["estimates"].pop("g_squared_hz") / TWO_PI
        if rep["std_errors"] is not None:
            rep["std_errors"]["g_squared_hz2"] = rep["std_errors"].pop("g_squared_hz") / TWO_PI
    text = formats.to_json(rep)
    failure = None if res.converged else f"fit did not converge: {res.message}"
    return {"fit_result.json": text}, {"input": str(opts["input"])}, failure


def run_roundtrip(opts, pmap):
    params = formats.params_from_mapping(pmap)
    n_list = _float_list(opts["nd_list"], "nd-list")
    sigma = opts["noise"]
    rows = []
    points = opts["points"]
    raw = harness.roundtrip(params, sigma=sigma, seed=opts["seed"], n_d_list=n_list,
                            p_in=opts["p_in"], points=points,
                            cavity_span=TWO_PI * opts["span_hz"])
    all_ok = True
    for name, truth, est, std in raw:
        # rates to Hz, G to Hz/m
        scale = TWO_PI
        err = est - truth
        if sigma == 0:
            ok = abs(err) <= 1e-6 * abs(truth)
            criterion = "rel<=1e-6"
        else:
            ok = math.isfinite(std) and abs(err) <= 3.0 * std
            criterion = "|err|<=3std"
        all_ok &= ok
        rows.append((name, truth / scale, est / scale, std / scale,
                     err / truth if truth else math.nan, criterion, "PASS" if ok else "FAIL"))
    cols = ["quantity", "truth", "estimate", "std_error", "rel_error", "criterion", "result"]
    text = formats.table_to_csv(cols, rows)
    failure = None if all_ok else "round trip failed for at least one quantity"
    grids = {"cavity_probe": _grid_def(params.omega_c / TWO_PI, opts["span_hz"], points),
             "n_d": n_list}
    return {"roundtrip.csv": text}, grids, failure


COMMANDS = {
    "spectrum": run_spectrum,
    "sweep-power": run_sweep_power,
    "sweep-detuning": run_sweep_detuning,
    "map": run_map,
    "fit": run_fit,
    "roundtrip": run_roundtrip,
}


def _output_dir(out):
    return Path(out if out is not None else os.environ.get(OUTPUT_ENV, "."))


def execute(command, opts, pmap, out_dir):
    """Run ``command`` and write outputs plus the manifest into ``out_dir``."""
    outputs, grids, failure = COMMANDS[command](opts, pmap)
    manifest = {
        "subcommand": command,
        "options": opts,
        "parameters": pmap,
        "seed": opts.get("seed"),
        "grids": grids,
        "version": __version__,
        "outputs": sorted(outputs),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in outputs.items():
        (out_dir / name).write_text(text)
    formats.write_manifest(out_dir / MANIFEST_NAME, manifest)
    return outputs, failure


def _figures(args):
    pmap = _param_mapping(args.param_file)
    fom = figures_of_merit(formats.params_from_mapping(pmap))
    report = fom.report()
    if args.json:
        print(formats.to_json(report), end="")
    else:
        width = max(len(k) for k in report)
        for key, value in report.items():
            print(f"{key:<{width}}  {value:.6g}")
    return 0


def _replay(args):
    manifest = formats.read_manifest(args.manifest)
    try:
        command = manifest["subcommand"]
        opts = manifest["options"]
        pmap = manifest["parameters"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"{args.manifest}: manifest lacks {exc}") from None
    if command not in COMMANDS:
        raise InputError(f"{args.manifest}: unknown subcommand {command!r}")
    if manifest.get("version") != __version__:
        print(f"warning: manifest written by version {manifest.get('version')}, "
              f"running {__version__}", file=sys.stderr)
    formats.params_from_mapping(pmap, args.manifest)
    return command, opts, pmap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    try:
        if args.command == "figures":
            return _figures(args)
        if args.command == "replay":
            command, opts, pmap = _replay(args)
        else:
            command = args.command
            opts = {k: v for k, v in vars(args).items()
                    if k not in ("command", "out", "params")}
            if command == "fit":
                opts["input"] = str(opts["input"])
            _check_grid(opts)
            pmap = _param_mapping(args.params)
        out_dir = _output_dir(args.out)
        outputs, failure = execute(command, opts, pmap, out_dir)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (_fit.FitError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name in sorted(outputs):
        print(out_dir / name)
    print(out_dir / MANIFEST_NAME)
    if failure:
        print(f"numerical failure: {failure}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
