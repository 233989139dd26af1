"""Command-line front end: ``rainbow-sensor <command> [options]``.

Array configs are JSON files in the schema accepted by
:func:`rainbow_sensor.geometry.array_from_config`, optionally with an
``options`` object holding defaults for any flag (flags win).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bem import SingularOperatorError, capacitance_matrix_bem
from .capacitance import dilute_gcm, gcm_from_bem
from .filterbank import (
    FilterError,
    Signal,
    TRUNC_TOL,
    apply_transform,
    band_gaps,
    frequency_response,
    half_power_band,
    make_kernel,
)
from .geometry import ConfigError, GeometryError, array_from_config, as_dilute
from .io import (
    format_csv,
    manifest_line,
    matrix_csv,
    read_points_csv,
    read_signal_csv,
    read_spectrum_csv,
    spectrum_csv,
    spectrum_json,
    write_output,
)
from .robustness import (
    MC_COLUMNS,
    InadmissibleScalingError,
    NearDegenerateError,
    gershgorin_large_array_check,
    monte_carlo_robustness,
    removal_analysis,
)
from .spectral import NonPhysicalSpectrumError, compute_spectrum, mode_field

logger = logging.getLogger("rainbow_sensor")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

OPTION_DEFAULTS = {
    "method": "dilute",
    "refine": 3,
    "panels": "curved",
    "epsilon": 1.0,
    "sigma": [0.01],
    "trials": 100,
    "seed": 0,
    "mode": "size",
    "indices": None,
    "sample_rate": None,
    "trunc_tol": TRUNC_TOL,
    "n": [10, 50, 100],
    "c": 0.5,
    "radius": 1.0,
}


class UsageError(ConfigError):
    pass


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rainbow-sensor", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", type=Path, help="array config (JSON)")
            sp.add_argument("--method", choices=("bem", "dilute"), default=None)
            sp.add_argument("--refine", type=int, default=None, help="icosphere refinement level")
            sp.add_argument("--panels", choices=("curved", "flat"), default=None)
            sp.add_argument("--epsilon", type=float, default=None,
                            help="epsilon used when a non-dilute config is treated as dilute")
        sp.add_argument("--out", default="-", help="output path ('-' for stdout)")

    sp = sub.add_parser("spectrum", help="resonant frequencies of an array")
    common(sp)
    sp.add_argument("--json", type=Path, default=None, help="also write eigenvectors as JSON")

    sp = sub.add_parser("cap", help="capacitance matrix")
    common(sp)
    sp.add_argument("--which", choices=("capacitance", "generalized", "volume"), default="capacitance",
                    help="C, V C V, or the volume scaling V")

    sp = sub.add_parser("perturb", help="Monte Carlo perturbation sweep")
    common(sp)
    sp.add_argument("--mode", choices=("size", "position", "removal"), default=None)
    sp.add_argument("--sigma", type=_float_list, default=None, help="comma-separated sigmas")
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("remove", help="removal and interlacing report")
    common(sp)
    sp.add_argument("--indices", type=_int_list, default=None,
                    help="1-based resonators, removed one after another in this order")

    sp = sub.add_parser("scale", help="large-array eigenvalue bound")
    common(sp, config=False)
    sp.add_argument("--n", type=_int_list, default=None, help="comma-separated array sizes")
    sp.add_argument("--c", type=float, default=None, help="epsilon = c / N")
    sp.add_argument("--radius", type=float, default=None)

    sp = sub.add_parser("filter", help="filter-bank outputs and responses")
    common(sp)
    sp.add_argument("--spectrum", type=Path, default=None, help="spectrum CSV from 'spectrum'")
    sp.add_argument("--signal", type=Path, default=None, help="signal CSV")
    sp.add_argument("--impulse", type=int, default=None, help="use a unit impulse of this length")
    sp.add_argument("--sample-rate", type=float, default=None, dest="sample_rate")
    sp.add_argument("--trunc-tol", type=float, default=None, dest="trunc_tol")
    sp.add_argument("--normalize", action="store_true", help="unit L2 kernels instead of c_n = 1")
    sp.add_argument("--response", type=Path, default=None, help="frequency response CSV")
    sp.add_argument("--bands", type=Path, default=None, help="half-power bands and gaps CSV")

    sp = sub.add_parser("mode-field", help="evaluate a resonant mode at points (BEM)")
    common(sp)
    sp.add_argument("--mode-index", type=int, required=True, dest="mode_index")
    sp.add_argument("--points", type=Path, required=True, help="x,y,z CSV")
    return p


# -- config resolution ------------------------------------------------------------------------


def _load_config(path: Optional[Path]) -> tuple:
    if path is None:
        raise UsageError("--config", "required for this command")
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError("--config", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError("--config", f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected an object")
    options = raw.pop("options", {})
    if not isinstance(options, dict):
        raise ConfigError("options", "expected an object")
    unknown = set(options) - set(OPTION_DEFAULTS)
    if unknown:
        raise ConfigError(f"options.{sorted(unknown)[0]}", "unknown option")
    return raw, options


def _resolve(args, names, file_options=None) -> dict:
    file_options = file_options or {}
    out = {}
    for name in names:
        value = getattr(args, name, None)
        if value is None:
            value = file_options.get(name, OPTION_DEFAULTS[name])
        out[name] = value
    return out


def _array_and_options(args, names) -> tuple:
    raw, file_options = _load_config(args.config)
    array = array_from_config(raw)
    opts = _resolve(args, ("method", "refine", "panels", "epsilon") + tuple(names), file_options)
    if opts["method"] not in ("bem", "dilute"):
        raise ConfigError("options.method", f"expected bem or dilute, got {opts['method']!r}")
    return array, opts, {"array": raw, "options": opts}


def _gcm(array, opts):
    if opts["method"] == "bem":
        return gcm_from_bem(array, int(opts["refine"]), opts["panels"])
    return dilute_gcm(array if array.is_dilute else as_dilute(array, float(opts["epsilon"])))


# -- commands ----------------------------------------------------------------------------------------


def cmd_spectrum(args) -> int:
    array, opts, resolved = _array_and_options(args, ())
    gcm = _gcm(array, opts)
    spec = compute_spectrum(gcm, array.material)
    write_output(args.out, spectrum_csv(spec, [manifest_line("spectrum", resolved)]), "spectrum", resolved)
    if args.json is not None:
        extra = {"gcm": gcm.values, "source": gcm.source, "params": gcm.params}
        write_output(args.json, spectrum_json(spec, extra), "spectrum", resolved)
    return EXIT_OK


def cmd_cap(args) -> int:
    array, opts, resolved = _array_and_options(args, ())
    gcm = _gcm(array, opts)
    matrix = {"capacitance": gcm.capacitance, "generalized": gcm.values, "volume": gcm.volume_scaling}[args.which]
    resolved = dict(resolved, which=args.which)
    text = matrix_csv(matrix, gcm.labels, [manifest_line("cap", resolved)])
    write_output(args.out, text, "cap", resolved)
    return EXIT_OK


def cmd_perturb(args) -> int:
    array, opts, resolved = _array_and_options(args, ("mode", "sigma", "trials", "seed"))
    sigmas = opts["sigma"] if isinstance(opts["sigma"], list) else [opts["sigma"]]
    if any(s < 0 for s in sigmas):
        raise ConfigError("sigma", "must be >= 0")
    if int(opts["trials"]) < 1:
        raise ConfigError("trials", "must be >= 1")
    gcm_fn = None
    if opts["method"] == "bem":
        gcm_fn = lambda a: gcm_from_bem(a, int(opts["refine"]), opts["panels"])  # noqa: E731
    elif not array.is_dilute:
        array = as_dilute(array, float(opts["epsilon"]))
    result = monte_carlo_robustness(array, opts["mode"], sigmas, int(opts["trials"]), int(opts["seed"]), gcm_fn)
    rows = [[r[c] for c in MC_COLUMNS] for r in result.rows]
    write_output(args.out, format_csv(MC_COLUMNS, rows, [manifest_line("perturb", resolved)]), "perturb", resolved)
    return EXIT_OK


def cmd_remove(args) -> int:
    array, opts, resolved = _array_and_options(args, ("indices",))
    indices = opts["indices"]
    if not indices:
        raise ConfigError("indices", "need at least one index")
    if min(indices) < 1 or max(indices) > array.n or len(set(indices)) != len(indices):
        raise ConfigError("indices", f"expected distinct values in 1..{array.n}, got {indices}")
    if len(indices) >= array.n:
        raise ConfigError("indices", "cannot remove every resonator")
    gcm = _gcm(array, opts)
    report = removal_analysis(gcm, indices, array.material, array if opts["method"] == "bem" else None)
    rows = []
    before = report.lambda_full
    for step, s in enumerate(report.steps, 1):
        bad = {v[0] for v in s.violations}
        for j, mu in enumerate(s.lambdas):
            rows.append([step, s.removed_label, j + 1, before[j], mu, before[j + 1], j + 1 not in bad])
        before = s.lambdas
    header = ("step", "removed_label", "j", "lambda_j_before", "mu_j", "lambda_j1_before", "interlaced")
    preamble = [manifest_line("remove", resolved),
                f"# interlaced={str(report.interlaced).lower()} removed_labels={list(report.removed_labels)}"]
    if report.submatrix_discrepancy is not None:
        preamble.append(f"# submatrix_vs_recomputed_relative_frobenius={report.submatrix_discrepancy!r}")
    write_output(args.out, format_csv(header, rows, preamble), "remove", resolved)
    if not report.interlaced:
        logger.error("interlacing violations: %s", report.violations)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_scale(args) -> int:
    opts = _resolve(args, ("n", "c", "radius"))
    resolved = {"options": opts}
    if any(n < 1 for n in opts["n"]):
        raise ConfigError("n", "array sizes must be >= 1")
    rows = []
    for n in opts["n"]:
        rep = gershgorin_large_array_check(float(opts["radius"]), int(n), float(opts["c"]))
        rows.append([n, rep.c, rep.epsilon, rep.admissibility, rep.eigenvalues.min(), rep.eigenvalues.max(),
                     rep.bound, rep.max_disc_radius, rep.all_inside])
    header = ("n", "c", "epsilon", "admissibility", "lambda_min", "lambda_max", "bound", "max_disc_radius",
              "all_inside")
    write_output(args.out, format_csv(header, rows, [manifest_line("scale", resolved)]), "scale", resolved)
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_NUMERIC


def cmd_filter(args) -> int:
    opts = _resolve(args, ("sample_rate", "trunc_tol"))
    if args.spectrum is not None:
        omegas = read_spectrum_csv(args.spectrum)
        resolved = {"spectrum": str(args.spectrum), "options": opts}
    else:
        array, aopts, resolved = _array_and_options(args, ("sample_rate", "trunc_tol"))
        opts = {k: aopts[k] for k in ("sample_rate", "trunc_tol")}
        omegas = compute_spectrum(_gcm(array, aopts), array.material).omegas
    if args.signal is not None:
        signal = read_signal_csv(args.signal)
        if opts["sample_rate"] is not None and opts["sample_rate"] != signal.sample_rate:
            raise ConfigError("sample_rate", f"flag {opts['sample_rate']} disagrees with signal file")
    else:
        if opts["sample_rate"] is None:
            raise ConfigError("sample_rate", "required without --signal")
        signal = Signal.impulse(args.impulse or 1, float(opts["sample_rate"]))
    resolved = dict(resolved, signal=str(args.signal) if args.signal else f"impulse:{args.impulse or 1}",
                    normalize=args.normalize)
    kernels = [make_kernel(w, signal.sample_rate, float(opts["trunc_tol"]), normalize=args.normalize)
               for w in omegas]
    out = apply_transform(signal, kernels)
    t = np.arange(out.shape[1]) / signal.sample_rate
    header = ["t"] + [f"a{n}" for n in range(1, len(kernels) + 1)]
    rows = np.column_stack([t, out.T])
    write_output(args.out, format_csv(header, rows, [manifest_line("filter", resolved)]), "filter", resolved)

    if args.response is not None or args.bands is not None:
        n_fft = 1 << int(np.ceil(np.log2(8 * max(len(k) for k in kernels))))
        responses = [frequency_response(k, n_fft) for k in kernels]
        if args.response is not None:
            header = ["freq_hz"] + [f"magnitude{n}" for n in range(1, len(kernels) + 1)]
            rows = np.column_stack([responses[0].freqs_hz] + [r.magnitude for r in responses])
            write_output(args.response, format_csv(header, rows, [manifest_line("filter", resolved)]),
                         "filter", resolved)
        if args.bands is not None:
            bands = [half_power_band(r) for r in responses]
            rows = [["band", n, lo, hi, r.peak_hz] for n, ((lo, hi), r) in enumerate(zip(bands, responses), 1)]
            rows += [["gap", "", lo, hi, ""] for lo, hi in band_gaps(bands)]
            write_output(args.bands, format_csv(("kind", "n", "lo_hz", "hi_hz", "peak_hz"), rows,
                                                [manifest_line("filter", resolved)]), "filter", resolved)
    return EXIT_OK


def cmd_mode_field(args) -> int:
    array, opts, resolved = _array_and_options(args, ())
    if opts["method"] != "bem":
        raise ConfigError("method", "mode-field needs --method bem")
    points = read_points_csv(args.points)
    bem = capacitance_matrix_bem(array, int(opts["refine"]), opts["panels"])
    gcm = gcm_from_bem(array, bem=bem)
    spec = compute_spectrum(gcm, array.material)
    if not 1 <= args.mode_index <= spec.n:
        raise ConfigError("mode_index", f"expected 1..{spec.n}, got {args.mode_index}")
    u = mode_field(bem.densities, spec, args.mode_index, points)
    resolved = dict(resolved, mode_index=args.mode_index, points=str(args.points))
    rows = np.column_stack([points, u])
    write_output(args.out, format_csv(("x", "y", "z", "u"), rows, [manifest_line("mode-field", resolved)]),
                 "mode-field", resolved)
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "cap": cmd_cap,
    "perturb": cmd_perturb,
    "remove": cmd_remove,
    "scale": cmd_scale,
    "filter": cmd_filter,
    "mode-field": cmd_mode_field,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InadmissibleScalingError as exc:
        print(f"error: inadmissible scaling: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonPhysicalSpectrumError, SingularOperatorError, NearDegenerateError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, GeometryError, FilterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
