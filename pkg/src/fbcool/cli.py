"""
Command-line front end.

    fbcool storage --seed 42 --out runs/storage
    fbcool --figure fig3 --out runs/fig3
    fbcool replay --from runs/storage --out runs/storage-replay

Exit codes: 0 success, 1 usage error, 2 invalid configuration, 3 runtime
failure.
"""

import argparse
from datetime import datetime, timezone
import json
import logging
import math
import os
import platform
import sys

from . import __version__, analysis, archive, config, experiments
from .dynamics import KERNEL

log = logging.getLogger("fbcool")

SUBCOMMANDS = ("calibrate", "storage", "scan-attenuation", "scan-power", "thermometry", "toggle",
               "correlation", "replay")

FIGURES = {
    "fig1a": "scan-attenuation",
    "fig1b": "scan-power",
    "fig2b": "thermometry",
    "fig3": "toggle",
    "fig4": "correlation",
}

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_DEFAULTS = {"config": None, "seed": None, "out": None, "jobs": 1, "overwrite": False,
             "figure": None, "verbose": False}


def _add_common(p, top):
    # subcommands repeat the options with suppressed defaults so that a
    # value given before the subcommand is not overwritten
    d = (lambda k: _DEFAULTS[k]) if top else (lambda k: argparse.SUPPRESS)
    p.add_argument("--config", metavar="PATH", default=d("config"),
                   help="YAML experiment configuration")
    p.add_argument("--seed", type=int, metavar="N", default=d("seed"),
                   help="master seed (overrides the config)")
    p.add_argument("--out", metavar="DIR", default=d("out"), help="output directory")
    p.add_argument("--jobs", type=int, metavar="N", default=d("jobs"), help="worker processes")
    p.add_argument("--overwrite", action="store_true", default=d("overwrite"),
                   help="reuse an existing output directory")
    p.add_argument("--figure", choices=sorted(FIGURES), default=d("figure"),
                   help="run the protocol behind a figure")
    p.add_argument("-v", "--verbose", action="store_true", default=d("verbose"))


def build_parser():
    parser = _Parser(prog="fbcool", description="Feedback-cooling simulator and analysis toolkit")
    _add_common(parser, top=True)
    parser.add_argument("--version", action="version", version=f"fbcool {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} protocol")
        _add_common(p, top=False)
        if name == "replay":
            p.add_argument("--from", dest="source", required=True, metavar="DIR",
                           help="output directory of an earlier run")
    return parser


# ---------------------------------------------------------------------------
# CSV output

def fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool,)):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _survival_rows(curve):
    return zip(curve.t, curve.fraction, curve.stderr)


def _fit_rows(fit):
    sa, st = fit.sigma
    return [("A", fit.amplitude, sa), ("tau_ms", fit.tau, st)]


def _slug(label):
    return label.replace(".", "p")


def write_results(result, out_dir):
    """Write the CSV files of ``result``; returns {filename: schema}."""
    files = {}

    def put(name, header, rows):
        write_csv(os.path.join(out_dir, name), header, rows)
        files[name] = ",".join(header)

    kind = result.kind
    if kind == "storage":
        label = next(iter(result.curves))
        put("survival.csv", ("t_ms", "fraction", "stderr"), _survival_rows(result.curves[label]))
        put("fit.csv", ("param", "value", "sigma"), _fit_rows(result.fits[label]))
    elif kind == "calibrate":
        s = result.summary
        put("calibration.csv", ("zeta_heat", "tau_ms"), s["history"])
        put("fit.csv", ("param", "value", "sigma"),
            [("zeta_heat", s["zeta_heat"], "nan"), ("tau_ms", s["tau_ms"], "nan"),
             ("target_ms", s["target_ms"], "nan")])
    elif kind == "scan-attenuation":
        for label, curve in result.curves.items():
            put(f"survival_{_slug(label)}.csv", ("t_ms", "fraction", "stderr"), _survival_rows(curve))
        rows = []
        for att in result.summary["attenuation"]:
            f = result.fits[f"attenuation_{att:g}"]
            rows.append((att, f.amplitude, f.sigma[0], f.tau, f.sigma[1]))
        put("summary.csv", ("attenuation", "A", "A_sigma", "tau_ms", "tau_sigma_ms"), rows)
        put("fit_feedback_off.csv", ("param", "value", "sigma"), _fit_rows(result.fits["feedback_off"]))
    elif kind == "scan-power":
        for label, curve in result.curves.items():
            put(f"survival_{_slug(label)}.csv", ("t_ms", "fraction", "stderr"), _survival_rows(curve))
        rows = []
        for n in result.summary["n_empty"]:
            on, off = result.fits[f"n_{n:g}_on"], result.fits[f"n_{n:g}_off"]
            rows.append((n, on.amplitude, on.tau, on.sigma[1], off.amplitude, off.tau, off.sigma[1]))
        put("summary.csv", ("n_empty", "A_on", "tau_on_ms", "tau_on_sigma_ms", "A_off",
                            "tau_off_ms", "tau_off_sigma_ms"), rows)
    elif kind == "thermometry":
        fit_rows = []
        for label, data in result.curves.items():
            put(f"energies_{label}.csv", ("u_esc_uK", "e0_uK"), zip(data["u_esc_uK"], data["e0_uK"]))
            if label in result.fits:
                f = result.fits[label]
                fit_rows.append((f"T_{label}_uK", f.temperature, f.fit_uncertainty))
            counts = result.summary[label]
            fit_rows += [(f"n_used_{label}", counts["n_used"], "nan"),
                         (f"n_lost_in_hold_{label}", counts["n_lost_in_hold"], "nan"),
                         (f"n_survived_ramp_{label}", counts["n_survived_ramp"], "nan")]
        put("fit.csv", ("param", "value", "sigma"), fit_rows)
    elif kind == "toggle":
        tog = result.curves["toggle"]
        put("toggle.csv", ("t_ms", "trans_on", "trans_off"), zip(tog.t, tog.trans_on, tog.trans_off))
        c, a, tau = tog.on_fit
        put("fit.csv", ("param", "value", "sigma"),
            [("tau_c_ms", tau, "nan"), ("on_offset", c, "nan"), ("on_amplitude", a, "nan"),
             ("off_slope_per_ms", tog.off_slope, "nan"), ("phase_offset", tog.offset, tog.offset_sigma),
             ("n_phases", tog.n_phases, "nan")])
    elif kind == "correlation":
        rows = []
        for label, curve in result.curves.items():
            put(f"correlation_{_slug(label)}.csv", ("tau_us", "R", "n_intervals"),
                ((t, r, curve.n_intervals) for t, r in zip(curve.tau, curve.R)))
            feats = result.summary[label]
            rows.append((label, feats["bump_us"], feats["bump_contrast"],
                         feats.get("square_width_us", math.nan)))
        put("features.csv", ("curve", "bump_us", "bump_contrast", "square_width_us"), rows)
    else:
        raise ValueError(f"unknown result kind {kind!r}")
    return files


# ---------------------------------------------------------------------------
# dispatch

def _prepare_out(path, overwrite):
    if os.path.exists(path):
        if not os.path.isdir(path):
            raise UsageError(f"output path {path} exists and is not a directory")
        if os.listdir(path) and not overwrite:
            raise UsageError(f"output directory {path} is not empty (use --overwrite)")
    os.makedirs(path, exist_ok=True)


def _run(command, cfg, jobs):
    if command == "calibrate":
        return experiments.calibrate_heating(cfg, jobs=jobs, log=log.info)
    if command == "storage":
        return experiments.run_storage(cfg, jobs=jobs)
    if command == "scan-attenuation":
        return experiments.run_attenuation_scan(cfg, jobs=jobs)
    if command == "scan-power":
        return experiments.run_power_scan(cfg, jobs=jobs)
    if command == "thermometry":
        return experiments.run_thermometry(cfg, jobs=jobs)
    if command == "toggle":
        return experiments.run_toggle(cfg, jobs=jobs)
    if command == "correlation":
        return experiments.run_correlation(cfg, jobs=jobs)
    raise UsageError(f"unknown subcommand {command!r}")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, config.ExperimentConfig):
        return None
    if hasattr(obj, "item"):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def dispatch(args):
    command = args.command
    if args.figure:
        preset = FIGURES[args.figure]
        if command and command != preset:
            raise UsageError(f"--figure {args.figure} runs {preset}, not {command}")
        command = preset
    if not command:
        raise UsageError("no subcommand given")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")

    if command == "replay":
        src = args.source
        with open(os.path.join(src, "manifest.json"), encoding="utf-8") as fh:
            original = json.load(fh)
        cfg = config.load(os.path.join(src, "config.yaml"))
        kind = original["subcommand"]
        records = archive.read_records(os.path.join(src, "records.jsonl"))
        result = experiments.replay(kind, cfg, records)
    else:
        cfg = config.load(args.config) if args.config else config.ExperimentConfig()
        if args.seed is not None:
            cfg = cfg.with_values(master_seed=args.seed)
        kind = command

    out = args.out or f"fbcool-{command}-seed{cfg.master_seed}"
    _prepare_out(out, args.overwrite)
    if command != "replay":
        log.info("running %s with %d atoms (kernel: %s)", command, cfg.n_atoms, KERNEL)
        result = _run(command, cfg, args.jobs)

    files = write_results(result, out)
    config.dump(cfg, os.path.join(out, "config.yaml"))
    files["config.yaml"] = "effective configuration"
    if result.kind == "calibrate":
        config.dump(result.summary["config"], os.path.join(out, "config_calibrated.yaml"))
        files["config_calibrated.yaml"] = "configuration with the calibrated zeta_heat"
    if result.records:
        full = cfg.output.archive == "full"
        archive.write_records(os.path.join(out, "records.jsonl"), result.records, full=full)
        files["records.jsonl"] = "one JSON trajectory record per line"

    summary = {k: v for k, v in result.summary.items() if k not in ("config", "history")}
    manifest = {
        "subcommand": kind,
        "replayed": command == "replay",
        "figure": args.figure,
        "master_seed": cfg.master_seed,
        "config_hash": cfg.hash(),
        "code_version": __version__,
        "files": dict(sorted(files.items())),
        "summary": _json_safe(summary),
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    info = {
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "output_dir": os.path.abspath(out),
        "config_path": args.config,
        "jobs": args.jobs,
        "kernel": KERNEL,
        "python": platform.python_version(),
    }
    with open(os.path.join(out, "run_info.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(info, fh, indent=2)
        fh.write("\n")
    log.info("wrote %s", out)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"fbcool: usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return dispatch(args)
    except UsageError as exc:
        print(f"fbcool: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except config.ConfigError as exc:
        print(f"fbcool: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (analysis.AnalysisError, experiments.NonBracketingError, OSError, RuntimeError,
            ValueError) as exc:
        print(f"fbcool: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
