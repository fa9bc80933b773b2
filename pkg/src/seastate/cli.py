"""Command-line entry point: ``seastate {synth,estimate,pcrlb,spectrum,mc}``.

Every run starts from the built-in defaults, then an optional ``--config``
file (YAML or JSON), then ``--set section.key=value`` overrides, then the
dedicated flags.  Exit codes: 0 success, 2 configuration error, 3 data
error, 4 filter divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .errors import (ConditioningError, ConfigError, DataError, DegenerateSpectrumError, DiscretizationError,
                     DivergenceError, DomainError, SeaStateError)

log = logging.getLogger("seastate")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE = 0, 2, 3, 4

# flag -> (config key, type, help)
FLAGS = {
    "seed": ("run.seed", int, "base random seed"),
    "duration": ("run.duration", float, "record length [s]"),
    "Ts": ("run.Ts", float, "sampling interval [s]"),
    "runs": ("run.n_runs", int, "Monte Carlo runs"),
    "jobs": ("run.parallelism", int, "worker processes"),
    "beta": ("vessel.beta", float, "relative heading [rad], pi = head seas"),
    "speed": ("vessel.V", float, "forward speed [m/s]"),
    "hs": ("sea.Hs", float, "significant wave height [m]"),
    "tz": ("sea.Tz", float, "zero up-crossing period [s]"),
    "mode": ("filter.mode", str, "srckf or kf"),
    "phase_mode": ("filter.phase_mode", str, "zero, oracle or hold"),
    "channels": ("filter.channels", str, "auto, heave or both"),
    "spectrum_channel": ("spectrum.channel", str, "heave, pitch or combined"),
    "burn_in": ("spectrum.burn_in_s", float, "seconds dropped before the spectrum"),
    "out": ("output.dir", str, "output directory"),
}

_COMMON = ("seed", "duration", "Ts", "beta", "speed", "hs", "tz", "out")
_PER_COMMAND = {
    "synth": _COMMON,
    "estimate": ("Ts", "beta", "speed", "mode", "phase_mode", "channels", "spectrum_channel", "burn_in", "seed",
                 "out"),
    "pcrlb": _COMMON,
    "spectrum": ("Ts", "beta", "speed", "burn_in", "out"),
    "mc": _COMMON + ("runs", "jobs", "phase_mode", "channels", "spectrum_channel", "burn_in"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seastate", description="Sea-state estimation from vessel motion records.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "simulate a sea and write truth and measurement CSVs",
        "estimate": "filter a measurement CSV and write the trace and spectrum",
        "pcrlb": "write the excitation bound along a simulated trajectory",
        "spectrum": "turn an excitation CSV into a spectrum",
        "mc": "run a Monte Carlo campaign",
    }
    for name, flags in _PER_COMMAND.items():
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", type=Path, help="YAML or JSON scenario file")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key (repeatable)")
        for flag in flags:
            key, typ, hlp = FLAGS[flag]
            sp.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=typ, help=f"{hlp} ({key})")
        if name in ("estimate", "spectrum"):
            sp.add_argument("input", type=Path, help="input CSV")
        if name == "spectrum":
            sp.add_argument("--column", default=None, help="excitation column (default: first *_excitation)")
            sp.add_argument("--eta", type=float, nargs=2, metavar=("B", "T"),
                            help="hull parameters for the forcing function (default: B, T columns of the input)")
            sp.add_argument("--channel", choices=("heave", "pitch"), default=None)
        if name == "pcrlb":
            sp.add_argument("--channel", choices=("heave", "pitch"), default="heave")
        if name == "mc":
            sp.add_argument("--no-bound", action="store_true", help="skip the bound overlay")
    return p


def load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    cfg.apply_overrides(args.overrides)
    for flag in _PER_COMMAND[args.command]:
        val = getattr(args, flag, None)
        if val is not None:
            cfg.set(FLAGS[flag][0], val)
    cfg.validate()
    return cfg


def _outdir(cfg) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data) -> Path:
    from .spectrum import _jsonable

    path.write_text(json.dumps(_jsonable(data), indent=2))
    return path


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_synth(cfg) -> int:
    from .simharness import export_csv, scenario_data

    out = _outdir(cfg)
    seed, truth, stream = scenario_data(cfg, 0)
    export_csv(stream, out / "measurements.csv", {"seed": seed})
    t = truth.t[1:]
    cols = [t, truth.excitation["heave"][1:], truth.excitation["pitch"][1:],
            np.full(t.size, truth.eta[0]), np.full(t.size, truth.eta[1])]
    np.savetxt(out / "truth.csv", np.column_stack(cols), delimiter=",", comments="", fmt="%.10g",
               header="time,heave_excitation,pitch_excitation,B,T")
    cfg.dump(out / "config.yaml")
    print(f"wrote {out / 'measurements.csv'} and {out / 'truth.csv'} ({len(stream)} frames)")
    return EXIT_OK


def cmd_estimate(cfg, args) -> int:
    from .estimators import run_filter
    from .pipeline import trace_spectrum
    from .simharness import ingest_csv

    stream = ingest_csv(args.input)
    if abs(stream.Ts - cfg.run.Ts) > 1e-9 * cfg.run.Ts:
        log.info("using the record's sampling interval %.6g s", stream.Ts)
        cfg.run.Ts = stream.Ts
    out = _outdir(cfg)
    trace = run_filter(stream, cfg)
    trace.to_csv(out / "trace.csv")
    summary = trace.summary()
    try:
        spec = trace_spectrum(trace, cfg)
    except (DegenerateSpectrumError, DataError) as exc:
        log.warning("no spectrum: %s", exc)
        summary["spectrum_error"] = str(exc)
    else:
        spec.to_csv(out / "spectrum.csv")
        spec.to_json(out / "spectrum.json")
        summary["spectrum"] = {k: spec.summary()[k] for k in ("Hs", "Tz_I", "Tz_II", "Tp")}
    _write_json(out / "summary.json", summary)
    print(json.dumps(json.loads((out / "summary.json").read_text()), indent=2))
    return EXIT_OK


def cmd_pcrlb(cfg, args) -> int:
    from .pcrlb import bound_for_scenario
    from .simharness import scenario_data

    out = _outdir(cfg)
    _, truth, stream = scenario_data(cfg, 0)
    bound = bound_for_scenario(truth, stream, cfg, args.channel)
    if bound is None:
        print(f"no {args.channel} bound: the true {args.channel} excitation is identically zero")
        return EXIT_OK
    path = bound.to_csv(out / f"pcrlb_{args.channel}.csv")
    print(f"wrote {path}; final sqrt bound {bound.sqrt_bound[-1]:.4g}")
    return EXIT_OK


def _read_table(path: Path):
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if line.strip() and not line.startswith("#"))]
    if len(rows) < 3:
        raise DataError(f"{path}: needs a header and at least two rows")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array(rows[1:], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return header, data


def cmd_spectrum(cfg, args) -> int:
    from .pipeline import excitation_spectrum

    header, data = _read_table(args.input)
    col = args.column or next((h for h in header if h.endswith("_excitation")), None)
    if col not in header:
        raise DataError(f"{args.input}: excitation column {col!r} not found")
    channel = args.channel or ("pitch" if col.startswith("pitch") else "heave")
    if "time" in header:
        t = data[:, header.index("time")]
        cfg.run.Ts = float(np.median(np.diff(t)))
    if args.eta is not None:
        eta = args.eta
    elif "B" in header and "T" in header:
        eta = [data[-1, header.index("B")], data[-1, header.index("T")]]
    else:
        raise ConfigError("no B, T columns in the input: pass --eta B T")
    vessel = cfg.nominal_vessel().with_eta(eta)
    spec = excitation_spectrum(data[:, header.index(col)], cfg, vessel, channel)
    out = _outdir(cfg)
    spec.to_csv(out / "spectrum.csv")
    spec.to_json(out / "spectrum.json")
    print(json.dumps({k: spec.summary()[k] for k in ("Hs", "Tz_I", "Tz_II", "Tp")}))
    return EXIT_OK


def cmd_mc(cfg, args) -> int:
    from .simharness import run_mc

    out = _outdir(cfg)
    summary = run_mc(cfg, with_bound=not args.no_bound)
    summary.to_json(out / "mc_summary.json")
    summary.to_csv(out / "mc_steps.csv")
    for mode in summary.sea:
        m = summary.sea_mean(mode)
        print(f"{mode}: {summary.n_ok(mode)}/{summary.n_runs} runs, mean Hs {m.get('Hs', float('nan')):.3f} m, "
              f"Tz-I {m.get('Tz_I', float('nan')):.2f} s, Tz-II {m.get('Tz_II', float('nan')):.2f} s")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "estimate":
            return cmd_estimate(cfg, args)
        if args.command == "pcrlb":
            return cmd_pcrlb(cfg, args)
        if args.command == "spectrum":
            return cmd_spectrum(cfg, args)
        return cmd_mc(cfg, args)
    except (ConfigError, DomainError, DiscretizationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DegenerateSpectrumError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, ConditioningError) as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except SeaStateError as exc:  # pragma: no cover - every subclass is mapped above
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
