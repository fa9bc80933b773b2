"""Synthetic truth and measurement generation, CSV exchange of motion
records, and Monte Carlo campaigns with RMSE aggregation."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DivergenceError, DomainError, GapError, SeaStateError
from .vessel_model import BLOCK, ComponentBank, channel_phase_offset
from .wave_env import (BretschneiderSpec, FrequencyGrid, VesselConfig, component_arrays,
                       doppler_encounter, forcing, sample_components)

log = logging.getLogger(__name__)

CHANNEL_UNITS = {"heave": "m", "pitch": "rad"}
_COLUMNS = {
    "heave": ("heave_pos", "heave_vel", "heave_acc"),
    "pitch": ("pitch_pos", "pitch_vel", "pitch_acc"),
}
_TS_RTOL = 1e-6


@dataclass(frozen=True)
class MeasurementFrame:
    t: float
    heave: np.ndarray
    pitch: np.ndarray | None = None


@dataclass
class MeasurementStream:
    """Uniformly sampled motion record, stored column-wise.

    ``heave`` and ``pitch`` have shape (K, 3) with columns position,
    velocity, acceleration; ``pitch`` may be ``None``.
    """

    t: np.ndarray
    heave: np.ndarray
    pitch: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.heave = np.asarray(self.heave, dtype=float).reshape(-1, 3)
        if self.pitch is not None:
            self.pitch = np.asarray(self.pitch, dtype=float).reshape(-1, 3)
        K = self.t.size
        if self.heave.shape[0] != K or (self.pitch is not None and self.pitch.shape[0] != K):
            raise DataError("time and channel arrays differ in length")

    def __len__(self):
        return self.t.size

    def __iter__(self):
        for i in range(len(self)):
            yield self.frame(i)

    def frame(self, i: int) -> MeasurementFrame:
        p = None if self.pitch is None else self.pitch[i]
        return MeasurementFrame(float(self.t[i]), self.heave[i], p)

    @property
    def Ts(self) -> float:
        if "Ts" in self.meta:
            return float(self.meta["Ts"])
        if len(self) < 2:
            raise DataError("sampling time undefined for fewer than two frames")
        return float(self.t[1] - self.t[0])

    def check_uniform(self) -> float:
        """Return Ts, raising :class:`GapError` on the first irregular step."""
        if len(self) < 2:
            return self.Ts if "Ts" in self.meta else float("nan")
        dt = np.diff(self.t)
        Ts = self.Ts
        bad = np.flatnonzero(np.abs(dt - Ts) > _TS_RTOL * Ts)
        if bad.size:
            i = int(bad[0]) + 1
            raise GapError(f"irregular sampling at frame {i}: dt={dt[i - 1]:.9g}, expected {Ts:.9g}")
        return Ts

    @classmethod
    def from_frames(cls, frames, meta=None) -> "MeasurementStream":
        frames = list(frames)
        t = [f.t for f in frames]
        heave = [f.heave for f in frames]
        has_pitch = bool(frames) and frames[0].pitch is not None
        pitch = [f.pitch for f in frames] if has_pitch else None
        return cls(np.array(t), np.array(heave).reshape(-1, 3),
                   None if pitch is None else np.array(pitch).reshape(-1, 3), dict(meta or {}))


@dataclass
class TruthRecord:
    """Noise-free trajectory of the wave-vessel system.

    ``states[ch]`` has shape (K+1, N, 3) with per-component [x, x', p]
    for steps k = 0..K; ``excitation[ch]`` is the summed p at the same steps.
    """

    t: np.ndarray
    components: list
    vessel: VesselConfig
    Ts: float
    states: dict
    excitation: dict
    measurements: dict

    @property
    def eta(self) -> np.ndarray:
        return self.vessel.eta

    @property
    def phases(self) -> np.ndarray:
        return component_arrays(self.components)[2]

    @property
    def K(self) -> int:
        return self.t.size - 1


def _excitation_amplitudes(components, vessel, channel):
    omegas, amps, phases = component_arrays(components)
    P = np.atleast_1d(forcing(omegas, vessel, channel)) if omegas.size else omegas
    return omegas, amps * P, phases + channel_phase_offset(channel)


def truth_from_components(components, vessel: VesselConfig, Ts: float, duration: float) -> TruthRecord:
    """Propagate the component states for ``duration`` seconds from rest.

    Excitations are exact sinusoids amp*P*sin(omega_e k Ts + phase); the
    states follow the discrete regular models of the true vessel.
    """
    K = int(round(duration / Ts))
    t = np.arange(K + 1) * Ts
    states, exc, meas = {}, {}, {}
    omegas = component_arrays(components)[0]
    for ch in ("heave", "pitch"):
        N = omegas.size
        if N == 0:
            states[ch] = np.zeros((K + 1, 0, BLOCK))
            exc[ch] = np.zeros(K + 1)
            meas[ch] = np.zeros((K + 1, 3))
            continue
        _, p_amp, ph = _excitation_amplitudes(components, vessel, ch)
        omega_e = np.atleast_1d(doppler_encounter(omegas, vessel))
        p = np.sin(np.multiply.outer(t, omega_e) + ph) * p_amp  # (K+1, N)
        bank = ComponentBank(omegas, vessel, Ts, ch)
        A_k, B_k, Gacc, J_k = (b[0] for b in bank.blocks(vessel.B, vessel.T))
        xs = np.zeros((K + 1, N, 2))
        for k in range(1, K + 1):
            xs[k] = np.einsum("nij,nj->ni", A_k, xs[k - 1]) + B_k * p[k - 1][:, None]
        st = np.concatenate([xs, p[..., None]], axis=-1)
        y = J_k[None] * p[..., None]
        y[..., 0] += xs[..., 0]
        y[..., 1] += xs[..., 1]
        y[..., 2] += np.einsum("ni,kni->kn", Gacc, xs)
        states[ch] = st
        exc[ch] = p.sum(axis=1)
        meas[ch] = y.sum(axis=1)
    return TruthRecord(t, list(components), vessel, float(Ts), states, exc, meas)


def generate_truth(spec: BretschneiderSpec, grid: FrequencyGrid, vessel_truth: VesselConfig, Ts: float,
                   duration: float, seed) -> TruthRecord:
    """Sample a sea on ``grid`` and propagate the true system deterministically."""
    comps = sample_components(spec, grid, seed)
    return truth_from_components(comps, vessel_truth, Ts, duration)


def generate_measurements(truth: TruthRecord, R_heave, R_pitch, seed, include_pitch: bool = True) -> MeasurementStream:
    """Noisy frames k = 1..K: the true outputs plus N(0, R) per channel."""
    rng = np.random.default_rng(seed)
    K = truth.K
    out = {}
    for ch, R in (("heave", R_heave), ("pitch", R_pitch)):
        R = np.asarray(R, dtype=float)
        noise = rng.multivariate_normal(np.zeros(3), R, size=K, method="cholesky") if np.any(R) else np.zeros((K, 3))
        out[ch] = truth.measurements[ch][1:] + noise
    omegas, _, phases = component_arrays(truth.components)
    # truth grid and phases ride along for the oracle phase mode only
    meta = {"Ts": truth.Ts, "units": dict(CHANNEL_UNITS), "omegas": omegas, "phases": phases}
    return MeasurementStream(truth.t[1:], out["heave"], out["pitch"] if include_pitch else None, meta)


# --------------------------------------------------------------------------
# CSV exchange
# --------------------------------------------------------------------------

def export_csv(stream: MeasurementStream, path, extra_meta: dict | None = None) -> Path:
    """Write a stream with '#'-prefixed metadata (Ts, units) and a header row."""
    path = Path(path)
    cols = ["t", *_COLUMNS["heave"]]
    data = [stream.t[:, None], stream.heave]
    units = {"heave": "m"}
    if stream.pitch is not None:
        cols += list(_COLUMNS["pitch"])
        data.append(stream.pitch)
        units["pitch"] = "rad"
    arr = np.hstack(data)
    with path.open("w", newline="") as fh:
        Ts = stream.Ts if len(stream) >= 2 or "Ts" in stream.meta else 0.0
        fh.write(f"# Ts: {Ts!r}\n")
        fh.write("# units: " + ", ".join(f"{k}={v}" for k, v in units.items()) + "\n")
        for k, v in (extra_meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for row in arr:
            w.writerow([repr(float(v)) for v in row])
    return path


def _parse_meta(line: str, meta: dict):
    body = line.lstrip("#").strip()
    if ":" not in body:
        return
    key, val = (s.strip() for s in body.split(":", 1))
    if key == "units":
        units = {}
        for part in val.split(","):
            if "=" in part:
                a, b = (s.strip() for s in part.split("=", 1))
                units[a] = b
        meta["units"] = units
    elif key == "Ts":
        meta["Ts"] = float(val)
    else:
        meta[key] = val


def ingest_csv(path, schema: dict | None = None) -> MeasurementStream:
    """Parse a motion record written by :func:`export_csv` or a compatible tool.

    ``schema`` maps canonical column names (``t``, ``heave_pos`` ...,
    ``pitch_acc``) to the names used in the file.  Heave columns are
    required; pitch columns are optional as a group.  A ``# units:``
    metadata line must declare ``heave=m`` (and ``pitch=rad`` when pitch is
    present).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    schema = dict(schema or {})
    meta: dict = {}
    header = None
    rows, lines = [], []
    with path.open(newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            s = raw.strip()
            if not s:
                continue
            if s.startswith("#"):
                _parse_meta(s, meta)
                continue
            if header is None:
                header = [c.strip() for c in next(csv.reader([s]))]
                continue
            rows.append(next(csv.reader([s])))
            lines.append(lineno)
    if header is None:
        raise DataError(f"{path}: missing header row")

    def col(name):
        return schema.get(name, name)

    index = {c: i for i, c in enumerate(header)}
    missing = [col(c) for c in ("t", *_COLUMNS["heave"]) if col(c) not in index]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    pitch_cols = [col(c) for c in _COLUMNS["pitch"]]
    has_pitch = all(c in index for c in pitch_cols)
    if any(c in index for c in pitch_cols) and not has_pitch:
        raise DataError(f"{path}: incomplete pitch columns")

    units = meta.get("units")
    if units is None:
        raise DataError(f"{path}: no '# units:' metadata line")
    for ch in ("heave",) + (("pitch",) if has_pitch else ()):
        if units.get(ch) != CHANNEL_UNITS[ch]:
            raise DataError(f"{path}: {ch} unit {units.get(ch)!r}, expected {CHANNEL_UNITS[ch]!r}")

    wanted = ["t", *_COLUMNS["heave"]] + (list(_COLUMNS["pitch"]) if has_pitch else [])
    idx = [index[col(c)] for c in wanted]
    arr = np.empty((len(rows), len(idx)))
    for r, (row, lineno) in enumerate(zip(rows, lines)):
        try:
            arr[r] = [float(row[i]) for i in idx]
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: line {lineno}: cannot parse row ({exc})") from None
        if not np.all(np.isfinite(arr[r])):
            raise DataError(f"{path}: line {lineno}: non-finite value")

    t = arr[:, 0]
    if t.size >= 2:
        Ts = meta.get("Ts") or float(t[1] - t[0])
        if not Ts > 0:
            raise DataError(f"{path}: non-positive sampling time")
        dt = np.diff(t)
        bad = np.flatnonzero(np.abs(dt - Ts) > _TS_RTOL * Ts)
        if bad.size:
            j = int(bad[0]) + 1
            raise GapError(f"{path}: line {lines[j]}: timestamp gap (dt={dt[j - 1]:.9g}, expected {Ts:.9g})")
        meta["Ts"] = Ts
    return MeasurementStream(t, arr[:, 1:4], arr[:, 4:7] if has_pitch else None, meta)


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------

FILTERS = ("srckf", "kf")
_MEAS_SEED_OFFSET = 1_000_003


@dataclass
class RunResult:
    """Outcome of one seeded truth -> measurements -> filters -> spectrum run."""

    index: int
    seed: int
    diverged: dict = field(default_factory=dict)     # filter -> message
    error: dict = field(default_factory=dict)        # filter -> channel -> (K,) excitation error
    eta_trace: np.ndarray | None = None               # (K, 2) SRCKF parameter trace
    sea: dict = field(default_factory=dict)          # filter -> spectrum summary


def scenario_data(cfg, index: int = 0, seed: int | None = None):
    """Truth and measurements for run ``index`` of a campaign (seed ``run.seed + index`` unless given)."""
    seed = int(cfg.run.seed) + index if seed is None else int(seed)
    truth = generate_truth(cfg.sea_spec(), cfg.synthesis_grid(), cfg.truth_vessel(), cfg.run.Ts,
                           cfg.run.duration, seed)
    stream = generate_measurements(truth, np.diag(cfg.noise.R_heave), np.diag(cfg.noise.R_pitch),
                                   seed + _MEAS_SEED_OFFSET)
    return seed, truth, stream


def single_run(cfg, index: int, seed: int | None = None) -> RunResult:
    from .estimators import build_setup, run_filter
    from .pipeline import trace_spectrum

    seed, truth, stream = scenario_data(cfg, index, seed)
    out = RunResult(index, seed)
    for mode in FILTERS:
        fcfg = cfg.copy(**{"filter.mode": mode})
        try:
            setup = build_setup(stream, fcfg)
            trace = run_filter(stream, fcfg, setup, rng_seed=seed)
        except DivergenceError as exc:
            log.warning("run %d (%s) diverged: %s", index, mode, exc)
            out.diverged[mode] = str(exc)
            continue
        out.error[mode] = {ch: c.excitation - truth.excitation[ch][1:] for ch, c in trace.channels.items()}
        if mode == "srckf":
            out.eta_trace = trace.eta
        try:
            out.sea[mode] = trace_spectrum(trace, fcfg).summary()
        except SeaStateError as exc:
            log.warning("run %d (%s): no spectrum: %s", index, mode, exc)
            out.sea[mode] = {"error": str(exc)}
    return out


def _single_run_from_dict(args):
    from .config import ScenarioConfig

    data, index, seed = args
    return single_run(ScenarioConfig.from_dict(data), index, seed)


@dataclass
class McSummary:
    """Aggregates of a campaign.

    ``rmse[filter][channel]`` is the per-step excitation RMSE over the runs
    that did not diverge and ``error_sd`` the across-run spread of the error
    (the +-1 sigma band); ``eta_mean``/``eta_sd`` are the SRCKF parameter
    traces across runs; ``sea[filter][key]`` lists per-run Hs, Tz_I, Tz_II
    and Tp.
    """

    t: np.ndarray
    n_runs: int
    seeds: list
    diverged: dict
    rmse: dict
    error_sd: dict
    eta_final: np.ndarray
    eta_mean: np.ndarray | None
    eta_sd: np.ndarray | None
    sea: dict
    bounds: dict = field(default_factory=dict)   # channel -> BoundTrace (single trajectory, first run)
    eta_truth: np.ndarray | None = None

    def n_ok(self, mode: str = "srckf") -> int:
        return self.n_runs - len(self.diverged.get(mode, []))

    def sea_mean(self, mode: str = "srckf") -> dict:
        return {k: float(np.nanmean(v)) if len(v) else math.nan for k, v in self.sea.get(mode, {}).items()}

    def to_dict(self) -> dict:
        from .spectrum import _jsonable

        return _jsonable({
            "n_runs": self.n_runs,
            "seeds": self.seeds,
            "diverged": self.diverged,
            "eta_truth": self.eta_truth,
            "eta_final": self.eta_final,
            "eta_final_mean": self.eta_final.mean(axis=0) if self.eta_final.size else None,
            "sea": self.sea,
            "sea_mean": {m: self.sea_mean(m) for m in self.sea},
            "rmse_after_30s": {m: {ch: float(np.sqrt(np.mean(r[self.t >= 30.0] ** 2))) if np.any(self.t >= 30.0)
                                   else math.nan for ch, r in d.items()} for m, d in self.rmse.items()},
        })

    def to_json(self, path) -> Path:
        import json

        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    def to_csv(self, path) -> Path:
        """Per-step table: time, RMSE per filter/channel, sqrt bound per channel, SRCKF eta mean."""
        path = Path(path)
        cols, names = [np.arange(1, self.t.size + 1), self.t], ["step", "time"]
        for m, d in self.rmse.items():
            for ch, r in d.items():
                cols += [r, self.error_sd[m][ch]]
                names += [f"rmse_{m}_{ch}", f"error_sd_{m}_{ch}"]
        for ch, b in self.bounds.items():
            if b is not None:
                cols.append(b.sqrt_bound)
                names.append(f"sqrt_bound_{ch}")
        if self.eta_mean is not None:
            cols += [self.eta_mean[:, 0], self.eta_mean[:, 1], self.eta_sd[:, 0], self.eta_sd[:, 1]]
            names += ["B_mean", "T_mean", "B_sd", "T_sd"]
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(names), comments="", fmt="%.10g")
        return path


def summarize(results, cfg, bounds=None) -> McSummary:
    results = sorted(results, key=lambda r: r.index)
    K = int(round(cfg.run.duration / cfg.run.Ts))
    t = np.arange(1, K + 1) * cfg.run.Ts
    diverged = {m: [r.seed for r in results if m in r.diverged] for m in FILTERS}
    rmse, error_sd = {}, {}
    for m in FILTERS:
        chans = sorted({ch for r in results for ch in r.error.get(m, {})})
        rmse[m], error_sd[m] = {}, {}
        for ch in chans:
            err = np.array([r.error[m][ch] for r in results if ch in r.error.get(m, {})])
            rmse[m][ch] = np.sqrt(np.mean(err**2, axis=0))
            error_sd[m][ch] = err.std(axis=0)
    etas = [r.eta_trace for r in results if r.eta_trace is not None]
    eta_final = np.array([e[-1] for e in etas]) if etas else np.empty((0, 2))
    eta_mean = np.mean(etas, axis=0) if etas else None
    eta_sd = np.std(etas, axis=0) if etas else None
    sea = {}
    for m in FILTERS:
        rows = [r.sea[m] for r in results if m in r.sea and "error" not in r.sea[m]]
        sea[m] = {k: [row[k] for row in rows] for k in ("Hs", "Tz_I", "Tz_II", "Tp")}
    return McSummary(t, len(results), [r.seed for r in results], diverged, rmse, error_sd, eta_final, eta_mean, eta_sd,
                     sea, bounds or {}, cfg.truth_vessel().eta)


def run_mc(cfg, n_runs: int | None = None, parallelism: int | None = None, with_bound: bool = True,
           seeds=None) -> McSummary:
    """Independent seeded runs of both filters and the spectrum.

    Run ``i`` uses seed ``run.seed + i`` unless ``seeds`` lists them
    explicitly.  Runs whose filter diverges are excluded from that filter's
    aggregates and listed in ``McSummary.diverged``.  With ``with_bound``
    the excitation bound is computed along the first run's trajectory.
    """
    if seeds is not None:
        seeds = [int(s) for s in seeds]
        n_runs = len(seeds)
    else:
        n_runs = cfg.run.n_runs if n_runs is None else int(n_runs)
        seeds = [int(cfg.run.seed) + i for i in range(n_runs)]
    if n_runs < 2:
        raise DomainError("a campaign needs at least two runs")
    if n_runs >= 50:
        log.warning("%d runs of %.0f s: expect a long campaign", n_runs, cfg.run.duration)
    workers = cfg.run.parallelism if parallelism is None else int(parallelism)
    workers = max(1, min(workers, n_runs, os.cpu_count() or 1))
    if workers == 1:
        results = [single_run(cfg, i, s) for i, s in enumerate(seeds)]
    else:
        data = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_single_run_from_dict, [(data, i, s) for i, s in enumerate(seeds)]))
    bounds = {}
    if with_bound:
        from .estimators import build_setup
        from .pcrlb import bound_for_scenario

        _, truth, stream = scenario_data(cfg, seed=seeds[0])
        setup = build_setup(stream, cfg)
        for ch in setup.channels:
            bounds[ch] = bound_for_scenario(truth, stream, cfg, ch, setup)
    return summarize(results, cfg, bounds)
