"""Wave spectrum from an estimated excitation time series.

The excitation is cut into sliding windows.  In each window the power at
the encountered grid frequencies is read out, either by a least-squares
sinusoid fit at exactly those frequencies or from a Hann-tapered
periodogram, and the powers are averaged across windows.  Each bin amplitude is then mapped back to a wave amplitude through the hull
forcing function, giving S(omega_n) on the wave-frequency grid and the sea
parameters Hs, Tp, Tz-I and Tz-II.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import get_window

from .errors import DataError, DegenerateSpectrumError, DomainError, InsufficientDataError
from .wave_env import FrequencyGrid, VesselConfig, doppler_encounter, forcing, inverse_doppler

P_FLOOR = 1e-4
TZ_RATIO = 1.41


@dataclass(frozen=True)
class WindowPlan:
    """FFT window and hop in samples.

    ``padded`` marks a record shorter than the window: it is analysed as a
    single window zero-padded to ``window_samples``.
    """

    window_samples: int
    hop_samples: int
    Ts: float
    padded: bool = False

    def __post_init__(self):
        if self.window_samples < 2:
            raise DomainError("a window needs at least two samples")
        if not 1 <= self.hop_samples <= self.window_samples:
            raise DomainError("hop must lie in [1, window]")
        if not self.Ts > 0:
            raise DomainError("sampling time must be positive")

    @property
    def seconds(self) -> float:
        return self.window_samples * self.Ts


@dataclass
class BinnedSpectrum:
    """Averaged excitation power per estimation bin (encountered domain)."""

    omega_e: np.ndarray
    edges_e: np.ndarray
    power: np.ndarray       # mean square per bin, averaged over windows
    power_var: np.ndarray   # across-window variance of the bin power (0 for a single window)
    n_windows: int
    readout: str = "harmonic"

    @property
    def amplitude(self) -> np.ndarray:
        return np.sqrt(2 * self.power)


@dataclass
class SpectrumEstimate:
    omegas: np.ndarray
    deltas: np.ndarray
    S: np.ndarray
    excluded: np.ndarray    # boolean mask of bins dropped for a vanishing forcing function
    Hs: float = math.nan
    Tz_I: float = math.nan
    Tz_II: float = math.nan
    Tp: float = math.nan
    m0: float = math.nan
    m2: float = math.nan
    channel: str = "heave"
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "channel": self.channel,
            "Hs": self.Hs, "Tz_I": self.Tz_I, "Tz_II": self.Tz_II, "Tp": self.Tp,
            "m0": self.m0, "m2": self.m2,
            "excluded_bins": [int(i) for i in np.flatnonzero(self.excluded)],
            **self.meta,
        }

    def to_csv(self, path) -> Path:
        path = Path(path)
        arr = np.column_stack([self.omegas, self.S, self.excluded.astype(int)])
        np.savetxt(path, arr, delimiter=",", header="omega,S,excluded", comments="", fmt=["%.10g", "%.10g", "%d"])
        return path

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(_jsonable(self.summary()), indent=2))
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# --------------------------------------------------------------------------
# Windowing
# --------------------------------------------------------------------------

def encountered_grid(grid: FrequencyGrid, vessel: VesselConfig):
    """Encountered centre frequencies and bin edges of a wave-domain grid."""
    omega_e = np.atleast_1d(doppler_encounter(grid.omegas, vessel))
    edges_e = np.atleast_1d(doppler_encounter(np.maximum(grid.edges, 0.0), vessel))
    if np.any(np.diff(edges_e) <= 0):
        raise DomainError("Doppler map is not monotone over the grid")
    return omega_e, edges_e


def window_seconds(omega_e_min: float, d_omega_e_min: float) -> float:
    """L_w = 2 pi / min(omega_e_min, d_omega_e_min)."""
    lim = min(omega_e_min, d_omega_e_min)
    if not lim > 0:
        raise DomainError("encountered frequencies and spacings must be positive")
    return 2 * math.pi / lim


def window_length(grid: FrequencyGrid, vessel: VesselConfig, Ts: float, n_samples: int | None = None,
                  hop_fraction: float = 0.5, short_record: str = "error") -> WindowPlan:
    """Window plan for a wave-domain ``grid`` seen from ``vessel``.

    The minimum encountered spacing is taken from the encountered bin
    widths.  When ``n_samples`` is given and the window is longer than the
    record, ``short_record="error"`` raises and ``"pad"`` returns a padded
    single-window plan.
    """
    if not Ts > 0:
        raise DomainError("sampling time must be positive")
    omega_e, edges_e = encountered_grid(grid, vessel)
    seconds = window_seconds(float(omega_e.min()), float(np.diff(edges_e).min()))
    n = max(2, math.ceil(seconds / Ts - 1e-9))
    hop = max(1, int(round(n * hop_fraction)))
    padded = False
    if n_samples is not None and n_samples < n:
        if short_record != "pad":
            raise InsufficientDataError(
                f"window of {seconds:.1f} s ({n} samples) exceeds the record ({n_samples} samples)")
        padded = True
    return WindowPlan(n, min(hop, n), float(Ts), padded)


def _taper(name: str, n: int) -> np.ndarray:
    if name in ("rect", "boxcar", None):
        return np.ones(n)
    return get_window(name, n, fftbins=True)


def periodogram_windows(x, plan: WindowPlan, taper: str = "hann"):
    """Per-window one-sided power per DFT bin; returns (freqs_rad, P[w, j]).

    P is normalised so that its sum over bins is the tapered mean square of
    the window, i.e. a sinusoid of amplitude A contributes A^2/2.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("excitation must be a 1-D series")
    n = plan.window_samples
    rows = []
    for seg in _windows(x, plan):
        _check_segment(seg)
        w = _taper(taper, seg.size)
        X = np.fft.rfft(seg * w, n=n)
        # Parseval over the full two-sided spectrum: sum|X|^2 = n sum (seg w)^2
        P = np.abs(X) ** 2 / (n * np.sum(w * w))
        P[1:] *= 2
        if n % 2 == 0:
            P[-1] /= 2
        rows.append(P)
    freqs = 2 * math.pi * np.fft.rfftfreq(n, plan.Ts)
    return freqs, np.array(rows)


#: Condition number above which the harmonic fit is abandoned for the periodogram.
HARMONIC_COND_MAX = 1e3
READOUTS = ("auto", "harmonic", "periodogram")


def _windows(x, plan: WindowPlan):
    n = plan.window_samples
    if x.size < n:
        if not plan.padded:
            raise InsufficientDataError(f"series of {x.size} samples is shorter than the {n}-sample window")
        return [x]
    return [x[s:s + n] for s in range(0, x.size - n + 1, plan.hop_samples)]


def harmonic_basis(n: int, Ts: float, omega_e) -> np.ndarray:
    t = np.arange(n) * Ts
    wt = np.multiply.outer(t, np.asarray(omega_e, dtype=float))
    return np.hstack([np.sin(wt), np.cos(wt)])


def harmonic_powers(x, plan: WindowPlan, omega_e):
    """Least-squares sinusoid fit at ``omega_e`` in every window; returns (powers[w, n], cond)."""
    x = np.asarray(x, dtype=float)
    omega_e = np.asarray(omega_e, dtype=float)
    N = omega_e.size
    rows, cond = [], 1.0
    basis = {}
    for seg in _windows(x, plan):
        _check_segment(seg)
        if seg.size not in basis:
            Phi = harmonic_basis(seg.size, plan.Ts, omega_e)
            basis[seg.size] = (Phi, float(np.linalg.cond(Phi)))
        Phi, c = basis[seg.size]
        cond = max(cond, c)
        coef, *_ = np.linalg.lstsq(Phi, seg, rcond=None)
        rows.append(0.5 * (coef[:N] ** 2 + coef[N:] ** 2))
    return np.array(rows), cond


def _check_segment(seg):
    if np.all(np.isnan(seg)):
        raise DataError("window contains only NaN values")
    if np.any(~np.isfinite(seg)):
        raise DataError("window contains non-finite values")


def binned_periodogram(x, plan: WindowPlan, omega_e, edges_e, taper: str = "hann") -> np.ndarray:
    """Per-window power per estimation bin from the tapered periodogram.

    DFT bins inside ``[edges_e[0], edges_e[-1])`` split their power linearly
    between the two nearest bin centres, which keeps the total and avoids
    bins that receive zero or two DFT lines.
    """
    omega_e = np.asarray(omega_e, dtype=float)
    edges_e = np.asarray(edges_e, dtype=float)
    freqs, P = periodogram_windows(x, plan, taper)
    inside = (freqs >= edges_e[0]) & (freqs < edges_e[-1])
    f = freqs[inside]
    nb = omega_e.size
    if nb == 1:
        return P[:, inside].sum(axis=1, keepdims=True)
    j = np.clip(np.searchsorted(omega_e, f) - 1, 0, nb - 2)
    wgt = np.clip((f - omega_e[j]) / (omega_e[j + 1] - omega_e[j]), 0.0, 1.0)
    out = np.zeros((P.shape[0], nb))
    for wi, Pw in enumerate(P[:, inside]):
        out[wi] = np.bincount(j, Pw * (1 - wgt), minlength=nb) + np.bincount(j + 1, Pw * wgt, minlength=nb)
    return out


def sliding_fft(x, plan: WindowPlan, omega_e, edges_e=None, taper: str = "hann",
                readout: str = "auto") -> BinnedSpectrum:
    """Window-averaged excitation power at the encountered grid frequencies.

    ``readout="harmonic"`` fits sinusoids at exactly ``omega_e`` in each
    window (exact for a signal made of those lines); ``"periodogram"`` bins a
    tapered periodogram; ``"auto"`` uses the harmonic fit unless its basis
    is ill-conditioned (frequencies closer than the record can resolve).
    """
    if readout not in READOUTS:
        raise DomainError(f"readout must be one of {READOUTS}")
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("excitation must be a 1-D series")
    omega_e = np.atleast_1d(np.asarray(omega_e, dtype=float))
    if edges_e is None:
        mid = 0.5 * (omega_e[1:] + omega_e[:-1]) if omega_e.size > 1 else np.empty(0)
        half = (omega_e[1] - omega_e[0]) / 2 if omega_e.size > 1 else math.pi / plan.seconds
        lo = omega_e[0] - half
        hi = omega_e[-1] + ((omega_e[-1] - omega_e[-2]) / 2 if omega_e.size > 1 else half)
        edges_e = np.concatenate([[lo], mid, [hi]])
    used = readout
    per_window = None
    if readout in ("auto", "harmonic"):
        per_window, cond = harmonic_powers(x, plan, omega_e)
        if readout == "auto" and cond > HARMONIC_COND_MAX:
            per_window, used = None, "periodogram"
        else:
            used = "harmonic"
    if per_window is None:
        per_window = binned_periodogram(x, plan, omega_e, edges_e, taper)
    power = per_window.mean(axis=0)
    var = per_window.var(axis=0, ddof=1) if per_window.shape[0] > 1 else np.zeros_like(power)
    return BinnedSpectrum(omega_e, np.asarray(edges_e, dtype=float), power, var, per_window.shape[0], used)


# --------------------------------------------------------------------------
# Excitation -> wave spectrum
# --------------------------------------------------------------------------

def sea_parameters(omegas, S, deltas):
    """(Hs, Tz_I, Tz_II, Tp) from a discrete spectrum; ties in the peak go to the lowest frequency."""
    omegas = np.asarray(omegas, dtype=float)
    S = np.asarray(S, dtype=float)
    deltas = np.broadcast_to(np.asarray(deltas, dtype=float), S.shape)
    if S.size == 0:
        raise DegenerateSpectrumError("empty spectrum")
    if np.any(S < 0) or np.any(~np.isfinite(S)):
        raise DomainError("spectral density must be finite and non-negative")
    m0 = float(np.sum(S * deltas))
    m2 = float(np.sum(omegas**2 * S * deltas))
    if not m0 > 0:
        raise DegenerateSpectrumError("spectrum carries no energy (m0 = 0)")
    Tp = 2 * math.pi / float(omegas[int(np.argmax(S))])  # argmax returns the first maximum
    return 4 * math.sqrt(m0), Tp / TZ_RATIO, 2 * math.pi * math.sqrt(m0 / m2), Tp


def spectral_moments(omegas, S, deltas):
    S = np.asarray(S, dtype=float)
    return float(np.sum(S * deltas)), float(np.sum(np.asarray(omegas) ** 2 * S * deltas))


def excitation_to_spectrum(amps, channel: str, vessel: VesselConfig, grid: FrequencyGrid,
                           P_floor: float = P_FLOOR, wave_domain_widths: bool = True) -> SpectrumEstimate:
    """Wave spectrum from per-bin excitation amplitudes.

    ``amps`` are single-sided amplitudes on the encountered counterparts of
    ``grid``.  The wave frequency of each bin is recovered with the inverse
    Doppler map, the amplitude is divided by the forcing function there, and
    S = zeta^2 / (2 dw) with dw the wave-domain bin width (or the
    encountered width when ``wave_domain_widths`` is false).
    """
    amps = np.asarray(amps, dtype=float)
    if amps.shape != grid.omegas.shape:
        raise DomainError("one amplitude per grid bin is required")
    omega_e, edges_e = encountered_grid(grid, vessel)
    omegas = np.atleast_1d(inverse_doppler(omega_e, vessel))
    wave_edges = np.atleast_1d(inverse_doppler(edges_e, vessel))
    deltas = np.diff(wave_edges) if wave_domain_widths else np.diff(edges_e)
    P = np.abs(np.atleast_1d(forcing(omegas, vessel, channel)))
    excluded = P < P_floor
    zeta = np.where(excluded, 0.0, amps / np.where(excluded, 1.0, P))
    S = zeta**2 / (2 * deltas)
    est = SpectrumEstimate(omegas, deltas, S, excluded, channel=channel)
    if np.all(excluded):
        return est
    try:
        est.Hs, est.Tz_I, est.Tz_II, est.Tp = sea_parameters(omegas, S, deltas)
        est.m0, est.m2 = spectral_moments(omegas, S, deltas)
    except DegenerateSpectrumError:
        pass
    return est


def estimate_spectrum(excitation, Ts: float, grid: FrequencyGrid, vessel: VesselConfig, channel: str = "heave",
                      hop_fraction: float = 0.5, short_record: str = "pad", P_floor: float = P_FLOOR,
                      wave_domain_widths: bool = True, taper: str = "hann", readout: str = "auto",
                      burn_in_s: float = 0.0) -> SpectrumEstimate:
    """Excitation series -> :class:`SpectrumEstimate` in one call.

    ``vessel`` carries the hull parameters used for the forcing function
    (normally the terminal estimate).  The first ``burn_in_s`` seconds are
    discarded, which keeps a filter's start-up transient out of the spectrum.
    """
    x = np.asarray(excitation, dtype=float)
    if burn_in_s < 0:
        raise DomainError("burn-in must be non-negative")
    skip = int(round(burn_in_s / Ts))
    if skip >= x.size - 1:
        raise InsufficientDataError(f"burn-in of {burn_in_s} s leaves no data")
    x = x[skip:]
    plan = window_length(grid, vessel, Ts, n_samples=x.size, hop_fraction=hop_fraction, short_record=short_record)
    omega_e, edges_e = encountered_grid(grid, vessel)
    binned = sliding_fft(x, plan, omega_e, edges_e, taper, readout)
    est = excitation_to_spectrum(binned.amplitude, channel, vessel, grid, P_floor, wave_domain_widths)
    est.meta.update({"window_s": plan.seconds, "hop_samples": plan.hop_samples, "n_windows": binned.n_windows,
                     "padded": plan.padded, "readout": binned.readout, "burn_in_s": burn_in_s})
    est.meta["_power_var"] = binned.power_var
    est.meta["_power"] = binned.power
    return est


def combine_spectra(a: SpectrumEstimate, b: SpectrumEstimate) -> SpectrumEstimate:
    """Inverse-variance average of two spectra on the same grid.

    Bin variances come from the across-window spread of each estimate; with
    a single window the bins are weighted equally.  A bin excluded in one
    spectrum takes the other's value.
    """
    if a.omegas.shape != b.omegas.shape or np.max(np.abs(a.omegas - b.omegas)) > 1e-9:
        raise DomainError("spectra are on different grids")

    def var(e):
        pw = e.meta.get("_power")
        pv = e.meta.get("_power_var")
        if pw is None or pv is None or not np.any(pv > 0):
            return np.ones_like(e.S)
        # relative variance of the power carries over to S
        rel = np.where(pw > 0, pv / np.maximum(pw, 1e-300) ** 2, np.inf)
        return np.maximum(rel * e.S**2, 1e-300)

    va, vb = var(a), var(b)
    wa = np.where(a.excluded, 0.0, 1 / va)
    wb = np.where(b.excluded, 0.0, 1 / vb)
    tot = wa + wb
    excluded = tot == 0
    S = np.where(excluded, 0.0, (wa * a.S + wb * b.S) / np.where(excluded, 1.0, tot))
    est = SpectrumEstimate(a.omegas, a.deltas, S, excluded, channel="combined")
    if not np.all(excluded):
        est.Hs, est.Tz_I, est.Tz_II, est.Tp = sea_parameters(a.omegas, S, a.deltas)
        est.m0, est.m2 = spectral_moments(a.omegas, S, a.deltas)
    return est
