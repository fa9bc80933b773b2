"""Glue between a filter trace and the spectrum estimate."""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .spectrum import SpectrumEstimate, combine_spectra, estimate_spectrum


def trace_vessel(trace, cfg):
    """Vessel used for the forcing function: terminal estimate, or the truth for the KF."""
    eta = trace.eta
    if eta is None or not len(eta):
        return cfg.truth_vessel()
    return cfg.nominal_vessel().with_eta(eta[-1])


def excitation_spectrum(excitation, cfg, vessel, channel: str = "heave") -> SpectrumEstimate:
    s = cfg.spectrum
    return estimate_spectrum(excitation, cfg.run.Ts, cfg.estimation_grid(), vessel, channel,
                             hop_fraction=s.hop_fraction, short_record=s.short_record, P_floor=s.P_floor,
                             wave_domain_widths=s.wave_domain_widths, burn_in_s=s.burn_in_s)


def trace_spectrum(trace, cfg, channel: str | None = None) -> SpectrumEstimate:
    """Spectrum of a filter trace per ``cfg.spectrum``.

    ``combined`` merges heave and pitch when both were filtered and falls
    back to heave otherwise.
    """
    channel = channel or cfg.spectrum.channel
    vessel = trace_vessel(trace, cfg)
    if channel == "combined":
        if "pitch" not in trace.channels:
            return trace_spectrum(trace, cfg, "heave")
        a = excitation_spectrum(trace.channels["heave"].excitation, cfg, vessel, "heave")
        b = excitation_spectrum(trace.channels["pitch"].excitation, cfg, vessel, "pitch")
        return combine_spectra(a, b)
    if channel not in trace.channels:
        raise DataError(f"trace has no {channel} channel")
    return excitation_spectrum(np.asarray(trace.channels[channel].excitation), cfg, vessel, channel)
