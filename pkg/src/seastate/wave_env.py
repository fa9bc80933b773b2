"""Wave environment: spectra, irregular-wave synthesis, Doppler shift and
hull forcing functions for a box-shaped, uniformly loaded vessel.

All frequencies are angular (rad/s).  Functions accept scalars or numpy
arrays for ``omega`` and broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateKinematicsError, DomainError, UnsupportedHeadingError

#: Acceleration due to gravity (m/s^2).
GRAVITY = 9.8

_HEADING_TOL = 1e-12
_HEAVE_SINC_EPS = 1e-6
_PITCH_SERIES_EPS = 1e-3


@dataclass(frozen=True)
class BretschneiderSpec:
    """Two-parameter Bretschneider sea: significant wave height ``Hs`` (m)
    and zero up-crossing period ``Tz`` (s)."""

    Hs: float
    Tz: float

    def __post_init__(self):
        if not (self.Hs > 0 and self.Tz > 0):
            raise DomainError(f"Hs and Tz must be positive, got Hs={self.Hs}, Tz={self.Tz}")

    @property
    def a(self) -> float:
        return self.Hs**2 / (4 * math.pi) * (2 * math.pi / self.Tz) ** 4

    @property
    def b(self) -> float:
        return (2 * math.pi / self.Tz) ** 4 / math.pi

    @property
    def peak_frequency(self) -> float:
        """Frequency of the spectral maximum, (4b/5)^(1/4)."""
        return (0.8 * self.b) ** 0.25


@dataclass(frozen=True)
class WaveComponent:
    """One regular harmonic of an irregular long-crested sea."""

    omega: float
    amplitude: float
    phase: float


@dataclass(frozen=True)
class FrequencyGrid:
    """Discrete wave frequencies ``omegas`` with per-component bin widths."""

    omegas: np.ndarray
    deltas: np.ndarray

    def __post_init__(self):
        omegas = np.atleast_1d(np.asarray(self.omegas, dtype=float))
        deltas = np.atleast_1d(np.asarray(self.deltas, dtype=float))
        if omegas.shape != deltas.shape:
            raise DomainError("omegas and deltas must have the same length")
        if omegas.size and np.any(np.diff(omegas) <= 0):
            raise DomainError("grid frequencies must be strictly increasing")
        if np.any(deltas <= 0) or np.any(omegas <= 0):
            raise DomainError("grid frequencies and bin widths must be positive")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "deltas", deltas)

    @classmethod
    def uniform(cls, omega_min: float, omega_max: float, n: int) -> "FrequencyGrid":
        """``n`` equally spaced components with full (not halved) end bins."""
        if n < 2:
            raise DomainError("a uniform grid needs at least two components")
        omegas = np.linspace(omega_min, omega_max, n)
        delta = (omega_max - omega_min) / (n - 1)
        return cls(omegas, np.full(n, delta))

    def truncate(self, omega_lo: float, omega_hi: float) -> "FrequencyGrid":
        """Sub-grid of the components lying inside ``[omega_lo, omega_hi]``."""
        keep = (self.omegas >= omega_lo) & (self.omegas <= omega_hi)
        if not np.any(keep):
            raise DomainError(f"no grid component inside [{omega_lo}, {omega_hi}]")
        return FrequencyGrid(self.omegas[keep], self.deltas[keep])

    @property
    def edges(self) -> np.ndarray:
        """Bin edges, ``len(omegas) + 1`` values; bins are centred on ``omegas``."""
        lo = self.omegas - self.deltas / 2
        hi = self.omegas + self.deltas / 2
        return np.concatenate([lo[:1], 0.5 * (hi[:-1] + lo[1:]), hi[-1:]])

    def __len__(self):
        return self.omegas.size


@dataclass(frozen=True)
class HydroCoeffs:
    k_w: np.ndarray
    alpha: np.ndarray
    A_v: np.ndarray
    k_e: np.ndarray
    kappa: np.ndarray
    psi: np.ndarray


@dataclass(frozen=True)
class VesselConfig:
    """Vessel geometry and kinematics.

    ``B`` and ``T`` form the parameter vector that the joint estimator treats
    as unknown; everything else is assumed known.
    """

    L: float = 7.0
    B: float = 2.77
    T: float = 0.35
    CoG_x: float = 2.11
    CoG_z: float = 0.79
    V: float = 4.0
    beta: float = math.pi

    def __post_init__(self):
        if not (self.L > 0 and self.B > 0 and self.T > 0):
            raise DomainError(f"L, B, T must be positive (L={self.L}, B={self.B}, T={self.T})")
        if self.V < 0:
            raise DomainError(f"forward speed must be non-negative, got {self.V}")
        check_heading(self.beta)

    @property
    def eta(self) -> np.ndarray:
        return np.array([self.B, self.T])

    def with_eta(self, eta) -> "VesselConfig":
        return replace(self, B=float(eta[0]), T=float(eta[1]))


def reference_vessel(**overrides) -> VesselConfig:
    """Scaled RHIB from the towing-tank programme (B0 = 2.77 m)."""
    return replace(VesselConfig(), **overrides)


def reference_truth_vessel(**overrides) -> VesselConfig:
    """Same hull with the breadth used as simulation truth (B = 1.47 m)."""
    return replace(VesselConfig(B=1.47), **overrides)


def check_heading(beta: float) -> None:
    if not (math.pi / 2 - _HEADING_TOL <= beta <= math.pi + _HEADING_TOL):
        raise UnsupportedHeadingError(
            f"relative heading {beta:.6f} rad outside [pi/2, pi]; following seas are not supported"
        )


def cos_heading(beta: float) -> float:
    """cos(beta) with the beam-seas value snapped to an exact zero."""
    c = math.cos(beta)
    return 0.0 if abs(c) < 1e-12 else c


# --------------------------------------------------------------------------
# Spectrum and synthesis
# --------------------------------------------------------------------------

def bretschneider_density(omega, spec: BretschneiderSpec):
    """Spectral density S_B(omega) = a/omega^5 * exp(-b/omega^4)  (m^2 s)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise DomainError("Bretschneider density is defined for omega > 0 only")
    with np.errstate(over="ignore"):
        out = spec.a / omega**5 * np.exp(-spec.b / omega**4)
    return out if out.ndim else float(out)


def sample_components(spec: BretschneiderSpec, grid: FrequencyGrid, rng_seed) -> list[WaveComponent]:
    """Draw a random-phase realisation of ``spec`` on ``grid``.

    Amplitudes follow sqrt(2 dw_n S_B(w_n)); phases are uniform on [0, 2pi)
    from ``numpy.random.default_rng(rng_seed)``.
    """
    if len(grid) == 0:
        raise DomainError("cannot sample components on an empty grid")
    amps = np.sqrt(2 * grid.deltas * bretschneider_density(grid.omegas, spec))
    phases = np.random.default_rng(rng_seed).uniform(0.0, 2 * np.pi, size=len(grid))
    return [WaveComponent(float(w), float(a), float(p)) for w, a, p in zip(grid.omegas, amps, phases)]


def component_arrays(components) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unpack a list of components into (omega, amplitude, phase) arrays."""
    if not components:
        return np.empty(0), np.empty(0), np.empty(0)
    arr = np.array([(c.omega, c.amplitude, c.phase) for c in components], dtype=float)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def wave_elevation(t, components):
    """zeta(t) = sum_n amp_n sin(omega_n t + phase_n) at zero forward speed."""
    w, a, p = component_arrays(components)
    t = np.asarray(t, dtype=float)
    return np.sin(np.multiply.outer(t, w) + p) @ a


# --------------------------------------------------------------------------
# Kinematics
# --------------------------------------------------------------------------

def doppler_encounter(omega, vessel: VesselConfig):
    """Encountered frequency omega - (omega^2/g) V cos(beta)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise DomainError("wave frequency must be non-negative")
    out = omega - omega**2 / GRAVITY * vessel.V * cos_heading(vessel.beta)
    return out if out.ndim else float(out)


def inverse_doppler(omega_e, vessel: VesselConfig):
    """Wave frequency whose Doppler-shifted value is ``omega_e``.

    Only headings in [pi/2, pi] are accepted: there the forward map is
    strictly increasing and the positive root is unique.
    """
    check_heading(vessel.beta)
    omega_e = np.asarray(omega_e, dtype=float)
    if np.any(omega_e < 0):
        raise DomainError("encountered frequency must be non-negative")
    c = -vessel.V * cos_heading(vessel.beta) / GRAVITY
    # root of c w^2 + w - we = 0 in the cancellation-free form
    out = 2 * omega_e / (1 + np.sqrt(1 + 4 * c * omega_e))
    return out if out.ndim else float(out)


def doppler_jacobian(omega, vessel: VesselConfig):
    """d(omega_e)/d(omega) = 1 - 2 omega V cos(beta) / g."""
    omega = np.asarray(omega, dtype=float)
    return 1 - 2 * omega * vessel.V * cos_heading(vessel.beta) / GRAVITY


# --------------------------------------------------------------------------
# Hull response coefficients
# --------------------------------------------------------------------------

def _hydro(omega, B, T, V, cb):
    """Vectorised coefficients; ``cb`` is the (snapped) cosine of the heading."""
    k_w = omega**2 / GRAVITY
    alpha = 1 - V * omega / GRAVITY * cb  # V sqrt(k_w/g) == V omega / g
    if np.any(alpha <= 0):
        raise DegenerateKinematicsError("speed correction alpha <= 0")
    a2 = alpha**2
    A_v = 2 * np.sin(k_w * B * a2 / 2) * np.exp(-k_w * T * a2)
    k_e = np.abs(k_w * cb)
    kappa = np.exp(-k_w * T)
    psi = np.sqrt((1 - k_w * T) ** 2 + (A_v**2 / (k_w * B * alpha**3)) ** 2)
    return k_w, alpha, A_v, k_e, kappa, psi


def hydro_coeffs(omega, vessel: VesselConfig) -> HydroCoeffs:
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise DomainError("hydrodynamic coefficients need omega > 0")
    return HydroCoeffs(*_hydro(omega, vessel.B, vessel.T, vessel.V, cos_heading(vessel.beta)))


def _heave_shape(k_e, L):
    u = k_e * L
    small = u < _HEAVE_SINC_EPS
    safe = np.where(small, 1.0, u)
    return np.where(small, 1.0 - u**2 / 24, 2 * np.sin(safe / 2) / safe)


def _pitch_shape(k_e, L):
    u = k_e * L
    x = u / 2
    small = u < _PITCH_SERIES_EPS
    safe_k = np.where(small, 1.0, k_e)
    safe_x = np.where(small, 1.0, x)
    exact = 24 * (np.sin(safe_x) - safe_x * np.cos(safe_x)) / (safe_k**2 * L**3)
    series = k_e * (1 - x**2 / 10 + x**4 / 280)
    return np.where(small, series, exact)


def forcing_heave(omega, vessel: VesselConfig):
    """Heave forcing P_tau = 2 kappa psi sin(k_e L/2)/(k_e L); -> kappa psi as k_e -> 0."""
    h = hydro_coeffs(omega, vessel)
    out = h.kappa * h.psi * _heave_shape(h.k_e, vessel.L)
    return out if np.ndim(out) else float(out)


def forcing_pitch(omega, vessel: VesselConfig):
    """Pitch forcing P_theta (rad per metre of wave amplitude); zero in beam seas."""
    h = hydro_coeffs(omega, vessel)
    out = h.kappa * h.psi * _pitch_shape(h.k_e, vessel.L)
    return out if np.ndim(out) else float(out)


def forcing(omega, vessel: VesselConfig, channel: str):
    if channel == "heave":
        return forcing_heave(omega, vessel)
    if channel == "pitch":
        return forcing_pitch(omega, vessel)
    raise DomainError(f"unknown channel {channel!r}")
