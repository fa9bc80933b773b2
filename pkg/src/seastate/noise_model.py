"""Process- and measurement-noise configuration.

The process covariance of every regular block is a worst-case bound on the
one-step modelling error of position, velocity and excitation; it is
tuned afterwards with two knobs, the velocity scale ``lam`` and the
maximum acceleration ``a_max``, by replaying a measurement record and
watching the normalised innovation squared (NIS).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import block_diag, solve_triangular

from .errors import ConditioningError, DomainError
from .vessel_model import _pseudo
from .wave_env import GRAVITY, FrequencyGrid, VesselConfig, cos_heading, doppler_encounter

DEFAULT_Q_ETA = np.diag([1e-12, 1e-13])

#: Measurement covariances of the synthetic study, per channel.
R_HEAVE = np.diag([1.53, 1.79, 8.40]) * 1e-4
R_PITCH = np.diag([8.95, 2.25, 8.40]) * 1e-6
#: Covariances used for the high-fidelity (external) records.
R_HEAVE_HIFI = np.diag([1.68, 1.68, 1.68]) * 1e-5
R_PITCH_HIFI = np.diag([2.38, 2.38, 2.38]) * 1e-7


@dataclass(frozen=True)
class NoiseConfig:
    """Noise settings of one motion channel.

    ``lam`` scales the velocity uncertainty (initialised to Ts/M);
    ``a_max``, ``xdot_prior`` and ``x_prior`` are maximum magnitudes of
    acceleration, velocity and position taken from a measurement sample.
    """

    lam: float
    a_max: float
    x_prior: float
    xdot_prior: float
    Q_eta: np.ndarray = field(default_factory=lambda: DEFAULT_Q_ETA.copy())
    R: np.ndarray = field(default_factory=lambda: R_HEAVE.copy())

    def __post_init__(self):
        for name in ("lam", "a_max", "x_prior", "xdot_prior"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        Q_eta = np.asarray(self.Q_eta, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if np.any(np.linalg.eigvalsh(R) < 0) or np.any(np.linalg.eigvalsh(Q_eta) < 0):
            raise DomainError("noise covariances must be positive semi-definite")
        object.__setattr__(self, "Q_eta", Q_eta)
        object.__setattr__(self, "R", R)

    @classmethod
    def from_sample(cls, y: np.ndarray, Ts: float, eta0, R=None, window_s: float = 10.0, **kw) -> "NoiseConfig":
        """Priors from the maximum magnitudes in the first ``window_s`` seconds.

        ``y`` has columns (position, velocity, acceleration); ``eta0`` gives the
        nominal [B, T] at which lam = Ts/M is evaluated.
        """
        y = np.asarray(y, dtype=float)
        if y.ndim != 2 or y.shape[1] != 3 or len(y) == 0:
            raise DomainError("measurement sample must be a non-empty (K, 3) array")
        n = max(1, min(len(y), int(round(window_s / Ts))))
        head = np.abs(y[:n])
        M = 2 * float(eta0[1]) / GRAVITY
        return cls(
            lam=Ts / M,
            a_max=float(head[:, 2].max()),
            x_prior=float(head[:, 0].max()),
            xdot_prior=float(head[:, 1].max()),
            R=R_HEAVE if R is None else R,
            **kw,
        )


@dataclass(frozen=True)
class ProcessCov:
    Q_full: np.ndarray

    @property
    def sqrt(self) -> np.ndarray:
        """Lower-triangular square root; exact for the diagonal blocks used here."""
        Q = self.Q_full
        if np.count_nonzero(Q - np.diag(np.diagonal(Q))) == 0:
            return np.diag(np.sqrt(np.diagonal(Q)))
        return np.linalg.cholesky(Q)

    def without_eta(self) -> "ProcessCov":
        n = self.Q_full.shape[0] - 2
        return ProcessCov(self.Q_full[:n, :n])


def excitation_amplitude_prior(omega, eta0, cfg: NoiseConfig, vessel: VesselConfig):
    """Worst-case excitation amplitude M a_max + C(omega) xdot + x at eta0."""
    omega = np.asarray(omega, dtype=float)
    M, C = _pseudo(omega, float(eta0[0]), float(eta0[1]), vessel.V, cos_heading(vessel.beta))
    out = M * cfg.a_max + C * cfg.xdot_prior + cfg.x_prior
    return out if np.ndim(out) else float(out)


def excitation_uncertainty(omega_e, p_amp, Ts: float):
    """Worst-case one-step excitation change 2 p~ sin(omega_e Ts / 2)."""
    return 2 * np.asarray(p_amp) * np.sin(np.asarray(omega_e) * Ts / 2)


def regular_process_cov(omega_e: float, p_amp: float, cfg: NoiseConfig, Ts: float) -> np.ndarray:
    """diag([(a_max Ts^2/2)^2, (lam dp)^2, dp^2]) for one regular block."""
    if not Ts > 0:
        raise DomainError("sampling time must be positive")
    dp = float(excitation_uncertainty(omega_e, p_amp, Ts))
    dx = 0.5 * cfg.a_max * Ts**2
    return np.diag([dx**2, (cfg.lam * dp) ** 2, dp**2])


def assemble_process_cov(grid: FrequencyGrid, eta0, cfg: NoiseConfig, Ts: float,
                         vessel: VesselConfig, include_eta: bool = True) -> ProcessCov:
    """blkdiag(Q_r(omega_1), ..., Q_r(omega_N), Q_eta)."""
    omega_e = np.atleast_1d(doppler_encounter(grid.omegas, vessel))
    p_amp = np.atleast_1d(excitation_amplitude_prior(grid.omegas, eta0, cfg, vessel))
    blocks = [regular_process_cov(we, pa, cfg, Ts) for we, pa in zip(omega_e, p_amp)]
    if include_eta:
        blocks.append(cfg.Q_eta)
    return ProcessCov(block_diag(*blocks))


def nis(innovation, S_yy) -> float:
    """nu^T (S S^T)^-1 nu using one triangular solve with the lower factor S."""
    nu = np.asarray(innovation, dtype=float)
    S = np.asarray(S_yy, dtype=float)
    if S.shape != (nu.size, nu.size):
        raise DomainError("innovation and its square-root covariance disagree in size")
    d = np.abs(np.diagonal(S))
    if not np.all(np.isfinite(S)) or d.min() <= 1e-300 or d.min() < 1e-15 * d.max():
        raise ConditioningError("innovation covariance factor is singular")
    z = solve_triangular(S, nu, lower=True)
    return float(z @ z)


@dataclass
class TuneStep:
    lam: float
    a_max: float
    mean_nis: float


def tune(replay: Callable[[NoiseConfig], np.ndarray], cfg: NoiseConfig, *, meas_dim: int = 3,
         rel_tol: float = 0.05, max_iter: int = 6, log: list | None = None) -> NoiseConfig:
    """Grid-search ``lam`` and ``a_max`` on a replayed record.

    ``replay(cfg)`` runs the filter over the same measurements and returns
    its NIS sequence; the score is the mean NIS over the final third.
    Each iteration tries factors 10^j (j in -1, 0, 1) on both knobs around
    the current point and moves to the lowest score.  Iteration stops when
    the score is below ``meas_dim`` or improves by less than ``rel_tol``.
    Accepted scores are appended to ``log`` as :class:`TuneStep`.
    """
    def score(c):
        seq = np.asarray(replay(c), dtype=float)
        if seq.size == 0:
            raise DomainError("replay returned an empty NIS sequence")
        tail = seq[-max(1, seq.size // 3):]
        val = float(np.mean(tail))
        return val if math.isfinite(val) else math.inf

    best = score(cfg)
    if log is not None:
        log.append(TuneStep(cfg.lam, cfg.a_max, best))
    for _ in range(max_iter):
        if best < meas_dim:
            break
        candidates = [
            replace(cfg, lam=cfg.lam * 10.0**i, a_max=cfg.a_max * 10.0**j)
            for i in (-1, 0, 1) for j in (-1, 0, 1) if (i, j) != (0, 0)
        ]
        scored = []
        for c in candidates:
            try:
                scored.append((score(c), c))
            except ArithmeticError:
                # a diverging candidate simply loses
                continue
        if not scored:
            break
        val, cand = min(scored, key=lambda sc: sc[0])
        if not val < best:
            break
        improvement = (best - val) / best
        cfg, best = cand, val
        if log is not None:
            log.append(TuneStep(cfg.lam, cfg.a_max, best))
        if improvement < rel_tol:
            break
    return cfg

