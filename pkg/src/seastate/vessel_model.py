"""Pseudo mass-spring-damper vessel model.

Each regular wave component drives its own single-DoF oscillator

    M x'' + C x' + x = p(t),

whose coefficients depend on the hull parameters eta = [B, T].  The
continuous model is discretised with a first-order hold, the excitation p
is appended to the state with a recursive sinusoid transition, and N such
blocks plus an identity block for eta make up the augmented model used by
the joint estimator.

Two code paths build the discrete blocks: :func:`foh_discretize` (scipy
``expm`` on one system, used as the reference) and :class:`ComponentBank`
(closed-form 2x2 exponentials, vectorised over cubature points and
components).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag, expm

from .errors import DiscretizationError, DomainError
from .wave_env import GRAVITY, VesselConfig, _hydro, component_arrays, cos_heading, doppler_encounter

PHASE_MODES = ("zero", "oracle", "hold")
CHANNELS = ("heave", "pitch")
ETA_DIM = 2
BLOCK = 3

#: Returned by :func:`excitation_factor` when the recursion is singular.
HOLD = "hold"
_TAN_EPS = 1e-6


@dataclass(frozen=True)
class PseudoCoeffs:
    M: float
    C: float


@dataclass(frozen=True)
class ContinuousSS:
    A: np.ndarray
    Bv: np.ndarray
    G: np.ndarray
    Jv: np.ndarray


@dataclass(frozen=True)
class DiscreteRegularBlock:
    A_r: np.ndarray
    G_r: np.ndarray
    omega_e: float
    phase: float


@dataclass(frozen=True)
class AugmentedModel:
    A_full: np.ndarray
    G_full: np.ndarray
    N: int
    eta_dim: int = ETA_DIM


def channel_phase_offset(channel: str) -> float:
    """Pitch excitation leads heave by a quarter period."""
    if channel == "heave":
        return 0.0
    if channel == "pitch":
        return math.pi / 2
    raise DomainError(f"unknown channel {channel!r}")


def _pseudo(omega, B, T, V, cb):
    _, alpha, A_v, _, _, _ = _hydro(omega, B, T, V, cb)
    M = 2 * T / GRAVITY
    C = GRAVITY * A_v**2 / (B * omega**3 * alpha**3)
    return M, C


def pseudo_coeffs(omega, vessel: VesselConfig) -> PseudoCoeffs:
    """Pseudo mass M = 2T/g and damping C = g A_v^2 / (B omega^3 alpha^3)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise DomainError("pseudo coefficients need omega > 0")
    M, C = _pseudo(omega, vessel.B, vessel.T, vessel.V, cos_heading(vessel.beta))
    if np.ndim(C) == 0:
        C = float(C)
    return PseudoCoeffs(M=float(M), C=C)


def continuous_ss(coeffs: PseudoCoeffs) -> ContinuousSS:
    M, C = coeffs.M, float(coeffs.C)
    if not M > 0:
        raise DomainError(f"pseudo mass must be positive, got {M}")
    A = np.array([[0.0, 1.0], [-1 / M, -C / M]])
    Bv = np.array([0.0, 1 / M])
    # row 0 is the position measurement (an all-zero row would make it uninformative)
    G = np.array([[1.0, 0.0], [0.0, 1.0], [-1 / M, -C / M]])
    Jv = np.array([0.0, 0.0, 1 / M])
    return ContinuousSS(A, Bv, G, Jv)


def foh_discretize(ss: ContinuousSS, Ts: float):
    """First-order-hold discretisation.

    Returns ``(A_k, B_k, G_k, J_k)`` for the shifted-state form
    x_k = A_k x_{k-1} + B_k p_{k-1},  y_k = G_k x_k + J_k p_k.
    """
    if not Ts > 0:
        raise DomainError("sampling time must be positive")
    A = ss.A
    if abs(np.linalg.det(A)) < 1e-14 * max(1.0, np.abs(A).max() ** 2):
        raise DiscretizationError("continuous state matrix is singular")
    I = np.eye(A.shape[0])
    A_k = expm(A * Ts)
    A_inv = np.linalg.inv(A)
    A_inv2 = A_inv @ A_inv
    D = A_k - I
    B_k = A_inv2 @ D @ D @ ss.Bv / Ts
    J_k = ss.Jv + ss.G @ ((A_inv2 / Ts) @ D - A_inv) @ ss.Bv
    return A_k, B_k, ss.G.copy(), J_k


def zoh_input(ss: ContinuousSS, Ts: float) -> np.ndarray:
    """Zero-order-hold input vector A^-1 (expm(A Ts) - I) Bv, for comparison."""
    A_k = expm(ss.A * Ts)
    return np.linalg.solve(ss.A, (A_k - np.eye(2)) @ ss.Bv)


def excitation_factor(omega_e: float, k: int, Ts: float, phase: float):
    """Multiplier gamma with p_k = gamma p_{k-1} for p_k = P sin(omega_e k Ts + phase).

    Returns :data:`HOLD` when tan(omega_e (k-1) Ts + phase) is within 1e-6 of
    zero; the caller then keeps p_k = p_{k-1}.
    """
    if not Ts > 0:
        raise DomainError("sampling time must be positive")
    t = math.tan(omega_e * (k - 1) * Ts + phase)
    if abs(t) < _TAN_EPS:
        return HOLD
    return math.cos(omega_e * Ts) + math.sin(omega_e * Ts) / t


def excitation_factors(omega_e: np.ndarray, k: int, Ts: float, phases: np.ndarray) -> np.ndarray:
    """Vectorised :func:`excitation_factor` with HOLD mapped to 1."""
    t = np.tan(omega_e * (k - 1) * Ts + phases)
    hold = np.abs(t) < _TAN_EPS
    safe = np.where(hold, 1.0, t)
    return np.where(hold, 1.0, np.cos(omega_e * Ts) + np.sin(omega_e * Ts) / safe)


def _expm2_companion(a, c, Ts):
    """expm(Ts * [[0, 1], [-a, -c]]) elementwise over broadcast arrays ``a``, ``c``.

    Uses e^{At} = e^{mu t} (f0 I + f1 (A - mu I)) with mu = -c/2, covering the
    under-, over- and critically damped cases.
    """
    a, c = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(c, dtype=float))
    mu = -c / 2
    d = c * c / 4 - a  # discriminant; < 0 when underdamped
    w = np.sqrt(np.abs(d))
    wt = w * Ts
    tiny = wt < 1e-6
    over = (d > 0) & ~tiny
    safe_w = np.where(tiny, 1.0, w)
    e = np.exp(mu * Ts)
    # e * f0 and e * f1 with f0 = cos|cosh(wt), f1 = sin|sinh(wt)/w
    ef0 = np.asarray(e * np.cos(wt), dtype=float).copy()
    ef1 = np.asarray(e * np.sin(wt) / safe_w, dtype=float).copy()
    if np.any(over):
        # two decaying exponentials; mu + w = -a / (c/2 + w) avoids cancellation
        r1 = -a[over] / (c[over] / 2 + w[over])
        r2 = mu[over] - w[over]
        e1 = np.exp(r1 * Ts)
        e2 = np.exp(r2 * Ts)
        ef0[over] = 0.5 * (e1 + e2)
        ef1[over] = 0.5 * (e1 - e2) / w[over]
    ef0 = np.where(tiny, e * (1 + d * Ts**2 / 2), ef0)
    ef1 = np.where(tiny, e * Ts * (1 + d * Ts**2 / 6), ef1)
    out = np.empty(a.shape + (2, 2))
    out[..., 0, 0] = ef0 - mu * ef1
    out[..., 0, 1] = ef1
    out[..., 1, 0] = -a * ef1
    out[..., 1, 1] = ef0 + (-c - mu) * ef1
    return out


def foh_closed_form(M, C, Ts):
    """Closed-form FOH blocks for the normalised oscillator, broadcast over M and C.

    Returns ``A_k (...,2,2)``, ``B_k (...,2)``, ``Gacc (...,2)``, ``J_k (...,3)``
    where ``Gacc`` is the acceleration row of G (rows 0 and 1 are constant).
    """
    M, C = np.broadcast_arrays(np.asarray(M, dtype=float), np.asarray(C, dtype=float))
    a = 1 / M
    c = C / M
    A_k = _expm2_companion(a, c, Ts)
    D = A_k.copy()
    D[..., 0, 0] -= 1
    D[..., 1, 1] -= 1
    # A^-2 Bv = [C, -1] and A^-1 Bv = [-1, 0] for this companion form
    v = np.stack([C, -np.ones_like(C)], axis=-1)
    Dv = np.einsum("...ij,...j->...i", D, v)
    B_k = np.einsum("...ij,...j->...i", D, Dv) / Ts
    gamma2 = Dv / Ts
    gamma2[..., 0] += 1
    Gacc = np.stack([-a, -c], axis=-1)
    J_k = np.empty(M.shape + (3,))
    J_k[..., 0] = gamma2[..., 0]
    J_k[..., 1] = gamma2[..., 1]
    J_k[..., 2] = a + np.einsum("...i,...i->...", Gacc, gamma2)
    return A_k, B_k, Gacc, J_k


class ComponentBank:
    """Discrete regular blocks for a fixed set of wave frequencies.

    Evaluates the eta-dependent FOH blocks for many parameter vectors at
    once and supplies the step-dependent excitation multipliers.
    """

    def __init__(self, omegas, vessel: VesselConfig, Ts: float, channel: str = "heave",
                 phase_mode: str = "zero", phases=None):
        if phase_mode not in PHASE_MODES:
            raise DomainError(f"phase_mode must be one of {PHASE_MODES}")
        if not Ts > 0:
            raise DomainError("sampling time must be positive")
        self.omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        self.vessel = vessel
        self.Ts = float(Ts)
        self.channel = channel
        self.phase_mode = phase_mode
        self.omega_e = np.atleast_1d(doppler_encounter(self.omegas, vessel))
        offset = channel_phase_offset(channel)
        if phase_mode == "oracle":
            if phases is None:
                raise DomainError("oracle phase mode needs the true component phases")
            self.phases = np.asarray(phases, dtype=float) + offset
        else:
            self.phases = np.full(self.omegas.size, offset)
        self._cb = cos_heading(vessel.beta)

    @property
    def N(self) -> int:
        return self.omegas.size

    @property
    def state_dim(self) -> int:
        return BLOCK * self.N + ETA_DIM

    def coefficients(self, B, T):
        """(M, C) for arrays of B, T (shape (P,)); C has shape (P, N)."""
        B = np.atleast_1d(np.asarray(B, dtype=float))
        T = np.atleast_1d(np.asarray(T, dtype=float))
        if np.any(B <= 0) or np.any(T <= 0):
            raise DomainError("hull parameters must be positive")
        M, C = _pseudo(self.omegas[None, :], B[:, None], T[:, None], self.vessel.V, self._cb)
        return M, C

    def blocks(self, B, T):
        """FOH blocks for each (B, T) pair; leading shape (P, N)."""
        M, C = self.coefficients(B, T)
        M = np.broadcast_to(M, C.shape)
        return foh_closed_form(M, C, self.Ts)

    def gammas(self, k: int) -> np.ndarray:
        if self.phase_mode == "hold":
            return np.ones(self.N)
        return excitation_factors(self.omega_e, k, self.Ts, self.phases)

    def propagate(self, X: np.ndarray, k: int, blocks=None) -> np.ndarray:
        """Apply A_k(eta_j) to each row x_j of ``X`` (shape (P, 3N+2)).

        eta is read from the last two entries of each row unless
        ``blocks`` (from :meth:`blocks`) is supplied.
        """
        N = self.N
        if blocks is None:
            blocks = self.blocks(X[:, -2], X[:, -1])
        A_k, B_k = blocks[0], blocks[1]
        comp = X[:, : BLOCK * N].reshape(-1, N, BLOCK)
        xs, p = comp[..., :2], comp[..., 2]
        new = np.empty_like(comp)
        new[..., :2] = np.einsum("pnij,pnj->pni", A_k, xs) + B_k * p[..., None]
        new[..., 2] = self.gammas(k) * p
        out = np.empty_like(X)
        out[:, : BLOCK * N] = new.reshape(X.shape[0], -1)
        out[:, BLOCK * N:] = X[:, BLOCK * N:]
        return out

    def measure(self, X: np.ndarray, k: int | None = None, blocks=None) -> np.ndarray:
        """Apply G_k(eta_j) to each row of ``X``; returns shape (P, 3)."""
        N = self.N
        if blocks is None:
            blocks = self.blocks(X[:, -2], X[:, -1])
        Gacc, J_k = blocks[2], blocks[3]
        comp = X[:, : BLOCK * N].reshape(-1, N, BLOCK)
        xs, p = comp[..., :2], comp[..., 2]
        y = J_k * p[..., None]
        y[..., 0] += xs[..., 0]
        y[..., 1] += xs[..., 1]
        y[..., 2] += np.einsum("pni,pni->pn", Gacc, xs)
        return y.sum(axis=1)

    def dense(self, eta, k: int) -> AugmentedModel:
        """Dense augmented (A_full, G_full) at one parameter vector."""
        eta = np.asarray(eta, dtype=float)
        A_k, B_k, Gacc, J_k = (b[0] for b in self.blocks(eta[0:1], eta[1:2]))
        gam = self.gammas(k)
        N = self.N
        A_blocks, G_blocks = [], []
        for n in range(N):
            Ar = np.zeros((3, 3))
            Ar[:2, :2] = A_k[n]
            Ar[:2, 2] = B_k[n]
            Ar[2, 2] = gam[n]
            A_blocks.append(Ar)
            Gr = np.zeros((3, 3))
            Gr[0, 0] = 1.0
            Gr[1, 1] = 1.0
            Gr[2, :2] = Gacc[n]
            Gr[:, 2] = J_k[n]
            G_blocks.append(Gr)
        A_full = block_diag(*A_blocks, np.eye(ETA_DIM))
        G_full = np.hstack(G_blocks + [np.zeros((3, ETA_DIM))])
        return AugmentedModel(A_full, G_full, N)


def regular_block(omega: float, vessel: VesselConfig, Ts: float, k: int, phase: float) -> DiscreteRegularBlock:
    """Single regular-wave block built through the scipy ``expm`` path."""
    ss = continuous_ss(pseudo_coeffs(omega, vessel))
    A_k, B_k, G_k, J_k = foh_discretize(ss, Ts)
    omega_e = float(doppler_encounter(omega, vessel))
    gam = excitation_factor(omega_e, k, Ts, phase)
    A_r = np.zeros((3, 3))
    A_r[:2, :2] = A_k
    A_r[:2, 2] = B_k
    A_r[2, 2] = 1.0 if gam is HOLD else gam
    G_r = np.hstack([G_k, J_k[:, None]])
    return DiscreteRegularBlock(A_r, G_r, omega_e, phase)


def assemble_augmented(eta, components, vessel: VesselConfig, Ts: float, k: int,
                       channel: str = "heave", phase_mode: str = "zero") -> AugmentedModel:
    """Block-diagonal augmented model at parameter vector ``eta = [B, T]``.

    ``components`` is a list of :class:`~seastate.wave_env.WaveComponent`
    (phases are only used in ``"oracle"`` mode).
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (ETA_DIM,) or np.any(~np.isfinite(eta)) or np.any(eta <= 0):
        raise DomainError(f"non-physical parameter vector {eta}")
    omegas, _, phases = component_arrays(components)
    bank = ComponentBank(omegas, vessel, Ts, channel, phase_mode, phases)
    return bank.dense(eta, k)
