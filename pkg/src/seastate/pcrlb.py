"""Posterior Cramer-Rao lower bound for the augmented wave-vessel system.

For x_k = f(x_{k-1}) + w_k, y_k = h(x_k) + r_k with Gaussian noise the
Fisher information obeys

    J_k = D22 - D21 (J_{k-1} + D11)^-1 D12,
    D11 = F^T Q^-1 F,  D12 = -F^T Q^-1,  D22 = Q^-1 + H^T R^-1 H,

with F, H the Jacobians along the true trajectory.  :func:`info_recursion`
implements this form literally.  :func:`run_bound` propagates the same
quantity as a covariance, P_k = J_k^-1, through the algebraically
equivalent Riccati recursion: the parameter noise Q_eta is tiny, so the
information form needs inverses with condition numbers far beyond what
double precision resolves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConditioningError, DomainError
from .vessel_model import BLOCK, ETA_DIM, ComponentBank
from .wave_env import cos_heading

COND_MAX = 1e12


@dataclass(frozen=True)
class InfoMatrix:
    J: np.ndarray

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise DomainError("information matrix must be square")
        object.__setattr__(self, "J", 0.5 * (J + J.T))

    @property
    def dim(self) -> int:
        return self.J.shape[0]


@dataclass
class BoundTrace:
    """Per-step excitation bound (variance) and the diagonal of J^-1."""

    t: np.ndarray
    bound: np.ndarray
    diag_inv: np.ndarray
    channel: str = "heave"
    meta: dict = field(default_factory=dict)

    @property
    def sqrt_bound(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.bound, 0.0))

    def __len__(self):
        return self.bound.size

    def to_csv(self, path, rmse=None) -> Path:
        """Columns step, time, rmse_available_flag, sqrt_bound (and rmse when given)."""
        path = Path(path)
        K = len(self)
        cols = [np.arange(1, K + 1), self.t, np.zeros(K) if rmse is None else np.ones(K), self.sqrt_bound]
        header = "step,time,rmse_available_flag,sqrt_bound"
        fmt = ["%d", "%.6f", "%d", "%.10g"]
        if rmse is not None:
            cols.append(np.asarray(rmse, dtype=float))
            header += ",rmse"
            fmt.append("%.10g")
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt=fmt)
        return path


def _chol(M, what):
    M = 0.5 * (M + M.T)
    try:
        cf = cho_factor(M, lower=True)
    except np.linalg.LinAlgError:
        raise ConditioningError(f"{what} is not positive definite") from None
    d = np.abs(np.diagonal(cf[0]))
    if d.min() == 0 or (d.max() / d.min()) ** 2 > COND_MAX:
        raise ConditioningError(f"{what} is too ill-conditioned to invert (cond > {COND_MAX:.0e})")
    return cf


def _inv(M, what):
    cf = _chol(M, what)
    out = cho_solve(cf, np.eye(M.shape[0]))
    return 0.5 * (out + out.T)


def info_init(sigma0) -> InfoMatrix:
    """J_0 = Sigma_0^-1."""
    sigma0 = np.atleast_2d(np.asarray(sigma0, dtype=float))
    return InfoMatrix(_inv(sigma0, "initial covariance"))


def info_recursion(J_prev: InfoMatrix, A, G, Q, R) -> InfoMatrix:
    """One step of the information recursion with Jacobians ``A`` (transition) and ``G`` (measurement).

    ``G`` may be empty (shape (0, n)) for a step without measurements.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    G = np.asarray(G, dtype=float).reshape(-1, A.shape[0])
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Qi = _inv(Q, "process covariance")
    D11 = A.T @ Qi @ A
    D12 = -A.T @ Qi
    D22 = Qi.copy()
    if G.shape[0]:
        D22 += G.T @ _inv(R, "measurement covariance") @ G
    cf = _chol(J_prev.J + D11, "J_{k-1} + F^T Q^-1 F")
    return InfoMatrix(D22 - D12.T @ cho_solve(cf, D12))


def excitation_selector(N: int, dim: int | None = None) -> np.ndarray:
    """Indicator of the excitation rows 3n (1-based), n = 1..N."""
    dim = BLOCK * N if dim is None else dim
    if dim < BLOCK * N:
        raise DomainError("state dimension too small for N components")
    e = np.zeros(dim)
    e[BLOCK - 1:BLOCK * N:BLOCK] = 1.0
    return e


def excitation_bound(J: InfoMatrix, N: int) -> float:
    """sum_n sum_m [J^-1]_{3n,3m}: the bound on the summed excitation."""
    e = excitation_selector(N, J.dim)
    cf = _chol(J.J, "information matrix")
    return float(e @ cho_solve(cf, e))


# --------------------------------------------------------------------------
# Bound along a synthetic trajectory
# --------------------------------------------------------------------------

def _jacobians(bank: ComponentBank, eta, x, k, d_rel=1e-6):
    """F = d f/d[x, eta] and H = d h/d[x, eta] at one true state."""
    model = bank.dense(eta, k)
    F = model.A_full.copy()
    H = model.G_full.copy()
    n = F.shape[0]
    X = np.tile(np.concatenate([x, eta]), (2 * ETA_DIM, 1))
    steps = d_rel * np.abs(eta)
    for i in range(ETA_DIM):
        X[2 * i, n - ETA_DIM + i] += steps[i]
        X[2 * i + 1, n - ETA_DIM + i] -= steps[i]
    fx = bank.propagate(X, k)
    hx = bank.measure(X, k)
    for i in range(ETA_DIM):
        F[:n - ETA_DIM, n - ETA_DIM + i] = (fx[2 * i, :n - ETA_DIM] - fx[2 * i + 1, :n - ETA_DIM]) / (2 * steps[i])
        H[:, n - ETA_DIM + i] = (hx[2 * i] - hx[2 * i + 1]) / (2 * steps[i])
    return F, H


def covariance_step(P, F, H, Q, R):
    """Riccati step for P = J^-1: predict with (F, Q), update with (H, R)."""
    Pp = F @ P @ F.T + Q
    Pp = 0.5 * (Pp + Pp.T)
    if H.shape[0] == 0:
        return Pp
    S = H @ Pp @ H.T + R
    cf = _chol(S, "innovation covariance")
    K = cho_solve(cf, H @ Pp).T
    I_KH = np.eye(P.shape[0]) - K @ H
    P = I_KH @ Pp @ I_KH.T + K @ R @ K.T
    return 0.5 * (P + P.T)


def run_bound(truth, grid, Q, R, sigma0, channel: str = "heave", vessel=None, drop_rows=()) -> BoundTrace | None:
    """Excitation bound along ``truth`` for the components of ``grid``.

    Jacobians use the true parameters, the true phases and the true
    component states (restricted to ``grid``).  ``vessel`` supplies the
    geometry (defaults to the truth vessel).  ``drop_rows`` removes
    measurement rows (0 position, 1 velocity, 2 acceleration).  Returns
    ``None`` when the channel's true excitation is identically zero, where
    the bound is undefined.
    """
    vessel = truth.vessel if vessel is None else vessel.with_eta(truth.vessel.eta)
    if channel == "pitch" and cos_heading(vessel.beta) == 0.0:
        return None
    if not np.any(truth.excitation[channel]):
        return None
    from .wave_env import component_arrays

    omegas, _, phases = component_arrays(truth.components)
    idx = _match(omegas, grid.omegas)
    bank = ComponentBank(grid.omegas, vessel, truth.Ts, channel, "oracle", phases[idx])
    eta = truth.vessel.eta
    N = len(grid)
    n = BLOCK * N + ETA_DIM
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    keep = [i for i in range(3) if i not in set(drop_rows)]
    R = R[np.ix_(keep, keep)]
    P = np.asarray(sigma0, dtype=float).copy()
    if P.shape != (n, n) or Q.shape != (n, n):
        raise DomainError(f"sigma0 and Q must be {n}x{n}")
    _chol(P, "initial covariance")
    e = excitation_selector(N, n)
    states = truth.states[channel][:, idx, :].reshape(truth.K + 1, -1)
    K = truth.K
    bound = np.empty(K)
    diag = np.empty((K, n))
    for k in range(1, K + 1):
        F, _ = _jacobians(bank, eta, states[k - 1], k)
        _, H = _jacobians(bank, eta, states[k], k)
        try:
            P = covariance_step(P, F, H[keep], Q, R)
        except ConditioningError as exc:
            raise ConditioningError(f"{exc} [step={k}]") from None
        bound[k - 1] = e @ P @ e
        diag[k - 1] = np.diagonal(P)
    return BoundTrace(truth.t[1:], bound, diag, channel)


def _match(source, target):
    source = np.asarray(source, dtype=float)
    idx = np.array([int(np.argmin(np.abs(source - w))) for w in np.atleast_1d(target)], dtype=int)
    if idx.size and np.max(np.abs(source[idx] - target)) > 1e-9:
        raise DomainError("bound grid is not a subset of the truth components")
    return idx


def initial_covariance(cfg, N: int) -> np.ndarray:
    """Sigma_0 matching the filters' prior: init_var per component state, eta_var for eta."""
    return np.diag(np.concatenate([np.full(BLOCK * N, cfg.filter.init_var), cfg.filter.eta_var]))


def bound_for_scenario(truth, stream, cfg, channel: str = "heave", setup=None) -> BoundTrace | None:
    """:func:`run_bound` with Q, R and Sigma_0 taken from the filter set-up for ``stream``."""
    from .estimators import build_setup

    setup = setup or build_setup(stream, cfg)
    if channel not in setup.channels:
        return None
    sQ = setup.sqrt_Q[channel]
    return run_bound(truth, setup.grid, sQ @ sQ.T, setup.noise[channel].R,
                     initial_covariance(cfg, len(setup.grid)), channel, vessel=setup.vessel)
