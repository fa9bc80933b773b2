"""Square-root cubature Kalman filter for joint input-state-parameter
estimation, heave-to-pitch parameter fusion, and the linear Kalman
filter baseline that is handed the true hull parameters.

A *model* passed to :func:`srckf_step` is any object with

* ``propagate(X, k) -> X'``  mapping a stack of state points (rows) through
  the transition of step ``k``;
* ``measure(X, k) -> Y``     mapping a stack of points to measurements.

:class:`~seastate.vessel_model.ComponentBank` implements both for the
augmented wave-vessel state; :class:`LinearModel` wraps fixed matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import ConditioningError, DivergenceError, DomainError
from .noise_model import nis as nis_stat

NIS_LIMIT = 1e6


@dataclass(frozen=True)
class GaussianBelief:
    """Mean and lower-triangular square root S of the covariance S S^T."""

    mean: np.ndarray
    sqrt_cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).copy()
        S = np.asarray(self.sqrt_cov, dtype=float).copy()
        if S.shape != (mean.size, mean.size):
            raise DomainError("square-root covariance does not match the mean")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sqrt_cov", S)

    @classmethod
    def from_cov(cls, mean, cov) -> "GaussianBelief":
        return cls(mean, psd_sqrt(np.asarray(cov, dtype=float)))

    @property
    def cov(self) -> np.ndarray:
        return self.sqrt_cov @ self.sqrt_cov.T

    @property
    def dim(self) -> int:
        return self.mean.size

    def with_eta(self, eta) -> "GaussianBelief":
        """Copy with the trailing parameter entries of the mean replaced."""
        eta = np.asarray(eta, dtype=float)
        mean = self.mean.copy()
        mean[-eta.size:] = eta
        return GaussianBelief(mean, self.sqrt_cov)


@dataclass(frozen=True)
class CubatureSet:
    """Third-degree spherical-radial points sqrt(n) (+/- e_i), weight 1/(2n)."""

    points: np.ndarray
    weight: float

    @property
    def n(self) -> int:
        return self.points.shape[1]


def cubature_points(n: int) -> CubatureSet:
    if n < 1:
        raise DomainError("cubature rule needs dimension >= 1")
    eye = np.sqrt(n) * np.eye(n)
    return CubatureSet(np.vstack([eye, -eye]), 1.0 / (2 * n))


def triangularize(rect: np.ndarray) -> np.ndarray:
    """Lower-triangular S (non-negative diagonal) with S S^T = rect rect^T."""
    rect = np.asarray(rect, dtype=float)
    m = rect.shape[0]
    R = np.linalg.qr(rect.T, mode="r")
    if R.shape[0] < m:
        R = np.vstack([R, np.zeros((m - R.shape[0], m))])
    S = R.T
    signs = np.where(np.diagonal(S) < 0, -1.0, 1.0)
    return S * signs


def psd_sqrt(P: np.ndarray) -> np.ndarray:
    """Lower-triangular square root of a symmetric PSD matrix.

    Cholesky when possible; otherwise an eigen-square-root re-triangularised.
    """
    P = 0.5 * (P + P.T)
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(P)
        if w.min() < -1e-9 * max(1.0, abs(w.max())):
            raise ConditioningError("covariance is not positive semi-definite")
        return triangularize(V * np.sqrt(np.clip(w, 0.0, None)))


class LinearModel:
    """Fixed (or step-indexed) transition ``A`` and measurement ``G``."""

    def __init__(self, A, G):
        self._A = A
        self._G = G

    def A(self, k):
        return self._A(k) if callable(self._A) else self._A

    def G(self, k):
        return self._G(k) if callable(self._G) else self._G

    def propagate(self, X, k):
        return X @ self.A(k).T

    def measure(self, X, k):
        return X @ self.G(k).T


def reflect_into_box(X: np.ndarray, lo, hi, floor: float = 1e-6) -> np.ndarray:
    """Fold the trailing parameter columns of ``X`` back into (lo, hi].

    Points leaving the box are mirrored at its walls (repeatedly, i.e. a
    triangle-wave fold) and finally kept at least ``floor`` above ``lo``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    m = lo.size
    eta = X[:, -m:]
    if np.all((eta > lo) & (eta <= hi)):
        return X
    width = hi - lo
    u = np.mod(eta - lo, 2 * width)
    folded = lo + np.where(u > width, 2 * width - u, u)
    folded = np.maximum(folded, lo + floor * width)
    out = X.copy()
    out[:, -m:] = folded
    return out


@dataclass(frozen=True)
class StepResult:
    belief: GaussianBelief
    innovation: np.ndarray
    nis: float
    y_pred: np.ndarray
    sqrt_innov_cov: np.ndarray


def _spread(mean, S, cset):
    # rows: mean + S xi_j
    return mean + cset.points @ S.T


def srckf_step(belief: GaussianBelief, y, model, k: int, sqrt_Q: np.ndarray, sqrt_R: np.ndarray,
               constrain=None, channel: str | None = None) -> StepResult:
    """One time and measurement update of the square-root CKF.

    ``sqrt_Q`` and ``sqrt_R`` are lower-triangular factors of the process
    and measurement covariances.  ``constrain`` (optional) maps a stack of
    cubature points to admissible points before they enter the model.
    """
    y = np.asarray(y, dtype=float)
    n = belief.dim
    cset = cubature_points(n)
    scale = 1.0 / math.sqrt(2 * n)

    # time update
    X = _spread(belief.mean, belief.sqrt_cov, cset)
    if constrain is not None:
        X = constrain(X)
    Xp = model.propagate(X, k)
    x_pred = Xp.mean(axis=0)
    X_e = (Xp - x_pred).T * scale
    S_pred = triangularize(np.hstack([X_e, sqrt_Q]))

    # measurement update
    Xm = _spread(x_pred, S_pred, cset)
    if constrain is not None:
        Xm = constrain(Xm)
    Y = model.measure(Xm, k)
    y_pred = Y.mean(axis=0)
    Y_e = (Y - y_pred).T * scale
    S_yy = triangularize(np.hstack([Y_e, sqrt_R]))
    Xm_e = (Xm - x_pred).T * scale
    P_xy = Xm_e @ Y_e.T

    d = np.abs(np.diagonal(S_yy))
    if not np.all(np.isfinite(S_yy)) or d.min() < 1e-15 * max(d.max(), 1e-300):
        raise ConditioningError(f"singular innovation covariance at step {k}")
    # L = (P_xy / S_yy^T) / S_yy, via two triangular solves
    Z = solve_triangular(S_yy, P_xy.T, lower=True)
    L = solve_triangular(S_yy.T, Z, lower=False).T

    nu = y - y_pred
    mean = x_pred + L @ nu
    S = triangularize(np.hstack([Xm_e - L @ Y_e, L @ sqrt_R]))
    stat = nis_stat(nu, S_yy)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(S))) or stat > NIS_LIMIT:
        raise DivergenceError(f"SRCKF diverged (NIS={stat:.3g})", step=k, channel=channel)
    return StepResult(GaussianBelief(mean, S), nu, stat, y_pred, S_yy)


def kf_step(belief: GaussianBelief, y, A: np.ndarray, G: np.ndarray, Q: np.ndarray, R: np.ndarray,
            k: int | None = None, channel: str | None = None) -> StepResult:
    """Covariance-form linear Kalman predict/update (Joseph-stabilised)."""
    y = np.asarray(y, dtype=float)
    P = belief.cov
    x_pred = A @ belief.mean
    P_pred = A @ P @ A.T + Q
    y_pred = G @ x_pred
    S_y = G @ P_pred @ G.T + R
    S_y = 0.5 * (S_y + S_y.T)
    try:
        cf = cho_factor(S_y, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"singular innovation covariance at step {k}") from exc
    K = cho_solve(cf, G @ P_pred.T).T
    nu = y - y_pred
    mean = x_pred + K @ nu
    I_KG = np.eye(P.shape[0]) - K @ G
    P_post = I_KG @ P_pred @ I_KG.T + K @ R @ K.T
    S_yy = np.tril(cf[0])
    stat = nis_stat(nu, S_yy)
    if not np.all(np.isfinite(mean)) or stat > NIS_LIMIT:
        raise DivergenceError(f"KF diverged (NIS={stat:.3g})", step=k, channel=channel)
    return StepResult(GaussianBelief(mean, psd_sqrt(P_post)), nu, stat, y_pred, S_yy)


@dataclass
class ChannelModel:
    """Everything the SRCKF needs for one motion channel."""

    model: object
    sqrt_Q: np.ndarray
    sqrt_R: np.ndarray
    constrain: object = None
    name: str = "heave"

    def step(self, belief, y, k):
        try:
            return srckf_step(belief, y, self.model, k, self.sqrt_Q, self.sqrt_R, self.constrain, self.name)
        except ConditioningError as exc:
            raise ConditioningError(f"{exc} [channel={self.name}]") from exc


def fuse_step(heave_belief: GaussianBelief, pitch_belief: GaussianBelief, y_heave, y_pitch,
              heave: ChannelModel, pitch: ChannelModel, k: int, eta_dim: int = 2, share_cov: bool = False):
    """Heave-then-pitch SRCKF with parameter hand-over.

    The heave prior takes the pitch posterior parameters, then the pitch
    prior takes the fresh heave posterior parameters.  Only the means are
    handed over unless ``share_cov`` is set, in which case the parameter
    block of the square-root covariance is copied as well.
    """
    hb = _handover(heave_belief, pitch_belief, eta_dim, share_cov)
    h_res = heave.step(hb, y_heave, k)
    pb = _handover(pitch_belief, h_res.belief, eta_dim, share_cov)
    p_res = pitch.step(pb, y_pitch, k)
    return h_res, p_res


def _handover(target: GaussianBelief, source: GaussianBelief, m: int, share_cov: bool) -> GaussianBelief:
    out = target.with_eta(source.mean[-m:])
    if not share_cov:
        return out
    P = out.cov
    P[-m:, -m:] = source.cov[-m:, -m:]
    P[-m:, :-m] = 0.0
    P[:-m, -m:] = 0.0
    return GaussianBelief.from_cov(out.mean, P)


# --------------------------------------------------------------------------
# Traces
# --------------------------------------------------------------------------

@dataclass
class ChannelTrace:
    """Per-step record of one channel's filter."""

    mean: np.ndarray          # (K, n)
    variance: np.ndarray      # (K, n) marginal posterior variances
    excitation: np.ndarray    # (K,) sum of component excitations
    excitation_var: np.ndarray
    innovation: np.ndarray    # (K, 3)
    nis: np.ndarray           # (K,)
    y_pred: np.ndarray        # (K, 3)
    final: GaussianBelief | None = None
    n_components: int = 0
    has_eta: bool = True

    @property
    def eta(self) -> np.ndarray | None:
        return self.mean[:, -2:] if self.has_eta else None

    def __len__(self):
        return self.nis.size


@dataclass
class EstimateTrace:
    t: np.ndarray
    channels: dict = field(default_factory=dict)
    mode: str = "srckf"

    def __len__(self):
        return self.t.size

    @property
    def eta(self) -> np.ndarray | None:
        """Parameter trace of the last channel updated in each step (pitch if fused)."""
        for name in ("pitch", "heave"):
            ch = self.channels.get(name)
            if ch is not None and ch.has_eta:
                return ch.eta
        return None

    def to_csv(self, path):
        """Per-step table: time, then excitation, its sd and NIS per channel, then B and T."""
        from pathlib import Path

        path = Path(path)
        cols, names = [self.t], ["time"]
        for name, ch in self.channels.items():
            cols += [ch.excitation, np.sqrt(np.maximum(ch.excitation_var, 0.0)), ch.nis]
            names += [f"{name}_excitation", f"{name}_excitation_sd", f"{name}_nis"]
        eta = self.eta
        if eta is not None:
            cols += [eta[:, 0], eta[:, 1]]
            names += ["B", "T"]
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(names), comments="", fmt="%.10g")
        return path

    def summary(self) -> dict:
        out = {"mode": self.mode, "steps": len(self), "channels": list(self.channels)}
        for name, ch in self.channels.items():
            out[f"{name}_mean_nis"] = float(np.mean(ch.nis)) if len(ch) else None
        if self.eta is not None and len(self.eta):
            out["eta_final"] = [float(v) for v in self.eta[-1]]
        return out


class _Recorder:
    def __init__(self, K, n, n_comp, has_eta):
        self.mean = np.empty((K, n))
        self.var = np.empty((K, n))
        self.exc = np.empty(K)
        self.exc_var = np.empty(K)
        self.innov = np.empty((K, 3))
        self.nis = np.empty(K)
        self.y_pred = np.empty((K, 3))
        self.e = np.zeros(n)
        self.e[2:3 * n_comp:3] = 1.0
        self.n_comp = n_comp
        self.has_eta = has_eta
        self.last = None

    def record(self, i, res: StepResult):
        b = res.belief
        S = b.sqrt_cov
        self.mean[i] = b.mean
        self.var[i] = np.einsum("ij,ij->i", S, S)
        self.exc[i] = self.e @ b.mean
        se = self.e @ S
        self.exc_var[i] = se @ se
        self.innov[i] = res.innovation
        self.nis[i] = res.nis
        self.y_pred[i] = res.y_pred
        self.last = b

    def trace(self, K=None) -> ChannelTrace:
        K = self.nis.size if K is None else K
        return ChannelTrace(self.mean[:K], self.var[:K], self.exc[:K], self.exc_var[:K], self.innov[:K],
                            self.nis[:K], self.y_pred[:K], self.last, self.n_comp, self.has_eta)


def excitation_selector(n_components: int, dim: int) -> np.ndarray:
    """Row vector picking the sum of the component excitations from a state."""
    e = np.zeros(dim)
    e[2:3 * n_components:3] = 1.0
    return e


def replace_mean(belief: GaussianBelief, mean) -> GaussianBelief:
    return replace(belief, mean=np.asarray(mean, dtype=float))


# --------------------------------------------------------------------------
# Whole-record runner
# --------------------------------------------------------------------------

def initial_eta(vessel, rng) -> np.ndarray:
    """Draw eta0 from U[B0/2, 2B0/3] x U[CoG_z/8, CoG_z]."""
    B0, zg = vessel.B, vessel.CoG_z
    return np.array([rng.uniform(B0 / 2, 2 * B0 / 3), rng.uniform(zg / 8, zg)])


def eta_box(vessel):
    """Admissible parameter box (0, 2 B0] x (0, CoG_z]."""
    return np.zeros(2), np.array([2 * vessel.B, vessel.CoG_z])


def active_channels(stream, vessel, requested: str = "auto") -> tuple:
    from .wave_env import cos_heading

    if requested == "heave" or stream.pitch is None:
        return ("heave",)
    if requested == "auto" and cos_heading(vessel.beta) == 0.0:
        # beam seas: the pitch forcing vanishes identically
        return ("heave",)
    return ("heave", "pitch")


@dataclass
class FilterSetup:
    """Per-channel models and noise, built once per record."""

    channels: tuple
    banks: dict
    noise: dict
    sqrt_Q: dict
    sqrt_R: dict
    grid: object
    vessel: object


def build_setup(stream, cfg, noise_overrides: dict | None = None) -> FilterSetup:
    """Models and noise for each active channel of ``stream`` under ``cfg``.

    With ``cfg.noise.tune`` each channel's ``lam`` and ``a_max`` are tuned
    on the first ``noise.tune_seconds`` of the record before use.
    """
    from .noise_model import assemble_process_cov

    vessel = cfg.nominal_vessel()
    grid = cfg.estimation_grid()
    Ts = cfg.run.Ts
    chans = active_channels(stream, vessel, cfg.filter.channels)
    phases = None
    if cfg.filter.phase_mode == "oracle":
        phases = stream.meta.get("phases")
        if phases is None:
            raise DomainError("oracle phase mode needs true phases in the stream metadata")
        phases = np.asarray(phases)[_grid_index(stream.meta.get("omegas"), grid.omegas)]
    banks, noise, sQ, sR = {}, {}, {}, {}
    for ch in chans:
        y = getattr(stream, ch)
        ncfg = (noise_overrides or {}).get(ch) or cfg.noise_config(ch, y)
        banks[ch] = _bank(grid.omegas, vessel, Ts, ch, cfg.filter.phase_mode, phases)
        if cfg.noise.tune and not (noise_overrides or {}).get(ch):
            ncfg = tune_channel(y, banks[ch], ncfg, cfg, grid, vessel)
        noise[ch] = ncfg
        Qc = assemble_process_cov(grid, cfg.eta0, ncfg, Ts, vessel)
        sQ[ch] = Qc.sqrt
        sR[ch] = psd_sqrt(ncfg.R)
    return FilterSetup(chans, banks, noise, sQ, sR, grid, vessel)


def _prior(cfg, vessel, N: int, kf: bool, seed) -> GaussianBelief:
    """Zero component states with variance init_var; for the SRCKF, eta0 drawn from the uniform prior."""
    dim = 3 * N if kf else 3 * N + 2
    diag = np.full(dim, cfg.filter.init_var)
    mean = np.zeros(dim)
    if not kf:
        diag[-2:] = cfg.filter.eta_var
        mean[-2:] = initial_eta(vessel, np.random.default_rng(seed))
    return GaussianBelief(mean, np.diag(np.sqrt(diag)))


def _eta_seed(cfg, rng_seed=None):
    if cfg.filter.eta_seed is not None:
        return cfg.filter.eta_seed
    return cfg.run.seed if rng_seed is None else rng_seed


def _constraint(cfg, vessel):
    if not cfg.filter.reflect:
        return None
    lo, hi = eta_box(vessel)
    return lambda X: reflect_into_box(X, lo, hi)


def channel_nis(y, bank, ncfg, cfg, grid, vessel, rng_seed=None) -> np.ndarray:
    """NIS sequence of a single-channel filter (SRCKF, or KF in kf mode) over ``y``."""
    from .noise_model import assemble_process_cov

    kf = cfg.filter.mode == "kf"
    N = len(grid)
    Qc = assemble_process_cov(grid, cfg.eta0, ncfg, cfg.run.Ts, vessel, include_eta=not kf)
    b = _prior(cfg, vessel, N, kf, _eta_seed(cfg, rng_seed))
    out = np.empty(len(y))
    if kf:
        truth_eta = np.array([cfg.vessel.truth_B, cfg.vessel.truth_T])
        G = bank.dense(truth_eta, 1).G_full[:, :3 * N]
        for i in range(len(y)):
            A = bank.dense(truth_eta, i + 1).A_full[:3 * N, :3 * N]
            res = kf_step(b, y[i], A, G, Qc.Q_full, ncfg.R, k=i + 1, channel=bank.channel)
            out[i], b = res.nis, res.belief
        return out
    model = ChannelModel(bank, Qc.sqrt, psd_sqrt(ncfg.R), _constraint(cfg, vessel), bank.channel)
    for i in range(len(y)):
        res = model.step(b, y[i], i + 1)
        out[i], b = res.nis, res.belief
    return out


def tune_channel(y, bank, ncfg, cfg, grid, vessel):
    """Tune ``lam`` and ``a_max`` by replaying the first ``noise.tune_seconds`` of ``y``."""
    from .noise_model import tune

    n = max(2, int(round(cfg.noise.tune_seconds / cfg.run.Ts)))
    head = np.asarray(y)[:n]
    return tune(lambda c: channel_nis(head, bank, c, cfg, grid, vessel), ncfg, meas_dim=3,
                rel_tol=cfg.noise.rel_tol, max_iter=cfg.noise.max_iter)


def _bank(omegas, vessel, Ts, ch, phase_mode, phases):
    from .vessel_model import ComponentBank

    return ComponentBank(omegas, vessel, Ts, ch, phase_mode, phases)


def _grid_index(source_omegas, omegas):
    if source_omegas is None:
        raise DomainError("oracle phase mode needs the truth frequency grid")
    src = np.asarray(source_omegas)
    idx = np.array([int(np.argmin(np.abs(src - w))) for w in omegas])
    if np.max(np.abs(src[idx] - omegas)) > 1e-9:
        raise DomainError("estimation grid is not a subset of the truth grid")
    return idx


def run_filter(stream, cfg, setup: FilterSetup | None = None, rng_seed=None) -> EstimateTrace:
    """Filter a whole measurement record.

    SRCKF mode runs heave-to-pitch fusion when both channels are active and
    a single-channel SRCKF otherwise; KF mode runs the linear baseline with
    the true hull parameters on each active channel.
    """
    K = len(stream)
    kf = cfg.filter.mode == "kf"
    t = np.asarray(stream.t, dtype=float)
    if K == 0:
        N = len(cfg.estimation_grid())
        dim = 3 * N if kf else 3 * N + 2
        chans = active_channels(stream, cfg.nominal_vessel(), cfg.filter.channels)
        return EstimateTrace(t, {ch: _Recorder(0, dim, N, not kf).trace(0) for ch in chans}, cfg.filter.mode)
    if K >= 2:
        stream.check_uniform()
    setup = setup or build_setup(stream, cfg)
    chans = setup.channels
    N = len(setup.grid)
    prior = _prior(cfg, setup.vessel, N, kf, _eta_seed(cfg, rng_seed))
    dim = prior.dim
    recs = {ch: _Recorder(K, dim, N, not kf) for ch in chans}

    if kf:
        truth_eta = np.array([cfg.vessel.truth_B, cfg.vessel.truth_T])
        for ch in chans:
            bank = setup.banks[ch]
            Q = (setup.sqrt_Q[ch] @ setup.sqrt_Q[ch].T)[:dim, :dim]
            R = setup.noise[ch].R
            G = bank.dense(truth_eta, 1).G_full[:, :dim]
            b = prior
            y = getattr(stream, ch)
            for i in range(K):
                A = bank.dense(truth_eta, i + 1).A_full[:dim, :dim]
                res = kf_step(b, y[i], A, G, Q, R, k=i + 1, channel=ch)
                recs[ch].record(i, res)
                b = res.belief
        return EstimateTrace(t, {ch: r.trace() for ch, r in recs.items()}, "kf")

    constrain = _constraint(cfg, setup.vessel)
    models = {ch: ChannelModel(setup.banks[ch], setup.sqrt_Q[ch], setup.sqrt_R[ch], constrain, ch) for ch in chans}
    beliefs = {ch: prior for ch in chans}
    for i in range(K):
        k = i + 1
        if len(chans) == 2:
            h, p = fuse_step(beliefs["heave"], beliefs["pitch"], stream.heave[i], stream.pitch[i],
                             models["heave"], models["pitch"], k, share_cov=cfg.filter.share_cov)
            results = {"heave": h, "pitch": p}
        else:
            results = {"heave": models["heave"].step(beliefs["heave"], stream.heave[i], k)}
        for ch, res in results.items():
            recs[ch].record(i, res)
            beliefs[ch] = res.belief
    return EstimateTrace(t, {ch: r.trace() for ch, r in recs.items()}, "srckf")
