import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from seastate.errors import ConditioningError, DomainError
from seastate.pcrlb import (BoundTrace, InfoMatrix, _jacobians, bound_for_scenario, covariance_step,
                            excitation_bound, excitation_selector, info_init, info_recursion, initial_covariance,
                            run_bound)
from seastate.simharness import scenario_data
from seastate.vessel_model import ComponentBank


def _spd(rng, n, floor=0.5):
    X = rng.normal(size=(n, n))
    return X @ X.T + floor * np.eye(n)


# ---- initialisation ---------------------------------------------------------------

def test_init_identity_and_diagonal():
    assert np.array_equal(info_init(np.eye(4)).J, np.eye(4))
    assert np.allclose(info_init(np.diag([2.0, 4.0, 0.5])).J, np.diag([0.5, 0.25, 2.0]), rtol=1e-15)


def test_init_random_spd(rng):
    S = _spd(rng, 8)
    assert np.max(np.abs(info_init(S).J @ S - np.eye(8))) < 1e-10


def test_init_singular():
    with pytest.raises(ConditioningError):
        info_init(np.diag([1.0, 0.0]))
    with pytest.raises(ConditioningError):
        info_init(np.diag([1.0, 1e-14]))


def test_info_matrix_is_symmetrised():
    J = InfoMatrix(np.array([[2.0, 1.0], [0.0, 2.0]]))
    assert np.array_equal(J.J, J.J.T)
    with pytest.raises(DomainError):
        InfoMatrix(np.ones((2, 3)))


# ---- recursion ------------------------------------------------------------------------

@pytest.mark.parametrize("a,g,q,r", [(0.9, 1.0, 0.1, 0.5), (1.0, 1.0, 1e-3, 1e-2), (1.2, 0.4, 2.0, 0.3)])
def test_scalar_recursion_thousand_steps(a, g, q, r):
    ref = oracles.scalar_info_riccati(2.0, a, g, q, r, 1000)
    J = InfoMatrix([[2.0]])
    P = 0.5
    for k in range(1000):
        J = info_recursion(J, [[a]], [[g]], [[q]], [[r]])
        # covariance-form Kalman Riccati on the same system
        Pp = a * a * P + q
        P = Pp - Pp * g * g * Pp / (g * g * Pp + r)
        assert J.J[0, 0] == pytest.approx(ref[k], rel=1e-12)
        assert J.J[0, 0] == pytest.approx(1 / P, rel=1e-12)


def test_scalar_closed_form_with_unit_gain():
    J_prev, a, q, r = 3.0, 0.8, 0.2, 0.7
    J = info_recursion(InfoMatrix([[J_prev]]), [[a]], [[1.0]], [[q]], [[r]])
    assert J.J[0, 0] == pytest.approx(J_prev / (q * J_prev + a * a) + 1 / r, rel=1e-14)


def test_no_measurement_is_predicted_covariance(rng):
    for _ in range(20):
        n = 5
        P = _spd(rng, n)
        A = rng.normal(size=(n, n))
        Q = _spd(rng, n, 0.2)
        J = info_recursion(InfoMatrix(np.linalg.inv(P)), A, np.zeros((0, n)), Q, np.zeros((0, 0)))
        assert np.allclose(J.J, np.linalg.inv(A @ P @ A.T + Q), rtol=1e-9, atol=1e-12)


def test_memoryless_limit(rng):
    n = 4
    G = rng.normal(size=(3, n))
    R = _spd(rng, 3, 0.1)
    J = info_recursion(InfoMatrix(_spd(rng, n)), np.eye(n), G, 1e9 * np.eye(n), R)
    assert np.allclose(J.J, G.T @ np.linalg.inv(R) @ G, rtol=0, atol=1e-7)


def test_recursion_matches_covariance_step(rng):
    n = 6
    P = _spd(rng, n)
    J = InfoMatrix(np.linalg.inv(P))
    for _ in range(50):
        A = np.eye(n) + 0.1 * rng.normal(size=(n, n))
        G = rng.normal(size=(3, n))
        Q, R = _spd(rng, n, 0.1) * 0.1, _spd(rng, 3, 0.1) * 0.1
        J = info_recursion(J, A, G, Q, R)
        P = covariance_step(P, A, G, Q, R)
        assert np.allclose(J.J @ P, np.eye(n), atol=1e-9)
        w = np.linalg.eigvalsh(J.J)
        assert w.min() >= -1e-10 and np.array_equal(J.J, J.J.T)


def test_recursion_conditioning_error():
    with pytest.raises(ConditioningError):
        info_recursion(InfoMatrix(np.zeros((2, 2))), np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2))
    with pytest.raises(ConditioningError):
        info_recursion(InfoMatrix(np.eye(2)), np.eye(2), np.eye(2), np.diag([1.0, 1e-15]), np.eye(2))


@given(seed=st.integers(0, 2**31))
def test_extra_measurement_never_loosens_bound(seed):
    rng = np.random.default_rng(seed)
    n = 5
    J0 = InfoMatrix(_spd(rng, n))
    A = rng.normal(size=(n, n))
    Q = _spd(rng, n, 0.3)
    G = rng.normal(size=(3, n))
    R = np.diag(rng.uniform(0.1, 2.0, size=3))
    full = info_recursion(J0, A, G, Q, R)
    fewer = info_recursion(J0, A, G[:2], Q, R[:2, :2])
    d_full = np.diagonal(np.linalg.inv(full.J))
    d_fewer = np.diagonal(np.linalg.inv(fewer.J))
    assert np.all(d_full <= d_fewer * (1 + 1e-9))


# ---- excitation bound -------------------------------------------------------------------

def test_excitation_bound_single_component(rng):
    J = InfoMatrix(_spd(rng, 3))
    assert excitation_bound(J, 1) == pytest.approx(np.linalg.inv(J.J)[2, 2], rel=1e-12)


def test_excitation_bound_block_diagonal(rng):
    from scipy.linalg import block_diag

    blocks = [_spd(rng, 3) for _ in range(3)]
    J = InfoMatrix(block_diag(*blocks, np.eye(2)))
    ref = sum(np.linalg.inv(b)[2, 2] for b in blocks)
    assert excitation_bound(J, 3) == pytest.approx(ref, rel=1e-12)


def test_excitation_bound_quadratic_form(rng):
    J = InfoMatrix(_spd(rng, 11))
    e = np.zeros(11)
    e[[2, 5, 8]] = 1.0
    assert excitation_bound(J, 3) == pytest.approx(e @ np.linalg.inv(J.J) @ e, rel=1e-10)
    assert np.array_equal(excitation_selector(3, 11), e)


def test_excitation_bound_errors():
    with pytest.raises(ConditioningError):
        excitation_bound(InfoMatrix(np.zeros((3, 3))), 1)
    with pytest.raises(DomainError):
        excitation_selector(4, 5)


# ---- bound along a trajectory ---------------------------------------------------------------

@pytest.fixture(scope="module")
def short_truth():
    from seastate.config import ScenarioConfig

    cfg = ScenarioConfig().copy(**{"run.duration": 1.0})
    seed, truth, stream = scenario_data(cfg, 0)
    return cfg, truth, stream


def _setup(cfg, stream):
    from seastate.estimators import build_setup

    s = build_setup(stream, cfg)
    return s, s.sqrt_Q["heave"] @ s.sqrt_Q["heave"].T, s.noise["heave"].R


def test_first_step_is_one_update(short_truth):
    cfg, truth, stream = short_truth
    s, Q, R = _setup(cfg, stream)
    N = len(s.grid)
    sigma0 = initial_covariance(cfg, N)
    tr = run_bound(truth, s.grid, Q, R, sigma0, vessel=s.vessel)
    assert len(tr) == truth.K and np.all(tr.bound >= 0)
    omegas = np.array([c.omega for c in truth.components])
    idx = [int(np.argmin(np.abs(omegas - w))) for w in s.grid.omegas]
    bank = ComponentBank(s.grid.omegas, s.vessel.with_eta(truth.vessel.eta), truth.Ts, "heave", "oracle",
                         np.array([c.phase for c in truth.components])[idx])
    states = truth.states["heave"][:, idx, :].reshape(truth.K + 1, -1)
    F, _ = _jacobians(bank, truth.vessel.eta, states[0], 1)
    _, H = _jacobians(bank, truth.vessel.eta, states[1], 1)
    _, P1 = oracles.kf_step(np.zeros(F.shape[0]), sigma0, np.zeros(3), F, H, Q, R)
    e = excitation_selector(N, F.shape[0])
    assert tr.bound[0] == pytest.approx(e @ P1 @ e, rel=1e-9)


def test_dropping_velocity_row_raises_bound(short_truth):
    cfg, truth, stream = short_truth
    s, Q, R = _setup(cfg, stream)
    sigma0 = initial_covariance(cfg, len(s.grid))
    full = run_bound(truth, s.grid, Q, R, sigma0, vessel=s.vessel)
    fewer = run_bound(truth, s.grid, Q, R, sigma0, vessel=s.vessel, drop_rows=(1,))
    assert np.all(fewer.bound >= full.bound * (1 - 1e-12))
    assert np.all(fewer.diag_inv >= full.diag_inv * (1 - 1e-9) - 1e-15)


def test_bound_for_scenario_and_csv(short_truth, tmp_path):
    cfg, truth, stream = short_truth
    tr = bound_for_scenario(truth, stream, cfg)
    assert isinstance(tr, BoundTrace) and tr.channel == "heave"
    assert np.all(np.isfinite(tr.sqrt_bound))
    p = tr.to_csv(tmp_path / "b.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "step,time,rmse_available_flag,sqrt_bound"
    assert len(lines) == truth.K + 1
    p2 = tr.to_csv(tmp_path / "b2.csv", rmse=np.ones(len(tr)))
    data = np.loadtxt(p2, delimiter=",", skiprows=1)
    assert p2.read_text().splitlines()[0].endswith(",rmse")
    assert np.all(data[:, 2] == 1) and np.array_equal(data[:, 0], np.arange(1, truth.K + 1))


def test_bound_input_checks(short_truth):
    cfg, truth, stream = short_truth
    s, Q, R = _setup(cfg, stream)
    n = Q.shape[0]
    with pytest.raises(DomainError):
        run_bound(truth, s.grid, Q[:-1, :-1], R, np.eye(n - 1), vessel=s.vessel)
    with pytest.raises(ConditioningError):
        run_bound(truth, s.grid, Q, R, np.zeros((n, n)), vessel=s.vessel)


def test_pitch_bound_skipped_in_beam_seas():
    from seastate.config import ScenarioConfig

    cfg = ScenarioConfig().copy(**{"run.duration": 0.5, "vessel.beta": math.pi / 2})
    _, truth, stream = scenario_data(cfg, 0)
    assert bound_for_scenario(truth, stream, cfg, channel="pitch") is None
    assert run_bound(truth, cfg.estimation_grid(), np.eye(68), np.eye(3), np.eye(68), "pitch") is None


def test_zero_sea_has_no_bound():
    from seastate.config import ScenarioConfig
    from seastate.simharness import truth_from_components
    from seastate.wave_env import WaveComponent

    cfg = ScenarioConfig()
    comps = [WaveComponent(w, 0.0, 0.3) for w in cfg.synthesis_grid().omegas]
    truth = truth_from_components(comps, cfg.truth_vessel(), 0.04, 0.2)
    assert run_bound(truth, cfg.estimation_grid(), np.eye(68), np.eye(3), np.eye(68)) is None
