import math

import numpy as np
import pytest

import oracles
from seastate.errors import DataError, DomainError, GapError
from seastate.simharness import (MeasurementStream, export_csv, generate_measurements, generate_truth, ingest_csv,
                                 run_mc, scenario_data, truth_from_components)
from seastate.wave_env import WaveComponent, reference_truth_vessel

R_H = np.diag([1.53e-4, 1.79e-4, 8.40e-4])
R_P = np.diag([8.95e-6, 2.25e-6, 8.40e-6])


@pytest.fixture(scope="module")
def head_truth():
    from seastate.config import ScenarioConfig

    cfg = ScenarioConfig()
    return cfg, generate_truth(cfg.sea_spec(), cfg.synthesis_grid(), cfg.truth_vessel(), 0.04, 20.0, 11)


# ---- truth ------------------------------------------------------------------------------

def test_zero_amplitude_sea_gives_zero_truth(cfg):
    comps = [WaveComponent(w, 0.0, 1.0) for w in cfg.synthesis_grid().omegas]
    truth = truth_from_components(comps, cfg.truth_vessel(), 0.04, 5.0)
    for ch in ("heave", "pitch"):
        assert not np.any(truth.states[ch]) and not np.any(truth.excitation[ch]) and not np.any(truth.measurements[ch])


def test_truth_is_deterministic(head_truth):
    cfg, truth = head_truth
    again = generate_truth(cfg.sea_spec(), cfg.synthesis_grid(), cfg.truth_vessel(), 0.04, 20.0, 11)
    for ch in ("heave", "pitch"):
        assert np.array_equal(truth.states[ch], again.states[ch])
    other = generate_truth(cfg.sea_spec(), cfg.synthesis_grid(), cfg.truth_vessel(), 0.04, 20.0, 12)
    assert not np.array_equal(truth.excitation["heave"], other.excitation["heave"])


@pytest.mark.parametrize("channel", ["heave", "pitch"])
def test_excitation_matches_direct_formula(head_truth, channel):
    _, truth = head_truth
    v = truth.vessel
    force = oracles.forcing_heave if channel == "heave" else oracles.forcing_pitch
    shift = 0.0 if channel == "heave" else math.pi / 2
    ref = np.zeros(truth.K + 1)
    for c in truth.components:
        we = oracles.doppler(c.omega, v.V, v.beta)
        ref += c.amplitude * force(c.omega, v.L, v.B, v.T, v.V, v.beta) * np.sin(we * truth.t + c.phase + shift)
    assert np.max(np.abs(truth.excitation[channel] - ref)) < 1e-8
    assert np.allclose(truth.states[channel][..., 2].sum(axis=1), truth.excitation[channel], rtol=0, atol=1e-14)


def test_truth_layout(head_truth):
    _, truth = head_truth
    N = len(truth.components)
    assert truth.K == 500 and truth.states["heave"].shape == (501, N, 3)
    assert np.array_equal(truth.eta, [1.47, 0.35])
    assert not np.any(truth.states["heave"][0, :, :2])  # starts from rest


# ---- measurements -------------------------------------------------------------------------

def test_noise_free_measurements_equal_model_output(head_truth):
    _, truth = head_truth
    s = generate_measurements(truth, np.zeros((3, 3)), np.zeros((3, 3)), 0)
    assert np.array_equal(s.heave, truth.measurements["heave"][1:])
    assert np.array_equal(s.pitch, truth.measurements["pitch"][1:])
    assert np.array_equal(s.t, truth.t[1:]) and s.Ts == 0.04


def test_noise_sample_covariance():
    v = reference_truth_vessel()
    truth = truth_from_components([WaveComponent(0.7, 0.5, 0.2)], v, 0.04, 4000.0)
    s = generate_measurements(truth, R_H, R_P, 5)
    assert len(s) == 100_000
    for y, ch, R in ((s.heave, "heave", R_H), (s.pitch, "pitch", R_P)):
        C = np.cov((y - truth.measurements[ch][1:]).T)
        assert np.allclose(np.diagonal(C), np.diagonal(R), rtol=0.05)


def test_beam_seas_pitch_is_pure_noise(cfg):
    v = reference_truth_vessel(beta=math.pi / 2)
    truth = generate_truth(cfg.sea_spec(), cfg.synthesis_grid(), v, 0.04, 100.0, 3)
    assert not np.any(truth.measurements["pitch"]) and not np.any(truth.excitation["pitch"])
    s = generate_measurements(truth, R_H, R_P, 9)
    assert np.allclose(s.pitch.var(axis=0), np.diagonal(R_P), rtol=0.15)
    assert np.all(np.abs(s.pitch.mean(axis=0)) < 4 * np.sqrt(np.diagonal(R_P) / len(s)))
    assert generate_measurements(truth, R_H, R_P, 9, include_pitch=False).pitch is None


def test_stream_checks():
    with pytest.raises(DataError):
        MeasurementStream(np.arange(3.0), np.zeros((2, 3)))
    s = MeasurementStream(np.array([0.0, 0.1, 0.25]), np.zeros((3, 3)))
    with pytest.raises(GapError, match="frame 2"):
        s.check_uniform()
    frames = list(MeasurementStream(np.arange(4) * 0.1, np.ones((4, 3)), np.zeros((4, 3))))
    back = MeasurementStream.from_frames(frames)
    assert len(back) == 4 and back.pitch is not None


# ---- CSV exchange --------------------------------------------------------------------------

@pytest.fixture
def noisy(head_truth):
    _, truth = head_truth
    return generate_measurements(truth, R_H, R_P, 4)


def test_csv_round_trip_is_bit_identical(noisy, tmp_path):
    path = export_csv(noisy, tmp_path / "m.csv", {"source": "test"})
    back = ingest_csv(path)
    assert np.array_equal(back.t, noisy.t)
    assert np.array_equal(back.heave, noisy.heave) and np.array_equal(back.pitch, noisy.pitch)
    assert back.meta["Ts"] == noisy.Ts and back.meta["source"] == "test"
    assert back.meta["units"] == {"heave": "m", "pitch": "rad"}


def test_heave_only_round_trip(noisy, tmp_path):
    s = MeasurementStream(noisy.t, noisy.heave, None, {"Ts": 0.04})
    back = ingest_csv(export_csv(s, tmp_path / "h.csv"))
    assert back.pitch is None and np.array_equal(back.heave, s.heave)


def test_gap_error_names_line(noisy, tmp_path):
    path = export_csv(noisy, tmp_path / "m.csv")
    lines = path.read_text().splitlines()
    parts = lines[499].split(",")  # file line 500
    parts[0] = repr(float(parts[0]) + 0.013)
    lines[499] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(GapError, match="line 500"):
        ingest_csv(path)


def test_malformed_files(noisy, tmp_path):
    good = export_csv(noisy, tmp_path / "m.csv").read_text().splitlines()
    header = next(i for i, s in enumerate(good) if not s.startswith("#"))

    def write(lines, name):
        p = tmp_path / name
        p.write_text("\n".join(lines) + "\n")
        return p

    cols = good[header].split(",")
    dropped = [",".join(c for j, c in enumerate(r.split(",")) if j != 2) if i >= header else r
               for i, r in enumerate(good)]
    with pytest.raises(DataError, match="missing columns"):
        ingest_csv(write(dropped, "a.csv"))
    with pytest.raises(DataError, match="unit"):
        ingest_csv(write([s.replace("heave=m", "heave=ft") for s in good], "b.csv"))
    with pytest.raises(DataError, match="units"):
        ingest_csv(write([s for s in good if "units" not in s], "c.csv"))
    bad = list(good)
    bad[header + 3] = bad[header + 3].replace(bad[header + 3].split(",")[1], "oops", 1)
    with pytest.raises(DataError, match=f"line {header + 4}"):
        ingest_csv(write(bad, "d.csv"))
    partial = [",".join(r.split(",")[:-1]) if i >= header else r for i, r in enumerate(good)]
    with pytest.raises(DataError, match="pitch"):
        ingest_csv(write(partial, "e.csv"))
    with pytest.raises(DataError):
        ingest_csv(tmp_path / "absent.csv")
    renamed = [r.replace("heave_pos", "z") if i == header else r for i, r in enumerate(good)]
    s = ingest_csv(write(renamed, "f.csv"), schema={"heave_pos": "z"})
    assert np.array_equal(s.heave, noisy.heave)
    assert cols[0] == "t"


def test_ten_hertz_quarter_hour_fixture(cfg, tmp_path):
    truth = generate_truth(cfg.sea_spec(), cfg.synthesis_grid(), cfg.truth_vessel(), 0.1, 900.0, 21)
    s = generate_measurements(truth, R_H, R_P, 22)
    back = ingest_csv(export_csv(s, tmp_path / "hf.csv"))
    assert len(back) == 9000 and back.check_uniform() == pytest.approx(0.1)


# ---- noise-free sanity with the true phases --------------------------------------------------

@pytest.mark.parametrize("mode", [
    "kf",
    pytest.param("srckf", marks=pytest.mark.xfail(strict=True, reason=(
        "pitch acceleration innovation settles near 2x the assumed noise sd: the SRCKF does not know the hull "
        "parameters and the pitch acceleration depends on them most (see the decisions ledger)"))),
])
def test_oracle_phase_innovation_vanishes(mode):
    # noise-free data, true phases: after 200 steps the innovation is no larger than the noise the filter assumes
    from seastate.config import ScenarioConfig
    from seastate.estimators import build_setup, run_filter

    cfg = ScenarioConfig().copy(**{"run.duration": 12.0, "filter.phase_mode": "oracle", "filter.mode": mode})
    seed, truth, _ = scenario_data(cfg, 0)
    clean = generate_measurements(truth, np.zeros((3, 3)), np.zeros((3, 3)), 0)
    setup = build_setup(clean, cfg)
    tr = run_filter(clean, cfg, setup, rng_seed=seed)
    for ch, c in tr.channels.items():
        rms = np.sqrt(np.mean(c.innovation[200:] ** 2, axis=0))
        first = np.abs(c.innovation[:10]).max(axis=0)
        assert np.all(rms <= np.sqrt(np.diagonal(setup.noise[ch].R)))
        assert np.all(rms < first)


def test_oracle_phase_needs_truth_metadata(cfg):
    from seastate.estimators import run_filter

    c = cfg.copy(**{"run.duration": 1.0, "filter.phase_mode": "oracle"})
    _, _, stream = scenario_data(c, 0)
    bare = MeasurementStream(stream.t, stream.heave, stream.pitch, {"Ts": 0.04})
    with pytest.raises(DomainError):
        run_filter(bare, c)


# ---- Monte Carlo -------------------------------------------------------------------------------

def test_mc_needs_two_runs(cfg):
    with pytest.raises(DomainError):
        run_mc(cfg.copy(**{"run.duration": 2.0}), n_runs=1)


def test_identical_seeds_give_zero_bands(cfg, tmp_path):
    c = cfg.copy(**{"run.duration": 2.0, "spectrum.burn_in_s": 0.0})
    mc = run_mc(c, seeds=[5, 5], with_bound=False)
    assert mc.n_runs == 2 and mc.n_ok() == 2
    for m in mc.rmse:
        for ch in mc.rmse[m]:
            assert np.all(mc.error_sd[m][ch] == 0) and np.all(mc.rmse[m][ch] >= 0)
    assert np.all(mc.eta_sd == 0)
    assert mc.sea["srckf"]["Hs"][0] == mc.sea["srckf"]["Hs"][1]
    mc.to_json(tmp_path / "s.json")
    header = mc.to_csv(tmp_path / "s.csv").read_text().splitlines()[0]
    assert header.startswith("step,time,rmse_srckf_heave")


def test_mc_is_deterministic_and_order_free(cfg):
    c = cfg.copy(**{"run.duration": 1.0})
    a = run_mc(c, seeds=[1, 2, 3], with_bound=False)
    b = run_mc(c, seeds=[1, 2, 3], with_bound=False, parallelism=2)
    assert np.array_equal(a.rmse["srckf"]["heave"], b.rmse["srckf"]["heave"])
    assert np.array_equal(a.eta_final, b.eta_final)


def test_mc_bound_is_attached(cfg):
    c = cfg.copy(**{"run.duration": 1.0})
    mc = run_mc(c, n_runs=2, with_bound=True)
    assert set(mc.bounds) == {"heave", "pitch"} and len(mc.bounds["heave"]) == len(mc.t)


@pytest.mark.slow
def test_mean_band_shrinks_like_inverse_sqrt_n(cfg):
    c = cfg.copy(**{"run.duration": 2.0, "run.seed": 300})
    half_width = {}
    for n in (10, 40):
        mc = run_mc(c, n_runs=n, with_bound=False)
        half_width[n] = np.mean(mc.error_sd["kf"]["heave"]) / math.sqrt(n)
    assert 0.4 < half_width[40] / half_width[10] < 0.625
