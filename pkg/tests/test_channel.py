import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cellsense.channel import (FRAME_PERIOD, GESTURES, ChannelProfile, ChannelRealization,
                               GestureScript, PathSpec, PhaseNoiseProcess, doppler_tracks,
                               draw_realization, evaluate_channel, gesture_doppler_profile,
                               synthesize_received)
from cellsense.errors import ConfigError
from cellsense.phy.cell import CellConfig, map_frames
from cellsense.phy.grid import ResourceGrid
from cellsense.receiver.estimation import measure_rsrp

from helpers import flat_realization


def test_push_and_pull_signs():
    f1, f2 = gesture_doppler_profile(GestureScript("push", 0.5, 1.0, 12.0), 1.0)
    assert f1 > 0 and f2 > 0
    f1, f2 = gesture_doppler_profile(GestureScript("pull", 0.5, 1.0, 12.0), 1.0)
    assert f1 < 0 and f2 < 0


def test_slides_have_opposite_signs():
    for label, sign in (("slide_left", 1), ("slide_right", -1)):
        f1, f2 = gesture_doppler_profile(GestureScript(label, 0.5, 1.0, 12.0), 1.0)
        assert f1 * f2 < 0 and np.sign(f1 - f2) == sign


@given(st.sampled_from(GESTURES), st.floats(3.01, 20.0), st.floats(0.0, 1.0))
def test_zero_outside_and_bounded(label, peak, start):
    script = GestureScript(label, start, 1.0, peak)
    t = np.linspace(0, 3, 601)
    f1, f2 = gesture_doppler_profile(script, t)
    outside = (t < start) | (t > start + 1.0)
    assert np.all(f1[outside] == 0) and np.all(f2[outside] == 0)
    assert np.max(np.abs(f1)) <= 20.0 and np.max(np.abs(f2)) <= 20.0


def test_v_gesture_pause_and_segments():
    s = GestureScript("v1", 0.5, 1.2, 10.0, pause_s=0.3, ramp_s=0.1)
    (a0, a1, _), (b0, b1, _) = s.strokes()
    assert b0 - a1 == pytest.approx(0.3)
    assert gesture_doppler_profile(s, (a1 + b0) / 2) == (0.0, 0.0)
    for t in ((a0 + a1) / 2, (b0 + b1) / 2):
        f1, f2 = gesture_doppler_profile(s, t)
        assert abs(f1) > 3 and abs(f2) > 3


@pytest.mark.parametrize("kw", [dict(label="wave"), dict(peak_doppler_hz=3.0),
                                dict(peak_doppler_hz=20.5), dict(duration_s=0.0)])
def test_gesture_script_invariants(kw):
    args = dict(label="push", start_s=0.1, duration_s=1.0, peak_doppler_hz=10.0)
    args.update(kw)
    with pytest.raises(ValueError):
        GestureScript(**args)


def test_path_and_phase_noise_invariants():
    with pytest.raises(ValueError):
        PathSpec(5e-6, 1.0)
    with pytest.raises(ValueError):
        PathSpec(1e-6, 0.0)
    with pytest.raises(ValueError):
        PhaseNoiseProcess(-0.1)
    tr = PhaseNoiseProcess(0.05, 3).trajectory(20000)
    assert np.std(np.diff(tr)) == pytest.approx(0.05, rel=0.05)
    with pytest.raises(ConfigError):
        ChannelProfile(max_excess_delay_s=4.6e-6)


def test_static_channel_constant_over_frames():
    real = flat_realization(n_frames=20, delay=0.7e-6)
    h = real.response(0, 0)
    assert np.allclose(h, h[0][None, :])
    assert not np.allclose(h[0], h[0, 0])


def test_zero_delay_path_flat_over_subcarriers():
    real = flat_realization(gain=0.3 - 0.4j)
    assert np.allclose(evaluate_channel(real, 0, 0, np.arange(72), 3), 0.3 - 0.4j)
    with pytest.raises(IndexError):
        evaluate_channel(real, 1, 0, 0, 0)


@pytest.mark.parametrize("f0", [-13.0, 4.0, 17.0])
def test_constant_doppler_spectral_peak(f0):
    n = 400
    real = flat_realization(n_frames=n, hand=0.1, doppler=np.full((1, n), f0))
    series = real.dynamic_series(0, 0)
    spec = np.abs(np.fft.fftshift(np.fft.fft(series, 8 * n)))
    freqs = np.fft.fftshift(np.fft.fftfreq(8 * n, FRAME_PERIOD))
    assert abs(freqs[np.argmax(spec)] - f0) <= 0.5


def test_phase_noise_leaves_magnitude_and_is_common():
    rng = np.random.default_rng(0)
    kw = dict(antenna_position=(0, 0, 1, 1))
    a = draw_realization(ChannelProfile(phase_noise_rad=0.0), 2, 30, 72, np.random.default_rng(5), **kw)
    b = draw_realization(ChannelProfile(phase_noise_rad=0.2), 2, 30, 72, np.random.default_rng(5), **kw)
    for s in range(2):
        for ant in range(4):
            assert np.allclose(np.abs(a.response(s, ant)), np.abs(b.response(s, ant)))
    # the rotation is identical for every stream at one receiver
    r0 = b.response(0, 0) / a.response(0, 0)
    r1 = b.response(1, 1) / a.response(1, 1)
    assert np.allclose(r0, r1)


def test_identity_channel_returns_input():
    g = map_frames(CellConfig.from_pci(252, payload_duty=1.0), 0, 4, np.random.default_rng(0), 72)[0]
    y = synthesize_received([g], flat_realization(n_frames=4), 0)
    assert np.array_equal(y.samples, g.samples)


def test_zero_power_cell_changes_nothing():
    rng = np.random.default_rng(0)
    g1 = map_frames(CellConfig.from_pci(252, payload_duty=1.0), 0, 4, rng, 72)[0]
    g2 = map_frames(CellConfig.from_pci(249, payload_duty=1.0), 0, 4, rng, 72)[0]
    real1 = flat_realization(n_frames=4)
    real2 = flat_realization(n_streams=2, n_frames=4)
    real2.large_scale_db[1] = -np.inf
    assert np.array_equal(synthesize_received([g1, g2], real2, 0).samples,
                          synthesize_received([g1], real1, 0).samples)


def test_dimension_mismatch_rejected():
    g = ResourceGrid(np.zeros((2, 10, 14, 72), complex))
    h = ResourceGrid(np.zeros((2, 10, 14, 84), complex))
    with pytest.raises(ValueError):
        synthesize_received([g, h], flat_realization(n_streams=2, n_frames=2), 0)
    with pytest.raises(ValueError):
        synthesize_received([g], flat_realization(n_streams=2, n_frames=2), 0)


def test_measured_power_ratio_matches_configuration():
    # no payload, otherwise each cell's traffic lands on the other's CRS
    cells = [CellConfig.from_pci(252, tx_power_db=0.0), CellConfig.from_pci(253, tx_power_db=-8.0)]
    rng = np.random.default_rng(11)
    grids = [map_frames(c, 0, 100, rng, 72, subframes=(0,), symbols=(0, 4, 7, 11))[0]
             for c in cells]
    real = flat_realization(n_streams=2, n_frames=100, noise_var=1e-3)
    y = synthesize_received(grids, real, 0, rng)
    # symbol 7 is skipped: the other cell's PBCH covers it in a 72-subcarrier band
    ratio = measure_rsrp(y, 253, symbols=(0, 4, 11)) - measure_rsrp(y, 252, symbols=(0, 4, 11))
    assert ratio == pytest.approx(-8.0, abs=0.5)


def test_energy_accounting():
    rng = np.random.default_rng(2)
    cells = [CellConfig.from_pci(p, payload_duty=1.0) for p in (252, 249)]
    grids = [map_frames(c, 0, 50, rng, 72, subframes=(0,), symbols=(3, 5))[0] for c in cells]
    real = draw_realization(ChannelProfile(), 2, 50, 72, np.random.default_rng(4),
                            antenna_position=(0,), reference_antennas=(), noise_var=0.1)
    y = synthesize_received(grids, real, 0, rng).samples
    expected = sum(np.abs(g.samples * real.response(s, 0)[:, None, None, :]) ** 2
                   for s, g in enumerate(grids)) + 0.1
    # per-RE |y|^2 has variance <= (2 * mean)^2-ish; compare the mean with a 3 sigma bound
    n = y.size
    diff = np.mean(np.abs(y) ** 2) - np.mean(expected)
    sigma = np.sqrt(np.mean(2 * expected * 0.1) / n * 2)
    assert abs(diff) < 3 * sigma + 1e-12


def test_synthesis_deterministic():
    def run():
        rng = np.random.default_rng(9)
        g = map_frames(CellConfig.from_pci(252, payload_duty=0.5), 0, 3, rng, 72)[0]
        real = draw_realization(ChannelProfile(), 1, 3, 72, rng, antenna_position=(0,),
                                reference_antennas=(), noise_var=0.01)
        return synthesize_received([g], real, 0, rng).samples
    assert np.array_equal(run(), run())


def test_cfo_rotates_symbols():
    g = map_frames(CellConfig.from_pci(252), 0, 2, np.random.default_rng(0), 72)[0]
    real = flat_realization(n_frames=2)
    real.cfo_hz = np.array([100.0])
    y = synthesize_received([g], real, 0)
    mask = np.abs(g.samples) > 0
    assert np.allclose(np.abs(y.samples[mask]), np.abs(g.samples[mask]))
    assert not np.allclose(y.samples, g.samples)


def test_doppler_tracks_shape_and_support():
    scripts = [GestureScript("v2", 0.4, 1.1, 18.0)]
    tr = doppler_tracks(scripts, 250, 2)
    assert tr.shape == (2, 250)
    assert np.max(np.abs(tr)) <= 20.0
    assert np.all(tr[:, :40] == 0)
