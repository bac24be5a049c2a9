import time

import numpy as np
import pytest

from cellsense.errors import ConfigError
from cellsense.phy.cell import CellConfig, map_frames
from cellsense.receiver.estimation import (compensate_cfo, crs_ls_estimate, interpolate_groups,
                                           joint_ls_estimate, known_streams, measure_rsrp,
                                           re_groups)
from cellsense.channel import synthesize_received

from helpers import flat_realization, group_constant, region_grid

LIVING_ROOM_CELLS = [(252, 1), (249, 1), (253, 1), (256, 1)]


def test_groups_partition_region():
    groups = re_groups(3, 4)
    assert len(groups) == 24
    members = [m for g in groups for m in g.index_set]
    assert len(members) == len(set(members)) == 288


@pytest.mark.parametrize("K,L", [(5, 4), (3, 3), (0, 1)])
def test_bad_tiling_rejected(K, L):
    with pytest.raises(ConfigError):
        re_groups(K, L)


def test_too_few_equations_rejected():
    grid = region_grid(LIVING_ROOM_CELLS, 1, 1.0)
    with pytest.raises(ConfigError):
        joint_ls_estimate(grid, LIVING_ROOM_CELLS, K=1, L=2)


def test_joint_ls_exact_on_group_constant_channels(rng):
    h, g = group_constant(rng, 20, 4, 3, 4)
    grid = region_grid(LIVING_ROOM_CELLS, 20, h, sfn0=77)
    est = joint_ls_estimate(grid, LIVING_ROOM_CELLS, 3, 4)
    truth = np.moveaxis(g.reshape(20, 4, -1), 1, 1)
    assert est.values.shape == (20, 4, 24)
    assert np.max(np.abs(est.values - truth)) / np.max(np.abs(truth)) < 1e-9
    assert est.valid.all()


def test_joint_ls_two_port_cell(rng):
    cells = [(252, 2), (249, 1)]
    h, g = group_constant(rng, 6, 3, 3, 4)
    est = joint_ls_estimate(region_grid(cells, 6, h, sfn0=3), cells, 3, 4)
    assert np.allclose(est.values, g.reshape(6, 3, -1), atol=1e-9)
    assert est.streams == ((252, 0), (252, 1), (249, 0))


def test_scalar_ls_is_ratio(rng):
    cells = [(252, 1)]
    h = rng.normal(size=(2, 1, 4, 72)) + 1j * rng.normal(size=(2, 1, 4, 72))
    grid = region_grid(cells, 2, h)
    est = joint_ls_estimate(grid, cells, 1, 1)
    x, _ = known_streams(cells, 2, 0, 72)
    occupied = np.abs(x[:, 0]) > 0
    v = est.values[:, 0].reshape(2, 4, 72)
    assert np.allclose(v[occupied], h[:, 0][occupied])
    assert not est.valid.reshape(2, 4, 72)[~occupied].any()


def test_ls_residual_optimal(rng):
    h = rng.normal(size=(1, 4, 4, 72)) + 1j * rng.normal(size=(1, 4, 4, 72))
    grid = region_grid(LIVING_ROOM_CELLS, 1, h, rng=rng, noise=0.1)
    est = joint_ls_estimate(grid, LIVING_ROOM_CELLS, 3, 4).values[0]      # (4, 24)
    x, _ = known_streams(LIVING_ROOM_CELLS, 1, 0, 72)
    y = grid.samples[0, 0]

    def residual(hg):
        full = np.repeat(hg.reshape(4, 1, 24), 3, axis=2).reshape(4, 1, 72).repeat(4, axis=1)
        return np.sum(np.abs(y - np.sum(x[0] * full, axis=0)) ** 2)

    best = residual(est)
    for _ in range(20):
        pert = est + 0.01 * (rng.normal(size=est.shape) + 1j * rng.normal(size=est.shape))
        assert residual(pert) >= best


def test_more_equations_per_group_lower_nmse(rng):
    h = np.ones((1, 4, 1, 1)) * np.array([1.0, 0.5j, -0.7, 0.3 + 0.3j])[None, :, None, None]
    nmse = {}
    for K, L in ((1, 4), (3, 4)):
        err = 0.0
        for trial in range(20):
            grid = region_grid(LIVING_ROOM_CELLS, 10, h, sfn0=trial * 10, rng=rng, noise=0.1)
            est = joint_ls_estimate(grid, LIVING_ROOM_CELLS, K, L).values
            err += np.mean(np.abs(est - h[..., 0, :1].reshape(1, 4, 1)) ** 2)
        nmse[K * L] = err
    assert nmse[12] < nmse[4]


def test_cfo_compensation_inverts_rotation():
    g = map_frames(CellConfig.from_pci(252), 0, 2, np.random.default_rng(0), 72)[0]
    real = flat_realization(n_frames=2)
    real.cfo_hz = np.array([250.0])
    y = synthesize_received([g], real, 0)
    assert np.allclose(compensate_cfo(y, 250.0).samples, g.samples)
    assert compensate_cfo(y, 0.0) is y


def crs_capture(duty, n_frames=40, n_sc=1200, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    cells = [CellConfig.from_pci(252), CellConfig.from_pci(249, payload_duty=duty)]
    grids = [map_frames(c, 0, n_frames, rng, n_sc, subframes=(0,), symbols=(0, 4, 7, 11))[0]
             for c in cells]
    real = flat_realization(n_streams=2, n_frames=n_frames, n_sc=n_sc, gain=0.8 - 0.2j,
                            noise_var=noise)
    return synthesize_received(grids, real, 0, rng)


def test_crs_estimate_exact_without_interference():
    est = crs_ls_estimate(crs_capture(0.0), 252)
    assert est.values.shape == (40, 1, 200)   # 200 CRS subcarriers in 20 MHz
    assert np.allclose(est.values, 0.8 - 0.2j)
    assert est.sample_rate == 100.0


def test_crs_nmse_floor_at_equal_power_interference():
    est = crs_ls_estimate(crs_capture(1.0), 252).values
    h = 0.8 - 0.2j
    nmse = np.mean(np.abs(est - h) ** 2) / abs(h) ** 2
    # neighbour payload at the serving power: SIR 0 dB on every CRS RE
    assert 10 * np.log10(nmse) == pytest.approx(0.0, abs=0.5)


def test_rsrp_absolute_and_sentinel():
    y = crs_capture(0.0, noise=1e-4)
    assert measure_rsrp(y, 252, ref_db=-77.0) == pytest.approx(
        -77.0 + 20 * np.log10(abs(0.8 - 0.2j)), abs=1.0)
    # a PCI that transmits nothing reads -inf
    empty = y.like()
    assert measure_rsrp(empty, 252) == float("-inf")


def test_joint_ls_fast_enough(rng):
    h, _ = group_constant(rng, 100, 4, 3, 4)
    grid = region_grid(LIVING_ROOM_CELLS, 100, h, sfn0=500)
    joint_ls_estimate(grid, LIVING_ROOM_CELLS, 3, 4)
    t0 = time.perf_counter()
    joint_ls_estimate(grid, LIVING_ROOM_CELLS, 3, 4)
    assert time.perf_counter() - t0 < 1.0


def test_interpolate_groups_constant(rng):
    h = np.full((3, 1, 4, 72), 2.0 - 1.0j)
    est = joint_ls_estimate(region_grid([(252, 1)], 3, h), [(252, 1)], 3, 4)
    out = interpolate_groups(est, 0, np.arange(72))
    assert np.allclose(out, 2.0 - 1.0j)
