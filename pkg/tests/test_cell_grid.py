import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cellsense.errors import ConfigError
from cellsense.phy.cell import (PBCH_RE_COUNT, CellConfig, cell_layout, generate_crs, known_region,
                                map_frame, map_frames, modulate_pbch, pbch_band, pbch_positions,
                                reconstruct_pbch_sequence, validate_cells)
from cellsense.phy.grid import GRID_MAGIC, ResourceGrid, Role, read_grid, write_grid
from cellsense.phy.mib import MibPayload, encode_mib


def cell(pci, ports=1, **kw):
    return CellConfig.from_pci(pci, n_ports=ports, **kw)


def test_crs_of_planned_cells_disjoint():
    for sf in (0, 1, 5):
        for sym in (0, 4, 7, 11):
            _, a = generate_crs(cell(252), 0, sf, sym)
            _, b = generate_crs(cell(249), 0, sf, sym)
            assert not a.positions() & b.positions()


def test_crs_deterministic_and_power_scaled():
    s1, m1 = generate_crs(cell(253, tx_power_db=-6.0), 3, 5, 7)
    s2, m2 = generate_crs(cell(253, tx_power_db=-6.0), 3, 5, 7)
    assert np.array_equal(s1, s2) and m1.positions() == m2.positions()
    assert 10 * np.log10(np.mean(np.abs(s1) ** 2)) == pytest.approx(-6.0, abs=1e-9)
    assert set(m1.role.tolist()) == {int(Role.CRS)}


@pytest.mark.parametrize("sf,sym", [(0, 3), (2, 0)])
def test_crs_rejects_non_crs_positions(sf, sym):
    with pytest.raises(ValueError):
        generate_crs(cell(252), 0, sf, sym)


def test_pbch_occupies_240_res_outside_crs():
    for pci in (252, 249, 253, 256, 1):
        x, remap = modulate_pbch(encode_mib(MibPayload(), 1, pci), 0, cell(pci))
        assert len(remap) == PBCH_RE_COUNT == 240 and x.shape == (1, 240)
        crs = set()
        for sym in (7, 8, 11):
            for port in (0, 1):
                try:
                    crs |= generate_crs(cell(pci, 2), 0, 0, sym, port)[1].positions()
                except ValueError:
                    pass
        assert not remap.positions() & crs


def test_pbch_region_common_to_all_cells():
    band = pbch_band(1200)
    for pci in (252, 249, 253, 256):
        sym, k = pbch_positions(pci, 1200)
        assert set(sym.tolist()) == {7, 8, 9, 10}
        assert k.min() >= band.start and k.max() < band.stop
        region = cell_layout(pci, 1, 1200)[0, 7:11, band]
        # every RE of the shared 4x72 window is PBCH, CRS or reserved
        assert region.shape == (4, 72)


def test_quarters_partition_codeword():
    cw = encode_mib(MibPayload.for_sfn(8), 1, 7)
    bits = []
    for q in range(4):
        x, _ = modulate_pbch(cw, q, cell(7))
        b0 = (x[0].real < 0).astype(np.uint8)
        b1 = (x[0].imag < 0).astype(np.uint8)
        bits.append(np.stack([b0, b1], axis=1).ravel())
    assert np.array_equal(np.concatenate(bits), cw)


@pytest.mark.parametrize("ports", [1, 2])
def test_reconstruction_matches_transmitter_across_sfn_wrap(ports):
    c = cell(256, ports)
    rng = np.random.default_rng(0)
    grids = map_frames(c, 1000, 64, rng, 1200, subframes=(0,), symbols=(7, 8, 9, 10))
    sym, k = pbch_positions(256, 1200)
    for f in range(64):
        sfn = (1000 + f) % 1024
        ref = reconstruct_pbch_sequence(256, ports, sfn, 1200)
        tx = np.stack([g.samples[f, 0, sym - 7, k] for g in grids])
        assert np.array_equal(tx, ref)
        # also equal to the modulator fed with the encoded MIB of that TTI
        cw = encode_mib(MibPayload.for_sfn(sfn), ports, 256)
        mod, _ = modulate_pbch(cw, sfn % 4, c)
        assert np.allclose(mod, ref)


def test_wrong_port_hypothesis_mismatches():
    ref = reconstruct_pbch_sequence(252, 1, 40, 1200)
    wrong = reconstruct_pbch_sequence(252, 2, 40, 1200)
    assert np.mean(np.isclose(ref[0], wrong[0])) < 0.5


def test_known_region_contains_pbch_and_own_crs():
    region = known_region(249, 1, 5, 1200)
    sym, k = pbch_positions(249, 1200)
    assert np.count_nonzero(region[0]) == 240 + 12  # PBCH plus port-0 CRS of symbol 7
    assert np.array_equal(region[0, sym - 7, k - pbch_band(1200).start],
                          reconstruct_pbch_sequence(249, 1, 5, 1200)[0])


def test_payload_duty_extremes_and_reproducibility():
    roles = cell_layout(253, 1, 72)
    payload = roles == Role.PAYLOAD
    g0 = map_frame(cell(253, payload_duty=0.0), 0, np.random.default_rng(1), 72)[0]
    g1 = map_frame(cell(253, payload_duty=1.0), 0, np.random.default_rng(1), 72)[0]
    g1b = map_frame(cell(253, payload_duty=1.0), 0, np.random.default_rng(1), 72)[0]
    assert np.all(g0.samples[0][payload] == 0)
    assert np.all(g1.samples[0][payload] != 0)
    assert np.array_equal(g1.samples, g1b.samples)
    deterministic = ~payload
    assert np.array_equal(g0.samples[0][deterministic], g1.samples[0][deterministic])
    assert np.all(g1.samples[0][roles == Role.EMPTY] == 0)


def test_partial_duty_fraction():
    roles = cell_layout(252, 1, 72)
    payload = roles == Role.PAYLOAD
    g = map_frames(cell(252, payload_duty=0.25), 0, 40, np.random.default_rng(3), 72)[0]
    occ = np.mean(np.abs(g.samples[:, payload]) > 0)
    assert occ == pytest.approx(0.25, abs=0.01)


def test_layout_tdd_placement():
    roles = cell_layout(252, 1, 1200)
    assert np.all(roles[[2, 7]] == Role.EMPTY)
    assert np.count_nonzero(roles[1, 2] == Role.PSS) == 62
    assert np.count_nonzero(roles[6, 2] == Role.PSS) == 62
    assert np.count_nonzero(roles[0, 13] == Role.SSS) == 62
    assert np.count_nonzero(roles[5, 13] == Role.SSS) == 62


def test_validate_cells_mod6():
    validate_cells([cell(252), cell(249), cell(253), cell(256)])
    with pytest.raises(ConfigError):
        validate_cells([cell(252), cell(258)])


def test_grid_file_roundtrip_and_header(tmp_path):
    rng = np.random.default_rng(0)
    samples = rng.normal(size=(3, 10, 14, 24)) + 1j * rng.normal(size=(3, 10, 14, 24))
    g = ResourceGrid(samples, 5)
    path = tmp_path / "g.csgrid"
    write_grid(path, g)
    raw = path.read_bytes()
    assert raw[:8] == GRID_MAGIC
    assert struct.unpack("<4I", raw[8:24]) == (3, 10, 14, 24)
    assert len(raw) == 24 + 3 * 10 * 14 * 24 * 8
    iq = np.frombuffer(raw[24:], "<f4")
    assert iq[0] == np.float32(samples[0, 0, 0, 0].real)
    assert iq[1] == np.float32(samples[0, 0, 0, 0].imag)
    back = read_grid(path)
    assert np.allclose(back.samples, samples.astype(np.complex64), atol=0)


def test_windowed_grid_file(tmp_path):
    rng = np.random.default_rng(1)
    g = ResourceGrid(rng.normal(size=(2, 2, 3, 12)) + 0j, 0, (0, 5), (1, 7, 9))
    write_grid(tmp_path / "w.csgrid", g)
    full = read_grid(tmp_path / "w.csgrid")
    assert full.samples.shape == (2, 10, 14, 12)
    assert np.all(full.re(1, 1) == 0)
    part = read_grid(tmp_path / "w.csgrid", (5, 0), (9,))
    assert np.allclose(part.re(5, 9), g.re(5, 9).astype(np.complex64))


def test_grid_file_rejects_garbage(tmp_path):
    p = tmp_path / "bad.csgrid"
    p.write_bytes(b"NOTAGRID" + bytes(16))
    with pytest.raises(ValueError):
        read_grid(p)
    p.write_bytes(GRID_MAGIC + struct.pack("<4I", 1, 10, 14, 12) + bytes(8))
    with pytest.raises(ValueError):
        read_grid(p)


@given(st.integers(0, 503), st.integers(0, 1023), st.sampled_from([1, 2]))
def test_reconstruction_deterministic(pci, sfn, ports):
    a = reconstruct_pbch_sequence(pci, ports, sfn, 72)
    b = reconstruct_pbch_sequence(pci, ports, sfn + 1024, 72)
    assert np.array_equal(a, b)
    assert a.shape == (ports, 240)
