import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cellsense.phy.coding import (PORT_MASKS, conv_encode, crc16, rate_dematch, rate_match,
                                  rate_match_index, viterbi_tailbiting)
from cellsense.phy.mib import CODEWORD_BITS, MibPayload, decode_codeword_llr, encode_mib


def reference_crc16(bits):
    """Polynomial long division of bits * D^16 by D^16 + D^12 + D^5 + 1."""
    poly = [1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]
    reg = list(bits) + [0] * 16
    for i in range(len(bits)):
        if reg[i]:
            for j, p in enumerate(poly):
                reg[i + j] ^= p
    return np.array(reg[-16:], dtype=np.uint8)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=64))
def test_crc16_matches_long_division(bits):
    assert np.array_equal(crc16(np.array(bits)), reference_crc16(bits))


def test_port_masks_distinct():
    masks = [m.tobytes() for m in PORT_MASKS.values()]
    assert len(set(masks)) == 3


def reference_conv(bits):
    """Direct shift-register encoder started in the tail-biting state."""
    gens = [0o133, 0o171, 0o165]
    n = len(bits)
    state = [bits[(-1 - j) % n] for j in range(6)]  # c[k-1] .. c[k-6] at k = 0
    out = np.zeros((3, n), dtype=np.uint8)
    for k in range(n):
        reg = [bits[k]] + state
        for i, g in enumerate(gens):
            taps = [(g >> (6 - j)) & 1 for j in range(7)]
            out[i, k] = sum(t * r for t, r in zip(taps, reg)) % 2
        state = [bits[k]] + state[:-1]
    return out


@given(st.lists(st.integers(0, 1), min_size=8, max_size=40))
def test_conv_encoder_matches_shift_register(bits):
    assert np.array_equal(conv_encode(np.array(bits)), reference_conv(bits))


@given(st.lists(st.integers(0, 1), min_size=40, max_size=40))
def test_viterbi_inverts_encoder(bits):
    coded = conv_encode(np.array(bits))
    assert np.array_equal(viterbi_tailbiting(1.0 - 2.0 * coded), bits)


def test_rate_matching_covers_every_coded_bit():
    idx = rate_match_index(40, CODEWORD_BITS)
    assert len(idx) == CODEWORD_BITS
    assert set(idx[:120].tolist()) == set(range(120))
    counts = np.bincount(idx, minlength=120)
    assert counts.min() == 16 and counts.max() == 16


def test_rate_dematch_accumulates_repetitions():
    coded = np.random.default_rng(0).integers(0, 2, (3, 40))
    llr = 1.0 - 2.0 * rate_match(coded, CODEWORD_BITS)
    soft = rate_dematch(llr, 40)
    assert np.array_equal(soft, 16 * (1.0 - 2.0 * coded))


def test_mib_bits_roundtrip():
    m = MibPayload(3, 5, 201, 0)
    assert MibPayload.from_bits(m.to_bits()) == m
    assert len(m.to_bits()) == 24


@pytest.mark.parametrize("kw", [dict(bandwidth_index=8), dict(sfn_msb8=256), dict(spare=1024)])
def test_mib_field_ranges(kw):
    with pytest.raises(ValueError):
        MibPayload(**kw)


def test_mib_sfn_advance_wraps():
    m = MibPayload.for_sfn(1023)
    assert m.sfn(3) == 1023
    assert m.advance(4).sfn(0) == 0
    assert m.advance(4 * 300).sfn_msb8 == (255 + 300) % 256


def test_codewords_differ_in_sfn_bits():
    a = encode_mib(MibPayload.for_sfn(0), 1, 252)
    b = encode_mib(MibPayload.for_sfn(4), 1, 252)
    assert a.shape == (1920,) and not np.array_equal(a, b)


def test_unsupported_port_count_rejected():
    with pytest.raises(ValueError):
        encode_mib(MibPayload(), 3, 0)


def test_wrong_identity_fails_crc():
    cw = encode_mib(MibPayload.for_sfn(64), 1, 252)
    assert decode_codeword_llr(1.0 - 2.0 * cw, np.arange(1920), 253) is None


def test_decode_survives_five_percent_flips():
    rng = np.random.default_rng(7)
    ok = 0
    for trial in range(50):
        mib = MibPayload.for_sfn(int(rng.integers(0, 1024)))
        ports = int(rng.choice([1, 2]))
        cw = encode_mib(mib, ports, 100).astype(np.int64)
        flip = rng.choice(1920, size=96, replace=False)
        cw[flip] ^= 1
        res = decode_codeword_llr(1.0 - 2.0 * cw, np.arange(1920), 100)
        ok += res == (mib, ports)
    assert ok == 50


def test_single_quarter_decodes_at_high_snr():
    mib = MibPayload.for_sfn(517)
    cw = encode_mib(mib, 2, 31)
    q = 2
    pos = q * 480 + np.arange(480)
    assert decode_codeword_llr(1.0 - 2.0 * cw[pos], pos, 31) == (mib, 2)
