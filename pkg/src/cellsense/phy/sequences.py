"""Deterministic LTE downlink sequences: Gold PRBS, PSS, SSS and CRS."""

from functools import lru_cache

import numpy as np

N_RB_MAX = 110
N_SYMB = 14
PSS_ROOTS = (25, 29, 34)

_NC = 1600


def gold_sequence(c_init: int, length: int) -> np.ndarray:
    """Length-31 Gold sequence used for LTE scrambling and reference signals.

    Parameters
    ----------
    c_init : int
        Initial state of the second m-sequence register (31 bits).
    length : int
        Number of output bits.

    Returns
    -------
    np.ndarray
        uint8 array of 0/1 values.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if not 0 <= c_init < 2**31:
        raise ValueError("c_init must fit in 31 bits")
    return _gold_cached(int(c_init), int(length)).copy()


@lru_cache(maxsize=4096)
def _gold_cached(c_init, length):
    total = length + _NC + 31
    x1 = np.zeros(total, dtype=np.uint8)
    x2 = np.zeros(total, dtype=np.uint8)
    x1[0] = 1
    x2[:31] = (c_init >> np.arange(31)) & 1
    # recurrences only look back >= 28 steps, so blocks of 28 are independent
    n = 0
    while n + 31 < total:
        m = min(28, total - 31 - n)
        x1[n + 31:n + 31 + m] = x1[n + 3:n + 3 + m] ^ x1[n:n + m]
        x2[n + 31:n + 31 + m] = (x2[n + 3:n + 3 + m] ^ x2[n + 2:n + 2 + m]
                                 ^ x2[n + 1:n + 1 + m] ^ x2[n:n + m])
        n += m
    out = x1[_NC:_NC + length] ^ x2[_NC:_NC + length]
    out.flags.writeable = False
    return out


def generate_pss(n_id2: int) -> np.ndarray:
    """Frequency-domain PSS (62 Zadoff-Chu samples, DC element punctured)."""
    if n_id2 not in (0, 1, 2):
        raise ValueError(f"n_id2 must be 0, 1 or 2, got {n_id2}")
    return _pss_cached(n_id2).copy()


@lru_cache(maxsize=3)
def _pss_cached(n_id2):
    u = PSS_ROOTS[n_id2]
    n = np.arange(62)
    phase = np.where(n < 31, u * n * (n + 1), u * (n + 1) * (n + 2))
    out = np.exp(-1j * np.pi * phase / 63)
    out.flags.writeable = False
    return out


def _msequence(taps, length=31):
    x = np.zeros(length, dtype=np.int64)
    x[4] = 1
    for i in range(length - 5):
        x[i + 5] = sum(x[i + t] for t in taps) % 2
    return 1 - 2 * x


_S_TILDE = _msequence((2, 0))
_C_TILDE = _msequence((3, 0))
_Z_TILDE = _msequence((4, 2, 1, 0))


def sss_indices(n_id1: int) -> tuple[int, int]:
    """Cyclic shifts (m0, m1) selected by the group identity."""
    qp = n_id1 // 30
    q = (n_id1 + qp * (qp + 1) // 2) // 30
    mp = n_id1 + q * (q + 1) // 2
    m0 = mp % 31
    m1 = (m0 + mp // 31 + 1) % 31
    return m0, m1


def generate_sss(n_id1: int, n_id2: int, subframe: int) -> np.ndarray:
    """Interleaved m-sequence SSS for subframe 0 or 5, as 62 real +-1 values."""
    if not 0 <= n_id1 <= 167:
        raise ValueError(f"n_id1 must be in [0, 167], got {n_id1}")
    if n_id2 not in (0, 1, 2):
        raise ValueError(f"n_id2 must be 0, 1 or 2, got {n_id2}")
    if subframe not in (0, 5):
        raise ValueError("SSS is only transmitted in subframes 0 and 5")
    return _sss_cached(n_id1, n_id2, subframe).copy()


@lru_cache(maxsize=1024)
def _sss_cached(n_id1, n_id2, subframe):
    m0, m1 = sss_indices(n_id1)
    n = np.arange(31)
    s0 = _S_TILDE[(n + m0) % 31]
    s1 = _S_TILDE[(n + m1) % 31]
    c0 = _C_TILDE[(n + n_id2) % 31]
    c1 = _C_TILDE[(n + n_id2 + 3) % 31]
    z0 = _Z_TILDE[(n + m0 % 8) % 31]
    z1 = _Z_TILDE[(n + m1 % 8) % 31]
    d = np.empty(62)
    if subframe == 0:
        d[0::2] = s0 * c0
        d[1::2] = s1 * c1 * z0
    else:
        d[0::2] = s1 * c0
        d[1::2] = s0 * c1 * z1
    d.flags.writeable = False
    return d


def crs_subcarrier_offset(v: int, n_id: int) -> int:
    """Position of the CRS inside each group of six subcarriers."""
    if v not in (0, 3):
        raise ValueError(f"v must be 0 or 3, got {v}")
    if not 0 <= n_id <= 503:
        raise ValueError(f"n_id must be in [0, 503], got {n_id}")
    return (v + n_id % 6) % 6


def crs_symbols(port: int) -> tuple[int, ...]:
    """Subframe symbol indices (normal CP) carrying CRS for ``port``."""
    if port in (0, 1):
        return (0, 4, 7, 11)
    if port in (2, 3):
        return (1, 8)
    raise ValueError(f"unsupported antenna port {port}")


def crs_v(port: int, symbol: int) -> int:
    l = symbol % 7
    if port == 0:
        return 0 if l == 0 else 3
    if port == 1:
        return 3 if l == 0 else 0
    if port == 2:
        return 3 * ((symbol // 7) % 2)
    if port == 3:
        return 3 + 3 * ((symbol // 7) % 2)
    raise ValueError(f"unsupported antenna port {port}")


@lru_cache(maxsize=8192)
def crs_sequence(n_id: int, subframe: int, symbol: int, n_rb: int) -> np.ndarray:
    """QPSK CRS values for one symbol, already cut to ``2 * n_rb`` entries."""
    ns = 2 * subframe + symbol // 7
    l = symbol % 7
    c_init = 2**10 * (7 * (ns + 1) + l + 1) * (2 * n_id + 1) + 2 * n_id + 1
    c = _gold_cached(c_init % 2**31, 4 * N_RB_MAX).astype(np.float64)
    r = ((1 - 2 * c[0::2]) + 1j * (1 - 2 * c[1::2])) / np.sqrt(2)
    offset = N_RB_MAX - n_rb
    out = r[offset:offset + 2 * n_rb].copy()
    out.flags.writeable = False
    return out


def crs_positions(n_id: int, port: int, symbol: int, n_sc: int) -> np.ndarray:
    """Subcarrier indices of the CRS of ``port`` in ``symbol``."""
    if symbol not in crs_symbols(port):
        raise ValueError(f"symbol {symbol} carries no CRS for port {port}")
    k0 = (crs_v(port, symbol) + n_id % 6) % 6
    return np.arange(k0, n_sc, 6)
