"""PBCH channel coding: CRC16, tail-biting convolutional code, rate matching.

Bit vectors are uint8 arrays of 0/1.  Soft values follow the convention
``llr > 0`` means bit 0, which matches the QPSK mapping ``1 - 2b``.
"""

from functools import lru_cache

import numpy as np

CONSTRAINT_LENGTH = 7
GENERATORS_OCTAL = (0o133, 0o171, 0o165)
N_STATES = 2 ** (CONSTRAINT_LENGTH - 1)

_CRC16_POLY = 0x1021
_INTERLEAVER_PERM = np.array([1, 17, 9, 25, 5, 21, 13, 29, 3, 19, 11, 27, 7, 23, 15, 31,
                              0, 16, 8, 24, 4, 20, 12, 28, 2, 18, 10, 26, 6, 22, 14, 30])

PORT_MASKS = {
    1: np.zeros(16, dtype=np.uint8),
    2: np.ones(16, dtype=np.uint8),
    4: np.tile(np.array([0, 1], dtype=np.uint8), 8),
}


def crc16(bits: np.ndarray) -> np.ndarray:
    """CRC with generator D^16 + D^12 + D^5 + 1, zero initial state."""
    reg = 0
    for b in np.asarray(bits, dtype=np.uint8):
        fb = ((reg >> 15) & 1) ^ int(b)
        reg = (reg << 1) & 0xFFFF
        if fb:
            reg ^= _CRC16_POLY
    return ((reg >> np.arange(15, -1, -1)) & 1).astype(np.uint8)


def _generator_taps():
    # tap j multiplies c[k - j]; octal MSB is the current input bit
    return np.array([[(g >> (CONSTRAINT_LENGTH - 1 - j)) & 1 for j in range(CONSTRAINT_LENGTH)]
                     for g in GENERATORS_OCTAL], dtype=np.uint8)


_TAPS = _generator_taps()


def conv_encode(bits: np.ndarray) -> np.ndarray:
    """Tail-biting rate 1/3 encoder; returns shape (3, len(bits))."""
    c = np.asarray(bits, dtype=np.uint8)
    k = np.arange(len(c))
    out = np.zeros((3, len(c)), dtype=np.uint8)
    for j in range(CONSTRAINT_LENGTH):
        shifted = c[(k - j) % len(c)]
        out ^= _TAPS[:, j:j + 1] * shifted
    return out


@lru_cache(maxsize=None)
def _trellis():
    # state bit (j-1) holds c[k-j]; next state shifts in the new bit at bit 0
    states = np.arange(N_STATES)
    outputs = np.zeros((N_STATES, 2, 3), dtype=np.int8)
    for s in states:
        for b in (0, 1):
            reg = [b] + [(s >> (j - 1)) & 1 for j in range(1, CONSTRAINT_LENGTH)]
            for i in range(3):
                outputs[s, b, i] = sum(_TAPS[i, j] * reg[j] for j in range(CONSTRAINT_LENGTH)) % 2
    # predecessors of s': (s' >> 1) | (x << 5), input bit = s' & 1
    nxt = np.arange(N_STATES)
    pred = np.stack([(nxt >> 1) | (x << (CONSTRAINT_LENGTH - 2)) for x in (0, 1)], axis=1)
    return outputs, pred


def viterbi_tailbiting(llr: np.ndarray, n_wrap: int = 3) -> np.ndarray:
    """Wrap-around Viterbi decoder for the tail-biting code.

    ``llr`` has shape (3, K).  The trellis is run over ``n_wrap`` copies of the
    block starting from equiprobable states and decisions are taken from the
    middle copy.
    """
    llr = np.asarray(llr, dtype=np.float64)
    n_bits = llr.shape[1]
    outputs, pred = _trellis()
    signs = 1.0 - 2.0 * outputs  # (state, bit, stream)
    nxt = np.arange(N_STATES)
    in_bit = nxt & 1
    # branch sign patterns for each (next state, predecessor choice)
    branch = signs[pred, in_bit[:, None], :]  # (64, 2, 3)

    total = n_bits * n_wrap
    pm = np.zeros(N_STATES)
    choice = np.empty((total, N_STATES), dtype=np.uint8)
    for t in range(total):
        bm = branch @ llr[:, t % n_bits]  # (64, 2)
        cand = pm[pred] + bm
        ch = np.argmax(cand, axis=1)
        choice[t] = ch
        pm = cand[nxt, ch]
        pm -= pm.max()

    state = int(np.argmax(pm))
    decided = np.empty(total, dtype=np.uint8)
    for t in range(total - 1, -1, -1):
        decided[t] = state & 1
        state = int(pred[state, choice[t, state]])
    start = n_bits * (n_wrap // 2)
    return decided[start:start + n_bits]


@lru_cache(maxsize=None)
def rate_match_index(n_bits: int, e_len: int) -> np.ndarray:
    """Index map from rate-matched position to flattened coded bit (3*n_bits)."""
    cols = 32
    rows = -(-n_bits // cols)
    n_dummy = rows * cols - n_bits
    streams = []
    for i in range(3):
        y = np.full(rows * cols, -1, dtype=np.int64)
        y[n_dummy:] = i * n_bits + np.arange(n_bits)
        mat = y.reshape(rows, cols)[:, _INTERLEAVER_PERM]
        streams.append(mat.T.reshape(-1))
    w = np.concatenate(streams)
    w = w[w >= 0]
    idx = w[np.arange(e_len) % len(w)]
    idx.flags.writeable = False
    return idx


def rate_match(coded: np.ndarray, e_len: int) -> np.ndarray:
    coded = np.asarray(coded)
    return coded.reshape(-1)[rate_match_index(coded.shape[1], e_len)]


def rate_dematch(llr: np.ndarray, n_bits: int, positions: np.ndarray | None = None) -> np.ndarray:
    """Soft-combine rate-matched LLRs back into shape (3, n_bits).

    ``positions`` selects which rate-matched indices the given LLRs occupy;
    by default they are assumed to start at position 0.
    """
    llr = np.asarray(llr, dtype=np.float64)
    if positions is None:
        positions = np.arange(len(llr))
    idx = rate_match_index(n_bits, int(positions.max()) + 1)
    acc = np.zeros(3 * n_bits)
    np.add.at(acc, idx[positions], llr)
    return acc.reshape(3, n_bits)
