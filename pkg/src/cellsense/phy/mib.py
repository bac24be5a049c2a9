"""Master information block payload and PBCH codeword generation."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .coding import PORT_MASKS, conv_encode, crc16, rate_dematch, rate_match, viterbi_tailbiting
from .sequences import gold_sequence

MIB_BITS = 24
CODEWORD_BITS = 1920
QUARTER_BITS = CODEWORD_BITS // 4


@dataclass(frozen=True)
class MibPayload:
    bandwidth_index: int = 5
    phich_config: int = 0
    sfn_msb8: int = 0
    spare: int = 0

    def __post_init__(self):
        if not 0 <= self.bandwidth_index < 8:
            raise ValueError("bandwidth_index is a 3-bit field")
        if not 0 <= self.phich_config < 8:
            raise ValueError("phich_config is a 3-bit field")
        if not 0 <= self.sfn_msb8 < 256:
            raise ValueError("sfn_msb8 is an 8-bit field")
        if not 0 <= self.spare < 1024:
            raise ValueError("spare is a 10-bit field")

    @classmethod
    def for_sfn(cls, sfn: int, bandwidth_index: int = 5, phich_config: int = 0) -> "MibPayload":
        return cls(bandwidth_index, phich_config, (sfn % 1024) >> 2)

    def sfn(self, quarter_index: int) -> int:
        return (self.sfn_msb8 << 2) + quarter_index

    def advance(self, frames: int) -> "MibPayload":
        """MIB transmitted ``frames`` radio frames later (SFN wraps at 1024)."""
        sfn = (self.sfn_msb8 << 2) + frames
        return MibPayload(self.bandwidth_index, self.phich_config, (sfn % 1024) >> 2, self.spare)

    def to_bits(self) -> np.ndarray:
        fields = ((self.bandwidth_index, 3), (self.phich_config, 3),
                  (self.sfn_msb8, 8), (self.spare, 10))
        return np.concatenate([(v >> np.arange(n - 1, -1, -1)) & 1
                               for v, n in fields]).astype(np.uint8)

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "MibPayload":
        bits = np.asarray(bits, dtype=np.int64)
        vals = []
        pos = 0
        for n in (3, 3, 8, 10):
            vals.append(int(bits[pos:pos + n] @ (1 << np.arange(n - 1, -1, -1))))
            pos += n
        return cls(*vals)


def _check_ports(n_ports):
    if n_ports not in PORT_MASKS:
        raise ValueError(f"unsupported antenna port count {n_ports}")


def pbch_scrambling(n_id: int) -> np.ndarray:
    return gold_sequence(n_id, CODEWORD_BITS)


def encode_mib(mib: MibPayload, n_ports: int, n_id: int) -> np.ndarray:
    """Scrambled 1920-bit PBCH codeword covering one 40 ms TTI."""
    _check_ports(n_ports)
    return _encode_cached(mib, n_ports, n_id).copy()


@lru_cache(maxsize=8192)
def _encode_cached(mib, n_ports, n_id):
    info = mib.to_bits()
    parity = crc16(info) ^ PORT_MASKS[n_ports]
    coded = conv_encode(np.concatenate([info, parity]))
    out = rate_match(coded, CODEWORD_BITS) ^ pbch_scrambling(n_id)
    out.flags.writeable = False
    return out


def decode_codeword_llr(llr: np.ndarray, positions: np.ndarray, n_id: int,
                        port_hypotheses=(1, 2, 4)):
    """Descramble, soft-combine and Viterbi-decode PBCH LLRs.

    Parameters
    ----------
    llr : np.ndarray
        Soft bits (``> 0`` favours 0) in transmission order.
    positions : np.ndarray
        Codeword positions (0..1919) of each soft bit.
    n_id : int
        Cell identity used for descrambling.
    port_hypotheses : iterable of int
        CRC masks tried in order.

    Returns
    -------
    tuple or None
        ``(MibPayload, n_ports)`` when a CRC mask matches, else None.
    """
    scr = pbch_scrambling(n_id)[positions].astype(np.float64)
    soft = rate_dematch(np.asarray(llr) * (1.0 - 2.0 * scr), MIB_BITS + 16, positions)
    bits = viterbi_tailbiting(soft)
    info, parity = bits[:MIB_BITS], bits[MIB_BITS:]
    mask = crc16(info) ^ parity
    for n_ports in port_hypotheses:
        if np.array_equal(mask, PORT_MASKS[n_ports]):
            return MibPayload.from_bits(info), n_ports
    return None
