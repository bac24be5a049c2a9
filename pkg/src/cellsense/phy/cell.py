"""Cell configuration and per-cell transmit resource grids."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ConfigError
from .grid import ALL_SUBFRAMES, ALL_SYMBOLS, N_SUBFRAMES, N_SYMBOLS, ReMap, ResourceGrid, Role
from .mib import QUARTER_BITS, MibPayload, encode_mib
from .sequences import crs_positions, crs_sequence, crs_symbols, generate_pss, generate_sss

# TDD uplink-downlink configuration 2 (DSUDDDSUDD); UL subframes carry nothing here
UL_SUBFRAMES = (2, 7)
PSS_SUBFRAMES = (1, 6)
PSS_SYMBOL = 2
SSS_SUBFRAMES = (0, 5)
SSS_SYMBOL = 13
PBCH_SUBFRAME = 0
PBCH_SYMBOLS = (7, 8, 9, 10)
PBCH_WIDTH = 72
PBCH_RE_COUNT = 240

_BANDWIDTH_INDEX = {6: 0, 15: 1, 25: 2, 50: 3, 75: 4, 100: 5}


@dataclass(frozen=True)
class CellIdentity:
    n_id: int

    def __post_init__(self):
        if not 0 <= self.n_id <= 503:
            raise ValueError(f"PCI must be in [0, 503], got {self.n_id}")

    @classmethod
    def from_parts(cls, n_id1: int, n_id2: int) -> "CellIdentity":
        if not (0 <= n_id1 <= 167 and 0 <= n_id2 <= 2):
            raise ValueError("invalid identity components")
        return cls(3 * n_id1 + n_id2)

    @property
    def n_id1(self) -> int:
        return self.n_id // 3

    @property
    def n_id2(self) -> int:
        return self.n_id % 3

    @property
    def v_shift(self) -> int:
        return self.n_id % 6


@dataclass(frozen=True)
class CellConfig:
    identity: CellIdentity
    n_ports: int = 1
    tx_power_db: float = 0.0
    payload_duty: float = 0.0

    def __post_init__(self):
        if self.n_ports not in (1, 2):
            raise ValueError(f"n_ports must be 1 or 2, got {self.n_ports}")
        if not 0.0 <= self.payload_duty <= 1.0:
            raise ValueError("payload_duty must lie in [0, 1]")

    @classmethod
    def from_pci(cls, pci: int, **kw) -> "CellConfig":
        return cls(CellIdentity(pci), **kw)

    @property
    def n_id(self) -> int:
        return self.identity.n_id

    @property
    def amplitude(self) -> float:
        return 10.0 ** (self.tx_power_db / 20.0)


def validate_cells(cells) -> None:
    """Reject cell sets that break the mod-6 PCI planning rule."""
    seen = {}
    for cell in cells:
        shift = cell.identity.v_shift
        if shift in seen:
            raise ConfigError(f"cells {seen[shift]} and {cell.n_id} share PCI mod 6 = {shift}; "
                              "their CRS would collide")
        seen[shift] = cell.n_id


def bandwidth_index(n_sc: int) -> int:
    try:
        return _BANDWIDTH_INDEX[n_sc // 12]
    except KeyError:
        raise ValueError(f"{n_sc // 12} RB is not an LTE bandwidth") from None


def pbch_band(n_sc: int) -> slice:
    return slice(n_sc // 2 - PBCH_WIDTH // 2, n_sc // 2 + PBCH_WIDTH // 2)


def sync_band(n_sc: int) -> slice:
    return slice(n_sc // 2 - 31, n_sc // 2 + 31)


@lru_cache(maxsize=256)
def cell_layout(n_id: int, n_ports: int, n_sc: int) -> np.ndarray:
    """Role of every RE of one frame, shape (10, 14, n_sc)."""
    roles = np.full((N_SUBFRAMES, N_SYMBOLS, n_sc), int(Role.PAYLOAD), dtype=np.int8)
    roles[list(UL_SUBFRAMES)] = Role.EMPTY
    center = pbch_band(n_sc)
    for sf in PSS_SUBFRAMES:
        roles[sf, PSS_SYMBOL, center] = Role.EMPTY
        roles[sf, PSS_SYMBOL, sync_band(n_sc)] = Role.PSS
    for sf in SSS_SUBFRAMES:
        roles[sf, SSS_SYMBOL, center] = Role.EMPTY
        roles[sf, SSS_SYMBOL, sync_band(n_sc)] = Role.SSS
    # PBCH region; CRS positions of ports 0-3 are always reserved
    region = np.full((len(PBCH_SYMBOLS), PBCH_WIDTH), int(Role.PBCH), dtype=np.int8)
    shift = n_id % 6
    k = np.arange(PBCH_WIDTH) + center.start
    reserved = (k % 6 == shift) | (k % 6 == (shift + 3) % 6)
    region[0, reserved] = Role.EMPTY
    region[1, reserved] = Role.EMPTY
    roles[PBCH_SUBFRAME, PBCH_SYMBOLS[0]:PBCH_SYMBOLS[-1] + 1, center] = region
    for sf in range(N_SUBFRAMES):
        if sf in UL_SUBFRAMES:
            continue
        for port in range(n_ports):
            for sym in crs_symbols(port):
                roles[sf, sym, crs_positions(n_id, port, sym, n_sc)] = Role.CRS
    roles.flags.writeable = False
    return roles


def generate_crs(cell: CellConfig, frame: int, subframe: int, symbol: int, port: int = 0,
                 n_sc: int = 1200):
    """Unit-power CRS of one symbol (scaled by the cell power) and its ReMap.

    ``frame`` is accepted for interface symmetry; the CRS repeats every frame.
    """
    if subframe in UL_SUBFRAMES or not 0 <= subframe < N_SUBFRAMES:
        raise ValueError(f"subframe {subframe} carries no downlink CRS")
    if port >= cell.n_ports:
        raise ValueError(f"cell has {cell.n_ports} port(s), asked for port {port}")
    k = crs_positions(cell.n_id, port, symbol, n_sc)
    seq = cell.amplitude * crs_sequence(cell.n_id, subframe, symbol, n_sc // 12)
    remap = ReMap(np.full(len(k), subframe), np.full(len(k), symbol), k,
                  np.full(len(k), int(Role.CRS), dtype=np.int8))
    return seq, remap


@lru_cache(maxsize=64)
def static_content(n_id: int, n_ports: int, n_sc: int) -> np.ndarray:
    """Frame-invariant signals (CRS, PSS, SSS) per port, unit power."""
    out = np.zeros((n_ports, N_SUBFRAMES, N_SYMBOLS, n_sc), dtype=np.complex128)
    ident = CellIdentity(n_id)
    for sf in range(N_SUBFRAMES):
        if sf in UL_SUBFRAMES:
            continue
        for port in range(n_ports):
            for sym in crs_symbols(port):
                out[port, sf, sym, crs_positions(n_id, port, sym, n_sc)] = \
                    crs_sequence(n_id, sf, sym, n_sc // 12)
    for sf in PSS_SUBFRAMES:
        out[0, sf, PSS_SYMBOL, sync_band(n_sc)] = generate_pss(ident.n_id2)
    for sf in SSS_SUBFRAMES:
        out[0, sf, SSS_SYMBOL, sync_band(n_sc)] = generate_sss(ident.n_id1, ident.n_id2, sf)
    out.flags.writeable = False
    return out


def pbch_positions(n_id: int, n_sc: int):
    """(symbol, subcarrier) arrays of the 240 PBCH REs in mapping order."""
    roles = cell_layout(n_id, 1, n_sc)
    band = pbch_band(n_sc)
    sym, k = np.nonzero(roles[PBCH_SUBFRAME, PBCH_SYMBOLS[0]:PBCH_SYMBOLS[-1] + 1, band]
                        == Role.PBCH)
    return sym + PBCH_SYMBOLS[0], k + band.start


def qpsk(bits: np.ndarray) -> np.ndarray:
    b = np.asarray(bits, dtype=np.float64).reshape(-1, 2)
    return ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) / np.sqrt(2)


def sfbc_precode(d: np.ndarray) -> np.ndarray:
    """Two-port space-frequency block code; returns shape (2, len(d))."""
    x0, x1 = d[0::2], d[1::2]
    out = np.empty((2, len(d)), dtype=np.complex128)
    out[0, 0::2] = x0
    out[0, 1::2] = x1
    out[1, 0::2] = -np.conj(x1)
    out[1, 1::2] = np.conj(x0)
    return out / np.sqrt(2)


def modulate_pbch(codeword: np.ndarray, quarter_index: int, cell: CellConfig, n_sc: int = 1200):
    """Per-port PBCH symbols (shape (n_ports, 240)) for one frame and their ReMap."""
    if not 0 <= quarter_index < 4:
        raise ValueError("quarter_index must be in 0..3")
    seg = np.asarray(codeword)[quarter_index * QUARTER_BITS:(quarter_index + 1) * QUARTER_BITS]
    d = qpsk(seg)
    x = d[None, :] if cell.n_ports == 1 else sfbc_precode(d)
    sym, k = pbch_positions(cell.n_id, n_sc)
    remap = ReMap(np.zeros(len(k), dtype=np.int64), sym, k,
                  np.full(len(k), int(Role.PBCH), dtype=np.int8))
    return cell.amplitude * x, remap


@lru_cache(maxsize=16384)
def _pbch_frame(n_id, n_ports, sfn, bw_index, phich_config=0):
    mib = MibPayload.for_sfn(sfn, bw_index, phich_config)
    cw = encode_mib(mib, n_ports, n_id)
    d = qpsk(cw[(sfn % 4) * QUARTER_BITS:(sfn % 4 + 1) * QUARTER_BITS])
    out = d[None, :] if n_ports == 1 else sfbc_precode(d)
    out.flags.writeable = False
    return out


def reconstruct_pbch_sequence(n_id: int, n_ports: int, sfn: int, n_sc: int = 1200,
                              mib: MibPayload | None = None) -> np.ndarray:
    """Known unit-power PBCH transmit symbols of frame ``sfn``, shape (n_ports, 240).

    ``mib`` is any MIB decoded from this cell; only its constant fields are
    used, the SFN part is regenerated from ``sfn``.
    """
    if mib is None:
        return _pbch_frame(n_id, n_ports, sfn % 1024, bandwidth_index(n_sc)).copy()
    return _pbch_frame(n_id, n_ports, sfn % 1024, mib.bandwidth_index, mib.phich_config).copy()


def known_region(n_id: int, n_ports: int, sfn: int, n_sc: int) -> np.ndarray:
    """Unit-power transmit values of the 4x72 PBCH region, shape (n_ports, 4, 72).

    Includes PBCH and the cell's own CRS; reserved REs are zero.
    """
    band = pbch_band(n_sc)
    out = np.array(static_content(n_id, n_ports, n_sc)[:, PBCH_SUBFRAME,
                                                        PBCH_SYMBOLS[0]:PBCH_SYMBOLS[-1] + 1, band])
    sym, k = pbch_positions(n_id, n_sc)
    out[:, sym - PBCH_SYMBOLS[0], k - band.start] = reconstruct_pbch_sequence(n_id, n_ports, sfn, n_sc)
    return out


def map_frames(cell: CellConfig, sfn0: int, n_frames: int, rng: np.random.Generator,
               n_sc: int = 1200, subframes=ALL_SUBFRAMES, symbols=ALL_SYMBOLS):
    """Transmit grids of one cell, one ResourceGrid per antenna port.

    PAYLOAD REs inside the held window are filled with unit-power QPSK, each
    occupied independently with probability ``payload_duty`` per frame.
    """
    subframes, symbols = tuple(subframes), tuple(symbols)
    n_ports = cell.n_ports
    roles = cell_layout(cell.n_id, n_ports, n_sc)[np.ix_(subframes, symbols, range(n_sc))]
    base = static_content(cell.n_id, n_ports, n_sc)[:, list(subframes)][:, :, list(symbols)]
    samples = np.broadcast_to(base[:, None], (n_ports, n_frames) + base.shape[1:]).copy()

    if PBCH_SUBFRAME in subframes:
        sym, k = pbch_positions(cell.n_id, n_sc)
        sym_pos = {s: i for i, s in enumerate(symbols)}
        held = np.array([s in sym_pos for s in sym])
        if held.any():
            isf = subframes.index(PBCH_SUBFRAME)
            isym = np.array([sym_pos[s] for s in sym[held]])
            for f in range(n_frames):
                x = _pbch_frame(cell.n_id, n_ports, (sfn0 + f) % 1024, bandwidth_index(n_sc))
                samples[:, f, isf, isym, k[held]] = x[:, held]

    payload = roles == Role.PAYLOAD
    n_pay = int(payload.sum())
    if n_pay and cell.payload_duty > 0:
        bits = rng.integers(0, 2, size=(n_ports, n_frames, n_pay, 2))
        vals = ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / np.sqrt(2 * n_ports)
        if cell.payload_duty < 1:
            vals *= rng.random((n_frames, n_pay)) < cell.payload_duty
        samples[:, :, payload] = vals
    samples *= cell.amplitude
    return tuple(ResourceGrid(samples[p], sfn0, subframes, symbols) for p in range(n_ports))


def map_frame(cell: CellConfig, frame_index: int, rng: np.random.Generator, n_sc: int = 1200):
    """Single full frame; see :func:`map_frames`."""
    return map_frames(cell, frame_index, 1, rng, n_sc)

