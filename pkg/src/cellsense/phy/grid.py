"""Resource grids, RE role maps and the CSGRID01 binary format."""

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

N_SUBFRAMES = 10
N_SYMBOLS = 14
ALL_SUBFRAMES = tuple(range(N_SUBFRAMES))
ALL_SYMBOLS = tuple(range(N_SYMBOLS))

GRID_MAGIC = b"CSGRID01"


class Role(IntEnum):
    EMPTY = 0
    CRS = 1
    PSS = 2
    SSS = 3
    PBCH = 4
    PAYLOAD = 5


@dataclass(frozen=True)
class ReMap:
    """Tagged RE positions; ``subframe``, ``symbol``, ``subcarrier`` and
    ``role`` are parallel integer arrays."""

    subframe: np.ndarray
    symbol: np.ndarray
    subcarrier: np.ndarray
    role: np.ndarray

    def __len__(self):
        return len(self.subcarrier)

    def positions(self, role=None) -> set:
        keep = np.ones(len(self), bool) if role is None else self.role == role
        return set(zip(self.subframe[keep].tolist(), self.symbol[keep].tolist(),
                       self.subcarrier[keep].tolist()))

    @classmethod
    def from_mask(cls, roles: np.ndarray, wanted) -> "ReMap":
        """Collect entries of a (10, 14, n_sc) role array whose role is in ``wanted``."""
        sf, sym, k = np.nonzero(np.isin(roles, [int(r) for r in wanted]))
        return cls(sf, sym, k, roles[sf, sym, k].astype(np.int8))


@dataclass
class ResourceGrid:
    """Complex RE samples for one stream.

    ``samples`` has shape (n_frames, len(subframes), len(symbols), n_sc).  A
    grid may hold only a window of the subframes/symbols of each frame; the
    missing ones are treated as zero.
    """

    samples: np.ndarray
    sfn0: int = 0
    subframes: tuple = ALL_SUBFRAMES
    symbols: tuple = ALL_SYMBOLS
    _sf_pos: dict = field(init=False, repr=False)
    _sym_pos: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.subframes = tuple(int(s) for s in self.subframes)
        self.symbols = tuple(int(s) for s in self.symbols)
        expected = (len(self.subframes), len(self.symbols))
        if self.samples.ndim != 4 or self.samples.shape[1:3] != expected:
            raise ValueError(f"samples shape {self.samples.shape} does not match "
                             f"window {expected}")
        if self.samples.shape[3] % 12:
            raise ValueError("subcarrier count must be a multiple of 12")
        self._sf_pos = {s: i for i, s in enumerate(self.subframes)}
        self._sym_pos = {s: i for i, s in enumerate(self.symbols)}

    @property
    def n_frames(self) -> int:
        return self.samples.shape[0]

    @property
    def n_sc(self) -> int:
        return self.samples.shape[3]

    def holds(self, subframe: int, symbol: int) -> bool:
        return subframe in self._sf_pos and symbol in self._sym_pos

    def re(self, subframe: int, symbol: int) -> np.ndarray:
        """View of shape (n_frames, n_sc) for one (subframe, symbol)."""
        if not self.holds(subframe, symbol):
            raise KeyError(f"grid does not hold subframe {subframe} symbol {symbol}")
        return self.samples[:, self._sf_pos[subframe], self._sym_pos[symbol], :]

    def like(self, samples=None) -> "ResourceGrid":
        if samples is None:
            samples = np.zeros_like(self.samples)
        return ResourceGrid(samples, self.sfn0, self.subframes, self.symbols)

    def copy(self) -> "ResourceGrid":
        return self.like(self.samples.copy())

    def full(self) -> "ResourceGrid":
        """Expand to all 10 subframes x 14 symbols, zero-filling the rest."""
        out = np.zeros((self.n_frames, N_SUBFRAMES, N_SYMBOLS, self.n_sc), self.samples.dtype)
        out[np.ix_(range(self.n_frames), self.subframes, self.symbols, range(self.n_sc))] = self.samples
        return ResourceGrid(out, self.sfn0)


def write_grid(path, grid: ResourceGrid) -> None:
    """Write a grid as CSGRID01, zero-filling subframes/symbols it does not hold."""
    n_frames, n_sc = grid.n_frames, grid.n_sc
    frame = np.zeros((N_SUBFRAMES, N_SYMBOLS, n_sc, 2), dtype="<f4")
    sf_idx = np.asarray(grid.subframes)[:, None]
    sym_idx = np.asarray(grid.symbols)[None, :]
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<4I", n_frames, N_SUBFRAMES, N_SYMBOLS, n_sc))
        for f in range(n_frames):
            frame[sf_idx, sym_idx, :, 0] = grid.samples[f].real
            frame[sf_idx, sym_idx, :, 1] = grid.samples[f].imag
            fh.write(frame.tobytes())


def read_grid(path, subframes=None, symbols=None) -> ResourceGrid:
    """Read a CSGRID01 file, optionally keeping only some subframes/symbols."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(24)
    if len(head) < 24 or head[:8] != GRID_MAGIC:
        raise ValueError(f"{path}: not a CSGRID01 file")
    n_frames, n_sub, n_sym, n_sc = struct.unpack("<4I", head[8:24])
    if (n_sub, n_sym) != (N_SUBFRAMES, N_SYMBOLS):
        raise ValueError(f"{path}: unexpected frame layout {n_sub}x{n_sym}")
    count = n_frames * n_sub * n_sym * n_sc * 2
    if path.stat().st_size != 24 + 4 * count:
        raise ValueError(f"{path}: size does not match header")
    subframes = ALL_SUBFRAMES if subframes is None else tuple(subframes)
    symbols = ALL_SYMBOLS if symbols is None else tuple(symbols)
    iq = np.memmap(path, dtype="<f4", mode="r", offset=24,
                   shape=(n_frames, n_sub, n_sym, n_sc, 2))
    out = np.empty((n_frames, len(subframes), len(symbols), n_sc), dtype=np.complex128)
    for i, sf in enumerate(subframes):
        block = np.asarray(iq[:, sf][:, list(symbols)], dtype=np.float64)
        out[:, i] = block[..., 0] + 1j * block[..., 1]
    del iq
    return ResourceGrid(out, 0, subframes, symbols)
