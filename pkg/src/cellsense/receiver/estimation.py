"""Channel estimators: CRS-based LS baseline and joint multi-cell PBCH LS."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..channel import CSI_RATE, symbol_times
from ..errors import ConfigError
from ..phy.cell import PBCH_SUBFRAME, PBCH_SYMBOLS, PBCH_WIDTH, known_region, pbch_band
from ..phy.grid import ResourceGrid
from ..phy.sequences import crs_positions, crs_sequence

COND_LIMIT = 1e6


@dataclass(frozen=True)
class ReGroup:
    k_g: int
    l_g: int
    K: int
    L: int

    @property
    def index_set(self):
        """(symbol offset, subcarrier offset) members inside the 4x72 region."""
        return [(l, k) for l in range(self.l_g * self.L, (self.l_g + 1) * self.L)
                for k in range(self.k_g * self.K, (self.k_g + 1) * self.K)]


def re_groups(K: int, L: int) -> list[ReGroup]:
    """Rectangular tiling of the PBCH region into K x L groups."""
    if K < 1 or L < 1 or PBCH_WIDTH % K or len(PBCH_SYMBOLS) % L:
        raise ConfigError(f"K={K}, L={L} does not tile the 4x72 PBCH region")
    return [ReGroup(kg, lg, K, L) for lg in range(len(PBCH_SYMBOLS) // L)
            for kg in range(PBCH_WIDTH // K)]


@dataclass
class CsiSeries:
    """Per-frame channel estimates sampled at 100 Hz.

    ``values`` has shape (n_frames, n_streams, n_points).  ``subcarriers``
    holds the (fractional) subcarrier index each point represents.
    """

    values: np.ndarray
    subcarriers: np.ndarray
    source: str
    sfn0: int = 0
    streams: tuple = ()
    valid: np.ndarray | None = None
    sample_rate: float = CSI_RATE

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    def stream(self, index: int = 0) -> np.ndarray:
        return self.values[:, index, :]


def compensate_cfo(grid: ResourceGrid, cfo_hz: float) -> ResourceGrid:
    """Remove a carrier offset as a phase ramp over symbol times."""
    if not cfo_hz:
        return grid
    rot = np.exp(-2j * np.pi * cfo_hz * symbol_times(grid))[..., None]
    return grid.like(grid.samples * rot)


def crs_ls_estimate(received: ResourceGrid, n_id: int, subframe: int = 0, symbol: int = 0,
                    port: int = 0) -> CsiSeries:
    """Per-CRS-subcarrier LS estimate y/x of one symbol in every frame.

    Anything else landing on the CRS REs (neighbour payload, noise) stays in
    the estimate.
    """
    k = crs_positions(n_id, port, symbol, received.n_sc)
    x = crs_sequence(n_id, subframe, symbol, received.n_sc // 12)
    y = received.re(subframe, symbol)[:, k]
    return CsiSeries((y / x)[:, None, :], k.astype(np.float64), "crs", received.sfn0,
                     streams=((n_id, port),))


def measure_rsrp(received: ResourceGrid, n_id: int, subframe: int = 0, symbols=(0, 4, 7, 11),
                 ref_db: float = 0.0) -> float:
    """Average CRS power of port 0 in dB (``ref_db`` maps linear 1.0)."""
    powers = []
    for sym in symbols:
        if received.holds(subframe, sym):
            est = crs_ls_estimate(received, n_id, subframe, sym).values
            powers.append(np.mean(np.abs(est) ** 2))
    if not powers:
        raise ValueError("grid holds no CRS symbol of the requested subframe")
    p = float(np.mean(powers))
    if p <= 0:
        return float("-inf")
    return 10 * np.log10(p) + ref_db


def region_observation(received: ResourceGrid) -> np.ndarray:
    """Received 4x72 PBCH region of each frame, shape (n_frames, 4, 72)."""
    band = pbch_band(received.n_sc)
    return np.stack([received.re(PBCH_SUBFRAME, s)[:, band] for s in PBCH_SYMBOLS], axis=1)


def known_streams(cells, n_frames: int, sfn0: int, n_sc: int) -> tuple[np.ndarray, list]:
    """Known region content of every stream, shape (n_frames, n_streams, 4, 72).

    ``cells`` is a sequence of (n_id, n_ports) pairs.
    """
    key = tuple((int(n), int(p)) for n, p in cells)
    X, labels = _known_streams(key, int(n_frames), int(sfn0) % 1024, int(n_sc))
    return X, list(labels)


@lru_cache(maxsize=16)
def _known_streams(cells, n_frames, sfn0, n_sc):
    blocks, labels = [], []
    for n_id, n_ports in cells:
        per_frame = np.stack([known_region(n_id, n_ports, sfn0 + f, n_sc) for f in range(n_frames)])
        for p in range(n_ports):
            blocks.append(per_frame[:, p])
            labels.append((n_id, p))
    X = np.stack(blocks, axis=1)
    X.setflags(write=False)
    return X, tuple(labels)


def _group_view(a, K, L):
    # (..., 4, 72) -> (..., n_lg, n_kg, L*K) in group-major order
    n_lg, n_kg = len(PBCH_SYMBOLS) // L, PBCH_WIDTH // K
    a = a.reshape(a.shape[:-2] + (n_lg, L, n_kg, K))
    a = np.moveaxis(a, -3, -2)
    return a.reshape(a.shape[:-4] + (n_lg, n_kg, L * K))


def joint_ls_estimate(received: ResourceGrid, cells, K: int = 3, L: int = 4,
                      cond_limit: float = COND_LIMIT) -> CsiSeries:
    """Joint LS channel estimate of every stream on each K x L RE group.

    Parameters
    ----------
    received : ResourceGrid
        Must hold subframe 0, symbols 7-10.
    cells : sequence of (n_id, n_ports)
        Cells whose PBCH region content is known; their ports form the streams.
    K, L : int
        Subcarriers and symbols per RE group.
    cond_limit : float
        Groups whose normal matrix exceeds this condition number are flagged
        and filled by interpolation across neighbouring groups.

    Returns
    -------
    CsiSeries
        ``values`` shape (n_frames, n_streams, n_groups) with groups ordered
        by symbol block, then subcarrier block.
    """
    re_groups(K, L)
    nf = received.n_frames
    X, labels = known_streams(cells, nf, received.sfn0, received.n_sc)
    n_s = X.shape[1]
    if K * L < n_s:
        raise ConfigError(f"K*L = {K * L} is smaller than the {n_s} streams to resolve")
    y = _group_view(region_observation(received), K, L)          # (nf, lg, kg, KL)
    Xg = np.moveaxis(_group_view(X, K, L), 1, -1)                # (nf, lg, kg, KL, S)
    XH = np.conj(np.swapaxes(Xg, -1, -2))
    A = XH @ Xg
    b = XH @ y[..., None]
    cond = np.linalg.cond(A)
    valid = np.isfinite(cond) & (cond <= cond_limit)
    eye = np.eye(n_s)
    A_safe = np.where(valid[..., None, None], A, eye)
    h = np.linalg.solve(A_safe, b)[..., 0]                       # (nf, lg, kg, S)
    if not valid.all():
        h = _fill_invalid(h, valid)
    n_lg, n_kg = h.shape[1:3]
    values = np.moveaxis(h.reshape(nf, n_lg * n_kg, n_s), 2, 1)
    centers = np.tile(pbch_band(received.n_sc).start + np.arange(n_kg) * K + (K - 1) / 2, n_lg)
    return CsiSeries(values, centers, "pbch", received.sfn0, streams=tuple(labels),
                     valid=valid.reshape(nf, -1))


def _fill_invalid(h, valid):
    out = h.copy()
    kg = np.arange(h.shape[2])
    for f in range(h.shape[0]):
        for lg in range(h.shape[1]):
            ok = valid[f, lg]
            if ok.all():
                continue
            for s in range(h.shape[3]):
                if ok.any():
                    src = h[f, lg, ok, s]
                    out[f, lg, ~ok, s] = (np.interp(kg[~ok], kg[ok], src.real)
                                          + 1j * np.interp(kg[~ok], kg[ok], src.imag))
                else:
                    out[f, lg, :, s] = 0
    return out


def interpolate_groups(csi: CsiSeries, stream: int, subcarriers: np.ndarray) -> np.ndarray:
    """Per-frame channel of one stream at arbitrary subcarriers, averaging symbol blocks.

    Returns shape (n_frames, len(subcarriers)).
    """
    centers = np.unique(csi.subcarriers)
    v = csi.values[:, stream, :].reshape(csi.n_frames, -1, len(centers)).mean(axis=1)
    out = np.empty((csi.n_frames, len(subcarriers)), dtype=np.complex128)
    for f in range(csi.n_frames):
        out[f] = (np.interp(subcarriers, centers, v[f].real)
                  + 1j * np.interp(subcarriers, centers, v[f].imag))
    return out
