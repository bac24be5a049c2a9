"""CSI post-processing: main-path extraction, phase-noise removal by CSI
ratio, band-pass isolation of the hand reflection, Doppler spectrograms and
tracks, plus DTW-based subcarrier selection for the CRS-SS baseline."""

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy import signal

from .channel import CSI_RATE, MAX_GESTURE_DOPPLER

NYQUIST_HZ = CSI_RATE / 2
PASS_BAND = (3.0, MAX_GESTURE_DOPPLER)
STOP_EDGES = (1.0, 25.0)


@dataclass
class PathSeries:
    """Complex per-frame series of one stream/antenna."""

    values: np.ndarray
    source: str = "pbch"
    tag: tuple = ()
    sample_rate: float = CSI_RATE
    delay_bin: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 1:
            raise ValueError("path series must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("path series holds non-finite values")

    def __len__(self):
        return len(self.values)

    def replace(self, values) -> "PathSeries":
        return PathSeries(values, self.source, self.tag, self.sample_rate, self.delay_bin)


@dataclass
class DopplerSpectrogram:
    """Magnitudes of shape (n_windows, n_freqs) on an integer-Hz grid."""

    magnitudes: np.ndarray
    freqs: np.ndarray
    times: np.ndarray
    window_s: float
    step_s: float

    def __post_init__(self):
        if np.any(np.abs(self.freqs) > NYQUIST_HZ):
            raise ValueError("frequency grid exceeds the CSI Nyquist bound")


@dataclass
class DopplerTrack:
    """Dominant signed Doppler per window, 0 where below the power threshold."""

    f: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        if np.any(np.abs(self.f) > NYQUIST_HZ):
            raise ValueError("Doppler track exceeds the 50 Hz Nyquist bound")

    def __len__(self):
        return len(self.f)


def extract_main_path(csi, source: str = "pbch", tag=(), sample_rate: float = CSI_RATE) -> PathSeries:
    """Strongest delay tap of per-frame frequency-domain estimates.

    Parameters
    ----------
    csi : array_like, shape (n_frames, n_points)
        Channel estimates on equally spaced subcarriers or RE groups.  Zeros
        may mark unused points (masked IFFT).

    Returns
    -------
    PathSeries
        Complex tap value per frame at the delay bin with the largest mean
        magnitude over the whole capture.
    """
    csi = np.asarray(csi, dtype=np.complex128)
    if csi.ndim == 1:
        csi = csi[:, None]
    if csi.shape[1] < 1:
        raise ValueError("need at least one subcarrier per frame")
    taps = np.fft.ifft(csi, axis=1)
    best = int(np.argmax(np.mean(np.abs(taps), axis=0)))
    return PathSeries(taps[:, best], source, tag, sample_rate, best)


def csi_ratio(series: PathSeries, reference: PathSeries, eps: float = 1e-3) -> PathSeries:
    """Quotient of two streams sharing an oscillator; common phase noise cancels.

    Reference samples whose magnitude falls below ``eps`` times the median
    reference magnitude are bridged by linear interpolation of the ratio.
    """
    if len(series) != len(reference):
        raise ValueError("series and reference differ in length")
    ref = reference.values
    mag = np.abs(ref)
    floor = eps * np.median(mag) if len(mag) else 0.0
    ok = mag > floor
    out = np.zeros(len(ref), dtype=np.complex128)
    out[ok] = series.values[ok] / ref[ok]
    if not ok.all() and ok.any():
        n = np.arange(len(ref))
        out[~ok] = (np.interp(n[~ok], n[ok], out[ok].real)
                    + 1j * np.interp(n[~ok], n[ok], out[ok].imag))
    return series.replace(out)


@lru_cache(maxsize=8)
def bandpass_design(fs: float = CSI_RATE, gpass_db: float = 0.4, gstop_db: float = 22.0):
    """Elliptic band-pass SOS; applied forward and backward the attenuation
    and ripple double."""
    if fs / 2 <= STOP_EDGES[1]:
        raise ValueError("sample rate too low for the 25 Hz stop edge")
    order, wn = signal.ellipord(PASS_BAND, STOP_EDGES, gpass_db, gstop_db, fs=fs)
    return signal.ellip(order, gpass_db, gstop_db, wn, btype="bandpass", output="sos", fs=fs)


def bandpass_dynamic(series: PathSeries, fs: float = CSI_RATE) -> PathSeries:
    """Zero-phase 3-20 Hz band-pass that strips the static paths."""
    sos = bandpass_design(float(fs))
    padlen = 3 * (2 * len(sos) + 1)
    if len(series) <= padlen:
        raise ValueError(f"series of {len(series)} samples is shorter than the "
                         f"filter warm-up ({padlen + 1})")
    return series.replace(signal.sosfiltfilt(sos, series.values, padlen=padlen))


def doppler_spectrogram(series, window_s: float = 0.1, step_s: float = 0.05,
                        fs: float = CSI_RATE, max_hz: int = 50) -> DopplerSpectrogram:
    """Sliding-window DFT magnitudes evaluated at every integer Hz in [-max_hz, max_hz].

    The 0.1 s window natively resolves 10 Hz; the finer grid is a direct
    evaluation of the window's DTFT.  The complex series is used as is so
    positive and negative Doppler stay distinct.
    """
    x = series.values if isinstance(series, PathSeries) else np.asarray(series, np.complex128)
    if max_hz > fs / 2:
        raise ValueError("frequency grid beyond Nyquist")
    n_win = int(round(window_s * fs))
    step = int(round(step_s * fs))
    if n_win < 1 or step < 1:
        raise ValueError("window and step must span at least one sample")
    if len(x) < n_win:
        raise ValueError("series shorter than one window")
    freqs = np.arange(-max_hz, max_hz + 1, dtype=np.float64)
    kernel = np.exp(-2j * np.pi * np.outer(np.arange(n_win), freqs) / fs)
    starts = np.arange(0, len(x) - n_win + 1, step)
    frames = np.lib.stride_tricks.sliding_window_view(x, n_win)[starts]
    mags = np.abs(frames @ kernel)
    times = (starts + (n_win - 1) / 2) / fs
    return DopplerSpectrogram(mags, freqs, times, n_win / fs, step / fs)


def noise_floor(spec: DopplerSpectrogram) -> float:
    """Median over windows of each window's peak power."""
    if spec.magnitudes.size == 0:
        return 0.0
    return float(np.median(np.max(spec.magnitudes, axis=1) ** 2))


def peak_doppler_track(spec: DopplerSpectrogram, power_threshold: float | None = None,
                       floor_db: float = 6.0, dynamic_range_db: float | None = 15.0) -> DopplerTrack:
    """Signed frequency of each window's strongest bin.

    Parameters
    ----------
    power_threshold : float, optional
        Absolute power (magnitude squared) a window peak must exceed.  By
        default ``floor_db`` above the per-capture floor, raised if needed to
        ``dynamic_range_db`` below the strongest window.
    """
    power = spec.magnitudes ** 2
    if power.size == 0:
        return DopplerTrack(np.zeros(0), spec.times)
    peak = np.max(power, axis=1)
    if power_threshold is None:
        power_threshold = noise_floor(spec) * 10 ** (floor_db / 10)
        if dynamic_range_db is not None:
            power_threshold = max(power_threshold, peak.max() * 10 ** (-dynamic_range_db / 10))
    f = spec.freqs[np.argmax(power, axis=1)]
    return DopplerTrack(np.where(peak > power_threshold, f, 0.0), spec.times)


@numba.njit(cache=True)
def dtw_distance(a, b, band):
    """DTW distance with a Sakoe-Chiba band and absolute-difference cost."""
    n, m = len(a), len(b)
    band = max(band, abs(n - m))
    inf = np.inf
    prev = np.full(m + 1, inf)
    cur = np.full(m + 1, inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        lo = max(1, i - band)
        hi = min(m, i + band)
        # only the cells bordering the band are read by the next row
        cur[lo - 1] = inf
        if hi < m:
            cur[hi + 1] = inf
        for j in range(lo, hi + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = abs(a[i - 1] - b[j - 1]) + best
        prev, cur = cur, prev
    return prev[m]


@numba.njit(cache=True)
def _pairwise_dtw(series, band):
    n = series.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = dtw_distance(series[i], series[j], band)
            out[i, j] = d
            out[j, i] = d
    return out


def pairwise_dtw(series, band: int = 10) -> np.ndarray:
    """Symmetric matrix of DTW distances between the rows of ``series``."""
    return _pairwise_dtw(np.ascontiguousarray(series, dtype=np.float64), int(band))


def crs_subcarrier_select(raw_csi, count: int, band: int = 10,
                          normalize: str = "mean") -> np.ndarray:
    """Pick the ``count`` subcarriers whose magnitude dynamics agree best.

    Subcarriers are ranked by their summed DTW distance to all others.
    Interference adds independent fluctuations to a subcarrier's magnitude,
    so the lowest aggregate distances mark the cleanest ones.

    Parameters
    ----------
    raw_csi : array_like, shape (n_frames, n_subcarriers)
    count : int
    band : int
        Sakoe-Chiba half-width in samples.
    normalize : {"mean", "zscore"}
        "mean" removes each series' mean so fluctuation size still counts;
        "zscore" also divides by the standard deviation.

    Returns
    -------
    np.ndarray
        Sorted indices of the selected subcarriers.
    """
    raw = np.asarray(raw_csi)
    n_sc = raw.shape[1]
    if not 0 < count <= n_sc:
        raise ValueError(f"count must lie in [1, {n_sc}]")
    if normalize not in ("mean", "zscore"):
        raise ValueError("normalize must be 'mean' or 'zscore'")
    if count == n_sc:
        return np.arange(n_sc)
    mag = np.abs(raw).T
    std = mag.std(axis=1)
    scale = np.max(np.abs(mag), axis=1)
    usable = np.isfinite(std) & (std > 1e-12 * np.maximum(scale, 1e-300))
    idx = np.flatnonzero(usable)
    order = []
    if len(idx):
        z = mag[idx] - mag[idx].mean(axis=1, keepdims=True)
        if normalize == "zscore":
            z = z / std[idx, None]
        else:
            z = z / np.median(std[idx])
        agg = pairwise_dtw(z, band).sum(axis=1)
        order = idx[np.lexsort((idx, agg))].tolist()
    order += np.flatnonzero(~usable).tolist()
    return np.sort(np.asarray(order[:count], dtype=np.int64))


def write_spectrogram_csv(path, spec: DopplerSpectrogram) -> None:
    header = "time_s," + ",".join(str(int(f)) for f in spec.freqs)
    data = np.column_stack([spec.times, spec.magnitudes])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.9g")


def write_track_csv(path, track: DopplerTrack) -> None:
    np.savetxt(path, np.column_stack([track.times, track.f]), delimiter=",",
               header="time_s,f_hz", comments="", fmt="%.9g")


def read_track_csv(path) -> DopplerTrack:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return DopplerTrack(data[:, 1], data[:, 0])
