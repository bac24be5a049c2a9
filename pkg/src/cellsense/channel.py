"""Time-variant multi-cell channels with a gesture-driven hand path.

Each stream (one antenna port of one cell) reaches each receive antenna
through a few static paths plus one dynamic hand reflection.  Antennas are
grouped into receive positions; antennas at the same position share the
oscillator, hence the phase-noise trajectory and the CFO.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .phy.grid import ResourceGrid

SUBCARRIER_SPACING = 15e3
FRAME_PERIOD = 0.01
CSI_RATE = 1.0 / FRAME_PERIOD
MAX_DELAY_S = 4.7e-6
MAX_GESTURE_DOPPLER = 20.0
MIN_GESTURE_DOPPLER = 3.0

GESTURES = ("push", "pull", "slide_left", "slide_right", "v1", "v2")

# per-receiver Doppler signs (R1, R2) for each stroke; v gestures have two strokes
_STROKES = {
    "push": [(1.0, 1.0)],
    "pull": [(-1.0, -1.0)],
    "slide_left": [(1.0, -1.0)],
    "slide_right": [(-1.0, 1.0)],
    "v1": [(1.0, -0.6), (0.6, -1.0)],
    "v2": [(-1.0, 0.6), (-0.6, 1.0)],
}


@dataclass(frozen=True)
class PathSpec:
    delay_s: float
    gain: complex
    doppler_hz: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.delay_s <= MAX_DELAY_S:
            raise ValueError(f"path delay {self.delay_s} s outside the CP budget")
        if abs(self.gain) == 0:
            raise ValueError("path gain must be non-zero")


@dataclass(frozen=True)
class PhaseNoiseProcess:
    """Wiener phase random walk with ``sigma_rad`` per frame."""

    sigma_rad: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.sigma_rad < 0:
            raise ValueError("sigma_rad must be non-negative")

    def trajectory(self, n_frames: int) -> np.ndarray:
        steps = np.random.default_rng(self.seed).normal(0.0, self.sigma_rad, n_frames)
        steps[0] = 0.0
        return np.cumsum(steps)


@dataclass(frozen=True)
class GestureScript:
    label: str
    start_s: float
    duration_s: float = 1.0
    peak_doppler_hz: float = 12.0
    pause_s: float = 0.3
    ramp_s: float = 0.1

    def __post_init__(self):
        if self.label not in GESTURES:
            raise ValueError(f"unknown gesture {self.label!r}")
        if not MIN_GESTURE_DOPPLER < self.peak_doppler_hz <= MAX_GESTURE_DOPPLER:
            raise ValueError("peak_doppler_hz must lie in (3, 20]")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.label in ("v1", "v2") and self.duration_s <= self.pause_s + 4 * self.ramp_s:
            raise ValueError("v gesture too short for its pause")

    def strokes(self):
        """(start, stop, (sign_r1, sign_r2)) for each motion segment."""
        signs = _STROKES[self.label]
        if len(signs) == 1:
            return [(self.start_s, self.start_s + self.duration_s, signs[0])]
        seg = (self.duration_s - self.pause_s) / 2
        t0 = self.start_s
        return [(t0, t0 + seg, signs[0]),
                (t0 + seg + self.pause_s, t0 + self.duration_s, signs[1])]


def _envelope(t, start, stop, ramp):
    t = np.asarray(t, dtype=np.float64)
    rise = np.clip((t - start) / ramp, 0.0, 1.0)
    fall = np.clip((stop - t) / ramp, 0.0, 1.0)
    return 0.5 * (1 - np.cos(np.pi * np.minimum(rise, fall)))


def gesture_doppler_profile(script: GestureScript, t):
    """Doppler shift (Hz) seen at receivers R1 and R2 at time(s) ``t``."""
    t = np.asarray(t, dtype=np.float64)
    f1 = np.zeros_like(t)
    f2 = np.zeros_like(t)
    for start, stop, (s1, s2) in script.strokes():
        env = script.peak_doppler_hz * _envelope(t, start, stop, script.ramp_s)
        f1 = f1 + s1 * env
        f2 = f2 + s2 * env
    return f1, f2


def doppler_tracks(scripts, n_frames: int, n_positions: int = 2) -> np.ndarray:
    """Per-frame Doppler of every receive position, shape (n_positions, n_frames)."""
    t = np.arange(n_frames) * FRAME_PERIOD
    out = np.zeros((n_positions, n_frames))
    for script in scripts:
        f1, f2 = gesture_doppler_profile(script, t)
        out[0] += f1
        if n_positions > 1:
            out[1] += f2
    return out


@dataclass
class ChannelRealization:
    """All channel state of one capture.

    Arrays are indexed ``[stream, antenna, ...]``.  ``doppler_hz`` and
    ``phase_noise`` are indexed ``[position, frame]``.
    """

    n_sc: int
    path_delays: np.ndarray
    path_gains: np.ndarray
    hand_gain: np.ndarray
    hand_delay: np.ndarray
    doppler_hz: np.ndarray
    phase_noise: np.ndarray
    antenna_position: tuple = (0, 0, 1, 1)
    large_scale_db: np.ndarray | None = None
    cfo_hz: np.ndarray | None = None
    noise_var: float = 0.0
    seed: int = 0
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        n_s, n_a = self.path_gains.shape[:2]
        if self.large_scale_db is None:
            self.large_scale_db = np.zeros((n_s, n_a))
        if self.cfo_hz is None:
            self.cfo_hz = np.zeros(self.phase_noise.shape[0])
        if len(self.antenna_position) != n_a:
            raise ValueError("antenna_position must list one position per antenna")
        if np.any(self.path_delays > MAX_DELAY_S) or np.any(self.hand_delay > MAX_DELAY_S):
            raise ValueError("path delay outside the CP budget")

    @property
    def n_streams(self) -> int:
        return self.path_gains.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.path_gains.shape[1]

    @property
    def n_frames(self) -> int:
        return self.phase_noise.shape[1]

    def subcarrier_freqs(self) -> np.ndarray:
        return (np.arange(self.n_sc) - self.n_sc // 2) * SUBCARRIER_SPACING

    def static_response(self, stream: int, antenna: int) -> np.ndarray:
        fk = self.subcarrier_freqs()
        g = self.path_gains[stream, antenna]
        tau = self.path_delays[stream, antenna]
        return np.exp(-2j * np.pi * np.outer(fk, tau)) @ g

    def doppler_phase(self, position: int) -> np.ndarray:
        # trapezoidal integration of the Doppler trajectory over frame times
        f = self.doppler_hz[position]
        inc = 0.5 * (f[1:] + f[:-1]) * FRAME_PERIOD
        return 2 * np.pi * np.concatenate([[0.0], np.cumsum(inc)])

    def dynamic_series(self, stream: int, antenna: int) -> np.ndarray:
        """Hand-path complex amplitude per frame (at zero subcarrier offset)."""
        pos = self.antenna_position[antenna]
        return self.hand_gain[stream, antenna] * np.exp(1j * self.doppler_phase(pos))

    def response(self, stream: int, antenna: int) -> np.ndarray:
        """h(k, n) for all frames and subcarriers, shape (n_frames, n_sc)."""
        key = (stream, antenna)
        if key not in self._cache:
            fk = self.subcarrier_freqs()
            pos = self.antenna_position[antenna]
            hd_k = np.exp(-2j * np.pi * fk * self.hand_delay[stream, antenna])
            h = (self.static_response(stream, antenna)[None, :]
                 + np.outer(self.dynamic_series(stream, antenna), hd_k))
            h *= np.exp(-1j * self.phase_noise[pos])[:, None]
            h *= 10 ** (self.large_scale_db[stream, antenna] / 20)
            self._cache[key] = h
        return self._cache[key]


def evaluate_channel(real: ChannelRealization, stream: int, antenna: int, k, n):
    """Channel coefficient(s) of one stream at subcarrier(s) ``k`` and frame(s) ``n``."""
    if not 0 <= stream < real.n_streams or not 0 <= antenna < real.n_antennas:
        raise IndexError("stream or antenna out of range")
    return real.response(stream, antenna)[n, k]


def symbol_times(grid: ResourceGrid) -> np.ndarray:
    """Start time (s) of every held symbol relative to the capture start,
    shape (n_frames, n_subframes_held, n_symbols_held)."""
    f = np.arange(grid.n_frames)[:, None, None] * FRAME_PERIOD
    sf = np.asarray(grid.subframes)[None, :, None] * 1e-3
    sym = np.asarray(grid.symbols)[None, None, :] * (1e-3 / 14)
    return f + sf + sym


def synthesize_received(grids, real: ChannelRealization, antenna: int,
                        rng: np.random.Generator | None = None) -> ResourceGrid:
    """Superimpose all transmit streams through their channels at one antenna.

    ``grids`` lists one ResourceGrid per stream, in the stream order of
    ``real``.  AWGN of variance ``real.noise_var`` is added per RE.
    """
    grids = list(grids)
    if len(grids) != real.n_streams:
        raise ValueError(f"{len(grids)} grids for {real.n_streams} streams")
    ref = grids[0]
    for g in grids[1:]:
        if (g.samples.shape != ref.samples.shape or g.subframes != ref.subframes
                or g.symbols != ref.symbols):
            raise ValueError("transmit grids differ in dimensions")
    if ref.n_sc != real.n_sc or ref.n_frames > real.n_frames:
        raise ValueError("grid dimensions do not match the channel realization")
    y = np.zeros_like(ref.samples, dtype=np.complex128)
    nf = ref.n_frames
    for s, g in enumerate(grids):
        h = real.response(s, antenna)[:nf]
        y += g.samples * h[:, None, None, :]
    pos = real.antenna_position[antenna]
    if real.cfo_hz[pos]:
        y *= np.exp(2j * np.pi * real.cfo_hz[pos] * symbol_times(ref))[..., None]
    if real.noise_var > 0:
        if rng is None:
            rng = np.random.default_rng([real.seed, antenna])
        scale = np.sqrt(real.noise_var / 2)
        y += scale * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    return ref.like(y)


@dataclass(frozen=True)
class ChannelProfile:
    """Statistical recipe for drawing channel realizations."""

    n_paths: int = 4
    delay_spread_s: float = 0.3e-6
    max_excess_delay_s: float = 1.5e-6
    hand_db: float = -20.0
    reference_hand_db: float = -10.0
    hand_excess_delay_s: float = 20e-9
    phase_noise_rad: float = 0.05

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigError("n_paths must be at least 1")
        if self.max_excess_delay_s + 0.3e-6 + self.hand_excess_delay_s > MAX_DELAY_S:
            raise ConfigError("delay profile exceeds the CP budget")


def draw_realization(profile: ChannelProfile, n_streams: int, n_frames: int, n_sc: int,
                     rng: np.random.Generator, antenna_position=(0, 0, 1, 1),
                     doppler_hz: np.ndarray | None = None, large_scale_db=None,
                     noise_var: float = 0.0, cfo_hz=None, seed: int = 0,
                     reference_antennas=(1, 3)) -> ChannelRealization:
    """Random static multipath plus a hand path for every (stream, antenna).

    Antennas listed in ``reference_antennas`` see the hand path weakened by
    ``profile.reference_hand_db``.
    """
    n_ant = len(antenna_position)
    n_pos = max(antenna_position) + 1
    shape = (n_streams, n_ant)
    first = rng.uniform(0.0, 0.3e-6, shape)
    excess = np.minimum(rng.exponential(profile.delay_spread_s, shape + (profile.n_paths - 1,)),
                        profile.max_excess_delay_s)
    delays = np.concatenate([first[..., None], first[..., None] + excess], axis=-1)
    power = np.exp(-(delays - first[..., None]) / profile.delay_spread_s)
    power[..., 0] *= 2.0  # dominant through-window path
    power /= power.sum(axis=-1, keepdims=True)
    gains = np.sqrt(power) * np.exp(2j * np.pi * rng.random(delays.shape))

    hand_db = np.full(shape, profile.hand_db)
    for a in reference_antennas:
        if a < n_ant:
            hand_db[:, a] += profile.reference_hand_db
    hand_gain = 10 ** (hand_db / 20) * np.exp(2j * np.pi * rng.random(shape))
    hand_delay = first + rng.uniform(0.0, profile.hand_excess_delay_s, shape)

    pn_seeds = rng.integers(0, 2**31, n_pos)
    phase_noise = np.stack([PhaseNoiseProcess(profile.phase_noise_rad, int(s)).trajectory(n_frames)
                            for s in pn_seeds])
    if doppler_hz is None:
        doppler_hz = np.zeros((n_pos, n_frames))
    return ChannelRealization(
        n_sc=n_sc, path_delays=delays, path_gains=gains, hand_gain=hand_gain,
        hand_delay=hand_delay, doppler_hz=np.asarray(doppler_hz, dtype=np.float64),
        phase_noise=phase_noise, antenna_position=tuple(antenna_position),
        large_scale_db=None if large_scale_db is None else np.asarray(large_scale_db, float),
        cfo_hz=None if cfo_hz is None else np.asarray(cfo_hz, float),
        noise_var=noise_var, seed=seed)
