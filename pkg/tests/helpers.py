"""Shared constructors for receiver-level tests."""

import numpy as np

from cellsense.channel import ChannelRealization, GestureScript, gesture_doppler_profile
from cellsense.phy.cell import PBCH_SYMBOLS, known_region, pbch_band
from cellsense.phy.grid import ResourceGrid


def region_grid(cells, n_frames, h, sfn0=0, n_sc=72, noise=0.0, rng=None):
    """Received grid holding only the PBCH region, built as y = sum_p x_p * h_p.

    ``h`` has shape (n_frames, n_streams, 4, 72) or broadcasts to it.
    """
    streams = []
    for n_id, ports in cells:
        per_frame = np.stack([known_region(n_id, ports, sfn0 + f, n_sc) for f in range(n_frames)])
        streams.extend(per_frame[:, p] for p in range(ports))
    x = np.stack(streams, axis=1)
    h = np.broadcast_to(h, x.shape)
    y = np.sum(x * h, axis=1)
    if noise:
        y = y + np.sqrt(noise / 2) * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    samples = np.zeros((n_frames, 1, len(PBCH_SYMBOLS), n_sc), complex)
    samples[:, 0, :, pbch_band(n_sc)] = y
    return ResourceGrid(samples, sfn0, (0,), PBCH_SYMBOLS)


def group_constant(rng, n_frames, n_streams, K, L):
    """Random channels constant on every K x L group, shape (n_frames, n_streams, 4, 72)."""
    g = rng.normal(size=(n_frames, n_streams, 4 // L, 72 // K)) \
        + 1j * rng.normal(size=(n_frames, n_streams, 4 // L, 72 // K))
    return np.repeat(np.repeat(g, L, axis=2), K, axis=3), g


def flat_realization(n_streams=1, n_frames=10, n_sc=72, n_ant=1, gain=1.0, hand=0.0,
                     doppler=None, phase=None, noise_var=0.0, delay=0.0):
    shape = (n_streams, n_ant)
    return ChannelRealization(
        n_sc=n_sc, path_delays=np.full(shape + (1,), delay),
        path_gains=np.full(shape + (1,), gain, dtype=complex),
        hand_gain=np.full(shape, hand, dtype=complex), hand_delay=np.zeros(shape),
        doppler_hz=np.zeros((1, n_frames)) if doppler is None else doppler,
        phase_noise=np.zeros((1, n_frames)) if phase is None else phase,
        antenna_position=(0,) * n_ant, noise_var=noise_var)


def ideal_tracks(label, peak_hz, start_s=0.6, duration_s=1.0, capture_s=2.5, step_s=0.05):
    """Window-rate Doppler tracks of a scripted gesture, rounded to integer Hz."""
    t = np.arange(0.05, capture_s - 0.05, step_s)
    f1, f2 = gesture_doppler_profile(GestureScript(label, start_s, duration_s, peak_hz), t)
    return np.round(f1), np.round(f2)
