"""Cell search, PBCH decoding and SIC-based neighbour discovery."""

from dataclasses import dataclass

import numpy as np

from ..errors import DecodeFailed, NoCellFound
from ..phy.cell import (PBCH_SUBFRAME, PBCH_SYMBOLS, PSS_SUBFRAMES, PSS_SYMBOL, SSS_SUBFRAMES,
                        SSS_SYMBOL, CellIdentity, known_region, pbch_band, pbch_positions, static_content,
                        sync_band)
from ..phy.grid import ResourceGrid
from ..phy.mib import QUARTER_BITS, MibPayload, decode_codeword_llr
from ..phy.sequences import crs_positions, crs_sequence, generate_pss, generate_sss
from .estimation import compensate_cfo, interpolate_groups, joint_ls_estimate

PSS_SSS_SPACING_S = 3 * 1e-3 / 14
CRS_SPACING_S = 7 * 1e-3 / 14
DETECT_THRESHOLD = 0.15
_N_BLOCKS = 6

_PSS = np.stack([generate_pss(u) for u in range(3)])
_SSS = {(n2, sf): np.stack([generate_sss(n1, n2, sf) for n1 in range(168)])
        for n2 in range(3) for sf in SSS_SUBFRAMES}


@dataclass(frozen=True)
class Detection:
    identity: CellIdentity
    metric: float
    cfo_hz: float
    timing: int


@dataclass(frozen=True)
class CellInfo:
    identity: CellIdentity
    n_ports: int
    mib: MibPayload
    rsrp_db: float
    sic_order: int
    sfn0: int = 0

    def record(self) -> dict:
        return {"pci": self.identity.n_id, "ports": self.n_ports, "sfn": self.sfn0,
                "rsrp_db": round(float(self.rsrp_db), 3)}


def _block_metric(y, ref):
    """Non-coherent block correlation, normalised to [0, 1].

    ``y`` is (..., 62) observations, ``ref`` (H, 62) hypotheses; returns
    (H,) metrics summed over all leading axes of ``y``.
    """
    blocks = np.array_split(np.arange(62), _N_BLOCKS)
    y2 = y.reshape(-1, 62)
    num = np.zeros(ref.shape[0])
    den = 0.0
    for b in blocks:
        c = y2[:, b] @ np.conj(ref[:, b]).T  # (obs, H)
        num += np.sum(np.abs(c) ** 2, axis=0)
        den += len(b) * np.sum(np.abs(y2[:, b]) ** 2)
    return num / den if den > 0 else np.zeros(ref.shape[0])


def _sync_obs(grid, subframes, symbol):
    band = sync_band(grid.n_sc)
    return np.stack([grid.re(sf, symbol)[:, band] for sf in subframes], axis=1)


def rank_cells(received: ResourceGrid, exclude=(), n_best: int = 3):
    """Candidate identities ranked by SSS metric under the best PSS root(s).

    Returns a list of (CellIdentity, metric, timing) sorted by decreasing metric.
    """
    pss_obs = _sync_obs(received, PSS_SUBFRAMES, PSS_SYMBOL)
    sss_obs = _sync_obs(received, SSS_SUBFRAMES, SSS_SYMBOL)
    pss_metric = _block_metric(pss_obs, _PSS)
    excluded = {c.n_id if isinstance(c, CellIdentity) else int(c) for c in exclude}
    out = []
    for n2 in range(3):
        m_direct = (_block_metric(sss_obs[:, 0], _SSS[(n2, 0)])
                    + _block_metric(sss_obs[:, 1], _SSS[(n2, 5)])) / 2
        m_swap = (_block_metric(sss_obs[:, 0], _SSS[(n2, 5)])
                  + _block_metric(sss_obs[:, 1], _SSS[(n2, 0)])) / 2
        for timing, m in ((0, m_direct), (5, m_swap)):
            # joint PSS/SSS evidence keeps a wrong root from winning on SSS alone
            score = np.sqrt(m * pss_metric[n2])
            for n1 in np.argsort(score)[::-1][:n_best]:
                ident = CellIdentity.from_parts(int(n1), int(n2))
                if ident.n_id not in excluded:
                    out.append((ident, float(score[n1]), timing))
    out.sort(key=lambda c: -c[1])
    seen, ranked = set(), []
    for ident, m, timing in out:
        if ident.n_id not in seen:
            seen.add(ident.n_id)
            ranked.append((ident, m, timing))
    return ranked[:n_best]


def estimate_cfo(received: ResourceGrid, identity: CellIdentity) -> float:
    """Carrier offset from the phase advance of the cell's own reference signals.

    CRS symbols 0 and 7 of subframe 0 share subcarriers, so their product
    rotates by 2*pi*cfo*0.5 ms.  Cells sharing a PSS root would bias a PSS/SSS
    based estimate; the CRS sequence is cell specific.  Falls back to the
    SSS-to-PSS advance when the grid lacks those symbols.
    """
    n_rb = received.n_sc // 12
    if received.holds(0, 0) and received.holds(0, 7):
        k = crs_positions(identity.n_id, 0, 0, received.n_sc)
        a = received.re(0, 0)[:, k] * np.conj(crs_sequence(identity.n_id, 0, 0, n_rb))
        b = received.re(0, 7)[:, k] * np.conj(crs_sequence(identity.n_id, 0, 7, n_rb))
        return float(np.angle(np.sum(np.conj(a) * b)) / (2 * np.pi * CRS_SPACING_S))
    band = sync_band(received.n_sc)
    acc = 0j
    for sss_sf, pss_sf in zip(SSS_SUBFRAMES, PSS_SUBFRAMES):
        s = generate_sss(identity.n_id1, identity.n_id2, sss_sf)
        p = generate_pss(identity.n_id2)
        a = received.re(sss_sf, SSS_SYMBOL)[:, band] * s
        b = received.re(pss_sf, PSS_SYMBOL)[:, band] * np.conj(p)
        acc += np.sum(np.conj(a) * b)
    return float(np.angle(acc) / (2 * np.pi * PSS_SSS_SPACING_S))


def detect_cell(received: ResourceGrid, exclude=(), threshold: float = DETECT_THRESHOLD) -> Detection:
    """Strongest remaining cell: PSS root, SSS group, CFO and half-frame timing."""
    ranked = rank_cells(received, exclude, n_best=1)
    if not ranked or ranked[0][1] < threshold:
        raise NoCellFound("no PSS/SSS correlation peak above threshold")
    ident, metric, timing = ranked[0]
    return Detection(ident, metric, estimate_cfo(received, ident), timing)


def _smooth_interp(k_pilot, h_pilot, k_out):
    # [1, 2, 1] smoothing along pilots, then linear interpolation per frame
    sm = h_pilot.copy()
    if h_pilot.shape[1] >= 3:
        sm[:, 1:-1] = 0.25 * h_pilot[:, :-2] + 0.5 * h_pilot[:, 1:-1] + 0.25 * h_pilot[:, 2:]
    out = np.empty((h_pilot.shape[0], len(k_out)), dtype=np.complex128)
    for f in range(h_pilot.shape[0]):
        out[f] = np.interp(k_out, k_pilot, sm[f].real) + 1j * np.interp(k_out, k_pilot, sm[f].imag)
    return out, h_pilot - sm


def crs_channel(received: ResourceGrid, n_id: int, port: int, pilot_symbols, k_out):
    """CRS-based per-frame channel of one port at subcarriers ``k_out``.

    Returns (estimate (n_frames, len(k_out)), residual noise variance per frame).
    """
    band = pbch_band(received.n_sc)
    lo, hi = band.start, band.stop
    ests, resid = [], []
    for sym in pilot_symbols:
        if not received.holds(PBCH_SUBFRAME, sym):
            continue
        k = crs_positions(n_id, port, sym, received.n_sc)
        k = k[(k >= lo) & (k < hi)]
        x = crs_sequence(n_id, PBCH_SUBFRAME, sym, received.n_sc // 12)[k // 6]
        raw = received.re(PBCH_SUBFRAME, sym)[:, k] / x
        est, r = _smooth_interp(k, raw, k_out)
        ests.append(est)
        resid.append(np.mean(np.abs(r[:, 1:-1]) ** 2, axis=1) * (8 / 3))
    if not ests:
        raise ValueError("no CRS pilot symbol held by the grid")
    return np.mean(ests, axis=0), np.mean(resid, axis=0) + 1e-12


def _pool_frames(h, frames):
    """Average per-frame channel estimates of ``frames`` after aligning their
    common phase, then restore each frame's own phase."""
    sel = h[frames]
    rot = np.exp(1j * np.angle(np.sum(np.conj(sel[:1]) * sel, axis=1)))[:, None]
    out = h.copy()
    out[frames] = np.mean(sel / rot, axis=0)[None, :] * rot
    return out


def pbch_llr(received: ResourceGrid, n_id: int, n_ports: int, pilot_symbols=(4, 7, 11),
             pool=None):
    """Soft bits (n_frames, 480) of the PBCH quarter carried in each frame.

    ``pool`` lists frames whose pilot estimates are averaged (quasi-static
    channel) before equalisation.
    """
    sym, k = pbch_positions(n_id, received.n_sc)
    y = np.stack([received.re(PBCH_SUBFRAME, s)[:, kk] for s, kk in zip(sym, k)], axis=1)
    h, nvs = [], []
    for port in range(n_ports):
        est, nv = crs_channel(received, n_id, port, pilot_symbols, k)
        if pool is not None and len(pool) > 1:
            est = _pool_frames(est, list(pool))
        h.append(est)
        nvs.append(nv)
    noise = np.mean(nvs, axis=0)[:, None]
    if n_ports == 1:
        z = np.conj(h[0]) * y * np.sqrt(2) * 2 / noise
    else:
        h0, h1 = h[0][:, 0::2], h[1][:, 0::2]
        y0, y1 = y[:, 0::2], y[:, 1::2]
        z = np.empty_like(y)
        z[:, 0::2] = np.conj(h0) * y0 + h1 * np.conj(y1)
        z[:, 1::2] = np.conj(h0) * y1 - h1 * np.conj(y0)
        z *= 2 / noise
    llr = np.empty((y.shape[0], 2 * y.shape[1]))
    llr[:, 0::2] = z.real
    llr[:, 1::2] = z.imag
    return llr


def _frame_plan(n_frames, frame_offset, n_combine, q0):
    """Frames to soft-combine and their quarter indices under hypothesis ``q0``."""
    n_combine = max(1, min(n_combine, 4))
    start = frame_offset + (-q0) % 4
    if start + n_combine <= n_frames:
        return list(range(start, start + n_combine)), list(range(n_combine))
    count = max(1, min(n_combine, 4 - q0, n_frames - frame_offset))
    return list(range(frame_offset, frame_offset + count)), list(range(q0, q0 + count))


def decode_mib(received: ResourceGrid, identity, port_hypotheses=(1, 2), n_combine: int = 4,
               frame_offset: int = 0, pilot_symbols=(4, 7, 11), pool_pilots: bool = False):
    """Decode the MIB of one cell.

    Parameters
    ----------
    received : ResourceGrid
        Must hold subframe 0 with the PBCH symbols and ``pilot_symbols``.
    identity : CellIdentity or int
    port_hypotheses : tuple of int
        Antenna-port counts to try; the matching CRC mask reveals the count.
    n_combine : int
        PBCH repetitions (frames, at most one 40 ms TTI) soft-combined per attempt.
    frame_offset : int
        First frame of the grid used.
    pilot_symbols : tuple of int
        Subframe-0 symbols whose CRS feed the channel estimate.
    pool_pilots : bool
        Average pilot estimates over the combined frames (static channel).

    Returns
    -------
    tuple
        ``(MibPayload, n_ports, sfn0)`` where ``sfn0`` is the SFN of the grid's
        first frame.

    Raises
    ------
    DecodeFailed
        No port/quarter hypothesis passes the CRC.
    """
    n_id = identity.n_id if isinstance(identity, CellIdentity) else int(identity)
    for n_ports in port_hypotheses:
        llr = None if pool_pilots else pbch_llr(received, n_id, n_ports, pilot_symbols)
        for q0 in range(4):
            frames, quarters = _frame_plan(received.n_frames, frame_offset, n_combine, q0)
            if pool_pilots:
                llr = pbch_llr(received, n_id, n_ports, pilot_symbols, pool=frames)
            soft = np.concatenate([llr[f] for f in frames])
            pos = np.concatenate([q * QUARTER_BITS + np.arange(QUARTER_BITS) for q in quarters])
            res = decode_codeword_llr(soft, pos, n_id, port_hypotheses=(n_ports,))
            if res is None:
                continue
            mib, ports = res
            if mib.spare != 0:
                continue
            sfn_first = (mib.sfn(quarters[0]) - frames[0]) % 1024
            return mib, ports, sfn_first
    raise DecodeFailed(f"PBCH of PCI {n_id} failed CRC for every hypothesis")


def reconstruct_cell(n_id: int, n_ports: int, csi, stream0: int, template: ResourceGrid):
    """Received contribution of one cell on its PSS/SSS and PBCH-region REs."""
    out = np.zeros_like(template.samples)
    band = pbch_band(template.n_sc)
    sync = sync_band(template.n_sc)
    k_band = np.arange(band.start, band.stop)
    content = static_content(n_id, n_ports, template.n_sc)
    isf = {s: i for i, s in enumerate(template.subframes)}
    isym = {s: i for i, s in enumerate(template.symbols)}
    for p in range(n_ports):
        h = interpolate_groups(csi, stream0 + p, k_band)  # (nf, 72)
        for f in range(template.n_frames):
            region = known_region(n_id, n_ports, template.sfn0 + f, template.n_sc)[p]
            for j, sym in enumerate(range(7, 11)):
                if template.holds(PBCH_SUBFRAME, sym):
                    out[f, isf[PBCH_SUBFRAME], isym[sym], band] += region[j] * h[f]
        if p == 0:
            hs = h[:, sync.start - band.start:sync.stop - band.start]
            for sf, sym in [(s, SSS_SYMBOL) for s in SSS_SUBFRAMES] + \
                           [(s, PSS_SYMBOL) for s in PSS_SUBFRAMES]:
                if template.holds(sf, sym):
                    out[:, isf[sf], isym[sym], sync] += content[0, sf, sym, sync] * hs
    return out


def _residual_cfo(grid: ResourceGrid, recon: np.ndarray) -> float:
    """Leftover carrier offset seen as phase drift of the received PSS/SSS
    against their reconstruction from the PBCH-region channel."""
    sym_s = 1e-3 / 14
    t_ref = PBCH_SUBFRAME * 1e-3 + np.mean(PBCH_SYMBOLS) * sym_s
    sync = sync_band(grid.n_sc)
    num = den = 0.0
    for sf, sym in [(s, SSS_SYMBOL) for s in SSS_SUBFRAMES] + [(s, PSS_SYMBOL) for s in PSS_SUBFRAMES]:
        if not grid.holds(sf, sym):
            continue
        i, j = grid.subframes.index(sf), grid.symbols.index(sym)
        c = np.sum(np.conj(recon[:, i, j, sync]) * grid.samples[:, i, j, sync])
        if c == 0:
            continue
        dt = sf * 1e-3 + sym * sym_s - t_ref
        w = np.abs(c)
        num += w * dt * np.angle(c)
        den += w * dt * dt
    return float(num / (2 * np.pi * den)) if den > 0 else 0.0


def _cancel(base, streams, K, L):
    csi = joint_ls_estimate(base, streams, K, L)
    recon = np.zeros_like(base.samples)
    s0 = 0
    for n_id, ports in streams:
        recon += reconstruct_cell(n_id, ports, csi, s0, base)
        s0 += ports
    return csi, recon


def sic_cell_search(received: ResourceGrid, max_cells: int = 8, K: int = 3, L: int = 4,
                    n_combine: int = 4, max_candidates: int = 6,
                    threshold: float = DETECT_THRESHOLD, cancellation_scale: float = 1.0,
                    ref_db: float = 0.0) -> list[CellInfo]:
    """Discover all decodable cells by successive interference cancellation.

    Each round detects the strongest remaining cell, decodes its MIB, then
    re-estimates the channels of every discovered stream jointly on the
    original reception and cancels their PSS/SSS/PBCH-region contribution.
    ``cancellation_scale`` < 1 deliberately leaves part of the reconstruction
    in the residual.
    """
    try:
        first = detect_cell(received, threshold=threshold)
    except NoCellFound:
        return []
    comp = compensate_cfo(received, first.cfo_hz)
    base = ResourceGrid(comp.samples, 0, comp.subframes, comp.symbols)
    residual = base
    found = []  # (identity, n_ports, mib, sfn0)
    csi = None
    while len(found) < max_cells:
        candidates = [c for c in rank_cells(residual, [f[0] for f in found], max_candidates)
                      if c[1] >= threshold]
        decoded = None
        for ident, _, _ in candidates:
            try:
                mib, ports, sfn0 = decode_mib(residual, ident, n_combine=n_combine,
                                              pilot_symbols=(7,), pool_pilots=True)
            except DecodeFailed:
                continue
            decoded = (ident, ports, mib, sfn0)
            break
        if decoded is None:
            break
        found.append(decoded)
        streams = [(f[0].n_id, f[1]) for f in found]
        base.sfn0 = found[0][3]  # synchronized TDD cells share the SFN
        csi, recon = _cancel(base, streams, K, L)
        for _ in range(3):
            # the first estimate is biased by neighbour payload on the CRS
            delta = _residual_cfo(base, recon)
            if abs(delta) < 0.05:
                break
            base = compensate_cfo(base, delta)
            csi, recon = _cancel(base, streams, K, L)
        residual = base.like(base.samples - cancellation_scale * recon)

    infos = []
    s0 = 0
    for ident, ports, mib, sfn0 in found:
        p = np.mean(np.abs(csi.values[:, s0, :]) ** 2)
        rsrp = 10 * np.log10(p) + ref_db if p > 0 else float("-inf")
        infos.append((ident, ports, mib, rsrp, sfn0))
        s0 += ports
    infos.sort(key=lambda c: -c[3])
    return [CellInfo(ident, ports, mib, rsrp, order, sfn0)
            for order, (ident, ports, mib, rsrp, sfn0) in enumerate(infos)]
