"""End-to-end experiment runner: synthesize captures, estimate CSI with each
method, extract Doppler tracks, classify and benchmark."""

import copy
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .channel import (GestureScript, doppler_tracks, draw_realization,
                      synthesize_received)
from .dsp import (PathSeries, bandpass_dynamic, crs_subcarrier_select, csi_ratio,
                  doppler_spectrogram, extract_main_path, peak_doppler_track)
from .errors import ConfigError
from .gesture import NONE, evaluate, recognize
from .phy.cell import map_frames
from .phy.grid import ResourceGrid
from .receiver.estimation import compensate_cfo, crs_ls_estimate, joint_ls_estimate
from .receiver.search import CellInfo, detect_cell, sic_cell_search
from .scenario import Scenario

TX_SUBFRAMES = (0,)
TX_SYMBOLS = (0, 7, 8, 9, 10)
SEARCH_FRAMES = 8
SEARCH_SUBFRAMES = (0, 1, 5, 6)
SEARCH_SYMBOLS = (0, 2, 4, 7, 8, 9, 10, 11, 13)


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for one (seed, key...) counter tuple."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


# ---------------------------------------------------------------- synthesis

@dataclass
class Capture:
    """Received grids of one trial at every antenna plus ground truth."""

    scenario: Scenario
    received: list
    search: list | None  # one short full-layout capture per receive position
    realization: object
    cells: list
    sfn0: int
    script: GestureScript | None = None

    @property
    def label(self) -> str:
        return self.script.label if self.script else NONE


def draw_script(sc: Scenario, label: str, rng: np.random.Generator) -> GestureScript:
    g = sc.gestures
    return GestureScript(label, start_s=rng.uniform(*_span(g.start_s)),
                         duration_s=rng.uniform(*_span(g.duration_s)),
                         peak_doppler_hz=rng.uniform(*_span(g.peak_doppler_hz)),
                         pause_s=g.pause_s, ramp_s=g.ramp_s)


def _span(values):
    return (min(values), max(values))


def synthesize(sc: Scenario, rng: np.random.Generator, script: GestureScript | None = None,
               n_frames: int | None = None, search: bool = True, antennas=None,
               subframes=TX_SUBFRAMES, symbols=TX_SYMBOLS) -> Capture:
    """Draw a channel, map every cell's frames and superimpose them per antenna.

    The main capture holds only ``subframes``/``symbols``; with ``search`` a
    short capture over the first frames also holds the PSS/SSS symbols for
    cell discovery.
    """
    nf = sc.n_frames if n_frames is None else n_frames
    cells = sc.cell_configs()
    n_streams = sum(c.n_ports for c in cells)
    sfn0 = int(rng.integers(0, 1024))
    dop = doppler_tracks([script] if script else [], nf, sc.receivers)
    n_pos = sc.receivers
    real = draw_realization(
        sc.channel.profile(), n_streams, nf, sc.n_sc, rng,
        antenna_position=sc.antenna_position, doppler_hz=dop,
        large_scale_db=sc.large_scale_db(), noise_var=sc.noise_var(),
        cfo_hz=np.full(n_pos, sc.channel.cfo_hz), reference_antennas=sc.reference_antennas)
    antennas = range(sc.n_antennas) if antennas is None else antennas
    tx = [g for c in cells for g in map_frames(c, sfn0, nf, rng, sc.n_sc, subframes, symbols)]
    received = [synthesize_received(tx, real, a, rng) for a in antennas]
    found = None
    if search:
        ns = min(SEARCH_FRAMES, nf)
        tx_s = [g for c in cells for g in map_frames(c, sfn0, ns, rng, sc.n_sc,
                                                      SEARCH_SUBFRAMES, SEARCH_SYMBOLS)]
        found = [synthesize_received(tx_s, real, pos * sc.antennas_per_receiver, rng)
                 for pos in range(sc.receivers)]
    return Capture(sc, received, found, real, cells, sfn0, script)


# ---------------------------------------------------------------- discovery

def discover(capture: Capture) -> tuple[list, int]:
    """Cells known to the receiver and the SFN of the capture's first frame.

    Returns a list of (n_id, n_ports) ordered by decreasing received power
    (serving cell first) and the SFN.  Oracle discovery uses the scenario.
    """
    sc = capture.scenario
    if sc.estimation.discovery == "oracle" or capture.search is None:
        order = sorted(zip(sc.cells, capture.cells), key=lambda c: -np.mean(c[0].rsrp_dbm))
        return [(cfg.n_id, cfg.n_ports) for _, cfg in order], capture.sfn0
    infos = sic_cell_search(capture.search[0], K=sc.estimation.K, L=sc.estimation.L,
                            n_combine=sc.estimation.n_combine, ref_db=sc.reference_dbm)
    if not infos:
        return [], 0
    return [(i.identity.n_id, i.n_ports) for i in infos], infos[0].sfn0


def discovery_report(infos: list[CellInfo]) -> list[dict]:
    return [i.record() for i in infos]


# ---------------------------------------------------------------- estimation

def _with_sfn(grid: ResourceGrid, sfn0: int) -> ResourceGrid:
    return ResourceGrid(grid.samples, sfn0, grid.subframes, grid.symbols)


def pbch_csi(grid: ResourceGrid, streams, K: int = 3, L: int = 4) -> np.ndarray:
    """Joint estimates averaged over symbol blocks, shape (n_frames, n_streams, n_kg)."""
    csi = joint_ls_estimate(grid, streams, K, L)
    nf, ns, ng = csi.values.shape
    n_kg = 72 // K
    return csi.values.reshape(nf, ns, ng // n_kg, n_kg).mean(axis=2)


def crs_csi(grid: ResourceGrid, n_id: int, port: int = 0) -> np.ndarray:
    """Raw per-subcarrier CRS estimates of subframe 0 symbol 0, shape (n_frames, n_crs)."""
    return crs_ls_estimate(grid, n_id, 0, 0, port).values[:, 0, :]


def mask_subcarriers(raw: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Zero every CRS subcarrier not listed in ``keep``."""
    out = np.zeros_like(raw)
    out[:, keep] = raw[:, keep]
    return out


def estimate_streams(capture: Capture, method: str, streams, sfn0: int,
                     crs_cache: dict | None = None) -> dict:
    """Frequency-domain CSI of the serving cell per antenna and port.

    Returns {(antenna, port): array (n_frames, n_points)}.  ``crs_cache``
    shares raw CRS estimates between the CRS-based methods.
    """
    sc = capture.scenario
    if not streams:
        return {}
    n_id, n_ports = streams[0]
    out = {}
    for a, grid in enumerate(capture.received):
        grid = _with_sfn(grid, sfn0)
        if method == "pbch":
            est = pbch_csi(grid, streams, sc.estimation.K, sc.estimation.L)
            for p in range(n_ports):
                out[a, p] = est[:, p, :]
        elif method in ("crs", "crs_ss"):
            for p in range(n_ports):
                if crs_cache is None or (a, p) not in crs_cache:
                    raw = crs_csi(grid, n_id, p)
                    if crs_cache is not None:
                        crs_cache[a, p] = raw
                out[a, p] = crs_cache[a, p] if crs_cache is not None else raw
        else:
            raise ConfigError(f"unknown method {method!r}")
    if method == "crs_ss":
        # one selection per receive position, taken on its first antenna, so
        # both streams of the CSI ratio cover the same subcarriers
        per = sc.antennas_per_receiver
        for a0 in range(0, len(capture.received), per):
            keep = crs_subcarrier_select(out[a0, 0], sc.estimation.crs_ss_count, sc.dsp.dtw_band)
            for a in range(a0, a0 + per):
                for p in range(n_ports):
                    out[a, p] = mask_subcarriers(out[a, p], keep)
    return out


# ---------------------------------------------------------------- DSP chain

@dataclass
class MethodResult:
    method: str
    prediction: str
    tracks: list = field(default_factory=list)
    spectrograms: list = field(default_factory=list)


def dynamic_series(csi: dict, position: int, antennas_per_receiver: int = 2,
                   method: str = "pbch") -> PathSeries:
    """Phase-noise-free dynamic series of one receive position.

    The reference stream is port 1 of the serving cell on the same antenna
    when present, otherwise the second antenna of the position.
    """
    a0 = position * antennas_per_receiver
    main = extract_main_path(csi[a0, 0], method, (a0, 0))
    ref_key = (a0, 1) if (a0, 1) in csi else (a0 + 1, 0)
    ref = extract_main_path(csi[ref_key], method, ref_key)
    return csi_ratio(main, ref)


def process_position(series: PathSeries, sc: Scenario):
    d = sc.dsp
    filtered = bandpass_dynamic(series)
    spec = doppler_spectrogram(filtered, d.window_s, d.step_s)
    track = peak_doppler_track(spec, floor_db=d.floor_db, dynamic_range_db=d.dynamic_range_db)
    return spec, track


def classify_tracks(tracks, sc: Scenario) -> str:
    d = sc.dsp
    return recognize(tracks[0], tracks[1], kappa=d.kappa, pause_min_windows=d.pause_min_windows,
                     positive_direction=d.positive_direction)


def run_method(capture: Capture, method: str, streams, sfn0: int,
               crs_cache: dict | None = None) -> MethodResult:
    sc = capture.scenario
    csi = estimate_streams(capture, method, streams, sfn0, crs_cache)
    if not csi:
        return MethodResult(method, NONE)
    specs, tracks = [], []
    for pos in range(sc.receivers):
        spec, track = process_position(
            dynamic_series(csi, pos, sc.antennas_per_receiver, method), sc)
        specs.append(spec)
        tracks.append(track)
    return MethodResult(method, classify_tracks(tracks, sc), tracks, specs)


def run_trial(sc: Scenario, label: str, rng: np.random.Generator, methods=None) -> dict:
    """One gesture capture evaluated by every method on identical received grids."""
    script = draw_script(sc, label, rng)
    capture = synthesize(sc, rng, script, search=sc.estimation.discovery == "sic")
    if sc.channel.cfo_hz and capture.search is not None:
        capture = _compensate(capture)
    streams, sfn0 = discover(capture)
    cache = {}
    return {m: run_method(capture, m, streams, sfn0, cache) for m in (methods or sc.methods)}


def _compensate(capture: Capture) -> Capture:
    sc = capture.scenario
    cfo = [detect_cell(s).cfo_hz for s in capture.search]
    search = [compensate_cfo(s, f) for s, f in zip(capture.search, cfo)]
    rx = [compensate_cfo(g, cfo[a // sc.antennas_per_receiver])
          for a, g in enumerate(capture.received)]
    return Capture(sc, rx, search, capture.realization, capture.cells, capture.sfn0,
                   capture.script)


# ---------------------------------------------------------------- runs

def manifest(sc: Scenario, seed: int, command: str, outputs=()) -> dict:
    return {"command": command, "scenario": sc.name, "config_hash": sc.config_hash(),
            "seed": int(seed), "versions": {"cellsense": __version__, "numpy": np.__version__,
                                            "scipy": scipy.__version__,
                                            "python": platform.python_version()},
            "outputs": sorted(str(o) for o in outputs)}


def write_manifest(out: Path, sc: Scenario, seed: int, command: str, outputs=()) -> Path:
    path = Path(out) / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest(sc, seed, command, outputs), indent=2) + "\n")
    return path


def run_pipeline(sc: Scenario, trials: int | None = None, methods=None, progress=None):
    """Monte Carlo gesture recognition for every method on shared captures.

    Returns ({method: RecognitionReport}, rows) where rows are
    (trial, gesture, method, prediction) tuples.
    """
    methods = tuple(methods or sc.methods)
    trials = sc.gestures.trials if trials is None else trials
    preds = {m: [] for m in methods}
    truths, rows = [], []
    for t in range(trials):
        for gi, label in enumerate(sc.gestures.labels):
            res = run_trial(sc, label, trial_rng(sc.seed, t, gi), methods)
            truths.append(label)
            for m in methods:
                preds[m].append(res[m].prediction)
                rows.append((t, label, m, res[m].prediction))
        if progress:
            progress(t + 1, trials)
    return {m: evaluate(preds[m], truths, m) for m in methods}, rows


# ---------------------------------------------------------------- benchmark

def apply_sweep(sc: Scenario, axis: str, value: float) -> Scenario:
    """Scenario with one swept parameter set."""
    sc = copy.deepcopy(sc)
    serving = sc.serving()
    neighbours = [c for c in sc.cells if c is not serving]
    if axis == "duty":
        for c in neighbours:
            c.duty = float(value)
    elif axis == "sir_db":
        set_sir(sc, float(value))
    elif axis == "snr_db":
        set_snr(sc, float(value))
    elif axis == "kl":
        kl = int(round(value))
        if kl % 4 or 72 % (kl // 4):
            raise ConfigError(f"K*L = {kl} is not reachable with L = 4")
        sc.estimation.K, sc.estimation.L = kl // 4, 4
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    return sc


def set_sir(sc: Scenario, sir_db: float) -> None:
    """Scale neighbours so their summed power sits ``sir_db`` below the serving cell."""
    serving = sc.serving()
    neighbours = [c for c in sc.cells if c is not serving]
    if not neighbours:
        return
    for pos in range(sc.receivers):
        total = 10 * np.log10(sum(10 ** (c.rsrp_dbm[pos] / 10) for c in neighbours))
        shift = serving.rsrp_dbm[pos] - sir_db - total
        for c in neighbours:
            r = list(c.rsrp_dbm)
            r[pos] += shift
            c.rsrp_dbm = tuple(r)


def set_snr(sc: Scenario, snr_db: float) -> None:
    """Noise per RE ``snr_db`` below the serving cell at the first position."""
    sc.channel.noise_dbm = sc.serving().rsrp_dbm[0] - snr_db


def nmse_db(est: np.ndarray, truth: np.ndarray) -> float:
    return float(10 * np.log10(np.sum(np.abs(est - truth) ** 2) / np.sum(np.abs(truth) ** 2)))


def estimation_nmse(sc: Scenario, rng: np.random.Generator, n_frames: int) -> dict:
    """NMSE (dB) of the serving stream at antenna 0 for the PBCH and CRS estimators."""
    cap = synthesize(sc, rng, None, n_frames=n_frames, search=False, antennas=[0])
    streams, sfn0 = discover(cap)
    grid = _with_sfn(cap.received[0], sfn0)
    serving_id = streams[0][0]
    stream_index = _stream_index(sc, serving_id)
    h = cap.realization.response(stream_index, 0)[:n_frames]
    K, L = sc.estimation.K, sc.estimation.L
    est = pbch_csi(grid, streams, K, L)[:, 0, :]
    band = np.arange((sc.n_sc - 72) // 2, (sc.n_sc + 72) // 2)
    truth_pbch = h[:, band].reshape(n_frames, 72 // K, K).mean(axis=2)
    crs = crs_ls_estimate(grid, serving_id, 0, 0, 0)
    truth_crs = h[:, crs.subcarriers.astype(int)]
    return {"pbch": nmse_db(est, truth_pbch), "crs": nmse_db(crs.values[:, 0, :], truth_crs)}


def _stream_index(sc: Scenario, n_id: int) -> int:
    s = 0
    for c in sc.cells:
        if c.pci == n_id:
            return s
        s += c.ports
    raise KeyError(n_id)


def run_bench(sc: Scenario, progress=None) -> list[dict]:
    """Sweep one axis; per value, mean NMSE over seeds and optional accuracy."""
    if sc.sweep is None:
        raise ConfigError("scenario has no sweep section")
    sw = sc.sweep
    base = apply_sweep(sc, "sir_db", sw.sir_db) if sw.sir_db is not None else sc
    if sw.snr_db is not None:
        base = apply_sweep(base, "snr_db", sw.snr_db)
    rows = []
    for vi, value in enumerate(sw.values):
        point = apply_sweep(base, sw.axis, value)
        oracle = point.replace(estimation=_oracle(point.estimation))
        nmse = {"pbch": [], "crs": []}
        for s in range(sw.seeds):
            # same seeds at every sweep value: only the swept parameter changes
            r = estimation_nmse(oracle, trial_rng(sc.seed, 1_000_000, s), sw.frames)
            for k in nmse:
                nmse[k].append(r[k])
        acc = {}
        if sw.accuracy_trials:
            reports, _ = run_pipeline(point.replace(seed=sc.seed + vi), sw.accuracy_trials)
            acc = {m: rep.accuracy for m, rep in reports.items()}
        for m in sorted(set(nmse) | set(acc)):
            vals = nmse.get(m)
            rows.append({"axis": sw.axis, "value": float(value), "method": m,
                         "nmse_db": float(10 * np.log10(np.mean(10 ** (np.array(vals) / 10))))
                         if vals else float("nan"),
                         "nmse_db_std": float(np.std(vals)) if vals else float("nan"),
                         "accuracy": acc.get(m, float("nan"))})
        if progress:
            progress(vi + 1, len(sw.values))
    return rows


def _oracle(est):
    est = copy.copy(est)
    est.discovery = "oracle"
    return est


def write_bench_csv(path, rows) -> None:
    cols = ("axis", "value", "method", "nmse_db", "nmse_db_std", "accuracy")
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(_fmt(r[c]) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return f"{v:.6g}"


def write_predictions_csv(path, rows) -> None:
    lines = ["trial,gesture,method,prediction"]
    lines += [f"{t},{g},{m},{p}" for t, g, m, p in rows]
    Path(path).write_text("\n".join(lines) + "\n")
