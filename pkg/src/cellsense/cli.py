"""Command-line experiment runner.

Sub-commands mirror the processing chain so every stage can be inspected:

    synth     one gesture capture -> CSGRID01 files + truth.json
    estimate  captures -> cells.json + CSI CSV per method and antenna
    dsp       CSI CSV -> spectrogram and Doppler-track CSV per receive position
    classify  tracks -> gesture label
    pipeline  Monte Carlo recognition for every method -> reports
    bench     parameter sweep -> NMSE / accuracy CSV

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .dsp import write_spectrogram_csv, write_track_csv, read_track_csv
from .errors import ConfigError
from .export import read_csi_csv, read_json, write_csi_csv, write_json
from .gesture import NONE
from .phy.grid import read_grid, write_grid
from .pipeline import (SEARCH_SUBFRAMES, SEARCH_SYMBOLS, TX_SUBFRAMES, TX_SYMBOLS, Capture,
                       _compensate, _with_sfn, classify_tracks, discover, draw_script,
                       dynamic_series, estimate_streams, process_position, run_bench,
                       run_pipeline, synthesize, trial_rng, write_bench_csv, write_manifest,
                       write_predictions_csv)
from .receiver.estimation import joint_ls_estimate
from .receiver.search import sic_cell_search
from .scenario import METHODS, Scenario, load_scenario

log = logging.getLogger("cellsense")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


# ---------------------------------------------------------------- helpers

def _scenario(args) -> Scenario:
    sc = load_scenario(args.scenario) if args.scenario else Scenario()
    if args.seed is not None:
        sc = sc.replace(seed=int(args.seed))
    return sc


def _out(args, sc: Scenario) -> Path:
    out = Path(args.out or sc.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _methods(args, sc: Scenario):
    return tuple(args.method) if args.method else sc.methods


def _need(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing input {path}")
    return path


def _progress(label):
    def report(done, total):
        log.info("%s %d/%d", label, done, total)
    return report


# ---------------------------------------------------------------- sub-commands

def run_synth(sc: Scenario, out: Path, gesture: str | None = None, trial: int = 0) -> list:
    """Synthesize one trial and store the received grids with ground truth."""
    labels = sc.gestures.labels
    label = gesture or labels[0]
    if label != NONE and label not in labels:
        raise ConfigError(f"gesture {label!r} is not in the scenario's gesture list")
    key = labels.index(label) if label in labels else len(labels)
    rng = trial_rng(sc.seed, trial, key)
    script = draw_script(sc, label, rng) if label != NONE else None
    cap = synthesize(sc, rng, script, search=True)
    outputs = []
    for a, grid in enumerate(cap.received):
        outputs.append(out / f"capture_a{a}.csgrid")
        write_grid(outputs[-1], grid)
    for p, grid in enumerate(cap.search):
        outputs.append(out / f"search_r{p}.csgrid")
        write_grid(outputs[-1], grid)
    truth = {"gesture": label, "trial": trial, "sfn0": cap.sfn0, "frames": sc.n_frames,
             "cells": [{"pci": c.pci, "ports": c.ports, "rsrp_dbm": list(c.rsrp_dbm),
                        "duty": c.duty} for c in sc.cells]}
    if script is not None:
        truth["script"] = {"start_s": script.start_s, "duration_s": script.duration_s,
                           "peak_doppler_hz": script.peak_doppler_hz,
                           "pause_s": script.pause_s, "ramp_s": script.ramp_s}
    outputs.append(out / "truth.json")
    write_json(outputs[-1], truth)
    return outputs


def load_capture(sc: Scenario, src: Path) -> Capture:
    rx = [read_grid(_need(src / f"capture_a{a}.csgrid"), TX_SUBFRAMES, TX_SYMBOLS)
          for a in range(sc.n_antennas)]
    search = [read_grid(_need(src / f"search_r{p}.csgrid"), SEARCH_SUBFRAMES, SEARCH_SYMBOLS)
              for p in range(sc.receivers)]
    truth = read_json(src / "truth.json") if (src / "truth.json").exists() else {}
    cap = Capture(sc, rx, search, None, sc.cell_configs(), int(truth.get("sfn0", 0)))
    return _compensate(cap) if sc.channel.cfo_hz else cap


def run_estimate(sc: Scenario, src: Path, out: Path, methods) -> list:
    """Discover cells and export per-antenna CSI for each method."""
    cap = load_capture(sc, src)
    if sc.estimation.discovery == "sic":
        infos = sic_cell_search(cap.search[0], K=sc.estimation.K, L=sc.estimation.L,
                                n_combine=sc.estimation.n_combine, ref_db=sc.reference_dbm)
        records = [i.record() for i in infos]
        streams = [(i.identity.n_id, i.n_ports) for i in infos]
        sfn0 = infos[0].sfn0 if infos else 0
    else:
        streams, sfn0 = discover(cap)
        records = [{"pci": n, "ports": p, "sfn": sfn0, "rsrp_db": None} for n, p in streams]
    if not streams:
        raise RuntimeError("cell search found no decodable cell")
    outputs = [out / "cells.json"]
    write_json(outputs[0], records)
    K, L = sc.estimation.K, sc.estimation.L
    for m in methods:
        if m == "pbch":
            for a, grid in enumerate(cap.received):
                est = joint_ls_estimate(_with_sfn(grid, sfn0), streams, K, L).values
                nf, ns, ng = est.shape
                n_kg = 72 // K
                arr = est.reshape(nf, ns, ng // n_kg, n_kg).transpose(0, 1, 3, 2)
                outputs.append(out / f"csi_{m}_a{a}.csv")
                write_csi_csv(outputs[-1], arr)
        else:
            csi = estimate_streams(cap, m, streams, sfn0)
            ports = streams[0][1]
            for a in range(len(cap.received)):
                arr = np.stack([csi[a, p] for p in range(ports)], axis=1)[..., None]
                outputs.append(out / f"csi_{m}_a{a}.csv")
                write_csi_csv(outputs[-1], arr)
    return outputs


def _load_csi(sc: Scenario, src: Path, method: str) -> dict:
    cells = read_json(_need(src / "cells.json"))
    ports = int(cells[0]["ports"])
    csi = {}
    for a in range(sc.n_antennas):
        arr = read_csi_csv(_need(src / f"csi_{method}_a{a}.csv"))
        for p in range(ports):
            # PBCH groups are averaged over their time blocks
            csi[a, p] = arr[:, p].mean(axis=2) if method == "pbch" else arr[:, p, :, 0]
    return csi


def run_dsp(sc: Scenario, src: Path, out: Path, methods) -> list:
    """Spectrogram and Doppler track per receive position and method."""
    outputs = []
    for m in methods:
        csi = _load_csi(sc, src, m)
        for pos in range(sc.receivers):
            spec, track = process_position(
                dynamic_series(csi, pos, sc.antennas_per_receiver, m), sc)
            outputs.append(out / f"spectrogram_{m}_r{pos}.csv")
            write_spectrogram_csv(outputs[-1], spec)
            outputs.append(out / f"track_{m}_r{pos}.csv")
            write_track_csv(outputs[-1], track)
    return outputs


def run_classify(sc: Scenario, src: Path, out: Path, methods) -> tuple[dict, list]:
    labels = {}
    for m in methods:
        tracks = [read_track_csv(_need(src / f"track_{m}_r{p}.csv")) for p in range(sc.receivers)]
        labels[m] = classify_tracks(tracks, sc)
    truth = read_json(src / "truth.json").get("gesture") if (src / "truth.json").exists() else None
    lines = [f"{m}: {lab}" for m, lab in labels.items()]
    if truth is not None:
        lines.append(f"truth: {truth}")
    path = out / "labels.txt"
    path.write_text("\n".join(lines) + "\n")
    return labels, [path]


# ---------------------------------------------------------------- argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario YAML (default: built-in living room)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out", help="output directory (default: scenario output)")
    common.add_argument("--method", action="append", choices=METHODS,
                        help="estimator; repeat for several (default: scenario methods)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="cellsense", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="synthesize one gesture capture")
    p.add_argument("--gesture", help="gesture label (default: first scenario gesture)")
    p.add_argument("--trial", type=int, default=0, help="trial counter for seed splitting")
    for name, text in (("estimate", "cell search and CSI export"),
                       ("dsp", "spectrograms and Doppler tracks"),
                       ("classify", "gesture label from Doppler tracks")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--input", help="directory with the previous stage (default: --out)")
    p = sub.add_parser("pipeline", parents=[common], help="Monte Carlo recognition run")
    p.add_argument("--trials", type=int, help="trials per gesture (default: scenario)")
    sub.add_parser("bench", parents=[common], help="sweep benchmark")
    return parser


def dispatch(args) -> int:
    sc = _scenario(args)
    out = _out(args, sc)
    methods = _methods(args, sc)
    src = Path(getattr(args, "input", None) or out)
    cmd = args.command
    if cmd == "synth":
        outputs = run_synth(sc, out, args.gesture, args.trial)
    elif cmd == "estimate":
        outputs = run_estimate(sc, src, out, methods)
    elif cmd == "dsp":
        outputs = run_dsp(sc, src, out, methods)
    elif cmd == "classify":
        labels, outputs = run_classify(sc, src, out, methods)
        for m, lab in labels.items():
            print(f"{m}: {lab}")
    elif cmd == "pipeline":
        reports, rows = run_pipeline(sc, args.trials, methods, _progress("trial"))
        outputs = []
        for m, rep in reports.items():
            outputs.append(out / f"report_{m}.txt")
            outputs[-1].write_text(rep.to_text())
            print(rep.render_table())
            print()
        outputs.append(out / "predictions.csv")
        write_predictions_csv(outputs[-1], rows)
    elif cmd == "bench":
        rows = run_bench(sc, _progress("sweep point"))
        outputs = [out / "bench.csv"]
        write_bench_csv(outputs[0], rows)
    else:  # pragma: no cover - argparse rejects unknown commands
        raise ConfigError(f"unknown command {cmd!r}")
    names = [Path(o).name for o in outputs]
    write_manifest(out, sc, sc.seed, cmd, names)
    log.info("wrote %d files to %s", len(names) + 1, out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ValueError, OSError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
