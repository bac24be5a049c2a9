"""Scenario files: YAML experiment descriptions with line-precise validation."""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .channel import GESTURES, MAX_GESTURE_DOPPLER, MIN_GESTURE_DOPPLER, ChannelProfile
from .errors import ConfigError
from .phy.cell import CellConfig, validate_cells

METHODS = ("pbch", "crs", "crs_ss")
SWEEP_AXES = ("duty", "sir_db", "snr_db", "kl")

# living-room RSRP (dBm) at receive positions R1 and R2
LIVING_ROOM_RSRP = {252: (-77.0, -71.0), 249: (-86.0, -85.0), 253: (-85.0, -81.0),
                       256: (-100.0, -94.0)}


@dataclass
class CellSpec:
    pci: int = 0
    ports: int = 1
    rsrp_dbm: tuple = (-77.0, -77.0)
    duty: float = 1.0

    def config(self, tx_power_db: float = 0.0) -> CellConfig:
        return CellConfig.from_pci(self.pci, n_ports=self.ports, tx_power_db=tx_power_db,
                                   payload_duty=self.duty)


@dataclass
class ChannelSpec:
    n_paths: int = 4
    delay_spread_s: float = 0.3e-6
    max_excess_delay_s: float = 1.5e-6
    hand_db: float = -20.0
    reference_hand_db: float = -10.0
    hand_excess_delay_s: float = 20e-9
    phase_noise_rad: float = 0.05
    cfo_hz: float = 0.0
    noise_dbm: float = -125.0

    def profile(self) -> ChannelProfile:
        return ChannelProfile(self.n_paths, self.delay_spread_s, self.max_excess_delay_s,
                              self.hand_db, self.reference_hand_db, self.hand_excess_delay_s,
                              self.phase_noise_rad)


@dataclass
class GestureSpec:
    labels: tuple = GESTURES
    trials: int = 50
    start_s: tuple = (0.5, 0.9)
    duration_s: tuple = (0.9, 1.2)
    peak_doppler_hz: tuple = (6.0, 18.0)
    pause_s: float = 0.3
    ramp_s: float = 0.1


@dataclass
class EstimationSpec:
    K: int = 3
    L: int = 4
    crs_ss_count: int = 100
    discovery: str = "sic"
    n_combine: int = 4


@dataclass
class DspSpec:
    window_s: float = 0.1
    step_s: float = 0.05
    floor_db: float = 6.0
    dynamic_range_db: float | None = 15.0
    kappa: float = 0.9
    pause_min_windows: int = 4
    positive_direction: str = "left"
    dtw_band: int = 10


@dataclass
class SweepSpec:
    axis: str = "duty"
    values: tuple = (0.0, 0.25, 0.5, 1.0)
    frames: int = 500
    seeds: int = 20
    sir_db: float | None = 5.0
    snr_db: float | None = 20.0
    accuracy_trials: int = 0


@dataclass
class Scenario:
    name: str = "living_room_r1"
    seed: int = 0
    cells: list = field(default_factory=lambda: [
        CellSpec(pci, 1, rsrp) for pci, rsrp in LIVING_ROOM_RSRP.items()])
    reference_dbm: float = -77.0
    receivers: int = 2
    antennas_per_receiver: int = 2
    n_sc: int = 1200
    capture_s: float = 2.5
    methods: tuple = METHODS
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    gestures: GestureSpec = field(default_factory=GestureSpec)
    estimation: EstimationSpec = field(default_factory=EstimationSpec)
    dsp: DspSpec = field(default_factory=DspSpec)
    sweep: SweepSpec | None = None
    output: str = "out"

    @property
    def n_frames(self) -> int:
        return int(round(self.capture_s * 100))

    @property
    def n_antennas(self) -> int:
        return self.receivers * self.antennas_per_receiver

    @property
    def antenna_position(self) -> tuple:
        return tuple(a // self.antennas_per_receiver for a in range(self.n_antennas))

    @property
    def reference_antennas(self) -> tuple:
        return tuple(a for a in range(self.n_antennas) if a % self.antennas_per_receiver)

    def cell_configs(self) -> list[CellConfig]:
        return [c.config() for c in self.cells]

    def serving(self) -> CellSpec:
        """Cell with the highest mean RSRP."""
        return max(self.cells, key=lambda c: float(np.mean(c.rsrp_dbm)))

    def large_scale_db(self) -> np.ndarray:
        """Received power offsets (dB) of every stream at every antenna."""
        rows = []
        for c in self.cells:
            per_ant = [c.rsrp_dbm[p] - self.reference_dbm for p in self.antenna_position]
            rows.extend([per_ant] * c.ports)
        return np.asarray(rows, dtype=np.float64)

    def noise_var(self) -> float:
        return 10 ** ((self.channel.noise_dbm - self.reference_dbm) / 10)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


_SECTIONS = {"channel": ChannelSpec, "gestures": GestureSpec, "estimation": EstimationSpec,
             "dsp": DspSpec, "sweep": SweepSpec}


def _line_map(node, path=(), out=None):
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            name = key.value
            out[path + (name,)] = key.start_mark.line + 1
            _line_map(value, path + (name,), out)
            out[path + (name,)] = key.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _line_map(item, path + (i,), out)
    return out


class _Ctx:
    def __init__(self, source, lines):
        self.source = source
        self.lines = lines

    def fail(self, path, message):
        line = None
        for cut in range(len(path), -1, -1):
            line = self.lines.get(tuple(path[:cut]))
            if line is not None:
                break
        where = f"{self.source}:{line}" if line else self.source
        dotted = ".".join(str(p) for p in path) or "<root>"
        raise ConfigError(f"{where}: {dotted}: {message}")


def _coerce(ctx, path, value, default, nullable=False):
    """Convert a YAML value to the type of ``default``."""
    kind = type(default)
    if value is None:
        if nullable:
            return None
        ctx.fail(path, "value required")
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if isinstance(default, float) or default is None:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError
            return value
        if isinstance(default, tuple):
            items = value if isinstance(value, list) else [value]
            if default and isinstance(default[0], str):
                if not all(isinstance(v, str) for v in items):
                    raise TypeError
                return tuple(items)
            if any(isinstance(v, bool) for v in items):
                raise TypeError
            return tuple(float(v) for v in items)
    except (TypeError, ValueError):
        ctx.fail(path, f"expected {kind.__name__ if default is not None else 'number'}, "
                       f"got {value!r}")
    return value


def _build(ctx, cls, data, path):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        ctx.fail(path, "expected a mapping")
    defaults = cls()
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            ctx.fail(path + (key,), f"unknown key (allowed: {', '.join(sorted(fields))})")
        nullable = "None" in str(fields[key].type)
        kwargs[key] = _coerce(ctx, path + (key,), value, getattr(defaults, key), nullable)
    return cls(**kwargs)


def _cells(ctx, data, n_pos):
    if not isinstance(data, list) or not data:
        ctx.fail(("cells",), "expected a non-empty list of cells")
    out = []
    for i, item in enumerate(data):
        path = ("cells", i)
        if not isinstance(item, dict):
            ctx.fail(path, "expected a mapping with pci, ports, rsrp_dbm, duty")
        if "pci" not in item:
            ctx.fail(path, "missing pci")
        spec = _build(ctx, CellSpec, item, path)
        if not 0 <= spec.pci <= 503:
            ctx.fail(path + ("pci",), f"PCI {spec.pci} outside 0..503")
        if spec.ports not in (1, 2):
            ctx.fail(path + ("ports",), "ports must be 1 or 2")
        if not 0.0 <= spec.duty <= 1.0:
            ctx.fail(path + ("duty",), "duty must lie in [0, 1]")
        rsrp = spec.rsrp_dbm
        if len(rsrp) == 1:
            rsrp = rsrp * n_pos
        if len(rsrp) != n_pos:
            ctx.fail(path + ("rsrp_dbm",), f"need one RSRP per receive position ({n_pos})")
        spec.rsrp_dbm = tuple(rsrp)
        out.append(spec)
    return out


def validate(ctx, sc: Scenario) -> Scenario:
    """Semantic checks that need the whole scenario."""
    if sc.receivers != 2 or sc.antennas_per_receiver != 2:
        ctx.fail(("receivers",), "two receive positions with two antennas each are required")
    for i in range(len(sc.cells)):
        try:
            validate_cells([c.config() for c in sc.cells[:i + 1]])
        except ConfigError as exc:
            ctx.fail(("cells", i, "pci"), str(exc))
    if sc.n_sc % 12 or not 72 <= sc.n_sc <= 1320:
        ctx.fail(("n_sc",), "n_sc must be a multiple of 12 between 72 and 1320")
    if sc.capture_s < 0.5:
        ctx.fail(("capture_s",), "capture shorter than the band-pass warm-up")
    for m in sc.methods:
        if m not in METHODS:
            ctx.fail(("methods",), f"unknown method {m!r} (allowed: {', '.join(METHODS)})")
    est = sc.estimation
    n_streams = sum(c.ports for c in sc.cells)
    if est.K < 1 or est.L < 1 or 72 % est.K or 4 % est.L:
        ctx.fail(("estimation", "K"), f"K={est.K}, L={est.L} does not tile the 72x4 PBCH region")
    if est.K * est.L < n_streams:
        ctx.fail(("estimation", "K"), f"K*L={est.K * est.L} is below the {n_streams} streams")
    if est.discovery not in ("sic", "oracle"):
        ctx.fail(("estimation", "discovery"), "discovery must be 'sic' or 'oracle'")
    if not 0 < est.crs_ss_count <= 2 * sc.n_sc // 12:
        ctx.fail(("estimation", "crs_ss_count"), "crs_ss_count exceeds the CRS subcarriers")
    g = sc.gestures
    for lab in g.labels:
        if lab not in GESTURES:
            ctx.fail(("gestures", "labels"), f"unknown gesture {lab!r}")
    lo, hi = min(g.peak_doppler_hz), max(g.peak_doppler_hz)
    if not (MIN_GESTURE_DOPPLER < lo and hi <= MAX_GESTURE_DOPPLER):
        ctx.fail(("gestures", "peak_doppler_hz"), "peak Doppler must lie in (3, 20] Hz")
    if max(g.start_s) + max(g.duration_s) > sc.capture_s:
        ctx.fail(("gestures", "duration_s"), "gesture does not fit in the capture")
    if 2 * max(g.duration_s) > sc.capture_s:
        # the track threshold takes its noise floor from the median window
        ctx.fail(("gestures", "duration_s"), "gesture must leave at least half the capture idle")
    if min(g.duration_s) <= g.pause_s + 4 * g.ramp_s:
        ctx.fail(("gestures", "pause_s"), "gesture too short for its pause and ramps")
    if g.trials < 1:
        ctx.fail(("gestures", "trials"), "trials must be positive")
    d = sc.dsp
    if d.positive_direction not in ("left", "right"):
        ctx.fail(("dsp", "positive_direction"), "positive_direction must be 'left' or 'right'")
    if not 0.5 <= d.kappa <= 1.0:
        ctx.fail(("dsp", "kappa"), "kappa must lie in [0.5, 1]")
    if sc.sweep is not None:
        if sc.sweep.axis not in SWEEP_AXES:
            ctx.fail(("sweep", "axis"), f"axis must be one of {', '.join(SWEEP_AXES)}")
        if not sc.sweep.values:
            ctx.fail(("sweep", "values"), "sweep needs at least one value")
    return sc


def load_scenario(path=None, text: str | None = None) -> Scenario:
    """Parse and validate a scenario; without arguments return the default."""
    source = str(path) if path is not None else "<scenario>"
    if text is None:
        if path is None:
            return validate(_Ctx(source, {}), Scenario())
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{source}: cannot read scenario ({exc.strerror})") from exc
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark else ""
        raise ConfigError(f"{source}{line}: invalid YAML ({getattr(exc, 'problem', exc)})") from exc
    ctx = _Ctx(source, _line_map(node) if node is not None else {})
    if data is None:
        data = {}
    if not isinstance(data, dict):
        ctx.fail((), "scenario must be a mapping")
    defaults = Scenario()
    kwargs = {}
    names = {f.name for f in dataclasses.fields(Scenario)}
    n_pos = int(data.get("receivers", defaults.receivers)) if isinstance(
        data.get("receivers", 2), int) else 2
    for key, value in data.items():
        if key not in names:
            ctx.fail((key,), f"unknown key (allowed: {', '.join(sorted(names))})")
        if key == "cells":
            kwargs[key] = _cells(ctx, value, n_pos)
        elif key == "sweep" and value is None:
            kwargs[key] = None
        elif key in _SECTIONS:
            kwargs[key] = _build(ctx, _SECTIONS[key], value, (key,))
        else:
            kwargs[key] = _coerce(ctx, (key,), value, getattr(defaults, key))
    return validate(ctx, Scenario(**kwargs))


def dump_scenario(sc: Scenario) -> str:
    """YAML text that reloads to the same scenario."""
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        if isinstance(v, list):
            return [plain(x) for x in v]
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        return v
    return yaml.safe_dump(plain(sc.to_dict()), sort_keys=False)
