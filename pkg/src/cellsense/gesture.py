"""Training-free six-gesture classifier over two receivers' Doppler tracks."""

from dataclasses import dataclass, field

import numpy as np

from .channel import GESTURES

NONE = "none"
LABELS = GESTURES + (NONE,)
KAPPA = 0.9
PAUSE_MIN_WINDOWS = 4
ACTIVITY_REL = 0.2

_MIRROR = {"push": "pull", "pull": "push", "slide_left": "slide_right",
           "slide_right": "slide_left", "v1": "v2", "v2": "v1", NONE: NONE}


def mirror_label(label: str) -> str:
    """Label produced by negating both Doppler tracks."""
    return _MIRROR[label]


def _values(track):
    return np.asarray(getattr(track, "f", track), dtype=np.float64)


def remove_outliers(track, window: int = 5, n_sigma: float = 3.0):
    """Hampel filter: samples more than ``n_sigma`` scaled MADs from the
    sliding median are replaced by that median.

    Accepts a DopplerTrack or a plain array and returns the same kind.
    """
    f = _values(track)
    half = window // 2
    out = f.copy()
    for i in range(len(f)):
        seg = f[max(0, i - half):i + half + 1]
        med = np.median(seg)
        mad = 1.4826 * np.median(np.abs(seg - med))
        if abs(f[i] - med) > n_sigma * mad:
            out[i] = med
    if hasattr(track, "f"):
        return type(track)(out, track.times)
    return out


def activity(f1, f2, rel: float = ACTIVITY_REL) -> np.ndarray:
    """Windows where |f1| + |f2| exceeds ``rel`` of its maximum."""
    a = np.abs(_values(f1)) + np.abs(_values(f2))
    peak = a.max() if len(a) else 0.0
    if peak <= 0:
        return np.zeros(len(a), bool)
    return a > rel * peak


def detect_pause(f1, f2, min_windows: int = PAUSE_MIN_WINDOWS, rel: float = ACTIVITY_REL) -> bool:
    """True if the motion stops for ``min_windows`` windows with activity on both sides."""
    a1, a2 = _values(f1), _values(f2)
    if len(a1) != len(a2):
        raise ValueError("tracks differ in length")
    act = activity(a1, a2, rel)
    idx = np.flatnonzero(act)
    if len(idx) < 2:
        return False
    run = 0
    for on in act[idx[0]:idx[-1] + 1]:
        run = 0 if on else run + 1
        if run >= min_windows:
            return True
    return False


def classify(f1, f2, kappa: float = KAPPA, pause_min_windows: int = PAUSE_MIN_WINDOWS,
             positive_direction: str = "left") -> str:
    """Decision tree over two outlier-cleaned Doppler tracks.

    ``positive_direction`` fixes which slide (and v variant) a positive
    accumulated f1 - f2 maps to: "left" gives slide_left / v1.
    """
    a1, a2 = _values(f1), _values(f2)
    if len(a1) != len(a2):
        raise ValueError("tracks differ in length")
    if not (np.any(a1) or np.any(a2)):
        return NONE
    if positive_direction not in ("left", "right"):
        raise ValueError("positive_direction must be 'left' or 'right'")
    acc = float(np.sum(a1 - a2))
    flip = positive_direction == "right"

    def by_sign(pos, neg):
        if acc == 0:
            return NONE
        return (pos if (acc > 0) != flip else neg)

    if detect_pause(a1, a2, pause_min_windows):
        return by_sign("v1", "v2")
    both = (a1 != 0) & (a2 != 0)
    if both.any():
        s1, s2 = np.sign(a1[both]), np.sign(a2[both])
        agree = s1 == s2
        if agree.mean() >= kappa:
            common = np.sum(s1[agree])
            if common > 0:
                return "push"
            if common < 0:
                return "pull"
    return by_sign("slide_left", "slide_right")


def recognize(f1, f2, **kwargs) -> str:
    """Outlier removal followed by classification."""
    return classify(remove_outliers(f1), remove_outliers(f2), **kwargs)


@dataclass
class RecognitionReport:
    """Confusion counts of truth gestures (rows) against predictions incl. none.

    ``idle`` counts predictions on trials whose truth is none; any gesture
    predicted there is a false alarm.
    """

    confusion: np.ndarray
    idle: np.ndarray = field(default_factory=lambda: np.zeros(len(LABELS), np.int64))
    method: str = ""

    @property
    def total(self) -> int:
        return int(self.confusion.sum() + self.idle.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.confusion) + self.idle[-1])

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else float("nan")

    @property
    def error_recognition(self) -> int:
        return int(self.confusion[:, :-1].sum() - np.trace(self.confusion))

    @property
    def missed_detection(self) -> int:
        return int(self.confusion[:, -1].sum())

    @property
    def false_alarm(self) -> int:
        return int(self.idle[:-1].sum())

    def per_gesture_accuracy(self) -> dict:
        rows = self.confusion.sum(axis=1)
        return {g: (self.confusion[i, i] / rows[i] if rows[i] else float("nan"))
                for i, g in enumerate(GESTURES)}

    def to_text(self) -> str:
        """Structured plain-text serialization."""
        lines = [f"method: {self.method}", f"trials: {self.total}",
                 f"accuracy: {self.accuracy:.4f}",
                 f"error_recognition: {self.error_recognition}",
                 f"false_alarm: {self.false_alarm}",
                 f"missed_detection: {self.missed_detection}",
                 "confusion:  # rows truth, columns " + " ".join(LABELS)]
        for g, row in zip(GESTURES, self.confusion):
            lines.append(f"  {g}: [{', '.join(str(int(v)) for v in row)}]")
        if self.idle.sum():
            lines.append(f"  {NONE}: [{', '.join(str(int(v)) for v in self.idle)}]")
        return "\n".join(lines) + "\n"

    def render_table(self) -> str:
        """Aligned confusion table for the terminal."""
        width = max(len(s) for s in LABELS) + 1
        head = "truth\\pred".ljust(width) + "".join(s.rjust(width) for s in LABELS)
        rows = [head]
        for g, row in zip(GESTURES, self.confusion):
            rows.append(g.ljust(width) + "".join(str(int(v)).rjust(width) for v in row))
        if self.idle.sum():
            rows.append(NONE.ljust(width) + "".join(str(int(v)).rjust(width) for v in self.idle))
        title = f"{self.method} " if self.method else ""
        rows.append(f"{title}accuracy {100 * self.accuracy:.1f}% "
                    f"(error {self.error_recognition}, false alarm {self.false_alarm}, "
                    f"missed {self.missed_detection})")
        return "\n".join(rows)


def evaluate(predictions, truths, method: str = "") -> RecognitionReport:
    """Tally predictions against ground truth labels."""
    predictions, truths = list(predictions), list(truths)
    if len(predictions) != len(truths):
        raise ValueError(f"{len(predictions)} predictions for {len(truths)} truths")
    col = {g: i for i, g in enumerate(LABELS)}
    conf = np.zeros((len(GESTURES), len(LABELS)), np.int64)
    idle = np.zeros(len(LABELS), np.int64)
    for p, t in zip(predictions, truths):
        if p not in col or t not in col:
            raise ValueError(f"unknown label in pair ({p!r}, {t!r})")
        if t == NONE:
            idle[col[p]] += 1
        else:
            conf[col[t], col[p]] += 1
    return RecognitionReport(conf, idle, method)
