"""Frame-probability decoding and event-/segment-based ER, P, R, F scoring."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import median_filter

from .taxonomy import TargetClass

ONSET_COLLAR = 0.2
SEGMENT_LEN = 1.0
THRESHOLD = 0.5
MEDIAN_LEN = 5
MIN_DUR = 0.12
CLASS_NAMES = tuple(c.label for c in TargetClass)
VOICE_CLASSES = ("Speech", "Singing")


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Event:
    onset: float
    offset: float
    label: str


def sort_events(events: Iterable[Event]) -> list[Event]:
    return sorted(events, key=lambda e: (e.onset, e.offset, e.label))


def validate_events(events: Sequence[Event]) -> None:
    by_class: dict[str, list[Event]] = {}
    for e in events:
        if not e.onset < e.offset:
            raise EvaluationError(f"event {e} has onset >= offset")
        if e.label == "Silence":
            raise EvaluationError("Silence is implicit and cannot be an event")
        by_class.setdefault(e.label, []).append(e)
    for evs in by_class.values():
        evs = sorted(evs)
        for a, b in zip(evs, evs[1:]):
            if b.onset < a.offset:
                raise EvaluationError(f"overlapping {a.label} events {a} and {b}")


# ---------------------------------------------------------------- decoding

def _runs(bits: np.ndarray) -> list[tuple[int, int]]:
    d = np.diff(np.concatenate([[0], bits.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def probs_to_events(track, hop: float, classes: Sequence[str] = CLASS_NAMES, threshold: float = THRESHOLD,
                    median_len: int = MEDIAN_LEN, min_dur: float = MIN_DUR) -> list[Event]:
    """Binarise -> median filter -> merge runs -> drop short events, per class column.

    Silence columns never produce events.
    """
    track = np.asarray(track, dtype=np.float64)
    if track.ndim == 1:
        track = track[:, None]
    if track.shape[1] != len(classes):
        raise EvaluationError(f"{track.shape[1]} columns but {len(classes)} class names")
    events = []
    for k, name in enumerate(classes):
        if name == "Silence":
            continue
        bits = track[:, k] >= threshold
        if median_len > 1:
            bits = median_filter(bits.astype(np.uint8), size=median_len, mode="nearest").astype(bool)
        for a, b in _runs(bits):
            if (b - a) * hop >= min_dur - 1e-9:
                events.append(Event(round(a * hop, 6), round(b * hop, 6), name))
    return sort_events(events)


def labels_to_events(track, hop: float, classes: Sequence[str] = CLASS_NAMES) -> list[Event]:
    """Exact events of an integer class track (no smoothing)."""
    track = np.asarray(track, dtype=np.int64)
    events = []
    for k, name in enumerate(classes):
        if name == "Silence":
            continue
        for a, b in _runs(track == k):
            events.append(Event(round(a * hop, 6), round(b * hop, 6), name))
    return sort_events(events)


# ---------------------------------------------------------------- reports

def f_score(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


@dataclass
class MetricReport:
    mode: str
    er: float
    precision: float  # percent
    recall: float  # percent
    f: float  # percent
    tp: int
    fp: int
    fn: int
    s: int
    d: int
    i: int
    n: int
    n_hyp: int
    note: str = ""
    class_wise: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = asdict(self)
        if math.isnan(d["er"]):
            d["er"] = None
        return d

    def summary(self) -> str:
        er = "undefined" if math.isnan(self.er) else f"{self.er:.3f}"
        return f"{self.mode}: ER {er}  P {self.precision:.2f}%  R {self.recall:.2f}%  F {self.f:.2f}%"


def _report(mode, tp, n_hyp, n_ref, s, d, i, class_wise=None) -> MetricReport:
    p = tp / n_hyp if n_hyp else 0.0
    r = tp / n_ref if n_ref else 0.0
    note = ""
    if n_ref:
        er = (s + d + i) / n_ref
    else:
        er = float("nan")
        note = "ER undefined: the reference contains no events"
    return MetricReport(mode, er, 100 * p, 100 * r, 100 * f_score(p, r), tp, n_hyp - tp, n_ref - tp,
                        s, d, i, n_ref, n_hyp, note, class_wise or {})


def combine(reports: Sequence[MetricReport]) -> MetricReport:
    """Micro-average: sum counts over clips, then recompute rates."""
    if not reports:
        raise EvaluationError("nothing to combine")
    tot = {k: sum(getattr(r, k) for r in reports) for k in ("tp", "s", "d", "i", "n", "n_hyp")}
    return _report(reports[0].mode, tot["tp"], tot["n_hyp"], tot["n"], tot["s"], tot["d"], tot["i"])


# ---------------------------------------------------------------- event-based

def match_onsets(ref_onsets: Sequence[float], hyp_onsets: Sequence[float], collar: float) -> list[tuple[int, int]]:
    """Maximum one-to-one matching of onsets within +-collar.

    Each reference accepts hypotheses in an equal-width window, so taking
    references in onset order and giving each the earliest free hypothesis
    inside its window is optimal.
    """
    r_order = sorted(range(len(ref_onsets)), key=lambda k: ref_onsets[k])
    h_order = sorted(range(len(hyp_onsets)), key=lambda k: hyp_onsets[k])
    h_sorted = [hyp_onsets[k] for k in h_order]
    used = [False] * len(h_order)
    pairs = []
    start = 0
    eps = 1e-9
    for ri in r_order:
        lo, hi = ref_onsets[ri] - collar - eps, ref_onsets[ri] + collar + eps
        # hypotheses left of this window are out of reach for every later reference too
        while start < len(h_sorted) and h_sorted[start] < lo:
            start += 1
        for k in range(start, len(h_sorted)):
            if h_sorted[k] > hi:
                break
            if not used[k]:
                used[k] = True
                pairs.append((ri, h_order[k]))
                break
    return pairs


def event_based_metrics(ref: Sequence[Event], hyp: Sequence[Event], onset_collar: float = ONSET_COLLAR,
                        classes: Sequence[str] | None = None) -> MetricReport:
    """Onset-collared event matching with substitutions, deletions and insertions."""
    if classes is not None:
        ref = [e for e in ref if e.label in classes]
        hyp = [e for e in hyp if e.label in classes]
    labels = sorted({e.label for e in ref} | {e.label for e in hyp})
    matched_r, matched_h = set(), set()
    class_wise = {}
    for lab in labels:
        ri = [k for k, e in enumerate(ref) if e.label == lab]
        hi = [k for k, e in enumerate(hyp) if e.label == lab]
        pairs = match_onsets([ref[k].onset for k in ri], [hyp[k].onset for k in hi], onset_collar)
        for a, b in pairs:
            matched_r.add(ri[a])
            matched_h.add(hi[b])
        class_wise[lab] = _report("event", len(pairs), len(hi), len(ri), 0, len(ri) - len(pairs),
                                  len(hi) - len(pairs)).to_json()
    tp = len(matched_r)
    # substitutions: leftover events that align in onset but disagree in class
    rest_r = [k for k in range(len(ref)) if k not in matched_r]
    rest_h = [k for k in range(len(hyp)) if k not in matched_h]
    subs = len(match_onsets([ref[k].onset for k in rest_r], [hyp[k].onset for k in rest_h], onset_collar))
    d = len(ref) - tp - subs
    i = len(hyp) - tp - subs
    return _report("event", tp, len(hyp), len(ref), subs, d, i, class_wise)


# ---------------------------------------------------------------- segment-based

def rasterize(events: Sequence[Event], labels: Sequence[str], segment_len: float, n_segments: int) -> np.ndarray:
    """(n_segments, n_labels) activity: a class is active if an event overlaps the segment."""
    out = np.zeros((n_segments, len(labels)), dtype=bool)
    col = {lab: k for k, lab in enumerate(labels)}
    for e in events:
        if e.label not in col:
            continue
        a = int(math.floor(e.onset / segment_len + 1e-9))
        b = int(math.ceil(e.offset / segment_len - 1e-9))
        out[max(a, 0):min(b, n_segments), col[e.label]] = True
    return out


def segment_counts(ref: np.ndarray, hyp: np.ndarray) -> dict[str, int]:
    tp = np.sum(ref & hyp, axis=1)
    fp = np.sum(hyp & ~ref, axis=1)
    fn = np.sum(ref & ~hyp, axis=1)
    return {
        "tp": int(tp.sum()), "fp": int(fp.sum()), "fn": int(fn.sum()),
        "s": int(np.minimum(fn, fp).sum()),
        "d": int(np.maximum(0, fn - fp).sum()),
        "i": int(np.maximum(0, fp - fn).sum()),
        "n": int(ref.sum()), "n_hyp": int(hyp.sum()),
    }


def _as_events(x, classes) -> list[Event]:
    if hasattr(x, "target") and hasattr(x, "hop"):
        return labels_to_events(x.target, x.hop)
    return list(x)


def segment_based_metrics(ref, hyp, segment_len: float = SEGMENT_LEN, duration: float | None = None,
                          classes: Sequence[str] | None = None) -> MetricReport:
    """Score class activity on fixed segments; ``ref``/``hyp`` are event lists or label tracks."""
    if segment_len <= 0:
        raise EvaluationError("segment_len must be positive")
    ref, hyp = _as_events(ref, classes), _as_events(hyp, classes)
    labels = list(classes) if classes is not None else sorted({e.label for e in ref} | {e.label for e in hyp})
    if duration is None:
        duration = max([e.offset for e in ref] + [e.offset for e in hyp] + [0.0])
    n_seg = max(1, int(math.ceil(duration / segment_len - 1e-9)))
    c = segment_counts(rasterize(ref, labels, segment_len, n_seg), rasterize(hyp, labels, segment_len, n_seg))
    return _report("segment", c["tp"], c["n_hyp"], c["n"], c["s"], c["d"], c["i"])


# ---------------------------------------------------------------- I/O

def write_events(path, events: Sequence[Event]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["onset", "offset", "class"])
        for e in sort_events(events):
            w.writerow([f"{e.onset:.6f}", f"{e.offset:.6f}", e.label])


def read_events(path) -> list[Event]:
    events = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "onset":
                continue
            if len(row) != 3:
                raise EvaluationError(f"{path}: expected onset,offset,class rows, got {row}")
            events.append(Event(float(row[0]), float(row[1]), row[2].strip()))
    validate_events(events)
    return sort_events(events)


def write_report(path, report: MetricReport) -> None:
    Path(path).write_text(json.dumps(report.to_json(), indent=1))
