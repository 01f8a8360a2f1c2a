"""Segmentation-free detection with per-action HMMs composed in parallel."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from .hmm import DiscreteHmm, viterbi

BACKGROUND = "background"


@dataclass(frozen=True, eq=False)
class CompositeHmm:
    """Per-action units joined into one HMM.

    ``model`` holds the composite tables; state ``s`` belongs to unit
    ``state_units[s]``, whose states start at ``state_offsets[unit]``.
    """

    units: tuple[DiscreteHmm, ...]
    state_offsets: np.ndarray
    entry: np.ndarray
    exit_prob: float
    model: DiscreteHmm

    @property
    def labels(self) -> list:
        return [u.label for u in self.units]

    @property
    def state_units(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.units)), [u.n_states for u in self.units])


def compose_parallel(units: Sequence[DiscreteHmm], exit_prob: float = 0.05) -> CompositeHmm:
    """Block-diagonal composition of ``units``.

    Inside a unit, transitions are scaled by ``1 - exit_prob``; the remaining
    ``exit_prob`` from every state re-enters any unit (uniformly chosen, own
    unit included) through that unit's initial distribution.
    """
    units = tuple(units)
    if not units:
        raise ValueError("need at least one unit")
    alphabet = {u.n_symbols for u in units}
    if len(alphabet) != 1:
        raise ValueError(f"units disagree on alphabet size: {sorted(alphabet)}")
    if not 0.0 <= exit_prob < 1.0:
        raise ValueError("exit_prob must lie in [0, 1)")

    sizes = [u.n_states for u in units]
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    entry = np.full(len(units), 1.0 / len(units))
    reentry = np.concatenate([w * u.initial for w, u in zip(entry, units)])

    total = sum(sizes)
    transition = np.tile(exit_prob * reentry, (total, 1))
    for off, u in zip(offsets, units):
        block = slice(off, off + u.n_states)
        transition[block, block] += (1.0 - exit_prob) * u.transition
    emission = np.concatenate([u.emission for u in units], axis=0)
    model = DiscreteHmm(reentry, transition, emission, label="composite")
    return CompositeHmm(units, offsets, entry, float(exit_prob), model)


@dataclass(frozen=True)
class Segment:
    start: int
    end: int  # inclusive
    label: Hashable


@dataclass(frozen=True)
class DetectionResult:
    frame_labels: tuple
    segments: tuple[Segment, ...]

    @classmethod
    def from_labels(cls, labels: Sequence[Hashable]) -> "DetectionResult":
        return cls(tuple(labels), tuple(segments_of(labels)))

    def to_text(self) -> str:
        lines = ["# frames"]
        lines += [f"{i}\t{label}" for i, label in enumerate(self.frame_labels)]
        lines.append("# segments")
        lines += [f"{s.start}\t{s.end}\t{s.label}" for s in self.segments]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())


def segments_of(labels: Sequence[Hashable]) -> list[Segment]:
    """Maximal runs of equal labels."""
    out: list[Segment] = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            out.append(Segment(start, i - 1, labels[start]))
            start = i
    return out


def majority_smooth(labels: Sequence[int], width: int) -> np.ndarray:
    """Majority label over a centred window; edge windows are truncated.

    Ties go to the centre frame's label when it is among the tied, otherwise
    to the smallest tied label.
    """
    labels = np.asarray(labels)
    if width < 1:
        raise ValueError("window width must be at least 1")
    left, right = (width - 1) // 2, width // 2
    out = labels.copy()
    n = labels.size
    for t in range(n):
        counts = Counter(labels[max(0, t - left): min(n, t + right + 1)].tolist())
        top = max(counts.values())
        tied = [k for k, c in counts.items() if c == top]
        out[t] = labels[t] if labels[t] in tied else min(tied)
    return out


def detect_sliding(
    c: CompositeHmm,
    obs: Sequence[int],
    window_width: int = 7,
    per_window: bool = False,
) -> DetectionResult:
    """Label every frame of an unsegmented symbol stream with an action.

    By default the whole stream is Viterbi-decoded once on the composite model
    and each frame then takes the majority unit over a ``window_width`` window
    centred on it. With ``per_window`` each window is decoded on its own and
    the frame takes the unit decoded at the window centre.
    """
    obs = np.asarray(obs)
    if obs.size == 0:
        raise ValueError("empty observation stream")
    if window_width < 1:
        raise ValueError("window width must be at least 1")
    units = c.state_units
    if per_window:
        left, right = (window_width - 1) // 2, window_width // 2
        raw = np.empty(obs.size, dtype=int)
        for t in range(obs.size):
            lo = max(0, t - left)
            path, _ = viterbi(c.model, obs[lo: min(obs.size, t + right + 1)])
            raw[t] = units[path[t - lo]]
    else:
        path, _ = viterbi(c.model, obs)
        raw = majority_smooth(units[path], window_width)
    labels = c.labels
    return DetectionResult.from_labels([labels[u] for u in raw])


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("precision", "recall", "f1", "tp", "fp", "fn")}


def _scores(tp: int, fp: int, fn: int) -> Scores:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return Scores(p, r, f1, tp, fp, fn)


@dataclass(frozen=True)
class DetectionScores:
    micro: Scores
    per_class: dict

    def to_dict(self) -> dict:
        return {
            "micro": self.micro.to_dict(),
            "per_class": {str(k): v.to_dict() for k, v in self.per_class.items()},
        }


def score_detection(predicted: Sequence[Hashable], truth: Sequence[Hashable]) -> DetectionScores:
    """Frame-level precision/recall/F1.

    A frame is a true positive when both labels agree on an action. A
    predicted action on a frame with a different true label is a false
    positive; a true action that is not predicted is a false negative.
    ``BACKGROUND`` frames count only through those two errors.
    """
    predicted, truth = list(predicted), list(truth)
    if len(predicted) != len(truth):
        raise ValueError(f"length mismatch: {len(predicted)} predicted vs {len(truth)} true frames")
    tp = fp = fn = 0
    per: dict = {}
    for p, t in zip(predicted, truth):
        if p == t:
            if t != BACKGROUND:
                tp += 1
                per.setdefault(t, [0, 0, 0])[0] += 1
            continue
        if p != BACKGROUND:
            fp += 1
            per.setdefault(p, [0, 0, 0])[1] += 1
        if t != BACKGROUND:
            fn += 1
            per.setdefault(t, [0, 0, 0])[2] += 1
    per_class = {k: _scores(*per[k]) for k in sorted(per, key=str)}
    return DetectionScores(_scores(tp, fp, fn), per_class)


def segment_iou(predicted: Sequence[Hashable], truth: Sequence[Hashable], threshold: float = 0.5) -> dict:
    """Segment-level matching: mean best same-label IoU per true action
    segment, and the fraction of those reaching ``threshold``."""
    if len(predicted) != len(truth):
        raise ValueError("length mismatch")
    pred_segs = segments_of(list(predicted))
    ious = []
    for seg in segments_of(list(truth)):
        if seg.label == BACKGROUND:
            continue
        best = 0.0
        for p in pred_segs:
            if p.label != seg.label:
                continue
            inter = min(p.end, seg.end) - max(p.start, seg.start) + 1
            if inter > 0:
                union = max(p.end, seg.end) - min(p.start, seg.start) + 1
                best = max(best, inter / union)
        ious.append(best)
    if not ious:
        return {"mean_iou": 0.0, "hit_rate": 0.0, "segments": 0}
    return {
        "mean_iou": float(np.mean(ious)),
        "hit_rate": float(np.mean(np.array(ious) >= threshold)),
        "segments": len(ious),
    }
