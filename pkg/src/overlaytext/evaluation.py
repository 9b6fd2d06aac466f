"""Scoring of detection, tracking and timing against ground truth.

Detection uses Epshtein-style soft matching: each rectangle is scored by
its best intersection-over-union against the other side, and precision /
recall are the mean best scores over detections / ground-truth rects,
pooled over all frames.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .rect import Rect, intersection_area, iou

PURE_FRAME_FRACTION = 0.8
PURE_SCORE = 0.5


@dataclass(frozen=True)
class DetectionMetrics:
    precision: float
    recall: float
    f_measure: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrackMetrics:
    total: int
    pure: int
    switches: int

    @property
    def purity(self) -> float:
        return self.pure / self.total if self.total else 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["purity"] = self.purity
        return d


def f_measure(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def best_match(r: Rect, others: Sequence[Rect]) -> float:
    return max((iou(r, o) for o in others), default=0.0)


def epshtein_prf(detections: Sequence[Sequence[Rect]], gts: Sequence[Sequence[Rect]]) -> DetectionMetrics:
    """Precision, recall and f-measure over per-frame rectangle lists.

    With neither detections nor ground truth anywhere all three are 1; a
    side that is empty while the other is not scores 0.
    """
    if len(detections) != len(gts):
        raise ValueError("detections and ground truth cover different frame counts")
    det_scores, gt_scores = [], []
    for dets, gt in zip(detections, gts):
        det_scores.extend(best_match(d, gt) for d in dets)
        gt_scores.extend(best_match(g, dets) for g in gt)
    if not det_scores and not gt_scores:
        return DetectionMetrics(1.0, 1.0, 1.0)
    p = math.fsum(det_scores) / len(det_scores) if det_scores else 0.0
    r = math.fsum(gt_scores) / len(gt_scores) if gt_scores else 0.0
    return DetectionMetrics(p, r, f_measure(p, r))


def coverage_score(sys_rect: Rect, gt_rect: Rect) -> float:
    """Fraction of the system rectangle lying on the ground-truth band."""
    if sys_rect.area == 0:
        return 0.0
    return intersection_area(sys_rect, gt_rect) / sys_rect.area


def track_purity_switches(
    tracks: Mapping[int, Mapping[int, Rect]],
    gt_tracks: Mapping[int, Mapping[int, Rect]],
) -> TrackMetrics:
    """Purity and switch counts.

    Both arguments map a track id to ``{frame: rect}``.  Each system track is
    assigned to the ground-truth track with the largest summed per-frame
    coverage score.  It is pure when, in at least 80% of its frames, it
    scores >= 0.5 against its assigned track and against no other one.  A
    switch is every system track beyond the first assigned to one
    ground-truth track.
    """
    gt_by_frame: dict[int, list[tuple[int, Rect]]] = defaultdict(list)
    for gid in sorted(gt_tracks):
        for f, r in gt_tracks[gid].items():
            gt_by_frame[f].append((gid, r))

    pure = 0
    assigned: dict[int, int] = defaultdict(int)
    for tid in sorted(tracks):
        frames = tracks[tid]
        totals: dict[int, float] = defaultdict(float)
        per_frame = []
        for f in sorted(frames):
            scores = {gid: coverage_score(frames[f], g) for gid, g in gt_by_frame.get(f, [])}
            per_frame.append(scores)
            for gid, s in scores.items():
                totals[gid] += s
        if not totals or max(totals.values()) <= 0:
            continue
        best = min(totals, key=lambda g: (-totals[g], g))
        assigned[best] += 1
        good = sum(
            1
            for scores in per_frame
            if scores.get(best, 0.0) >= PURE_SCORE
            and all(s < PURE_SCORE for g, s in scores.items() if g != best)
        )
        if frames and good >= PURE_FRAME_FRACTION * len(frames):
            pure += 1
    switches = sum(max(0, n - 1) for n in assigned.values())
    return TrackMetrics(total=len(tracks), pure=pure, switches=switches)


def timing_report(samples_ms: Iterable[float]) -> dict:
    a = np.asarray(list(samples_ms), dtype=np.float64)
    if a.size == 0:
        raise ValueError("timing report needs at least one sample")
    return {
        "n": int(a.size),
        "mean_ms": float(a.mean()),
        "p95_ms": float(np.percentile(a, 95)),
        "max_ms": float(a.max()),
    }


# -- record helpers ------------------------------------------------------------


def rects_by_frame(records: Iterable[dict]) -> dict[int, list[Rect]]:
    out: dict[int, list[Rect]] = {}
    for rec in records:
        out[int(rec["frame"])] = [Rect.from_dict(b) for b in rec.get("bands", [])]
    return out


def gt_tracks_from_records(records: Iterable[dict]) -> dict[int, dict[int, Rect]]:
    out: dict[int, dict[int, Rect]] = defaultdict(dict)
    for rec in records:
        for b in rec.get("bands", []):
            if "track_id" in b:
                out[int(b["track_id"])][int(rec["frame"])] = Rect.from_dict(b)
    return dict(out)


def gt_texts_from_records(records: Iterable[dict]) -> dict[int, str]:
    out = {}
    for rec in records:
        for b in rec.get("bands", []):
            if b.get("text") is not None and "track_id" in b:
                out[int(b["track_id"])] = b["text"]
    return out


def system_tracks_from_records(records: Iterable[dict]) -> dict[int, dict[int, Rect]]:
    return {
        int(rec["id"]): {int(r["frame"]): Rect.from_dict(r) for r in rec["rects"]}
        for rec in records
    }


def assign_tracks(
    tracks: Mapping[int, Mapping[int, Rect]], gt_tracks: Mapping[int, Mapping[int, Rect]]
) -> dict[int, int]:
    """Best ground-truth track per system track, by summed coverage score."""
    out = {}
    for tid, frames in tracks.items():
        totals: dict[int, float] = defaultdict(float)
        for f, r in frames.items():
            for gid, g in gt_tracks.items():
                if f in g:
                    totals[gid] += coverage_score(r, g[f])
        if totals and max(totals.values()) > 0:
            out[tid] = min(totals, key=lambda g: (-totals[g], g))
    return out


def format_table(rows: list[tuple[str, str]]) -> str:
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)
