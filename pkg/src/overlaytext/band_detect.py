"""Threshold-free text band localisation from projection-profile derivatives.

Band boundaries show up as abrupt changes of the row-sum (horizontal)
profile of the edge map.  The first difference of the profile is large
around each boundary; neighbouring prominent entries are grouped by a 1-D
connected-component pass with gap tolerance ``epsilon`` (one group per
boundary), and within each group the boundary is placed at the most
negative second difference after a local-mean filter.  Each strip between
consecutive horizontal boundaries is then processed the same way along
the columns, giving candidate rectangles that are kept when their mean
edge value clearly beats the frame mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .rect import Rect

EPSILON = 2
MIN_BAND_H = 8
MIN_BAND_W = 16
# blank gaps narrower than half the minimum band size cannot separate bands
GAP_V = MIN_BAND_H // 2
GAP_H = MIN_BAND_W // 2
PROMINENCE_FRACTION = 0.05
# a band must be clearly denser than the frame, not merely above average
DENSITY_RATIO = 1.5


@dataclass(frozen=True)
class TextBand:
    rect: Rect
    density: float

    def to_dict(self) -> dict:
        d = self.rect.to_dict()
        d["density"] = round(float(self.density), 6)
        return d


@dataclass
class DetectionTrace:
    """Intermediate values kept for debug dumps."""

    h_profile: list = field(default_factory=list)
    h_labels: list = field(default_factory=list)
    h_lines: list = field(default_factory=list)
    strips: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    accepted: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "h_profile": [round(float(v), 4) for v in self.h_profile],
            "h_labels": [int(v) for v in self.h_labels],
            "h_lines": [int(v) for v in self.h_lines],
            "strips": self.strips,
            "candidates": [r.to_dict() for r in self.candidates],
            "accepted": [r.to_dict() for r in self.accepted],
        }


def horizontal_profile(edge: np.ndarray) -> np.ndarray:
    return np.asarray(edge, dtype=np.float64).sum(axis=1)


def vertical_profile(edge: np.ndarray, y0: int = 0, y1: Optional[int] = None) -> np.ndarray:
    return np.asarray(edge, dtype=np.float64)[y0:y1].sum(axis=0)


def differences(profile: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and second differences, zero-padded at the start.

    ``d1[i] = p[i] - p[i-1]`` with ``d1[0] = 0``; ``d2[i] = d1[i] - d1[i-1]``
    with ``d2[0] = d2[1] = 0``.
    """
    p = np.asarray(profile, dtype=np.float64)
    if p.ndim != 1 or p.size < 3:
        raise ValueError("profile must have at least 3 entries")
    d1 = np.zeros_like(p)
    d1[1:] = np.diff(p)
    d2 = np.zeros_like(p)
    d2[2:] = np.diff(d1[1:])
    return d1, d2


def default_prominence(d1: np.ndarray) -> float:
    a = np.abs(d1)
    if a.size == 0:
        return 0.0
    return max(PROMINENCE_FRACTION * float(a.max()), float(a.mean()))


def epsilon_cca(d1: np.ndarray, epsilon: int = EPSILON, prominence: Optional[float] = None) -> tuple[np.ndarray, int]:
    """Group prominent first-difference entries whose index gaps are <= epsilon.

    Returns ``(labels, num_labels)``; label 0 marks non-prominent entries and
    groups are numbered ``1..num_labels`` from low to high index.
    """
    d1 = np.asarray(d1, dtype=np.float64)
    if prominence is None:
        prominence = default_prominence(d1)
    labels = np.zeros(d1.size, dtype=np.int64)
    idx = np.flatnonzero(np.abs(d1) > prominence)
    if idx.size == 0:
        return labels, 0
    starts = np.concatenate(([1], (np.diff(idx) > epsilon).astype(np.int64)))
    ids = np.cumsum(starts)
    labels[idx] = ids
    return labels, int(ids[-1])


def local_mean_filter(d2: np.ndarray, labels: np.ndarray, num_labels: Optional[int] = None) -> np.ndarray:
    """Zero every second difference not strictly above its label's mean magnitude."""
    d2 = np.asarray(d2, dtype=np.float64)
    labels = np.asarray(labels)
    if num_labels is None:
        num_labels = int(labels.max(initial=0))
    out = np.zeros_like(d2)
    if num_labels == 0:
        return out
    a = np.abs(d2)
    counts = np.bincount(labels, minlength=num_labels + 1)
    sums = np.bincount(labels, weights=a, minlength=num_labels + 1)
    mu = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    keep = (labels > 0) & (a > mu[labels])
    out[keep] = d2[keep]
    return out


def locate_lines(filtered: np.ndarray, labels: np.ndarray, d2: Optional[np.ndarray] = None) -> list[int]:
    """One boundary per label: the index of the smallest filtered value.

    Ties go to the smallest index.  When nothing in a label survived the
    local-mean filter and ``d2`` is given, the unfiltered minimum is used.
    """
    filtered = np.asarray(filtered, dtype=np.float64)
    labels = np.asarray(labels)
    idx = np.flatnonzero(labels > 0)
    if idx.size == 0:
        return []
    lab = labels[idx]
    vals = filtered[idx].copy()
    if d2 is not None:
        survived = np.bincount(lab, weights=(filtered[idx] != 0).astype(np.float64))
        dead = survived[lab] == 0
        vals[dead] = np.asarray(d2, dtype=np.float64)[idx][dead]
    order = np.lexsort((idx, vals, lab))
    first = np.concatenate(([True], lab[order][1:] != lab[order][:-1]))
    return [int(i) for i in idx[order][first]]


def find_boundaries(profile: np.ndarray, epsilon: int = EPSILON) -> tuple[list[int], np.ndarray]:
    """Boundary indices of a profile plus the label array that produced them."""
    if len(profile) < 3:
        return [], np.zeros(len(profile), dtype=np.int64)
    d1, d2 = differences(profile)
    labels, n = epsilon_cca(d1, epsilon)
    if n == 0:
        return [], labels
    filtered = local_mean_filter(d2, labels, n)
    return locate_lines(filtered, labels, d2), labels


def _with_borders(lines: list[int], size: int) -> list[int]:
    return sorted(set(lines) | {0, size})


class _Integral:
    def __init__(self, edge: np.ndarray):
        s = np.zeros((edge.shape[0] + 1, edge.shape[1] + 1))
        np.cumsum(np.cumsum(edge, axis=0), axis=1, out=s[1:, 1:])
        self.s = s

    def mean(self, r: Rect) -> float:
        s = self.s
        total = s[r.y2, r.x2] - s[r.y, r.x2] - s[r.y2, r.x] + s[r.y, r.x]
        return float(total) / r.area

    def row_means(self, r: Rect) -> np.ndarray:
        s = self.s
        cum = s[r.y:r.y2 + 1, r.x2] - s[r.y:r.y2 + 1, r.x]
        return np.diff(cum) / r.w

    def col_means(self, r: Rect) -> np.ndarray:
        s = self.s
        cum = s[r.y2, r.x:r.x2 + 1] - s[r.y, r.x:r.x2 + 1]
        return np.diff(cum) / r.h


def _runs(occupied: np.ndarray, epsilon: int) -> list[tuple[int, int]]:
    """Half-open index runs of occupied entries, bridging gaps of <= epsilon."""
    idx = np.flatnonzero(occupied)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > epsilon)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    ends = np.concatenate((idx[breaks], [idx[-1]])) + 1
    return [(int(a), int(b)) for a, b in zip(starts, ends)]


def _split_piece(integral: _Integral, r: Rect, level: float, gap_v: int, gap_h: int) -> list[Rect]:
    """Cut a candidate at empty row/column runs wider than the gap tolerances.

    Rows and columns count as occupied when their mean edge value exceeds
    ``level``; the surviving parts are shrunk to their occupied extent.
    """
    out = []
    for y0, y1 in _runs(integral.row_means(r) > level, gap_v):
        band = Rect(r.x, r.y + y0, r.w, y1 - y0)
        for x0, x1 in _runs(integral.col_means(band) > level, gap_h):
            part = Rect(r.x + x0, band.y, x1 - x0, band.h)
            rows = _runs(integral.row_means(part) > level, 0)
            out.append(Rect(part.x, part.y + rows[0][0], part.w, rows[-1][1] - rows[0][0]) if rows else part)
    return out


def _merge_near(rects: list[Rect], gap_v: int, gap_h: int, shape: tuple[int, int]) -> list[Rect]:
    """Union rectangles separated by at most ``gap_v`` rows and ``gap_h`` columns."""
    if not rects:
        return []
    h, w = shape
    mask = np.zeros(shape, dtype=bool)
    up, down = gap_v // 2, gap_v - gap_v // 2
    left, right = gap_h // 2, gap_h - gap_h // 2
    for r in rects:
        mask[max(r.y - up, 0):r.y2 + down, max(r.x - left, 0):r.x2 + right] = True
    labels, _ = ndimage.label(mask)
    groups: dict[int, Rect] = {}
    for r in rects:
        k = int(labels[r.y, r.x])
        groups[k] = r if k not in groups else groups[k].union(r)
    out = sorted(groups.values())

    # bounding boxes can reach each other even when their pieces did not
    changed = True
    while changed:
        changed = False
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                a, b = out[i], out[j]
                if (max(0, b.y - a.y2, a.y - b.y2) <= gap_v and max(0, b.x - a.x2, a.x - b.x2) <= gap_h):
                    out[i] = a.union(b)
                    del out[j]
                    changed = True
                    break
            if changed:
                break
    return sorted(out)


def _join_words(rects: list[Rect], gap_h: int) -> list[Rect]:
    """Join side-by-side clusters on the same text line.

    Two clusters join when they overlap vertically by at least half the
    shorter height and the horizontal gap is at most that height, which is
    roughly one character width of the line.
    """
    out = sorted(rects)
    changed = True
    while changed:
        changed = False
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                a, b = out[i], out[j]
                short = min(a.h, b.h)
                overlap = min(a.y2, b.y2) - max(a.y, b.y)
                gap = max(0, b.x - a.x2, a.x - b.x2)
                if 2 * overlap >= short and gap <= max(gap_h, short):
                    out[i] = a.union(b)
                    del out[j]
                    changed = True
                    break
            if changed:
                break
    return sorted(out)


def detect_bands(
    edge: np.ndarray,
    epsilon: int = EPSILON,
    min_h: int = MIN_BAND_H,
    min_w: int = MIN_BAND_W,
    gap_v: int = GAP_V,
    gap_h: int = GAP_H,
    trace: Optional[DetectionTrace] = None,
    density_ratio: float = DENSITY_RATIO,
) -> list[TextBand]:
    """Text bands of an edge map, sorted by ``(y, x)``."""
    edge = np.asarray(edge, dtype=np.float64)
    h, w = edge.shape
    if h < 3 or w < 3:
        return []
    global_mean = float(edge.mean())
    if global_mean <= 0:
        return []
    integral = _Integral(edge)

    h_prof = horizontal_profile(edge)
    h_lines, h_labels = find_boundaries(h_prof, epsilon)
    ys = _with_borders(h_lines, h)
    if trace is not None:
        trace.h_profile = h_prof.tolist()
        trace.h_labels = h_labels.tolist()
        trace.h_lines = list(h_lines)

    col_sums = np.zeros((h + 1, w))
    np.cumsum(edge, axis=0, out=col_sums[1:])

    pieces: list[Rect] = []
    for y0, y1 in zip(ys[:-1], ys[1:]):
        v_prof = col_sums[y1] - col_sums[y0]
        v_lines, _ = find_boundaries(v_prof, epsilon)
        xs = _with_borders(v_lines, w)
        if trace is not None:
            trace.strips.append({"y0": y0, "y1": y1, "v_lines": list(v_lines)})
        for x0, x1 in zip(xs[:-1], xs[1:]):
            cand = Rect(x0, y0, x1 - x0, y1 - y0)
            if trace is not None:
                trace.candidates.append(cand)
            parts = [r for r in _split_piece(integral, cand, global_mean, gap_v, gap_h) if integral.mean(r) > global_mean]
            pieces.extend(parts)
            if trace is not None:
                trace.accepted.extend(parts)

    bands = []
    for r in _join_words(_merge_near(pieces, gap_v, gap_h, edge.shape), gap_h):
        if r.w < min_w or r.h < min_h:
            continue
        density = integral.mean(r)
        if density > density_ratio * global_mean:
            bands.append(TextBand(r, density))
    bands.sort(key=lambda b: (b.rect.y, b.rect.x))
    return bands
