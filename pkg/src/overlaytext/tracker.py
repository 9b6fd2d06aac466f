"""Multi-band tracking with RCC-5 relations over fractional overlaps.

Every frame, active tracks and fresh detections are linked when their
rectangles are in any relation other than DC.  The link graph is split
into connected components and each component is resolved by its shape:

* one track, one detection: update in place,
* several tracks, one detection: merge (or shrink each track to its overlap),
* one track, several detections: split,
* a track with no detection: restore on a colour match, else terminate,
* a detection with no track: new track.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .rect import Rect, intersection_area

log = logging.getLogger(__name__)

ETA_FO = 0.1
HIST_MATCH = 0.8
MAX_MISSES = 5
HIST_BLEND = 0.3
HIST_BINS = 8


class Rcc5(str, enum.Enum):
    DC = "DC"
    EQ = "EQ"
    PO = "PO"
    PP = "PP"
    PPI = "PPi"


def fractional_overlap(a: Rect, b: Rect) -> float:
    """Share of ``a`` covered by ``b``."""
    if a.area <= 0:
        raise ValueError(f"zero-area rectangle {tuple(a)}")
    return intersection_area(a, b) / a.area


def rcc5_classify(a: Rect, b: Rect, eta_fo: float = ETA_FO) -> Rcc5:
    if not 0 < eta_fo < 0.5:
        raise ValueError("eta_fo must lie in (0, 0.5)")
    ab = fractional_overlap(a, b)
    ba = fractional_overlap(b, a)
    hi = 1.0 - eta_fo
    if ab <= eta_fo and ba <= eta_fo:
        return Rcc5.DC
    if ab >= hi and ba >= hi:
        return Rcc5.EQ
    if ab >= hi:
        return Rcc5.PP
    if ba >= hi:
        return Rcc5.PPI
    return Rcc5.PO


# -- colour histograms ---------------------------------------------------------


def histogram_of_region(frame: np.ndarray, rect: Rect) -> np.ndarray:
    """Normalised 8x8x8 RGB histogram (512 bins) of ``frame`` inside ``rect``."""
    h, w = frame.shape[:2]
    if not rect.inside(w, h):
        raise ValueError(f"rect {tuple(rect)} outside {w}x{h} frame")
    q = frame[rect.y:rect.y2, rect.x:rect.x2].reshape(-1, 3).astype(np.int64) >> 5
    idx = (q[:, 0] * HIST_BINS + q[:, 1]) * HIST_BINS + q[:, 2]
    counts = np.bincount(idx, minlength=HIST_BINS ** 3).astype(np.float64)
    return counts / counts.sum()


def histogram_similarity(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.minimum(a, b).sum())


def _blend(old: np.ndarray, new: np.ndarray) -> np.ndarray:
    mixed = (1.0 - HIST_BLEND) * old + HIST_BLEND * new
    total = mixed.sum()
    return mixed / total if total > 0 else mixed


# -- association ---------------------------------------------------------------


@dataclass
class AssociationSets:
    tS: list[list[int]]
    dS: list[list[int]]


def build_association_sets(
    track_rects: Sequence[Rect], det_rects: Sequence[Rect], eta_fo: float = ETA_FO
) -> AssociationSets:
    tS: list[list[int]] = [[] for _ in track_rects]
    dS: list[list[int]] = [[] for _ in det_rects]
    for i, t in enumerate(track_rects):
        for j, d in enumerate(det_rects):
            if intersection_area(t, d) > 0 and rcc5_classify(t, d, eta_fo) is not Rcc5.DC:
                tS[i].append(j)
                dS[j].append(i)
    return AssociationSets(tS, dS)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def components(sets: AssociationSets) -> list[tuple[list[int], list[int]]]:
    """Connected components as ``(track indices, detection indices)``, ordered."""
    nt, nd = len(sets.tS), len(sets.dS)
    uf = _UnionFind(nt + nd)
    for i, dets in enumerate(sets.tS):
        for j in dets:
            uf.union(i, nt + j)
    groups: dict[int, tuple[list[int], list[int]]] = {}
    for k in range(nt + nd):
        ts, ds = groups.setdefault(uf.find(k), ([], []))
        (ts if k < nt else ds).append(k if k < nt else k - nt)
    return [groups[k] for k in sorted(groups)]


# -- tracks --------------------------------------------------------------------


@dataclass
class Track:
    id: int
    rect: Rect
    hist: np.ndarray
    age: int = 1
    misses: int = 0
    history: list = field(default_factory=list)
    state: str = "active"

    @property
    def start_frame(self) -> int:
        return self.history[0][0]

    @property
    def end_frame(self) -> int:
        return self.history[-1][0]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "start_frame": self.start_frame,
            "end_frame": self.end_frame,
            "age": self.age,
            "rects": [dict(frame=f, **r.to_dict()) for f, r in self.history],
        }


@dataclass(frozen=True)
class TrackEvent:
    kind: str
    frame: int
    track_ids: tuple
    rects: tuple = ()

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "kind": self.kind,
            "track_ids": list(self.track_ids),
            "rects": [r.to_dict() for r in self.rects],
        }


def _as_rect(d) -> Rect:
    r = getattr(d, "rect", d)
    return Rect(*r)


def _valid(r: Rect, width: int, height: int) -> bool:
    try:
        if not all(float(v).is_integer() for v in r):
            return False
    except (TypeError, ValueError):
        return False
    return Rect(*(int(v) for v in r)).inside(width, height)


class Tracker:
    """Stateful tracker; feed frames strictly in temporal order."""

    def __init__(self, eta_fo: float = ETA_FO, hist_match: float = HIST_MATCH, max_misses: int = MAX_MISSES):
        if not 0 < eta_fo < 0.5:
            raise ValueError("eta_fo must lie in (0, 0.5)")
        if not 0 <= hist_match <= 1:
            raise ValueError("hist_match must lie in [0, 1]")
        if max_misses < 0:
            raise ValueError("max_misses must be non-negative")
        self.eta_fo = eta_fo
        self.hist_match = hist_match
        self.max_misses = max_misses
        self.active: list[Track] = []
        self.finished: list[Track] = []
        self._next_id = 1
        self._last_frame: Optional[int] = None

    # -- lifecycle helpers

    def _new(self, rect: Rect, frame: np.ndarray, index: int) -> Track:
        t = Track(self._next_id, rect, histogram_of_region(frame, rect), history=[(index, rect)])
        self._next_id += 1
        return t

    def _terminate(self, t: Track) -> None:
        t.state = "terminated"
        self.finished.append(t)

    def _move(self, t: Track, rect: Rect, frame: np.ndarray, index: int) -> None:
        t.rect = rect
        t.hist = _blend(t.hist, histogram_of_region(frame, rect))
        t.misses = 0
        t.age += 1
        t.history.append((index, rect))

    def _unique_rect(self, t: Track, d: Rect, frame: np.ndarray) -> Rect:
        rel = rcc5_classify(t.rect, d, self.eta_fo)
        if rel in (Rcc5.EQ, Rcc5.PP):
            return d
        match = histogram_similarity(histogram_of_region(frame, d), t.hist) >= self.hist_match
        if rel is Rcc5.PPI:
            return t.rect if match else d
        if rel is Rcc5.PO:
            return t.rect.union(d) if match else d
        raise AssertionError("DC pair inside an association component")

    # -- main entry

    def step(self, detections: Iterable, frame: np.ndarray, index: int) -> list[TrackEvent]:
        """Advance by one frame; returns the events it produced."""
        if self._last_frame is not None and index <= self._last_frame:
            raise ValueError(f"frame {index} is not after frame {self._last_frame}")
        self._last_frame = index
        height, width = frame.shape[:2]
        dets: list[Rect] = []
        for d in detections:
            r = _as_rect(d)
            if _valid(r, width, height):
                dets.append(Rect(*(int(v) for v in r)))
            else:
                log.warning("frame %d: rejected malformed detection %s", index, tuple(r))

        tracks = self.active
        sets = build_association_sets([t.rect for t in tracks], dets, self.eta_fo)
        events: list[TrackEvent] = []
        survivors: list[Track] = []
        for ti, di in components(sets):
            if not di:
                for i in ti:
                    self._disappear(tracks[i], frame, index, events, survivors)
            elif not ti:
                for j in di:
                    t = self._new(dets[j], frame, index)
                    survivors.append(t)
                    events.append(TrackEvent("new", index, (t.id,), (t.rect,)))
            elif len(ti) == 1 and len(di) == 1:
                t, d = tracks[ti[0]], dets[di[0]]
                self._move(t, self._unique_rect(t, d, frame), frame, index)
                survivors.append(t)
                events.append(TrackEvent("updated", index, (t.id,), (t.rect,)))
            elif len(di) == 1:
                self._many_to_one([tracks[i] for i in ti], dets[di[0]], frame, index, events, survivors)
            elif len(ti) == 1:
                self._split(tracks[ti[0]], [dets[j] for j in di], frame, index, events, survivors)
            else:
                self._many_to_many(
                    [tracks[i] for i in ti], [dets[j] for j in di], sets, ti, di, frame, index, events, survivors
                )
        self.active = sorted(survivors, key=lambda t: t.id)
        return events

    def _disappear(self, t: Track, frame, index, events, survivors) -> None:
        sim = histogram_similarity(histogram_of_region(frame, t.rect), t.hist)
        if sim >= self.hist_match and t.misses < self.max_misses:
            t.misses += 1
            t.age += 1
            t.history.append((index, t.rect))
            survivors.append(t)
            events.append(TrackEvent("restored", index, (t.id,), (t.rect,)))
        else:
            self._terminate(t)
            events.append(TrackEvent("terminated", index, (t.id,), (t.rect,)))

    def _many_to_one(self, group: list[Track], d: Rect, frame, index, events, survivors) -> None:
        group = sorted(group, key=lambda t: t.id)
        union = group[0].rect
        for t in group[1:]:
            union = union.union(t.rect)
        if rcc5_classify(union, d, self.eta_fo) in (Rcc5.EQ, Rcc5.PP):
            keep = group[0]
            for t in group[1:]:
                self._terminate(t)
            self._move(keep, d, frame, index)
            survivors.append(keep)
            events.append(TrackEvent("merged", index, tuple(t.id for t in group), (d,)))
            return
        for t in group:
            self._move(t, t.rect.intersection(d), frame, index)
            survivors.append(t)
            events.append(TrackEvent("updated", index, (t.id,), (t.rect,)))

    def _split(self, t: Track, parts: list[Rect], frame, index, events, survivors) -> None:
        # colour similarity is computed before choosing the continuing fragment
        sims = [histogram_similarity(histogram_of_region(frame, d), t.hist) for d in parts]
        order = sorted(range(len(parts)), key=lambda k: (-intersection_area(t.rect, parts[k]), -sims[k], k))
        self._move(t, parts[order[0]], frame, index)
        survivors.append(t)
        ids, rects = [t.id], [t.rect]
        for k in sorted(order[1:]):
            n = self._new(parts[k], frame, index)
            survivors.append(n)
            ids.append(n.id)
            rects.append(n.rect)
        events.append(TrackEvent("split", index, tuple(ids), tuple(rects)))

    def _many_to_many(self, group, parts, sets, ti, di, frame, index, events, survivors) -> None:
        # merge check per detection, then every detection goes to the surviving
        # track it overlaps most and tracks holding several detections split
        by_idx = dict(zip(ti, group))
        owner = {i: i for i in ti}

        def root(i):
            while owner[i] != i:
                i = owner[i]
            return i

        merged_into: dict[int, list[int]] = {}
        for j in di:
            linked = sorted({root(i) for i in sets.dS[j]}, key=lambda i: by_idx[i].id)
            if len(linked) < 2:
                continue
            union = by_idx[linked[0]].rect
            for i in linked[1:]:
                union = union.union(by_idx[i].rect)
            if rcc5_classify(union, parts[di.index(j)], self.eta_fo) in (Rcc5.EQ, Rcc5.PP):
                for i in linked[1:]:
                    owner[i] = linked[0]
                    merged_into.setdefault(linked[0], []).append(i)

        alive = sorted({root(i) for i in ti}, key=lambda i: by_idx[i].id)
        for keep, gone in merged_into.items():
            if root(keep) != keep:
                continue
            all_gone = []
            stack = list(gone)
            while stack:
                g = stack.pop()
                all_gone.append(g)
                stack.extend(merged_into.get(g, []))
            for g in all_gone:
                self._terminate(by_idx[g])
            ids = tuple(sorted([by_idx[keep].id] + [by_idx[g].id for g in all_gone]))
            events.append(TrackEvent("merged", index, ids, ()))

        members = {i: [m for m in ti if root(m) == i] for i in alive}
        assigned: dict[int, list[int]] = {i: [] for i in alive}
        for j in di:
            cands = {root(i) for i in sets.dS[j]}
            best = min(
                cands,
                key=lambda i: (-max(intersection_area(by_idx[m].rect, parts[di.index(j)]) for m in members[i]), by_idx[i].id),
            )
            assigned[best].append(j)

        for i in alive:
            t = by_idx[i]
            mine = [parts[di.index(j)] for j in assigned[i]]
            if len(mine) == 1:
                self._move(t, mine[0] if members[i] != [i] else self._unique_rect(t, mine[0], frame), frame, index)
                survivors.append(t)
                events.append(TrackEvent("updated", index, (t.id,), (t.rect,)))
            elif len(mine) > 1:
                self._split(t, mine, frame, index, events, survivors)
            else:
                # every overlapping detection went to another track: shrink to the best overlap
                overlaps = [parts[di.index(j)] for j in sets.tS[ti.index(i)]]
                d = max(overlaps, key=lambda r: (intersection_area(t.rect, r), -r.y, -r.x))
                self._move(t, t.rect.intersection(d), frame, index)
                survivors.append(t)
                events.append(TrackEvent("updated", index, (t.id,), (t.rect,)))

    def finish(self, index: Optional[int] = None) -> list[TrackEvent]:
        """Terminate every active track, e.g. at the end of a stream."""
        index = self._last_frame if index is None else index
        events = [TrackEvent("terminated", index, (t.id,), (t.rect,)) for t in self.active]
        for t in self.active:
            self._terminate(t)
        self.active = []
        return events

    def all_tracks(self) -> list[Track]:
        return sorted(self.finished + self.active, key=lambda t: t.id)
