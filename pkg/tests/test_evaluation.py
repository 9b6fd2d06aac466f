import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from overlaytext import evaluation as ev
from overlaytext.rect import Rect

rects = st.builds(Rect, st.integers(0, 30), st.integers(0, 30), st.integers(1, 20), st.integers(1, 20))
frame_lists = st.lists(st.lists(rects, max_size=3), min_size=1, max_size=4)


def iou_oracle(a, b):
    cells_a = {(x, y) for x in range(a.x, a.x + a.w) for y in range(a.y, a.y + a.h)}
    cells_b = {(x, y) for x in range(b.x, b.x + b.w) for y in range(b.y, b.y + b.h)}
    return len(cells_a & cells_b) / len(cells_a | cells_b)


def test_exact_detections():
    gt = [[Rect(0, 0, 10, 10)], [Rect(5, 5, 4, 4)]]
    m = ev.epshtein_prf(gt, gt)
    assert (m.precision, m.recall, m.f_measure) == (1, 1, 1)


def test_empty_cases():
    assert ev.epshtein_prf([[]], [[]]).f_measure == 1
    m = ev.epshtein_prf([[]], [[Rect(0, 0, 3, 3)]])
    assert (m.precision, m.recall, m.f_measure) == (0, 0, 0)
    with pytest.raises(ValueError):
        ev.epshtein_prf([[]], [[], []])


def test_half_covered_band():
    m = ev.epshtein_prf([[Rect(0, 0, 10, 10)]], [[Rect(0, 0, 20, 10)]])
    assert m.precision == pytest.approx(0.5)
    assert m.recall == pytest.approx(0.5)
    assert m.f_measure == pytest.approx(0.5)


@settings(max_examples=60, deadline=None)
@given(frame_lists, st.data())
def test_prf_matches_pixel_oracle(dets, data):
    gts = data.draw(st.lists(st.lists(rects, max_size=3), min_size=len(dets), max_size=len(dets)))
    m = ev.epshtein_prf(dets, gts)
    ds = [max((iou_oracle(d, g) for g in gt), default=0.0) for det, gt in zip(dets, gts) for d in det]
    gs = [max((iou_oracle(g, d) for d in det), default=0.0) for det, gt in zip(dets, gts) for g in gt]
    if not ds and not gs:
        assert m.f_measure == 1
        return
    p = sum(ds) / len(ds) if ds else 0.0
    r = sum(gs) / len(gs) if gs else 0.0
    assert m.precision == pytest.approx(p)
    assert m.recall == pytest.approx(r)
    for v in (m.precision, m.recall, m.f_measure):
        assert 0 <= v <= 1
    assert m.f_measure <= max(m.precision, m.recall) + 1e-12
    rev = ev.epshtein_prf(dets[::-1], gts[::-1])
    assert rev.f_measure == pytest.approx(m.f_measure)


def test_perfect_tracking_is_pure():
    gt = {1: {f: Rect(0, 0, 10, 10) for f in range(5)}, 2: {f: Rect(20, 0, 10, 10) for f in range(5)}}
    m = ev.track_purity_switches({7: gt[1], 8: gt[2]}, gt)
    assert (m.total, m.pure, m.switches) == (2, 2, 0)
    assert m.purity == 1


def test_two_consecutive_tracks_one_switch():
    gt = {1: {f: Rect(0, 0, 10, 10) for f in range(10)}}
    sys_tracks = {1: {f: Rect(0, 0, 10, 10) for f in range(5)}, 2: {f: Rect(0, 0, 10, 10) for f in range(5, 10)}}
    m = ev.track_purity_switches(sys_tracks, gt)
    assert m.switches == 1 and m.pure == 2


def test_alternating_track_is_impure():
    gt = {1: {f: Rect(0, 0, 10, 10) for f in range(10)}, 2: {f: Rect(50, 0, 10, 10) for f in range(10)}}
    alt = {f: (Rect(0, 0, 10, 10) if f % 2 else Rect(50, 0, 10, 10)) for f in range(10)}
    m = ev.track_purity_switches({1: alt}, gt)
    assert m.pure == 0


def test_track_covering_two_bands_is_impure():
    gt = {1: {f: Rect(0, 0, 10, 10) for f in range(4)}, 2: {f: Rect(10, 0, 10, 10) for f in range(4)}}
    m = ev.track_purity_switches({1: {f: Rect(0, 0, 20, 10) for f in range(4)}}, gt)
    assert m.pure == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 9), st.integers(1, 6)), min_size=1, max_size=5))
def test_removing_a_track_keeps_others_pure(spans):
    gt = {1: {f: Rect(0, 0, 20, 10) for f in range(10)}, 2: {f: Rect(30, 0, 20, 10) for f in range(10)}}
    tracks = {
        i: {f: Rect(x, 0, 20, 10) for f in range(s, min(10, s + n))} for i, (x, s, n) in enumerate(spans)
    }
    tracks = {k: v for k, v in tracks.items() if v}
    if not tracks:
        return
    full = ev.track_purity_switches(tracks, gt)
    for k in tracks:
        rest = {i: v for i, v in tracks.items() if i != k}
        sub = ev.track_purity_switches(rest, gt)
        assert sub.pure >= full.pure - 1


def test_timing_report_examples():
    assert ev.timing_report([10, 10, 10])["mean_ms"] == 10
    assert ev.timing_report([5, 15])["mean_ms"] == 10
    with pytest.raises(ValueError):
        ev.timing_report([])


def test_timing_report_recomputed():
    x = np.random.default_rng(4).gamma(2.0, 30.0, 100)
    rep = ev.timing_report(x)
    s = sorted(x)
    # linear interpolation between closest ranks
    pos = 0.95 * (len(s) - 1)
    lo = int(pos)
    p95 = s[lo] + (s[lo + 1] - s[lo]) * (pos - lo)
    assert rep["mean_ms"] == pytest.approx(sum(s) / len(s))
    assert rep["p95_ms"] == pytest.approx(p95)
    assert rep["max_ms"] == max(s)


def test_record_helpers():
    recs = [
        {"frame": 0, "bands": [{"x": 1, "y": 2, "w": 3, "h": 4, "track_id": 5, "text": "hi"}]},
        {"frame": 1, "bands": []},
    ]
    assert ev.rects_by_frame(recs) == {0: [Rect(1, 2, 3, 4)], 1: []}
    assert ev.gt_tracks_from_records(recs) == {5: {0: Rect(1, 2, 3, 4)}}
    assert ev.gt_texts_from_records(recs) == {5: "hi"}
    sys_recs = [{"id": 3, "rects": [{"frame": 0, "x": 1, "y": 2, "w": 3, "h": 4}]}]
    tracks = ev.system_tracks_from_records(sys_recs)
    assert ev.assign_tracks(tracks, ev.gt_tracks_from_records(recs)) == {3: 5}
    assert "f" in ev.format_table([("f", "1"), ("longer", "2")])
