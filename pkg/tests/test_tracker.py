import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from overlaytext import synth
from overlaytext import tracker as tk
from overlaytext.evaluation import track_purity_switches
from overlaytext.rect import Rect


def area_grid(a, b, eta):
    """Direct area arithmetic, written independently of the implementation."""
    ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    ga, gb = inter / (a.w * a.h), inter / (b.w * b.h)
    if ga <= eta and gb <= eta:
        return "DC"
    if ga >= 1 - eta and gb >= 1 - eta:
        return "EQ"
    if ga >= 1 - eta and gb < 1 - eta:
        return "PP"
    if gb >= 1 - eta and ga < 1 - eta:
        return "PPi"
    return "PO"


rects = st.builds(Rect, st.integers(0, 40), st.integers(0, 40), st.integers(1, 30), st.integers(1, 30))


def test_fractional_overlap_examples():
    a, b = Rect(0, 0, 10, 10), Rect(0, 0, 20, 20)
    assert tk.fractional_overlap(a, a) == 1.0
    assert tk.fractional_overlap(a, Rect(50, 50, 5, 5)) == 0.0
    assert tk.fractional_overlap(a, b) == 1.0
    assert tk.fractional_overlap(b, a) == 0.25
    with pytest.raises(ValueError):
        tk.fractional_overlap(Rect(0, 0, 0, 5), a)


def test_rcc5_examples():
    a = Rect(0, 0, 10, 10)
    assert tk.rcc5_classify(a, a) is tk.Rcc5.EQ
    assert tk.rcc5_classify(a, Rect(0, 0, 20, 20)) is tk.Rcc5.PP
    assert tk.rcc5_classify(Rect(0, 0, 20, 20), a) is tk.Rcc5.PPI
    assert tk.rcc5_classify(a, Rect(5, 0, 10, 10)) is tk.Rcc5.PO
    assert tk.rcc5_classify(a, Rect(30, 0, 10, 10)) is tk.Rcc5.DC


def test_rcc5_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        tk.rcc5_classify(Rect(0, 0, 1, 1), Rect(0, 0, 1, 1), 0.5)


@settings(max_examples=300, deadline=None)
@given(rects, rects, st.sampled_from([0.05, 0.1, 0.2]))
def test_rcc5_grid_and_duality(a, b, eta):
    r = tk.rcc5_classify(a, b, eta)
    assert r.value == area_grid(a, b, eta)
    dual = {"DC": "DC", "EQ": "EQ", "PO": "PO", "PP": "PPi", "PPi": "PP"}
    assert tk.rcc5_classify(b, a, eta).value == dual[r.value]


def test_histogram_examples():
    frame = np.zeros((4, 4, 3), dtype=np.uint8)
    frame[:, :, 0] = 255
    h = tk.histogram_of_region(frame, Rect(0, 0, 4, 4))
    assert h.max() == 1.0 and np.count_nonzero(h) == 1
    frame[:, 2:] = (0, 0, 255)
    h = tk.histogram_of_region(frame, Rect(0, 0, 4, 4))
    assert sorted(h[h > 0]) == [0.5, 0.5]
    with pytest.raises(ValueError):
        tk.histogram_of_region(frame, Rect(2, 2, 4, 4))


def test_histogram_random_region_normalised():
    frame = np.random.default_rng(0).integers(0, 256, (30, 40, 3), dtype=np.uint8)
    h = tk.histogram_of_region(frame, Rect(3, 4, 20, 15))
    assert h.shape == (512,)
    assert abs(h.sum() - 1) < 1e-9


def test_histogram_similarity_examples():
    a = np.zeros(512)
    a[[1, 2]] = 0.5
    b = np.zeros(512)
    b[[1, 2, 3, 4]] = 0.25
    c = np.zeros(512)
    c[[7]] = 1
    assert tk.histogram_similarity(a, a) == 1.0
    assert tk.histogram_similarity(a, c) == 0.0
    assert tk.histogram_similarity(a, b) == pytest.approx(0.5)


def brute_sets(ts, ds, eta):
    tS = [[j for j, d in enumerate(ds) if area_grid(t, d, eta) != "DC"] for t in ts]
    dS = [[i for i, t in enumerate(ts) if area_grid(t, d, eta) != "DC"] for d in ds]
    return tS, dS


def test_association_examples():
    s = tk.build_association_sets([], [Rect(0, 0, 5, 5)])
    assert s.dS == [[]]
    s = tk.build_association_sets([Rect(0, 0, 5, 5)], [Rect(0, 0, 5, 5)])
    assert (s.tS, s.dS) == ([[0]], [[0]])
    ts = [Rect(0, 0, 10, 10), Rect(20, 0, 10, 10)]
    s = tk.build_association_sets(ts, [Rect(0, 0, 30, 10)])
    assert (s.tS, s.dS) == brute_sets(ts, [Rect(0, 0, 30, 10)], 0.1) == ([[0], [0]], [[0, 1]])


@settings(max_examples=60, deadline=None)
@given(st.lists(rects, max_size=5), st.lists(rects, max_size=5))
def test_association_symmetric(ts, ds):
    s = tk.build_association_sets(ts, ds)
    assert (s.tS, s.dS) == brute_sets(ts, ds, 0.1)
    for i, js in enumerate(s.tS):
        for j in js:
            assert i in s.dS[j]


def solid_frame(rects_colors, shape=(100, 160)):
    f = np.full(shape + (3,), 90, dtype=np.uint8)
    for r, c in rects_colors:
        f[r.y:r.y2, r.x:r.x2] = c
    return f


def test_new_track_from_empty_state():
    t = tk.Tracker()
    r = Rect(10, 10, 60, 20)
    ev = t.step([r], solid_frame([(r, (200, 30, 30))]), 0)
    assert [e.kind for e in ev] == ["new"]
    assert len(t.active) == 1 and t.active[0].rect == r


def test_stationary_band_keeps_id():
    t = tk.Tracker()
    r = Rect(10, 10, 60, 20)
    frame = solid_frame([(r, (200, 30, 30))])
    kinds = []
    for i in range(10):
        kinds += [e.kind for e in t.step([r], frame, i)]
    assert kinds == ["new"] + ["updated"] * 9
    assert [tr.id for tr in t.active] == [1]
    assert t.active[0].age == 10


def test_dropped_detection_is_restored():
    t = tk.Tracker()
    r = Rect(10, 10, 60, 20)
    frame = solid_frame([(r, (200, 30, 30))])
    t.step([r], frame, 0)
    ev = t.step([], frame, 1)
    assert [e.kind for e in ev] == ["restored"]
    assert t.active[0].misses == 1
    t.step([r], frame, 2)
    assert t.active[0].misses == 0


def test_vanished_band_terminates():
    t = tk.Tracker()
    r = Rect(10, 10, 60, 20)
    t.step([r], solid_frame([(r, (200, 30, 30))]), 0)
    ev = t.step([], solid_frame([]), 1)
    assert [e.kind for e in ev] == ["terminated"]
    assert t.active == [] and t.finished[0].state == "terminated"


def test_restore_limited_by_max_misses():
    t = tk.Tracker(max_misses=2)
    r = Rect(10, 10, 60, 20)
    frame = solid_frame([(r, (200, 30, 30))])
    t.step([r], frame, 0)
    kinds = [e.kind for i in range(1, 5) for e in t.step([], frame, i)]
    assert kinds == ["restored", "restored", "terminated"]


def test_fragmentation_splits_then_merges_back():
    t = tk.Tracker()
    whole = Rect(10, 10, 120, 20)
    left, right = Rect(10, 10, 55, 20), Rect(71, 10, 59, 20)
    frame = solid_frame([(whole, (30, 30, 200))])
    t.step([whole], frame, 0)
    ev = t.step([left, right], frame, 1)
    assert [e.kind for e in ev] == ["split"]
    assert len(t.active) == 2
    # the larger fragment keeps the id
    assert {tr.id: tr.rect for tr in t.active}[1] == right
    ev = t.step([whole], frame, 2)
    assert [e.kind for e in ev] == ["merged"]
    assert [tr.id for tr in t.active] == [1]
    assert [tr.id for tr in t.finished] == [2]


def test_shared_detection_without_merge_shrinks_tracks():
    t = tk.Tracker()
    a, b = Rect(0, 10, 40, 20), Rect(100, 10, 40, 20)
    frame = solid_frame([(a, (200, 0, 0)), (b, (0, 200, 0))])
    t.step([a, b], frame, 0)
    wide = Rect(20, 10, 100, 20)
    ev = t.step([wide], frame, 1)
    assert sorted(e.kind for e in ev) == ["updated", "updated"]
    assert [tr.rect for tr in t.active] == [Rect(20, 10, 20, 20), Rect(100, 10, 20, 20)]


def test_malformed_detection_is_logged(caplog):
    t = tk.Tracker()
    with caplog.at_level("WARNING"):
        ev = t.step([Rect(-5, 0, 10, 10), Rect(0, 0, 0, 4), Rect(10, 10, 20, 20)], solid_frame([]), 0)
    assert [e.kind for e in ev] == ["new"]
    assert "malformed" in caplog.text


def test_frames_must_advance():
    t = tk.Tracker()
    t.step([], solid_frame([]), 3)
    with pytest.raises(ValueError):
        t.step([], solid_frame([]), 3)


def test_terminated_ids_never_return():
    t = tk.Tracker()
    r = Rect(10, 10, 60, 20)
    seen_dead = set()
    for i in range(12):
        present = i % 4 != 3
        frame = solid_frame([(r, (200, 30, 30))] if present else [])
        for e in t.step([r] if present else [], frame, i):
            if e.kind == "terminated":
                seen_dead.update(e.track_ids)
        assert not seen_dead & {tr.id for tr in t.active}


def test_step_is_deterministic():
    spec = synth.random_sequence_spec(11, n_frames=40, width=320, height=200, n_slots=2)
    dets, _ = synth.stressed_detections(spec, 11)
    bg = synth.render_background(spec)
    frames = [synth.render_frame(spec, i, bg)[0] for i in range(spec.n_frames)]

    def run():
        t = tk.Tracker()
        ev = [e.to_dict() for i, f in enumerate(frames) for e in t.step(dets[i], f, i)]
        ev += [e.to_dict() for e in t.finish()]
        return ev, [tr.to_dict() for tr in t.all_tracks()]

    assert run() == run()


def test_stationary_perfect_detections_conserve_ids():
    spec = synth.SynthSpec(
        width=240, height=120, noise=0.02, n_frames=15, seed=2,
        bands=[synth.BandSpec((10, 10, 150, 24), track_id=0), synth.BandSpec((20, 60, 200, 30), fg=(0, 0, 0), bg=(240, 240, 60), track_id=1)],
    )
    bg = synth.render_background(spec)
    t = tk.Tracker()
    gt = {0: {}, 1: {}}
    ids = []
    for i in range(spec.n_frames):
        frame, rec = synth.render_frame(spec, i, bg)
        rs = [Rect(b["x"], b["y"], b["w"], b["h"]) for b in rec["bands"]]
        for b, r in zip(rec["bands"], rs):
            gt[b["track_id"]][i] = r
        t.step(rs, frame, i)
        ids.append(sorted(tr.id for tr in t.active))
    assert all(x == ids[0] for x in ids)
    t.finish()
    m = track_purity_switches({tr.id: dict(tr.history) for tr in t.all_tracks()}, gt)
    assert m.pure == m.total == 2 and m.switches == 0
