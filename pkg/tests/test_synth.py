import hashlib

import numpy as np
import pytest

from overlaytext import preprocess, synth
from overlaytext.imageio import read_jsonl
from overlaytext.rect import Rect


def test_no_bands_background_only():
    spec = synth.SynthSpec(width=64, height=48, noise=0.0, background="flat")
    img, gt = synth.render_frame(spec, 0)
    assert gt == {"frame": 0, "bands": []}
    assert np.all(img == 128)


def test_band_schedule():
    spec = synth.SynthSpec(width=100, height=60, bands=[synth.BandSpec((5, 5, 80, 24), start=5, end=21)], n_frames=30)
    assert synth.render_frame(spec, 3)[1]["bands"] == []
    assert len(synth.render_frame(spec, 5)[1]["bands"]) == 1
    assert synth.render_frame(spec, 21)[1]["bands"] == []


def test_band_gradient_dominates_background():
    spec = synth.SynthSpec(width=320, height=160, noise=0.05, bands=[synth.BandSpec((20, 50, 260, 36))], seed=4)
    img, _ = synth.render_frame(spec, 0)
    mag = preprocess.scharr_gradient(preprocess.to_luminance(img)).mag
    band = mag[50:86, 20:280].mean()
    outside = np.concatenate([mag[:40].ravel(), mag[100:].ravel()]).mean()
    assert band >= 3 * outside


def test_validation():
    with pytest.raises(ValueError):
        synth.SynthSpec(width=50, height=50, bands=[synth.BandSpec((40, 40, 20, 20))]).validate()
    with pytest.raises(ValueError):
        synth.SynthSpec(bands=[synth.BandSpec((0, 0, 50, 20), fg=(100, 100, 100), bg=(110, 110, 110))]).validate()
    with pytest.raises(ValueError):
        synth.SynthSpec(noise=0.5).validate()
    with pytest.raises(ValueError):
        synth.SynthSpec(background="stripes").validate()


def test_random_specs_respect_contrast():
    for seed in range(20):
        spec = synth.random_frame_spec(seed)
        for b in spec.bands:
            assert abs(synth.luminance(b.fg) - synth.luminance(b.bg)) >= synth.MIN_TEXT_CONTRAST
            assert abs(synth.luminance(b.bg) - synth.luminance(spec.bg_color)) >= synth.MIN_BAND_CONTRAST
            assert Rect(*b.rect).inside(spec.width, spec.height)


def test_gt_rects_are_rendered_rects():
    spec = synth.random_frame_spec(9, noise=0.0, background="flat")
    img, gt = synth.render_frame(spec, 0)
    for b, rec in zip(spec.bands, gt["bands"]):
        x, y, w, h = b.rect
        assert (rec["x"], rec["y"], rec["w"], rec["h"]) == (x, y, w, h)
        region = img[y:y + h, x:x + w].reshape(-1, 3)
        colors = {tuple(c) for c in np.unique(region, axis=0)}
        assert colors <= {tuple(b.fg), tuple(b.bg)}


def _digest(directory):
    h = hashlib.sha256()
    for p in sorted(directory.iterdir()):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def test_render_sequence_deterministic(tmp_path):
    spec = synth.random_sequence_spec(3, n_frames=30, width=200, height=120, n_slots=2)
    synth.render_sequence(spec, tmp_path / "a")
    synth.render_sequence(spec, tmp_path / "b")
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    assert len(list((tmp_path / "a").glob("frame_*.png"))) == 30
    assert len(read_jsonl(tmp_path / "a" / "gt.jsonl")) == 30


def test_spec_round_trip(tmp_path):
    spec = synth.random_sequence_spec(5, n_frames=20, width=240, height=160, n_slots=2)
    p = tmp_path / "spec.json"
    p.write_text(spec.to_json())
    assert synth.SynthSpec.load(p) == spec


def test_stressed_detections_apply_stressors():
    spec = synth.random_sequence_spec(8)
    dets, info = synth.stressed_detections(spec, 8)
    assert len(dets) == spec.n_frames
    for i, t in info["drops"].items():
        b = spec.bands[i]
        # the dropped band has no detection near it that frame
        assert not any(abs(d.y - b.rect[1]) <= 1 and abs(d.x - b.rect[0]) <= 1 for d in dets[t])
    frag = info["fragment"]
    if frag:
        b = spec.bands[frag["band"]]
        t = frag["frames"][0]
        near = [d for d in dets[t] if abs(d.y - b.rect[1]) <= 1]
        assert len(near) == 2


def test_render_corpus_numbers_frames(tmp_path):
    recs = synth.render_corpus(100, 3, tmp_path, width=200, height=150)
    assert [r["frame"] for r in recs] == [0, 1, 2]
    assert sorted(p.name for p in tmp_path.glob("*.png")) == ["frame_00000.png", "frame_00001.png", "frame_00002.png"]
