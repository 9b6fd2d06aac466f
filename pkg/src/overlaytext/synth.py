"""Synthetic news-style frames with known band ground truth.

Bands are opaque rectangles carrying rows of glyph-like stroke blocks, laid
over a flat, textured or photo-like background.  Glyph layout is a
function of the spec seed and band index only, so a band looks the same
in every frame it appears in; pixel noise is drawn per frame.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .imageio import dumps, write_frame
from .rect import Rect

BACKGROUNDS = ("flat", "textured", "photo")
MIN_TEXT_CONTRAST = 0.3
MIN_BAND_CONTRAST = 0.2


def luminance(rgb) -> float:
    r, g, b = rgb
    return (0.299 * r + 0.587 * g + 0.114 * b) / 255.0


@dataclass
class BandSpec:
    rect: tuple
    fg: tuple = (255, 255, 255)
    bg: tuple = (20, 40, 120)
    density: float = 0.85
    start: int = 0
    end: Optional[int] = None  # exclusive; None = until the end
    track_id: int = 0
    text: Optional[str] = None

    def active(self, index: int) -> bool:
        return index >= self.start and (self.end is None or index < self.end)


@dataclass
class SynthSpec:
    width: int = 720
    height: int = 576
    bands: list = field(default_factory=list)
    noise: float = 0.05
    background: str = "textured"
    bg_color: tuple = (128, 128, 128)
    n_frames: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.background not in BACKGROUNDS:
            raise ValueError(f"unknown background {self.background!r}")
        if not 0 <= self.noise <= 0.2:
            raise ValueError("noise sigma must lie in [0, 0.2]")
        for b in self.bands:
            if not Rect(*b.rect).inside(self.width, self.height):
                raise ValueError(f"band {b.track_id} rect {b.rect} leaves the frame")
            if abs(luminance(b.fg) - luminance(b.bg)) < MIN_TEXT_CONTRAST:
                raise ValueError(f"band {b.track_id} text contrast below {MIN_TEXT_CONTRAST}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> SynthSpec:
        d = dict(d)
        bands = []
        for i, b in enumerate(d.pop("bands", [])):
            b = dict(b)
            b.setdefault("track_id", i)
            b["rect"] = tuple(b["rect"])
            for key in ("fg", "bg"):
                if key in b:
                    b[key] = tuple(b[key])
            bands.append(BandSpec(**b))
        if "bg_color" in d:
            d["bg_color"] = tuple(d["bg_color"])
        spec = cls(bands=bands, **d)
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> SynthSpec:
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _rng(*keys) -> np.random.Generator:
    return np.random.default_rng([int(k) & 0xFFFFFFFF for k in keys])


def render_background(spec: SynthSpec) -> np.ndarray:
    """Static background in [0, 1], shape (H, W, 3)."""
    h, w = spec.height, spec.width
    base = np.asarray(spec.bg_color, dtype=np.float64) / 255.0
    img = np.broadcast_to(base, (h, w, 3)).copy()
    if spec.background == "flat":
        return img
    rng = _rng(spec.seed, 7919)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    if spec.background == "textured":
        for _ in range(2):
            period = rng.uniform(12.0, 48.0)
            theta = rng.uniform(0, np.pi)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.02, 0.04)
            wave = np.sin(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period + phase)
            img += amp * wave[..., None]
        return np.clip(img, 0.0, 1.0)

    # photo-like: smooth shading plus soft-edged blobs of moderate contrast
    img += 0.08 * ((xx / w) - 0.5)[..., None] + 0.06 * ((yy / h) - 0.5)[..., None]
    for _ in range(int(rng.integers(14, 22))):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        rx, ry = rng.uniform(15, 120), rng.uniform(10, 80)
        soft = rng.uniform(1.0, 3.0)
        r = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
        mask = 1.0 / (1.0 + np.exp(np.clip((r - 1.0) * min(rx, ry) / soft, -50, 50)))
        delta = rng.uniform(0.12, 0.24) * rng.choice([-1.0, 1.0])
        tint = delta + rng.uniform(-0.05, 0.05, size=3)
        img += mask[..., None] * tint
    return np.clip(img, 0.0, 1.0)


def glyph_mask(h: int, w: int, rng: np.random.Generator, density: float) -> np.ndarray:
    """Boolean mask of stroke blocks filling an ``h x w`` band interior."""
    mask = np.zeros((h, w), dtype=bool)
    sw = int(rng.integers(2, 5))
    pad = int(np.clip(round(h * 0.12), 2, 5))
    n_rows = 1 if h < 36 else 2
    row_gap = max(2, h // 10)
    row_h = (h - 2 * pad - (n_rows - 1) * row_gap) // n_rows
    if row_h < 4 or w < 2 * pad + sw:
        return mask
    x_height = max(3, int(round(row_h * 0.7)))
    for row in range(n_rows):
        top = pad + row * (row_h + row_gap)
        bottom = top + row_h
        x = pad
        while x < w - pad:
            if rng.random() > density:
                x += 3 * sw
                continue
            tall = rng.random() < 0.35
            g_top = top if tall else bottom - x_height
            n_strokes = int(rng.integers(1, 4))
            gw = n_strokes * 2 * sw - sw
            if x + gw > w - pad:
                break
            for s in range(n_strokes):
                xs = x + 2 * s * sw
                mask[g_top:bottom, xs:xs + sw] = True
            if rng.random() < 0.4:
                bar_y = g_top + int(rng.integers(0, 3)) * max(1, (bottom - g_top - sw) // 2)
                mask[bar_y:bar_y + sw, x:x + gw] = True
            x += gw + sw
    return mask


def render_frame(spec: SynthSpec, index: int, background: Optional[np.ndarray] = None):
    """Render frame ``index``; returns ``(rgb uint8 image, ground-truth record)``."""
    if background is None:
        background = render_background(spec)
    img = background.copy()
    gt_bands = []
    for i, band in enumerate(spec.bands):
        if not band.active(index):
            continue
        x, y, w, h = band.rect
        fg = np.asarray(band.fg, dtype=np.float64) / 255.0
        bg = np.asarray(band.bg, dtype=np.float64) / 255.0
        mask = glyph_mask(h, w, _rng(spec.seed, 104729, i), band.density)
        img[y:y + h, x:x + w] = np.where(mask[..., None], fg, bg)
        rec = {"x": x, "y": y, "w": w, "h": h, "track_id": band.track_id}
        if band.text is not None:
            rec["text"] = band.text
        gt_bands.append(rec)
    if spec.noise > 0:
        img = img + _rng(spec.seed, 15485863, index).normal(0.0, spec.noise, img.shape)
    rgb = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    return rgb, {"frame": index, "bands": gt_bands}


def render_sequence(spec: SynthSpec, out_dir, suffix: str = ".png") -> list[dict]:
    """Write ``frame_NNNNN<suffix>`` files plus ``gt.jsonl``; returns the GT records."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    background = render_background(spec)
    records = []
    with open(out / "gt.jsonl", "w", encoding="utf-8") as f:
        for i in range(spec.n_frames):
            rgb, gt = render_frame(spec, i, background)
            write_frame(out / f"frame_{i:05d}{suffix}", rgb)
            f.write(dumps(gt) + "\n")
            records.append(gt)
    return records


def render_corpus(seed: int, n: int, out_dir, background: str = "textured", noise: float = 0.05,
                  width: int = 720, height: int = 576, suffix: str = ".png") -> list[dict]:
    """``n`` independent random single-frame scenes, numbered as one corpus."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    with open(out / "gt.jsonl", "w", encoding="utf-8") as f:
        for i in range(n):
            spec = random_frame_spec(seed + i, width, height, background=background, noise=noise)
            rgb, gt = render_frame(spec, 0)
            gt["frame"] = i
            write_frame(out / f"frame_{i:05d}{suffix}", rgb)
            f.write(dumps(gt) + "\n")
            records.append(gt)
    return records


# -- random scene generators -------------------------------------------------


def _random_color(rng: np.random.Generator) -> tuple:
    return tuple(int(v) for v in rng.integers(0, 256, size=3))


def _contrasting(rng, ref, min_diff: float, forbid=()) -> tuple:
    for _ in range(1000):
        c = _random_color(rng)
        if abs(luminance(c) - luminance(ref)) >= min_diff and all(
            abs(luminance(c) - luminance(f)) >= MIN_BAND_CONTRAST for f in forbid
        ):
            return c
    raise RuntimeError("could not draw a contrasting colour")


def _band_colors(rng, frame_bg) -> tuple:
    bg = _contrasting(rng, frame_bg, MIN_BAND_CONTRAST)
    fg = _contrasting(rng, bg, MIN_TEXT_CONTRAST + 0.1)
    return fg, bg


def _stack_rows(rng, height: int, n: int, h_range=(22, 56), gap: int = 14, margin: int = 10):
    """Non-overlapping (y, h) row slots, at least ``gap`` rows apart."""
    for _ in range(200):
        hs = [int(rng.integers(h_range[0], h_range[1] + 1)) for _ in range(n)]
        free = height - 2 * margin - sum(hs) - gap * (n - 1)
        if free < 0:
            continue
        cuts = np.sort(rng.integers(0, free + 1, size=n))
        slack = np.diff(np.concatenate(([0], cuts)))
        rows, y = [], margin
        for hh, s in zip(hs, slack):
            y += int(s)
            rows.append((y, hh))
            y += hh + gap
        return rows
    raise RuntimeError("bands do not fit in the frame")


def random_frame_spec(
    seed: int,
    width: int = 720,
    height: int = 576,
    n_bands: Optional[int] = None,
    background: str = "textured",
    noise: float = 0.05,
) -> SynthSpec:
    """A single-frame scene with 1-4 bands at random positions."""
    rng = _rng(seed, 31)
    if n_bands is None:
        n_bands = int(rng.integers(1, 5))
    bg_lum = rng.uniform(0.3, 0.7)
    frame_bg = tuple(int(v) for v in np.clip(bg_lum * 255 + rng.integers(-30, 31, size=3), 0, 255))
    bands = []
    for i, (y, h) in enumerate(_stack_rows(rng, height, n_bands)):
        w = int(rng.integers(160, min(700, width - 20) + 1))
        x = int(rng.integers(10, width - 10 - w + 1))
        fg, bg = _band_colors(rng, frame_bg)
        bands.append(BandSpec(rect=(x, y, w, h), fg=fg, bg=bg, density=float(rng.uniform(0.75, 0.95)), track_id=i))
    spec = SynthSpec(width, height, bands, noise, background, frame_bg, 1, seed)
    spec.validate()
    return spec


def random_sequence_spec(
    seed: int,
    n_frames: int = 200,
    width: int = 480,
    height: int = 320,
    n_slots: int = 3,
    background: str = "textured",
    noise: float = 0.05,
) -> SynthSpec:
    """Bands entering and leaving fixed row slots over time.

    Consecutive bands in a slot are separated by at least three empty frames.
    """
    rng = _rng(seed, 37)
    bg_lum = rng.uniform(0.3, 0.7)
    frame_bg = tuple(int(v) for v in np.clip(bg_lum * 255 + rng.integers(-30, 31, size=3), 0, 255))
    bands = []
    track_id = 0
    for y, h in _stack_rows(rng, height, n_slots, h_range=(22, 44)):
        t = int(rng.integers(0, 20))
        while t < n_frames - 10:
            length = int(rng.integers(30, 110))
            end = min(n_frames, t + length)
            w = int(rng.integers(160, width - 20 + 1))
            x = int(rng.integers(10, width - 10 - w + 1))
            fg, bg = _band_colors(rng, frame_bg)
            bands.append(BandSpec((x, y, w, h), fg, bg, float(rng.uniform(0.75, 0.95)), t, end, track_id))
            track_id += 1
            t = end + int(rng.integers(3, 15))
    spec = SynthSpec(width, height, bands, noise, background, frame_bg, n_frames, seed)
    spec.validate()
    return spec


def stressed_detections(spec: SynthSpec, seed: int, jitter: int = 1) -> tuple[list[list[Rect]], dict]:
    """Per-frame detections derived from ground truth with tracking stressors.

    Every band loses its detection in one frame, and one band per sequence
    is reported as two fragments for a few frames.  Remaining detections
    get up to ``jitter`` pixels of boundary noise.  The second return value
    records where the stressors were placed.
    """
    rng = _rng(seed, 41)
    frames: list[list[Rect]] = [[] for _ in range(spec.n_frames)]
    owners: list[list[int]] = [[] for _ in range(spec.n_frames)]
    for i, band in enumerate(spec.bands):
        end = spec.n_frames if band.end is None else min(band.end, spec.n_frames)
        for t in range(band.start, end):
            frames[t].append(Rect(*band.rect))
            owners[t].append(i)

    eligible = [
        i for i, b in enumerate(spec.bands)
        if b.rect[2] >= 200 and (b.end or spec.n_frames) - b.start >= 30
    ]
    frag = {}
    if eligible:
        i = eligible[int(rng.integers(len(eligible)))]
        b = spec.bands[i]
        t0 = int(rng.integers(b.start + 8, (b.end or spec.n_frames) - 12))
        frag = {"band": i, "frames": list(range(t0, t0 + int(rng.integers(2, 5))))}

    drops = {}
    for i, b in enumerate(spec.bands):
        end = spec.n_frames if b.end is None else min(b.end, spec.n_frames)
        if end - b.start < 6:
            continue
        for _ in range(100):
            t = int(rng.integers(b.start + 2, end - 2))
            if frag.get("band") != i or all(abs(t - f) > 2 for f in frag["frames"]):
                drops[i] = t
                break

    out: list[list[Rect]] = []
    for t in range(spec.n_frames):
        dets = []
        for r, i in zip(frames[t], owners[t]):
            if drops.get(i) == t:
                continue
            if jitter:
                d = rng.integers(-jitter, jitter + 1, size=4)
                r = Rect(r.x + int(d[0]), r.y + int(d[1]), r.w + int(d[2]), r.h + int(d[3]))
            if frag.get("band") == i and t in frag["frames"]:
                cut = int(r.w * rng.uniform(0.4, 0.6))
                gap = 6
                dets.append(Rect(r.x, r.y, cut, r.h))
                dets.append(Rect(r.x + cut + gap, r.y, r.w - cut - gap, r.h))
            else:
                dets.append(r)
        out.append(dets)
    return out, {"drops": drops, "fragment": frag}
