"""Frame ingestion and the detect / track / extract stages used by the CLI."""

from __future__ import annotations

import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from . import band_detect, extract, preprocess, tracker
from .imageio import dumps, iter_pnm_stream, list_frames, read_frame, read_jsonl, write_jsonl, write_pgm
from .rect import Rect

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    eta_fo: float = tracker.ETA_FO
    epsilon: int = band_detect.EPSILON
    hist_match: float = tracker.HIST_MATCH
    max_misses: int = tracker.MAX_MISSES
    min_w: int = band_detect.MIN_BAND_W
    min_h: int = band_detect.MIN_BAND_H
    enhanced: bool = True
    ocr_cmd: Optional[str] = None
    ocr_timeout: float = extract.OCR_TIMEOUT
    ocr_jobs: int = 4
    wordlist: Optional[str] = None
    correct: bool = True
    max_d: int = 1
    debug_dir: Optional[str] = None
    threads: int = 1
    seed: int = 0

    def validate(self) -> Config:
        if not 0 < self.eta_fo < 0.5:
            raise ConfigError("eta_fo must lie in (0, 0.5)")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if not 0 <= self.hist_match <= 1:
            raise ConfigError("hist_match must lie in [0, 1]")
        if self.max_misses < 0:
            raise ConfigError("max_misses must be non-negative")
        if self.min_w < 1 or self.min_h < 1:
            raise ConfigError("minimum band size must be positive")
        if self.max_d not in (1, 2):
            raise ConfigError("max_d must be 1 or 2")
        if self.threads < 1 or self.ocr_jobs < 1:
            raise ConfigError("worker counts must be at least 1")
        if self.ocr_timeout <= 0:
            raise ConfigError("ocr_timeout must be positive")
        return self

    @classmethod
    def from_sources(cls, path: Optional[str] = None, **overrides) -> Config:
        """Defaults, then the JSON config file, then non-None overrides."""
        values: dict = {}
        if path:
            try:
                with open(path, encoding="utf-8") as f:
                    values = json.load(f)
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
            if not isinstance(values, dict):
                raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values.update({k: v for k, v in overrides.items() if v is not None and k in known})
        try:
            return cls(**values).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)


# -- frame sources -------------------------------------------------------------


@dataclass
class FrameItem:
    index: int
    name: str
    image: Optional[np.ndarray] = None
    error: Optional[str] = None


def iter_frames(source) -> Iterator[FrameItem]:
    """Frames from a directory (filename order), a PNM stream file, or ``-`` for stdin.

    Unreadable frames and frames whose size differs from the first good
    one come back with ``error`` set and keep their index.
    """
    shape = None

    def check(item: FrameItem) -> FrameItem:
        nonlocal shape
        if item.image is None:
            return item
        if shape is None:
            shape = item.image.shape
        elif item.image.shape != shape:
            return FrameItem(item.index, item.name, None, f"size {item.image.shape[1]}x{item.image.shape[0]} differs from first frame")
        return item

    if str(source) == "-":
        for i, img in enumerate(iter_pnm_stream(sys.stdin.buffer)):
            yield check(FrameItem(i, f"stdin:{i}", img))
        return
    path = Path(source)
    if path.is_dir():
        for i, p in enumerate(list_frames(path)):
            try:
                img = read_frame(p)
            except (OSError, ValueError) as exc:
                yield FrameItem(i, p.name, None, str(exc))
                continue
            yield check(FrameItem(i, p.name, img))
        return
    with open(path, "rb") as f:
        for i, img in enumerate(iter_pnm_stream(f)):
            yield check(FrameItem(i, f"{path.name}:{i}", img))


# -- detection -----------------------------------------------------------------


@dataclass
class FrameResult:
    index: int
    name: str
    bands: list
    ms: float
    error: Optional[str] = None

    def record(self) -> dict:
        return {"frame": self.index, "bands": [b.to_dict() for b in self.bands]}


def detect_image(image: np.ndarray, config: Config, stem: Optional[str] = None) -> list[band_detect.TextBand]:
    gray = preprocess.to_luminance(image)
    stages: list = []
    try:
        edge = preprocess.edge_map(gray, enhanced=config.enhanced, stages_out=stages)
    except preprocess.BlankFrame:
        return []
    trace = band_detect.DetectionTrace() if config.debug_dir else None
    bands = band_detect.detect_bands(edge, config.epsilon, config.min_h, config.min_w, trace=trace)
    if config.debug_dir and stem is not None:
        out = Path(config.debug_dir)
        out.mkdir(parents=True, exist_ok=True)
        if stages:
            preprocess.dump_stages(stages[0], out, stem)
        else:
            write_pgm(out / f"{stem}_grad.pgm", np.rint(edge * 255.0).astype(np.uint8))
        (out / f"{stem}_trace.json").write_text(dumps(trace.to_dict()) + "\n", encoding="utf-8")
    return bands


def _detect_item(item: FrameItem, config: Config) -> FrameResult:
    if item.image is None:
        return FrameResult(item.index, item.name, [], 0.0, item.error)
    t0 = time.perf_counter()
    try:
        bands = detect_image(item.image, config, stem=f"frame_{item.index:05d}")
    except preprocess.FrameTooSmall as exc:
        return FrameResult(item.index, item.name, [], 0.0, str(exc))
    return FrameResult(item.index, item.name, bands, 1000.0 * (time.perf_counter() - t0))


def detect_frames(items: Iterable[FrameItem], config: Config) -> Iterator[tuple[FrameItem, FrameResult]]:
    """Detection in frame order; a worker pool may run ahead of the consumer."""
    if config.threads <= 1:
        for item in items:
            yield item, _detect_item(item, config)
        return
    window = 4 * config.threads
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        pending: list = []
        for item in items:
            pending.append((item, pool.submit(_detect_item, item, config)))
            if len(pending) >= window:
                it, fut = pending.pop(0)
                yield it, fut.result()
        for it, fut in pending:
            yield it, fut.result()


# -- tracking ------------------------------------------------------------------


@dataclass
class TrackOutput:
    tracks: list
    events: list
    images: dict


def load_detections(path) -> dict[int, list[Rect]]:
    out = {}
    for rec in read_jsonl(path):
        out[int(rec["frame"])] = [Rect.from_dict(b) for b in rec.get("bands", [])]
    return out


def track_frames(
    items: Iterable[FrameItem],
    config: Config,
    detections: Optional[dict[int, list[Rect]]] = None,
    on_detect=None,
) -> TrackOutput:
    """Detect (unless ``detections`` is given), track and accumulate.

    ``on_detect`` receives every :class:`FrameResult` as it is consumed.
    """
    trk = tracker.Tracker(config.eta_fo, config.hist_match, config.max_misses)
    accs: dict[int, extract.TrackAccumulator] = {}
    events: list = []

    if detections is None:
        stream = detect_frames(items, config)
    else:
        stream = (
            (it, FrameResult(it.index, it.name, detections.get(it.index, []), 0.0, it.error)) for it in items
        )

    for item, res in stream:
        if on_detect is not None:
            on_detect(res)
        if item.image is None:
            log.error("frame %s skipped: %s", item.name, item.error)
            continue
        rects = [getattr(b, "rect", b) for b in res.bands]
        events.extend(trk.step(rects, item.image, item.index))
        for t in trk.active:
            if t.history[-1][0] == item.index:
                accs.setdefault(t.id, extract.TrackAccumulator()).add(item.image, t.history[-1][1])
    events.extend(trk.finish())

    tracks = trk.all_tracks()
    images = {t.id: accs[t.id].result().final for t in tracks if t.id in accs}
    records = []
    for t in tracks:
        rec = t.to_dict()
        rec["image"] = f"track_{t.id}.pgm" if t.id in images else None
        records.append(rec)
    return TrackOutput(records, [e.to_dict() for e in events], images)


def write_track_output(out: TrackOutput, out_dir) -> None:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    write_jsonl(d / "tracks.jsonl", out.tracks)
    write_jsonl(d / "events.jsonl", out.events)
    for tid, final in sorted(out.images.items()):
        write_pgm(d / f"track_{tid}.pgm", extract.ocr_image(final))


# -- extraction ----------------------------------------------------------------


def load_dictionary(config: Config) -> Optional[extract.Dictionary]:
    if not config.correct:
        return None
    if config.wordlist is None:
        return extract.Dictionary.bundled()
    try:
        return extract.Dictionary.load(config.wordlist)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load wordlist {config.wordlist}: {exc}") from exc


def extract_tracks(tracks_dir, config: Config) -> list[dict]:
    """Run OCR plus correction on every accumulated track image."""
    from .imageio import read_frame as _read

    d = Path(tracks_dir)
    if not config.ocr_cmd:
        raise ConfigError("extract needs an OCR command (--ocr-cmd)")
    dictionary = load_dictionary(config)
    records = [r for r in read_jsonl(d / "tracks.jsonl") if r.get("image")]

    def one(rec: dict) -> dict:
        img = _read(d / rec["image"])[..., 0]
        final = (img < 128).astype(np.uint8)
        raw = extract.run_ocr(final, config.ocr_cmd, config.ocr_timeout)
        corrected = extract.dictionary_correct(raw, dictionary, config.max_d) if dictionary else raw
        return extract.RecognizedText(int(rec["id"]), raw, corrected).to_dict()

    with ThreadPoolExecutor(max_workers=config.ocr_jobs) as pool:
        return list(pool.map(one, records))
