"""Frame I/O: image files, concatenated PNM streams, PGM/PPM writers, JSONL."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np
from PIL import Image

FRAME_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")


def read_frame(path) -> np.ndarray:
    """Load an image as an ``(H, W, 3)`` uint8 RGB array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def list_frames(directory) -> list[Path]:
    """Frame files in lexicographic filename order."""
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)


def write_pgm(path, image: np.ndarray) -> None:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(image.tobytes())


def write_ppm(path, image: np.ndarray) -> None:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w, _ = image.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(image.tobytes())


def write_frame(path, image: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        write_ppm(path, image)
    else:
        Image.fromarray(image).save(path, format="PNG")


def _read_token(stream: BinaryIO) -> bytes:
    token = b""
    while True:
        c = stream.read(1)
        if not c:
            return token
        if c == b"#":
            stream.readline()
            if token:
                return token
            continue
        if c.isspace():
            if token:
                return token
            continue
        token += c


def iter_pnm_stream(stream: BinaryIO) -> Iterator[np.ndarray]:
    """Yield frames from back-to-back binary PPM (P6) / PGM (P5) images.

    This is the layout produced by e.g. ``ffmpeg -f image2pipe -c:v ppm -``.
    """
    while True:
        magic = _read_token(stream)
        if not magic:
            return
        if magic not in (b"P5", b"P6"):
            raise ValueError(f"unsupported stream frame type {magic!r}")
        w, h, maxval = (int(_read_token(stream)) for _ in range(3))
        if maxval != 255:
            raise ValueError("only 8-bit PNM frames are supported")
        channels = 3 if magic == b"P6" else 1
        n = w * h * channels
        data = stream.read(n)
        if len(data) != n:
            raise ValueError("truncated frame in stream")
        arr = np.frombuffer(data, dtype=np.uint8).reshape(h, w, channels)
        if channels == 1:
            arr = np.repeat(arr, 3, axis=2)
        yield arr


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_jsonl(path, records) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        for r in records:
            f.write(dumps(r) + "\n")
    os.replace(tmp, path)
