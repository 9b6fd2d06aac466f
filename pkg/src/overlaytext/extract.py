"""Band binarisation, accumulation over a track, OCR hand-off and correction."""

from __future__ import annotations

import logging
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .preprocess import REC601, N_BINS, BlankFrame, enhance, otsu_threshold
from .rect import Rect

log = logging.getLogger(__name__)

OCR_TIMEOUT = 10.0
MAJORITY = 0.5
DEFAULT_WORDLIST = "news_words.txt"

_WORD = re.compile(r"[A-Za-z]+")


class OcrConfigError(ValueError):
    """The OCR command is missing or unusable."""


class OcrError(RuntimeError):
    """The OCR command failed or timed out."""


# -- binarisation --------------------------------------------------------------


def band_luminance(frame: np.ndarray, rect: Rect) -> np.ndarray:
    """Integer (0..255) luminance of the band."""
    h, w = frame.shape[:2]
    if not rect.inside(w, h):
        raise ValueError(f"rect {tuple(rect)} outside {w}x{h} frame")
    crop = frame[rect.y:rect.y2, rect.x:rect.x2].astype(np.float64)
    lum = crop @ REC601 if crop.ndim == 3 else crop
    return np.clip(np.rint(lum), 0, 255).astype(np.int64)


def binarize_band(frame: np.ndarray, rect: Rect, edge: Optional[np.ndarray] = None) -> np.ndarray:
    """1 marks text pixels.

    The Otsu split of the band luminance gives two classes; the text class
    is the one whose pixels carry more edge energy on average, because
    thin strokes are edge almost everywhere while the band background is
    mostly flat.  ``edge`` is a full-frame edge map; without it one is
    computed for the band alone.
    """
    lum = band_luminance(frame, rect)
    hist = np.bincount(lum.ravel(), minlength=N_BINS)
    if np.count_nonzero(hist) < 2:
        return np.zeros(lum.shape, dtype=np.uint8)
    k = int(otsu_threshold(hist) * N_BINS)
    upper = lum > k

    if edge is None:
        try:
            e = enhance(lum / 255.0) if min(lum.shape) >= 3 else np.zeros(lum.shape)
        except BlankFrame:
            e = np.zeros(lum.shape)
    else:
        e = np.asarray(edge, dtype=np.float64)[rect.y:rect.y2, rect.x:rect.x2]

    n_up = int(upper.sum())
    n_lo = upper.size - n_up
    mean_up = float(e[upper].mean()) if n_up else 0.0
    mean_lo = float(e[~upper].mean()) if n_lo else 0.0
    if mean_up != mean_lo:
        fg = upper if mean_up > mean_lo else ~upper
    else:
        fg = upper if n_up < n_lo else ~upper
    return fg.astype(np.uint8)


# -- accumulation --------------------------------------------------------------


@dataclass(frozen=True)
class AccumulatedBand:
    votes: np.ndarray
    n: int

    @property
    def height(self) -> int:
        return self.votes.shape[0]

    @property
    def width(self) -> int:
        return self.votes.shape[1]

    @property
    def final(self) -> np.ndarray:
        return (self.votes >= MAJORITY).astype(np.uint8)


def canonical_size(shapes: Iterable[tuple[int, int]]) -> tuple[int, int]:
    """Median ``(height, width)``, rounded half up."""
    a = np.asarray(list(shapes), dtype=np.float64)
    if a.size == 0:
        raise ValueError("no shapes")
    h, w = np.floor(np.median(a, axis=0) + 0.5).astype(int)
    return int(h), int(w)


def resample_nearest(img: np.ndarray, height: int, width: int) -> np.ndarray:
    sh, sw = img.shape
    rows = np.minimum(((np.arange(height) + 0.5) * sh / height).astype(np.int64), sh - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * sw / width).astype(np.int64), sw - 1)
    return img[rows[:, None], cols[None, :]]


def accumulate(binaries: Sequence[np.ndarray], size: Optional[tuple[int, int]] = None) -> AccumulatedBand:
    """Per-pixel vote mean over binarisations resampled to a common size."""
    if len(binaries) == 0:
        raise ValueError("nothing to accumulate")
    if size is None:
        size = canonical_size(b.shape for b in binaries)
    total = np.zeros(size, dtype=np.float64)
    for b in binaries:
        total += resample_nearest(np.asarray(b, dtype=np.float64), *size)
    return AccumulatedBand(total / len(binaries), len(binaries))


class TrackAccumulator:
    """Collects one binarisation per tracked frame."""

    def __init__(self):
        self.binaries: list[np.ndarray] = []

    def add(self, frame: np.ndarray, rect: Rect, edge: Optional[np.ndarray] = None) -> None:
        self.binaries.append(binarize_band(frame, rect, edge))

    def result(self) -> AccumulatedBand:
        return accumulate(self.binaries)


# -- OCR hand-off --------------------------------------------------------------


def ocr_image(final: np.ndarray) -> np.ndarray:
    """Black text on white, the layout most engines expect."""
    return np.where(np.asarray(final) > 0, 0, 255).astype(np.uint8)


def run_ocr(final: np.ndarray, cmd: Optional[str], timeout: float = OCR_TIMEOUT) -> str:
    """Run an external OCR command on a binary band image.

    ``cmd`` is a template such as ``"tesseract {img} stdout"``; ``{img}`` is
    replaced by the path of a temporary PGM file.  Returns stripped stdout.
    """
    from .imageio import write_pgm

    if not cmd or not cmd.strip():
        raise OcrConfigError("no OCR command configured")
    argv = shlex.split(cmd)
    if not any("{img}" in a for a in argv):
        raise OcrConfigError("OCR command template lacks an {img} placeholder")
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "band.pgm"
        write_pgm(path, ocr_image(final))
        argv = [a.replace("{img}", str(path)) for a in argv]
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=timeout, check=False)
        except FileNotFoundError as exc:
            raise OcrConfigError(f"OCR command not found: {argv[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise OcrError(f"OCR command timed out after {timeout:g} s") from exc
    if proc.returncode != 0:
        stderr = proc.stderr.decode("utf-8", "replace").strip()
        raise OcrError(f"OCR command exited with {proc.returncode}: {stderr}")
    text = proc.stdout.decode("utf-8", "replace").strip()
    if not text:
        log.warning("OCR command produced no text")
    return text


# -- dictionary correction -----------------------------------------------------


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance between two sequences."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass
class Dictionary:
    words: frozenset
    source: str = ""
    _by_len: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.words = frozenset(w.lower() for w in self.words if w)
        for w in sorted(self.words):
            self._by_len.setdefault(len(w), []).append(w)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.words

    def __len__(self) -> int:
        return len(self.words)

    @classmethod
    def load(cls, path) -> Dictionary:
        text = Path(path).read_text(encoding="utf-8")
        words = [line.strip() for line in text.splitlines() if line.strip()]
        if not words:
            raise ValueError(f"wordlist {path} is empty")
        return cls(frozenset(words), str(path))

    @classmethod
    def bundled(cls) -> Dictionary:
        text = resources.files("overlaytext").joinpath("data", DEFAULT_WORDLIST).read_text(encoding="utf-8")
        return cls(frozenset(text.split()), DEFAULT_WORDLIST)

    def nearest(self, word: str, max_d: int) -> Optional[tuple[str, int]]:
        """Closest word within ``max_d`` edits; ties go to the alphabetically first."""
        word = word.lower()
        best = None
        for n in range(len(word) - max_d, len(word) + max_d + 1):
            for cand in self._by_len.get(n, ()):
                d = levenshtein(word, cand)
                if d <= max_d and (best is None or (d, cand) < (best[1], best[0])):
                    best = (cand, d)
        return best


def _match_case(template: str, word: str) -> str:
    if template.isupper():
        return word.upper()
    if template[0].isupper() and (len(template) == 1 or template[1:].islower()):
        return word.capitalize()
    if template.islower():
        return word
    # mixed case: copy the case of each position, lower beyond the template
    return "".join(c.upper() if i < len(template) and template[i].isupper() else c for i, c in enumerate(word))


def correct_words(raw: str, dictionary: Dictionary, max_d: int = 1) -> tuple[str, list[int]]:
    """Corrected string plus the edit distance applied to each word."""
    if max_d not in (1, 2):
        raise ValueError("max_d must be 1 or 2")
    distances: list[int] = []

    def fix(m: re.Match) -> str:
        token = m.group(0)
        if token in dictionary:
            distances.append(0)
            return token
        hit = dictionary.nearest(token, max_d)
        if hit is None:
            distances.append(0)
            return token
        distances.append(hit[1])
        return _match_case(token, hit[0])

    return _WORD.sub(fix, raw), distances


def dictionary_correct(raw: str, dictionary: Dictionary, max_d: int = 1) -> str:
    return correct_words(raw, dictionary, max_d)[0]


@dataclass(frozen=True)
class RecognizedText:
    track_id: int
    raw: str
    corrected: str
    distances: tuple = ()

    def to_dict(self) -> dict:
        return {"track_id": self.track_id, "raw": self.raw, "corrected": self.corrected}


# -- error rates ---------------------------------------------------------------


def error_rates(hypothesis: str, reference: str) -> tuple[float, float]:
    """(character error rate, word error rate) against a non-empty reference."""
    ref_words = reference.split()
    if not reference or not ref_words:
        raise ValueError("reference text is empty")
    cer = levenshtein(hypothesis, reference) / len(reference)
    wer = levenshtein(hypothesis.split(), ref_words) / len(ref_words)
    return cer, wer
