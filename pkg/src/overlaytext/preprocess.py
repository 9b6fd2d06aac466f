"""Contrast-enhanced edge map for overlay text detection.

Gradient magnitudes of overlay text sit at the high end of the magnitude
histogram because the text is rendered with high contrast.  The map is
built in four steps:

1. Scharr gradient magnitude, normalised by its maximum.
2. Otsu threshold of the normalised magnitudes; it fixes the stretch
   factor so that every magnitude at or below the threshold is zeroed.
3. Linear stretch ``alpha * (x - 0.5) + 0.5`` rescaled to ``[0, 1]``.
4. Histogram equalisation over the surviving (non-zero) pixels.

All arrays are ``(H, W)`` float64 with values in ``[0, 1]`` unless noted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

ALPHA_MAX = 100.0
ALPHA_MIN = 1.0 + 1e-6
N_BINS = 256

REC601 = np.array([0.299, 0.587, 0.114])


class FrameTooSmall(ValueError):
    pass


class BlankFrame(ValueError):
    """The frame has no gradient at all (g_max == 0)."""


@dataclass(frozen=True)
class GradientMap:
    mag: np.ndarray
    g_max: float

    @property
    def normalized(self) -> np.ndarray:
        if self.g_max <= 0:
            return np.zeros_like(self.mag)
        return self.mag / self.g_max


@dataclass(frozen=True)
class StretchParams:
    g_otsu: float
    alpha: float
    g_ns: float
    lam: float


@dataclass(frozen=True)
class EnhanceStages:
    gradient: GradientMap
    params: StretchParams
    stretched: np.ndarray
    equalized: np.ndarray


def to_luminance(frame: np.ndarray) -> np.ndarray:
    """Rec.601 luminance of an ``(H, W, 3)`` RGB frame with values in 0..255."""
    frame = np.asarray(frame)
    if frame.ndim == 2:
        gray = frame.astype(np.float64) / 255.0
    elif frame.ndim == 3 and frame.shape[2] == 3:
        gray = frame.astype(np.float64) @ REC601 / 255.0
    else:
        raise ValueError(f"expected (H, W, 3) frame, got shape {frame.shape}")
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        raise FrameTooSmall("frame too small")
    return np.clip(gray, 0.0, 1.0)


def scharr_gradient(gray: np.ndarray) -> GradientMap:
    """Scharr gradient magnitude with replicated borders."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2 or gray.shape[0] < 3 or gray.shape[1] < 3:
        raise FrameTooSmall("frame too small")
    p = np.pad(gray, 1, mode="edge")
    dx = p[:, 2:] - p[:, :-2]
    dy = p[2:, :] - p[:-2, :]
    gx = 3.0 * (dx[:-2] + dx[2:]) + 10.0 * dx[1:-1]
    gy = 3.0 * (dy[:, :-2] + dy[:, 2:]) + 10.0 * dy[:, 1:-1]
    mag = np.hypot(gx, gy)
    return GradientMap(mag=mag, g_max=float(mag.max()))


def magnitude_histogram(normalized: np.ndarray) -> np.ndarray:
    """256 uniform bins over [0, 1]; the value 1.0 falls in the last bin."""
    idx = np.minimum((normalized.ravel() * N_BINS).astype(np.int64), N_BINS - 1)
    return np.bincount(idx, minlength=N_BINS)


def otsu_threshold(hist) -> float:
    """Otsu threshold of a 256-bin histogram, as a normalised bin centre.

    Class 0 holds bins ``0..k``.  The returned value is the centre of bin
    ``k`` for the ``k`` maximising the between-class variance; ties go to
    the lowest ``k``.  A histogram with a single occupied bin returns that
    bin's centre.  Integer counts are compared exactly.
    """
    h = np.asarray(hist)
    if h.ndim != 1 or h.size != N_BINS:
        raise ValueError(f"histogram must have {N_BINS} bins")
    if np.any(h < 0) or not np.any(h > 0):
        raise ValueError("histogram needs at least one non-zero bin")
    if np.issubdtype(h.dtype, np.integer) or np.all(h == np.round(h)):
        counts = [int(v) for v in h]
    else:
        counts = [float(v) for v in h]

    total = sum(counts)
    moment = sum(i * c for i, c in enumerate(counts))
    w0 = 0
    m0 = 0
    best_k = -1
    best_num, best_den = 0, 1
    for k in range(N_BINS - 1):
        w0 += counts[k]
        m0 += k * counts[k]
        w1 = total - w0
        if w0 <= 0 or w1 <= 0:
            continue
        # between-class variance times total**2: (N*m0 - M*w0)^2 / (w0*w1)
        num = (total * m0 - moment * w0) ** 2
        den = w0 * w1
        if num * best_den > best_num * den:
            best_k, best_num, best_den = k, num, den
    if best_k < 0:
        best_k = int(np.flatnonzero(h > 0)[0])
    return (best_k + 0.5) / N_BINS


def compute_stretch_params(g_otsu: float, g_max: float) -> StretchParams:
    """Stretch factor chosen so the lowest surviving magnitude equals ``g_otsu``.

    ``g_otsu`` is in normalised units, so ``alpha = 1 / (1 - 2 g_otsu)``,
    which is ``g_max / (g_max - 2 g_otsu g_max)`` in raw units.
    """
    if g_max <= 0:
        raise BlankFrame("blank frame")
    if g_otsu >= 0.5:
        alpha = ALPHA_MAX
    else:
        alpha = 1.0 / (1.0 - 2.0 * g_otsu)
    alpha = float(min(max(alpha, ALPHA_MIN), ALPHA_MAX))
    g_ns = (alpha - 1.0) / (2.0 * alpha)
    # the largest normalised magnitude is 1, so the stretched maximum is known
    lam = alpha * 0.5 + 0.5
    return StretchParams(g_otsu=float(g_otsu), alpha=alpha, g_ns=g_ns, lam=lam)


def contrast_stretch(gmap: GradientMap, params: StretchParams) -> np.ndarray:
    x = gmap.normalized
    raw = params.alpha * (x - 0.5) + 0.5
    out = np.where(x > params.g_ns, np.maximum(raw, 0.0), 0.0)
    return out / params.lam


def histogram_equalize(stretched: np.ndarray) -> np.ndarray:
    """CDF equalisation over the non-zero pixels; zeros stay zero."""
    stretched = np.asarray(stretched, dtype=np.float64)
    out = np.zeros_like(stretched)
    nz = stretched > 0
    n = int(np.count_nonzero(nz))
    if n == 0:
        return out
    levels = np.clip(np.rint(stretched[nz] * (N_BINS - 1)), 0, N_BINS - 1).astype(np.int64)
    cdf = np.cumsum(np.bincount(levels, minlength=N_BINS)) / n
    out[nz] = cdf[levels]
    return out


def enhance_stages(gray: np.ndarray) -> EnhanceStages:
    gmap = scharr_gradient(gray)
    if gmap.g_max <= 0:
        raise BlankFrame("blank frame")
    g_otsu = otsu_threshold(magnitude_histogram(gmap.normalized))
    params = compute_stretch_params(g_otsu, gmap.g_max)
    stretched = contrast_stretch(gmap, params)
    return EnhanceStages(gmap, params, stretched, histogram_equalize(stretched))


def enhance(gray: np.ndarray) -> np.ndarray:
    """Edge map in which text gradients dominate.  Raises `BlankFrame`."""
    return enhance_stages(gray).equalized


def plain_edge_map(gray: np.ndarray) -> np.ndarray:
    """Normalised gradient magnitude without contrast enhancement."""
    gmap = scharr_gradient(gray)
    if gmap.g_max <= 0:
        raise BlankFrame("blank frame")
    return gmap.normalized


def dump_stages(stages: EnhanceStages, directory, stem: str) -> None:
    """Write the intermediate maps as 8-bit PGM files."""
    from .imageio import write_pgm

    grad = stages.gradient.normalized
    for suffix, arr in (("grad", grad), ("stretch", stages.stretched), ("eq", stages.equalized)):
        write_pgm(f"{directory}/{stem}_{suffix}.pgm", np.rint(arr * 255.0).astype(np.uint8))


def edge_map(gray: np.ndarray, enhanced: bool = True, stages_out: Optional[list] = None) -> np.ndarray:
    if not enhanced:
        return plain_edge_map(gray)
    stages = enhance_stages(gray)
    if stages_out is not None:
        stages_out.append(stages)
    return stages.equalized
