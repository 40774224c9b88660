"""Focus-plane ranking by average Sobel gradient, and masked gray histograms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BandOutOfRange, DimensionMismatch, EmptyMask, ImageTooSmall
from .stack import GrayImage, MultispectralHPF

DEFAULT_KEEP = 6


def sobel_magnitude(a: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude on interior pixels, shape ``(H-2, W-2)``."""
    a = np.asarray(a, dtype=np.float64)
    gx = (a[:-2, 2:] + 2.0 * a[1:-1, 2:] + a[2:, 2:]) - (a[:-2, :-2] + 2.0 * a[1:-1, :-2] + a[2:, :-2])
    gy = (a[2:, :-2] + 2.0 * a[2:, 1:-1] + a[2:, 2:]) - (a[:-2, :-2] + 2.0 * a[:-2, 1:-1] + a[:-2, 2:])
    return np.hypot(gx, gy)


def average_gradient(img: GrayImage | np.ndarray) -> float:
    """Mean Sobel magnitude over interior pixels (borders are excluded, not padded)."""
    a = img.pixels if isinstance(img, GrayImage) else np.asarray(img)
    if a.ndim != 2 or a.shape[0] < 3 or a.shape[1] < 3:
        raise ImageTooSmall(f"need at least 3x3 pixels, got {a.shape}")
    return float(sobel_magnitude(a).mean())


@dataclass(frozen=True)
class FocusRanking:
    band: int
    scores: tuple[tuple[int, float], ...]
    selected: tuple[int, ...]

    def ordered(self) -> list[tuple[int, float]]:
        """All planes, best first (descending score, ties to the lower index)."""
        return sorted(self.scores, key=lambda s: (-s[1], s[0]))


def rank_planes(stack: MultispectralHPF, band: int, keep: int = DEFAULT_KEEP) -> FocusRanking:
    if not 0 <= band < stack.bands:
        raise BandOutOfRange(f"band {band} not in [0, {stack.bands})")
    if not 0 <= keep <= stack.planes:
        raise ValueError(f"keep must be in [0, {stack.planes}], got {keep}")
    scores = tuple((p, average_gradient(stack.images[band, p])) for p in range(stack.planes))
    order = sorted(scores, key=lambda s: (-s[1], s[0]))
    return FocusRanking(band, scores, tuple(p for p, _ in order[:keep]))


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def bin_count(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def mode_center(self) -> float:
        i = int(np.argmax(self.counts))
        return 0.5 * (self.bin_edges[i] + self.bin_edges[i + 1])


def default_bin_count(bit_depth: int) -> int:
    return 256 if bit_depth == 8 else 1024


def masked_histogram(img: GrayImage, mask: np.ndarray, bin_count: int | None = None) -> Histogram:
    """Histogram of the pixels under ``mask`` over the full gray range of ``img``.

    Bins are equal width over ``[0, 2**bit_depth]`` so that with 256 bins on an
    8-bit image each bin holds exactly one gray value.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img.pixels.shape:
        raise DimensionMismatch(f"mask shape {mask.shape} != image shape {img.pixels.shape}")
    if not mask.any():
        raise EmptyMask("mask selects no pixels")
    if bin_count is None:
        bin_count = default_bin_count(img.bit_depth)
    edges = np.linspace(0.0, float(img.max_value + 1), bin_count + 1)
    counts, _ = np.histogram(img.pixels[mask], bins=edges)
    return Histogram(edges, counts.astype(np.int64))
