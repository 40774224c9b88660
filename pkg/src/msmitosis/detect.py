"""Candidate detection: Otsu threshold, opening + hole filling, area-gated components.

Masks are plain ``(H, W)`` boolean arrays. Foreground is the dark side of the
threshold since hematoxylin-dense nuclei image dark.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import BandOutOfRange, DegenerateImage
from .stack import GrayImage, MultispectralHPF

MIN_AREA = 200
MAX_AREA = 5405
DEFAULT_BAND = 8
DEFAULT_PLANE = 6
DEFAULT_OPEN_RADIUS = 1

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class CandidateRegion:
    """One connected component. ``pixels`` is an ``(n, 2)`` array of (x, y)."""

    id: str
    pixels: np.ndarray
    band: int = DEFAULT_BAND
    plane: int = DEFAULT_PLANE

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def area(self) -> int:
        return len(self.pixels)

    @property
    def centroid(self) -> tuple[float, float]:
        c = self.pixels.mean(axis=0)
        return float(c[0]), float(c[1])

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """(x_min, y_min, x_max, y_max), inclusive."""
        lo = self.pixels.min(axis=0)
        hi = self.pixels.max(axis=0)
        return int(lo[0]), int(lo[1]), int(hi[0]), int(hi[1])

    def mask(self, shape: tuple[int, int]) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        m[self.pixels[:, 1], self.pixels[:, 0]] = True
        return m

    def local_mask(self) -> np.ndarray:
        x0, y0, x1, y1 = self.bbox
        m = np.zeros((y1 - y0 + 1, x1 - x0 + 1), dtype=bool)
        m[self.pixels[:, 1] - y0, self.pixels[:, 0] - x0] = True
        return m


def otsu_threshold(img: GrayImage | np.ndarray) -> tuple[int, np.ndarray]:
    """Exact Otsu over the image's gray values; returns (threshold, dark mask).

    The cut ``t`` puts values ``<= t`` in the lower class. Among equal
    between-class variances the lowest cut wins.
    """
    a = img.pixels if isinstance(img, GrayImage) else np.asarray(img)
    values, counts = np.unique(a, return_counts=True)
    if len(values) < 2:
        raise DegenerateImage("image has a single gray value")
    counts = counts.astype(np.float64)
    total = counts.sum()
    w0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(counts * values.astype(np.float64))[:-1]
    w1 = total - w0
    mu_all = (counts * values).sum() / total
    mu0 = s0 / w0
    mu1 = (mu_all * total - s0) / w1
    between = w0 * w1 * (mu0 - mu1) ** 2
    t = values[int(np.argmax(between))].item()
    return int(t), a <= t


def disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= r * r


def morphological_cleanup(mask: np.ndarray, open_radius: int = DEFAULT_OPEN_RADIUS) -> np.ndarray:
    """Opening with a disk of ``open_radius`` then fill of interior holes.

    Pixels outside the image count as foreground for the erosion and as
    background for the dilation, so regions touching the border are not
    eroded from outside.
    """
    if open_radius < 0:
        raise ValueError("open_radius must be >= 0")
    m = np.asarray(mask, dtype=bool)
    if open_radius > 0:
        se = disk(open_radius)
        m = ndimage.binary_erosion(m, structure=se, border_value=1)
        m = ndimage.binary_dilation(m, structure=se, border_value=0)
    # default structure is 4-connected for the background
    return ndimage.binary_fill_holes(m)


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected labels renumbered so label k has the k-th first pixel in scanline order."""
    labels, n = ndimage.label(np.asarray(mask, dtype=bool), structure=EIGHT_CONNECTED)
    if n == 0:
        return labels, 0
    flat = labels.ravel()
    present, first = np.unique(flat, return_index=True)
    keep = present > 0
    order = present[keep][np.argsort(first[keep], kind="stable")]
    remap = np.zeros(n + 1, dtype=labels.dtype)
    remap[order] = np.arange(1, n + 1, dtype=labels.dtype)
    return remap[labels], n


def extract_candidates(
    mask: np.ndarray,
    min_area: int = MIN_AREA,
    max_area: int = MAX_AREA,
    band: int = DEFAULT_BAND,
    plane: int = DEFAULT_PLANE,
    hpf_id: str = "",
) -> list[CandidateRegion]:
    """Components with ``min_area <= area <= max_area``, ids ``hpf:band:plane:ordinal``."""
    if min_area > max_area:
        raise ValueError("min_area must not exceed max_area")
    labels, n = label_components(mask)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    ys, xs = np.nonzero(labels)
    lab = labels[ys, xs]
    # nonzero() walks in scanline order, so a stable sort keeps it within a label
    order = np.argsort(lab, kind="stable")
    lab, xs, ys = lab[order], xs[order], ys[order]
    starts = np.searchsorted(lab, np.arange(1, n + 2))
    out = []
    for k in range(1, n + 1):
        if not min_area <= areas[k] <= max_area:
            continue
        s, e = starts[k - 1], starts[k]
        pix = np.stack([xs[s:e], ys[s:e]], axis=1)
        cid = f"{hpf_id}:{band}:{plane}:{len(out)}"
        out.append(CandidateRegion(cid, pix, band, plane))
    return out


def detect(
    stack: MultispectralHPF,
    band: int = DEFAULT_BAND,
    plane: int = DEFAULT_PLANE,
    min_area: int = MIN_AREA,
    max_area: int = MAX_AREA,
    open_radius: int = DEFAULT_OPEN_RADIUS,
    bright_foreground: bool = False,
) -> list[CandidateRegion]:
    if not 0 <= band < stack.bands:
        raise BandOutOfRange(f"band {band} not in [0, {stack.bands})")
    if not 0 <= plane < stack.planes:
        raise BandOutOfRange(f"plane {plane} not in [0, {stack.planes})")
    img = stack.image(band, plane)
    t, mask = otsu_threshold(img)
    if bright_foreground:
        mask = ~mask
    mask = morphological_cleanup(mask, open_radius)
    return extract_candidates(mask, min_area, max_area, band, plane, stack.id)


# ---------------------------------------------------------------------------
# serialization


CANDIDATE_HEADER = ["id", "area", "cx", "cy", "xMin", "yMin", "xMax", "yMax"]


def candidate_rows(cands: list[CandidateRegion]) -> list[list[str]]:
    rows = []
    for c in cands:
        cx, cy = c.centroid
        rows.append([c.id, str(c.area), repr(cx), repr(cy), *map(str, c.bbox)])
    return rows


def encode_rle(c: CandidateRegion) -> str:
    """``id xMin yMin w h start:len ...`` with runs in row-major order of the bbox."""
    x0, y0, x1, y1 = c.bbox
    flat = c.local_mask().ravel()
    padded = np.concatenate([[False], flat, [False]])
    d = np.diff(padded.astype(np.int8))
    starts = np.nonzero(d == 1)[0]
    ends = np.nonzero(d == -1)[0]
    runs = " ".join(f"{s}:{e - s}" for s, e in zip(starts, ends))
    return f"{c.id} {x0} {y0} {x1 - x0 + 1} {y1 - y0 + 1} {runs}"


def decode_rle(line: str) -> CandidateRegion:
    parts = line.split()
    cid = parts[0]
    x0, y0, w, h = (int(v) for v in parts[1:5])
    flat = np.zeros(w * h, dtype=bool)
    for tok in parts[5:]:
        s, n = tok.split(":")
        flat[int(s) : int(s) + int(n)] = True
    ys, xs = np.nonzero(flat.reshape(h, w))
    _, band, plane, _ = cid.rsplit(":", 3)
    return CandidateRegion(cid, np.stack([xs + x0, ys + y0], axis=1), int(band), int(plane))
