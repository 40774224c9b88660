"""Data model and disk layout for multispectral, multi-focal high-power fields.

A dataset root holds one directory per HPF::

    <root>/<hpfId>/band<BB>_plane<PP>.png   # grayscale, 8- or 16-bit
    <root>/<hpfId>/mitosis.csv              # optional ground truth

Images keep their native bit depth; callers convert to float when they need to.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .errors import (
    DataError,
    DimensionMismatch,
    MalformedRow,
    MissingImage,
    OutOfBoundsCoordinate,
    UnreadableFile,
)

DEFAULT_BANDS = 10
DEFAULT_PLANES = 17
# sqrt(37 um^2 / 200 px)
DEFAULT_MICRONS_PER_PIXEL = 0.430
GT_FILENAME = "mitosis.csv"


def image_filename(band: int, plane: int) -> str:
    return f"band{band:02d}_plane{plane:02d}.png"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GrayImage:
    """A single grayscale image stored at its native bit depth."""

    pixels: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise ValueError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {px.shape}")
        dtype = np.uint8 if self.bit_depth == 8 else np.uint16
        if px.dtype != dtype:
            if px.size and (px.min() < 0 or px.max() > (1 << self.bit_depth) - 1):
                raise ValueError(f"values out of range for {self.bit_depth}-bit image")
            px = px.astype(dtype)
        object.__setattr__(self, "pixels", _readonly(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    def as_float(self) -> np.ndarray:
        return self.pixels.astype(np.float64)


@dataclass(frozen=True)
class MultispectralHPF:
    """One high-power field: ``images[band, plane]`` is an ``(H, W)`` gray image."""

    id: str
    images: np.ndarray
    bit_depth: int = 8
    microns_per_pixel: float = DEFAULT_MICRONS_PER_PIXEL

    def __post_init__(self):
        imgs = np.asarray(self.images)
        if imgs.ndim != 4:
            raise DimensionMismatch(f"expected (bands, planes, H, W) array, got shape {imgs.shape}")
        if self.microns_per_pixel <= 0:
            raise ValueError("microns_per_pixel must be positive")
        dtype = np.uint8 if self.bit_depth == 8 else np.uint16
        if imgs.dtype != dtype:
            imgs = imgs.astype(dtype)
        object.__setattr__(self, "images", _readonly(imgs))

    @property
    def bands(self) -> int:
        return self.images.shape[0]

    @property
    def planes(self) -> int:
        return self.images.shape[1]

    @property
    def height(self) -> int:
        return self.images.shape[2]

    @property
    def width(self) -> int:
        return self.images.shape[3]

    def image(self, band: int, plane: int) -> GrayImage:
        return GrayImage(self.images[band, plane], self.bit_depth)

    def __iter__(self) -> Iterator[tuple[int, int, GrayImage]]:
        for b in range(self.bands):
            for p in range(self.planes):
                yield b, p, self.image(b, p)


@dataclass(frozen=True)
class Mitosis:
    id: str
    centroid: tuple[float, float]
    pixels: tuple[tuple[int, int], ...] | None = None


@dataclass(frozen=True)
class GroundTruth:
    hpf_id: str
    mitoses: tuple[Mitosis, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.mitoses)


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def pixel_centroid(pixels) -> tuple[int, int]:
    """Mean of integer pixel coordinates, rounded half up per axis."""
    xs = [p[0] for p in pixels]
    ys = [p[1] for p in pixels]
    return round_half_up(sum(xs) / len(xs)), round_half_up(sum(ys) / len(ys))


# ---------------------------------------------------------------------------
# reading


def _read_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.array(im)
    except (OSError, ValueError) as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    if arr.ndim != 2:
        raise UnreadableFile(f"{path} is not a single-channel grayscale image")
    if arr.dtype == np.bool_:
        arr = arr.astype(np.uint8)
    if arr.dtype not in (np.uint8, np.uint16):
        if arr.size and (arr.min() < 0 or arr.max() > 65535):
            raise UnreadableFile(f"{path} has values outside 16-bit range")
        arr = arr.astype(np.uint16)
    return arr


def list_hpfs(root: str | Path) -> list[str]:
    """HPF ids under a dataset root, sorted."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    return sorted(p.name for p in root.iterdir() if p.is_dir() and any(p.glob("band*_plane*.png")))


def load_stack(
    root: str | Path,
    hpf_id: str,
    bands: int = DEFAULT_BANDS,
    planes: int = DEFAULT_PLANES,
    microns_per_pixel: float = DEFAULT_MICRONS_PER_PIXEL,
) -> MultispectralHPF:
    """Read all ``bands x planes`` PNGs of one HPF.

    Raises:
        MissingImage: a (band, plane) file is absent.
        DimensionMismatch: images differ in size or bit depth.
        UnreadableFile: a file exists but cannot be decoded as grayscale.
    """
    d = Path(root) / hpf_id
    if not d.is_dir():
        raise DataError(f"no HPF directory {d}")
    stack = None
    depth = None
    for b in range(bands):
        for p in range(planes):
            path = d / image_filename(b, p)
            if not path.is_file():
                raise MissingImage(b, p, str(path))
            arr = _read_png(path)
            if stack is None:
                stack = np.empty((bands, planes) + arr.shape, dtype=arr.dtype)
                depth = arr.dtype
            elif arr.shape != stack.shape[2:]:
                raise DimensionMismatch(
                    f"{path.name} is {arr.shape[1]}x{arr.shape[0]}, expected "
                    f"{stack.shape[3]}x{stack.shape[2]}"
                )
            elif arr.dtype != depth:
                raise DimensionMismatch(f"{path.name} has bit depth {arr.dtype}, expected {depth}")
            stack[b, p] = arr
    bit_depth = 8 if depth == np.uint8 else 16
    return MultispectralHPF(hpf_id, stack, bit_depth, microns_per_pixel)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_ground_truth(
    csv_path: str | Path,
    width: int | None = None,
    height: int | None = None,
    hpf_id: str | None = None,
) -> GroundTruth:
    """Parse ``id,x0,y0,x1,y1,...`` or ``id,cx,cy`` rows.

    A pixel list yields a centroid equal to the per-axis mean rounded half up.
    A first line whose second field is non-numeric is treated as a header.
    When ``width``/``height`` are given, coordinates are bounds-checked against them.
    """
    path = Path(csv_path)
    if hpf_id is None:
        hpf_id = path.parent.name
    try:
        text = path.read_text()
    except OSError as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc

    mitoses = []
    for line_no, row in enumerate(csv.reader(text.splitlines()), start=1):
        row = [c.strip() for c in row]
        if not row or all(c == "" for c in row):
            continue
        if line_no == 1 and len(row) > 1 and not _is_number(row[1]):
            continue
        mid, coords = row[0], row[1:]
        if not mid or len(coords) < 2 or len(coords) % 2:
            raise MalformedRow(line_no, "expected id followed by x,y pairs")
        try:
            vals = [float(c) for c in coords]
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc)) from exc
        pts = list(zip(vals[0::2], vals[1::2]))
        for x, y in pts:
            if x < 0 or y < 0 or (width is not None and x >= width) or (height is not None and y >= height):
                raise OutOfBoundsCoordinate(f"line {line_no}: ({x}, {y}) outside image bounds")
        if len(pts) == 1:
            mitoses.append(Mitosis(mid, pts[0]))
        else:
            if any(v != int(v) for v in vals):
                raise MalformedRow(line_no, "pixel lists must be integer coordinates")
            ipts = tuple((int(x), int(y)) for x, y in pts)
            cx, cy = pixel_centroid(ipts)
            mitoses.append(Mitosis(mid, (float(cx), float(cy)), ipts))
    return GroundTruth(hpf_id, tuple(mitoses))


def load_hpf_ground_truth(root: str | Path, stack: MultispectralHPF) -> GroundTruth:
    path = Path(root) / stack.id / GT_FILENAME
    if not path.is_file():
        return GroundTruth(stack.id)
    return load_ground_truth(path, stack.width, stack.height, stack.id)


# ---------------------------------------------------------------------------
# writing


def write_stack(stack: MultispectralHPF, root: str | Path) -> Path:
    d = Path(root) / stack.id
    d.mkdir(parents=True, exist_ok=True)
    for b, p, img in stack:
        Image.fromarray(img.pixels).save(d / image_filename(b, p), compress_level=1)
    return d


def write_ground_truth(gt: GroundTruth, path: str | Path) -> None:
    lines = []
    for m in gt.mitoses:
        if m.pixels:
            coords = [str(c) for xy in m.pixels for c in xy]
        else:
            coords = [repr(float(m.centroid[0])), repr(float(m.centroid[1]))]
        lines.append(",".join([m.id, *coords]))
    Path(path).write_text("".join(line + "\n" for line in lines))
