"""Deterministic synthetic multispectral z-stacks with planted mitosis-like blobs.

Random numbers come from numpy's PCG64 (O'Neill's permuted congruential
generator, 128-bit state, XSL-RR output), seeded through ``SeedSequence``
with entropy ``[seed, hpf_index]``. Draw order per HPF is fixed:

1. blob placement (kind, area, aspect, orientation, centre) for mitoses,
   then distractors;
2. per mitosis: grating orientation and phase;
3. per band, per plane: one standard-normal noise field.

Mitoses are dark ellipses carrying a sinusoidal grating whose frequency
depends on the band and whose amplitude is ``texture_contrast[band]``.
Distractors share the darkness but have no grating. Every plane is the
in-focus scene blurred with ``blur_sigma_by_plane[plane]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InfeasiblePlacement, InvalidSpec
from .stack import GroundTruth, Mitosis, MultispectralHPF, pixel_centroid, write_ground_truth, write_stack, GT_FILENAME

ASPECT_RANGE = (1.0, 1.5)
BLOB_GAP = 10
PLACEMENT_TRIES = 5000


def default_blur(planes: int = 17, focus: int = 6) -> tuple[float, ...]:
    # slightly steeper above focus so no two planes share a sigma
    return tuple(round(0.5 + 0.45 * abs(p - focus) + (0.05 if p > focus else 0.0), 4) for p in range(planes))


def band_frequency(band: int) -> float:
    """Grating frequency in cycles per pixel for ``band``."""
    return 0.06 + 0.025 * band


@dataclass(frozen=True)
class SynthSpec:
    width: int = 768
    height: int = 768
    bands: int = 10
    planes: int = 17
    n_mitoses: int = 25
    mitosis_area_range: tuple[int, int] = (300, 1200)
    n_distractors: int = 75
    distractor_area_range: tuple[int, int] = (100, 1600)
    mitosis_darkness: float = 70.0
    background: float = 200.0
    texture_contrast: tuple[float, ...] = (18.0, 0.0, 18.0, 18.0, 18.0, 18.0, 18.0, 18.0, 18.0, 18.0)
    blur_sigma_by_plane: tuple[float, ...] = field(default_factory=default_blur)
    noise_sigma: float = 3.0
    seed: int = 7
    hpf_id: str = "hpf00"
    hpf_index: int = 0

    def validate(self) -> None:
        n = self.width * self.height
        if self.width < 3 or self.height < 3:
            raise InvalidSpec("canvas must be at least 3x3")
        for name in ("mitosis_area_range", "distractor_area_range"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi <= n:
                raise InvalidSpec(f"{name} must lie within [1, width*height]")
        if len(self.blur_sigma_by_plane) != self.planes:
            raise InvalidSpec("blur_sigma_by_plane needs one entry per plane")
        s = np.asarray(self.blur_sigma_by_plane)
        if np.count_nonzero(s == s.min()) != 1:
            raise InvalidSpec("blur_sigma_by_plane must have a unique minimum")
        if len(self.texture_contrast) != self.bands:
            raise InvalidSpec("texture_contrast needs one entry per band")
        if self.n_mitoses < 0 or self.n_distractors < 0 or self.noise_sigma < 0:
            raise InvalidSpec("counts and noise_sigma must be non-negative")

    @property
    def focus_plane(self) -> int:
        return int(np.argmin(self.blur_sigma_by_plane))


@dataclass(frozen=True)
class PlantedBlob:
    kind: str  # "mitosis" or "distractor"
    id: str
    pixels: np.ndarray  # (n, 2) x, y

    @property
    def area(self) -> int:
        return len(self.pixels)

    @property
    def centroid(self) -> tuple[float, float]:
        c = self.pixels.mean(axis=0)
        return float(c[0]), float(c[1])


def _rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


def ellipse_pixels(cx: float, cy: float, a: float, b: float, theta: float) -> np.ndarray:
    """Pixel centres inside the ellipse, as (x, y) rows in scanline order."""
    r = int(math.ceil(max(a, b))) + 1
    x0, y0 = int(math.floor(cx)) - r, int(math.floor(cy)) - r
    yy, xx = np.mgrid[y0 : y0 + 2 * r + 2, x0 : x0 + 2 * r + 2]
    dx, dy = xx - cx, yy - cy
    c, s = math.cos(theta), math.sin(theta)
    u = (dx * c + dy * s) / a
    v = (-dx * s + dy * c) / b
    inside = u * u + v * v <= 1.0
    return np.stack([xx[inside], yy[inside]], axis=1).astype(np.int64)


def compact_blob(area: int) -> np.ndarray:
    """Exactly ``area`` pixels, closest-first around the origin; always 8-connected."""
    r = int(math.ceil(math.sqrt(area / math.pi))) + 2
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    d2 = (xx * xx + yy * yy).ravel()
    order = np.lexsort((xx.ravel(), yy.ravel(), d2))[:area]
    return np.stack([xx.ravel()[order], yy.ravel()[order]], axis=1).astype(np.int64)


def _place_blobs(spec: SynthSpec, rng: np.random.Generator) -> list[tuple[PlantedBlob, float]]:
    """Returns blobs with their bounding radius; mitoses first."""
    placed: list[tuple[PlantedBlob, float, float, float]] = []
    jobs = [("mitosis", spec.mitosis_area_range, i) for i in range(spec.n_mitoses)]
    jobs += [("distractor", spec.distractor_area_range, i) for i in range(spec.n_distractors)]
    for kind, (lo, hi), i in jobs:
        for _ in range(PLACEMENT_TRIES):
            area = rng.uniform(lo, hi)
            aspect = rng.uniform(*ASPECT_RANGE)
            theta = rng.uniform(0.0, math.pi)
            a = math.sqrt(area * aspect / math.pi)
            b = math.sqrt(area / (math.pi * aspect))
            margin = a + BLOB_GAP / 2
            if 2 * margin >= min(spec.width, spec.height):
                continue
            cx = rng.uniform(margin, spec.width - margin)
            cy = rng.uniform(margin, spec.height - margin)
            if any(math.hypot(cx - px, cy - py) < a + pr + BLOB_GAP for _, pr, px, py in placed):
                continue
            pix = ellipse_pixels(cx, cy, a, b, theta)
            if not lo <= len(pix) <= hi:
                continue
            prefix = "m" if kind == "mitosis" else "d"
            placed.append((PlantedBlob(kind, f"{prefix}{i}", pix), a, cx, cy))
            break
        else:
            raise InfeasiblePlacement(
                f"could not place {kind} {i} after {PLACEMENT_TRIES} tries on a "
                f"{spec.width}x{spec.height} canvas"
            )
    return [(blob, a) for blob, a, _, _ in placed]


def generate_with_layout(spec: SynthSpec) -> tuple[MultispectralHPF, GroundTruth, list[PlantedBlob]]:
    spec.validate()
    rng = _rng(spec.seed, spec.hpf_index)
    blobs = [b for b, _ in _place_blobs(spec, rng)]

    h, w = spec.height, spec.width
    base = np.full((h, w), spec.background, dtype=np.float64)
    for blob in blobs:
        base[blob.pixels[:, 1], blob.pixels[:, 0]] -= spec.mitosis_darkness

    gratings = []
    for blob in blobs:
        if blob.kind == "mitosis":
            gratings.append((blob.pixels, rng.uniform(0.0, math.pi), rng.uniform(0.0, 2 * math.pi)))

    images = np.empty((spec.bands, spec.planes, h, w), dtype=np.uint8)
    for band in range(spec.bands):
        scene = base.copy()
        amp = spec.texture_contrast[band]
        if amp:
            f = band_frequency(band)
            for pix, orient, phase in gratings:
                xs, ys = pix[:, 0], pix[:, 1]
                u = xs * math.cos(orient) + ys * math.sin(orient)
                scene[ys, xs] += amp * np.sin(2 * math.pi * f * u + phase)
        for plane in range(spec.planes):
            sigma = spec.blur_sigma_by_plane[plane]
            img = ndimage.gaussian_filter(scene, sigma, mode="nearest") if sigma > 0 else scene.copy()
            noise = rng.standard_normal((h, w))
            if spec.noise_sigma > 0:
                img += spec.noise_sigma * noise
            images[band, plane] = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    stack = MultispectralHPF(spec.hpf_id, images, 8)
    mitoses = []
    for blob in blobs:
        if blob.kind != "mitosis":
            continue
        pts = tuple((int(x), int(y)) for x, y in blob.pixels)
        cx, cy = pixel_centroid(pts)
        mitoses.append(Mitosis(blob.id, (float(cx), float(cy)), pts))
    return stack, GroundTruth(spec.hpf_id, tuple(mitoses)), blobs


def generate(spec: SynthSpec) -> tuple[MultispectralHPF, GroundTruth]:
    stack, gt, _ = generate_with_layout(spec)
    return stack, gt


def exact_area_scene(
    areas, width: int = 512, height: int = 512, background: int = 200, darkness: int = 100, gap: int = 12
) -> tuple[np.ndarray, list[PlantedBlob]]:
    """Noise-free 8-bit image with one compact dark blob of each exact ``area``.

    Blobs are laid out left to right in rows.
    """
    img = np.full((height, width), background, dtype=np.uint8)
    blobs = []
    x, y, row_h = gap, gap, 0
    for i, area in enumerate(areas):
        off = compact_blob(int(area))
        lo, hi = off.min(axis=0), off.max(axis=0)
        bw, bh = hi - lo + 1
        if x + bw + gap > width:
            x, y, row_h = gap, y + row_h + gap, 0
        if y + bh + gap > height:
            raise InfeasiblePlacement("canvas too small for requested blob areas")
        pix = off - lo + np.array([x, y])
        img[pix[:, 1], pix[:, 0]] = background - darkness
        blobs.append(PlantedBlob("mitosis", f"b{i}", pix))
        x += bw + gap
        row_h = max(row_h, bh)
    return img, blobs


# ---------------------------------------------------------------------------
# spec files and datasets


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, tuple):
        kind = type(default[0]) if default else float
        return tuple(kind(float(v)) if kind is int else kind(v) for v in raw.replace(" ", "").split(",") if v)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_spec_text(text: str) -> tuple[SynthSpec, int]:
    """Parse ``key = value`` lines into a spec plus the number of HPFs.

    Keys are the ``SynthSpec`` field names plus ``hpfs`` (default 1). Lists
    are comma separated. ``#`` starts a comment.
    """
    base = SynthSpec()
    names = {f.name for f in fields(SynthSpec)}
    kw = {}
    hpfs = 1
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidSpec(f"line {line_no}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            if key == "hpfs":
                hpfs = int(val)
            elif key in names:
                kw[key] = _parse_value(val, getattr(base, key))
            else:
                raise InvalidSpec(f"line {line_no}: unknown key {key!r}")
        except ValueError as exc:
            raise InvalidSpec(f"line {line_no}: bad value for {key}: {exc}") from exc
    spec = replace(base, **kw)
    if "blur_sigma_by_plane" not in kw and spec.planes != len(base.blur_sigma_by_plane):
        spec = replace(spec, blur_sigma_by_plane=default_blur(spec.planes, min(6, spec.planes - 1)))
    if "texture_contrast" not in kw and spec.bands != len(base.texture_contrast):
        spec = replace(spec, texture_contrast=tuple(0.0 if b == 1 else 18.0 for b in range(spec.bands)))
    if hpfs < 1:
        raise InvalidSpec("hpfs must be >= 1")
    spec.validate()
    return spec, hpfs


def dataset_specs(spec: SynthSpec, hpfs: int) -> list[SynthSpec]:
    return [replace(spec, hpf_id=f"hpf{i:02d}", hpf_index=i) for i in range(hpfs)]


def standard_fixture(seed: int = 7) -> list[SynthSpec]:
    """Four 768x768 HPFs totalling 100 mitoses and 300 distractors."""
    return dataset_specs(SynthSpec(seed=seed), 4)


def write_dataset(specs: list[SynthSpec], out_dir: str | Path) -> None:
    for s in specs:
        stack, gt = generate(s)
        d = write_stack(stack, out_dir)
        write_ground_truth(gt, d / GT_FILENAME)
