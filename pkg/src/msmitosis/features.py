"""Per-candidate multispectral feature vectors and the feature-matrix CSV format.

Slot layout (235 for ten bands): five morphology slots, then for each band
five intensity, eight Haralick and ten run-length slots.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detect import CandidateRegion
from .errors import DataError, EmptyRegion, SchemaMismatch
from .stack import DEFAULT_BANDS, GrayImage, MultispectralHPF
from .texture import DEFAULT_LEVELS, HARALICK_NAMES, RUNLENGTH_NAMES, directional_texture

MORPH_NAMES = ("area", "perimeter", "roundness", "elongation", "esp")
INTENSITY_NAMES = ("mean", "median", "variance", "skewness", "kurtosis")
FAMILIES = ("morph", "intensity", "haralick", "runlength")
_FAMILY_TAG = {"intensity": "int", "haralick": "hc", "runlength": "rl"}
ELONGATION_CAP = 1e6
DEFAULT_MARGIN = 5
N_FEATURES = len(MORPH_NAMES) + DEFAULT_BANDS * (len(INTENSITY_NAMES) + len(HARALICK_NAMES) + len(RUNLENGTH_NAMES))

MITOSIS, NON_MITOSIS, UNLABELED = 1, 0, -1
LABEL_NAMES = {MITOSIS: "mitosis", NON_MITOSIS: "nonMitosis", UNLABELED: ""}
LABEL_CODES = {v: k for k, v in LABEL_NAMES.items()}


@dataclass(frozen=True)
class Slot:
    index: int
    family: str
    band: int | None
    name: str


def build_schema(bands: int = DEFAULT_BANDS) -> tuple[Slot, ...]:
    slots = [Slot(i, "morph", None, f"morph.{n}") for i, n in enumerate(MORPH_NAMES)]
    for b in range(bands):
        for family, names in (
            ("intensity", INTENSITY_NAMES),
            ("haralick", HARALICK_NAMES),
            ("runlength", RUNLENGTH_NAMES),
        ):
            for n in names:
                slots.append(Slot(len(slots), family, b, f"b{b}.{_FAMILY_TAG[family]}.{n}"))
    return tuple(slots)


SCHEMA = build_schema()
SCHEMA_NAMES = tuple(s.name for s in SCHEMA)


@dataclass(frozen=True)
class FeatureConfig:
    levels: int = DEFAULT_LEVELS
    margin: int = DEFAULT_MARGIN


@dataclass(frozen=True)
class FeatureVector:
    candidate_id: str
    values: np.ndarray
    label: int = UNLABELED


def morphological_features(region: CandidateRegion) -> np.ndarray:
    """area, crack perimeter, roundness 4*pi*A/P^2, elongation, equivalent spherical perimeter."""
    m = np.pad(region.local_mask(), 1)
    area = float(m.sum())
    if area == 0:
        raise EmptyRegion("region has no pixels")
    perimeter = float(np.count_nonzero(m[:, 1:] != m[:, :-1]) + np.count_nonzero(m[1:, :] != m[:-1, :]))
    roundness = 4.0 * math.pi * area / perimeter**2
    pts = region.pixels.astype(np.float64)
    d = pts - pts.mean(axis=0)
    cov = d.T @ d / len(pts)
    lam2, lam1 = np.linalg.eigvalsh(cov)
    if lam2 <= 1e-12:
        elongation = ELONGATION_CAP
    else:
        elongation = min(math.sqrt(lam1 / lam2), ELONGATION_CAP)
    esp = 2.0 * math.sqrt(math.pi * area)
    return np.array([area, perimeter, roundness, elongation, esp])


def moment_stats(values: np.ndarray) -> np.ndarray:
    """mean, median, population variance, skewness, excess kurtosis."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyRegion("region has no pixels")
    mean = v.mean()
    d = v - mean
    m2 = (d * d).mean()
    if m2 < 1e-12:
        skew = kurt = 0.0
    else:
        skew = (d**3).mean() / m2**1.5
        kurt = (d**4).mean() / (m2 * m2) - 3.0
    return np.array([mean, float(np.median(v)), m2, skew, kurt])


def intensity_features(img: GrayImage | np.ndarray, region: CandidateRegion) -> np.ndarray:
    a = img.pixels if isinstance(img, GrayImage) else np.asarray(img)
    if region.area == 0:
        raise EmptyRegion("region has no pixels")
    xs, ys = region.pixels[:, 0], region.pixels[:, 1]
    if xs.min() < 0 or ys.min() < 0 or xs.max() >= a.shape[1] or ys.max() >= a.shape[0]:
        raise DataError(f"region {region.id} extends outside the image")
    return moment_stats(a[ys, xs])


def texture_window(region: CandidateRegion, shape: tuple[int, int], margin: int = DEFAULT_MARGIN) -> tuple[slice, slice]:
    """Row and column slices of the bounding box grown by ``margin`` and clipped."""
    x0, y0, x1, y1 = region.bbox
    h, w = shape
    return slice(max(0, y0 - margin), min(h, y1 + margin + 1)), slice(max(0, x0 - margin), min(w, x1 + margin + 1))


def feature_vector(
    stack: MultispectralHPF,
    region: CandidateRegion,
    plane: int,
    cfg: FeatureConfig = FeatureConfig(),
    label: int = UNLABELED,
) -> FeatureVector:
    if not 0 <= plane < stack.planes:
        raise DataError(f"plane {plane} not in [0, {stack.planes})")
    values = [morphological_features(region)]
    rows, cols = texture_window(region, (stack.height, stack.width), cfg.margin)
    for b in range(stack.bands):
        img = stack.images[b, plane]
        values.append(intensity_features(img, region))
        hc, rl = directional_texture(img[rows, cols], cfg.levels)
        values.extend([hc, rl])
    v = np.concatenate(values)
    v.setflags(write=False)
    return FeatureVector(region.id, v, label)


# ---------------------------------------------------------------------------
# feature matrix


@dataclass(frozen=True)
class FeatureMatrix:
    """Rows of full-width feature vectors with optional labels (-1 = unlabeled)."""

    ids: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != len(self.ids):
            raise SchemaMismatch(f"values shape {v.shape} does not match {len(self.ids)} ids")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != len(self.ids):
            raise SchemaMismatch("labels length does not match ids")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def take(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix(tuple(self.ids[i] for i in rows), self.values[rows], self.labels[rows])

    def vector(self, i: int) -> FeatureVector:
        return FeatureVector(self.ids[i], self.values[i], int(self.labels[i]))

    @classmethod
    def from_vectors(cls, vectors: list[FeatureVector]) -> "FeatureMatrix":
        if not vectors:
            return cls((), np.zeros((0, N_FEATURES)), np.zeros(0, dtype=np.int64))
        return cls(
            tuple(v.candidate_id for v in vectors),
            np.vstack([v.values for v in vectors]),
            np.array([v.label for v in vectors], dtype=np.int64),
        )

    def concat(self, other: "FeatureMatrix") -> "FeatureMatrix":
        return FeatureMatrix(
            self.ids + other.ids, np.vstack([self.values, other.values]), np.concatenate([self.labels, other.labels])
        )


def write_feature_matrix(fm: FeatureMatrix, path: str | Path, names=SCHEMA_NAMES) -> None:
    if fm.n_features != len(names):
        raise SchemaMismatch(f"matrix has {fm.n_features} columns, schema has {len(names)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["candidateId", "label", *names])
    for i, cid in enumerate(fm.ids):
        w.writerow([cid, LABEL_NAMES[int(fm.labels[i])], *(repr(float(x)) for x in fm.values[i])])
    Path(path).write_text(buf.getvalue())


def read_feature_matrix(path: str | Path, names=SCHEMA_NAMES) -> FeatureMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path} is empty")
    header = rows[0]
    if header[:2] != ["candidateId", "label"] or tuple(header[2:]) != tuple(names):
        raise SchemaMismatch(f"{path} header does not match the feature schema")
    ids, labels, values = [], [], []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0])
        if row[1] not in LABEL_CODES:
            raise DataError(f"{path}:{line_no}: unknown label {row[1]!r}")
        labels.append(LABEL_CODES[row[1]])
        values.append([float(x) for x in row[2:]])
    vals = np.array(values, dtype=np.float64).reshape(len(ids), len(names))
    return FeatureMatrix(tuple(ids), vals, np.array(labels, dtype=np.int64))


FEATURE_MODES = ("all", "selected", "whiteBandOnly", "multispectralOnly", "intensityOnly", "textureOnly")
WHITE_BAND = 1


def feature_mode_slots(mode: str, schema=SCHEMA) -> tuple[int, ...]:
    """Schema indices a feature mode exposes to selection and training.

    ``selected`` exposes every slot; the subset search happens downstream.
    """
    if mode in ("all", "selected"):
        keep = lambda s: True  # noqa: E731
    elif mode == "whiteBandOnly":
        keep = lambda s: s.band is None or s.band == WHITE_BAND  # noqa: E731
    elif mode == "multispectralOnly":
        keep = lambda s: s.band != WHITE_BAND  # noqa: E731
    elif mode == "intensityOnly":
        keep = lambda s: s.family == "intensity"  # noqa: E731
    elif mode == "textureOnly":
        keep = lambda s: s.family in ("haralick", "runlength")  # noqa: E731
    else:
        raise ValueError(f"unknown feature mode {mode!r}; expected one of {FEATURE_MODES}")
    return tuple(s.index for s in schema if keep(s))
