"""Gray-level co-occurrence (Haralick) and run-length (Galloway) texture features.

Both matrices use unit displacement in the four directions 0, 45, 90 and 135
degrees, with x to the right and y down the rows (so 45 degrees points up and
to the right). Gray levels are requantized linearly over the window's own
min-max range; feature formulas index levels from 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import WindowTooSmall

DEFAULT_LEVELS = 16
DIRECTIONS = (0, 45, 90, 135)
# (dx, dy) per direction
OFFSETS = {0: (1, 0), 45: (1, -1), 90: (0, -1), 135: (-1, -1)}

HARALICK_NAMES = (
    "energy",
    "contrast",
    "correlation",
    "variance",
    "homogeneity",
    "entropy",
    "sumAverage",
    "sumEntropy",
)
RUNLENGTH_NAMES = ("SRE", "LRE", "GLN", "RLN", "RP", "LGRE", "HGRE", "SRLGE", "SRHGE", "LRHGE")


def quantize(window: np.ndarray, levels: int = DEFAULT_LEVELS) -> np.ndarray:
    """Map values linearly onto ``0 .. levels-1`` using the window's min and max."""
    w = np.asarray(window, dtype=np.float64)
    lo, hi = w.min(), w.max()
    if hi <= lo:
        return np.zeros(w.shape, dtype=np.int64)
    q = np.floor((w - lo) / (hi - lo) * levels).astype(np.int64)
    return np.minimum(q, levels - 1)


def _check_window(shape: tuple[int, int], direction: int) -> None:
    h, w = shape
    dx, dy = OFFSETS[direction]
    if (dx and w < 2) or (dy and h < 2):
        raise WindowTooSmall(f"window {w}x{h} has no pixel pairs at {direction} degrees")


@dataclass(frozen=True)
class CooccurrenceMatrix:
    levels: int
    direction: int
    p: np.ndarray  # (levels, levels), symmetric, sums to 1


def glcm_counts(q: np.ndarray, direction: int, levels: int) -> np.ndarray:
    """Symmetric co-occurrence counts of an already quantized window."""
    if direction not in OFFSETS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    _check_window(q.shape, direction)
    dx, dy = OFFSETS[direction]
    h, w = q.shape
    ys = slice(max(0, -dy), h - max(0, dy))
    xs = slice(max(0, -dx), w - max(0, dx))
    a = q[ys, xs]
    b = q[ys.start + dy : ys.stop + dy, xs.start + dx : xs.stop + dx]
    m = np.bincount((a * levels + b).ravel(), minlength=levels * levels).reshape(levels, levels)
    return m + m.T


def glcm(window: np.ndarray, direction: int, levels: int = DEFAULT_LEVELS) -> CooccurrenceMatrix:
    """Normalized symmetric GLCM of ``window`` at distance 1 in ``direction`` degrees."""
    counts = glcm_counts(quantize(window, levels), direction, levels).astype(np.float64)
    return CooccurrenceMatrix(levels, direction, counts / counts.sum())


def _xlogx(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def haralick_features(m: CooccurrenceMatrix | np.ndarray) -> np.ndarray:
    """energy, contrast, correlation, variance, homogeneity, entropy, sum average, sum entropy."""
    p = m.p if isinstance(m, CooccurrenceMatrix) else np.asarray(m, dtype=np.float64)
    g = p.shape[0]
    idx = np.arange(1, g + 1, dtype=np.float64)
    i, j = np.meshgrid(idx, idx, indexing="ij")
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mu_i = (idx * px).sum()
    mu_j = (idx * py).sum()
    sd_i = np.sqrt(((idx - mu_i) ** 2 * px).sum())
    sd_j = np.sqrt(((idx - mu_j) ** 2 * py).sum())
    energy = (p * p).sum()
    contrast = ((i - j) ** 2 * p).sum()
    if sd_i * sd_j < 1e-12:
        correlation = 0.0
    else:
        correlation = ((i - mu_i) * (j - mu_j) * p).sum() / (sd_i * sd_j)
    variance = ((i - mu_i) ** 2 * p).sum()
    homogeneity = (p / (1.0 + (i - j) ** 2)).sum()
    entropy = _xlogx(p)
    # p_{x+y}(k) for k = 2 .. 2g
    psum = np.bincount((i + j - 2).astype(np.int64).ravel(), weights=p.ravel(), minlength=2 * g - 1)
    ks = np.arange(2, 2 * g + 1, dtype=np.float64)
    sum_average = (ks * psum).sum()
    sum_entropy = _xlogx(psum)
    return np.array(
        [energy, contrast, correlation, variance, homogeneity, entropy, sum_average, sum_entropy],
        dtype=np.float64,
    )


@dataclass(frozen=True)
class RunLengthMatrix:
    levels: int
    direction: int
    counts: np.ndarray  # (levels, max_run), counts[g, r-1] = runs of level g and length r
    n_pixels: int

    @property
    def n_runs(self) -> int:
        return int(self.counts.sum())


def _lines(q: np.ndarray, direction: int) -> np.ndarray:
    """All lines along ``direction`` joined into one 1-D array with -1 separators."""
    h, w = q.shape
    if direction == 0:
        s = q
    elif direction == 90:
        s = q.T
    else:
        sheared = np.full((h, w + h - 1), -1, dtype=np.int64)
        rows = np.arange(h)[:, None]
        cols = np.arange(w)[None, :]
        # 45: x + y constant; 135: x - y constant
        shift = rows if direction == 45 else (h - 1 - rows)
        sheared[rows, cols + shift] = q
        s = sheared.T
    sep = np.full((s.shape[0], 1), -1, dtype=np.int64)
    return np.hstack([s, sep]).ravel()


def run_lengths(q: np.ndarray, direction: int) -> tuple[np.ndarray, np.ndarray]:
    """(levels, lengths) of every maximal run along ``direction``."""
    v = _lines(q, direction)
    change = np.flatnonzero(v[1:] != v[:-1]) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [len(v)]]))
    vals = v[starts]
    keep = vals >= 0
    return vals[keep], lengths[keep]


def runlength_matrix(window: np.ndarray, direction: int, levels: int = DEFAULT_LEVELS) -> RunLengthMatrix:
    if direction not in OFFSETS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    q = quantize(window, levels)
    _check_window(q.shape, direction)
    return _rlm_from_quantized(q, direction, levels)


def _rlm_from_quantized(q: np.ndarray, direction: int, levels: int) -> RunLengthMatrix:
    vals, lengths = run_lengths(q, direction)
    max_run = max(q.shape)
    counts = np.zeros((levels, max_run), dtype=np.int64)
    np.add.at(counts, (vals, lengths - 1), 1)
    return RunLengthMatrix(levels, direction, counts, q.size)


def runlength_features_from_matrix(m: RunLengthMatrix) -> np.ndarray:
    """SRE, LRE, GLN, RLN, RP, LGRE, HGRE, SRLGE, SRHGE, LRHGE."""
    p = m.counts.astype(np.float64)
    nr = p.sum()
    g = np.arange(1, p.shape[0] + 1, dtype=np.float64)[:, None]
    r = np.arange(1, p.shape[1] + 1, dtype=np.float64)[None, :]
    g2, r2 = g * g, r * r
    return np.array(
        [
            (p / r2).sum() / nr,
            (p * r2).sum() / nr,
            (p.sum(axis=1) ** 2).sum() / nr,
            (p.sum(axis=0) ** 2).sum() / nr,
            nr / m.n_pixels,
            (p / g2).sum() / nr,
            (p * g2).sum() / nr,
            (p / (g2 * r2)).sum() / nr,
            (p * g2 / r2).sum() / nr,
            (p * g2 * r2).sum() / nr,
        ],
        dtype=np.float64,
    )


def runlength_features(window: np.ndarray, direction: int, levels: int = DEFAULT_LEVELS) -> np.ndarray:
    return runlength_features_from_matrix(runlength_matrix(window, direction, levels))


def directional_texture(window: np.ndarray, levels: int = DEFAULT_LEVELS) -> tuple[np.ndarray, np.ndarray]:
    """Haralick (8) and run-length (10) features averaged over the four directions."""
    q = quantize(window, levels)
    hc = np.zeros(len(HARALICK_NAMES))
    rl = np.zeros(len(RUNLENGTH_NAMES))
    for d in DIRECTIONS:
        c = glcm_counts(q, d, levels).astype(np.float64)
        hc += haralick_features(c / c.sum())
        rl += runlength_features_from_matrix(_rlm_from_quantized(q, d, levels))
    n = len(DIRECTIONS)
    return hc / n, rl / n
