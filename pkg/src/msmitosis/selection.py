"""Consistency-based feature subset selection.

Features are discretized by equal-frequency binning, subsets are scored by
their inconsistency rate (Liu and Setiono), and a best-first search with a
budget of consecutive non-improving expansions looks for the smallest subset
that is as consistent as the full feature set.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMatrix, InsufficientData

DEFAULT_BINS = 10
DEFAULT_BACKTRACK = 5


@dataclass(frozen=True)
class Discretizer:
    """Per-feature interior bin edges; a value goes to ``searchsorted(edges, v, 'right')``."""

    edges: tuple[np.ndarray, ...]
    bin_count: int

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        codes = np.empty(x.shape, dtype=np.int64)
        for j, e in enumerate(self.edges):
            codes[:, j] = np.searchsorted(e, x[:, j], side="right")
        return codes


@dataclass(frozen=True)
class DiscretizedMatrix:
    codes: np.ndarray  # (n_instances, n_features)
    labels: np.ndarray
    bin_count: int

    @property
    def n_instances(self) -> int:
        return self.codes.shape[0]

    @property
    def n_features(self) -> int:
        return self.codes.shape[1]


def equal_frequency_edges(column: np.ndarray, bin_count: int) -> np.ndarray:
    """Interior edges for ``bin_count`` equal-frequency bins that never split ties.

    Each ideal cut position ``k*n/bin_count`` moves to the nearest boundary
    between distinct sorted values (lower boundary on a draw); duplicate cuts
    collapse, so heavy ties give fewer, uneven bins.
    """
    v = np.sort(np.asarray(column, dtype=np.float64))
    n = len(v)
    # positions i where v[i-1] < v[i]
    boundaries = np.flatnonzero(v[1:] > v[:-1]) + 1
    if len(boundaries) == 0:
        return np.empty(0)
    cuts = set()
    for k in range(1, bin_count):
        target = k * n / bin_count
        pos = np.searchsorted(boundaries, target)
        best = None
        for cand in (pos - 1, pos):
            if 0 <= cand < len(boundaries):
                b = boundaries[cand]
                if best is None or abs(b - target) < abs(best - target):
                    best = b
        cuts.add(int(best))
    return np.array([(v[c - 1] + v[c]) / 2.0 for c in sorted(cuts)])


def fit_discretizer(x: np.ndarray, bin_count: int = DEFAULT_BINS) -> Discretizer:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise EmptyMatrix("cannot discretize an empty matrix")
    if x.shape[0] < bin_count:
        raise InsufficientData(f"need at least {bin_count} instances, got {x.shape[0]}")
    return Discretizer(tuple(equal_frequency_edges(x[:, j], bin_count) for j in range(x.shape[1])), bin_count)


def discretize(x: np.ndarray, labels: np.ndarray, bin_count: int = DEFAULT_BINS) -> tuple[DiscretizedMatrix, Discretizer]:
    disc = fit_discretizer(x, bin_count)
    return DiscretizedMatrix(disc.transform(x), np.asarray(labels, dtype=np.int64), bin_count), disc


def _rate_from_keys(keys: np.ndarray, labels: np.ndarray, n_classes: int) -> float:
    _, group = np.unique(keys, return_inverse=True)
    table = np.zeros((group.max() + 1, n_classes), dtype=np.int64)
    np.add.at(table, (group, labels), 1)
    return float(len(labels) - table.max(axis=1).sum()) / len(labels)


def _class_index(labels: np.ndarray) -> tuple[np.ndarray, int]:
    classes, idx = np.unique(labels, return_inverse=True)
    return idx, len(classes)


def _group_ids(codes: np.ndarray, subset) -> np.ndarray:
    gid = np.zeros(codes.shape[0], dtype=np.int64)
    for j in subset:
        _, gid = np.unique(gid * (codes[:, j].max() + 1) + codes[:, j], return_inverse=True)
    return gid


def inconsistency_rate(d: DiscretizedMatrix, subset) -> float:
    """Share of instances outside the majority class of their code-tuple group."""
    subset = list(subset)
    if not subset:
        raise ValueError("subset must be non-empty")
    y, nc = _class_index(d.labels)
    return _rate_from_keys(_group_ids(d.codes, subset), y, nc)


@dataclass(frozen=True)
class FeatureSubset:
    indices: tuple[int, ...]
    inconsistency_rate: float
    search_log: tuple[tuple[int, float], ...] = field(default=())


def _search(d: DiscretizedMatrix, backtrack: int) -> tuple[list[tuple[float, tuple[int, ...]]], float]:
    y, nc = _class_index(d.labels)
    n_feat = d.n_features
    full_rate = _rate_from_keys(_group_ids(d.codes, range(n_feat)), y, nc)

    empty_rate = 1.0 - np.bincount(y).max() / len(y)
    visited: dict[tuple[int, ...], float] = {(): empty_rate}
    gids: dict[tuple[int, ...], np.ndarray] = {(): np.zeros(len(y), dtype=np.int64)}
    open_list = [(empty_rate, 0, ())]
    best = (empty_rate, 0, ())
    stale = 0
    while open_list and stale < backtrack:
        _, _, node = heapq.heappop(open_list)
        parent = gids.pop(node)
        width = int(parent.max()) + 1
        improved = False
        for f in range(n_feat):
            if f in node:
                continue
            child = tuple(sorted(node + (f,)))
            if child in visited:
                continue
            _, g = np.unique(d.codes[:, f] * width + parent, return_inverse=True)
            rate = _rate_from_keys(g, y, nc)
            visited[child] = rate
            gids[child] = g
            key = (rate, len(child), child)
            heapq.heappush(open_list, key)
            if key < best:
                best = key
                improved = True
        stale = 0 if improved else stale + 1
    log = [(rate, sub) for sub, rate in visited.items()]
    return log, full_rate


def select_features(
    x: np.ndarray | DiscretizedMatrix,
    labels: np.ndarray | None = None,
    bin_count: int = DEFAULT_BINS,
    backtrack: int = DEFAULT_BACKTRACK,
) -> FeatureSubset:
    """Smallest visited subset whose inconsistency rate does not exceed the full set's.

    ``x`` is either a raw feature matrix (discretized here) or an already
    discretized matrix. Column positions are returned as indices.
    """
    if isinstance(x, DiscretizedMatrix):
        d = x
    else:
        d, _ = discretize(x, labels, bin_count)
    if len(np.unique(d.labels)) < 2:
        raise InsufficientData("feature selection needs at least two classes")
    visited, full_rate = _search(d, backtrack)
    # visiting order is deterministic: dict insertion order
    log = tuple((len(sub), rate) for rate, sub in visited if sub)
    ok = [(len(sub), rate, sub) for rate, sub in visited if sub and rate <= full_rate]
    if not ok:
        full = tuple(range(d.n_features))
        return FeatureSubset(full, full_rate, log)
    size, rate, sub = min(ok)
    return FeatureSubset(sub, rate, log)
