"""Gaussian naive Bayes, information-gain decision tree and linear SVM.

Models consume full-width feature vectors and read only their ``subset``
columns. A score exactly on the decision threshold is labelled nonMitosis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NonFiniteFeature, SchemaMismatch, SingleClassData
from .features import LABEL_NAMES, MITOSIS, NON_MITOSIS, FeatureMatrix, FeatureVector

MODEL_VERSION = 1
KINDS = ("bayes", "tree", "linearSvm")
VAR_FLOOR = 1e-9
THRESHOLDS = {"bayes": 0.5, "tree": 0.5, "linearSvm": 0.0}


@dataclass(frozen=True)
class TrainParams:
    min_node_size: int = 15
    svm_c: float = 1.0
    svm_bias: float = 1.0
    svm_eps: float = 0.01
    svm_max_iter: int = 1000
    undersample: bool = False
    seed: int = 0


@dataclass(frozen=True)
class Model:
    kind: str
    subset: tuple[int, ...]
    params: dict
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"version": MODEL_VERSION, "kind": self.kind, "subset": list(self.subset), "params": self.params, "config": self.config},
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Model":
        d = json.loads(text)
        if d.get("version") != MODEL_VERSION:
            raise DataError(f"unsupported model version {d.get('version')!r}")
        if d.get("kind") not in KINDS:
            raise DataError(f"unknown model kind {d.get('kind')!r}")
        return cls(d["kind"], tuple(d["subset"]), d["params"], d.get("config", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Model":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class Prediction:
    candidate_id: str
    label: int
    score: float

    @property
    def label_name(self) -> str:
        return LABEL_NAMES[self.label]


# ---------------------------------------------------------------------------
# bayes


def _fit_bayes(x: np.ndarray, y: np.ndarray) -> dict:
    out = {}
    for c, name in ((NON_MITOSIS, "neg"), (MITOSIS, "pos")):
        xc = x[y == c]
        out[name] = {
            "prior": len(xc) / len(x),
            "mean": xc.mean(axis=0).tolist(),
            "var": np.maximum(xc.var(axis=0), VAR_FLOOR).tolist(),
        }
    return out


def _bayes_log_joint(p: dict, x: np.ndarray) -> float:
    mean = np.asarray(p["mean"])
    var = np.asarray(p["var"])
    ll = -0.5 * (np.log(2 * np.pi * var) + (x - mean) ** 2 / var).sum()
    return math.log(p["prior"]) + float(ll)


def _score_bayes(params: dict, x: np.ndarray) -> float:
    a = _bayes_log_joint(params["neg"], x)
    b = _bayes_log_joint(params["pos"], x)
    # posterior of the positive class, computed without overflow
    d = a - b
    if d >= 0:
        e = math.exp(-d)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(d))


# ---------------------------------------------------------------------------
# tree


def _entropy(counts: np.ndarray) -> np.ndarray:
    """Row-wise entropy in bits of class-count rows."""
    counts = np.asarray(counts, dtype=np.float64)
    tot = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(tot > 0, counts / tot, 0.0)
        lg = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * lg).sum(axis=-1)


def _best_split(x: np.ndarray, y: np.ndarray) -> tuple[int, float, float] | None:
    """(column, threshold, gain) maximizing information gain over midpoint thresholds."""
    n = len(y)
    parent = _entropy(np.bincount(y, minlength=2))
    best = None
    for j in range(x.shape[1]):
        order = np.argsort(x[:, j], kind="stable")
        xs, ys = x[order, j], y[order]
        pos_left = np.cumsum(ys)[:-1]
        n_left = np.arange(1, n)
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        left = np.stack([n_left - pos_left, pos_left], axis=1)
        right = np.stack([(n - n_left) - (ys.sum() - pos_left), ys.sum() - pos_left], axis=1)
        child = (n_left * _entropy(left) + (n - n_left) * _entropy(right)) / n
        gain = np.where(valid, parent - child, -np.inf)
        k = int(np.argmax(gain))
        g = float(gain[k])
        if best is None or g > best[2] + 1e-12:
            best = (j, float((xs[k] + xs[k + 1]) / 2.0), g)
    return best


def _grow(x: np.ndarray, y: np.ndarray, min_node: int) -> dict:
    counts = np.bincount(y, minlength=2)
    node = {"dist": [int(counts[0]), int(counts[1])]}
    if len(y) < min_node or counts.min() == 0:
        return node
    split = _best_split(x, y)
    if split is None:
        return node
    j, t, _ = split
    go_left = x[:, j] <= t
    node["feature"] = j
    node["threshold"] = t
    node["left"] = _grow(x[go_left], y[go_left], min_node)
    node["right"] = _grow(x[~go_left], y[~go_left], min_node)
    return node


def _score_tree(node: dict, x: np.ndarray) -> float:
    while "feature" in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    neg, pos = node["dist"]
    return pos / (neg + pos)


# ---------------------------------------------------------------------------
# linear svm


def _standardize_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    return mean, scale


def _fit_svm(x: np.ndarray, y: np.ndarray, p: TrainParams) -> dict:
    """Dual coordinate descent for the L2-regularized hinge loss.

    The bias enters as an extra constant feature of value ``svm_bias``.
    Iteration stops when the spread of projected gradients over one sweep
    falls below ``svm_eps``.
    """
    mean, scale = _standardize_stats(x)
    z = (x - mean) / scale
    z = np.hstack([z, np.full((len(z), 1), p.svm_bias)])
    s = np.where(y == MITOSIS, 1.0, -1.0)
    n = len(z)
    qd = (z * z).sum(axis=1)
    alpha = np.zeros(n)
    w = np.zeros(z.shape[1])
    rng = np.random.default_rng(p.seed)
    c = p.svm_c
    iters = 0
    for iters in range(1, p.svm_max_iter + 1):
        pg_max, pg_min = -np.inf, np.inf
        for i in rng.permutation(n):
            g = s[i] * float(w @ z[i]) - 1.0
            if alpha[i] == 0.0:
                pg = min(g, 0.0)
            elif alpha[i] == c:
                pg = max(g, 0.0)
            else:
                pg = g
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if pg != 0.0 and qd[i] > 0:
                old = alpha[i]
                alpha[i] = min(max(old - g / qd[i], 0.0), c)
                w += (alpha[i] - old) * s[i] * z[i]
        if pg_max - pg_min < p.svm_eps:
            break
    return {
        "weights": w[:-1].tolist(),
        "bias": float(w[-1] * p.svm_bias),
        "mean": mean.tolist(),
        "scale": scale.tolist(),
        "iterations": iters,
    }


def _score_svm(params: dict, x: np.ndarray) -> float:
    z = (x - np.asarray(params["mean"])) / np.asarray(params["scale"])
    return float(np.asarray(params["weights"]) @ z + params["bias"])


# ---------------------------------------------------------------------------


def _undersample(y: np.ndarray, seed: int) -> np.ndarray:
    pos = np.flatnonzero(y == MITOSIS)
    neg = np.flatnonzero(y == NON_MITOSIS)
    rng = np.random.default_rng(seed)
    if len(neg) > len(pos):
        neg = np.sort(rng.choice(neg, size=len(pos), replace=False))
    elif len(pos) > len(neg):
        pos = np.sort(rng.choice(pos, size=len(neg), replace=False))
    return np.sort(np.concatenate([pos, neg]))


def train(kind: str, data: FeatureMatrix, subset=None, params: TrainParams = TrainParams()) -> Model:
    """Fit a model of ``kind`` on the labelled rows of ``data`` restricted to ``subset``."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    subset = tuple(range(data.n_features)) if subset is None else tuple(int(i) for i in subset)
    if not subset:
        raise ValueError("empty feature subset")
    y = data.labels
    if np.any(y < 0):
        raise DataError("training data contains unlabeled rows")
    if len(np.unique(y)) < 2:
        raise SingleClassData("training data must contain both classes")
    x = data.values[:, subset]
    if not np.isfinite(x).all():
        raise NonFiniteFeature("non-finite value among the selected features")
    if params.undersample:
        keep = _undersample(y, params.seed)
        x, y = x[keep], y[keep]
    if kind == "bayes":
        fitted = _fit_bayes(x, y)
    elif kind == "tree":
        fitted = _grow(x, y, params.min_node_size)
    else:
        fitted = _fit_svm(x, y, params)
    cfg = {
        "minNodeSize": params.min_node_size,
        "svmC": params.svm_c,
        "svmBias": params.svm_bias,
        "svmEps": params.svm_eps,
        "undersample": params.undersample,
        "seed": params.seed,
    }
    return Model(kind, subset, fitted, cfg)


def score(model: Model, values: np.ndarray) -> float:
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or (model.subset and max(model.subset) >= len(x)):
        raise SchemaMismatch(f"vector of length {x.shape} does not cover model subset")
    x = x[list(model.subset)]
    if not np.isfinite(x).all():
        raise NonFiniteFeature("non-finite value among the model's features")
    if model.kind == "bayes":
        return _score_bayes(model.params, x)
    if model.kind == "tree":
        return _score_tree(model.params, x)
    return _score_svm(model.params, x)


def predict(model: Model, fv: FeatureVector) -> Prediction:
    s = score(model, fv.values)
    label = MITOSIS if s > THRESHOLDS[model.kind] else NON_MITOSIS
    return Prediction(fv.candidate_id, label, s)


def predict_matrix(model: Model, fm: FeatureMatrix) -> list[Prediction]:
    return [predict(model, fm.vector(i)) for i in range(len(fm))]


def write_predictions(preds: list[Prediction], path: str | Path) -> None:
    lines = ["candidateId,label,score"]
    lines += [f"{p.candidate_id},{p.label_name},{p.score!r}" for p in preds]
    Path(path).write_text("\n".join(lines) + "\n")
