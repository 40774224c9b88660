"""Centroid matching against ground truth, detection metrics, stratified cross-validation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .classify import TrainParams, predict, train
from .errors import InsufficientData
from .features import MITOSIS, NON_MITOSIS, FeatureMatrix, feature_mode_slots
from .selection import DEFAULT_BACKTRACK, DEFAULT_BINS, discretize, select_features
from .stack import DEFAULT_MICRONS_PER_PIXEL, GroundTruth

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE_UM = 5.0


@dataclass(frozen=True)
class MatchResult:
    tp_pairs: tuple[tuple[str, str], ...]
    fp_ids: tuple[str, ...]
    fn_ids: tuple[str, ...]
    tolerance_microns: float


def match(
    predicted,
    gt: GroundTruth,
    tolerance_microns: float = DEFAULT_TOLERANCE_UM,
    microns_per_pixel: float = DEFAULT_MICRONS_PER_PIXEL,
) -> MatchResult:
    """Greedy nearest-pair matching of candidate centroids to ground-truth centroids.

    The globally closest unmatched pair within the tolerance is matched first;
    equal distances fall back to input order. ``predicted`` needs ``.id`` and
    ``.centroid`` on each element.
    """
    if tolerance_microns <= 0:
        raise ValueError("tolerance must be positive")
    predicted = list(predicted)
    tol_px = tolerance_microns / microns_per_pixel
    pairs = []
    if predicted and gt.mitoses:
        pc = np.array([p.centroid for p in predicted], dtype=np.float64)
        gc = np.array([m.centroid for m in gt.mitoses], dtype=np.float64)
        dist = np.hypot(pc[:, None, 0] - gc[None, :, 0], pc[:, None, 1] - gc[None, :, 1])
        ci, gi = np.nonzero(dist <= tol_px)
        order = np.lexsort((gi, ci, dist[ci, gi]))
        used_c, used_g = set(), set()
        for k in order:
            c, g = int(ci[k]), int(gi[k])
            if c in used_c or g in used_g:
                continue
            used_c.add(c)
            used_g.add(g)
            pairs.append((c, g))
    matched_c = {c for c, _ in pairs}
    matched_g = {g for _, g in pairs}
    return MatchResult(
        tuple((predicted[c].id, gt.mitoses[g].id) for c, g in pairs),
        tuple(p.id for i, p in enumerate(predicted) if i not in matched_c),
        tuple(m.id for i, m in enumerate(gt.mitoses) if i not in matched_g),
        tolerance_microns,
    )


@dataclass(frozen=True)
class EvaluationReport:
    tp: int
    fp: int
    fn: int
    tpr: float
    ppv: float
    f_measure: float
    per_fold: tuple["EvaluationReport", ...] = ()
    detection_fn: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tpr": self.tpr,
            "ppv": self.ppv,
            "fMeasure": self.f_measure,
            "detectionFn": self.detection_fn,
        }
        if self.per_fold:
            d["perFold"] = [f.to_dict() for f in self.per_fold]
        if self.config:
            d["config"] = self.config
        return d


def metrics(tp: int, fp: int, fn: int, **extra) -> EvaluationReport:
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    tpr = tp / (tp + fn) if tp + fn > 0 else 0.0
    ppv = tp / (tp + fp) if tp + fp > 0 else 0.0
    f = 2 * tpr * ppv / (tpr + ppv) if tpr + ppv > 0 else 0.0
    return EvaluationReport(tp, fp, fn, tpr, ppv, f, **extra)


def outcome_counts(truth: np.ndarray, predicted: np.ndarray) -> tuple[int, int, int]:
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    tp = int(np.sum((predicted == MITOSIS) & (truth == MITOSIS)))
    fp = int(np.sum((predicted == MITOSIS) & (truth == NON_MITOSIS)))
    fn = int(np.sum((predicted != MITOSIS) & (truth == MITOSIS)))
    return tp, fp, fn


# ---------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True)
class PipelineConfig:
    classifier: str = "bayes"
    feature_mode: str = "all"
    select: bool = False
    bin_count: int = DEFAULT_BINS
    backtrack: int = DEFAULT_BACKTRACK
    train_params: TrainParams = TrainParams()

    @property
    def selects(self) -> bool:
        return self.select or self.feature_mode == "selected"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trainParams"] = d.pop("train_params")
        return d


def canonical_order(fm: FeatureMatrix) -> np.ndarray:
    """Row indices sorted by candidate id."""
    return np.array(sorted(range(len(fm)), key=lambda i: fm.ids[i]), dtype=np.int64)


def stratified_folds(labels: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold index per row; class sizes and fold sizes each differ by at most one.

    Rows of each class are shuffled with ``seed`` and dealt round-robin,
    positives first, with negatives continuing where positives stopped.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    dealt = []
    for c in (MITOSIS, NON_MITOSIS):
        rows = np.flatnonzero(labels == c)
        dealt.append(rng.permutation(rows))
    order = np.concatenate(dealt)
    folds = np.empty(len(labels), dtype=np.int64)
    folds[order] = np.arange(len(order)) % k
    return folds


def fit_pipeline(train_fm: FeatureMatrix, cfg: PipelineConfig):
    """Feature subset (schema indices) and model fitted on ``train_fm`` only."""
    slots = feature_mode_slots(cfg.feature_mode)
    subset = slots
    selection = None
    if cfg.selects:
        x = train_fm.values[:, list(slots)]
        d, _ = discretize(x, train_fm.labels, cfg.bin_count)
        selection = select_features(d, backtrack=cfg.backtrack)
        subset = tuple(slots[i] for i in selection.indices)
    model = train(cfg.classifier, train_fm, subset, cfg.train_params)
    return model, selection


@dataclass(frozen=True)
class CandidateOutcome:
    candidate_id: str
    fold: int
    truth: int
    label: int
    score: float

    @property
    def tag(self) -> str:
        if self.label == MITOSIS:
            return "TP" if self.truth == MITOSIS else "FP"
        return "FN" if self.truth == MITOSIS else "TN"


def cross_validate(
    fm: FeatureMatrix,
    k: int = 5,
    cfg: PipelineConfig = PipelineConfig(),
    seed: int = 0,
    detection_fn: int = 0,
    config_echo: dict | None = None,
) -> tuple[EvaluationReport, list[CandidateOutcome]]:
    """Stratified k-fold evaluation of selection + classification.

    Everything learned (bins, subset, standardization, model) is fitted on the
    training folds. Rows are put in candidate-id order first, so the input
    row order does not affect the result. ``detection_fn`` ground-truth
    mitoses that never became candidates are added to the aggregate FN.
    """
    if k < 2:
        raise InsufficientData("k must be at least 2")
    if np.any(fm.labels < 0):
        raise InsufficientData("cross-validation needs every row labelled")
    if len(fm) < k:
        raise InsufficientData(f"{len(fm)} instances cannot fill {k} folds")
    for c in (MITOSIS, NON_MITOSIS):
        if np.count_nonzero(fm.labels == c) < 2:
            raise InsufficientData("each class needs at least two instances")

    fm = fm.take(canonical_order(fm))
    folds = stratified_folds(fm.labels, k, seed)
    per_fold = []
    outcomes = []
    for f in range(k):
        test_rows = np.flatnonzero(folds == f)
        train_fm = fm.take(np.flatnonzero(folds != f))
        model, selection = fit_pipeline(train_fm, cfg)
        preds = [predict(model, fm.vector(i)) for i in test_rows]
        labels = np.array([p.label for p in preds], dtype=np.int64)
        tp, fp, fn = outcome_counts(fm.labels[test_rows], labels)
        fold_cfg = {"fold": f, "size": int(len(test_rows)), "subset": list(model.subset)}
        if selection is not None:
            fold_cfg["inconsistencyRate"] = selection.inconsistency_rate
        per_fold.append(metrics(tp, fp, fn, config=fold_cfg))
        outcomes += [CandidateOutcome(fm.ids[i], f, int(fm.labels[i]), p.label, p.score) for i, p in zip(test_rows, preds)]
        logger.debug("fold %d: tp=%d fp=%d fn=%d subset=%d", f, tp, fp, fn, len(model.subset))

    tp = sum(r.tp for r in per_fold)
    fp = sum(r.fp for r in per_fold)
    fn = sum(r.fn for r in per_fold) + detection_fn
    echo = dict(config_echo or {})
    echo.update({"folds": k, "seed": seed, "pipeline": cfg.to_dict()})
    outcomes.sort(key=lambda o: o.candidate_id)
    return metrics(tp, fp, fn, per_fold=tuple(per_fold), detection_fn=detection_fn, config=echo), outcomes
