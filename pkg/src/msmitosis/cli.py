"""Command-line pipeline: synth, focus, detect, features, select, train, eval, cv.

Every stage reads and writes plain-text artifacts under ``outDir`` so a run
can resume from any stage. Exit codes: 0 success, 1 usage or config error,
2 data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import synth
from .classify import Model, predict_matrix, train, write_predictions
from .config import RunConfig, load_config
from .detect import CANDIDATE_HEADER, CandidateRegion, candidate_rows, decode_rle, detect, encode_rle
from .errors import DataError, InfeasiblePlacement, InvalidConfig, MitosisError
from .evaluate import cross_validate, fit_pipeline, match, metrics, outcome_counts
from .features import (
    LABEL_NAMES,
    MITOSIS,
    NON_MITOSIS,
    SCHEMA_NAMES,
    FeatureMatrix,
    feature_mode_slots,
    feature_vector,
    read_feature_matrix,
    write_feature_matrix,
)
from .focus import rank_planes
from .selection import discretize, select_features
from .stack import list_hpfs, load_hpf_ground_truth, load_stack

log = logging.getLogger("msmitosis")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("%s: start", self.name)
        return self

    def __exit__(self, *exc):
        log.info("%s: done in %.2fs", self.name, time.perf_counter() - self.t0)


def _pmap(fn, items, jobs: int):
    """Map preserving input order, optionally across threads."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _hpfs(cfg: RunConfig) -> list[str]:
    if not cfg.datasetRoot:
        raise InvalidConfig("datasetRoot is not set (use --dataset or the config file)")
    root = Path(cfg.datasetRoot)
    if not root.is_dir():
        raise DataError(f"dataset root {root} does not exist")
    return list_hpfs(root)


def _load(cfg: RunConfig, hpf: str):
    stack = load_stack(cfg.datasetRoot, hpf, cfg.bands, cfg.planes, cfg.micronsPerPixel)
    return stack, load_hpf_ground_truth(cfg.datasetRoot, stack)


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.outDir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _cand_paths(out: Path, hpf: str, band: int, plane: int) -> tuple[Path, Path]:
    base = out / "candidates" / f"{hpf}_b{band:02d}_p{plane:02d}"
    return base.with_suffix(".csv"), base.with_suffix(".rle")


def _write_candidates(out: Path, hpf: str, band: int, plane: int, cands: list[CandidateRegion]) -> None:
    csv_path, rle_path = _cand_paths(out, hpf, band, plane)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(csv_path, CANDIDATE_HEADER, candidate_rows(cands))
    rle_path.write_text("".join(encode_rle(c) + "\n" for c in cands))


def _read_candidates(out: Path, hpf: str, band: int, plane: int) -> list[CandidateRegion] | None:
    _, rle_path = _cand_paths(out, hpf, band, plane)
    if not rle_path.is_file():
        return None
    return [decode_rle(line) for line in rle_path.read_text().splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, cfg: RunConfig) -> int:
    if not args.spec:
        raise UsageError("synth needs a spec file (--spec)")
    try:
        text = Path(args.spec).read_text()
    except OSError as exc:
        raise DataError(f"cannot read spec {args.spec}: {exc}") from exc
    spec, n = synth.parse_spec_text(text)
    specs = synth.dataset_specs(spec, n)
    out = Path(args.out or cfg.outDir)
    with _Stage("synth"):

        def one(s):
            synth.write_dataset([s], out)
            return s.hpf_id

        done = _pmap(one, specs, cfg.jobs)
    log.info("synth: wrote %d HPFs to %s", len(done), out)
    return 0


def cmd_focus(args, cfg: RunConfig) -> int:
    hpfs = _hpfs(cfg)
    out = _out(cfg)

    def one(hpf):
        stack, _ = _load(cfg, hpf)
        rows = []
        for b in range(stack.bands):
            r = rank_planes(stack, b, cfg.keepPlanes)
            for rank, (p, s) in enumerate(r.ordered()):
                rows.append([hpf, b, p, repr(s), rank, int(p in r.selected)])
        return rows

    with _Stage("focus"):
        results = _pmap(one, hpfs, cfg.jobs)
    rows = [r for rs in results for r in rs]
    _write_csv(out / "focus.csv", ["hpfId", "band", "plane", "score", "rank", "selected"], rows)
    log.info("focus: %d HPFs ranked", len(hpfs))
    return 0


def _sweep_planes(cfg: RunConfig, hpfs: list[str]) -> dict[int, list[int]]:
    """Per band, the keepPlanes planes with the highest mean gradient across HPFs."""
    totals = np.zeros((cfg.bands, cfg.planes))

    def one(hpf):
        stack, _ = _load(cfg, hpf)
        return np.array([[s for _, s in rank_planes(stack, b, 0).scores] for b in range(stack.bands)])

    for t in _pmap(one, hpfs, cfg.jobs):
        totals += t
    out = {}
    for b in range(cfg.bands):
        order = sorted(range(cfg.planes), key=lambda p: (-totals[b, p], p))
        out[b] = sorted(order[: cfg.keepPlanes])
    return out


def _detect_args(cfg: RunConfig) -> dict:
    return dict(min_area=cfg.minArea, max_area=cfg.maxArea, open_radius=cfg.openRadius)


def cmd_detect(args, cfg: RunConfig) -> int:
    hpfs = _hpfs(cfg)
    out = _out(cfg)
    if args.sweep:
        pairs = [(b, p) for b, ps in _sweep_planes(cfg, hpfs).items() for p in ps]
    else:
        pairs = [(cfg.band, cfg.plane)]

    def one(hpf):
        stack, gt = _load(cfg, hpf)
        counts = {}
        for b, p in pairs:
            cands = detect(stack, b, p, **_detect_args(cfg))
            _write_candidates(out, hpf, b, p, cands)
            m = match(cands, gt, cfg.toleranceMicrons, cfg.micronsPerPixel)
            counts[(b, p)] = (len(cands), len(m.tp_pairs), len(m.fp_ids), len(m.fn_ids))
        return counts

    with _Stage("detect"):
        results = _pmap(one, hpfs, cfg.jobs)
    rows = []
    for b, p in pairs if hpfs else []:
        n = sum(r[(b, p)][0] for r in results)
        tp, fp, fn = (sum(r[(b, p)][i] for r in results) for i in (1, 2, 3))
        rep = metrics(tp, fp, fn)
        rows.append([b, p, n, tp, fp, fn, repr(rep.tpr), repr(rep.ppv), repr(rep.f_measure)])
    rows.sort(key=lambda r: (-float(r[8]), r[0], r[1]))
    name = "sweep_ranking.csv" if args.sweep else "detection.csv"
    _write_csv(out / name, ["band", "plane", "candidates", "tp", "fp", "fn", "tpr", "ppv", "fMeasure"], rows)
    log.info("detect: %d HPFs, %d band/plane pairs", len(hpfs), len(pairs))
    return 0


def cmd_features(args, cfg: RunConfig) -> int:
    hpfs = _hpfs(cfg)
    out = _out(cfg)

    def one(hpf):
        stack, gt = _load(cfg, hpf)
        cands = _read_candidates(out, hpf, cfg.band, cfg.plane)
        if cands is None:
            cands = detect(stack, cfg.band, cfg.plane, **_detect_args(cfg))
            _write_candidates(out, hpf, cfg.band, cfg.plane, cands)
        m = match(cands, gt, cfg.toleranceMicrons, cfg.micronsPerPixel)
        positives = {cid for cid, _ in m.tp_pairs}
        has_gt = len(gt) > 0 or (Path(cfg.datasetRoot) / hpf / "mitosis.csv").is_file()
        vecs = []
        for c in cands:
            label = (MITOSIS if c.id in positives else NON_MITOSIS) if has_gt else -1
            vecs.append(feature_vector(stack, c, cfg.plane, cfg.feature_config, label))
        return vecs, len(gt), len(m.fn_ids)

    with _Stage("features"):
        results = _pmap(one, hpfs, cfg.jobs)
    fm = FeatureMatrix.from_vectors([v for vs, _, _ in results for v in vs])
    write_feature_matrix(fm, out / "features.csv")
    meta = {
        "candidates": len(fm),
        "gtTotal": sum(g for _, g, _ in results),
        "detectionFn": sum(f for _, _, f in results),
        "config": cfg.echo(),
    }
    _dump_json(meta, out / "features.meta.json")
    log.info("features: %d candidates x %d features", len(fm), fm.n_features)
    return 0


def _features_path(args, cfg: RunConfig) -> Path:
    return Path(args.features) if args.features else Path(cfg.outDir) / "features.csv"


def _read_features(args, cfg: RunConfig) -> tuple[FeatureMatrix, dict]:
    path = _features_path(args, cfg)
    if not path.is_file():
        raise DataError(f"feature matrix {path} not found; run `features` first")
    meta_path = path.with_name(path.stem + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.is_file() else {}
    return read_feature_matrix(path), meta


def _selection_record(sel, slots, cfg: RunConfig) -> dict:
    idx = [slots[i] for i in sel.indices]
    return {
        "indices": idx,
        "names": [SCHEMA_NAMES[i] for i in idx],
        "inconsistencyRate": sel.inconsistency_rate,
        "searchLog": [list(e) for e in sel.search_log],
        "config": cfg.echo(),
    }


def cmd_select(args, cfg: RunConfig) -> int:
    fm, _ = _read_features(args, cfg)
    out = _out(cfg)
    if np.any(fm.labels < 0):
        raise DataError("feature selection needs labelled rows")
    slots = feature_mode_slots(cfg.featureMode)
    with _Stage("select"):
        d, _ = discretize(fm.values[:, list(slots)], fm.labels, cfg.binCount)
        sel = select_features(d, backtrack=cfg.backtrack)
    _dump_json(_selection_record(sel, slots, cfg), out / "selection.json")
    log.info("select: %d of %d features, rate %.4f", len(sel.indices), len(slots), sel.inconsistency_rate)
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    fm, _ = _read_features(args, cfg)
    out = _out(cfg)
    pipe = cfg.pipeline
    with _Stage("train"):
        sel_path = out / "selection.json"
        if pipe.selects and sel_path.is_file():
            subset = json.loads(sel_path.read_text())["indices"]
            model = train(cfg.classifier, fm, subset, pipe.train_params)
        else:
            model, _ = fit_pipeline(fm, pipe)
    model = Model(model.kind, model.subset, model.params, {**model.config, "run": cfg.echo()})
    model.save(Path(args.model) if args.model else out / "model.json")
    log.info("train: %s on %d rows, %d features", cfg.classifier, len(fm), len(model.subset))
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    fm, meta = _read_features(args, cfg)
    out = _out(cfg)
    model_path = Path(args.model) if args.model else out / "model.json"
    if not model_path.is_file():
        raise DataError(f"model {model_path} not found; run `train` first")
    model = Model.load(model_path)
    with _Stage("eval"):
        preds = predict_matrix(model, fm)
    write_predictions(preds, out / "predictions.csv")
    report = {"model": str(model_path), "subset": list(model.subset), "config": cfg.echo()}
    if np.all(fm.labels >= 0) and len(fm):
        tp, fp, fn = outcome_counts(fm.labels, np.array([p.label for p in preds]))
        det_fn = int(meta.get("detectionFn", 0))
        rep = metrics(tp, fp, fn + det_fn, detection_fn=det_fn)
        report.update(rep.to_dict())
        _write_outcomes(out / "outcomes.csv", [(p.candidate_id, int(t), p.label, p.score) for p, t in zip(preds, fm.labels)])
        log.info("eval: tp=%d fp=%d fn=%d F=%.3f", rep.tp, rep.fp, rep.fn, rep.f_measure)
    _dump_json(report, out / "report.json")
    return 0


def _write_outcomes(path: Path, rows) -> None:
    def tag(truth, label):
        if label == MITOSIS:
            return "TP" if truth == MITOSIS else "FP"
        return "FN" if truth == MITOSIS else "TN"

    ordered = sorted(rows, key=lambda r: (-r[3], r[0]))
    _write_csv(
        path,
        ["candidateId", "truth", "label", "score", "outcome"],
        [[cid, LABEL_NAMES[t], LABEL_NAMES[lab], repr(s), tag(t, lab)] for cid, t, lab, s in ordered],
    )


def cmd_cv(args, cfg: RunConfig) -> int:
    fm, meta = _read_features(args, cfg)
    out = _out(cfg)
    det_fn = int(meta.get("detectionFn", 0))
    with _Stage("cv"):
        rep, outcomes = cross_validate(fm, cfg.folds, cfg.pipeline, cfg.seed, det_fn, cfg.echo())
    _dump_json(rep.to_dict(), out / "cv_report.json")
    _write_outcomes(out / "cv_outcomes.csv", [(o.candidate_id, o.truth, o.label, o.score) for o in outcomes])
    log.info("cv: tp=%d fp=%d fn=%d F=%.3f", rep.tp, rep.fp, rep.fn, rep.f_measure)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "focus": cmd_focus,
    "detect": cmd_detect,
    "features": cmd_features,
    "select": cmd_select,
    "train": cmd_train,
    "eval": cmd_eval,
    "cv": cmd_cv,
}

# flag -> RunConfig key
FLAG_KEYS = {
    "dataset": "datasetRoot",
    "out": "outDir",
    "band": "band",
    "plane": "plane",
    "keep_planes": "keepPlanes",
    "min_area": "minArea",
    "max_area": "maxArea",
    "tolerance_um": "toleranceMicrons",
    "feature_mode": "featureMode",
    "classifier": "classifier",
    "jobs": "jobs",
    "seed": "seed",
    "folds": "folds",
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="msmitosis", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value run configuration file")
        s.add_argument("--dataset", help="dataset root (datasetRoot)")
        s.add_argument("--out", help="output directory (outDir)")
        s.add_argument("--band", type=int)
        s.add_argument("--plane", type=int)
        s.add_argument("--keep-planes", type=int)
        s.add_argument("--min-area", type=int)
        s.add_argument("--max-area", type=int)
        s.add_argument("--tolerance-um", type=float)
        s.add_argument("--feature-mode")
        s.add_argument("--classifier")
        s.add_argument("--jobs", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--folds", type=int)
        s.add_argument("--features", help="feature matrix CSV (default <outDir>/features.csv)")
        s.add_argument("--model", help="model JSON (default <outDir>/model.json)")
        if name == "synth":
            s.add_argument("--spec", help="synthetic dataset spec file")
        if name == "detect":
            s.add_argument("--sweep", action="store_true", help="all bands x top keepPlanes planes")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        overrides = {key: getattr(args, flag) for flag, key in FLAG_KEYS.items()}
        if args.command == "synth":
            # synth writes to --out directly; it has no use for the run's outDir
            overrides.pop("outDir")
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, InvalidConfig) as exc:
        print(f"msmitosis: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, InfeasiblePlacement) as exc:
        print(f"msmitosis: data error: {exc}", file=sys.stderr)
        return 2
    except MitosisError as exc:
        print(f"msmitosis: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
