import hashlib
import json
from pathlib import Path

import pytest

from msmitosis.cli import main
from msmitosis.features import read_feature_matrix


SMALL = """\
width = 256
height = 256
n_mitoses = 6
n_distractors = 8
mitosis_area_range = 300, 700
distractor_area_range = 250, 700
hpfs = 3
seed = {seed}
"""


def digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(root.rglob("*")) if p.is_file()}


def run(*argv) -> int:
    return main([str(a) for a in argv])


def make_dataset(tmp: Path, seed: int) -> Path:
    spec = tmp / f"spec{seed}.txt"
    spec.write_text(SMALL.format(seed=seed))
    data = tmp / f"data{seed}"
    assert run("synth", "--spec", spec, "--out", data) == 0
    return data


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    data = make_dataset(tmp, 5)
    out = tmp / "run"
    assert run("detect", "--dataset", data, "--out", out) == 0
    assert run("features", "--dataset", data, "--out", out) == 0
    return tmp, data, out


def test_synth_writes_full_layout(workspace):
    _, data, _ = workspace
    hpfs = sorted(p.name for p in data.iterdir())
    assert hpfs == ["hpf00", "hpf01", "hpf02"]
    files = list((data / "hpf00").glob("band*_plane*.png"))
    assert len(files) == 170
    assert len((data / "hpf00" / "mitosis.csv").read_text().splitlines()) == 6


def test_synth_is_byte_identical(workspace, tmp_path):
    tmp, data, _ = workspace
    again = tmp_path / "again"
    assert run("synth", "--spec", tmp / "spec5.txt", "--out", again) == 0
    assert digest(again) == digest(data)


def test_synth_rejects_bad_specs(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("colour = blue\n")
    assert run("synth", "--spec", bad, "--out", tmp_path / "x") == 2
    crowded = tmp_path / "crowded.txt"
    crowded.write_text("width = 64\nheight = 64\nn_mitoses = 40\nmitosis_area_range = 900, 1000\n")
    assert run("synth", "--spec", crowded, "--out", tmp_path / "y") != 0
    assert run("synth", "--out", tmp_path / "z") == 1


def test_features_matrix_shape(workspace):
    _, _, out = workspace
    fm = read_feature_matrix(out / "features.csv")
    assert fm.values.shape[1] == 235 and len(fm) > 0
    meta = json.loads((out / "features.meta.json").read_text())
    assert meta["candidates"] == len(fm) and meta["gtTotal"] == 18
    assert (fm.labels == 1).sum() + meta["detectionFn"] == 18
    assert "jobs" not in meta["config"]


def test_detection_report(workspace):
    _, _, out = workspace
    lines = (out / "detection.csv").read_text().splitlines()
    assert lines[0] == "band,plane,candidates,tp,fp,fn,tpr,ppv,fMeasure"
    assert lines[1].startswith("8,6,")
    assert len(list((out / "candidates").glob("*.rle"))) == 3


def test_focus_and_missing_dataset(workspace, tmp_path):
    _, data, _ = workspace
    assert run("focus", "--dataset", data, "--out", tmp_path, "--keep-planes", 3) == 0
    rows = (tmp_path / "focus.csv").read_text().splitlines()
    assert rows[0] == "hpfId,band,plane,score,rank,selected"
    assert len(rows) == 1 + 3 * 10 * 17
    first = [r.split(",") for r in rows[1:] if r.split(",")[4] == "0"]
    assert {r[2] for r in first} == {"6"}
    assert run("focus", "--dataset", tmp_path / "nowhere", "--out", tmp_path) == 2


def test_sweep_on_empty_root(tmp_path):
    (tmp_path / "empty").mkdir()
    assert run("detect", "--sweep", "--dataset", tmp_path / "empty", "--out", tmp_path / "o") == 0
    assert (tmp_path / "o" / "sweep_ranking.csv").read_text().splitlines() == [
        "band,plane,candidates,tp,fp,fn,tpr,ppv,fMeasure"
    ]


def test_sweep_ranks_pairs(workspace, tmp_path):
    _, data, _ = workspace
    assert run("detect", "--sweep", "--keep-planes", 2, "--dataset", data, "--out", tmp_path) == 0
    rows = [r.split(",") for r in (tmp_path / "sweep_ranking.csv").read_text().splitlines()[1:]]
    assert len(rows) == 20
    fs = [float(r[8]) for r in rows]
    assert fs == sorted(fs, reverse=True)


def test_select_train_eval_cv(workspace, tmp_path):
    _, _, out = workspace
    feats = out / "features.csv"
    common = ["--features", feats, "--out", tmp_path]
    assert run("select", *common) == 0
    sel = json.loads((tmp_path / "selection.json").read_text())
    assert sel["indices"] and len(sel["names"]) == len(sel["indices"])
    assert run("train", *common, "--feature-mode", "selected") == 0
    model = json.loads((tmp_path / "model.json").read_text())
    assert model["subset"] == sel["indices"]
    assert run("eval", *common) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert {"tp", "fp", "fn", "fMeasure", "detectionFn"} <= set(rep)
    assert run("cv", *common, "--folds", 3, "--classifier", "tree") == 0
    cv = json.loads((tmp_path / "cv_report.json").read_text())
    assert len(cv["perFold"]) == 3 and cv["config"]["classifier"] == "tree"


def test_cv_is_deterministic(workspace, tmp_path):
    _, _, out = workspace
    args = ("cv", "--features", out / "features.csv", "--out", tmp_path, "--seed", 3)
    assert run(*args) == 0
    first = digest(tmp_path)
    assert run(*args) == 0
    assert digest(tmp_path) == first


def test_multispectral_beats_white_band_on_fresh_data(workspace, tmp_path):
    tmp, data, out = workspace
    other = make_dataset(tmp, 6)
    held = tmp_path / "held"
    assert run("features", "--dataset", other, "--out", held) == 0
    scores = {}
    for mode in ("whiteBandOnly", "multispectralOnly"):
        d = tmp_path / mode
        assert run("train", "--features", out / "features.csv", "--out", d, "--feature-mode", mode) == 0
        assert run("eval", "--features", held / "features.csv", "--model", d / "model.json", "--out", d) == 0
        scores[mode] = json.loads((d / "report.json").read_text())["fMeasure"]
    assert scores["multispectralOnly"] > scores["whiteBandOnly"]


def test_usage_errors_exit_one(workspace, tmp_path):
    _, _, out = workspace
    assert run("cv", "--features", out / "features.csv", "--out", tmp_path, "--classifier", "forest") == 1
    assert run("cv", "--features", out / "features.csv", "--out", tmp_path, "--folds", 1) == 1
    cfg = tmp_path / "run.cfg"
    cfg.write_text("flavour = x\n")
    assert run("cv", "--config", cfg) == 1
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 1


def test_missing_inputs_exit_two(tmp_path):
    assert run("cv", "--out", tmp_path) == 2
    assert run("eval", "--features", tmp_path / "none.csv", "--out", tmp_path) == 2


def test_config_file_and_flag_precedence(workspace, tmp_path):
    _, _, out = workspace
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"outDir = {tmp_path / 'fromfile'}\nclassifier = tree\nfolds = 4\n")
    assert run("cv", "--config", cfg, "--features", out / "features.csv", "--classifier", "bayes") == 0
    rep = json.loads((tmp_path / "fromfile" / "cv_report.json").read_text())
    assert rep["config"]["classifier"] == "bayes" and rep["config"]["folds"] == 4
