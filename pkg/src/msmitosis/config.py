"""Run configuration: a flat ``key = value`` file whose keys mirror ``RunConfig``.

Example::

    datasetRoot = data/synth
    outDir = runs/synth
    band = 8
    plane = 6
    featureMode = multispectralOnly
    classifier = bayes
    seed = 7

Unknown keys are rejected. Command-line flags override file values.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .classify import KINDS, TrainParams
from .errors import InvalidConfig
from .evaluate import PipelineConfig
from .features import FEATURE_MODES, FeatureConfig

# execution-only keys; they never change results so reports leave them out
_NOT_ECHOED = ("jobs",)


@dataclass(frozen=True)
class RunConfig:
    datasetRoot: str = ""
    outDir: str = "out"
    bands: int = 10
    planes: int = 17
    band: int = 8
    plane: int = 6
    keepPlanes: int = 6
    minArea: int = 200
    maxArea: int = 5405
    openRadius: int = 1
    toleranceMicrons: float = 5.0
    micronsPerPixel: float = 0.430
    glcmLevels: int = 16
    textureMargin: int = 5
    classifier: str = "bayes"
    featureMode: str = "all"
    select: bool = False
    binCount: int = 10
    backtrack: int = 5
    folds: int = 5
    minNodeSize: int = 15
    svmC: float = 1.0
    svmBias: float = 1.0
    svmEps: float = 0.01
    undersample: bool = False
    seed: int = 0
    jobs: int = 1

    def validate(self) -> "RunConfig":
        if self.classifier not in KINDS:
            raise InvalidConfig(f"classifier must be one of {KINDS}, got {self.classifier!r}")
        if self.featureMode not in FEATURE_MODES:
            raise InvalidConfig(f"featureMode must be one of {FEATURE_MODES}, got {self.featureMode!r}")
        if not 0 <= self.band < self.bands or not 0 <= self.plane < self.planes:
            raise InvalidConfig("band/plane out of range")
        if not 0 <= self.keepPlanes <= self.planes:
            raise InvalidConfig("keepPlanes must be within [0, planes]")
        if self.minArea > self.maxArea:
            raise InvalidConfig("minArea must not exceed maxArea")
        if self.toleranceMicrons <= 0 or self.micronsPerPixel <= 0:
            raise InvalidConfig("toleranceMicrons and micronsPerPixel must be positive")
        if self.folds < 2:
            raise InvalidConfig("folds must be >= 2")
        if self.jobs < 1:
            raise InvalidConfig("jobs must be >= 1")
        return self

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in _NOT_ECHOED}

    @property
    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(self.glcmLevels, self.textureMargin)

    @property
    def pipeline(self) -> PipelineConfig:
        params = TrainParams(
            min_node_size=self.minNodeSize,
            svm_c=self.svmC,
            svm_bias=self.svmBias,
            svm_eps=self.svmEps,
            undersample=self.undersample,
            seed=self.seed,
        )
        return PipelineConfig(self.classifier, self.featureMode, self.select, self.binCount, self.backtrack, params)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw) -> object:
    kind = _TYPES[key]
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise InvalidConfig(f"bad value for {key}: {raw!r}") from exc
    return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {line_no}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise InvalidConfig(f"line {line_no}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = _coerce(k, v)
    return replace(RunConfig(), **values).validate()


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.echo().items())
