"""Mitosis detection in multispectral, multi-focal histopathology stacks."""

from .classify import Model, Prediction, TrainParams, predict, train
from .detect import CandidateRegion, detect, extract_candidates, morphological_cleanup, otsu_threshold
from .evaluate import EvaluationReport, PipelineConfig, cross_validate, match, metrics
from .features import SCHEMA, FeatureMatrix, FeatureVector, feature_vector
from .focus import average_gradient, masked_histogram, rank_planes
from .selection import discretize, inconsistency_rate, select_features
from .stack import GrayImage, GroundTruth, MultispectralHPF, load_ground_truth, load_stack
from .synth import SynthSpec, generate

__version__ = "0.1.0"
