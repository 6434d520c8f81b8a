"""End-to-end experiment: score a dataset, calibrate CP or SCQR, build and evaluate sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .conformal import CalibrationRecord, PredictionSet, calibrate_cp, select_members
from .errors import ConfigError
from .evaluation import EvalSummary, summarize
from .graph import Graph
from .scqr import ScqrModel, TrainingConfig, calibrate_scqr, scqr_threshold, split_records
from .synth import Dataset, DatasetExample, SynthConfig, generate_dataset, substream
from .zgw import DistanceConfig, score, score_many

FEATURE_MAPS = ("candidate_size", "prediction_summary")


def feature_vector(kind: str, prediction: Graph, candidate_size: int) -> Tuple[float, ...]:
    """Conditioning feature of one input.

    ``candidate_size`` is the library size. ``prediction_summary`` is a
    generic vector computed from the predicted graph (node count, edge
    count and color counts), standing in for a learned input embedding.
    """
    if kind == "candidate_size":
        return (float(candidate_size),)
    if kind == "prediction_summary":
        edges = float(np.triu(prediction.adjacency, 1).sum())
        return (float(prediction.n), edges, *map(float, prediction.features.sum(axis=0)))
    raise ConfigError(f"feature map must be one of {FEATURE_MAPS}, got {kind!r}")


@dataclass
class TestItem:
    example_id: str
    truth_id: str
    candidate_ids: List[str]
    scores: np.ndarray
    feature: Tuple[float, ...]

    @property
    def truth_score(self) -> float:
        return float(self.scores[self.candidate_ids.index(self.truth_id)])


@dataclass
class ScoredDataset:
    calibration: List[CalibrationRecord]
    test: List[TestItem]


def score_dataset(ds: Dataset, cfg: DistanceConfig, feature: str = "candidate_size",
                  threads: Optional[int] = None) -> ScoredDataset:
    """Truth scores for calibration examples; every candidate's score for test examples."""
    g = ds.graphs
    cal = []
    for e in ds.split("cal"):
        pred = g[e.prediction_id]
        s = score(pred, g[e.truth_id], cfg)
        cal.append(CalibrationRecord(s, feature_vector(feature, pred, e.candidate_size), e.candidate_size, e.id))
    test = []
    for e in ds.split("test"):
        pred = g[e.prediction_id]
        scores = score_many(pred, [g[c] for c in e.candidate_ids], cfg, threads=threads)
        test.append(TestItem(e.id, e.truth_id, list(e.candidate_ids), scores,
                             feature_vector(feature, pred, e.candidate_size)))
    return ScoredDataset(cal, test)


def sets_from_thresholds(items: Sequence[TestItem], thresholds: Sequence[float]) -> List[PredictionSet]:
    out = []
    for item, tau in zip(items, thresholds):
        members = select_members(item.candidate_ids, item.scores, tau)
        out.append(PredictionSet(tau, members, len(item.candidate_ids), item.truth_id in members, item.example_id))
    return out


def fit_scqr(records: Sequence[CalibrationRecord], alpha: float, train_cfg: TrainingConfig,
             split_seed: int) -> ScqrModel:
    """Split the calibration records in two halves (unless ``psi == 0``) and calibrate."""
    if train_cfg.kind == "zero":
        return calibrate_scqr([], list(records), alpha, train_cfg)
    train, cal = split_records(list(records), split_seed)
    return calibrate_scqr(train, cal, alpha, train_cfg)


def split_seed(seed: int) -> int:
    return int(substream(seed, "split").integers(0, 2 ** 63))


@dataclass
class MethodResult:
    sets: List[PredictionSet]
    summary: EvalSummary
    model: object = None


def run_cp(scored: ScoredDataset, alpha: float) -> MethodResult:
    tau = calibrate_cp(scored.calibration, alpha)
    sets = sets_from_thresholds(scored.test, [tau] * len(scored.test))
    return MethodResult(sets, summarize(sets), tau)


def run_scqr(scored: ScoredDataset, alpha: float, train_cfg: Optional[TrainingConfig] = None,
             seed: int = 0) -> MethodResult:
    model = fit_scqr(scored.calibration, alpha, train_cfg or TrainingConfig(), split_seed(seed))
    thresholds = [scqr_threshold(model, item.feature) for item in scored.test]
    sets = sets_from_thresholds(scored.test, thresholds)
    return MethodResult(sets, summarize(sets), model)


def run_experiment(synth: SynthConfig, dist: DistanceConfig, alpha: float = 0.1,
                   methods: Sequence[str] = ("cp",), train_cfg: Optional[TrainingConfig] = None,
                   feature: str = "candidate_size") -> Dict[str, MethodResult]:
    """Generate a corpus, score it once and run each requested method on the same scores."""
    ds = generate_dataset(synth)
    scored = score_dataset(ds, dist, feature)
    out = {}
    for m in methods:
        if m == "cp":
            out[m] = run_cp(scored, alpha)
        elif m == "scqr":
            out[m] = run_scqr(scored, alpha, train_cfg, synth.seed)
        else:
            raise ConfigError(f"unknown method {m!r}")
    return out
