"""Split conformal calibration and candidate-library prediction sets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import AlphaOutOfRange, EmptyScores, RangeError
from .graph import Graph
from .zgw import DistanceConfig, score_many


@dataclass(frozen=True)
class CalibrationRecord:
    """Score of one calibration example plus its conditioning feature."""

    score: float
    feature: Tuple[float, ...] = ()
    candidate_size: int = 1
    id: Optional[str] = None

    def __post_init__(self):
        if not math.isfinite(self.score) or self.score < 0:
            raise RangeError(f"calibration score must be finite and nonnegative, got {self.score!r}")
        if self.candidate_size < 1:
            raise RangeError(f"candidate_size must be positive, got {self.candidate_size!r}")
        object.__setattr__(self, "feature", tuple(float(v) for v in self.feature))


@dataclass
class PredictionSet:
    threshold: float
    members: List[Hashable]
    candidate_size: int
    contains_truth: Optional[bool] = None
    example_id: Optional[str] = None

    @property
    def size(self) -> int:
        return len(self.members)


def _check_alpha(alpha: float):
    if not (0.0 < alpha < 1.0):
        raise AlphaOutOfRange(f"alpha must lie in (0, 1), got {alpha!r}")


def quantile_rank(n: int, alpha: float) -> int:
    """``ceil((n + 1)(1 - alpha))``, guarded against float noise in the product."""
    x = (n + 1) * (1.0 - alpha)
    k = math.ceil(x)
    if k - x > 1 - 1e-9:
        k -= 1
    return k


def conformal_quantile(scores: Sequence[float], alpha: float) -> float:
    """The ``ceil((n+1)(1-alpha))``-th smallest score, or ``inf`` when that rank exceeds ``n``.

    >>> conformal_quantile(range(1, 11), 0.1)
    10.0
    >>> conformal_quantile([3.0], 0.1)
    inf
    """
    _check_alpha(alpha)
    s = np.array(scores, dtype=float).reshape(-1)
    if s.size == 0:
        raise EmptyScores("no calibration scores")
    if not np.all(np.isfinite(s)):
        raise RangeError("calibration scores must be finite")
    k = quantile_rank(s.size, alpha)
    if k > s.size:
        return math.inf
    return float(np.sort(s, kind="stable")[k - 1])


def calibrate_cp(records: Sequence[CalibrationRecord], alpha: float) -> float:
    """Global split-conformal threshold from the calibration scores."""
    return conformal_quantile([r.score for r in records], alpha)


def select_members(ids: Sequence[Hashable], scores: Sequence[float], threshold: float) -> List[Hashable]:
    """Ids whose score is at most ``threshold`` (ties included), in library order."""
    if threshold == math.inf:
        return list(ids)
    return [i for i, s in zip(ids, scores) if s <= threshold]


Threshold = Union[float, Callable[[Graph, int], float]]


def predict_set(
    prediction: Graph,
    library: Sequence[Tuple[Hashable, Graph]],
    threshold: Threshold,
    cfg: DistanceConfig,
    truth_id: Optional[Hashable] = None,
    threads: Optional[int] = None,
) -> PredictionSet:
    """Candidates of ``library`` that fall inside the conformal ball around ``prediction``.

    ``threshold`` is either a number or a callable ``(prediction, library_size)
    -> float`` for input-dependent thresholds. An infinite threshold keeps the
    whole library without scoring it.
    """
    if len(library) == 0:
        raise EmptyScores("candidate library is empty")
    tau = threshold(prediction, len(library)) if callable(threshold) else float(threshold)
    ids = [cid for cid, _ in library]
    if tau == math.inf:
        members = list(ids)
    else:
        scores = score_many(prediction, [g for _, g in library], cfg, threads=threads)
        members = select_members(ids, scores, tau)
    contains = None if truth_id is None else truth_id in members
    return PredictionSet(tau, members, len(library), contains)


def coverage_bound_under_incomplete_library(alpha: float, miss_prob: float) -> float:
    """Marginal coverage floor when the truth may be missing from the library."""
    _check_alpha(alpha)
    if not (0.0 <= miss_prob <= 1.0):
        raise RangeError(f"miss_prob must lie in [0, 1], got {miss_prob!r}")
    return max(0.0, (1.0 - alpha) - miss_prob)
