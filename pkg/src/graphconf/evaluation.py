"""Coverage, set-size and misalignment metrics for prediction sets.

Coverage and the empty-set rate are computed over the full test set. Set
sizes and relative reductions are computed only over covered examples,
where the truth is in the set.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .conformal import PredictionSet, _check_alpha
from .errors import DegenerateDenominator, EmptyResults, RangeError


@dataclass
class EvalSummary:
    """Aggregates for one method. Coverage is a fraction; reductions and the empty rate are percents.

    Size statistics are ``None`` when no example is covered.
    """

    coverage: float
    mean_size: Optional[float]
    median_size: Optional[float]
    mean_reduction_pct: Optional[float]
    median_reduction_pct: Optional[float]
    empty_rate_pct: float
    n_examples: int

    def as_dict(self) -> dict:
        return asdict(self)


def _nonempty(results: Sequence[PredictionSet]):
    if len(results) == 0:
        raise EmptyResults("no prediction sets to evaluate")


def lower_median(values: Iterable[float]) -> float:
    v = sorted(values)
    return v[(len(v) - 1) // 2]


def empirical_coverage(results: Sequence[PredictionSet]) -> float:
    _nonempty(results)
    if any(r.contains_truth is None for r in results):
        raise EmptyResults("every prediction set needs a contains_truth flag")
    return sum(1 for r in results if r.contains_truth) / len(results)


def reduction_pct(set_size: int, candidate_size: int) -> float:
    return (candidate_size - set_size) / candidate_size * 100.0


def set_size_and_reduction(results: Sequence[PredictionSet]):
    """``(mean_size, median_size, mean_reduction, median_reduction)`` over covered examples.

    All four are ``None`` when nothing is covered.
    """
    covered = [r for r in results if r.contains_truth]
    if not covered:
        return None, None, None, None
    sizes = [r.size for r in covered]
    reds = [reduction_pct(r.size, r.candidate_size) for r in covered]
    return (
        float(math.fsum(sizes) / len(sizes)),
        float(lower_median(sizes)),
        float(math.fsum(reds) / len(reds)),
        float(lower_median(reds)),
    )


def empty_rate(results: Sequence[PredictionSet]) -> float:
    _nonempty(results)
    return sum(1 for r in results if r.size == 0) / len(results)


def summarize(results: Sequence[PredictionSet]) -> EvalSummary:
    cov = empirical_coverage(results)
    mean_s, med_s, mean_r, med_r = set_size_and_reduction(results)
    return EvalSummary(cov, mean_s, med_s, mean_r, med_r, empty_rate(results) * 100.0, len(results))


def coverage_by_candidate_size(results: Sequence[PredictionSet], edges: Optional[Sequence[float]] = None):
    """Coverage per candidate-library-size bin as rows ``(bin_lo, bin_hi, coverage, count)``.

    Bins are half-open ``[lo, hi)``; the default edges are powers of two
    covering the observed sizes. Empty bins are skipped.
    """
    _nonempty(results)
    sizes = np.array([r.candidate_size for r in results])
    hits = np.array([bool(r.contains_truth) for r in results])
    if edges is None:
        top = int(math.ceil(math.log2(sizes.max() + 1)))
        edges = [2 ** i for i in range(top + 1)]
    rows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (sizes >= lo) & (sizes < hi)
        if mask.any():
            rows.append((lo, hi, float(hits[mask].mean()), int(mask.sum())))
    return rows


def top_k_star(ranked_hits: Sequence[Optional[int]], alpha: float, m: int) -> int:
    """Smallest ``k`` whose top-``k`` accuracy reaches ``1 - alpha``.

    Misses (``None``) count as rank ``m + 1``; returns ``m + 1`` when no
    ``k <= m`` reaches the target.
    """
    _check_alpha(alpha)
    if len(ranked_hits) == 0:
        raise EmptyResults("no ranks given")
    ranks = np.array([m + 1 if r is None else int(r) for r in ranked_hits])
    if np.any(ranks < 1) or np.any(ranks > m + 1):
        raise RangeError(f"ranks must lie in [1, {m}] or be missing")
    need = (1.0 - alpha) * ranks.size - 1e-9
    counts = np.cumsum(np.bincount(ranks, minlength=m + 2)[1:m + 1])
    hit = np.flatnonzero(counts >= need)
    return int(hit[0] + 1) if hit.size else m + 1


def misalignment_lower_bound(mean_set_size: float, k_star: int, m: int) -> float:
    """Lower bound on the fraction of inputs whose conformal set leaves the top-``k*`` prefix."""
    if m <= k_star:
        raise DegenerateDenominator(f"need m > k_star, got m={m}, k_star={k_star}")
    if k_star < 1 or mean_set_size > m:
        raise RangeError(f"need k_star >= 1 and mean_set_size <= m, got {k_star}, {mean_set_size}")
    return max(0.0, (mean_set_size - k_star) / (m - k_star))


def format_table(rows: List[tuple]) -> str:
    """Aligned text table of ``(label, EvalSummary)`` rows."""
    header = ("Method", "Coverage", "Mean size", "Median size", "Mean red. (%)", "Median red. (%)", "Empty (%)")

    def fmt(x, spec):
        return "-" if x is None else format(x, spec)

    body = [
        (
            label,
            fmt(s.coverage, ".3f"),
            fmt(s.mean_size, ".2f"),
            fmt(s.median_size, ".0f"),
            fmt(s.mean_reduction_pct, ".1f"),
            fmt(s.median_reduction_pct, ".1f"),
            fmt(s.empty_rate_pct, ".1f"),
        )
        for label, s in rows
    ]
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
