import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphconf.conformal import PredictionSet
from graphconf.errors import AlphaOutOfRange, DegenerateDenominator, EmptyResults, RangeError
from graphconf.evaluation import (
    coverage_by_candidate_size,
    empirical_coverage,
    empty_rate,
    format_table,
    lower_median,
    misalignment_lower_bound,
    reduction_pct,
    set_size_and_reduction,
    summarize,
    top_k_star,
)


def ps(size, lib, hit):
    members = [f"c{i}" for i in range(size)]
    return PredictionSet(0.0, members, lib, hit)


def test_coverage_examples():
    assert empirical_coverage([ps(1, 5, True)] * 4) == 1.0
    assert empirical_coverage([ps(0, 5, False)] * 4) == 0.0
    assert empirical_coverage([ps(1, 5, True)] * 9 + [ps(1, 5, False)]) == pytest.approx(0.9)
    with pytest.raises(EmptyResults):
        empirical_coverage([])
    with pytest.raises(EmptyResults):
        empirical_coverage([ps(1, 5, None)])


def test_size_and_reduction_examples():
    assert set_size_and_reduction([ps(5, 5, True), ps(3, 3, True)])[2:] == (0.0, 0.0)
    assert set_size_and_reduction([ps(1, 100, True)] * 7) == (1.0, 1.0, 99.0, 99.0)
    assert set_size_and_reduction([ps(0, 4, False)]) == (None, None, None, None)
    # uncovered examples are excluded from size statistics
    assert set_size_and_reduction([ps(2, 4, True), ps(4, 4, False)])[0] == 2.0


def test_lower_median():
    assert lower_median([4, 1, 3, 2]) == 2
    assert lower_median([5]) == 5
    assert lower_median([3, 1, 2]) == 2


def test_empty_rate_examples():
    assert empty_rate([ps(1, 3, True)] * 5) == 0
    assert empty_rate([ps(0, 3, False)] * 89 + [ps(1, 3, True)] * 911) == pytest.approx(0.089)
    assert empty_rate([ps(0, 3, False)] * 3) == 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 50), st.integers(0, 50), st.booleans()), min_size=1, max_size=40))
def test_summary_invariants(rows):
    results = []
    for lib, size, hit in rows:
        size = min(size, lib)
        hit = hit and size > 0
        results.append(ps(size, lib, hit))
    s = summarize(results)
    assert 0 <= s.coverage <= 1
    assert s.empty_rate_pct / 100 <= 1 - s.coverage + 1e-12
    for r in results:
        red = reduction_pct(r.size, r.candidate_size)
        assert 0 <= red <= 100
        assert (red == 100) == (r.size == 0)
    if s.mean_size is not None:
        assert s.median_size >= 0


def test_coverage_bins():
    rows = coverage_by_candidate_size([ps(1, 1, True), ps(1, 3, False), ps(1, 3, True), ps(1, 9, True)])
    assert rows == [(1, 2, 1.0, 1), (2, 4, 0.5, 2), (8, 16, 1.0, 1)]


def test_top_k_star_examples():
    assert top_k_star([1] * 20, 0.1, 10) == 1
    assert top_k_star([1] * 20, 0.5, 10) == 1
    assert top_k_star(list(range(1, 11)), 0.1, 10) == 9
    assert top_k_star([None] * 5, 0.1, 10) == 11
    assert top_k_star([11] * 5, 0.1, 10) == 11
    with pytest.raises(AlphaOutOfRange):
        top_k_star([1], 1.0, 10)
    with pytest.raises(RangeError):
        top_k_star([0], 0.1, 10)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.none(), st.integers(1, 12)), min_size=1, max_size=50), st.floats(0.01, 0.99))
def test_top_k_star_matches_scan(ranks, alpha):
    m = 12
    r = [m + 1 if x is None else x for x in ranks]
    expected = next((k for k in range(1, m + 1) if sum(x <= k for x in r) >= (1 - alpha) * len(r) - 1e-9), m + 1)
    assert top_k_star(ranks, alpha, m) == expected


def test_misalignment_examples():
    assert misalignment_lower_bound(38, 5, 256) == pytest.approx(33 / 251)
    assert abs(misalignment_lower_bound(38, 5, 256) - 0.1315) <= 0.0005
    assert misalignment_lower_bound(5, 5, 256) == 0.0
    assert misalignment_lower_bound(256, 5, 256) == 1.0
    assert misalignment_lower_bound(2, 5, 256) == 0.0
    with pytest.raises(DegenerateDenominator):
        misalignment_lower_bound(3, 10, 10)
    with pytest.raises(RangeError):
        misalignment_lower_bound(300, 5, 256)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 100), st.floats(0, 100), st.integers(1, 99), st.integers(1, 99))
def test_misalignment_monotone(e1, e2, k1, k2):
    m = 100
    lo, hi = sorted((e1, e2))
    assert misalignment_lower_bound(lo, k1, m) <= misalignment_lower_bound(hi, k1, m)
    ka, kb = sorted((k1, k2))
    assert misalignment_lower_bound(e1, kb, m) <= misalignment_lower_bound(e1, ka, m)


def test_format_table_columns():
    s = summarize([ps(1, 100, True)] * 9 + [ps(0, 100, False)])
    text = format_table([("CP", s)])
    assert text.splitlines()[0].split()[0] == "Method"
    assert "0.900" in text and "99.0" in text and "10.0" in text
