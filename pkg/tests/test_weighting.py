import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retropredict.domain import parse_mutation
from retropredict.exceptions import DegenerateDenominator
from retropredict.ingest import SCALE_NORM, StanfordScoreTable
from retropredict.persistence import SigmoidParams
from retropredict.weighting import mutation_weight, normalize_areas, stanford_component, vl_area

M = parse_mutation("RTM184V")


def _const(copies):
    return [0, 200], [copies, copies]


@pytest.mark.parametrize("copies,expected", [(50, 0.0), (500, 60.0), (20, 60 * math.log10(20 / 50))])
def test_constant_curves(copies, expected):
    dates, values = _const(copies)
    assert vl_area(dates, values, 100) == pytest.approx(expected, abs=1e-12)


def test_floor_example_value():
    assert vl_area(*_const(20), 100) == pytest.approx(-23.876, abs=1e-3)


def test_area_needs_bracketing_vls():
    with pytest.raises(ValueError):
        vl_area([100, 200], [500, 500], 100)
    with pytest.raises(ValueError):
        vl_area([], [], 100)


def test_area_holds_ends_constant():
    # a single VL on each side, far outside the window
    assert vl_area([0, 1000], [500, 500], 500) == pytest.approx(60.0)


def test_area_linear_segment():
    # log10 ramps from 2 to 4 over days 70..130; integral over 70..130 of (v - log10 50)
    area = vl_area([70, 130], [100, 10000], 100)
    assert area == pytest.approx(60 * (3 - math.log10(50)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_area_invariant_under_sample_doubling(seed):
    rng = np.random.default_rng(seed)
    dates = np.unique(rng.integers(0, 400, 12))
    values = 10 ** rng.uniform(1, 6, dates.size)
    grt = int(rng.integers(dates[0] + 1, dates[-1]))
    mid = (dates[:-1] + dates[1:]) / 2.0
    logs = np.log10(values)
    dense_dates = np.sort(np.concatenate([dates, mid]))
    dense_values = 10 ** np.interp(dense_dates, dates, logs)
    assert abs(vl_area(dates, values, grt) - vl_area(dense_dates, dense_values, grt)) < 1e-9


def test_normalize_examples():
    raw = {(M, 0): 10.0, (M, 1): -5.0, (M, 2): 20.0}
    norm, scales = normalize_areas(raw)
    assert [norm[(M, i)] for i in range(3)] == [0.5, -0.25, 1.0]
    assert scales == {M: 20.0}


def test_normalize_all_zero():
    norm, scales = normalize_areas({(M, 0): 0.0, (M, 1): 0.0})
    assert set(norm.values()) == {0.0} and scales == {M: 1.0}


def test_normalize_with_stored_scale_clamps():
    norm, _ = normalize_areas({(M, 0): 40.0}, {M: 20.0})
    assert norm[(M, 0)] == 1.0


def test_stanford_examples():
    table = StanfordScoreTable({(M, "3TC"): 60, (M, "AZT"): -10})
    assert stanford_component(M, ["3TC", "AZT"], table) == pytest.approx(-0.077615, abs=1e-6)
    assert stanford_component(M, ["3TC"], table) == pytest.approx(0.465690, abs=1e-6)
    assert stanford_component(M, ["DTG", "BIC"], table) == 0.0
    assert stanford_component(M, ["3TC", "DTG"], table) == 0.0


def test_stanford_same_gene_option():
    table = StanfordScoreTable({(M, "3TC"): 60})
    same = stanford_component(M, ["3TC", "DTG"], table, min_over_same_gene_class_only=True)
    assert same == pytest.approx(60 / SCALE_NORM)
    assert stanford_component(M, ["DTG"], table, min_over_same_gene_class_only=True) == 0.0


def test_weight_examples():
    p0 = SigmoidParams(0.0, 0.0)
    assert mutation_weight(p0, 0, 0.0, 0.3).value == 0.0
    assert mutation_weight(p0, 0, 1.0, 0.0).value == pytest.approx(0.5)
    assert mutation_weight(SigmoidParams(-10.0, 0.0), 0, 1.0, 0.465690).value == 1.0
    p = SigmoidParams(0.0, 0.01)
    vals = [mutation_weight(p, t, 1.0, 0.0).value for t in (0, 100, 1000)]
    assert vals == pytest.approx([0.5, 0.2689414, 4.5397868e-5], rel=1e-6)


def test_weight_rejects_negative_time():
    with pytest.raises(ValueError):
        mutation_weight(SigmoidParams(0.0, 0.0), -1, 1.0, 0.0)


def test_degenerate_denominator_guard():
    class Raw:
        alpha, beta = -800.0, 0.0

    with pytest.raises(DegenerateDenominator):
        mutation_weight(Raw, 0, 1.0, 100.0)


_params = st.tuples(st.floats(-20, 20), st.floats(0, 1))
_S = st.floats(-15 / SCALE_NORM, 60 / SCALE_NORM)


@settings(max_examples=300, deadline=None)
@given(_params, st.integers(0, 5000), st.floats(-1, 1), _S)
def test_weight_bounded(ab, t, area, s):
    w = mutation_weight(SigmoidParams(*ab), t, area, s).value
    assert -1.0 <= w <= 1.0
    if area == 0:
        assert w == 0.0


@settings(max_examples=300, deadline=None)
@given(st.floats(-20, 20), st.floats(1e-4, 1), st.integers(0, 3000), st.integers(1, 3000), st.floats(0.01, 1), _S)
def test_weight_non_increasing_in_t(a, b, t, dt, area, s):
    p = SigmoidParams(a, b)
    assert mutation_weight(p, t + dt, area, s).value <= mutation_weight(p, t, area, s).value


@settings(max_examples=300, deadline=None)
@given(_params, st.integers(0, 3000), st.floats(0.01, 1), _S, _S)
def test_weight_non_decreasing_in_s(ab, t, area, s1, s2):
    p = SigmoidParams(*ab)
    lo, hi = sorted((s1, s2))
    assert mutation_weight(p, t, area, lo).value <= mutation_weight(p, t, area, hi).value
