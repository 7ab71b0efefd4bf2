from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acidlab.errors import UndefinedThreshold
from acidlab.model import ModelParams, StateKind
from acidlab.regimes import (
    CaseTag,
    classify_global,
    d1_lower_ordering_bound,
    d1h_alternate,
    theorem_cases,
    thresholds,
)

mp.mp.dps = 50


def hp_thresholds(a1, a2, d1):
    """High-precision oracle straight from the closed forms."""
    a1, a2, d1 = mp.mpf(a1), mp.mpf(a2), mp.mpf(d1)
    s1, s12, s2 = mp.sqrt(1 - a1), mp.sqrt(1 - a1 * a2), mp.sqrt(1 - a2)
    d1h = ((1 + s12) / (1 - s1)) ** 2 - a2
    d2h = (a1 * (a2 + d1) / (1 + s12) + 1 + s12) ** 2 / 4 - 1
    d1c = a1 * a2 / (1 - s1) ** 2 - a2
    d2c = 4 / (1 - s1 + a1 * a2 / ((1 - s1) * (a2 + d1))) ** 2 - 1
    d1r = (1 + s2) ** 2 - a2
    d2r = a1 / 4 * ((a2 + d1) / (1 + s2) + 1 + s2) ** 2 - a1
    return dict(d1h=d1h, d2h=d2h, d1c=d1c, d2c=d2c, d1r=d1r, d2r=d2r)


def P(a1, a2, d1, q):
    return ModelParams.from_ratio(a1, a2, d1, q)


class TestThresholds:
    def test_examples(self):
        th = thresholds(0.5, 0.5, 0.5)
        assert th.d1c == pytest.approx(2.414213562373095, rel=1e-12)
        assert th.d1h == pytest.approx(40.08975875315764, rel=1e-12)
        assert round(th.d1h, 2) == 40.09

    def test_d1r_zero_at_a2_one(self):
        assert thresholds(0.5, 1.0, 0.5).d1r == 0.0

    @pytest.mark.parametrize(
        "a1, a2, missing",
        [
            (1.5, 0.5, {"d1h", "d1c", "d2c"}),
            (0.5, 3.0, {"d1h", "d2h", "d1r", "d2r"}),
            (2.0, 2.0, {"d1h", "d2h", "d1c", "d2c", "d1r", "d2r"}),
        ],
    )
    def test_undefined_flags(self, a1, a2, missing):
        th = thresholds(a1, a2, 1.0)
        assert set(th.undefined()) == missing
        assert all(v is None or math.isfinite(v) for v in th.as_dict().values())

    @given(
        a1=st.floats(0.01, 0.99), a2=st.floats(0.01, 0.99), d1=st.floats(0.01, 50.0)
    )
    @settings(max_examples=200, deadline=None)
    def test_against_high_precision(self, a1, a2, d1):
        th = thresholds(a1, a2, d1).as_dict()
        for k, v in hp_thresholds(a1, a2, d1).items():
            assert th[k] == pytest.approx(float(v), rel=1e-10, abs=1e-12)

    @pytest.mark.parametrize("a1", [1e-6, 1e-4])
    def test_small_a1_no_cancellation(self, a1):
        th = thresholds(a1, 0.5, 1.0)
        assert th.d1c == pytest.approx(float(hp_thresholds(a1, 0.5, 1.0)["d1c"]), rel=1e-10)


class TestHyperbola:
    @given(st.floats(0.05, 0.95))
    def test_reciprocal_pairs_on_curve(self, a1):
        th = thresholds(a1, 1.0 / a1, 1.0)
        assert th.d1h is not None and th.d2h is not None
        assert th.d1c == pytest.approx(th.d1h, rel=1e-13)

    def test_band_is_a_few_ulps(self):
        eps = np.finfo(float).eps
        assert thresholds(0.5, (1 - 2 * eps) / 0.5, 1.0).d1h == thresholds(0.5, 2.0, 1.0).d1h
        assert thresholds(0.5, (1 - 1e-12) / 0.5, 1.0).d1h != thresholds(0.5, 2.0, 1.0).d1h
        assert thresholds(0.5, (1 + 1e-12) / 0.5, 1.0).d1h is None


class TestAlternateForm:
    def test_matches_primary(self):
        assert d1h_alternate(0.5, 0.5) == pytest.approx(thresholds(0.5, 0.5, 1.0).d1h, rel=1e-12)

    def test_coincides_with_d1c_on_hyperbola(self):
        v = d1h_alternate(0.5, 2.0)
        assert v == pytest.approx(9.65685424949238, rel=1e-12)
        assert thresholds(0.5, 2.0, 1.0).d1c == pytest.approx(v, rel=1e-12)

    def test_a1_limit(self):
        assert d1h_alternate(1.0, 0.5) == pytest.approx(thresholds(1.5, 0.5, 1.0).d1r, rel=1e-12)
        assert d1h_alternate(1.0 - 1e-12, 0.5) == pytest.approx(2.414213562373095, rel=1e-5)

    @pytest.mark.parametrize("a1, a2", [(1.2, 0.5), (0.5, 2.5)])
    def test_undefined(self, a1, a2):
        with pytest.raises(UndefinedThreshold):
            d1h_alternate(a1, a2)


class TestOrderingAndMonotonicity:
    @given(a1=st.floats(0.01, 0.99), a2=st.floats(0.01, 20.0))
    @settings(max_examples=300, deadline=None)
    def test_ordering_bound_below_d1c(self, a1, a2):
        if a1 * a2 >= 1:
            return
        assert d1_lower_ordering_bound(a1, a2) < thresholds(a1, a2, 1.0).d1c

    @pytest.mark.parametrize("a1, a2", [(0.5, 0.5), (0.9, 0.9), (0.99, 0.99), (0.3, 2.0)])
    def test_d2h_nondecreasing_past_d1h(self, a1, a2):
        d1h = thresholds(a1, a2, 1.0).d1h
        grid = d1h + np.linspace(1e-6, 50.0, 400)
        vals = np.array([thresholds(a1, a2, d).d2h for d in grid])
        assert np.all(np.diff(vals) >= 0)
        assert np.all(vals > grid + a2 - 1.0)


class TestClassification:
    @pytest.mark.parametrize(
        "point, tag, attractor",
        [
            ((0.5, 0.5, 0.5, 0.5), CaseTag.T11_i, StateKind.HETEROGENEOUS),
            ((0.5, 1.5, 0.5, 0.5), CaseTag.T12_i, StateKind.HOMOGENEOUS_TUMOR),
            ((2.0, 0.5, 0.5, 1.0), CaseTag.T13_i, StateKind.HEALTHY),
        ],
    )
    def test_examples(self, point, tag, attractor):
        gc = classify_global(P(*point))
        assert gc.case_tag is tag
        assert gc.predicted_attractor is attractor

    def test_healthy_flags_v0(self):
        gc = classify_global(P(2.0, 0.5, 0.5, 1.0))
        assert gc.requires_v0_le_1
        assert not classify_global(P(0.5, 0.5, 0.5, 0.5)).requires_v0_le_1

    def test_T11_ii(self):
        d1 = thresholds(0.99, 0.99, 1.0).d1h + 1.0
        d2h = thresholds(0.99, 0.99, d1).d2h
        assert classify_global(P(0.99, 0.99, d1, d2h + 0.1)).case_tag is CaseTag.T11_ii

    def test_T12_iii_and_iv(self):
        d1 = thresholds(0.99, 0.99, 1.0).d1h + 1.0
        d2c = thresholds(0.99, 0.99, d1).d2c
        assert classify_global(P(0.99, 0.99, d1, 0.5 * d2c)).case_tag is CaseTag.T12_iii
        d1 = thresholds(0.5, 3.0, 1.0).d1c + 1.0
        d2c = thresholds(0.5, 3.0, d1).d2c
        assert classify_global(P(0.5, 3.0, d1, 0.5 * d2c)).case_tag is CaseTag.T12_iv

    def test_upper_gap(self):
        a1 = a2 = 0.99
        d1 = thresholds(a1, a2, 1.0).d1h + 1.0
        th = thresholds(a1, a2, d1)
        q = 0.5 * ((d1 + a2 - 1.0) + th.d2h)
        gc = classify_global(P(a1, a2, d1, q))
        assert gc.case_tag is CaseTag.UNKNOWN_GAP
        assert gc.predicted_attractor is None
        assert gc.notes

    def test_lower_gap(self):
        a1 = a2 = 0.99
        d1 = thresholds(a1, a2, 1.0).d1h + 1.0
        th = thresholds(a1, a2, d1)
        q = 0.5 * (th.d2c + (d1 + a2 - 1.0))
        assert classify_global(P(a1, a2, d1, q)).case_tag is CaseTag.UNKNOWN_GAP

    def test_boundary_point(self):
        # q exactly on a2 + d1 - 1
        gc = classify_global(P(0.5, 0.75, 0.75, 0.5))
        assert gc.case_tag is CaseTag.NO_THEOREM
        assert gc.boundary
        assert any("boundary" in n for n in gc.notes)

    def test_bistable_note(self):
        gc = classify_global(P(2.0, 1.5, 1.0, 0.5))
        assert gc.case_tag is CaseTag.NO_THEOREM
        assert any("bistable" in n for n in gc.notes)

    @given(
        a1=st.floats(0.02, 3.0),
        a2=st.floats(0.02, 5.0),
        d1=st.floats(0.01, 80.0),
        q=st.floats(0.01, 80.0),
    )
    @settings(max_examples=2000, deadline=None)
    def test_cases_disjoint_and_total(self, a1, a2, d1, q):
        p = P(a1, a2, d1, q)
        assert len(theorem_cases(p)) <= 1
        gc = classify_global(p)
        assert isinstance(gc.case_tag, CaseTag)
        if gc.case_tag in (CaseTag.UNKNOWN_GAP, CaseTag.NO_THEOREM):
            assert gc.predicted_attractor is None
            assert theorem_cases(p) == []
        else:
            assert theorem_cases(p) == [gc.case_tag]

    def test_dense_sample_has_all_outcomes(self):
        rng = np.random.default_rng(7)
        seen = set()
        for _ in range(20000):
            a1 = rng.uniform(0.02, 3.0)
            a2 = rng.uniform(0.02, 3.0)
            d1 = 10 ** rng.uniform(-2, 2)
            q = 10 ** rng.uniform(-2, 2)
            seen.add(classify_global(P(a1, a2, d1, q)).case_tag)
        assert seen == set(CaseTag)
