import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from omnisal.imaging import NormalizationError
from omnisal.metrics import EPS, MetricReport, bce, cc, kld, latitude_weights, report


# plain-Python references, written from the definitions with math.fsum
def ref_kld(gt, pred):
    g, p = list(map(float, np.ravel(gt))), list(map(float, np.ravel(pred)))
    sg, sp = math.fsum(g), math.fsum(p)
    total = []
    for a, b in zip(g, p):
        pa, qb = a / sg, b / sp
        if pa > 0:
            total.append(pa * math.log(pa / (qb + EPS) + EPS))
    return math.fsum(total)


def ref_cc(gt, pred):
    g, p = list(map(float, np.ravel(gt))), list(map(float, np.ravel(pred)))
    n = len(g)
    mg, mp = math.fsum(g) / n, math.fsum(p) / n
    cov = math.fsum((a - mg) * (b - mp) for a, b in zip(g, p))
    vg = math.fsum((a - mg) ** 2 for a in g)
    vp = math.fsum((b - mp) ** 2 for b in p)
    if vg == 0 or vp == 0:
        return 0.0
    return cov / math.sqrt(vg * vp)


def ref_bce(gt, pred):
    g, p = list(map(float, np.ravel(gt))), list(map(float, np.ravel(pred)))
    terms = []
    for y, q in zip(g, p):
        q = min(max(q, EPS), 1 - EPS)
        terms.append(-(y * math.log(q) + (1 - y) * math.log(1 - q)))
    return math.fsum(terms) / len(terms)


class TestKLD:
    def test_identical(self, rng):
        m = rng.random((2, 2))
        assert abs(kld(m, m)) < 1e-6

    def test_identical_large_map_offset(self, rng):
        # the eps inside the log leaves kld(p, p) = eps * (1 - N) to first order
        m = rng.random((8, 8)) + 0.1
        assert kld(m, m) == pytest.approx(EPS * (1 - m.size), rel=1e-3)

    def test_two_bin_example(self):
        value = 0.5 * math.log(0.5 / 0.75) + 0.5 * math.log(0.5 / 0.25)
        assert kld([0.5, 0.5], [0.75, 0.25]) == pytest.approx(value, abs=1e-6)
        assert value == pytest.approx(0.1438, abs=1e-4)

    def test_asymmetric(self):
        a = kld([0.5, 0.5], [0.75, 0.25])
        b = kld([0.75, 0.25], [0.5, 0.5])
        assert a == pytest.approx(ref_kld([0.5, 0.5], [0.75, 0.25]), abs=1e-12)
        assert b == pytest.approx(ref_kld([0.75, 0.25], [0.5, 0.5]), abs=1e-12)
        assert abs(a - b) > 1e-3

    def test_errors(self):
        with pytest.raises(ValueError):
            kld(np.ones(3), np.ones(4))
        with pytest.raises(NormalizationError):
            kld(np.zeros(3), np.ones(3))

    @settings(max_examples=40)
    @given(arrays(np.float64, 16, elements=st.floats(0, 10)).filter(lambda a: a.sum() > 0),
           arrays(np.float64, 16, elements=st.floats(0, 10)).filter(lambda a: a.sum() > 0))
    def test_lower_bound(self, a, b):
        assert kld(a, b) >= -1e-3
        assert abs(kld(a, a)) <= a.size * EPS


class TestCC:
    def test_affine(self, rng):
        g = rng.random(50)
        assert cc(g, 3 * g + 2) == pytest.approx(1.0, abs=1e-9)
        assert cc([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-12)

    def test_example(self):
        assert cc([0, 1, 2], [0, 1, 3]) == pytest.approx(ref_cc([0, 1, 2], [0, 1, 3]), abs=1e-12)
        assert cc([0, 1, 2], [0, 1, 3]) == pytest.approx(0.9819, abs=1e-4)

    def test_zero_variance_fallback(self):
        assert cc([1, 1, 1], [0, 1, 2]) == 0.0
        assert cc([0, 1, 2], [5, 5, 5]) == 0.0

    def test_needs_two_pixels(self):
        with pytest.raises(ValueError):
            cc([1.0], [1.0])

    @settings(max_examples=40)
    @given(arrays(np.float64, 12, elements=st.floats(-5, 5)), arrays(np.float64, 12, elements=st.floats(-5, 5)),
           st.floats(0.1, 10), st.floats(-10, 10))
    def test_affine_invariance(self, x, y, a, b):
        if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
            return
        assert abs(cc(a * x + b, y) - cc(x, y)) < 1e-9


class TestBCE:
    def test_half(self):
        assert bce(np.full(9, 0.5), np.full(9, 0.5)) == pytest.approx(math.log(2), abs=1e-12)

    def test_confident(self):
        assert bce([1.0], [1.0 - EPS]) == pytest.approx(0.0, abs=1e-6)
        assert bce([1.0], [EPS]) == pytest.approx(-math.log(EPS), abs=1e-9)
        assert -math.log(EPS) == pytest.approx(16.12, abs=1e-2)

    def test_range_check(self):
        with pytest.raises(ValueError):
            bce([1.5], [0.5])

    def test_cross_entropy_above_entropy(self, rng):
        y = (rng.random(64) > 0.5).astype(float)
        yc = np.clip(y, EPS, 1 - EPS)
        for _ in range(20):
            q = rng.uniform(0.01, 0.99, 64)
            assert bce(y, q) >= bce(y, yc)


class TestReferenceAgreement:
    def test_random_pairs(self, rng):
        for _ in range(200):
            a, b = rng.random((2, 8, 8))
            assert abs(kld(a, b) - ref_kld(a, b)) < 1e-9
            assert abs(cc(a, b) - ref_cc(a, b)) < 1e-9
            assert abs(bce(a, b) - ref_bce(a, b)) < 1e-9


class TestReport:
    def test_report_json_shape(self, rng):
        a, b = rng.random((2, 6, 12))
        r = report(a, b)
        assert isinstance(r, MetricReport) and set(r.to_dict()) == {"kld", "cc"}
        assert set(report(a, b, with_bce=True).to_dict()) == {"kld", "cc", "bce"}

    def test_latitude_weighting(self, rng):
        w = latitude_weights(4, 3)
        np.testing.assert_allclose(w[:, 0], np.cos(np.radians([67.5, 22.5, -22.5, -67.5])))
        a, b = rng.random((2, 4, 3))
        assert report(a, b, lat_weighted=True).kld != report(a, b).kld
        # uniform weights reduce to the unweighted measures
        assert cc(a, b, np.ones_like(a)) == pytest.approx(cc(a, b), abs=1e-12)
        assert kld(a, b, np.ones_like(a)) == pytest.approx(kld(a, b), abs=1e-12)
