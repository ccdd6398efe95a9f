import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from opf_pursuit import UnboundedSubproblemError, cubic_roots, minimize_univariate
from opf_pursuit.polynomial import polyval

finite = st.floats(min_value=-10, max_value=10, allow_nan=False)


def test_cubic_three_roots():
    assert cubic_roots(1, 0, -1, 0) == pytest.approx([-1, 0, 1], abs=1e-15)


def test_cubic_triple_root():
    assert cubic_roots(1, -3, 3, -1) == pytest.approx([1.0], abs=1e-12)


def test_cubic_degrades():
    assert cubic_roots(0, 1, 0, -4) == pytest.approx([-2, 2])
    assert cubic_roots(0, 0, 2, -1) == pytest.approx([0.5])
    assert cubic_roots(0, 0, 0, 3) == []


def test_cubic_all_zero_is_error():
    with pytest.raises(ValueError):
        cubic_roots(0, 0, 0, 0)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=3, max_size=3))
def test_planted_roots(roots):
    r = sorted(roots)
    assume(r[1] - r[0] > 1e-3 and r[2] - r[1] > 1e-3)
    a, b, c, d = 1.0, -(r[0] + r[1] + r[2]), r[0] * r[1] + r[0] * r[2] + r[1] * r[2], -r[0] * r[1] * r[2]
    found = cubic_roots(a, b, c, d)
    assert len(found) == 3
    assert np.max(np.abs(np.array(found) - r)) < 1e-9


@settings(max_examples=500, deadline=None)
@given(finite, finite, finite, finite)
def test_residual_bound(a, b, c, d):
    assume(max(abs(a), abs(b), abs(c), abs(d)) > 0)
    for r in cubic_roots(a, b, c, d):
        # backward error: residual small against the size of the terms it sums
        ar = abs(r)
        terms = ((abs(a) * ar + abs(b)) * ar + abs(c)) * ar + abs(d)
        assert abs(((a * r + b) * r + c) * r + d) <= 1e-9 * terms


@settings(max_examples=300, deadline=None)
@given(finite, finite, finite, finite)
def test_residual_bound_moderate_roots(a, b, c, d):
    scale = max(abs(a), abs(b), abs(c), abs(d))
    assume(abs(a) >= 1e-3 * scale > 0)
    for r in cubic_roots(a, b, c, d):
        assert abs(((a * r + b) * r + c) * r + d) <= 1e-9 * max(1.0, scale) * max(1.0, abs(r)) ** 3


@settings(max_examples=300, deadline=None)
@given(finite, finite, finite, finite)
def test_well_separated_real_roots_not_missed(a, b, c, d):
    assume(abs(a) > 1e-2)
    all_roots = np.roots([a, b, c, d])
    gaps = [abs(x - y) for k, x in enumerate(all_roots) for y in all_roots[k + 1:]]
    # near-multiple roots are ill-conditioned: a tiny perturbation turns them complex
    assume(not gaps or min(gaps) > 1e-3)
    found = cubic_roots(a, b, c, d)
    ref = [z.real for z in all_roots if abs(z.imag) < 1e-9]
    assert len(found) == len(ref)
    for z in ref:
        assert min(abs(z - f) for f in found) < 1e-8 * max(1.0, abs(z))


def test_tiny_leading_coefficient():
    roots = cubic_roots(1e-20, 1.0, 0.0, -1.0)
    assert len(roots) == 3
    assert roots[0] == pytest.approx(-1e20, rel=1e-12)
    assert roots[1:] == pytest.approx([-1.0, 1.0], abs=1e-15)


def test_far_root_beyond_range_is_dropped():
    # the third root of 1e-300 x^3 + x^2 - 1 sits near -1e300 and overflows its terms
    assert cubic_roots(1e-300, 1.0, 0.0, -1.0) == pytest.approx([-1.0, 1.0], abs=1e-15)
    (r,) = cubic_roots(8.5e-218, 0.0, 0.0, 1.0)
    assert r == pytest.approx(-(1 / 8.5e-218) ** (1 / 3), rel=1e-12)


def test_quartic_with_negligible_lead():
    t, v = minimize_univariate([0, 1, 2, 1, 2.220446049250313e-16], -1, 0)
    # t^3 + 2t^2 + t = t (t + 1)^2 is minimal on [-1, 0] at t = -1/3
    assert t == pytest.approx(-1 / 3, abs=1e-12)
    assert v == pytest.approx(-4 / 27, abs=1e-12)


def test_minimize_examples():
    assert minimize_univariate([0, 0, 0, 0, 1], -1, 2) == (0.0, 0.0)
    t, v = minimize_univariate([1, 0, -2, 0, 1], 0, 3)
    assert t == pytest.approx(1.0) and v == pytest.approx(0.0, abs=1e-15)


def test_minimize_endpoint():
    t, v = minimize_univariate([0, 1], -2, 3)
    assert (t, v) == (-2.0, -2.0)


def test_minimize_unbounded_names_coordinate():
    with pytest.raises(UnboundedSubproblemError, match="x\\[3\\]"):
        minimize_univariate([0, 0, 0, 0, -1], 0, math.inf, label="x[3]")
    with pytest.raises(UnboundedSubproblemError):
        minimize_univariate([0, 1], -math.inf, 0)
    with pytest.raises(UnboundedSubproblemError):
        minimize_univariate([0, 0, 0, 1], -math.inf, math.inf)


def test_minimize_bounded_concave_ok():
    t, v = minimize_univariate([0, 0, -1], -1, 2)
    assert (t, v) == (2.0, -4.0)


def test_tie_breaks_toward_zero():
    # (t^2 - 1)^2 has equal minima at -1 and 1; shift so 0 lies nearer to -1
    t, _ = minimize_univariate([1, 0, -2, 0, 1], -1.5, 1.5)
    assert t in (-1.0, 1.0)
    t, _ = minimize_univariate([0, 0, 0], -3, 5)
    assert t == 0.0


def test_degenerate_interval():
    assert minimize_univariate([0, 1, 1], 0.5, 0.5) == (0.5, 0.75)


def _grid(coeffs, lo, hi, n=1_000_001):
    g = np.linspace(lo, hi, n)
    vals = np.polyval(list(reversed(coeffs)), g)
    k = int(np.argmin(vals))
    return g[k], vals[k]


def test_random_quartic_grid_oracle():
    rng = np.random.default_rng(5)
    for _ in range(30):
        coeffs = list(rng.normal(size=5))
        coeffs[4] = abs(coeffs[4])
        lo, hi = sorted(rng.uniform(-3, 3, size=2))
        t, v = minimize_univariate(coeffs, lo, hi)
        gt, gv = _grid(coeffs, lo, hi)
        assert v <= gv + 1e-12
        assert v == pytest.approx(polyval(coeffs, t), abs=1e-13)
        assert lo <= t <= hi


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=5, max_size=5), finite, finite)
def test_minimum_beats_samples(coeffs, a, b):
    lo, hi = min(a, b), max(a, b)
    t, v = minimize_univariate(coeffs, lo, hi)
    assert lo <= t <= hi
    for s in np.linspace(lo, hi, 201):
        assert v <= polyval(coeffs, s) + 1e-9 * max(1.0, abs(polyval(coeffs, s)))
