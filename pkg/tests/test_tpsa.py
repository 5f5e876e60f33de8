"""Tests for the truncated power-series algebra and derivative extraction."""

import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strobavg.tpsa import (
    MultilinearMap,
    StructureError,
    TruncatedSeries,
    extract_multilinear,
    partial_derivative_map,
    series_vector,
)

from _support import close, multi_indices, naive_eval, series_strategy

POINTS = st.lists(
    st.floats(min_value=-1.5, max_value=1.5, allow_nan=False),
    min_size=2,
    max_size=2,
)


def test_additive_inverse_is_zero():
    x = TruncatedSeries(2, 3, {(1, 0): 2.0, (0, 2): -0.5, (0, 0): 1.0})
    assert (x + (-x)).is_zero()
    assert (x - x).is_zero()


def test_scale_by_one_is_identity():
    x = TruncatedSeries(2, 3, {(1, 1): 3.0, (0, 0): -2.0})
    assert x * 1.0 == x


@given(a=series_strategy(), b=series_strategy(), p=POINTS)
def test_eval_is_additive(a, b, p):
    assert close((a + b).eval(p), a.eval(p) + b.eval(p), rel=1e-12, abs_=1e-12)


def test_difference_of_squares():
    one_plus = TruncatedSeries(1, 2, {(0,): 1.0, (1,): 1.0})
    one_minus = TruncatedSeries(1, 2, {(0,): 1.0, (1,): -1.0})
    assert one_plus * one_minus == TruncatedSeries(1, 2, {(0,): 1.0, (2,): -1.0})


def test_truncation_kills_top_degree():
    d = 4
    top = TruncatedSeries(1, d, {(d,): 1.0})
    lin = TruncatedSeries(1, d, {(1,): 1.0})
    assert (top * lin).is_zero()


@given(a=series_strategy(), b=series_strategy())
def test_multiplication_commutes(a, b):
    assert a * b == b * a


@given(a=series_strategy(), b=series_strategy(), c=series_strategy())
@settings(max_examples=60)
def test_ring_axioms(a, b, c):
    assert close_series((a + b) + c, a + (b + c))
    assert close_series((a * b) * c, a * (b * c), rel=1e-13)
    assert close_series(a * (b + c), a * b + a * c, rel=1e-13)


def close_series(x, y, rel=1e-14):
    keys = set(x.coefficients) | set(y.coefficients)
    for k in keys:
        u, v = x.coefficients.get(k, 0.0), y.coefficients.get(k, 0.0)
        if abs(u - v) > rel * max(1.0, abs(u), abs(v)):
            return False
    return True


def test_structure_mismatch_raises():
    a = TruncatedSeries(2, 3)
    b = TruncatedSeries(2, 2)
    c = TruncatedSeries(1, 3)
    with pytest.raises(StructureError):
        a + b
    with pytest.raises(StructureError):
        a * c


# -- elementary functions ----------------------------------------------------


def test_exp_of_zero_is_one():
    z = TruncatedSeries.zero(2, 3)
    assert z.exp() == TruncatedSeries.constant(2, 3, 1.0)


def test_sin_jet_at_origin():
    # sin(dz1) at order 3 has the classical Taylor coefficients
    x = TruncatedSeries.variable(1, 3, 0)
    expected = TruncatedSeries(1, 3, {(1,): 1.0, (3,): -1.0 / 6.0})
    assert close_series(x.sin(), expected)


@given(a=series_strategy(num_vars=2, max_order=4, magnitude=1.5))
@settings(max_examples=40)
def test_pythagorean_identity(a):
    s = a.sin() * a.sin() + a.cos() * a.cos()
    assert close_series(s, TruncatedSeries.constant(2, 4, 1.0), rel=1e-12)


@pytest.mark.parametrize("fn", ["sin", "cos", "exp"])
def test_compose_matches_symbolic_for_cubic(fn):
    # oracle: differentiate fn(a(x)) symbolically for a cubic polynomial
    sympy = pytest.importorskip("sympy")
    x = sympy.Symbol("x")
    poly = sympy.Rational(3, 10) + sympy.Rational(7, 10) * x - sympy.Rational(1, 4) * x**2 + sympy.Rational(1, 8) * x**3
    sym = getattr(sympy, fn)(poly)
    d = 5
    a = TruncatedSeries(
        1, d, {(0,): 0.3, (1,): 0.7, (2,): -0.25, (3,): 0.125}
    )
    got = getattr(a, fn)()
    expr = sym
    for q in range(d + 1):
        expected = float(expr.subs(x, 0)) / math.factorial(q)
        assert math.isclose(got.coefficient((q,)), expected, rel_tol=1e-12, abs_tol=1e-13)
        expr = sympy.diff(expr, x)


# -- calculus ------------------------------------------------------------------


def test_partial_power_rule():
    s = TruncatedSeries(2, 3, {(2, 1): 1.0})  # dz1^2 dz2
    expected = TruncatedSeries(2, 2, {(1, 1): 2.0})
    assert s.partial(0) == expected


def test_partial_of_constant_is_zero():
    c = TruncatedSeries.constant(2, 3, 4.2)
    assert c.partial(1).is_zero()
    assert c.partial(1).max_order == 2


def test_partial_order_zero_series():
    c = TruncatedSeries.constant(2, 0, 4.2)
    out = c.partial(0)
    assert out.is_zero() and out.max_order == 0


@given(a=series_strategy(num_vars=2, max_order=3), b=series_strategy(num_vars=2, max_order=3))
@settings(max_examples=60)
def test_product_rule(a, b):
    # oracle: d(ab) = da*b + a*db, with operands truncated to the derivative order
    for var in (0, 1):
        lhs = (a * b).partial(var)
        rhs = a.partial(var) * b.with_max_order(2) + a.with_max_order(2) * b.partial(var)
        assert close_series(lhs, rhs, rel=1e-13)


def test_partial_out_of_range():
    with pytest.raises(StructureError):
        TruncatedSeries.zero(2, 3).partial(2)


def test_eval_constant_and_coordinate():
    c = TruncatedSeries.constant(3, 2, -1.5)
    assert c.eval([9.0, 9.0, 9.0]) == -1.5
    x2 = TruncatedSeries.variable(3, 2, 1)
    assert x2.eval([0.0, 1.0, 0.0]) == 1.0


@given(a=series_strategy(), p=POINTS)
def test_eval_matches_naive_sum(a, p):
    assert close(a.eval(p), naive_eval(a, p), rel=1e-12, abs_=1e-12)


def test_eval_dimension_mismatch():
    with pytest.raises(StructureError):
        TruncatedSeries.zero(2, 3).eval([1.0])


# -- multilinear extraction ----------------------------------------------------


def test_extract_bilinear_of_product_field():
    # field f(z) = (z1*z2, 0) around the origin; d^2 f[u, v] = (u1 v2 + u2 v1, 0)
    f1 = TruncatedSeries(2, 2, {(1, 1): 1.0})
    f2 = TruncatedSeries.zero(2, 2)
    m = extract_multilinear([f1, f2], 2)
    u = np.array([1.0, 2.0])
    v = np.array([-3.0, 0.5])
    got = m.apply([u, v])
    assert close(got, [u[0] * v[1] + u[1] * v[0], 0.0])


def test_extract_from_constant_is_zero_map():
    comps = [TruncatedSeries.constant(2, 2, 3.0), TruncatedSeries.constant(2, 2, -1.0)]
    m = extract_multilinear(comps, 1)
    assert np.all(m.entries == 0.0)


def test_extract_arity_zero_is_value():
    comps = [TruncatedSeries.constant(2, 2, 3.0), TruncatedSeries.constant(2, 2, -1.0)]
    m = extract_multilinear(comps, 0)
    assert close(m.apply([]), [3.0, -1.0])


@given(fs=st.lists(series_strategy(num_vars=2, max_order=3), min_size=2, max_size=2))
@settings(max_examples=40)
def test_extracted_map_is_symmetric(fs):
    m = extract_multilinear(fs, 2)
    for i1 in range(2):
        for i2 in range(2):
            assert np.all(m.entries[i1, i2] == m.entries[i2, i1])


def test_extract_equal_arguments_normalization():
    # d^m f[u,...,u] must equal m! times the degree-m part at dz = u
    rng = np.random.default_rng(7)
    n, d, m = 2, 4, 3
    comps = []
    for _ in range(n):
        coeffs = {a: rng.uniform(-1, 1) for a in multi_indices(n, d)}
        comps.append(TruncatedSeries(n, d, coeffs))
    u = np.array([0.3, -0.7])
    mmap = extract_multilinear(comps, m)
    got = mmap.apply([u] * m)
    for c in range(n):
        hom = sum(
            v * u[0] ** a[0] * u[1] ** a[1]
            for a, v in comps[c].coefficients.items()
            if sum(a) == m
        )
        assert close(got[c], math.factorial(m) * hom, rel=1e-12)


def test_extract_arity_beyond_order_raises():
    comps = [TruncatedSeries.zero(2, 2)] * 2
    with pytest.raises(StructureError):
        extract_multilinear(comps, 3)


def test_multilinear_vs_finite_differences():
    # composite smooth field; arity 1 and 2 vs central differences of eval
    n, d = 2, 4
    z1 = TruncatedSeries.variable(n, d, 0, base=0.4)
    z2 = TruncatedSeries.variable(n, d, 1, base=-0.2)
    comps = [
        (z1 * z2).sin() + z1.exp() * 0.5,
        (z2 * z2 * 0.3 + z1).cos(),
    ]
    h = 1e-4

    def value(p):
        return np.array([c.eval(p) for c in comps])

    m1 = extract_multilinear(comps, 1)
    for v in range(n):
        e = np.zeros(n)
        e[v] = 1.0
        fd = (value(h * e) - value(-h * e)) / (2 * h)
        assert close(m1.apply([e]), fd, rel=1e-6, abs_=1e-8)

    m2 = extract_multilinear(comps, 2)
    for v in range(n):
        e = np.zeros(n)
        e[v] = 1.0
        fd = (value(h * e) - 2 * value(np.zeros(n)) + value(-h * e)) / h**2
        assert close(m2.apply([e, e]), fd, rel=1e-6, abs_=1e-6)
    # mixed second partial
    e1, e2 = np.eye(2)
    fd = (
        value(h * (e1 + e2)) - value(h * (e1 - e2)) - value(h * (e2 - e1)) + value(-h * (e1 + e2))
    ) / (4 * h**2)
    assert close(m2.apply([e1, e2]), fd, rel=1e-6, abs_=1e-6)


def test_partial_derivative_map_matches_extraction_at_origin():
    rng = np.random.default_rng(3)
    n, d = 2, 3
    comps = [
        TruncatedSeries(n, d, {a: rng.uniform(-1, 1) for a in multi_indices(n, d)})
        for _ in range(n)
    ]
    for m in (1, 2):
        series_map = partial_derivative_map(comps, m)
        numeric_map = extract_multilinear(comps, m)
        for idx in np.ndindex(*(n,) * m):
            for c in range(n):
                assert math.isclose(
                    series_map.entries[idx + (c,)].constant,
                    numeric_map.entries[idx + (c,)],
                    rel_tol=1e-12,
                    abs_tol=1e-14,
                )
        # entries keep the ambient truncation order for later arithmetic
        assert series_map.entries[(0,) * (m + 1)].max_order == d


def test_series_vector_roundtrip():
    a = TruncatedSeries.constant(1, 1, 2.0)
    b = TruncatedSeries.variable(1, 1, 0)
    vec = series_vector([a, b])
    assert vec.dtype == object and vec[0] == a and vec[1] == b
    doubled = vec * 2.0
    assert doubled[0].constant == 4.0
