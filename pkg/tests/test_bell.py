"""Tests for the Bell partition combinatorics and time-polynomial layer."""

import math
from collections import Counter

import numpy as np
import pytest

from strobavg.bell import (
    SYMBOLIC_T,
    PartitionTerm,
    TimePoly,
    bell_apply,
    enumerate_partitions,
    timepoly_integrate,
)
from strobavg.tpsa import MultilinearMap, StructureError

from _support import close, set_partitions


def profile_counts(j: int, m: int) -> Counter:
    """Oracle: block-size profiles of partitions of {1..j} into m blocks, counted."""
    counts: Counter = Counter()
    for p in set_partitions(list(range(j))):
        if len(p) != m:
            continue
        profile = [0] * (j - m + 1)
        for block in p:
            profile[len(block) - 1] += 1
        counts[tuple(profile)] += 1
    return counts


def test_partition_coefficients_match_brute_force_up_to_six():
    for j in range(1, 7):
        for m in range(1, j + 1):
            got = {t.block_counts: t.coefficient for t in enumerate_partitions(j, m)}
            assert got == dict(profile_counts(j, m)), (j, m)


def test_bell_numbers():
    expected = {1: 1, 2: 2, 3: 5, 4: 15, 5: 52, 6: 203}
    for j, bell in expected.items():
        total = sum(
            t.coefficient for m in range(1, j + 1) for t in enumerate_partitions(j, m)
        )
        assert total == bell


def test_single_partition_cases():
    assert enumerate_partitions(1, 1) == [PartitionTerm((1,), 1)]
    assert enumerate_partitions(3, 2) == [PartitionTerm((1, 1), 3)]
    assert enumerate_partitions(4, 2) == [
        PartitionTerm((0, 2, 0), 3),
        PartitionTerm((1, 0, 1), 4),
    ]


def test_partition_term_structure_invariants():
    for j in range(1, 8):
        for m in range(1, j + 1):
            for t in enumerate_partitions(j, m):
                assert len(t.block_counts) == j - m + 1
                assert sum(t.block_counts) == m
                assert sum(i * b for i, b in enumerate(t.block_counts, 1)) == j
                assert t.coefficient > 0


def test_invalid_indices():
    for j, m in [(0, 1), (2, 0), (2, 3)]:
        with pytest.raises(StructureError):
            enumerate_partitions(j, m)


def test_lexicographic_order():
    for j, m in [(6, 2), (6, 3), (7, 3)]:
        bs = [t.block_counts for t in enumerate_partitions(j, m)]
        assert bs == sorted(bs)


# -- time polynomials -----------------------------------------------------------


def test_timepoly_trims_trailing_zeros():
    p = TimePoly(2, [np.array([1.0, 0.0]), np.zeros(2), np.zeros(2)])
    assert p.degree == 0
    assert TimePoly(2, [np.zeros(2)]).is_zero()


def test_timepoly_evaluate():
    p = TimePoly(1, [np.array([1.0]), np.array([-2.0]), np.array([3.0])])
    assert close(p(2.0), [1.0 - 4.0 + 12.0])


def test_integrate_zero_polynomial():
    z = TimePoly.zero(3)
    assert timepoly_integrate(z, SYMBOLIC_T).is_zero()
    assert close(timepoly_integrate(z, 5.0), np.zeros(3))


def test_symbolic_integral_of_square():
    p = TimePoly.monomial(np.array([1.0]), 2)  # t^2
    q = timepoly_integrate(p, SYMBOLIC_T)
    assert q.degree == 3
    assert close(q.coefficient(3), [1.0 / 3.0])
    assert close(q.coefficient(0), [0.0])


def test_definite_integral_of_linear_term():
    # int_0^T (l! t g) dt = (T^2/2) l! g, the factor behind the order-2l closure
    ell = 3
    g = np.array([0.4, -1.1])
    p = TimePoly.monomial(math.factorial(ell) * g, 1)
    T = 2 * math.pi
    got = timepoly_integrate(p, T)
    assert close(got, (T**2 / 2) * math.factorial(ell) * g, rel=1e-14)


# -- applying maps through the Bell structure ------------------------------------


def linear_map(matrix: np.ndarray) -> MultilinearMap:
    # entries[i][c] = d g_c / d z_i
    return MultilinearMap(1, matrix.shape[0], np.ascontiguousarray(matrix.T))


def test_m_equals_one_selects_last_argument():
    rng = np.random.default_rng(0)
    n = 2
    M = rng.normal(size=(n, n))
    L = linear_map(M)
    ys = [
        TimePoly.monomial(rng.normal(size=n), p) for p in range(3)
    ]  # y1, y2, y3 of degrees 0,1,2
    out = bell_apply(L, ys)  # j = 3, m = 1: single profile (0,0,1), coefficient 1
    expected = TimePoly(n, [M @ ys[2].coefficient(p) for p in range(3)])
    assert out.degree == expected.degree
    for p in range(3):
        assert close(out.coefficient(p), expected.coefficient(p), rel=1e-12)


def test_leading_profile_of_linear_block():
    # with y_1..y_{l-1} = 0 and y_l = l! t g, the (j,m) = (l,1) application
    # integrates to (T^2/2) l! (dg . g)
    ell = 3
    n = 2
    M = np.array([[0.5, -1.0], [2.0, 0.25]])
    g = np.array([1.5, -0.5])
    ys = [TimePoly.zero(n)] * (ell - 1) + [TimePoly.monomial(math.factorial(ell) * g, 1)]
    poly = bell_apply(linear_map(M), ys)
    assert poly.degree == 1
    assert close(poly.coefficient(1), math.factorial(ell) * (M @ g), rel=1e-13)
    T = 2 * math.pi
    integrated = timepoly_integrate(poly, T) / math.factorial(ell)
    assert close(integrated, (T**2 / 2) * (M @ g), rel=1e-13)


def test_scalar_reduction_matches_classical_bell_value():
    # n = 1 with L[u, v] = u*v reduces to the classical B_{4,2}; at (1,1,1) it is 7
    L = MultilinearMap(2, 1, np.ones((1, 1, 1)))
    ys = [TimePoly.monomial(np.array([1.0]), 0) for _ in range(3)]
    out = bell_apply(L, ys)
    assert out.degree == 0
    assert close(out.coefficient(0), [7.0])


def test_zero_argument_annihilates_profiles():
    # killing y_2 removes the 3 x2^2 profile of B_{4,2}, leaving 4 x1 x3
    L = MultilinearMap(2, 1, np.ones((1, 1, 1)))
    ys = [
        TimePoly.monomial(np.array([1.0]), 0),
        TimePoly.zero(1),
        TimePoly.monomial(np.array([1.0]), 0),
    ]
    out = bell_apply(L, ys)
    assert close(out.coefficient(0), [4.0])


def test_bell_apply_linear_in_map_and_slots():
    rng = np.random.default_rng(42)
    n = 2
    ys = [
        TimePoly(n, [rng.normal(size=n) for _ in range(p + 1)]) for p in range(3)
    ]
    E1 = rng.normal(size=(n, n, n))
    E2 = rng.normal(size=(n, n, n))
    a, b = 0.7, -1.3
    lhs = bell_apply(MultilinearMap(2, n, a * E1 + b * E2), ys)
    r1 = bell_apply(MultilinearMap(2, n, E1), ys)
    r2 = bell_apply(MultilinearMap(2, n, E2), ys)
    rhs = r1 * a + r2 * b
    for p in range(max(lhs.degree, rhs.degree) + 1):
        assert close(lhs.coefficient(p), rhs.coefficient(p), rel=1e-12, abs_=1e-12)

    # linearity in the y_1 slot: scale it and compare against the multiset expansion
    L = MultilinearMap(2, n, E1)
    ys_scaled = [ys[0] * 2.0, ys[1], ys[2]]
    direct = bell_apply(L, ys_scaled)
    # profiles of B_{4,2}: (0,2,0) has no y1, (1,0,1) is linear in y1
    base_no_y1 = bell_apply(L, [TimePoly.zero(n), ys[1], ys[2]])
    base_full = bell_apply(L, ys)
    linear_part = base_full - base_no_y1
    recombined = base_no_y1 + linear_part * 2.0
    for p in range(direct.degree + 1):
        assert close(direct.coefficient(p), recombined.coefficient(p), rel=1e-12, abs_=1e-12)


def test_degree_bound():
    rng = np.random.default_rng(5)
    n = 2
    L = MultilinearMap(2, n, rng.normal(size=(n, n, n)))
    ys = [TimePoly(n, [rng.normal(size=n) for _ in range(p + 2)]) for p in range(3)]
    out = bell_apply(L, ys)
    best = 0
    for t in enumerate_partitions(4, 2):
        if any(b and ys[i].is_zero() for i, b in enumerate(t.block_counts)):
            continue
        best = max(best, sum(b * ys[i].degree for i, b in enumerate(t.block_counts)))
    assert out.degree <= best


def test_bell_apply_dimension_mismatch():
    L = MultilinearMap(1, 2, np.zeros((2, 2)))
    with pytest.raises(StructureError):
        bell_apply(L, [TimePoly.zero(1)])
