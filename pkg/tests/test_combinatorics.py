import math

import pytest
from hypothesis import given, strategies as st

from lodpd.combinatorics import (
    LogReal,
    Partition,
    falling_factorial,
    log_binomial,
    partition_prefactor,
    partitions_of,
    rising_factorial,
)
from lodpd.errors import LimitError, ParameterError


def _brute_rising(x, n):
    out = 1.0
    for k in range(n):
        out *= x + k
    return out


def _count_partitions(n):
    # coin-change DP, independent of the recursive enumerator
    ways = [1] + [0] * n
    for part in range(1, n + 1):
        for s in range(part, n + 1):
            ways[s] += ways[s - part]
    return ways[n]


@pytest.mark.parametrize("x,n,expected", [(3.7, 0, 1.0), (2, 3, 24.0), (-0.5, 2, -0.25), (-2.5, 3, -1.875)])
def test_rising_factorial_examples(x, n, expected):
    assert float(rising_factorial(x, n)) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("x,n,expected", [(5, 2, 20.0), (3.5, 3, 13.125), (2, 3, 0.0), (7, 7, 5040.0)])
def test_falling_factorial_examples(x, n, expected):
    assert float(falling_factorial(x, n)) == pytest.approx(expected, rel=1e-13, abs=0)


def test_rising_factorial_hits_zero():
    assert rising_factorial(-2.0, 4).sign == 0


@given(st.floats(-5, 5), st.integers(0, 12), st.integers(0, 12))
def test_rising_functional_equation(x, n, m):
    lhs = rising_factorial(x, n) * rising_factorial(x + n, m)
    rhs = rising_factorial(x, n + m)
    if rhs.sign == 0:
        assert lhs.sign == 0
    else:
        assert lhs.isclose(rhs, 1e-12)


@given(st.floats(-3, 6), st.integers(0, 10))
def test_rising_matches_direct_product(x, n):
    direct = _brute_rising(x, n)
    assert float(rising_factorial(x, n)) == pytest.approx(direct, rel=1e-11, abs=1e-12)


@given(st.integers(0, 60))
def test_factorial_identities(n):
    f = math.lgamma(n + 1)
    assert falling_factorial(n, n).isclose(LogReal(1, f), 1e-13)
    assert rising_factorial(1, n).isclose(LogReal(1, f), 1e-13)


def test_logreal_handles_huge_magnitudes():
    a = LogReal(1, 1e6)
    b = LogReal(-1, 1e6 - 1)
    s = a + b
    assert s.sign == 1
    assert s.log_magnitude == pytest.approx(1e6 + math.log1p(-math.exp(-1)), rel=1e-15)
    assert (a - a).sign == 0
    assert float(a / a) == 1.0
    assert float(LogReal(1, 1e6)) == math.inf


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_logreal_arithmetic_matches_float(x, y):
    X, Y = LogReal.from_float(x), LogReal.from_float(y)
    assert float(X * Y) == pytest.approx(x * y, rel=1e-12, abs=1e-300)
    assert float(X + Y) == pytest.approx(x + y, rel=1e-9, abs=1e-9)
    if y != 0:
        assert float(X / Y) == pytest.approx(x / y, rel=1e-12)


def test_logreal_zero_is_canonical():
    with pytest.raises(ValueError):
        LogReal(2, 0.0)
    assert LogReal(0, 5.0).log_magnitude == -math.inf
    assert float(LogReal.from_float(-3.0) ** 3) == pytest.approx(-27.0)


def test_partitions_examples():
    assert [p.parts for p in partitions_of(1)] == [(1,)]
    assert [str(p) for p in partitions_of(4)] == ["(4)", "(3,1)", "(2,2)", "(2,1,1)", "(1,1,1,1)"]
    assert len(partitions_of(10)) == 42


@pytest.mark.parametrize("n", range(1, 31))
def test_partition_counts_match_dp(n):
    parts = partitions_of(n)
    assert len(parts) == _count_partitions(n)
    assert len({p.parts for p in parts}) == len(parts)
    assert all(p.n == n for p in parts)


def test_partition_order_is_reverse_lexicographic():
    parts = [p.parts for p in partitions_of(9)]
    assert parts == sorted(parts, reverse=True)


def test_partition_cap():
    with pytest.raises(LimitError):
        partitions_of(31)
    assert len(partitions_of(31, cap=40)) == _count_partitions(31)
    with pytest.raises(ParameterError):
        partitions_of(0)


@given(st.lists(st.integers(1, 6), min_size=1, max_size=8))
def test_partition_invariants(blocks):
    p = Partition.from_blocks(blocks)
    a = p.multiplicities
    assert sum(j * aj for j, aj in a.items()) == p.n == sum(blocks)
    assert sum(a.values()) == p.length
    assert list(p.parts) == sorted(p.parts, reverse=True)


def test_partition_rejects_bad_parts():
    with pytest.raises(ParameterError):
        Partition((1, 2))
    with pytest.raises(ParameterError):
        Partition((2, 0))
    with pytest.raises(ParameterError):
        Partition(())


@pytest.mark.parametrize("parts,expected", [((5,), 1), ((1, 1), 1), ((2, 1), 3), ((2, 2), 3), ((2, 1, 1), 6)])
def test_partition_prefactor(parts, expected):
    assert float(partition_prefactor(Partition(parts))) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("n", range(1, 9))
def test_prefactors_count_set_partitions(n):
    # total number of set partitions of n labelled items is the Bell number
    bell = [1, 1, 2, 5, 15, 52, 203, 877, 4140][n]
    assert math.fsum(float(partition_prefactor(p)) for p in partitions_of(n)) == pytest.approx(bell)


def test_log_binomial():
    assert math.exp(log_binomial(10, 3)) == pytest.approx(120)
    assert log_binomial(3, 5) == -math.inf
