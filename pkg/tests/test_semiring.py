import math

from hypothesis import given
from hypothesis import strategies as st

from latticefree.semiring import LOG_ONE, LOG_ZERO, log_add, log_mul, log_sum

weights = st.one_of(
    st.just(LOG_ZERO),
    st.floats(min_value=-50, max_value=50, allow_nan=False),
)


def test_known_values():
    assert log_add(math.log(0.5), math.log(0.5)) == 0.0
    assert log_add(LOG_ZERO, 3.25) == 3.25
    assert log_add(-1.5, LOG_ZERO) == -1.5
    assert abs(log_add(0.0, 0.0) - math.log(2)) < 1e-15
    assert log_add(LOG_ZERO, LOG_ZERO) == LOG_ZERO


def test_identity_elements():
    assert log_mul(LOG_ONE, 2.5) == 2.5
    assert log_mul(LOG_ZERO, 2.5) == LOG_ZERO


@given(weights, weights)
def test_log_add_commutative(a, b):
    assert log_add(a, b) == log_add(b, a)


@given(weights, weights, weights)
def test_log_add_associative(a, b, c):
    left = log_add(log_add(a, b), c)
    right = log_add(a, log_add(b, c))
    assert left == right or abs(left - right) < 1e-10


@given(weights, weights, weights)
def test_distributive(a, b, c):
    left = log_mul(a, log_add(b, c))
    right = log_add(log_mul(a, b), log_mul(a, c))
    assert left == right or abs(left - right) < 1e-10


@given(st.lists(weights, max_size=6))
def test_log_sum_matches_direct(values):
    direct = LOG_ZERO
    for v in values:
        direct = log_add(direct, v)
    assert log_sum(values) == direct


@given(weights, weights)
def test_never_nan(a, b):
    assert not math.isnan(log_add(a, b))
