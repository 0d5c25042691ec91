"""Natural-log probability semiring.

Weights are plain Python floats holding ln(p). The zero element is -inf and
the one element is 0.0. Addition is log-sum-exp, multiplication is float
addition. All graph code in the package computes in this semiring in double
precision.
"""

import math

LOG_ZERO = float("-inf")
LOG_ONE = 0.0


def log_add(a: float, b: float) -> float:
    """Stable ln(e^a + e^b) via the max + log1p form."""
    if a == LOG_ZERO:
        return b
    if b == LOG_ZERO:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def log_mul(a: float, b: float) -> float:
    return a + b


def log_sum(values) -> float:
    """Fold log_add over an iterable; returns LOG_ZERO for an empty one."""
    total = LOG_ZERO
    for v in values:
        total = log_add(total, v)
    return total
