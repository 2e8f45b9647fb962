"""Exponential integral E1 and the exponential-SNR rate function Delta.

E1 uses the convergent power series on (0, 1] and a Lentz continued fraction
above 1. Delta(x) = E[log2(1 + T)] for T exponential with mean x.
"""

from __future__ import annotations

import math

__all__ = ["EULER_GAMMA", "SERIES_TERMS", "exp_integral_e1", "scaled_e1", "delta", "series_truncation_bound"]

EULER_GAMMA = 0.57721566490153286060651209008240243
SERIES_TERMS = 30
SEAM = 1.0
_LOG2E = 1.0 / math.log(2.0)
_TINY = 1e-300
_CF_EPS = 1e-16
_CF_MAX_ITER = 10_000


def series_truncation_bound(y: float, terms: int = SERIES_TERMS) -> float:
    """Bound on the dropped tail of the E1 series after ``terms`` terms (alternating, decreasing for y <= 1)."""
    k = terms + 1
    return y**k / (k * math.factorial(k))


def _e1_series(y: float) -> float:
    # E1(y) = -gamma - ln y - sum_{k>=1} (-y)^k / (k k!)
    total = 0.0
    term = 1.0
    for k in range(1, SERIES_TERMS + 1):
        term *= -y / k
        total += term / k
    return -EULER_GAMMA - math.log(y) - total


def _e1_continued_fraction_scaled(y: float) -> float:
    # e^y E1(y) = 1/(y+1- 1/(y+3- 4/(y+5- ...))), modified Lentz
    b = y + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _CF_MAX_ITER):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        step = c * d
        h *= step
        if abs(step - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"E1 continued fraction did not converge at y={y!r}")


def exp_integral_e1(y: float, method: str = "auto") -> float:
    """E1(y) = integral_1^inf e^{-yt}/t dt for y > 0.

    ``method`` forces "series" or "continued_fraction"; "auto" switches at y = 1.
    """
    y = float(y)
    if not y > 0 or math.isnan(y):
        raise ValueError(f"E1 needs y > 0, got {y!r}")
    if math.isinf(y):
        return 0.0
    if method == "auto":
        method = "series" if y <= SEAM else "continued_fraction"
    if method == "series":
        return _e1_series(y)
    if method == "continued_fraction":
        return _e1_continued_fraction_scaled(y) * math.exp(-y)
    raise ValueError(f"unknown method {method!r}")


def scaled_e1(y: float) -> float:
    """e^y E1(y), evaluated without overflow for large y."""
    y = float(y)
    if not y > 0:
        raise ValueError(f"E1 needs y > 0, got {y!r}")
    if y <= SEAM:
        return math.exp(y) * _e1_series(y)
    return _e1_continued_fraction_scaled(y)


def delta(x: float) -> float:
    """Delta(x) = log2(e) e^{1/x} E1(1/x), the mean of log2(1 + T) with T ~ Exp(mean x)."""
    x = float(x)
    if not x > 0 or math.isnan(x):
        raise ValueError(f"Delta needs x > 0, got {x!r}")
    if math.isinf(x):
        return math.inf
    if x < 1e-8:
        return x * _LOG2E
    return _LOG2E * scaled_e1(1.0 / x)
