"""Welch's unequal-variance two-sample t-test.

The two-tailed p-value of Student's t with ``df`` degrees of freedom is the
regularized incomplete beta ``I_x(df/2, 1/2)`` at ``x = df / (df + t**2)``,
evaluated here with the modified Lentz continued fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["ComparisonResult", "betainc", "t_two_tailed_p", "welch_t_test"]

A_BETTER = "A_better"
B_BETTER = "B_better"
INDISTINGUISHABLE = "indistinguishable"

_EPS = 1e-16
_TINY = 1e-300
_MAXIT = 10_000


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``.

    ``y`` may carry ``1 - x`` computed without cancellation.
    """
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if y is None:
        y = 1.0 - x
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def t_two_tailed_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    t2 = t * t
    x = df / (df + t2)
    y = t2 / (df + t2)
    return min(1.0, max(0.0, betainc(df / 2.0, 0.5, x, y)))


@dataclass(frozen=True)
class ComparisonResult:
    t: float
    df: float
    p: float
    verdict: str
    alpha: float = 0.05
    mean_a: float = float("nan")
    mean_b: float = float("nan")
    n_a: int = 0
    n_b: int = 0


def welch_t_test(sample_a: Sequence[float], sample_b: Sequence[float], alpha: float = 0.05) -> ComparisonResult:
    """Two-tailed Welch test of mean(a) vs mean(b).

    Verdict is ``A_better`` / ``B_better`` when ``p < alpha`` (by sign of the
    mean difference), else ``indistinguishable``. If both samples have zero
    variance the test degenerates: equal means give ``t=0, p=1``, unequal
    means give ``t=±inf, p=0``; ``df`` is then reported as ``n_a + n_b - 2``.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least 2 observations")
    ma, mb = float(a.mean()), float(b.mean())
    va, vb = float(a.var(ddof=1)) / a.size, float(b.var(ddof=1)) / b.size
    se2 = va + vb

    if se2 == 0.0:
        df = float(a.size + b.size - 2)
        if ma == mb:
            t, p = 0.0, 1.0
        else:
            t, p = math.copysign(math.inf, ma - mb), 0.0
    else:
        t = (ma - mb) / math.sqrt(se2)
        df = se2 * se2 / (va * va / (a.size - 1) + vb * vb / (b.size - 1))
        p = t_two_tailed_p(t, df)

    if p < alpha:
        verdict = A_BETTER if ma > mb else B_BETTER
    else:
        verdict = INDISTINGUISHABLE
    return ComparisonResult(t, df, p, verdict, alpha, ma, mb, int(a.size), int(b.size))
