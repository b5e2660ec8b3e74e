"""Stable scalar primitives shared by the accounting and mechanism modules.

Log-space combinatorics, accurate log/exp differences, the standard normal
CDF, a bracketed bisection solver, and the pool-adjacent-violators
projection used by the order-constrained noise mechanism.

Probabilities that can underflow are carried as natural logs throughout the
package; ``-inf`` encodes an exact zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "LogWeight",
    "Bracket",
    "BracketError",
    "ConvergenceError",
    "log_binomial",
    "log1mexp",
    "log1pexp",
    "logsumexp",
    "std_normal_cdf",
    "bisect",
    "pava_monotone_nonneg",
]

# Natural-log scale value; -inf encodes an exact zero weight.
LogWeight = float

_LOG_HALF = -math.log(2.0)


class BracketError(ValueError):
    """The supplied interval does not bracket a sign change."""


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its iteration budget."""


def log_binomial(n: int, i: int) -> LogWeight:
    """ln C(n, i) via log-gamma.

    Raises ValueError unless 0 <= i <= n.
    """
    if n < 0 or i < 0 or i > n:
        raise ValueError(f"binomial index out of range: i={i}, n={n}")
    return math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1)


def log1mexp(x: float) -> float:
    """ln(1 - e^x) for x <= 0.

    Branches at -ln 2: log1p(-exp(x)) below, log(-expm1(x)) above, which
    keeps full relative accuracy at both ends. x = 0 maps to -inf.
    """
    if math.isnan(x) or x > 0:
        raise ValueError(f"log1mexp requires x <= 0, got {x}")
    if x == 0.0:
        return -math.inf
    if x < _LOG_HALF:
        return math.log1p(-math.exp(x))
    return math.log(-math.expm1(x))


def log1pexp(x: float) -> float:
    """ln(1 + e^x), overflow-safe for large positive x."""
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def logsumexp(values: Iterable[float]) -> float:
    """ln sum(e^v) over the values, skipping -inf entries.

    Empty input (or all -inf) returns -inf. Accumulates the shifted sum
    with fsum so the result does not depend on summation order.
    """
    vals = [float(v) for v in values if v != -math.inf]
    if not vals:
        return -math.inf
    m = max(vals)
    if math.isinf(m):
        return m
    return m + math.log(math.fsum(math.exp(v - m) for v in vals))


def std_normal_cdf(z: float) -> float:
    """Standard normal CDF via erfc; accurate in both tails."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


@dataclass(frozen=True)
class Bracket:
    """A sign-changing interval handed to ``bisect``.

    tol_abs is the terminal interval width; max_iter bounds the halvings.
    """

    lo: float
    hi: float
    tol_abs: float = 1e-9
    max_iter: int = 200

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("bracket endpoints must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"bracket requires lo < hi, got [{self.lo}, {self.hi}]")
        if not self.tol_abs > 0:
            raise ValueError("tol_abs must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def bisect(f: Callable[[float], float], bracket: Bracket) -> float:
    """Root of f on the bracket by deterministic interval halving.

    Verifies the sign change up front (BracketError otherwise) and raises
    ConvergenceError if max_iter halvings do not shrink the interval to
    tol_abs. Exact zeros of f are returned immediately.
    """
    lo, hi = bracket.lo, bracket.hi
    flo, fhi = f(lo), f(hi)
    if math.isnan(flo) or math.isnan(fhi):
        raise BracketError("f is NaN at a bracket endpoint")
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise BracketError(
            f"no sign change on [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}"
        )
    for _ in range(bracket.max_iter):
        if hi - lo <= bracket.tol_abs:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    raise ConvergenceError(
        f"bisection did not reach width {bracket.tol_abs} in {bracket.max_iter} iterations"
    )


def pava_monotone_nonneg(values: "np.ndarray | Iterable[float]") -> np.ndarray:
    """Euclidean projection onto {x_1 >= x_2 >= ... >= x_n >= 0}.

    Pool-adjacent-violators for the nonincreasing cone, then a clamp at
    zero; the two steps compose to the exact projection onto the
    intersection. O(n) stack implementation.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d array, got shape {v.shape}")
    if v.size == 0:
        return v.copy()
    if not np.all(np.isfinite(v)):
        raise ValueError("input contains non-finite values")

    # Block stack of (mean, count); a violation is a left mean below its
    # right neighbour, merged by weighted averaging.
    means: list[float] = []
    counts: list[int] = []
    for x in v:
        means.append(float(x))
        counts.append(1)
        while len(means) >= 2 and means[-2] < means[-1]:
            m2, c2 = means.pop(), counts.pop()
            m1, c1 = means.pop(), counts.pop()
            means.append((m1 * c1 + m2 * c2) / (c1 + c2))
            counts.append(c1 + c2)

    out = np.empty_like(v)
    pos = 0
    for m, c in zip(means, counts):
        out[pos : pos + c] = m
        pos += c
    np.maximum(out, 0.0, out=out)
    return out
