"""Binomial tail probabilities and their Kullback-Leibler bounds.

Upper tails are ``P(S_n(x) >= threshold * n)`` and lower tails are
``P(S_n(x) <= threshold * n)``. Lower-tail quantities are always computed
by reflecting to the upper tail of ``S_n(1 - x)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import LogValue, log_pmf_row, log_sum_exp_arrays

__all__ = [
    "Side",
    "TailQuery",
    "TailBoundReport",
    "kl_divergence",
    "kl_quadratic_approx",
    "exact_tail",
    "chernoff_tail",
    "ferrante_tail",
    "bound_report",
    "snap_ceil",
    "snap_floor",
]

# threshold * n within this distance of an integer is treated as that integer,
# so decimal thresholds such as 0.15 * 20 index the intended atom.
SNAP_TOL = 1e-9


class Side(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


def _snap(v: float) -> Optional[int]:
    r = round(v)
    if abs(v - r) <= SNAP_TOL * max(1.0, abs(v)):
        return int(r)
    return None


def snap_ceil(v: float) -> int:
    r = _snap(v)
    return r if r is not None else math.ceil(v)


def snap_floor(v: float) -> int:
    r = _snap(v)
    return r if r is not None else math.floor(v)


@dataclass(frozen=True)
class TailQuery:
    n: int
    x: float
    threshold: float
    side: Side = Side.UPPER

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not 0.0 < self.x < 1.0:
            raise ValueError(f"x must lie in (0, 1), got {self.x!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold!r}")
        # Equality is admitted: the bound is then the vacuous value 1.
        if self.side is Side.UPPER and self.threshold < self.x:
            raise ValueError("upper-tail query needs x <= threshold")
        if self.side is Side.LOWER and self.threshold > self.x:
            raise ValueError("lower-tail query needs threshold <= x")

    def reflected(self) -> "TailQuery":
        """The equivalent upper-tail query for ``n - S_n(1 - x)``."""
        if self.side is Side.UPPER:
            return self
        return TailQuery(self.n, 1.0 - self.x, 1.0 - self.threshold, Side.UPPER)


@dataclass(frozen=True)
class TailBoundReport:
    query: TailQuery
    exact: LogValue
    chernoff: LogValue
    ferrante: Optional[LogValue]
    ferrante_applicable: bool
    kl_rate: float


def kl_divergence(x: float, theta: float) -> float:
    """Bernoulli relative entropy r(x, theta) = KL(theta || x).

    Continuous extension at theta in {0, 1}. A point mass x in {0, 1}
    against any other theta has infinite divergence, reported as an error.
    """
    if not (0.0 <= x <= 1.0 and 0.0 <= theta <= 1.0):
        raise ValueError(f"arguments must lie in [0, 1], got x={x!r}, theta={theta!r}")
    if theta == x:
        return 0.0
    if x in (0.0, 1.0):
        raise ValueError(f"divergence is infinite for x={x!r}, theta={theta!r}")
    total = 0.0
    if theta > 0.0:
        total += theta * math.log(theta / x)
    if theta < 1.0:
        total += (1.0 - theta) * math.log((1.0 - theta) / (1.0 - x))
    return max(total, 0.0)


def kl_quadratic_approx(x: float, theta: float) -> float:
    """Leading quadratic term (theta - x)^2 / (2 x (1 - x)) of r(x, theta)."""
    if not 0.0 < x < 1.0:
        raise ValueError(f"x must lie in (0, 1), got {x!r}")
    return (theta - x) ** 2 / (2.0 * x * (1.0 - x))


def exact_tail(query: TailQuery) -> LogValue:
    """Exact tail probability by log-space summation of the binomial pmf."""
    q = query.reflected()
    start = snap_ceil(q.threshold * q.n)
    if start > q.n:
        return LogValue.zero()
    logs = log_pmf_row(q.n, q.x)[max(start, 0):]
    return log_sum_exp_arrays(np.ones(logs.shape), logs)


def chernoff_tail(query: TailQuery) -> LogValue:
    """``exp(-n r(x, threshold))``; the lower tail via r(x, a) = r(1-x, 1-a)."""
    q = query.reflected()
    return LogValue.from_log(-q.n * kl_divergence(q.x, q.threshold))


def ferrante_tail(query: TailQuery) -> Optional[LogValue]:
    """Ferrante's refined bound, or ``None`` outside its preconditions.

    Requires ``n >= 2`` and ``1 <= b n <= n - 1`` with b the (reflected)
    upper threshold, and strict ``x < b``.
    """
    q = query.reflected()
    n, x, b = q.n, q.x, q.threshold
    if n < 2 or not x < b:
        return None
    bn = b * n
    snapped = _snap(bn)
    if snapped is not None:
        bn = snapped
    if not 1 <= bn <= n - 1:
        return None
    beta = snap_ceil(b * n) / n
    log_prefactor = (
        math.log(beta * (1.0 - x) / (beta - x))
        - 0.5 * math.log(2.0 * math.pi * beta * (1.0 - beta) * n)
    )
    return LogValue.from_log(log_prefactor - n * kl_divergence(x, b))


def bound_report(query: TailQuery) -> TailBoundReport:
    exact = exact_tail(query)
    chernoff = chernoff_tail(query)
    ferrante = ferrante_tail(query)
    if exact > chernoff:
        raise AssertionError(f"exact tail exceeds Chernoff bound for {query}")
    if ferrante is not None and exact > ferrante:
        raise AssertionError(f"exact tail exceeds Ferrante bound for {query}")
    return TailBoundReport(
        query=query,
        exact=exact,
        chernoff=chernoff,
        ferrante=ferrante,
        ferrante_applicable=ferrante is not None,
        kl_rate=kl_divergence(query.x, query.threshold),
    )
