"""Signed log-space reals, binomial log-probabilities and compensated sums.

Quantities such as ``exp(-n r)`` underflow binary64 long before the
experiments stop being interesting, so everything downstream passes
values around as ``(sign, log|v|)`` pairs and only exponentiates at the
very end, if at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "LogValue",
    "compensated_sum",
    "log_binomial",
    "log_binomial_pmf",
    "log_pmf_row",
    "log_sum_exp_signed",
    "log_sum_exp_arrays",
    "CANCELLATION_RTOL",
]

LN_2PI = math.log(2.0 * math.pi)
TABLE_MAX = 2048
# A signed sum whose magnitude falls below this fraction of its largest
# term is reported as cancelled.
CANCELLATION_RTOL = 1e-12

# ln k! - [(k + 1/2) ln k - k + ln sqrt(2 pi)], k = 0..15, to 20 digits.
_STIRLERR_SMALL = np.array([
    0.0,
    0.08106146679532725822,
    0.041340695955409294094,
    0.027677925684998339149,
    0.020790672103765093112,
    0.016644691189821192163,
    0.013876128823070747999,
    0.011896709945891770095,
    0.010411265261972096497,
    0.0092554621827127329177,
    0.0083305634333628712565,
    0.007573675487951840795,
    0.0069428401072095298657,
    0.0064089941880042070684,
    0.0059513701127588477356,
    0.005554733551962801371,
])

# ln k! for k = 0..TABLE_MAX; immutable after import.
_LOG_FACTORIAL = np.array([math.lgamma(k + 1.0) for k in range(TABLE_MAX + 1)])
_LOG_FACTORIAL.setflags(write=False)


@dataclass(frozen=True)
class LogValue:
    """A real number stored as a sign in {-1, 0, +1} and ``log|value|``.

    Zero is canonical: ``sign == 0`` exactly when ``log_mag == -inf``.
    ``cancelled`` is set by :func:`log_sum_exp_signed` when the sum lost
    essentially all of its significant digits to cancellation.
    """

    sign: int
    log_mag: float
    cancelled: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or +1, got {self.sign!r}")
        if math.isnan(self.log_mag) or self.log_mag == math.inf:
            raise ValueError(f"log_mag must be finite or -inf, got {self.log_mag!r}")
        if (self.sign == 0) != (self.log_mag == -math.inf):
            raise ValueError("non-canonical zero: sign == 0 iff log_mag == -inf")

    @classmethod
    def zero(cls, cancelled: bool = False) -> "LogValue":
        return cls(0, -math.inf, cancelled)

    @classmethod
    def one(cls) -> "LogValue":
        return cls(1, 0.0)

    @classmethod
    def from_real(cls, value: float) -> "LogValue":
        value = float(value)
        if math.isnan(value) or math.isinf(value):
            raise ValueError(f"cannot represent {value!r}")
        if value == 0.0:
            return cls.zero()
        return cls(1 if value > 0 else -1, math.log(abs(value)))

    @classmethod
    def from_log(cls, log_mag: float, sign: int = 1) -> "LogValue":
        if log_mag == -math.inf or sign == 0:
            return cls.zero()
        return cls(sign, float(log_mag))

    @property
    def is_zero(self) -> bool:
        return self.sign == 0

    def to_real(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_mag)

    def __float__(self) -> float:
        return self.to_real()

    def __neg__(self) -> "LogValue":
        return LogValue(-self.sign, self.log_mag, self.cancelled)

    def __abs__(self) -> "LogValue":
        return LogValue(abs(self.sign), self.log_mag, self.cancelled)

    def __mul__(self, other: "LogValue") -> "LogValue":
        if not isinstance(other, LogValue):
            return NotImplemented
        if self.sign == 0 or other.sign == 0:
            return LogValue.zero()
        return LogValue(self.sign * other.sign, self.log_mag + other.log_mag)

    def scale(self, log_factor: float) -> "LogValue":
        """Multiply by ``exp(log_factor)``."""
        if self.sign == 0:
            return self
        return LogValue(self.sign, self.log_mag + log_factor, self.cancelled)

    def _key(self) -> tuple[int, float]:
        # Order-preserving key: larger magnitude is further from zero.
        if self.sign == 0:
            return (0, 0.0)
        return (self.sign, self.sign * self.log_mag)

    def __lt__(self, other: "LogValue") -> bool:
        return self._key() < other._key()

    def __le__(self, other: "LogValue") -> bool:
        return self._key() <= other._key()

    def __gt__(self, other: "LogValue") -> bool:
        return self._key() > other._key()

    def __ge__(self, other: "LogValue") -> bool:
        return self._key() >= other._key()

    def __repr__(self) -> str:
        flag = ", cancelled" if self.cancelled else ""
        return f"LogValue({self.sign:+d}, {self.log_mag!r}{flag})"


def compensated_sum(values: Iterable[float]) -> float:
    """Sum of floats with compensated (in fact correctly rounded) accumulation."""
    return math.fsum(values)


def log_sum_exp_arrays(signs: np.ndarray, logs: np.ndarray) -> LogValue:
    """Signed log-sum-exp over parallel ``signs`` / ``logs`` arrays."""
    signs = np.asarray(signs)
    logs = np.asarray(logs, dtype=float)
    live = (signs != 0) & (logs > -np.inf)
    if not live.any():
        return LogValue.zero()
    signs = signs[live]
    logs = logs[live]
    top = float(logs.max())
    scaled = signs * np.exp(logs - top)
    total = math.fsum(scaled.tolist())
    cancelled = abs(total) < CANCELLATION_RTOL
    if total == 0.0:
        return LogValue.zero(cancelled=cancelled)
    return LogValue(1 if total > 0 else -1, top + math.log(abs(total)), cancelled)


def log_sum_exp_signed(terms: Sequence[LogValue]) -> LogValue:
    """Sum ``sign_i * exp(log_mag_i)`` without leaving log space.

    Terms are scaled by the largest magnitude before summation. If the
    result is smaller than ``CANCELLATION_RTOL`` times that magnitude the
    returned value carries ``cancelled=True`` (and may be exactly zero).
    """
    if not terms:
        return LogValue.zero()
    signs = np.fromiter((t.sign for t in terms), dtype=float, count=len(terms))
    logs = np.fromiter((t.log_mag for t in terms), dtype=float, count=len(terms))
    return log_sum_exp_arrays(signs, logs)


# -- binomial coefficients and probabilities ---------------------------------

def _stirlerr(k: np.ndarray) -> np.ndarray:
    """ln k! - ln(sqrt(2 pi k) (k/e)^k) for integer k >= 1 (vectorized)."""
    k = np.asarray(k, dtype=float)
    out = np.empty_like(k)
    small = k <= 15
    if small.any():
        out[small] = _STIRLERR_SMALL[k[small].astype(int)]
    big = ~small
    if big.any():
        kb = k[big]
        k2 = 1.0 / (kb * kb)
        out[big] = (1.0 / 12 - (1.0 / 360 - (1.0 / 1260 - (1.0 / 1680 - k2 / 1188) * k2) * k2) * k2) / kb
    return out


def _bd0(x: np.ndarray, np_: np.ndarray) -> np.ndarray:
    """Deviance x ln(x/np) + np - x, accurate when x is close to np."""
    x = np.asarray(x, dtype=float)
    np_ = np.asarray(np_, dtype=float)
    out = np.empty(np.broadcast(x, np_).shape)
    x, np_ = np.broadcast_arrays(x, np_)
    near = np.abs(x - np_) < 0.1 * (x + np_)
    far = ~near
    if far.any():
        xf, mf = x[far], np_[far]
        out[far] = xf * np.log(xf / mf) + mf - xf
    if near.any():
        xn, mn = x[near], np_[near]
        v = (xn - mn) / (xn + mn)
        s = (xn - mn) * v
        ej = 2.0 * xn * v
        v2 = v * v
        done = np.zeros(xn.shape, dtype=bool)
        for j in range(1, 1000):
            ej = ej * v2
            s1 = s + ej / (2 * j + 1)
            done |= s1 == s
            s = np.where(done, s, s1)
            if done.all():
                break
        out[near] = s
    return out


def _check_nj(n: int, j) -> None:
    if n < 1 or int(n) != n:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if np.any(np.asarray(j) < 0) or np.any(np.asarray(j) > n):
        raise ValueError(f"j must lie in [0, {n}], got {j!r}")


def _log_binomial_array(n: int, j: np.ndarray) -> np.ndarray:
    j = np.minimum(j, n - j)
    if n <= TABLE_MAX:
        return _LOG_FACTORIAL[n] - _LOG_FACTORIAL[j] - _LOG_FACTORIAL[n - j]
    out = np.zeros(j.shape)
    mid = j > 0
    jm = j[mid].astype(float)
    rest = n - jm
    out[mid] = (
        (_stirlerr(np.array([float(n)]))[0] - (_stirlerr(jm) + _stirlerr(rest)))
        + 0.5 * (math.log(n) - LN_2PI - np.log(jm) - np.log(rest))
        - jm * np.log(jm / n) - rest * np.log1p(-jm / n)
    )
    return out


def log_binomial(n: int, j: int) -> float:
    """Natural log of C(n, j).

    Table lookup for n <= 2048, a Stirling-error expansion beyond that.
    Symmetric in j <-> n - j by construction.
    """
    _check_nj(n, j)
    return float(_log_binomial_array(int(n), np.array([int(j)]))[0])


def _log_pmf_array(n: int, j: np.ndarray, x: float) -> np.ndarray:
    """ln P(S_n(x) = j) for an integer array j, saddle-point form."""
    j = np.asarray(j, dtype=np.int64)
    if x == 0.0:
        return np.where(j == 0, 0.0, -np.inf)
    if x == 1.0:
        return np.where(j == n, 0.0, -np.inf)
    if x > 0.5:
        # Reflect so the primary parameter is <= 1/2; 1 - x is exact here.
        j = n - j
        x = 1.0 - x
    q = 1.0 - x
    out = np.empty(j.shape)
    lo = j == 0
    hi = j == n
    out[lo] = n * math.log1p(-x)
    out[hi] = n * math.log(x)
    mid = ~(lo | hi)
    if mid.any():
        jm = j[mid].astype(float)
        rest = n - jm
        sn = _stirlerr(np.array([float(n)]))[0]
        lc = sn - (_stirlerr(jm) + _stirlerr(rest)) - (_bd0(jm, n * x) + _bd0(rest, n * q))
        lf = LN_2PI + (np.log(jm) + np.log(rest)) - math.log(n)
        out[mid] = lc - 0.5 * lf
    return out


def log_binomial_pmf(n: int, j: int, x: float) -> LogValue:
    """``P(S_n(x) = j)`` in log space, with the degenerate laws at x in {0, 1}."""
    _check_nj(n, j)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x!r}")
    value = float(_log_pmf_array(int(n), np.array([int(j)]), float(x))[0])
    return LogValue.from_log(value)


@lru_cache(maxsize=512)
def _cached_row(n: int, x: float) -> np.ndarray:
    row = _log_pmf_array(n, np.arange(n + 1), x)
    row.setflags(write=False)
    return row


def log_pmf_row(n: int, x: float) -> np.ndarray:
    """Read-only array of ``ln P(S_n(x) = j)`` for j = 0..n."""
    _check_nj(n, 0)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x!r}")
    return _cached_row(int(n), float(x))
