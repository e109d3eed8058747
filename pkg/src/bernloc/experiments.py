"""Numerical checks of exponential local convergence and its limits.

Each routine returns plain rows so the CLI can print them and the test
suite can assert on them. Rows are always ordered by ``(n, x)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .functions import FunctionSpec, Interval, log_evaluate_array, parse_function_spec, sup_norm_details
from .numerics import LogValue, compensated_sum, log_binomial, log_pmf_row, log_sum_exp_arrays
from .operators import (
    OperatorParams,
    PerturbationSpec,
    PreconditionError,
    bernstein_deviation,
    bernstein_eval,
    kantorovich_deviation,
)
from .tails import kl_divergence

__all__ = [
    "BoundCheck",
    "DecayFit",
    "DegenerateFitError",
    "CorpusEntry",
    "load_corpus",
    "interior_grid",
    "is_antisymmetric",
    "locally_constant_check",
    "kantorovich_interval",
    "kantorovich_check",
    "decay_fit",
    "fit_decay",
    "sharpness_run",
    "SharpnessRow",
    "boundary_run",
    "BoundaryRun",
    "herzog_hill_run",
    "dloc_run",
    "DlocRow",
    "gaussian_abs_moment",
]


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class BoundCheck:
    n: int
    x: float
    error: LogValue
    bound: LogValue
    holds: bool
    slack: float
    a: float = math.nan
    b: float = math.nan
    c: float = math.nan
    k: int = 0


@dataclass(frozen=True)
class DecayFit:
    n_grid: tuple
    neg_log_errors: tuple
    slope: float
    intercept: float
    max_residual: float
    fit_points: int


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    spec: FunctionSpec
    c: float
    a: float
    b: float
    tags: tuple = field(default=())

    @property
    def two_sided(self) -> bool:
        return 0.0 < self.a and self.b < 1.0


@lru_cache(maxsize=1)
def load_corpus() -> tuple:
    """The versioned test-function corpus shipped with the package."""
    doc = json.loads(resources.files("bernloc").joinpath("data/corpus.json").read_text(encoding="utf-8"))
    return tuple(
        CorpusEntry(e["name"], parse_function_spec(e["spec"], e["name"]), float(e["c"]),
                    float(e["a"]), float(e["b"]), tuple(e.get("tags", ())))
        for e in doc["entries"]
    )


def interior_grid(a: float, b: float, points: int = 9) -> list:
    """``points`` equally spaced interior points of (a, b)."""
    return [a + (b - a) * i / (points + 1) for i in range(1, points + 1)]


def is_antisymmetric(f: FunctionSpec, points: int = 1001, tol: float = 1e-12) -> bool:
    from .functions import evaluate_array

    t = np.linspace(0.0, 1.0, points)
    return bool(np.all(np.abs(evaluate_array(f, t) + evaluate_array(f, 1.0 - t)) <= tol))


@lru_cache(maxsize=256)
def _sup(f: FunctionSpec, c: float) -> float:
    return sup_norm_details(f, c).value


def _assemble(n, x, error: LogValue, sup: float, log_terms: list, **extra) -> BoundCheck:
    if sup == 0.0 or not log_terms:
        bound = LogValue.zero()
    else:
        top = max(log_terms)
        bound = LogValue.from_log(math.log(sup) + top + math.log(math.fsum(math.exp(t - top) for t in log_terms)))
    error = abs(error)
    holds = error <= bound
    slack = math.inf if error.is_zero else bound.log_mag - error.log_mag
    return BoundCheck(n=n, x=x, error=error, bound=bound, holds=holds, slack=slack, **extra)


def locally_constant_check(f: FunctionSpec, c: float, a: float, b: float, n: int, x: float) -> BoundCheck:
    """Compare ``|B_n f(x) - c|`` with ``||f - c|| (e^{-n r(x,a)} + e^{-n r(x,b)})``.

    ``a = 0`` (``f = c`` on ``[0, b)``) drops the first exponential and
    ``b = 1`` (``f = c`` on ``(a, 1]``) drops the second; with both the
    function is globally constant and the error and bound are zero.
    """
    if not 0.0 <= a < x < b <= 1.0:
        raise PreconditionError(f"need 0 <= a < x < b <= 1, got a={a}, x={x}, b={b}")
    exclusion = Interval(a, b, a == 0.0, b == 1.0)
    error = bernstein_deviation(f, c, exclusion, n, x)
    terms = []
    if a > 0.0:
        terms.append(-n * kl_divergence(x, a))
    if b < 1.0:
        terms.append(-n * kl_divergence(x, b))
    return _assemble(n, x, error, _sup(f, c), terms, a=a, b=b, c=c)


def kantorovich_interval(a: float, b: float, n: int, k: int) -> tuple:
    """The admissible x-range ``(n a/(n-k), b - k/n)``; raises if empty."""
    lo, hi = n * a / (n - k), b - k / n
    if not lo < hi:
        raise PreconditionError(f"interval I = ({lo!r}, {hi!r}) is empty for n={n}, k={k}")
    return lo, hi


def kantorovich_check(f: FunctionSpec, c: float, a: float, b: float, params: OperatorParams,
                      w: PerturbationSpec = PerturbationSpec()) -> BoundCheck:
    """``|L_{n,k} f(x) - c|`` against ``||f-c|| (e^{-(n-k) r(x, na/(n-k))} + e^{-(n-k) r(x, b-k/n)})``."""
    if not 0.0 < a < b < 1.0:
        raise PreconditionError(f"need 0 < a < b < 1, got a={a}, b={b}")
    n, k, x = params.n, params.k, params.x
    if k >= n:
        raise PreconditionError(f"need k < n, got n={n}, k={k}")
    lo, hi = kantorovich_interval(a, b, n, k)
    if not lo < x < hi:
        raise PreconditionError(f"x={x!r} lies outside I = ({lo!r}, {hi!r})")
    error = kantorovich_deviation(f, c, Interval.open(a, b), params, w)
    terms = [-(n - k) * kl_divergence(x, lo), -(n - k) * kl_divergence(x, hi)]
    return _assemble(n, x, error, _sup(f, c), terms, a=a, b=b, c=c, k=k)


def fit_decay(n_grid: Sequence[int], neg_log_errors: Sequence[float], top_half: bool = True) -> DecayFit:
    n = np.asarray(n_grid, dtype=float)
    y = np.asarray(neg_log_errors, dtype=float)
    if n.size < 4:
        raise DegenerateFitError(f"need at least 4 points, got {n.size}")
    if np.any(np.diff(n) <= 0):
        raise DegenerateFitError("n grid must be strictly increasing")
    if not np.all(np.isfinite(y)):
        raise DegenerateFitError("some errors are exactly zero (or non-finite); nothing to fit")
    # Small-n points carry the largest log(n)/n prefactor contamination.
    start = n.size // 2 if top_half else 0
    slope, intercept = np.polyfit(n[start:], y[start:], 1)
    resid = y[start:] - (slope * n[start:] + intercept)
    return DecayFit(tuple(int(v) for v in n), tuple(float(v) for v in y), float(slope), float(intercept),
                    float(np.max(np.abs(resid))), int(n.size - start))


def decay_fit(checks: Sequence[BoundCheck], top_half: bool = True) -> DecayFit:
    """OLS of ``-log error`` against n; the slope is the empirical exponent."""
    checks = sorted(checks, key=lambda ch: ch.n)
    if any(ch.error.is_zero for ch in checks):
        raise DegenerateFitError("some errors are exactly zero; nothing to fit")
    return fit_decay([ch.n for ch in checks], [-ch.error.log_mag for ch in checks], top_half)


@dataclass(frozen=True)
class SharpnessRow:
    N: int
    exact: LogValue
    asymptotic: LogValue
    ratio: float
    printed_ratio: float


def sharpness_run(k: int, m: int, x: float, n_grid: Sequence[int]) -> list:
    """``P(S_{nm}(x) = nk)`` against its Stirling asymptotic, b = k/m.

    ``asymptotic`` uses the prefactor ``1/sqrt(2 pi N b(1-b))``;
    ``printed_ratio`` is the ratio against ``1/sqrt(2 N b(1-b))``.
    """
    if not (m >= 2 and 1 <= k <= m - 1):
        raise PreconditionError(f"need m >= 2 and 1 <= k <= m-1, got k={k}, m={m}")
    b = k / m
    if not 0.0 < x < b:
        raise PreconditionError(f"need 0 < x < b = {b}, got {x}")
    rows = []
    for n in sorted(n_grid):
        N = n * m
        exact = log_binomial(N, n * k) + n * k * math.log(x) + n * (m - k) * math.log1p(-x)
        rate = N * kl_divergence(x, b)
        asym = -rate - 0.5 * math.log(2.0 * math.pi * N * b * (1.0 - b))
        printed = -rate - 0.5 * math.log(2.0 * N * b * (1.0 - b))
        rows.append(SharpnessRow(N, LogValue.from_log(exact), LogValue.from_log(asym),
                                 math.exp(exact - asym), math.exp(exact - printed)))
    return rows


def gaussian_abs_moment(s: float) -> float:
    """``E|Z|^s`` for a standard normal Z."""
    return math.exp(0.5 * s * math.log(2.0) + math.lgamma((s + 1.0) / 2.0) - 0.5 * math.log(math.pi))


@dataclass(frozen=True)
class BoundaryRun:
    rows: tuple  # of (n, scaled, symmetry_gap)
    limit_constant: float


def boundary_run(s: float, n_grid: Sequence[int]) -> BoundaryRun:
    """``n^{s/2} B_n f_s(1/2)`` for ``f_s(t) = (t - 1/2)_+^s``.

    ``symmetry_gap`` is ``|E(S/n - 1/2)_+^s - E|S/n - 1/2|^s / 2|`` by direct
    summation, zero for the symmetric law of ``S_n(1/2)``.
    """
    if not s > 0:
        raise PreconditionError(f"need s > 0, got {s}")
    f = parse_function_spec(f"power_plus(0.5, {s!r}) on [0,1]")
    rows = []
    for n in sorted(n_grid):
        value = bernstein_eval(f, n, 0.5)
        absolute = np.abs(np.arange(n + 1) / n - 0.5) ** s
        half_abs = 0.5 * compensated_sum((absolute * np.exp(log_pmf_row(n, 0.5))).tolist())
        rows.append((n, n ** (s / 2.0) * value, abs(value - half_abs)))
    return BoundaryRun(tuple(rows), gaussian_abs_moment(s) / 2.0 ** (s + 1.0))


def herzog_hill_run(b: float, n_grid: Sequence[int]) -> list:
    """``B_n 1_{[b,1]}(b)`` along ``n_grid``; tends to 1/2, not to 1."""
    if not 0.0 < b < 1.0:
        raise PreconditionError(f"need 0 < b < 1, got {b}")
    f = parse_function_spec(f"0 on [0,{b!r}); 1 on [{b!r},1]")
    return [(n, bernstein_eval(f, n, b)) for n in sorted(n_grid)]


@dataclass(frozen=True)
class DlocRow:
    n: int
    log_error: float
    paper_lower_bound: float
    sublinearity: float


def dloc_run(alpha: float, n_grid: Sequence[int]) -> list:
    """``B_{2n} f(1/2)`` for ``f(t) = exp(-|t - 1/2|^-alpha)``, entirely in log space.

    ``paper_lower_bound`` is ``log f((n-1)/(2n)) + log P(S_{2n}(1/2) = n-1)``
    and ``sublinearity`` is ``-log_error / n``. The function is only ever
    evaluated in strict log mode, so an accidental linear-space fallback
    raises instead of silently underflowing.
    """
    if not 0.0 < alpha < 1.0:
        raise PreconditionError(f"need 0 < alpha < 1, got {alpha}")
    f = parse_function_spec(f"exp_cusp(0.5, {alpha!r}) on [0,1]")
    rows = []
    for n in sorted(n_grid):
        N = 2 * n
        t = np.arange(N + 1) / N
        signs, logs = log_evaluate_array(f, t, strict=True)
        signs[n] = 0.0  # f(1/2) = 0: the atom at the cusp is excluded
        pmf = log_pmf_row(N, 0.5)
        total = log_sum_exp_arrays(signs, logs + pmf)
        s_lb, l_lb = log_evaluate_array(f, np.array([(n - 1) / N]), strict=True)
        lower = float(l_lb[0]) + float(pmf[n - 1])
        rows.append(DlocRow(n, total.log_mag, lower, -total.log_mag / n))
    return rows
