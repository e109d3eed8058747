"""Bernstein and Kantorovich-type operators on piecewise functions.

``L_{n,k} f(x) = E f((S_{n-k}(x) + W_k) / n)`` with ``W_k`` a perturbation
supported on [0, k]. ``W_k`` Irwin-Hall (a sum of k uniforms) gives the
Bernstein-Kantorovich operator; ``k = 0`` is the plain Bernstein operator.

Deviations ``|L f(x) - c|`` are never formed by subtracting ``c`` from the
operator value. The sum runs only over atoms where ``f - c`` can be
nonzero and stays in log space, so values far below binary64 underflow
are returned intact. Every outer sum runs in ascending ``j`` through a
correctly rounded summation, so results do not depend on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .functions import FunctionSpec, Interval, _depends_on_t, _eval, _family_knots, evaluate_array
from .numerics import LogValue, compensated_sum, log_pmf_row, log_sum_exp_arrays
from .quadrature import adaptive_gauss_legendre

__all__ = [
    "OperatorParams",
    "PerturbationSpec",
    "PreconditionError",
    "bernstein_eval",
    "bernstein_deviation",
    "central_moment",
    "irwin_hall_cdf",
    "irwin_hall_sf",
    "irwin_hall_pdf",
    "kantorovich_eval",
    "kantorovich_deviation",
    "kantorovich_monte_carlo",
    "DEFAULT_SEED",
    "DEFAULT_SAMPLES",
]

DEFAULT_SEED = 20240601
DEFAULT_SAMPLES = 10**6
QUAD_TOL = 1e-12
QUAD_MAX_DEPTH = 40
MAX_MOMENT_ORDER = 60
_CONST_TOL = 1e-12


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorParams:
    n: int
    k: int = 0
    x: float = 0.5

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise PreconditionError(f"n must be a positive integer, got {self.n!r}")
        if int(self.k) != self.k or self.k < 0:
            raise PreconditionError(f"k must be a nonnegative integer, got {self.k!r}")
        if self.k > 0 and not self.k < self.n:
            raise PreconditionError(f"need k < n, got n={self.n}, k={self.k}")
        if not 0.0 <= self.x <= 1.0:
            raise PreconditionError(f"x must lie in [0, 1], got {self.x!r}")


@dataclass(frozen=True)
class PerturbationSpec:
    """Law of W_k: ``irwin_hall``, ``point_mass`` at ``w``, or ``custom`` by CDF."""

    kind: str = "irwin_hall"
    w: Optional[float] = None
    cdf: Optional[Callable] = None

    @classmethod
    def irwin_hall(cls) -> "PerturbationSpec":
        return cls("irwin_hall")

    @classmethod
    def point_mass(cls, w: float) -> "PerturbationSpec":
        return cls("point_mass", w=float(w))

    @classmethod
    def custom(cls, cdf: Callable) -> "PerturbationSpec":
        return cls("custom", cdf=cdf)

    def validate(self, k: int) -> None:
        if self.kind == "irwin_hall":
            return
        if self.kind == "point_mass":
            if self.w is None or not 0.0 <= self.w <= k:
                raise PreconditionError(f"point mass must lie in [0, {k}], got {self.w!r}")
            return
        if self.kind != "custom" or self.cdf is None:
            raise PreconditionError(f"unknown perturbation kind {self.kind!r}")
        grid = np.linspace(0.0, k, 1001)
        vals = _call_cdf(self.cdf, grid)
        below = float(_call_cdf(self.cdf, np.array([-1e-12]))[0])
        if below != 0.0 or abs(vals[-1] - 1.0) > 1e-12 or np.any(np.diff(vals) < 0):
            raise PreconditionError("custom CDF must rise monotonically from 0 below 0 to 1 at k")


def _call_cdf(cdf, u):
    try:
        out = np.asarray(cdf(u), dtype=float)
        if out.shape == np.shape(u):
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(cdf(float(v))) for v in np.ravel(u)]).reshape(np.shape(u))


def _assert_constant_on(f: FunctionSpec, c: float, region: Interval) -> None:
    if region.is_point:
        samples = np.array([region.lo])
    else:
        samples = np.linspace(region.lo, region.hi, 102)[1:-1]
    vals = evaluate_array(f, samples)
    bad = np.abs(vals - c) > _CONST_TOL * max(1.0, abs(c))
    if bad.any():
        t = samples[bad][0]
        raise PreconditionError(f"f is not constant {c!r} on {region.to_text()}: f({t!r}) = {vals[bad][0]!r}")


# -- Bernstein -------------------------------------------------------------------

def bernstein_eval(f: FunctionSpec, n: int, x: float) -> float:
    """``B_n f(x) = sum_j f(j/n) C(n,j) x^j (1-x)^(n-j)``."""
    OperatorParams(n, 0, x)
    vals = evaluate_array(f, np.arange(n + 1) / n)
    weights = np.exp(log_pmf_row(n, x))
    return compensated_sum((vals * weights).tolist())


def bernstein_deviation(f: FunctionSpec, c: float, exclusion: Interval, n: int, x: float) -> LogValue:
    """``B_n f(x) - c`` in log space, summed only over atoms outside ``exclusion``."""
    OperatorParams(n, 0, x)
    _assert_constant_on(f, c, exclusion)
    t = np.arange(n + 1) / n
    keep = ~exclusion.contains(t)
    g = evaluate_array(f, t[keep]) - c
    logs = log_pmf_row(n, x)[keep]
    with np.errstate(divide="ignore"):
        return log_sum_exp_arrays(np.sign(g), np.log(np.abs(g)) + logs)


def central_moment(n: int, j: int, x: float) -> float:
    """``mu_{n,j}(x) = sum_i (i/n - x)^j P(S_n(x) = i)``."""
    if int(j) != j or j < 0:
        raise ValueError(f"moment order must be a nonnegative integer, got {j!r}")
    if j > MAX_MOMENT_ORDER:
        raise ValueError(f"moment order {j} exceeds the guard {MAX_MOMENT_ORDER}")
    OperatorParams(n, 0, x)
    dev = np.arange(n + 1) / n - x
    return compensated_sum((dev**j * np.exp(log_pmf_row(n, x))).tolist())


# -- Irwin-Hall law ------------------------------------------------------------------

def _ih_lower(k: int, t: np.ndarray) -> np.ndarray:
    # (1/k!) sum_{j <= floor t} (-1)^j C(k,j) (t-j)^k, for 0 <= t <= k/2.
    total = np.zeros(t.shape)
    for j in range(0, (k + 1) // 2 + 1):
        term = (-1) ** j * math.comb(k, j) * np.power(np.maximum(t - j, 0.0), k)
        total = total + np.where(t > j, term, 0.0)
    return total / math.factorial(k)


def irwin_hall_cdf(k: int, t):
    """``P(W_k <= t)`` for W_k a sum of k independent uniforms on [0, 1]."""
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    arr = np.asarray(t, dtype=float)
    half = 0.5 * k
    low = np.clip(arr, 0.0, half)
    high = np.clip(k - arr, 0.0, half)
    out = np.where(arr <= half, _ih_lower(k, low), 1.0 - _ih_lower(k, high))
    out = np.where(arr <= 0.0, 0.0, np.where(arr >= k, 1.0, out))
    return float(out) if np.ndim(t) == 0 else out


def irwin_hall_sf(k: int, t):
    """``P(W_k > t)``, accurate in the upper tail."""
    return irwin_hall_cdf(k, k - np.asarray(t, dtype=float))


def irwin_hall_pdf(k: int, u, cell=None):
    """Density of W_k; ``cell`` (floor of u) may be given to pin the polynomial branch."""
    u = np.asarray(u, dtype=float)
    if cell is None:
        cell = np.floor(u)
    total = np.zeros(u.shape)
    for j in range(k):
        term = (-1) ** j * math.comb(k, j) * np.power(np.maximum(u - j, 0.0), k - 1)
        total = total + np.where(cell >= j, term, 0.0)
    out = total / math.factorial(k - 1)
    return np.where((u < 0) | (u > k), 0.0, out)


def _ih_mass(k: int, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """``P(u1 < W_k < u2)`` without subtracting near-equal CDF values."""
    half = 0.5 * k
    u1 = np.clip(u1, 0.0, k)
    u2 = np.clip(u2, 0.0, k)
    f1 = _ih_lower(k, np.clip(u1, 0.0, half))
    f2 = _ih_lower(k, np.clip(u2, 0.0, half))
    s1 = _ih_lower(k, np.clip(k - u1, 0.0, half))
    s2 = _ih_lower(k, np.clip(k - u2, 0.0, half))
    both_low = f2 - f1
    both_high = s1 - s2
    split = (1.0 - f1) - s2
    out = np.where(u2 <= half, both_low, np.where(u1 >= half, both_high, split))
    return np.where(u2 > u1, out, 0.0)


# -- Kantorovich ------------------------------------------------------------------------

def _segments(iv: Interval, exclusion: Optional[Interval]):
    """Parts of piece ``iv`` outside ``exclusion`` (endpoints immaterial)."""
    if iv.is_point:
        return []
    if exclusion is None or exclusion.is_point:
        return [(iv.lo, iv.hi)]
    out = []
    if iv.lo < min(iv.hi, exclusion.lo):
        out.append((iv.lo, min(iv.hi, exclusion.lo)))
    if max(iv.lo, exclusion.hi) < iv.hi:
        out.append((max(iv.lo, exclusion.hi), iv.hi))
    return out


def _irwin_hall_inner(f: FunctionSpec, n: int, k: int, c: float, exclusion: Optional[Interval]) -> np.ndarray:
    """``E[(f - c)((j + W_k)/n)]`` for j = 0..n-k, W_k Irwin-Hall."""
    js = np.arange(n - k + 1, dtype=float)
    contrib = []
    quad_a, quad_b, quad_j, quad_piece, quad_cell = [], [], [], [], []
    pieces = f.pieces
    for pi, (iv, e) in enumerate(pieces):
        const = not _depends_on_t(e)
        value = float(_eval(e, np.array([iv.lo]))[0]) - c if const else None
        if const and value == 0.0:
            continue
        for lo, hi in _segments(iv, exclusion):
            u1 = np.clip(n * lo - js, 0.0, k)
            u2 = np.clip(n * hi - js, 0.0, k)
            if const:
                contrib.append(value * _ih_mass(k, u1, u2))
                continue
            knots = [kn for kn in _family_knots(e) if lo < kn < hi]
            for jj in np.nonzero(u2 > u1)[0]:
                cuts = {u1[jj], u2[jj]}
                cuts.update(float(i) for i in range(1, k) if u1[jj] < i < u2[jj])
                cuts.update(n * kn - js[jj] for kn in knots if u1[jj] < n * kn - js[jj] < u2[jj])
                cuts = sorted(cuts)
                for a, b in zip(cuts[:-1], cuts[1:]):
                    if b > a:
                        quad_a.append(a)
                        quad_b.append(b)
                        quad_j.append(js[jj])
                        quad_piece.append(pi)
                        quad_cell.append(math.floor(a))
    total = np.zeros(js.shape)
    if contrib:
        stacked = np.vstack(contrib)
        total = np.array([compensated_sum(col) for col in stacked.T.tolist()])
    if quad_a:
        qj = np.array(quad_j)
        qp = np.array(quad_piece)
        qc = np.array(quad_cell, dtype=float)

        def integrand(u, owner):
            out = np.empty(u.shape)
            t = (qj[owner] + u) / n
            for pi in np.unique(qp[owner]):
                m = qp[owner] == pi
                out[m] = _eval(pieces[pi][1], t[m]) - c
            return out * irwin_hall_pdf(k, u, qc[owner])

        def label(i):
            iv, e = pieces[qp[i]]
            return f"piece {iv.to_text()} at j={int(qj[i])}"

        vals = adaptive_gauss_legendre(integrand, np.array(quad_a), np.array(quad_b),
                                       tol=QUAD_TOL, max_depth=QUAD_MAX_DEPTH, label=label)
        total = total + np.bincount(qj.astype(int), weights=vals, minlength=js.size)
    return total


def _point_mass_inner(f: FunctionSpec, n: int, k: int, w: float, c: float, exclusion: Optional[Interval]) -> np.ndarray:
    t = (np.arange(n - k + 1) + w) / n
    g = evaluate_array(f, t) - c
    if exclusion is not None:
        g = np.where(exclusion.contains(t), 0.0, g)
    return g


def _inner(f, params: OperatorParams, w: PerturbationSpec, c: float, exclusion) -> np.ndarray:
    if w.kind == "irwin_hall":
        return _irwin_hall_inner(f, params.n, params.k, c, exclusion)
    return _point_mass_inner(f, params.n, params.k, w.w, c, exclusion)


def kantorovich_monte_carlo(f: FunctionSpec, params: OperatorParams, w: PerturbationSpec,
                            c: float = 0.0, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED):
    """Seeded Monte Carlo estimate of ``E (f - c)(T)``; returns ``(mean, stderr)``.

    ``S_{n-k}(x)`` and ``W_k`` are sampled jointly. Custom laws are sampled
    by bisection on their CDF.
    """
    n, k, x = params.n, params.k, params.x
    rng = np.random.default_rng(seed)
    s = rng.binomial(n - k, x, size=samples)
    if w.kind == "irwin_hall":
        wk = rng.random((samples, k)).sum(axis=1) if k else np.zeros(samples)
    elif w.kind == "point_mass":
        wk = np.full(samples, w.w)
    else:
        target = rng.random(samples)
        lo, hi = np.zeros(samples), np.full(samples, float(k))
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = _call_cdf(w.cdf, mid) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        wk = hi
    t = np.clip((s + wk) / n, 0.0, 1.0)
    g = evaluate_array(f, t) - c
    return float(g.mean()), float(g.std(ddof=1) / math.sqrt(samples))


def kantorovich_eval(f: FunctionSpec, params: OperatorParams, w: PerturbationSpec = PerturbationSpec(),
                     samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED) -> float:
    """``L_{n,k} f(x)``; ``k = 0`` delegates to :func:`bernstein_eval`.

    Irwin-Hall inner expectations are exact CDF differences on constant
    pieces and adaptive Gauss-Legendre elsewhere; point masses are exact;
    custom laws use seeded Monte Carlo with ``samples`` draws.
    """
    if params.k == 0:
        return bernstein_eval(f, params.n, params.x)
    w.validate(params.k)
    if w.kind == "custom":
        return kantorovich_monte_carlo(f, params, w, 0.0, samples, seed)[0]
    inner = _inner(f, params, w, 0.0, None)
    weights = np.exp(log_pmf_row(params.n - params.k, params.x))
    return compensated_sum((weights * inner).tolist())


def kantorovich_deviation(f: FunctionSpec, c: float, exclusion: Interval, params: OperatorParams,
                          w: PerturbationSpec = PerturbationSpec(),
                          samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED) -> LogValue:
    """``L_{n,k} f(x) - c`` in log space, integrating ``f - c`` only off ``exclusion``.

    Custom laws go through Monte Carlo on ``f - c`` directly, so that path
    is a sample mean rather than a cancellation-free sum.
    """
    if params.k == 0:
        return bernstein_deviation(f, c, exclusion, params.n, params.x)
    w.validate(params.k)
    _assert_constant_on(f, c, exclusion)
    if w.kind == "custom":
        return LogValue.from_real(kantorovich_monte_carlo(f, params, w, c, samples, seed)[0])
    inner = _inner(f, params, w, c, exclusion)
    logs = log_pmf_row(params.n - params.k, params.x)
    with np.errstate(divide="ignore"):
        return log_sum_exp_arrays(np.sign(inner), np.log(np.abs(inner)) + logs)
