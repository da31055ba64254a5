"""Confidence intervals, e-posteriors and the interval loss for the normal location model."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from . import gauss
from .evariables import NormalECollection

STANDARD = "standard"
E_SUFFICIENT = "e-sufficient-bound"
E_EXACT = "e-exact"

BISECT_TOL = 1e-9
BISECT_MAX_ITER = 200


@dataclass(frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    level: float
    method: str
    fallback: bool = False

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"interval endpoints out of order: [{self.lo}, {self.hi}]")

    def __contains__(self, theta) -> bool:
        return self.lo <= theta <= self.hi

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def contains_interval(self, other: "ConfidenceInterval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "level": self.level, "method": self.method}

    def to_json(self, digits: int | None = None) -> str:
        d = self.to_dict()
        if digits is not None:
            d["lo"], d["hi"] = round(self.lo, digits), round(self.hi, digits)
        return json.dumps(d)


@dataclass(frozen=True)
class IntervalLoss:
    """``L_b(theta, [lo, hi]) = b`` when ``theta`` falls outside, else 0."""

    b: float

    def __post_init__(self):
        if not self.b >= 1:
            raise ValueError("interval losses need b >= 1")

    def __call__(self, theta, interval) -> float:
        lo, hi = (interval.lo, interval.hi) if isinstance(interval, ConfidenceInterval) else interval
        if lo <= theta <= hi:
            return 0.0
        return float(self.b)


@dataclass(frozen=True)
class EPosteriorCurve:
    grid: np.ndarray
    values: np.ndarray

    @property
    def capped(self) -> np.ndarray:
        return np.minimum(1.0, self.values)


def _check_level(alpha):
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")


def _check_n(n):
    if n < 1:
        raise ValueError("n must be >= 1")


def standard_ci(mle: float, n: float, alpha: float) -> ConfidenceInterval:
    """``mle -+ z_{alpha/2} / sqrt(n)``."""
    _check_n(n)
    _check_level(alpha)
    z = gauss.quantile(1.0 - alpha / 2.0) if alpha < 1 else 0.0
    h = z / math.sqrt(n)
    return ConfidenceInterval(mle - h, mle + h, alpha, STANDARD)


def g_of_c(c: float) -> float:
    return 0.5 * (math.sqrt(c) + 1.0 / math.sqrt(c))


def _c(n, log_term, coll: NormalECollection) -> float:
    return (coll.n_star / n) * log_term / math.log(2.0 / coll.alpha_star)


def sufficient_halfwidth(n: float, alpha: float, coll: NormalECollection) -> float:
    """``sqrt(2/n log(2/alpha)) g(c)``: outside this radius ``S_theta >= 1/alpha`` is guaranteed."""
    _check_n(n)
    _check_level(alpha)
    log_term = math.log(2.0 / alpha)
    return math.sqrt(2.0 / n * log_term) * g_of_c(_c(n, log_term, coll))


def e_ci_sufficient(mle: float, n: float, alpha: float, coll: NormalECollection) -> ConfidenceInterval:
    h = sufficient_halfwidth(n, alpha, coll)
    return ConfidenceInterval(mle - h, mle + h, alpha, E_SUFFICIENT)


def e_ci_exact(mle: float, n: float, alpha: float, coll: NormalECollection) -> ConfidenceInterval:
    """Boundary of ``{theta : S_theta < 1/alpha}`` by bisection on the distance from the MLE.

    ``S_theta`` depends on ``theta`` only through ``|mle - theta|`` and grows
    with it, so the set is an interval symmetric about the MLE.
    """
    bound = sufficient_halfwidth(n, alpha, coll)
    target = math.log(1.0 / alpha)

    def f(d):
        return coll.log_evaluate(mle + d, mle, n) - target

    lo, hi = 0.0, 2.0 * bound + 1.0 / math.sqrt(n)
    if f(hi) < 0 or f(lo) >= 0:
        return ConfidenceInterval(mle - bound, mle + bound, alpha, E_EXACT, fallback=True)
    for _ in range(BISECT_MAX_ITER):
        if hi - lo <= BISECT_TOL:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    d = min(hi, bound)
    return ConfidenceInterval(mle - d, mle + d, alpha, E_EXACT)


def e_ci_halfwidth_for_b(n: float, b: float, coll: NormalECollection) -> float:
    """Half-width making ``[mle -+ A]`` compatible with the collection for interval loss ``b``.

    Accepts an array of ``b`` values.
    """
    _check_n(n)
    b = np.asarray(b, dtype=float)
    if not np.all(b >= 1):
        raise ValueError("b must be >= 1")
    log_term = np.log(2.0 * b)
    c = _c(n, log_term, coll)
    out = math.sqrt(2.0 / n) * np.sqrt(log_term) * 0.5 * (np.sqrt(c) + 1.0 / np.sqrt(c))
    return float(out) if out.ndim == 0 else out


def e_posterior_curve(coll: NormalECollection, mle: float, n: float, grid) -> EPosteriorCurve:
    """``theta -> 1 / S_theta(y)`` on ``grid``; never normalized."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted")
    values = np.exp(-coll.log_evaluate(grid, mle, n))
    return EPosteriorCurve(grid, np.atleast_1d(values))


def cd_tail_curve(mle: float, n: float, grid) -> np.ndarray:
    """Twice the tail mass of the ``N(mle, 1/n)`` posterior beyond ``theta``."""
    grid = np.asarray(grid, dtype=float)
    return np.atleast_1d(2.0 * gauss.sf(np.abs(grid - mle) * math.sqrt(n)))


def check_eposterior_bound(coll: NormalECollection, mle: float, n: float, loss: IntervalLoss,
                           interval: ConfidenceInterval, ell: float = 1.0,
                           refine: int = 2000) -> bool:
    """Is ``b * sup_{theta outside interval} 1/S_theta(y) <= ell``?

    A rule may always pay the loss, so ``b <= ell`` is safe with any interval.
    Otherwise the supremum is taken over the endpoints plus a grid of points
    outside the interval spanning ten standard errors on each side.
    """
    if loss.b <= ell:
        return True
    lo, hi = interval.lo, interval.hi
    span = 10.0 / math.sqrt(n) + abs(mle - lo) + abs(mle - hi)
    t = np.linspace(0.0, span, refine + 1)
    outside = np.concatenate([lo - t, hi + t])
    if not lo <= mle <= hi:
        # the MLE itself lies outside, where 1/S is maximal
        outside = np.append(outside, mle)
    sup = float(np.max(np.exp(-coll.log_evaluate(outside, mle, n))))
    return loss.b * sup <= ell


def curve_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """``lo, lo + step, ...`` with ``floor((hi - lo)/step) + 1`` points."""
    if not step > 0:
        raise ValueError("step must be positive")
    if hi < lo:
        raise ValueError("hi must be >= lo")
    count = math.floor((hi - lo) / step * (1 + 1e-12)) + 1
    return lo + step * np.arange(count)


def curves_csv(coll: NormalECollection, mle: float, n: float, grid) -> str:
    curve = e_posterior_curve(coll, mle, n, grid)
    tail = cd_tail_curve(mle, n, grid)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "e_posterior_capped", "cd_tail"])
    for th, e, c in zip(curve.grid, curve.capped, tail):
        w.writerow(["%.17g" % th, "%.17g" % e, "%.17g" % c])
    return buf.getvalue()
