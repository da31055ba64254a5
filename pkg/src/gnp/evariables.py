"""E-variables and e-collections.

An e-variable is a nonnegative statistic whose expectation under every null
distribution is at most one.  Nothing here enforces that contract at
construction time; the test suite checks it exactly or by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import INF


@dataclass(frozen=True)
class EVariable:
    """``y -> S(y)``.  ``codomain`` lists the attainable values when known."""

    eval: Callable = field(compare=False)
    codomain: frozenset | None = None
    tag: str = ""
    vec: Callable | None = field(default=None, compare=False)

    def __call__(self, y):
        v = self.eval(y)
        if v < 0 or v != v:
            raise ValueError(f"e-variable {self.tag or ''} returned {v!r} at {y!r}")
        return v

    def evaluate_many(self, ys) -> np.ndarray:
        """Float values on an array of outcomes."""
        if self.vec is not None:
            return np.asarray(self.vec(np.asarray(ys)), dtype=float)
        return np.asarray([float(self(y)) for y in ys], dtype=float)

    @classmethod
    def from_table(cls, table: Mapping, tag: str = "table") -> "EVariable":
        table = dict(table)
        return cls(table.__getitem__, frozenset(table.values()), tag)

    @classmethod
    def constant(cls, c) -> "EVariable":
        return cls(lambda y: c, frozenset([c]), "constant")


@dataclass(frozen=True)
class ECollection:
    """``theta -> S_theta``, one e-variable per point null."""

    at: Callable = field(compare=False)
    domain: str = "R"


def np_evariable(alpha, pval: Callable = lambda y: y) -> EVariable:
    """``1/alpha`` where ``pval(y) <= alpha``, else 0.

    ``pval`` defaults to the identity, i.e. the outcome *is* the p-value.
    Exact arithmetic is kept when ``alpha`` is a Fraction.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    top = 1 / alpha if not isinstance(alpha, int) else Fraction(1, alpha)
    zero = top * 0

    def s(y):
        return top if pval(y) <= alpha else zero

    def vec(ys):
        return np.where(np.asarray(pval(ys)) <= float(alpha), float(top), 0.0)

    return EVariable(s, frozenset([zero, top]), f"np({alpha})", vec)


def lr_evariable(p0: Callable, p1: Callable) -> EVariable:
    """Likelihood ratio ``p1(y) / p0(y)``."""

    def s(y):
        num, den = p1(y), p0(y)
        if den == 0:
            if num == 0:
                return 0.0
            raise ZeroDivisionError(f"null density vanishes at {y!r} where the alternative does not")
        return num / den

    return EVariable(s, None, "lr")


def normal_lr_evariable(theta0: float, theta1: float) -> EVariable:
    """Likelihood ratio of N(theta1, 1) to N(theta0, 1) for one observation, in log space."""
    d = theta1 - theta0

    def s(y):
        return math.exp(d * (y - theta0) - 0.5 * d * d)

    def vec(ys):
        return np.exp(d * (np.asarray(ys, dtype=float) - theta0) - 0.5 * d * d)

    return EVariable(s, None, f"lr-normal({theta0},{theta1})", vec)


def calibrate_pvalue(p):
    """The calibrator ``1/sqrt(p) - 1``; ``inf`` at ``p = 0``.  Works on arrays."""
    if np.ndim(p) == 0:
        if p < 0 or p > 1:
            raise ValueError("p-value must lie in [0, 1]")
        if p == 0:
            return INF
        if isinstance(p, Fraction):
            r = _exact_sqrt(p)
            if r is not None:
                return 1 / r - 1
        return 1.0 / math.sqrt(p) - 1.0
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        return 1.0 / np.sqrt(p) - 1.0


def _exact_sqrt(q: Fraction):
    n, d = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if n * n == q.numerator and d * d == q.denominator:
        return Fraction(n, d)
    return None


def calibrated_evariable(pval: Callable = lambda y: y) -> EVariable:
    return EVariable(lambda y: calibrate_pvalue(pval(y)), None, "calibrated",
                     lambda ys: calibrate_pvalue(np.asarray(pval(ys), dtype=float)))


@dataclass(frozen=True)
class NormalECollection:
    """Two-sided normal-location e-collection tuned to an anticipated ``(n_star, alpha_star)``.

    For each ``theta`` the alternatives ``theta -+ U`` sit at
    ``U = sqrt(2 log(2/alpha_star) / n_star)`` and
    ``S_theta = (S_minus + S_plus) / 2`` with
    ``S_plus = exp(-n U^2/2 + n (mle - theta) U)``.  The collection can be
    evaluated at any sample size, not only ``n_star``.
    """

    n_star: float
    alpha_star: float

    def __post_init__(self):
        if self.n_star < 1:
            raise ValueError("n_star must be >= 1")
        if not 0 < self.alpha_star < 1:
            raise ValueError("alpha_star must lie in (0, 1)")

    @property
    def spacing(self) -> float:
        """``U`` for the two-sided collection."""
        return math.sqrt(2.0 * math.log(2.0 / self.alpha_star) / self.n_star)

    @property
    def one_sided_spacing(self) -> float:
        return math.sqrt(2.0 * math.log(1.0 / self.alpha_star) / self.n_star)

    def alternatives(self, theta: float) -> tuple:
        u = self.spacing
        return theta - u, theta + u

    def log_plus(self, theta, mle, n, one_sided: bool = False):
        u = self.one_sided_spacing if one_sided else self.spacing
        return -0.5 * n * u * u + n * (np.asarray(mle) - theta) * u

    def log_minus(self, theta, mle, n, one_sided: bool = False):
        u = self.one_sided_spacing if one_sided else self.spacing
        return -0.5 * n * u * u - n * (np.asarray(mle) - theta) * u

    def plus(self, theta, mle, n, one_sided: bool = True):
        """One-sided ``S_plus``; by default with the ``log(1/alpha_star)`` spacing."""
        return np.exp(self.log_plus(theta, mle, n, one_sided))

    def minus(self, theta, mle, n, one_sided: bool = True):
        return np.exp(self.log_minus(theta, mle, n, one_sided))

    def log_evaluate(self, theta, mle, n):
        """``log S_theta`` from the sufficient statistics, stable for large ``n``."""
        u = self.spacing
        z = np.abs(n * (np.asarray(mle, dtype=float) - theta) * u)
        out = -0.5 * n * u * u + z + np.log1p(np.exp(-2.0 * z)) - math.log(2.0)
        return float(out) if np.ndim(out) == 0 else out

    def evaluate(self, theta, mle, n):
        out = np.exp(self.log_evaluate(theta, mle, n))
        return float(out) if np.ndim(out) == 0 else out

    def __call__(self, theta, x: Sequence) -> float:
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            raise ValueError("need at least one observation")
        return self.evaluate(theta, float(x.mean()), x.size)

    def at(self, theta) -> EVariable:
        """``S_theta`` as an e-variable on samples ``x^n``."""
        return EVariable(lambda x: self(theta, x), None, f"normal@{theta}")

    def as_collection(self) -> ECollection:
        return ECollection(self.at, "R")


def normal_ecollection(n_star, alpha_star) -> NormalECollection:
    return NormalECollection(n_star, alpha_star)


def eprocess_trace(coll: NormalECollection, theta, x_sequence: Iterable) -> np.ndarray:
    """``S_theta`` evaluated on each prefix ``x^1, x^2, ...`` of the data."""
    x = np.asarray(list(x_sequence) if not isinstance(x_sequence, np.ndarray) else x_sequence,
                   dtype=float)
    if x.size == 0:
        raise ValueError("x_sequence must be nonempty")
    k = np.arange(1, x.size + 1)
    means = np.cumsum(x) / k
    return np.exp(coll.log_evaluate(theta, means, k))


def expectation(s: EVariable, pmf: Mapping):
    """Exact ``E_P[S]`` over a finite pmf (Fractions in, Fraction out)."""
    total = Fraction(0)
    for y, p in pmf.items():
        if p == 0:
            continue
        v = s(y)
        if v == INF:
            return INF
        total += p * v
    return total


def is_sharp_on(s: EVariable, pmfs: Iterable[Mapping]) -> bool:
    """``E_P[S] <= 1`` for every pmf and ``= 1`` for at least one."""
    values = [expectation(s, p) for p in pmfs]
    return all(v <= 1 for v in values) and any(v == 1 for v in values)

