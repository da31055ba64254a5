"""Data-dependent loss selectors that break p-value and CD based rules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate

from . import gauss
from .core import (AdversarySelector, GnpProblem, NullModel, TypeOneLoss, exact,
                   uniform_pvalue_null)

B_DISPLAY_CAP = 1e15

# selector thresholds, exact
_T_LOW = Fraction(1, 1000)
_T_HIGH = Fraction(2, 100)


def threshold_selector(pval) -> int:
    """Loss 1 above 0.02, loss 2 on (0.001, 0.02], loss 3 at or below 0.001."""
    # floats compare against the float thresholds so 0.02 lands in the middle cell
    exact_input = isinstance(pval, (int, Fraction))
    hi, lo = (_T_HIGH, _T_LOW) if exact_input else (float(_T_HIGH), float(_T_LOW))
    if pval > hi:
        return 1
    if pval > lo:
        return 2
    return 3


def _threshold_many(ps):
    ps = np.asarray(ps, dtype=float)
    return np.where(ps > float(_T_HIGH), 1, np.where(ps > float(_T_LOW), 2, 3))


THRESHOLD_SELECTOR = AdversarySelector(threshold_selector, "pval-threshold", _threshold_many)

THRESHOLD_LOSSES = (20, 100, 500)


def threshold_breakpoints(extra=()) -> list:
    """Every threshold at which the threshold-problem rules or selector can switch."""
    pts = {_T_LOW, _T_HIGH}
    pts |= {Fraction(1, v) for v in THRESHOLD_LOSSES}
    pts |= {Fraction(1, 20)}
    pts |= {exact(t) for t in extra}
    return sorted(pts)


def threshold_problem(extra_breakpoints=()) -> GnpProblem:
    """Three two-action losses ``{0, 1}`` with ``L_b(0, 1)`` = 20, 100, 500.

    The null is a strict uniform p-value discretized at the thresholds used by
    the naive rule, the NP(0.05) e-variable and the threshold selector.
    """
    null = uniform_pvalue_null(threshold_breakpoints(extra_breakpoints))
    losses = [TypeOneLoss.finite(i + 1, [0, 1], [0, v]) for i, v in enumerate(THRESHOLD_LOSSES)]
    return GnpProblem(losses, null)


def four_action_problem() -> GnpProblem:
    """One loss with actions 0..3 and ``L(0, a)`` = 0, 20, 100, 500."""
    null = uniform_pvalue_null(threshold_breakpoints())
    return GnpProblem([TypeOneLoss.finite(1, [0, 1, 2, 3], [0, 20, 100, 500])], null)


@dataclass(frozen=True)
class DyadicCase:
    problem: GnpProblem
    claimed: dict
    k: int


def dyadic_null(k: int) -> NullModel:
    """p-value on ``{1, 1/2, ..., 2^-k}`` with ``P(pval <= 2^-j) = 2^-j`` exactly."""
    outcomes = [Fraction(1, 2 ** j) for j in range(k + 1)]
    masses = [Fraction(1, 2 ** (j + 1)) for j in range(k)] + [Fraction(1, 2 ** k)]
    return NullModel.finite(outcomes, {"dyadic": masses})


def dyadic_problem(k: int, ell=1) -> DyadicCase:
    """The dyadic escalation problem with ``L(0, a) = 2a`` on ``{0, ell, 2 ell, ..., 2^k ell}``.

    ``claimed`` holds the risks 2k and k asserted for the naive and halved
    rules.  Exact evaluation on this literal construction gives (k+1)/2 and
    k+2 instead; see the decisions ledger.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ell = exact(ell)
    actions = [Fraction(0)] + [ell * 2 ** j for j in range(k + 1)]
    loss = TypeOneLoss.finite("dyadic", actions, [2 * a for a in actions])
    problem = GnpProblem([loss], dyadic_null(k))
    return DyadicCase(problem, {"naive-p": 2 * k * ell, "halved-p": k * ell}, k)


def dyadic_exact_risks(k: int) -> dict:
    """Closed forms for the literal construction at ``ell = 1``."""
    return {"naive-p": Fraction(k + 1, 2), "halved-p": Fraction(k + 2)}


# ---------------------------------------------------------------------------
# CD-breaking adversary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CdBreakingAdversary:
    """``B(y) = 1 / (2 Phi(-y + eps^2/y))`` for ``y >= eps``, else 1."""

    epsilon: float = 0.01

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def g0(self, y):
        return self.epsilon ** 2 / np.asarray(y, dtype=float)

    def b_of(self, y):
        return cd_breaking_b(y, self.epsilon)

    def log_b(self, y):
        y = np.asarray(y, dtype=float)
        active = y >= self.epsilon
        safe = np.where(active, y, 1.0)
        out = np.where(active, -math.log(2.0) - gauss.log_cdf(-safe + self.epsilon ** 2 / safe), 0.0)
        return float(out) if out.ndim == 0 else out

    def interval(self, y):
        return cd_interval(y, self.epsilon)

    def integrand(self, y):
        """``phi(y) B(y)``, computed in log space."""
        y = np.asarray(y, dtype=float)
        out = np.exp(gauss.logpdf(y) + self.log_b(y))
        return float(out) if out.ndim == 0 else out

    def selector(self) -> AdversarySelector:
        return AdversarySelector(self.b_of, "cd-breaking", self.b_of)


def cd_breaking_b(y, epsilon: float = 0.01):
    """The loss scale ``B(y)``.  Works on scalars and arrays; unclamped."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    # through log Phi so the tail stays accurate; beyond y ~ 37.5 the value overflows to inf
    with np.errstate(over="ignore"):
        out = np.exp(np.asarray(CdBreakingAdversary(epsilon).log_b(y)))
    return float(out) if out.ndim == 0 else out


def clamp_for_display(b) -> tuple:
    """``(value, clamped)`` with values above 1e15 replaced by the cap."""
    if b > B_DISPLAY_CAP:
        return B_DISPLAY_CAP, True
    return float(b), False


def cd_interval(y, epsilon: float = 0.01) -> tuple:
    """The CD-based ``1 - 1/B`` credible interval ``[g0(y), 2y - g0(y)]`` for ``y >= eps``.

    For ``y < eps`` there is no interval of this form; ``(nan, nan)`` is returned
    and callers count it as a miss.
    """
    if y < epsilon:
        return (math.nan, math.nan)
    g0 = epsilon ** 2 / y
    return (g0, 2 * y - g0)


def cd_divergence_lower_bound(y_max: float, epsilon: float = 0.01) -> float:
    """``(1/2) * int_eps^ymax exp(-y g0(y)) (y - g0(y)) dy`` with ``g0 = eps^2/y``.

    ``y g0(y) = eps^2`` is constant, so the integral has the closed form
    ``(1/2) e^{-eps^2} [(y^2 - eps^2)/2 - eps^2 log(y/eps)]``.  It lower-bounds
    ``int phi(y) B(y) dy`` via the Mills-ratio bound ``Phi(-t) <= phi(t)/t``.
    """
    e2 = epsilon * epsilon
    if y_max <= epsilon:
        return 0.0
    inner = 0.5 * (y_max * y_max - e2) - e2 * math.log(y_max / epsilon)
    return 0.5 * math.exp(-e2) * inner


def cd_asymptote(y, epsilon: float = 0.01):
    """``(y/2) e^{-eps^2}``, the large-``y`` behavior of ``phi(y) B(y)``."""
    return 0.5 * np.asarray(y, dtype=float) * math.exp(-epsilon * epsilon)


def cd_truncated_integral(y_max: float, epsilon: float = 0.01) -> float:
    """``int_eps^ymax phi(y) B(y) dy`` by adaptive quadrature."""
    adv = CdBreakingAdversary(epsilon)
    val, _ = integrate.quad(adv.integrand, epsilon, y_max, limit=200, epsabs=1e-12, epsrel=1e-12)
    return float(val)
