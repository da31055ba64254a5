"""The three decision rules under comparison.

* maximally compatible: the largest action with ``L(0, a) <= S(y) * ell``;
* naive p-value rule: the largest action with ``pval * L(0, a) <= ell``;
* halved p-value rule: the naive rule with ``pval / 2`` in place of ``pval``.

Ties go to the larger action.  With ``S = inf`` or ``pval = 0`` every finite
loss is admissible and the maximal action is taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (INF, DecisionRule, GnpProblem, NoFeasibleActionError, RiskBudget,
                   TypeOneLoss)

MAX_COMPATIBLE = "max-compatible"
NAIVE_P = "naive-p"
HALVED_P = "halved-p"


@dataclass(frozen=True)
class DecisionOutcome:
    action: object
    loss0_at_action: object
    statistic_value: object
    rule_tag: str


def _largest_finite(loss: TypeOneLoss, ok: Callable) -> int:
    # loss0 is nondecreasing, so the feasible actions form a prefix
    best = -1
    for i, v in enumerate(loss.table):
        if ok(v):
            best = i
        else:
            break
    if best < 0:
        raise NoFeasibleActionError(
            f"loss {loss.id!r}: least action has loss {loss.table[0]} above the bound")
    return best


def _largest_interval(loss: TypeOneLoss, bound) -> float:
    """Largest ``a`` in a union of intervals with ``loss0(a) <= bound``."""
    for k in range(len(loss.actions.intervals) - 1, -1, -1):
        lo, hi = loss.actions.intervals[k]
        if loss.fn(lo) > bound:
            continue
        top = loss.fn(hi)
        if top <= bound:
            if top == INF:
                raise NoFeasibleActionError(
                    f"loss {loss.id!r}: the maximal action {hi} carries infinite loss")
            return hi
        a = min(max(loss.inverse_on(k)(bound), lo), hi)
        # the float inverse may land one ulp high; walk down until the bound holds exactly
        while loss.fn(a) > bound and a > lo:
            a = max(math.nextafter(a, -INF), lo)
        return a
    raise NoFeasibleActionError(f"loss {loss.id!r}: no action has loss within {bound}")


def max_compatible_decide(s_value, loss: TypeOneLoss, budget: RiskBudget = RiskBudget()) -> DecisionOutcome:
    """Largest action with ``loss0(a) <= s_value * ell``."""
    if s_value < 0:
        raise ValueError("e-values are nonnegative")
    bound = INF if s_value == INF else s_value * budget.ell
    if loss.is_finite:
        i = _largest_finite(loss, lambda v: v <= bound)
        a = loss.actions.points[i]
    else:
        a = _largest_interval(loss, bound)
    return DecisionOutcome(a, loss.loss0(a), s_value, MAX_COMPATIBLE)


def _p_decide(pval, loss: TypeOneLoss, budget: RiskBudget, statistic, tag: str) -> DecisionOutcome:
    if not 0 <= pval <= 1:
        raise ValueError("p-values lie in [0, 1]")
    if loss.is_finite:
        i = _largest_finite(loss, lambda v: pval * v <= budget.ell)
        a = loss.actions.points[i]
    else:
        a = _largest_interval(loss, INF if pval == 0 else budget.ell / pval)
    return DecisionOutcome(a, loss.loss0(a), statistic, tag)


def naive_p_decide(pval, loss: TypeOneLoss, budget: RiskBudget = RiskBudget()) -> DecisionOutcome:
    """Largest action with ``pval * loss0(a) <= ell``."""
    return _p_decide(pval, loss, budget, pval, NAIVE_P)


def halved_p_decide(pval, loss: TypeOneLoss, budget: RiskBudget = RiskBudget()) -> DecisionOutcome:
    """Naive rule applied to ``pval / 2``."""
    if not 0 <= pval <= 1:
        raise ValueError("p-values lie in [0, 1]")
    return _p_decide(pval / 2, loss, budget, pval, HALVED_P)


# ---------------------------------------------------------------------------
# Vectorized forms used by the Monte Carlo engine (finite action spaces only)
# ---------------------------------------------------------------------------


def max_compatible_indices(s_values, loss: TypeOneLoss, ell: float = 1.0) -> np.ndarray:
    table = np.asarray([float(v) for v in loss.table])
    idx = np.searchsorted(table, np.asarray(s_values, dtype=float) * ell, side="right") - 1
    if np.any(idx < 0):
        raise NoFeasibleActionError(f"loss {loss.id!r}: least action above the bound")
    return idx


def naive_p_indices(pvals, loss: TypeOneLoss, ell: float = 1.0, scale: float = 1.0) -> np.ndarray:
    table = np.asarray([float(v) for v in loss.table])
    q = np.asarray(pvals, dtype=float) * scale
    # pval * v <= ell, evaluated as a product to match the scalar rule
    ok = q[:, None] * table[None, :] <= ell
    idx = ok.sum(axis=1) - 1
    if np.any(idx < 0):
        raise NoFeasibleActionError(f"loss {loss.id!r}: least action above the bound")
    return idx


# ---------------------------------------------------------------------------
# Rules over a whole problem
# ---------------------------------------------------------------------------


def max_compatible_rule(problem: GnpProblem, s, budget: RiskBudget = RiskBudget()) -> DecisionRule:
    """The maximally compatible rule for e-variable ``s`` on every loss of ``problem``."""

    def decide(b, y):
        return max_compatible_decide(s(y), problem.loss(b), budget).action

    def many(b, ys):
        loss = problem.loss(b)
        s_vals = s.evaluate_many(ys)
        points = np.asarray([float(a) for a in loss.actions.points])
        return points[max_compatible_indices(s_vals, loss, float(budget.ell))]

    table = None
    if problem.is_finite:
        table = {(l.id, y): decide(l.id, y) for l in problem.losses for y in problem.null.outcomes}
    return DecisionRule(decide, table, MAX_COMPATIBLE, many)


def _p_rule(problem: GnpProblem, pval: Callable, budget: RiskBudget, halved: bool) -> DecisionRule:
    fn = halved_p_decide if halved else naive_p_decide

    def decide(b, y):
        return fn(pval(y), problem.loss(b), budget).action

    def many(b, ys):
        loss = problem.loss(b)
        p = np.asarray(pval(np.asarray(ys)), dtype=float)
        points = np.asarray([float(a) for a in loss.actions.points])
        return points[naive_p_indices(p, loss, float(budget.ell), 0.5 if halved else 1.0)]

    table = None
    if problem.is_finite:
        table = {(l.id, y): decide(l.id, y) for l in problem.losses for y in problem.null.outcomes}
    return DecisionRule(decide, table, HALVED_P if halved else NAIVE_P, many)


def naive_p_rule(problem: GnpProblem, pval: Callable = lambda y: y,
                 budget: RiskBudget = RiskBudget()) -> DecisionRule:
    return _p_rule(problem, pval, budget, halved=False)


def halved_p_rule(problem: GnpProblem, pval: Callable = lambda y: y,
                  budget: RiskBudget = RiskBudget()) -> DecisionRule:
    return _p_rule(problem, pval, budget, halved=True)
