"""Decision problems with post-hoc Type-I losses.

A problem is a family of Type-I loss functions ``L_b(0, .)``, one per loss
index ``b``, each over its own ordered action space, together with a null
model for the outcome ``Y``.  Type-II losses are never stored: after the
usual pruning of dominated actions a larger Type-I loss always means a smaller
Type-II loss, so the Type-I ordering carries all the information.

Finite problems are meant to be built from :class:`fractions.Fraction`
values so that risks such as 39/40 and 41/40 are compared exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from types import MappingProxyType
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

INF = math.inf


class GnpError(Exception):
    """Base class for errors raised by this package."""


class StructureError(GnpError, ValueError):
    """A rule, selector or table refers to something the problem lacks."""


class NoFeasibleActionError(GnpError, ValueError):
    """Not even the least action satisfies the compatibility bound."""


class ProblemFileError(GnpError, ValueError):
    """Malformed problem file; ``where`` names the offending field or line."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def exact(x) -> Real:
    """Coerce ints, decimal strings and ``"num/den"`` strings to Fraction.

    Floats are converted through ``repr`` so that 0.05 becomes 1/20 rather
    than the binary expansion.  ``inf`` stays a float.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if math.isinf(x):
            return x
        if math.isnan(x):
            raise ValueError("NaN is not a valid value")
        return Fraction(repr(x))
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return INF
        return Fraction(s)
    raise TypeError(f"cannot interpret {x!r} as a number")


def fmt_fraction(x) -> str:
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)
    return repr(x)


# ---------------------------------------------------------------------------
# Action spaces and losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActionSpace:
    """Either a finite sorted list of actions or a sorted union of closed intervals.

    Actions are nonnegative reals; interval endpoints may be ``inf``.
    """

    kind: str
    points: tuple = ()
    intervals: tuple = ()

    def __post_init__(self):
        if self.kind == "finite":
            if not self.points:
                raise ValueError("finite action space must be nonempty")
            if any(a < 0 for a in self.points):
                raise ValueError("actions must be nonnegative")
            if any(b <= a for a, b in zip(self.points, self.points[1:])):
                raise ValueError("finite actions must be strictly increasing")
        elif self.kind == "intervals":
            if not self.intervals:
                raise ValueError("interval action space must be nonempty")
            prev_hi = None
            for lo, hi in self.intervals:
                if lo < 0 or hi < lo:
                    raise ValueError(f"bad interval [{lo}, {hi}]")
                if prev_hi is not None and lo <= prev_hi:
                    raise ValueError("intervals must be disjoint and sorted")
                prev_hi = hi
        else:
            raise ValueError(f"unknown action space kind {self.kind!r}")

    @classmethod
    def finite(cls, actions: Iterable) -> "ActionSpace":
        return cls("finite", points=tuple(actions))

    @classmethod
    def union(cls, intervals: Iterable[tuple]) -> "ActionSpace":
        return cls("intervals", intervals=tuple((lo, hi) for lo, hi in intervals))

    @property
    def least(self):
        return self.points[0] if self.kind == "finite" else self.intervals[0][0]

    @property
    def greatest(self):
        return self.points[-1] if self.kind == "finite" else self.intervals[-1][1]

    def __contains__(self, a) -> bool:
        if self.kind == "finite":
            return a in self.points
        return any(lo <= a <= hi for lo, hi in self.intervals)

    def __len__(self) -> int:
        if self.kind != "finite":
            raise TypeError("interval action spaces have no length")
        return len(self.points)

    def __iter__(self):
        if self.kind != "finite":
            raise TypeError("cannot iterate an interval action space")
        return iter(self.points)


@dataclass(frozen=True)
class TypeOneLoss:
    """One Type-I loss ``a -> L_b(0, a)`` over its action space.

    Finite spaces store ``table`` aligned with ``actions.points``.  Interval
    spaces store a continuous increasing ``fn`` and its ``inverse``; the
    inverse may be a single callable or one callable per interval.  A
    ``theta_fn(theta, a)`` makes the loss parameter-dependent.
    """

    id: Hashable
    actions: ActionSpace
    table: tuple = ()
    fn: Callable | None = field(default=None, compare=False)
    inverse: Any = field(default=None, compare=False)
    theta_fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.actions.kind == "finite":
            if len(self.table) != len(self.actions.points):
                raise ValueError(f"loss {self.id!r}: loss0 table does not match actions")
            for v in self.table:
                if v < 0 or (isinstance(v, float) and math.isnan(v)):
                    raise ValueError(f"loss {self.id!r}: loss values must be nonnegative")
                if v == INF:
                    raise ValueError(f"loss {self.id!r}: finite actions need finite losses")
            if any(b < a for a, b in zip(self.table, self.table[1:])):
                raise ValueError(f"loss {self.id!r}: loss0 must be nondecreasing in the action")
        else:
            if self.fn is None or self.inverse is None:
                raise ValueError(f"loss {self.id!r}: interval spaces need loss0 and its inverse")
            ends = [self.fn(x) for iv in self.actions.intervals for x in iv]
            if any(b < a for a, b in zip(ends, ends[1:])):
                raise ValueError(f"loss {self.id!r}: loss0 must be nondecreasing")

    @classmethod
    def finite(cls, id: Hashable, actions: Sequence, loss0: Sequence) -> "TypeOneLoss":
        return cls(id, ActionSpace.finite(actions), tuple(loss0))

    @classmethod
    def continuous(cls, id, intervals, loss0: Callable, inverse) -> "TypeOneLoss":
        return cls(id, ActionSpace.union(intervals), fn=loss0, inverse=inverse)

    @property
    def is_finite(self) -> bool:
        return self.actions.kind == "finite"

    def loss0(self, a):
        if self.is_finite:
            try:
                return self.table[self.actions.points.index(a)]
            except ValueError:
                raise StructureError(f"action {a!r} is not in the action space of loss {self.id!r}")
        if a not in self.actions:
            raise StructureError(f"action {a!r} is not in the action space of loss {self.id!r}")
        return self.fn(a)

    def at(self, theta, a):
        if self.theta_fn is not None:
            return self.theta_fn(theta, a)
        return self.loss0(a)

    def inverse_on(self, k: int) -> Callable:
        if callable(self.inverse):
            return self.inverse
        return self.inverse[k]


@dataclass(frozen=True)
class RiskBudget:
    """The Type-I risk bound ``ell`` (default 1)."""

    ell: Real = 1

    def __post_init__(self):
        if not self.ell > 0:
            raise ValueError("ell must be positive")


# ---------------------------------------------------------------------------
# Null models and problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NullModel:
    """Finite outcome list with one or more pmfs, or a unit-variance normal location model."""

    kind: str
    outcomes: tuple = ()
    pmfs: Mapping = field(default_factory=dict)
    thetas: tuple | None = None
    n: int = 1

    def __post_init__(self):
        if self.kind == "finite":
            if not self.outcomes or not self.pmfs:
                raise ValueError("finite null needs outcomes and at least one pmf")
            if len(set(self.outcomes)) != len(self.outcomes):
                raise ValueError("outcomes must be distinct")
            for pid, p in self.pmfs.items():
                if len(p) != len(self.outcomes):
                    raise ValueError(f"pmf {pid!r} has {len(p)} masses for {len(self.outcomes)} outcomes")
                if any(q < 0 for q in p):
                    raise ValueError(f"pmf {pid!r} has a negative mass")
                if abs(sum(p) - 1) > 1e-12:
                    raise ValueError(f"pmf {pid!r} sums to {sum(p)}, not 1")
            object.__setattr__(self, "pmfs", MappingProxyType(dict(self.pmfs)))
        elif self.kind == "normal":
            if self.n < 1:
                raise ValueError("sample length must be >= 1")
        else:
            raise ValueError(f"unknown null model kind {self.kind!r}")

    @classmethod
    def finite(cls, outcomes: Sequence, pmfs: Mapping[Hashable, Sequence]) -> "NullModel":
        return cls("finite", tuple(outcomes), {k: tuple(v) for k, v in pmfs.items()})

    @classmethod
    def normal(cls, n: int = 1, thetas: Sequence | None = None) -> "NullModel":
        return cls("normal", thetas=None if thetas is None else tuple(thetas), n=n)

    @property
    def pmf_ids(self) -> tuple:
        return tuple(self.pmfs)

    def pmf(self, pmf_id=None) -> dict:
        if self.kind != "finite":
            raise StructureError("only finite null models have a pmf table")
        if pmf_id is None:
            if len(self.pmfs) != 1:
                raise StructureError("several pmfs present; name one")
            pmf_id = next(iter(self.pmfs))
        try:
            return dict(zip(self.outcomes, self.pmfs[pmf_id]))
        except KeyError:
            raise StructureError(f"unknown pmf {pmf_id!r}")

    @property
    def full_support(self) -> bool:
        if self.kind != "finite":
            return True
        return all(q > 0 for p in self.pmfs.values() for q in p)

    def support(self) -> tuple:
        """Outcomes with positive mass under at least one pmf."""
        return tuple(y for i, y in enumerate(self.outcomes) if any(p[i] > 0 for p in self.pmfs.values()))


def uniform_pvalue_null(breakpoints: Iterable) -> NullModel:
    """Discretize a strict (uniform) p-value at the given breakpoints.

    Each cell ``(t_{i-1}, t_i]`` becomes one outcome, labelled by its right
    endpoint, with mass equal to the cell width.  Any rule or selector built
    from comparisons of the form ``pval <= t`` with ``t`` among the
    breakpoints is constant on each cell, so risks on this finite model are
    the exact integrals against the uniform distribution.
    """
    pts = sorted({exact(t) for t in breakpoints if 0 < exact(t) < 1} | {Fraction(1)})
    lo = Fraction(0)
    masses = []
    for t in pts:
        masses.append(t - lo)
        lo = t
    return NullModel.finite(pts, {"uniform": masses})


@dataclass(frozen=True)
class GnpProblem:
    """A family of Type-I losses plus the null model.

    ``theta_indexed`` marks a decision (rather than testing) problem whose
    losses depend on the parameter through ``TypeOneLoss.theta_fn``.
    """

    losses: tuple
    null: NullModel
    theta_indexed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "losses", tuple(self.losses))
        ids = [l.id for l in self.losses]
        if len(set(ids)) != len(ids):
            raise ValueError(f"loss ids must be unique, got {ids}")
        if not self.theta_indexed and any(l.theta_fn is not None for l in self.losses):
            raise ValueError("testing problems cannot have parameter-dependent losses")

    @property
    def loss_ids(self) -> tuple:
        return tuple(l.id for l in self.losses)

    def loss(self, b) -> TypeOneLoss:
        for l in self.losses:
            if l.id == b:
                return l
        raise StructureError(f"unknown loss id {b!r}")

    @property
    def is_finite(self) -> bool:
        return self.null.kind == "finite" and all(l.is_finite for l in self.losses)


# ---------------------------------------------------------------------------
# Rules and selectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecisionRule:
    """``(b, y) -> action``.  Finite rules keep their table for inspection."""

    decide: Callable = field(compare=False)
    table: Mapping | None = None
    tag: str = ""
    many: Callable | None = field(default=None, compare=False)

    def __call__(self, b, y):
        return self.decide(b, y)

    def decide_many(self, b, ys):
        """Actions for an array of outcomes under loss ``b``."""
        if self.many is not None:
            return self.many(b, ys)
        return [self.decide(b, y) for y in ys]

    @classmethod
    def from_table(cls, table: Mapping, tag: str = "table") -> "DecisionRule":
        frozen = MappingProxyType(dict(table))

        def decide(b, y):
            try:
                return frozen[(b, y)]
            except KeyError:
                raise StructureError(f"rule has no entry for loss {b!r}, outcome {y!r}")

        return cls(decide, frozen, tag)

    def tabulate(self, problem: GnpProblem) -> dict:
        return {(l.id, y): self(l.id, y) for l in problem.losses for y in problem.null.outcomes}

    def extended(self, extra: Mapping, tag: str | None = None) -> "DecisionRule":
        """Copy of a table rule with additional or replaced entries."""
        if self.table is None:
            raise TypeError("only table rules can be extended")
        return DecisionRule.from_table({**self.table, **extra}, tag or self.tag)


@dataclass(frozen=True)
class AdversarySelector:
    """The data-dependent loss choice ``y -> B(y)``."""

    select: Callable = field(compare=False)
    tag: str = "constant"
    many: Callable | None = field(default=None, compare=False)

    def __call__(self, y):
        return self.select(y)

    def select_many(self, ys):
        if self.many is not None:
            return self.many(ys)
        return [self.select(y) for y in ys]

    @classmethod
    def constant(cls, b) -> "AdversarySelector":
        return cls(lambda y: b, "constant")

    @classmethod
    def from_map(cls, mapping: Mapping, tag: str = "map") -> "AdversarySelector":
        frozen = MappingProxyType(dict(mapping))
        return cls(frozen.__getitem__, tag)


# ---------------------------------------------------------------------------
# Compatibility, risk, enlargement
# ---------------------------------------------------------------------------


def _rule_loss(problem: GnpProblem, rule: DecisionRule, b, y, theta=None):
    loss = problem.loss(b)
    a = rule(b, y)
    if a not in loss.actions:
        raise StructureError(f"rule picked {a!r}, not an action of loss {b!r}")
    return loss.loss0(a) if theta is None else loss.at(theta, a)


def is_compatible(rule: DecisionRule, s, problem: GnpProblem, budget: RiskBudget = RiskBudget(),
                  outcomes: Iterable | None = None, thetas: Iterable | None = None) -> bool:
    """True iff ``L_b(0, rule(b, y)) <= S(y) * ell`` for every probed ``y`` and every ``b``.

    For finite null models every outcome is probed unless ``outcomes`` is
    given.  Parameter-indexed problems take an e-collection ``s`` with an
    ``at(theta)`` method and need ``thetas``.
    """
    if rule.table is not None:
        unknown = {b for b, _ in rule.table} - set(problem.loss_ids)
        if unknown:
            raise StructureError(f"rule refers to unknown loss ids {sorted(map(str, unknown))}")
    if outcomes is None:
        if problem.null.kind != "finite":
            raise StructureError("continuous null: supply a finite probe set of outcomes")
        outcomes = problem.null.outcomes
    outcomes = tuple(outcomes)
    if problem.theta_indexed:
        if thetas is None:
            raise StructureError("parameter-indexed problem: supply the thetas to check")
        for theta in thetas:
            s_theta = s.at(theta)
            for y in outcomes:
                bound = s_theta(y) * budget.ell
                if any(_rule_loss(problem, rule, l.id, y, theta) > bound for l in problem.losses):
                    return False
        return True
    for y in outcomes:
        bound = s(y) * budget.ell
        for l in problem.losses:
            if _rule_loss(problem, rule, l.id, y) > bound:
                return False
    return True


def exact_type_one_risk(problem: GnpProblem, rule: DecisionRule, selector: AdversarySelector,
                        pmf_id=None):
    """``E_P0[L_B(Y)(0, rule(B(Y), Y))]`` summed exactly over a finite null.

    Returns a Fraction when every mass and loss is a Fraction.  An infinite
    loss on an outcome of positive mass gives ``inf``.
    """
    pmf = problem.null.pmf(pmf_id)
    total = Fraction(0)
    for y, p in pmf.items():
        if p == 0:
            continue
        b = selector(y)
        if b not in problem.loss_ids:
            raise StructureError(f"selector chose unknown loss {b!r}")
        v = _rule_loss(problem, rule, b, y)
        if v == INF:
            return INF
        total += p * v
    return total


def max_loss_table(problem: GnpProblem, rule: DecisionRule) -> dict:
    """``y -> max_b L_b(0, rule(b, y))``, the smallest dominating function."""
    return {y: max(_rule_loss(problem, rule, l.id, y) for l in problem.losses)
            for y in problem.null.outcomes}


def worst_case_type_one_risk(problem: GnpProblem, rule: DecisionRule) -> dict:
    """Per pmf, the risk under the adversary that always picks the worst loss."""
    u = max_loss_table(problem, rule)
    out = {}
    for pid in problem.null.pmf_ids:
        total = Fraction(0)
        for y, p in problem.null.pmf(pid).items():
            if p == 0:
                continue
            if u[y] == INF:
                total = INF
                break
            total += p * u[y]
        out[pid] = total
    return out


def enlarge_with_id(problem: GnpProblem, s, loss_id: Hashable | None = None) -> GnpProblem:
    """Append the identity loss of ``s``: actions are the values of ``s`` and ``L(0, s) = s``."""
    if problem.null.kind != "finite":
        raise StructureError("enlargement needs an enumerable outcome space")
    values = sorted({s(y) for y in problem.null.outcomes})
    if loss_id is None:
        loss_id = "id(S)"
        k = 2
        while loss_id in problem.loss_ids:
            loss_id = f"id(S)#{k}"
            k += 1
    elif loss_id in problem.loss_ids:
        raise ValueError(f"loss id {loss_id!r} already present")
    new = TypeOneLoss.finite(loss_id, values, values)
    return GnpProblem(problem.losses + (new,), problem.null, problem.theta_indexed)


# ---------------------------------------------------------------------------
# Problem files
# ---------------------------------------------------------------------------


def _num(x, where: str):
    if isinstance(x, (int, float, str)) and not isinstance(x, bool):
        try:
            return exact(x)
        except (ValueError, ZeroDivisionError):
            pass
    raise ProblemFileError(where, f"expected a number or 'num/den' string, got {x!r}")


def _scalar(x, where: str):
    """Outcome labels: numbers become Fractions, other strings stay labels."""
    if isinstance(x, str):
        try:
            return exact(x)
        except (ValueError, ZeroDivisionError):
            return x
    return _num(x, where)


def problem_from_dict(doc: Mapping) -> tuple:
    """Parse the problem-file document; returns ``(problem, evariable_table_or_None, rule_or_None)``.

    The e-variable comes back as a dict ``outcome -> value``.  An optional
    ``"rule"`` key (``{loss id: [action per outcome]}``) names a rule to audit.
    """
    if not isinstance(doc, Mapping):
        raise ProblemFileError("<root>", "top level must be an object")
    for key in ("outcomes", "pmfs", "losses"):
        if key not in doc:
            raise ProblemFileError(key, "missing required field")
    if not isinstance(doc["outcomes"], list) or not doc["outcomes"]:
        raise ProblemFileError("outcomes", "must be a nonempty list")
    outcomes = [_scalar(v, f"outcomes[{i}]") for i, v in enumerate(doc["outcomes"])]
    pmfs = {}
    if not isinstance(doc["pmfs"], list) or not doc["pmfs"]:
        raise ProblemFileError("pmfs", "must be a nonempty list")
    for i, p in enumerate(doc["pmfs"]):
        where = f"pmfs[{i}]"
        if not isinstance(p, Mapping) or "id" not in p or "p" not in p:
            raise ProblemFileError(where, "needs 'id' and 'p'")
        if not isinstance(p["p"], list) or len(p["p"]) != len(outcomes):
            raise ProblemFileError(f"{where}.p", f"must list {len(outcomes)} probabilities")
        pmfs[p["id"]] = [_num(q, f"{where}.p[{j}]") for j, q in enumerate(p["p"])]
    losses = []
    if not isinstance(doc["losses"], list) or not doc["losses"]:
        raise ProblemFileError("losses", "must be a nonempty list")
    for i, l in enumerate(doc["losses"]):
        where = f"losses[{i}]"
        if not isinstance(l, Mapping) or not {"id", "actions", "loss0"} <= set(l):
            raise ProblemFileError(where, "needs 'id', 'actions' and 'loss0'")
        if not isinstance(l["actions"], list) or not isinstance(l["loss0"], list):
            raise ProblemFileError(where, "'actions' and 'loss0' must be lists")
        if len(l["actions"]) != len(l["loss0"]):
            raise ProblemFileError(f"{where}.loss0", "must align with actions")
        acts = [_num(a, f"{where}.actions[{j}]") for j, a in enumerate(l["actions"])]
        vals = [_num(v, f"{where}.loss0[{j}]") for j, v in enumerate(l["loss0"])]
        try:
            losses.append(TypeOneLoss.finite(l["id"], acts, vals))
        except ValueError as e:
            raise ProblemFileError(where, str(e))
    try:
        null = NullModel.finite(outcomes, pmfs)
        problem = GnpProblem(losses, null)
    except ValueError as e:
        raise ProblemFileError("<problem>", str(e))
    s_table = None
    if "evariable" in doc:
        ev = doc["evariable"]
        if not isinstance(ev, Mapping) or not isinstance(ev.get("values"), list) \
                or len(ev["values"]) != len(outcomes):
            raise ProblemFileError("evariable.values", f"must list {len(outcomes)} values")
        vals = [_num(v, f"evariable.values[{j}]") for j, v in enumerate(ev["values"])]
        if any(v < 0 for v in vals):
            raise ProblemFileError("evariable.values", "e-values must be nonnegative")
        s_table = dict(zip(outcomes, vals))
    rule = None
    if "rule" in doc:
        r = doc["rule"]
        if not isinstance(r, Mapping):
            raise ProblemFileError("rule", "must map loss ids to action lists")
        table = {}
        for b, acts in r.items():
            matches = [l.id for l in losses if str(l.id) == str(b)]
            if not matches:
                raise ProblemFileError(f"rule.{b}", "unknown loss id")
            if not isinstance(acts, list) or len(acts) != len(outcomes):
                raise ProblemFileError(f"rule.{b}", f"must list {len(outcomes)} actions")
            for y, a in zip(outcomes, acts):
                table[(matches[0], y)] = _num(a, f"rule.{b}")
        if set(table) != {(l.id, y) for l in losses for y in outcomes}:
            raise ProblemFileError("rule", "must give an action for every loss and outcome")
        rule = DecisionRule.from_table(table, "file")
    return problem, s_table, rule


def load_problem(path) -> tuple:
    """Read a problem file; JSON syntax errors are reported with their line."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemFileError(f"line {e.lineno}", e.msg)
    return problem_from_dict(doc)


def _jsonable(x):
    if isinstance(x, Fraction):
        return fmt_fraction(x)
    return x


def problem_to_dict(problem: GnpProblem, s=None) -> dict:
    if not problem.is_finite:
        raise StructureError("only finite problems serialize to the problem-file format")
    doc = {
        "outcomes": [_jsonable(y) for y in problem.null.outcomes],
        "pmfs": [{"id": pid, "p": [_jsonable(q) for q in problem.null.pmfs[pid]]}
                 for pid in problem.null.pmf_ids],
        "losses": [{"id": l.id, "actions": [_jsonable(a) for a in l.actions.points],
                    "loss0": [_jsonable(v) for v in l.table]} for l in problem.losses],
    }
    if s is not None:
        doc["evariable"] = {"values": [_jsonable(s(y)) for y in problem.null.outcomes]}
    return doc
