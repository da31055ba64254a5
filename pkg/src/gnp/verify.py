"""Exhaustive, exact checks of the admissibility theory on finite problems.

Everything here works with :class:`fractions.Fraction` (or scaled Python
integers derived from them), so verdicts carry no tolerance.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Mapping

from .core import (AdversarySelector, DecisionRule, GnpError, GnpProblem, NullModel, TypeOneLoss,
                   enlarge_with_id, exact_type_one_risk, fmt_fraction, max_loss_table)
from .evariables import EVariable, NormalECollection, expectation
from .rules import max_compatible_decide

RULE_LIMIT = 10 ** 7
SELECTOR_LIMIT = 10 ** 6


class SearchSizeError(GnpError):
    """The requested enumeration exceeds its guard."""


@dataclass(frozen=True)
class FiniteProblemInstance:
    problem: GnpProblem
    s_table: Mapping | None = None

    def __post_init__(self):
        if not self.problem.is_finite:
            raise ValueError("finite instances need a finite null and finite action spaces")

    @property
    def full_support(self) -> bool:
        return self.problem.null.full_support

    @property
    def s(self) -> EVariable | None:
        return None if self.s_table is None else EVariable.from_table(self.s_table, "instance")


def _as_problem(x) -> GnpProblem:
    return x.problem if isinstance(x, FiniteProblemInstance) else x


def _support_by_pmf(problem: GnpProblem) -> list:
    return [problem.null.pmf(pid) for pid in problem.null.pmf_ids]


# ---------------------------------------------------------------------------
# Safety, dominance, sharpness, richness
# ---------------------------------------------------------------------------


def worst_case_risk(instance, rule: DecisionRule):
    """``max_P E_P[max_b L_b(0, rule_b(Y))]`` over the null pmfs."""
    problem = _as_problem(instance)
    u = EVariable.from_table(max_loss_table(problem, rule))
    return max(expectation(u, pmf) for pmf in _support_by_pmf(problem))


def is_type_one_risk_safe(instance, rule: DecisionRule) -> bool:
    """``E_P[U] <= 1`` for every null pmf, with ``U(y) = max_b L_b(0, rule_b(y))``."""
    return worst_case_risk(instance, rule) <= 1


def is_strictly_better(instance, rule_a: DecisionRule, rule_b: DecisionRule) -> bool:
    """``rule_a`` never has smaller Type-I loss with positive probability, and sometimes larger."""
    problem = _as_problem(instance)
    strict = False
    for pmf in _support_by_pmf(problem):
        for l in problem.losses:
            for y, p in pmf.items():
                if p == 0:
                    continue
                la, lb = l.loss0(rule_a(l.id, y)), l.loss0(rule_b(l.id, y))
                if la < lb:
                    return False
                if la > lb:
                    strict = True
    return strict


def is_sharp(instance_or_model, s) -> bool:
    """``E_P[S] <= 1`` for all null pmfs and ``= 1`` for at least one.

    The normal-location collection is sharp at every parameter: under
    ``P_theta`` each exponential factor ``exp(n U (mle - theta) - n U^2/2)`` is a
    likelihood ratio with mean exactly one.
    """
    if isinstance(s, NormalECollection):
        return True
    problem = _as_problem(instance_or_model)
    if isinstance(problem, NullModel):
        pmfs = [problem.pmf(pid) for pid in problem.pmf_ids]
    else:
        pmfs = _support_by_pmf(problem)
    values = [expectation(s, pmf) for pmf in pmfs]
    return all(v <= 1 for v in values) and any(v == 1 for v in values)


def is_rich(instance, s) -> bool:
    """Every value of ``s`` on the outcome space is some ``L_b(0, a)``."""
    problem = _as_problem(instance)
    attained = {v for l in problem.losses for v in l.table}
    return all(s(y) in attained for y in problem.null.outcomes)


def is_maximally_compatible(instance, rule: DecisionRule, s, by: str = "loss") -> bool:
    """Does ``rule`` agree with the largest-compatible-action rule for ``s``?

    ``by="loss"`` compares Type-I losses, which is all that Type-II comparisons
    can see; ``by="action"`` demands identical actions.  Only outcomes with
    positive mass under some pmf are compared.
    """
    problem = _as_problem(instance)
    for y in problem.null.support():
        for l in problem.losses:
            best = max_compatible_decide(s(y), l).action
            got = rule(l.id, y)
            if by == "action":
                if got != best:
                    return False
            elif l.loss0(got) != l.loss0(best):
                return False
    return True


def is_compatible_table(instance, rule: DecisionRule, s) -> bool:
    problem = _as_problem(instance)
    return all(l.loss0(rule(l.id, y)) <= s(y) for l in problem.losses for y in problem.null.outcomes)


# ---------------------------------------------------------------------------
# Adversary search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnsafeWitness:
    selector: AdversarySelector
    mapping: dict
    pmf_id: Hashable
    risk: Fraction


def find_unsafe_witness(instance, rule: DecisionRule) -> UnsafeWitness | None:
    """First map ``B: Y -> loss ids`` (lexicographic in outcome order) with risk above 1."""
    problem = _as_problem(instance)
    ids, ys = problem.loss_ids, problem.null.outcomes
    if len(ids) ** len(ys) > SELECTOR_LIMIT:
        raise SearchSizeError(f"{len(ids)}^{len(ys)} selectors exceed {SELECTOR_LIMIT}")
    for choice in itertools.product(ids, repeat=len(ys)):
        mapping = dict(zip(ys, choice))
        sel = AdversarySelector.from_map(mapping, "witness")
        for pid in problem.null.pmf_ids:
            risk = exact_type_one_risk(problem, rule, sel, pid)
            if risk > 1:
                return UnsafeWitness(sel, mapping, pid, risk)
    return None


# ---------------------------------------------------------------------------
# Admissibility by enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdmissibilityVerdict:
    admissible: bool
    witness: DecisionRule | None
    risk: Fraction
    enumerated: int

    def to_dict(self, problem: GnpProblem) -> dict:
        return {"admissible": self.admissible,
                "witness": None if self.witness is None else rule_to_json_table(problem, self.witness),
                "risk": fmt_fraction(self.risk)}

    def to_json(self, problem: GnpProblem) -> str:
        return json.dumps(self.to_dict(problem))


def rule_to_json_table(problem: GnpProblem, rule: DecisionRule) -> dict:
    return {str(l.id): [fmt_fraction(Fraction(rule(l.id, y))) for y in problem.null.outcomes]
            for l in problem.losses}


def _common_denominator(values) -> int:
    d = 1
    for v in values:
        d = math.lcm(d, Fraction(v).denominator)
    return d


def brute_force_admissible(instance, rule: DecisionRule, limit: int = RULE_LIMIT) -> AdmissibilityVerdict:
    """Search every rule that could be a safe, strictly better witness against ``rule``.

    A strictly better rule must match or exceed ``rule``'s loss on every
    outcome of positive mass, and its choices elsewhere affect neither risk
    nor dominance.  The search therefore ranges over, for each loss ``b`` and
    each supported outcome ``y`` (in that lexicographic order), the actions of
    ``b`` whose loss is at least the current one, in increasing action order;
    unsupported outcomes keep ``rule``'s action.  ``limit`` bounds the number
    of rules in this set.  The depth-first search prunes a branch once even
    the smallest completion is unsafe, so the first witness found is the
    lexicographically first one.
    """
    problem = _as_problem(instance)
    if not problem.is_finite:
        raise ValueError("brute force needs a finite problem")
    ys = problem.null.support()
    yi = {y: i for i, y in enumerate(ys)}
    pmfs = _support_by_pmf(problem)

    cells, options, base = [], [], []
    for l in problem.losses:
        for y in ys:
            cur = l.loss0(rule(l.id, y))
            opts = [(a, v) for a, v in zip(l.actions.points, l.table) if v >= cur]
            cells.append((l.id, y))
            options.append(opts)
            base.append(cur)
    count = 1
    for o in options:
        count *= len(o)
    if count > limit:
        raise SearchSizeError(f"{count} candidate rules exceed the limit {limit}")

    current_risk = worst_case_risk(problem, rule)
    if current_risk > 1:
        # an unsafe rule is never admissible; the rule itself is not a witness
        return AdmissibilityVerdict(False, None, current_risk, 0)

    # integer scaling: risk <= 1  <=>  sum_y P[y] * V[y] <= D * E
    d_p = _common_denominator(p for pmf in pmfs for p in pmf.values())
    d_l = _common_denominator(v for o in options for _, v in o)
    weights = [[int(pmf[y] * d_p) for y in ys] for pmf in pmfs]
    cap = d_p * d_l
    scaled_opts = [[(a, int(v * d_l), v > b) for a, v in o] for o, b in zip(options, base)]
    ncell, ny = len(cells), len(ys)

    # suffix_floor[k][j]: max base loss over cells k.. at outcome j
    suffix_floor = [[0] * ny for _ in range(ncell + 1)]
    can_strict = [False] * (ncell + 1)
    for k in range(ncell - 1, -1, -1):
        suffix_floor[k] = list(suffix_floor[k + 1])
        j = yi[cells[k][1]]
        suffix_floor[k][j] = max(suffix_floor[k][j], int(base[k] * d_l))
        can_strict[k] = can_strict[k + 1] or any(s for _, _, s in scaled_opts[k])

    u = [0] * ny
    chosen = [None] * ncell

    def feasible(k) -> bool:
        floor = suffix_floor[k]
        for w in weights:
            if sum(wj * max(uj, fj) for wj, uj, fj in zip(w, u, floor)) > cap:
                return False
        return True

    def dfs(k, strict) -> bool:
        if not strict and not can_strict[k]:
            return False
        if not feasible(k):
            return False
        if k == ncell:
            return strict
        j = yi[cells[k][1]]
        old = u[j]
        for a, v, s in scaled_opts[k]:
            chosen[k] = a
            u[j] = max(old, v)
            if dfs(k + 1, strict or s):
                return True
        u[j] = old
        return False

    if dfs(0, False):
        table = {(l.id, y): rule(l.id, y) for l in problem.losses for y in problem.null.outcomes}
        table.update({c: a for c, a in zip(cells, chosen)})
        witness = DecisionRule.from_table(table, "witness")
        return AdmissibilityVerdict(False, witness, worst_case_risk(problem, witness), count)
    return AdmissibilityVerdict(True, None, current_risk, count)


# ---------------------------------------------------------------------------
# Equalizer property
# ---------------------------------------------------------------------------


def check_equalizer(instance, s, b_fn: Callable, rule: DecisionRule) -> bool | None:
    """Given full support, sharp ``s``, a safe rule and a selector with
    ``L_{B(y)}(0, rule_{B(y)}(y)) = s(y)`` everywhere, check ``L_b(0, rule_b(y)) <= s(y)``
    for every ``b`` and ``y``.  Returns ``None`` when a premise fails.
    """
    problem = _as_problem(instance)
    if not problem.null.full_support or not is_sharp(problem, s):
        return None
    if not is_type_one_risk_safe(problem, rule):
        return None
    for y in problem.null.outcomes:
        b = b_fn(y)
        if problem.loss(b).loss0(rule(b, y)) != s(y):
            return None
    return is_compatible_table(problem, rule, s)


# ---------------------------------------------------------------------------
# The worked example with an added identity loss
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExampleAddReport:
    original: GnpProblem
    enlarged: GnpProblem
    s: EVariable
    delta: DecisionRule
    delta_prime: DecisionRule
    original_verdict: AdmissibilityVerdict
    delta_prime_risk: Fraction
    delta_extended: DecisionRule
    delta_prime_extended: DecisionRule
    unsafe_witness: UnsafeWitness | None
    enlarged_verdict: AdmissibilityVerdict

    @property
    def ok(self) -> bool:
        return (not self.original_verdict.admissible
                and self.original_verdict.risk == Fraction(39, 40)
                and self.unsafe_witness is not None
                and self.unsafe_witness.risk == Fraction(41, 40)
                and self.enlarged_verdict.admissible)

    def summary_line(self) -> str:
        orig = "inadmissible" if not self.original_verdict.admissible else "admissible"
        w = self.unsafe_witness
        enlarged = (f"witness risk {fmt_fraction(w.risk)} unsafe" if w is not None
                    else "no unsafe witness")
        return (f"original: {orig} (witness risk {fmt_fraction(self.original_verdict.risk)}); "
                f"enlarged: {enlarged}")


def example_add_problem() -> tuple:
    """Outcomes {0, 10, 20}, one loss on {0, 9, 19, 21} with ``L(0, a) = a``, and ``S(y) = y``."""
    null = NullModel.finite([0, 10, 20], {"P0": [Fraction(37, 40), Fraction(1, 20), Fraction(1, 40)]})
    loss = TypeOneLoss.finite("b1", [0, 9, 19, 21], [0, 9, 19, 21])
    s = EVariable(lambda y: Fraction(y), frozenset({Fraction(0), Fraction(10), Fraction(20)}), "id")
    return GnpProblem([loss], null), s


def example_add() -> ExampleAddReport:
    problem, s = example_add_problem()
    delta = DecisionRule.from_table({("b1", 0): 0, ("b1", 10): 9, ("b1", 20): 19}, "delta")
    delta_prime = DecisionRule.from_table({("b1", 0): 0, ("b1", 10): 9, ("b1", 20): 21}, "delta'")
    original_verdict = brute_force_admissible(problem, delta)

    enlarged = enlarge_with_id(problem, s, "b2")
    identity = {("b2", y): Fraction(y) for y in (0, 10, 20)}
    delta_ext = delta.extended(identity, "delta")
    delta_prime_ext = delta_prime.extended(identity, "delta'")
    return ExampleAddReport(
        original=problem,
        enlarged=enlarged,
        s=s,
        delta=delta,
        delta_prime=delta_prime,
        original_verdict=original_verdict,
        delta_prime_risk=worst_case_risk(problem, delta_prime),
        delta_extended=delta_ext,
        delta_prime_extended=delta_prime_ext,
        unsafe_witness=find_unsafe_witness(enlarged, delta_prime_ext),
        enlarged_verdict=brute_force_admissible(enlarged, delta_ext),
    )


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------


def _composition(rng: random.Random, total: int, parts: int, positive: bool) -> list:
    if positive:
        cuts = sorted(rng.sample(range(1, total), parts - 1))
    else:
        cuts = sorted(rng.randint(0, total) for _ in range(parts - 1))
    edges = [0] + cuts + [total]
    return [edges[i + 1] - edges[i] for i in range(parts)]


def random_instance(rng: random.Random) -> FiniteProblemInstance:
    """A small random problem with an e-variable table.

    2-4 outcomes, 1-2 null pmfs with denominators at most 40, 1-3 losses of
    2-4 actions each.  The least action of every loss has zero loss; other
    loss values are drawn from the e-variable's values and small integers.
    With probability 1/2 the identity loss of ``S`` is appended, which makes
    the problem rich.
    """
    ny = rng.randint(2, 4)
    outcomes = list(range(ny))
    full = rng.random() < 0.7
    pmfs = {}
    for i in range(rng.randint(1, 2)):
        den = rng.randint(max(ny, 2), 40)
        parts = _composition(rng, den, ny, full)
        pmfs[f"P{i}"] = [Fraction(c, den) for c in parts]
    null = NullModel.finite(outcomes, pmfs)

    w = [rng.randint(0, 6) for _ in outcomes]
    worst = max(sum(p * wi for p, wi in zip(pm, w)) for pm in pmfs.values())
    if worst == 0:
        s_vals = [Fraction(0)] * ny
    else:
        s_vals = [Fraction(wi) / worst for wi in w]
        if rng.random() < 0.2:
            s_vals = [v / 2 for v in s_vals]
    s_table = dict(zip(outcomes, s_vals))

    pool = sorted(set(s_vals) | {Fraction(k) for k in (1, 2, 3)} | {Fraction(1, 2)})
    losses = []
    for b in range(rng.randint(1, 3)):
        k = rng.randint(2, 4)
        vals = sorted([Fraction(0)] + [rng.choice(pool) for _ in range(k - 1)])
        losses.append(TypeOneLoss.finite(f"b{b}", list(range(k)), vals))
    problem = GnpProblem(losses, null)
    if rng.random() < 0.5:
        problem = enlarge_with_id(problem, EVariable.from_table(s_table))
    return FiniteProblemInstance(problem, s_table)


def random_rule(rng: random.Random, problem: GnpProblem) -> DecisionRule:
    return DecisionRule.from_table(
        {(l.id, y): rng.choice(l.actions.points) for l in problem.losses for y in problem.null.outcomes},
        "random")


def least_rule(problem: GnpProblem) -> DecisionRule:
    return DecisionRule.from_table(
        {(l.id, y): l.actions.least for l in problem.losses for y in problem.null.outcomes}, "least")


def _max_compatible_table(problem: GnpProblem, s) -> DecisionRule:
    return DecisionRule.from_table(
        {(l.id, y): max_compatible_decide(s(y), l).action
         for l in problem.losses for y in problem.null.outcomes}, "max-compatible")


def _equalizing_rule(rng: random.Random, problem: GnpProblem, s):
    """A rule hitting ``S(y)`` exactly at some loss per outcome, plus that selector; or None."""
    table, selector = {}, {}
    for y in problem.null.outcomes:
        hits = [(l.id, a) for l in problem.losses for a, v in zip(l.actions.points, l.table) if v == s(y)]
        if not hits:
            return None
        b, a = rng.choice(hits)
        selector[y] = b
        table[(b, y)] = a
    for l in problem.losses:
        for y in problem.null.outcomes:
            if (l.id, y) in table:
                continue
            if rng.random() < 0.8:
                ok = [a for a, v in zip(l.actions.points, l.table) if v <= s(y)]
                table[(l.id, y)] = rng.choice(ok)
            else:
                table[(l.id, y)] = rng.choice(l.actions.points)
    return DecisionRule.from_table(table, "equalizing"), selector


@dataclass
class PropertyTally:
    checked: int = 0
    applicable: int = 0
    counterexamples: list = field(default_factory=list)


@dataclass
class RandomCheckReport:
    cases: int
    seed: int
    tallies: dict
    skipped: int = 0

    @property
    def ok(self) -> bool:
        return all(not t.counterexamples for t in self.tallies.values())

    def lines(self) -> list:
        out = []
        for name, t in self.tallies.items():
            out.append(f"{name}: {t.applicable} applicable of {t.checked}, "
                       f"{len(t.counterexamples)} counterexamples")
        if self.skipped:
            out.append(f"skipped (enumeration guard): {self.skipped}")
        return out


def _climb(problem: GnpProblem, rule: DecisionRule, limit: int) -> DecisionRule:
    while True:
        verdict = brute_force_admissible(problem, rule, limit)
        if verdict.admissible:
            return rule
        rule = verdict.witness


def check_random_case(rng: random.Random, tallies: dict, limit: int = RULE_LIMIT) -> None:
    inst = random_instance(rng)
    problem, s = inst.problem, inst.s
    case = problem_to_jsonable(inst)

    # safety via the max-loss table versus an exhaustive adversary search
    t = tallies["safety-equivalence"]
    rule = random_rule(rng, problem)
    t.checked += 1
    t.applicable += 1
    safe_table = is_type_one_risk_safe(problem, rule)
    safe_search = find_unsafe_witness(problem, rule) is None
    e_var_ok = all(expectation(s, problem.null.pmf(p)) <= 1 for p in problem.null.pmf_ids)
    if safe_table != safe_search or (e_var_ok and is_compatible_table(problem, rule, s) and not safe_table):
        t.counterexamples.append(case)

    t = tallies["equalizer"]
    t.checked += 1
    eq = _equalizing_rule(rng, problem, s)
    if eq is not None:
        erule, sel = eq
        verdict = check_equalizer(problem, s, sel.__getitem__, erule)
        if verdict is not None:
            t.applicable += 1
            if not verdict:
                t.counterexamples.append(case)

    t = tallies["admissible-is-max-compatible"]
    t.checked += 1
    if safe_table:
        start = rule
    elif e_var_ok:
        start = _max_compatible_table(problem, s)
    else:
        start = least_rule(problem)
    top = _climb(problem, start, limit)
    t.applicable += 1
    u = EVariable.from_table(max_loss_table(problem, top))
    if not is_maximally_compatible(problem, top, u):
        t.counterexamples.append(case)

    t = tallies["max-compatible-is-admissible"]
    t.checked += 1
    if inst.full_support and is_sharp(problem, s) and is_rich(problem, s):
        t.applicable += 1
        mc = _max_compatible_table(problem, s)
        if not brute_force_admissible(problem, mc, limit).admissible:
            t.counterexamples.append(case)


def problem_to_jsonable(inst: FiniteProblemInstance) -> dict:
    from .core import problem_to_dict

    return problem_to_dict(inst.problem, inst.s)


def random_checks(cases: int, seed: int, limit: int = RULE_LIMIT) -> RandomCheckReport:
    """Run ``cases`` randomized checks of the safety equivalence, the equalizer
    property and both directions of the admissibility characterization."""
    rng = random.Random(seed)
    names = ("safety-equivalence", "equalizer", "admissible-is-max-compatible",
             "max-compatible-is-admissible")
    tallies = {k: PropertyTally() for k in names}
    skipped = 0
    for _ in range(cases):
        # each case draws from its own generator so a skip cannot shift later cases
        case_rng = random.Random(rng.getrandbits(64))
        try:
            check_random_case(case_rng, tallies, limit)
        except SearchSizeError:
            skipped += 1
    return RandomCheckReport(cases, seed, tallies, skipped)
