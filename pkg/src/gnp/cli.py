"""Command-line entry point: ``gnp <command> ...``.

Exit status is 0 on success, 2 on bad flags or unreadable problem files and
1 when a verification finds a counterexample.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction

from . import adversary, confidence, montecarlo, rules, verify
from .core import AdversarySelector, ProblemFileError, exact_type_one_risk, fmt_fraction, load_problem
from .evariables import EVariable, NormalECollection, calibrated_evariable, np_evariable

SEED_ENV = "GNP_SEED"


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"gnp: {SEED_ENV} must be an integer, got {raw!r}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("must be a 64-bit nonnegative integer")
    return v


def _level(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0 or math.isinf(v):
        raise argparse.ArgumentTypeError("must be a positive finite number")
    return v


def _at_least_one(text: str) -> float:
    v = float(text)
    if not v >= 1 or math.isinf(v):
        raise argparse.ArgumentTypeError("must be a finite number >= 1")
    return v


def _decimal(x) -> str:
    """Exact values print as short decimals when they terminate, else as fractions."""
    if isinstance(x, Fraction):
        d = x.denominator
        while d % 2 == 0:
            d //= 2
        while d % 5 == 0:
            d //= 5
        if d == 1:
            return repr(float(x)).removesuffix(".0") if x.denominator != 1 else str(x.numerator)
        return fmt_fraction(x)
    return repr(x)


# ---------------------------------------------------------------------------
# demo
# ---------------------------------------------------------------------------


def naive_risk_lines(k_max: int = 20) -> list:
    four = adversary.four_action_problem()
    const = AdversarySelector.constant(1)
    lines = [f"naive-p 4-action risk = {_decimal(exact_type_one_risk(four, rules.naive_p_rule(four), const))}"]

    thr = adversary.threshold_problem()
    sel = adversary.THRESHOLD_SELECTOR
    naive = exact_type_one_risk(thr, rules.naive_p_rule(thr), sel)
    s_np = np_evariable(Fraction(1, 20))
    mc = exact_type_one_risk(thr, rules.max_compatible_rule(thr, s_np), sel)
    lines.append(f"naive-p threshold-adversary risk = {_decimal(naive)}")
    lines.append(f"max-compatible NP(0.05) threshold-adversary risk = {_decimal(mc)}")
    lines.append("dyadic k naive-p halved-p max-compatible(calibrated)")
    for k in range(1, k_max + 1):
        r = dyadic_risks(k)
        lines.append(f"dyadic {k} {_decimal(r['naive-p'])} {_decimal(r['halved-p'])} "
                     f"{_decimal(r['max-compatible'])}")
    return lines


def dyadic_risks(k: int) -> dict:
    case = adversary.dyadic_problem(k)
    p = case.problem
    sel = AdversarySelector.constant("dyadic")
    return {
        "naive-p": exact_type_one_risk(p, rules.naive_p_rule(p), sel),
        "halved-p": exact_type_one_risk(p, rules.halved_p_rule(p), sel),
        "max-compatible": exact_type_one_risk(p, rules.max_compatible_rule(p, calibrated_evariable()), sel),
    }


def adversary_reports(trials: int, seed: int, workers: int) -> list:
    thr = adversary.threshold_problem()
    sel = adversary.THRESHOLD_SELECTOR
    s_np = np_evariable(0.05)
    out = []
    for rule in (rules.max_compatible_rule(thr, s_np), rules.naive_p_rule(thr)):
        out.append(montecarlo.estimate_type_one_risk(montecarlo.uniform_pvalue_sampler, sel, rule,
                                                     thr, trials, seed, workers))
    return out


def cmd_demo(args) -> int:
    if args.which == "naive-risk":
        print("\n".join(naive_risk_lines()))
    elif args.which == "adversary":
        for rep in adversary_reports(args.trials, args.seed, args.workers):
            print(rep.to_json())
    else:
        for method in ("cd", "e"):
            tr = montecarlo.simulate_inductive_behavior(args.m, args.epsilon, method, args.seed,
                                                        workers=args.workers)
            print(json.dumps({"method": method, "m": args.m, "epsilon": args.epsilon,
                              "seed": args.seed, "final_mean": tr.final_mean}))
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                with open(os.path.join(args.out, f"{method}.csv"), "w", encoding="utf-8") as fh:
                    fh.write(tr.to_csv())
    return 0


# ---------------------------------------------------------------------------
# curves / eci
# ---------------------------------------------------------------------------


def cmd_curves(args) -> int:
    coll = NormalECollection(args.nstar, args.alphastar)
    half = 5.0 / math.sqrt(args.n)
    lo = args.mle - half if args.lo is None else args.lo
    hi = args.mle + half if args.hi is None else args.hi
    if hi < lo:
        raise _FlagError("--hi must be >= --lo")
    step = (hi - lo) / 2000 if args.step is None else args.step
    if not step > 0:
        raise _FlagError("--step must be positive")
    text = confidence.curves_csv(coll, args.mle, args.n, confidence.curve_grid(lo, hi, step))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_eci(args) -> int:
    coll = NormalECollection(args.nstar, args.alphastar)
    if args.b is not None:
        a = confidence.e_ci_halfwidth_for_b(args.n, args.b, coll)
        ci = confidence.ConfidenceInterval(args.mle - a, args.mle + a, args.b, "e-b")
    elif args.method == "standard":
        ci = confidence.standard_ci(args.mle, args.n, args.alpha)
    elif args.method == "exact":
        ci = confidence.e_ci_exact(args.mle, args.n, args.alpha, coll)
    else:
        ci = confidence.e_ci_sufficient(args.mle, args.n, args.alpha, coll)
    print(ci.to_json(None if args.full else 3))
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    if args.which == "example-add":
        rep = verify.example_add()
        print(rep.summary_line())
        v = rep.enlarged_verdict
        print(f"enlarged: extended delta {'admissible' if v.admissible else 'inadmissible'} "
              f"({v.enumerated} candidate rules searched)")
        return 0 if rep.ok else 1
    if args.which == "brute":
        if not args.file:
            raise _FlagError("verify brute needs --file")
        problem, s_table, rule = load_problem(args.file)
        if rule is None:
            if s_table is None:
                raise ProblemFileError("rule", "give a 'rule' or an 'evariable' to audit")
            rule = rules.max_compatible_rule(problem, EVariable.from_table(s_table))
        verdict = verify.brute_force_admissible(problem, rule)
        print(verdict.to_json(problem))
        return 0
    rep = verify.random_checks(args.cases, args.seed)
    print("\n".join(rep.lines()))
    return 0 if rep.ok else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


class _FlagError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    seed = _default_seed()
    p = argparse.ArgumentParser(prog="gnp", description="E-value decision rules under post-hoc losses.")
    sub = p.add_subparsers(dest="command", required=True)

    def add_seed(sp):
        sp.add_argument("--seed", type=_seed, default=seed,
                        help=f"random seed (default: ${SEED_ENV} or 0)")
        sp.add_argument("--workers", type=_positive_int, default=1, help="worker threads")

    d = sub.add_parser("demo", help="reproduce the risk demonstrations")
    d.add_argument("which", choices=["naive-risk", "adversary", "cd-failure"])
    d.add_argument("--trials", type=_positive_int, default=10 ** 6)
    d.add_argument("--m", type=_positive_int, default=10 ** 5)
    d.add_argument("--epsilon", type=_positive, default=0.01)
    d.add_argument("--out", help="directory for the cd-failure trace CSVs")
    add_seed(d)
    d.set_defaults(func=cmd_demo)

    def add_model(sp):
        sp.add_argument("--n", type=_positive_int, default=100)
        sp.add_argument("--nstar", type=_at_least_one, default=100.0)
        sp.add_argument("--alphastar", type=_level, default=0.05)
        sp.add_argument("--mle", type=float, default=1.0)

    c = sub.add_parser("curves", help="e-posterior and CD tail curves as CSV")
    add_model(c)
    c.add_argument("--lo", type=float)
    c.add_argument("--hi", type=float)
    c.add_argument("--step", type=_positive)
    c.add_argument("--out")
    c.set_defaults(func=cmd_curves)

    e = sub.add_parser("eci", help="confidence interval as JSON")
    add_model(e)
    g = e.add_mutually_exclusive_group()
    g.add_argument("--alpha", type=_level, default=0.05)
    g.add_argument("--b", type=_at_least_one)
    e.add_argument("--method", choices=["sufficient", "exact", "standard"], default="sufficient")
    e.add_argument("--full", action="store_true", help="full precision instead of 3 decimals")
    e.set_defaults(func=cmd_eci)

    v = sub.add_parser("verify", help="exact admissibility checks")
    v.add_argument("which", choices=["example-add", "brute", "random"])
    v.add_argument("--file")
    v.add_argument("--cases", type=_positive_int, default=1000)
    add_seed(v)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _FlagError as e:
        parser.error(str(e))
    except ProblemFileError as e:
        print(f"gnp: problem file error at {e}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0
    except OSError as e:
        print(f"gnp: {e}", file=sys.stderr)
        return 2
    except verify.SearchSizeError as e:
        print(f"gnp: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
