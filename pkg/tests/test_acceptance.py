"""Acceptance criteria 1-9, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also written to the terminal under capture.
"""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from gnp import cli
from gnp.adversary import (THRESHOLD_SELECTOR, CdBreakingAdversary, cd_asymptote,
                           cd_truncated_integral, dyadic_problem, threshold_problem)
from gnp.confidence import e_ci_sufficient, standard_ci
from gnp.core import AdversarySelector, exact_type_one_risk, uniform_pvalue_null
from gnp.evariables import (NormalECollection, calibrate_pvalue, calibrated_evariable, expectation,
                            normal_lr_evariable, np_evariable)
from gnp.montecarlo import (StoppingRule, coverage_under_stopping, estimate_type_one_risk,
                            mc_expectation, simulate_inductive_behavior, uniform_pvalue_sampler)
from gnp.rules import halved_p_rule, max_compatible_rule, naive_p_rule
from gnp.verify import example_add, random_checks

SEED = 20240601


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    return emit


def test_criterion_1_exact_naive_risk(report, capsys):
    t0 = time.perf_counter()
    cli.main(["demo", "naive-risk"])
    lines = capsys.readouterr().out.splitlines()
    elapsed = time.perf_counter() - t0
    four = next(l for l in lines if l.startswith("naive-p 4-action risk = "))
    thresh = next(l for l in lines if l.startswith("naive-p threshold-adversary risk = "))
    four_v = Fraction(four.rsplit("= ", 1)[1])
    thresh_v = Fraction(thresh.rsplit("= ", 1)[1])
    ok = four_v == Fraction(13, 5) and thresh_v == 3 and elapsed < 1
    report(1, ok, f"4-action {four_v} (want 2.6), threshold adversary {thresh_v} (want 3), {elapsed:.2f}s")
    assert four_v == Fraction(13, 5)
    assert thresh_v == 3
    assert elapsed < 1


def test_criterion_2_dyadic(report):
    t0 = time.perf_counter()
    sel = AdversarySelector.constant("dyadic")
    bad, mc_bad = [], []
    for k in range(1, 21):
        p = dyadic_problem(k).problem
        naive = exact_type_one_risk(p, naive_p_rule(p), sel)
        halved = exact_type_one_risk(p, halved_p_rule(p), sel)
        mc = exact_type_one_risk(p, max_compatible_rule(p, calibrated_evariable()), sel)
        if naive != 2 * k or halved != k:
            bad.append((k, naive, halved))
        if mc > 1:
            mc_bad.append((k, mc))
    elapsed = time.perf_counter() - t0
    ok = not bad and not mc_bad and elapsed < 1
    first = bad[0] if bad else None
    detail = (f"{len(bad)}/20 k with naive != 2k or halved != k"
              + (f" (k={first[0]}: naive {first[1]}, halved {first[2]})" if first else "")
              + f"; max-compatible > 1 on {len(mc_bad)} k; {elapsed:.2f}s")
    report(2, ok, detail)
    assert not mc_bad
    assert not bad
    assert elapsed < 1


def test_criterion_3_interval_endpoints(report):
    t0 = time.perf_counter()
    coll = NormalECollection(100, 0.05)
    std = standard_ci(1.0, 100, 0.05)
    eci = e_ci_sufficient(1.0, 100, 0.05, coll)
    ratio = eci.half_width / std.half_width
    elapsed = time.perf_counter() - t0
    ok = (abs(std.hi - 1.196) <= 0.0005 and abs(eci.hi - 1.272) <= 0.0005
          and 1.38 <= ratio <= 1.39 and elapsed < 1)
    report(3, ok, f"standard hi {std.hi:.6f}, e-CI hi {eci.hi:.6f}, width ratio {ratio:.4f}")
    assert abs(std.hi - 1.196) <= 0.0005
    assert abs(eci.hi - 1.272) <= 0.0005
    assert 1.38 <= ratio <= 1.39
    assert elapsed < 1


def _normal_mean_sampler(n):
    return lambda rng, size: rng.standard_normal(size) / math.sqrt(n)


def test_criterion_4_e_contract(report):
    t0 = time.perf_counter()
    trials = 10 ** 6
    # the collection is tuned to n* = 30 so that none of the sample sizes equals it
    coll = NormalECollection(30, 0.05)
    cases = {
        "np(0.05)": (uniform_pvalue_sampler, np_evariable(0.05).evaluate_many),
        "lr N(0,1) vs N(1,1)": (lambda rng, size: rng.standard_normal(size),
                                normal_lr_evariable(0, 1).evaluate_many),
        "calibrated": (uniform_pvalue_sampler, calibrated_evariable().evaluate_many),
    }
    for n in (10, 100, 1000):
        cases[f"normal collection n={n}"] = (_normal_mean_sampler(n),
                                             lambda m, n=n: coll.evaluate(0.0, m, n))
    results = {}
    for i, (name, (sampler, stat)) in enumerate(cases.items()):
        rep = mc_expectation(sampler, stat, trials, SEED + i, workers=4, tag=name)
        results[name] = (rep.estimate, rep.stderr, rep.estimate <= 1 + 3 * rep.stderr)
    sharp_np = expectation(np_evariable(Fraction(1, 20)), uniform_pvalue_null([Fraction(1, 20)]).pmf())
    sharp_cal, _ = integrate.quad(lambda u: calibrate_pvalue(u), 0, 1, limit=200)
    elapsed = time.perf_counter() - t0
    mc_ok = all(r[2] for r in results.values())
    ok = mc_ok and sharp_np == 1 and round(sharp_cal, 3) == 1.0 and elapsed < 60
    detail = "; ".join(f"{k} {v[0]:.4f}+-{v[1]:.4f}" for k, v in results.items())
    report(4, ok, f"{detail}; exact NP {sharp_np}, calibrator integral {sharp_cal:.6f}; {elapsed:.1f}s")
    assert mc_ok, results
    assert sharp_np == 1
    assert round(sharp_cal, 3) == 1.0
    assert elapsed < 60


def test_criterion_5_post_hoc_safety(report):
    t0 = time.perf_counter()
    p = threshold_problem()
    mc = estimate_type_one_risk(uniform_pvalue_sampler, THRESHOLD_SELECTOR,
                                max_compatible_rule(p, np_evariable(0.05)), p, 10 ** 6, SEED, 4)
    naive = estimate_type_one_risk(uniform_pvalue_sampler, THRESHOLD_SELECTOR, naive_p_rule(p), p,
                                   10 ** 6, SEED, 4)
    elapsed = time.perf_counter() - t0
    mc_ok = mc.estimate <= 1 + 3 * mc.stderr
    naive_ok = abs(naive.estimate - 3.0) <= 3 * naive.stderr
    ok = mc_ok and naive_ok and elapsed < 30
    report(5, ok, f"max-compatible {mc.estimate:.4f}+-{mc.stderr:.4f} (<= 1), "
                  f"naive {naive.estimate:.4f}+-{naive.stderr:.4f} (want 3.0); {elapsed:.1f}s")
    assert mc_ok
    assert naive_ok
    assert elapsed < 30


def test_criterion_6_cd_failure(report):
    t0 = time.perf_counter()
    ms = (10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6)
    prefix = np.empty((20, len(ms)))
    e_final = np.empty(20)
    for seed in range(20):
        tr = simulate_inductive_behavior(ms[-1], 0.01, "cd", seed=SEED + seed, workers=4)
        prefix[seed] = [tr.running_mean[m - 1] for m in ms]
        e_final[seed] = simulate_inductive_behavior(10 ** 5, 0.01, "e", seed=SEED + seed,
                                                    workers=4).final_mean
    med = np.median(prefix, axis=0)
    integral = cd_truncated_integral(7.0, 0.01)
    adv = CdBreakingAdversary(0.01)
    ratio = float(adv.integrand(7.0)) / float(cd_asymptote(7.0, 0.01))
    elapsed = time.perf_counter() - t0
    increasing = bool(np.all(np.diff(med) > 0))
    ok = (increasing and med[-1] > 3.0 and e_final.max() <= 1.1 and integral > 10
          and abs(ratio - 1) <= 0.05 and elapsed < 120)
    report(6, ok, f"cd medians {', '.join(f'{v:.2f}' for v in med)}; e max final {e_final.max():.3f}; "
                  f"integral to 7 = {integral:.2f}; integrand/asymptote {ratio:.4f}; {elapsed:.1f}s")
    assert increasing
    assert med[-1] > 3.0
    assert e_final.max() <= 1.1
    assert integral > 10
    assert abs(ratio - 1) <= 0.05
    assert elapsed < 120


def test_criterion_7_optional_stopping(report):
    t0 = time.perf_counter()
    coll = NormalECollection(100, 0.05)
    rep = coverage_under_stopping(coll, 0.0, StoppingRule("first-crossing", n_max=500), 0.05,
                                  10 ** 5, SEED, workers=4)
    elapsed = time.perf_counter() - t0
    ok = rep.coverage >= 0.95 - 3 * rep.stderr and elapsed < 60
    report(7, ok, f"first-crossing coverage {rep.coverage:.4f}+-{rep.stderr:.4f}; {elapsed:.1f}s")
    assert rep.coverage >= 0.95 - 3 * rep.stderr
    assert elapsed < 60


def test_criterion_8_admissibility(report, capsys):
    t0 = time.perf_counter()
    code = cli.main(["verify", "example-add"])
    first = capsys.readouterr().out.splitlines()[0]
    ex = example_add()
    rep = random_checks(10_000, seed=SEED)
    elapsed = time.perf_counter() - t0
    want = "original: inadmissible (witness risk 39/40); enlarged: witness risk 41/40 unsafe"
    counts = {k: len(t.counterexamples) for k, t in rep.tallies.items()}
    applicable = {k: t.applicable for k, t in rep.tallies.items()}
    ok = code == 0 and first == want and ex.ok and rep.ok and elapsed < 120
    report(8, ok, f"example-add {'ok' if ex.ok and first == want else 'mismatch'}; "
                  f"counterexamples {counts}; applicable {applicable}; skipped {rep.skipped}; "
                  f"{elapsed:.1f}s")
    assert first == want and code == 0
    assert ex.enlarged_verdict.admissible
    assert rep.ok
    assert elapsed < 120


SEEDED_COMMANDS = [
    ["demo", "adversary", "--trials", "300000", "--seed", "5"],
    ["demo", "cd-failure", "--m", "200000", "--seed", "5"],
    ["verify", "random", "--cases", "200", "--seed", "5"],
]


def test_criterion_9_determinism(report, capsys, tmp_path):
    mismatched = []
    for argv in SEEDED_COMMANDS:
        outs = []
        for w in (1, 4, 8):
            extra = []
            if argv[:2] == ["demo", "cd-failure"]:
                extra = ["--out", str(tmp_path / f"w{w}")]
            cli.main(argv + ["--workers", str(w)] + extra)
            text = capsys.readouterr().out
            if extra:
                text += (tmp_path / f"w{w}" / "cd.csv").read_text()
                text += (tmp_path / f"w{w}" / "e.csv").read_text()
            outs.append(text.encode())
        if len(set(outs)) != 1:
            mismatched.append(" ".join(argv[:2]))
    ok = not mismatched
    report(9, ok, f"{len(SEEDED_COMMANDS)} seeded commands, 1/4/8 workers, "
                  f"{'byte-identical' if ok else 'differ: ' + ', '.join(mismatched)}")
    assert not mismatched
