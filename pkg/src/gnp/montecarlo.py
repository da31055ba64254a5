"""Seeded, reproducible Monte Carlo for risks, coverage and long-run averages.

Random numbers come from numpy's Philox-4x64 counter-based generator.  Every
block of trials gets its own key derived from ``SeedSequence(seed,
spawn_key=(stream, block))``, so a trial's draws depend only on the seed, the
stream and its position, never on which worker ran it.  Blocks have a fixed
size and their (count, mean, M2) summaries are merged in block order, so
results are bit-identical for any number of worker threads.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .adversary import CdBreakingAdversary, cd_breaking_b
from .confidence import e_ci_halfwidth_for_b, sufficient_halfwidth
from .core import AdversarySelector, DecisionRule, GnpProblem, TypeOneLoss
from .evariables import NormalECollection

BLOCK_SIZE = 1 << 16

# stream ids keep unrelated simulations on disjoint key spaces
STREAM_RISK = 1
STREAM_INDUCTIVE = 2
STREAM_COVERAGE = 3
STREAM_EXPECTATION = 4


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(stream, block))
    return np.random.Generator(np.random.Philox(ss))


def _block_sizes(total: int, block_size: int) -> list:
    full, rest = divmod(total, block_size)
    return [block_size] * full + ([rest] if rest else [])


def map_blocks(fn: Callable, total: int, seed: int, stream: int, workers: int = 1,
               block_size: int = BLOCK_SIZE) -> list:
    """``[fn(rng_i, size_i, i) for each block i]`` in block order."""
    if total < 1:
        raise ValueError("need at least one trial")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    sizes = _block_sizes(total, block_size)

    def run(i):
        return fn(block_rng(seed, stream, i), sizes[i], i)

    if workers == 1 or len(sizes) == 1:
        return [run(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(len(sizes))))


def _summary(values: np.ndarray) -> tuple:
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(np.sum(values) / n)
    m2 = float(np.sum((values - mean) ** 2))
    return n, mean, m2


def _merge(summaries) -> tuple:
    # Chan et al. pairwise update, applied left to right in block order
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in summaries:
        if nb == 0:
            continue
        tot = n + nb
        delta = mb - mean
        mean = mean + delta * nb / tot
        m2 = m2 + m2b + delta * delta * n * nb / tot
        n = tot
    return n, mean, m2


def _stderr(n, m2) -> float:
    return math.sqrt(m2 / (n - 1) / n) if n > 1 else 0.0


@dataclass(frozen=True)
class RiskAuditReport:
    estimate: float
    stderr: float
    trials: int
    seed: int
    diverged: bool = False
    rule: str = ""
    adversary: str = ""

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "trials": self.trials,
                "seed": self.seed, "diverged": self.diverged, "rule": self.rule,
                "adversary": self.adversary}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _diverging(summaries, stderr: float) -> bool:
    """Prefix means at 1, 2, 4, ... blocks still rising over the last four doublings."""
    checkpoints, k = [], 1
    while k <= len(summaries):
        checkpoints.append(_merge(summaries[:k])[1])
        k *= 2
    if len(checkpoints) < 4:
        return False
    tail = checkpoints[-4:]
    rising = all(a < b for a, b in zip(tail, tail[1:]))
    return rising and tail[-1] - tail[0] > 2 * stderr


def _report(summaries, seed, rule="", adversary="") -> RiskAuditReport:
    n, mean, m2 = _merge(summaries)
    se = _stderr(n, m2)
    return RiskAuditReport(mean, se, n, seed, _diverging(summaries, se), rule, adversary)


# ---------------------------------------------------------------------------
# Type-I risk
# ---------------------------------------------------------------------------


def uniform_pvalue_sampler(rng: np.random.Generator, size: int) -> np.ndarray:
    """Strict p-values on (0, 1]."""
    return 1.0 - rng.random(size)


def _loss_values(loss: TypeOneLoss, actions) -> np.ndarray:
    actions = np.asarray(actions, dtype=float)
    if loss.is_finite:
        points = np.asarray([float(a) for a in loss.actions.points])
        table = np.asarray([float(v) for v in loss.table])
        return table[np.searchsorted(points, actions)]
    return np.asarray([float(loss.loss0(a)) for a in actions])


def estimate_type_one_risk(sampler: Callable, selector: AdversarySelector, rule: DecisionRule,
                           problem: GnpProblem, trials: int, seed: int,
                           workers: int = 1) -> RiskAuditReport:
    """Mean of ``L_B(Y)(0, rule(B(Y), Y))`` over ``trials`` draws of ``Y``."""

    def block(rng, size, _):
        ys = sampler(rng, size)
        bs = np.asarray(selector.select_many(ys))
        out = np.zeros(size)
        for b in np.unique(bs):
            mask = bs == b
            b = b.item() if hasattr(b, "item") else b
            out[mask] = _loss_values(problem.loss(b), rule.decide_many(b, ys[mask]))
        return _summary(out)

    return _report(map_blocks(block, trials, seed, STREAM_RISK, workers), seed,
                   rule.tag, selector.tag)


def mc_expectation(sampler: Callable, statistic: Callable, trials: int, seed: int,
                   workers: int = 1, tag: str = "") -> RiskAuditReport:
    """Monte Carlo mean of ``statistic(sampler(rng, size))``."""

    def block(rng, size, _):
        return _summary(statistic(sampler(rng, size)))

    return _report(map_blocks(block, trials, seed, STREAM_EXPECTATION, workers), seed, tag)


# ---------------------------------------------------------------------------
# Long-run behavior under the CD-breaking adversary
# ---------------------------------------------------------------------------


def _normal_draws(m: int, seed: int, workers: int) -> np.ndarray:
    parts = map_blocks(lambda rng, size, _: rng.standard_normal(size), m, seed,
                       STREAM_INDUCTIVE, workers)
    return np.concatenate(parts)


def sample_b_sequence(m: int, epsilon: float = 0.01, seed: int = 0, workers: int = 1) -> np.ndarray:
    """``B(Y_j)`` for ``m`` independent standard normal ``Y_j``."""
    return cd_breaking_b(_normal_draws(m, seed, workers), epsilon)


@dataclass(frozen=True)
class InductiveTrace:
    running_mean: np.ndarray
    b: np.ndarray
    miss: np.ndarray
    method: str
    seed: int

    @property
    def final_mean(self) -> float:
        return float(self.running_mean[-1])

    def to_csv(self) -> str:
        lines = ["j,running_mean,b_j,miss"]
        for j, (r, b, mi) in enumerate(zip(self.running_mean, self.b, self.miss), start=1):
            lines.append("%d,%.17g,%.17g,%d" % (j, r, b, int(mi)))
        return "\n".join(lines) + "\n"


def simulate_inductive_behavior(m: int, epsilon: float = 0.01, method: str = "cd", seed: int = 0,
                                coll: NormalECollection | None = None,
                                workers: int = 1) -> InductiveTrace:
    """Running average of ``B_j * 1{0 not in interval_j}`` over ``m`` studies.

    Each study sees one observation ``Y_j ~ N(0, 1)`` and the loss scale
    ``B_j = B(Y_j)``.  Method ``cd`` reports the credible interval
    ``[g0, 2y - g0]`` (no interval at all when ``Y_j < eps``, counted as a
    miss); method ``e`` reports ``y -+ A(B_j)`` from the e-collection, by
    default tuned to ``n* = 1, alpha* = 0.05``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    y = _normal_draws(m, seed, workers)
    adv = CdBreakingAdversary(epsilon)
    b = adv.b_of(y)
    b = np.atleast_1d(b)
    if method == "cd":
        # [g0, 2y - g0] never contains 0 because g0 > 0
        miss = np.ones(m, dtype=bool)
    elif method == "e":
        coll = coll or NormalECollection(1, 0.05)
        miss = np.abs(y) > e_ci_halfwidth_for_b(1, b, coll)
    else:
        raise ValueError(f"unknown method {method!r}")
    loss = np.where(miss, b, 0.0)
    running = np.cumsum(loss) / np.arange(1, m + 1)
    return InductiveTrace(running, b, miss, method, seed)


# ---------------------------------------------------------------------------
# Coverage under optional stopping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StoppingRule:
    """``fixed-n`` stops at ``n``; ``first-crossing`` stops when ``S_theta* >= 1/alpha`` or at ``n_max``."""

    kind: str = "fixed-n"
    n: int = 100
    n_max: int = 500

    def __post_init__(self):
        if self.kind not in ("fixed-n", "first-crossing"):
            raise ValueError(f"unknown stopping rule {self.kind!r}")
        if self.n < 1 or self.n_max < 1:
            raise ValueError("sample sizes must be >= 1")

    @property
    def horizon(self) -> int:
        return self.n if self.kind == "fixed-n" else self.n_max


@dataclass(frozen=True)
class CoverageReport:
    coverage: float
    stderr: float
    replications: int
    seed: int

    def to_dict(self) -> dict:
        return {"coverage": self.coverage, "stderr": self.stderr,
                "replications": self.replications, "seed": self.seed}


def coverage_under_stopping(coll: NormalECollection, theta_star: float, stopping: StoppingRule,
                            alpha: float, replications: int, seed: int, workers: int = 1,
                            block_size: int = 4096) -> CoverageReport:
    """Fraction of replications whose sufficient e-CI at the stopped size contains ``theta_star``."""
    horizon = stopping.horizon
    target = math.log(1.0 / alpha)
    k = np.arange(1, horizon + 1)
    halfwidth = np.asarray([sufficient_halfwidth(int(n), alpha, coll) for n in k])

    def block(rng, size, _):
        x = theta_star + rng.standard_normal((size, horizon))
        means = np.cumsum(x, axis=1) / k
        if stopping.kind == "fixed-n":
            tau = np.full(size, horizon - 1)
        else:
            crossed = coll.log_evaluate(theta_star, means, k) >= target
            tau = np.where(crossed.any(axis=1), crossed.argmax(axis=1), horizon - 1)
        mle = means[np.arange(size), tau]
        covered = np.abs(mle - theta_star) <= halfwidth[tau]
        return _summary(covered.astype(float))

    n, mean, m2 = _merge(map_blocks(block, replications, seed, STREAM_COVERAGE, workers, block_size))
    return CoverageReport(mean, _stderr(n, m2), n, seed)


def ville_crossing_probability(coll: NormalECollection, theta: float, alpha: float, n_max: int,
                               paths: int, seed: int, workers: int = 1,
                               block_size: int = 4096) -> CoverageReport:
    """Fraction of paths under ``P_theta`` on which ``S_theta(X^k) >= 1/alpha`` for some ``k <= n_max``."""
    target = math.log(1.0 / alpha)
    k = np.arange(1, n_max + 1)

    def block(rng, size, _):
        x = theta + rng.standard_normal((size, n_max))
        means = np.cumsum(x, axis=1) / k
        crossed = (coll.log_evaluate(theta, means, k) >= target).any(axis=1)
        return _summary(crossed.astype(float))

    n, mean, m2 = _merge(map_blocks(block, paths, seed, STREAM_COVERAGE + 16, workers, block_size))
    return CoverageReport(mean, _stderr(n, m2), n, seed)
