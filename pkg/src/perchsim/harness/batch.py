"""Seeded Monte Carlo batches over independent trials.

Trials run on consecutive seeds (base + index) with per-trial generators, so
results are independent of execution order and of how many workers ran them.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .scenario import ScenarioConfig, scenario_from_dict, scenario_to_dict, scenario_hash
from .trial import Outcome, TrialResult, run_trial


@dataclass
class MonteCarloSummary:
    n_trials: int
    seed_base: int
    scenario_hash: str
    counts: dict = field(default_factory=dict)  # outcome value -> count
    rates: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)  # 95% Wilson bounds per outcome

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "seed_base": self.seed_base,
            "seed_range": [self.seed_base, self.seed_base + self.n_trials - 1],
            "scenario_hash": self.scenario_hash,
            "counts": self.counts,
            "rates": self.rates,
            "intervals_95": self.intervals,
        }


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple:
    """95% Wilson score interval; well behaved at rates of 0 and 1."""
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def summarize(results: list, seed_base: int) -> MonteCarloSummary:
    counts = {o.value: 0 for o in Outcome}
    for r in results:
        counts[r.outcome.value] += 1
    n = len(results)
    counts = {k: v for k, v in counts.items() if v > 0}
    rates = {k: v / n for k, v in counts.items()}
    intervals = {k: list(wilson_interval(v, n)) for k, v in counts.items()}
    assert sum(counts.values()) == n
    return MonteCarloSummary(
        n_trials=n,
        seed_base=seed_base,
        scenario_hash=results[0].scenario_hash if results else scenario_hash(ScenarioConfig()),
        counts=counts,
        rates=rates,
        intervals=intervals,
    )


def _worker(args) -> TrialResult:
    cfg_dict, seed, keep_details = args
    cfg = scenario_from_dict(cfg_dict)
    result = run_trial(cfg, seed=seed)
    if not keep_details:
        result.trace = []
    return result


def run_batch(
    cfg: ScenarioConfig,
    n_trials: int,
    seed_base: int = 0,
    parallelism: int = 1,
    keep_details: bool = False,
) -> tuple:
    """Run n trials on seeds seed_base..seed_base+n-1; returns (summary, results).

    Aggregation is keyed by seed order, so the summary is identical for any
    worker count.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    cfg.validate()
    seeds = [seed_base + i for i in range(n_trials)]
    if parallelism <= 1:
        results = [_worker((scenario_to_dict(cfg), s, keep_details)) for s in seeds]
    else:
        cfg_dict = scenario_to_dict(cfg)
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(
                pool.map(
                    _worker,
                    [(cfg_dict, s, keep_details) for s in seeds],
                    chunksize=max(1, n_trials // (parallelism * 8)),
                )
            )
    return summarize(results, seed_base), results
