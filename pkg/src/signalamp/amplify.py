"""Scoring core: baseline estimation, shrinkage, and the rate-deviation z-test.

A node with a handful of transactions can post an extreme hit rate by
luck. Shrinkage pulls every node's observed rate toward the population
rate with a weight equal to the mean per-node volume, then a one-sided
proportion test asks how many standard errors the stabilized rate sits
above the population rate. Low-volume flukes shrink back to the prior;
high-volume concentrations survive and score high.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import DegenerateBaselineError, NoBaselineError
from .model import GlobalBaseline, NodeAccumulator, NodeId, SignalId


def shrink(hits: int, trials: int, global_rate: float, prior_strength: float) -> float:
    """Stabilized hit rate: (hits + strength * rate) / (trials + strength).

    Behaves like prepending ``prior_strength`` phantom transactions at the
    population rate. With zero trials the result is exactly the prior;
    as trials grow the observed rate dominates.
    """
    if trials < 0 or hits < 0 or hits > trials:
        raise ValueError(f"need 0 <= hits <= trials, got hits={hits} trials={trials}")
    if not 0.0 <= global_rate <= 1.0:
        raise ValueError(f"global_rate must lie in [0, 1], got {global_rate}")
    if not prior_strength > 0.0 or not math.isfinite(prior_strength):
        raise ValueError(f"prior_strength must be positive, got {prior_strength}")
    return (hits + prior_strength * global_rate) / (trials + prior_strength)


def z_score(shrunk_rate: float, global_rate: float, trials: int) -> float:
    """Deviation of the stabilized rate from the population rate, in
    standard errors of a proportion observed over ``trials`` transactions.
    """
    if not 0.0 < global_rate < 1.0:
        raise DegenerateBaselineError(
            f"baseline rate {global_rate} admits no variance; signal inactive"
        )
    if trials < 1:
        raise ValueError("a node needs at least one transaction to be scored")
    stderr = math.sqrt(global_rate * (1.0 - global_rate) / trials)
    return (shrunk_rate - global_rate) / stderr


def compute_baseline(
    accumulators: Iterable[NodeAccumulator], signal: SignalId
) -> GlobalBaseline:
    """Population totals for one signal over a window of node tallies.

    All traffic enters the baseline, including traffic at nodes that later
    get flagged. Raises ``NoBaselineError`` on an empty window.
    """
    total_hits = 0
    total_trials = 0
    active = 0
    for acc in accumulators:
        if acc.trials < 1:
            continue
        active += 1
        total_trials += acc.trials
        total_hits += acc.hits.get(signal, 0)
    if total_trials == 0:
        raise NoBaselineError(f"no transactions in window for signal {signal!r}")
    return GlobalBaseline(signal, total_hits, total_trials, active)


@dataclass(frozen=True, slots=True)
class NodeScore:
    """One node's standing against the baseline for one signal."""

    node: NodeId
    signal: SignalId
    hits: int
    trials: int
    raw_rate: float
    shrunk_rate: float
    z: float


def score_node(acc: NodeAccumulator, baseline: GlobalBaseline) -> NodeScore:
    """Score a single node tally against a precomputed baseline."""
    trials = acc.trials
    if trials < 1:
        raise ValueError(f"node {acc.node!r} has no transactions in window")
    hits = acc.hits.get(baseline.signal, 0)
    rate = baseline.rate
    shrunk = shrink(hits, trials, rate, baseline.prior_strength)
    return NodeScore(
        node=acc.node,
        signal=baseline.signal,
        hits=hits,
        trials=trials,
        raw_rate=hits / trials,
        shrunk_rate=shrunk,
        z=z_score(shrunk, rate, trials),
    )


def score_all(
    accumulators: Iterable[NodeAccumulator], baseline: GlobalBaseline
) -> list[NodeScore]:
    """Score every node with at least one transaction.

    Returns scores ordered by z descending, node id ascending on ties, so
    identical inputs always yield an identical ranking.
    """
    scores = [score_node(acc, baseline) for acc in accumulators if acc.trials >= 1]
    scores.sort(key=lambda sc: (-sc.z, sc.node))
    return scores
