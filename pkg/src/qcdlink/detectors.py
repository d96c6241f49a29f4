"""Stopping rules: the recursive CUSUM, the generalized (reordering) CUSUM
for non-FCFS service, the network-oblivious baseline, and the empirical
stochastic-dominance check used in the discipline-ordering experiments.

All detectors alarm on a strict threshold crossing and stop at the first
alarm. The generalized statistic is clamped at zero so that it coincides
exactly with the recursive form on FCFS traces.
"""

from __future__ import annotations

import math
from bisect import insort
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .likelihood import LlrTermLedger, Outcome, SlotObservation, slot_llr


class RecursiveCusum:
    """C_n = max(C_{n-1} + L_n, 0), alarm when C_n > h."""

    kind = "recursive-cusum"

    def __init__(self, threshold: float, channel, density):
        if not threshold > 0:
            raise ValueError("threshold must be positive")
        self.threshold = threshold
        self.channel = channel
        self.density = density
        self.statistic = 0.0
        self.alarmed_at: Optional[int] = None

    def step(self, obs: SlotObservation) -> bool:
        if self.alarmed_at is not None:
            raise RuntimeError("detector already alarmed")
        increment = slot_llr(obs, self.channel, self.density)
        if not math.isfinite(increment):
            raise FloatingPointError(f"non-finite LLR increment at slot {obs.slot}")
        self.statistic = max(self.statistic + increment, 0.0)
        if self.statistic > self.threshold:
            self.alarmed_at = obs.slot
            return True
        return False


class NetworkOblivious:
    """Baseline that ignores the channel process: the recursive CUSUM is fed
    the measurement LLR on successful (non-pre-start) deliveries and zero on
    every other slot."""

    kind = "network-oblivious"

    def __init__(self, threshold: float, channel, density):
        if not threshold > 0:
            raise ValueError("threshold must be positive")
        self.threshold = threshold
        self.density = density
        self.statistic = 0.0
        self.alarmed_at: Optional[int] = None

    def step(self, obs: SlotObservation) -> bool:
        if self.alarmed_at is not None:
            raise RuntimeError("detector already alarmed")
        increment = 0.0
        if obs.outcome is Outcome.SUCCESS and not obs.is_prestart_delivery:
            density = self.density
            if not hasattr(density, "llr"):
                density = density[obs.sensor_id]
            increment = density.llr(obs.value)
        self.statistic = max(self.statistic + increment, 0.0)
        if self.statistic > self.threshold:
            self.alarmed_at = obs.slot
            return True
        return False


class GeneralizedCusum:
    """C_n = max(0, max_j cumulative reordered LLR over (j, n]).

    The statistic equals P_n - min_{0<=j<n} P_j on the reordered term
    sequence, where P is the running total. Terms of completed busy periods
    are final, so their running total and prefix minimum are frozen; only the
    open busy period is re-assigned (sample indices sorted ascending onto the
    period's reception slots) and re-scanned at each step. Memory and work per
    slot stay proportional to the open busy period's length.
    """

    kind = "generalized-cusum"

    def __init__(self, threshold: float, channel, density):
        if not threshold > 0:
            raise ValueError("threshold must be positive")
        self.threshold = threshold
        self.channel = channel
        self.density = density
        self.ledger = LlrTermLedger()
        self.statistic = 0.0
        self.alarmed_at: Optional[int] = None
        # frozen prefix state: totals through the last finalized slot
        self._frozen_total = 0.0
        self._frozen_min_prefix = 0.0   # includes the empty prefix P_0 = 0
        # open busy period
        self._period_channel: List[float] = []          # per period slot
        self._period_delivery_pos: List[int] = []       # reception position -> period offset
        # delivery entries are (sample_index, sensor_id, llr); the sort order
        # must match the ledger's reassignment key
        self._period_llrs: List[Tuple[int, int, float]] = []
        self._period_sorted: List[Tuple[int, int, float]] = []

    def _finalize_period(self):
        # the prefix minimum must scan every intermediate total of the period
        terms = self._period_terms()
        total = self._frozen_total
        for t in terms:
            total += t
            self._frozen_min_prefix = min(self._frozen_min_prefix, total)
        self._frozen_total = total
        self._period_channel = []
        self._period_delivery_pos = []
        self._period_llrs = []
        self._period_sorted = []

    def _period_terms(self) -> List[float]:
        terms = list(self._period_channel)
        for pos, (_, _, llr) in zip(self._period_delivery_pos, self._period_sorted):
            terms[pos] += llr
        return terms

    def step(self, obs: SlotObservation) -> bool:
        if self.alarmed_at is not None:
            raise RuntimeError("detector already alarmed")
        self.ledger.record(obs, self.channel, self.density)

        if not obs.queue_nonempty:
            if self._period_channel:
                self._finalize_period()
            # idle slot: zero term; P_n equals the frozen total
            self.statistic = max(0.0, self._frozen_total - self._frozen_min_prefix)
            self._frozen_min_prefix = min(self._frozen_min_prefix, self._frozen_total)
        else:
            if obs.outcome is Outcome.SUCCESS:
                self._period_channel.append(self.channel.success_logratio)
                if not obs.is_prestart_delivery:
                    density = self.density
                    if not hasattr(density, "llr"):
                        density = density[obs.sensor_id]
                    entry = (obs.sample_index,
                             obs.sensor_id if obs.sensor_id is not None else 0,
                             density.llr(obs.value))
                    self._period_delivery_pos.append(len(self._period_channel) - 1)
                    self._period_llrs.append(entry)
                    insort(self._period_sorted, entry)
            else:
                self._period_channel.append(self.channel.failure_logratio)
            terms = self._period_terms()
            total = self._frozen_total
            min_prefix = self._frozen_min_prefix
            for t in terms[:-1]:
                total += t
                min_prefix = min(min_prefix, total)
            total += terms[-1]
            self.statistic = max(0.0, total - min_prefix)

        if self.statistic > self.threshold:
            self.alarmed_at = obs.slot
            return True
        return False


def generalized_statistic(ledger: LlrTermLedger, n: Optional[int] = None) -> float:
    """From-scratch evaluation of the generalized CUSUM statistic at slot n,
    clamped at zero. Reference implementation for the incremental detector."""
    if n is None:
        n = ledger.n_slots
    if n > ledger.n_slots:
        raise ValueError(f"ledger covers {ledger.n_slots} slots, asked for {n}")
    terms = ledger.reassign_measurements()[:n + 1]
    if len(terms) <= 1:
        return 0.0
    # C_n = max(0, P_n - min_{0 <= j < n} P_j) on the reordered prefix sums
    total = 0.0
    min_prefix = 0.0
    for t in terms[1:-1]:
        total += t
        min_prefix = min(min_prefix, total)
    total += terms[-1]
    return max(0.0, total - min_prefix)


def is_stochastically_dominated(samples_a: Sequence[float], samples_b: Sequence[float],
                                levels: Optional[Sequence[float]] = None,
                                alpha: float = 0.05) -> Tuple[bool, float]:
    """Empirical check that a <=_st b: ECDF of a >= ECDF of b everywhere, up
    to a one-sided two-sample Kolmogorov-Smirnov slack at level ``alpha``.

    Returns (dominated, max_violation) where the violation at x is
    ECDF_b(x) - ECDF_a(x) (positive values work against dominance).
    """
    a = np.sort(np.asarray(samples_a, dtype=float))
    b = np.sort(np.asarray(samples_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be non-empty")
    if levels is None:
        levels = np.union1d(a, b)
    else:
        levels = np.asarray(levels, dtype=float)
    cdf_a = np.searchsorted(a, levels, side="right") / a.size
    cdf_b = np.searchsorted(b, levels, side="right") / b.size
    max_violation = float(np.max(cdf_b - cdf_a))
    slack = math.sqrt(-math.log(alpha) / 2.0) * math.sqrt((a.size + b.size) / (a.size * b.size))
    return max_violation <= slack, max_violation


def make_detector(kind: str, threshold: float, channel, density):
    """Factory keyed by the detector kind strings used in configs and CSVs."""
    kinds = {
        RecursiveCusum.kind: RecursiveCusum,
        GeneralizedCusum.kind: GeneralizedCusum,
        NetworkOblivious.kind: NetworkOblivious,
    }
    if kind not in kinds:
        raise ValueError(f"unknown detector kind {kind!r}; expected one of {sorted(kinds)}")
    return kinds[kind](threshold, channel, density)
