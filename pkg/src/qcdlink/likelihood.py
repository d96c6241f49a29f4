"""Per-slot log-likelihood increments and cumulative LLRs.

The per-slot increment combines a channel term (from the attempt outcome,
present whenever the transmit queue is non-empty) and a measurement term
(present on successful delivery of a non-pre-start sample). The count of
post-start pre-change samples is taken as zero throughout, matching the
recursive detector's convention; pre-start deliveries are identified via the
known initial queue length and contribute no measurement term.

For non-FCFS disciplines the measurement terms must be re-attached to slots
after sorting delivered sample indices; :class:`LlrTermLedger` keeps the raw
terms and reception order and performs that reassignment per busy period
(deliveries never interleave across busy periods).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .model import ChannelModel, DensityModel


class Outcome(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    IDLE = "idle"


@dataclass(frozen=True)
class SlotObservation:
    """What the decision maker sees at the end of one slot."""

    slot: int
    outcome: Outcome
    queue_nonempty: bool
    sensor_id: Optional[int] = None
    sample_index: Optional[int] = None
    value: Optional[float] = None
    is_prestart_delivery: bool = False

    def __post_init__(self):
        if (self.outcome is Outcome.IDLE) == self.queue_nonempty:
            raise ValueError("idle outcome must coincide with an empty queue")
        if (self.value is not None) != (self.outcome is Outcome.SUCCESS):
            raise ValueError("a measurement value is present iff the slot is a success")


def _measurement_llr(obs: SlotObservation, density) -> float:
    if isinstance(density, DensityModel):
        return density.llr(obs.value)
    # list/tuple of per-sensor densities; the delivering sensor's density applies
    return density[obs.sensor_id].llr(obs.value)


def slot_llr(obs: SlotObservation, channel: ChannelModel, density) -> float:
    """Per-slot LLR increment L_k.

    ``density`` is a single DensityModel or a per-sensor sequence (the
    delivering sensor's density is used in the multi-sensor form). Idle slots
    contribute exactly zero.
    """
    if obs.outcome is Outcome.IDLE:
        return 0.0
    if obs.outcome is Outcome.SUCCESS:
        if obs.value is None:
            raise ValueError("success observation without a measurement value")
        term = channel.success_logratio
        if not obs.is_prestart_delivery:
            term += _measurement_llr(obs, density)
        return term
    return channel.failure_logratio


class LlrTermLedger:
    """Raw per-slot channel terms plus measurement terms keyed by sample
    index, with the reception order needed for reordering.

    Busy periods are maximal runs of non-empty-queue slots; the sorted-index
    reassignment is scoped to a busy period, and a period's assignment is
    final once the queue empties.
    """

    def __init__(self):
        self.channel_terms: List[float] = [0.0]  # index = slot, slot 0 unused
        # reception order as (slot, sensor_id, sample_index); prestart entries
        # carry sample_index with a None llr
        self.receptions: List[Tuple[int, Optional[int], Optional[int]]] = []
        self.measurement_llrs: Dict[Tuple[Optional[int], int], float] = {}
        self._busy_periods: List[List[int]] = []   # reception indices per closed period
        self._current_period: List[int] = []       # reception indices, open period
        self._in_busy = False

    @property
    def n_slots(self) -> int:
        return len(self.channel_terms) - 1

    def record(self, obs: SlotObservation, channel: ChannelModel, density) -> float:
        """Append one slot; returns the raw (unreordered) increment."""
        if obs.slot != self.n_slots + 1:
            raise ValueError(f"slots must be recorded in order; expected {self.n_slots + 1}, got {obs.slot}")
        if obs.queue_nonempty and not self._in_busy:
            self._in_busy = True
        elif not obs.queue_nonempty and self._in_busy:
            self._busy_periods.append(self._current_period)
            self._current_period = []
            self._in_busy = False

        raw = slot_llr(obs, channel, density)
        if obs.outcome is Outcome.SUCCESS:
            self.channel_terms.append(channel.success_logratio)
            if not obs.is_prestart_delivery:
                key = (obs.sensor_id, obs.sample_index)
                self.measurement_llrs[key] = _measurement_llr(obs, density)
                self._current_period.append(len(self.receptions))
            self.receptions.append((obs.slot, obs.sensor_id, obs.sample_index))
        elif obs.outcome is Outcome.FAILURE:
            self.channel_terms.append(channel.failure_logratio)
        else:
            self.channel_terms.append(0.0)
        return raw

    # -- reordering -------------------------------------------------------

    def _assign_period(self, reception_indices, out):
        """Sort the period's delivered sample indices ascending and attach the
        j-th smallest measurement's LLR to the period's j-th reception slot."""
        if not reception_indices:
            return
        slots = [self.receptions[i][0] for i in reception_indices]
        entries = [self.receptions[i] for i in reception_indices]
        entries.sort(key=lambda e: (e[2], e[1] if e[1] is not None else 0))
        for slot, (_, sensor, sample) in zip(slots, entries):
            out[slot] += self.measurement_llrs[(sensor, sample)]

    def reassign_measurements(self) -> List[float]:
        """Per-slot total terms (channel + reordered measurement), index = slot."""
        out = list(self.channel_terms)
        for period in self._busy_periods:
            self._assign_period(period, out)
        self._assign_period(self._current_period, out)
        return out

    def cumulative_llr(self, from_slot: int, to_slot: int) -> float:
        """Sum of reordered terms over slots [from_slot, to_slot]."""
        if from_slot > to_slot + 1:
            raise ValueError("from_slot must be <= to_slot + 1")
        terms = self.reassign_measurements()
        return math.fsum(terms[from_slot:to_slot + 1])
