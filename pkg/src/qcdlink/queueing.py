"""Transmit queue(s): packet records, slot-update dynamics, service
disciplines, retransmission caps, and random-access sensor selection.

A :class:`TransmitQueue` pools the packets of all sensors (one internal deque
per sensor, so selection rules never scan the full buffer) and applies one of
the service disciplines from :mod:`qcdlink.model`. Single-sensor scenarios are
the L=1 special case.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .model import (DiscountedInfo, Fcfs, Lcfs, LookBack, RandomAccess,
                    ConfigError)


@dataclass(eq=False)
class Packet:
    """One queued measurement sample.

    ``sample_index`` is sequential per sensor; pre-start backlog packets carry
    indices <= 0 and ``is_prestart=True`` (the DM discards their measurement on
    delivery). ``arrival_seq`` totally orders arrivals across sensors.
    """

    sample_index: int
    sample_slot: int
    sensor_id: int
    value: float
    attempts: int = 0
    is_prestart: bool = False
    arrival_seq: int = field(default=0, compare=False)


def select_sensor(queue_lengths: Sequence[int], rng) -> Optional[int]:
    """Uniform random choice among sensors with a non-empty queue (the
    idealized contention-free random access of the multi-sensor model).
    Returns a 0-based sensor index, or None if every queue is empty."""
    nonempty = [i for i, q in enumerate(queue_lengths) if q > 0]
    if not nonempty:
        return None
    if len(nonempty) == 1:
        return nonempty[0]
    return nonempty[int(rng.integers(len(nonempty)))]


class TransmitQueue:
    """Pooled transmit buffer with a pluggable service discipline.

    ``info_weights[i]`` is the per-measurement information content I* of
    sensor i (the measurement KL divergence), used by the DiscountedInfo and
    LookBack disciplines.
    """

    def __init__(self, n_sensors: int, discipline, info_weights: Optional[Sequence[float]] = None):
        self.discipline = discipline
        self.n_sensors = n_sensors
        self.info_weights = list(info_weights) if info_weights is not None else [0.0] * n_sensors
        if isinstance(discipline, (DiscountedInfo, LookBack)) and info_weights is None:
            raise ConfigError(f"{discipline.name} discipline needs per-sensor information weights")
        self._queues: List[deque] = [deque() for _ in range(n_sensors)]
        self._arrival_seq = 0
        self._length = 0
        self._selected: Optional[Packet] = None

    # -- state ------------------------------------------------------------

    def __len__(self):
        return self._length

    @property
    def nonempty(self) -> bool:
        return self._length > 0

    def lengths_by_sensor(self) -> List[int]:
        return [len(q) for q in self._queues]

    def packets(self) -> List[Packet]:
        out = []
        for q in self._queues:
            out.extend(q)
        out.sort(key=lambda p: p.arrival_seq)
        return out

    # -- arrivals ---------------------------------------------------------

    def push(self, packet: Packet) -> None:
        packet.arrival_seq = self._arrival_seq
        self._arrival_seq += 1
        self._queues[packet.sensor_id].append(packet)
        self._length += 1

    # -- selection --------------------------------------------------------

    def select_packet(self, slot: int, rng=None) -> Optional[Packet]:
        """Pick the packet to attempt in this slot, per the discipline.

        Each per-sensor deque is in arrival order, so FCFS/LCFS only compare
        deque heads/tails, DiscountedInfo only compares tails (for a fixed
        sensor a fresher packet always has higher priority), and LookBack
        merges the newest few packets of each sensor.
        """
        if self._length == 0:
            self._selected = None
            return None
        d = self.discipline
        if isinstance(d, Fcfs):
            pkt = min((q[0] for q in self._queues if q), key=lambda p: p.arrival_seq)
        elif isinstance(d, Lcfs):
            pkt = max((q[-1] for q in self._queues if q), key=lambda p: p.arrival_seq)
        elif isinstance(d, RandomAccess):
            if rng is None:
                raise ConfigError("random-access discipline needs an rng")
            idx = select_sensor(self.lengths_by_sensor(), rng)
            pkt = self._queues[idx][0]
        elif isinstance(d, DiscountedInfo):
            # priority I*_i * alpha^(slot - t_j); ties broken by recency then
            # by smaller sensor id, for reproducible traces
            pkt = max((q[-1] for q in self._queues if q),
                      key=lambda p: (self.info_weights[p.sensor_id] * d.alpha ** (slot - p.sample_slot),
                                     p.sample_slot, -p.sensor_id))
        elif isinstance(d, LookBack):
            # the w most recently arrived packets still queued, then the most
            # informative among them (ties to the most recent arrival)
            candidates = []
            for q in self._queues:
                candidates.extend(list(q)[-d.window:])
            candidates.sort(key=lambda p: -p.arrival_seq)
            window = candidates[:d.window]
            pkt = max(window, key=lambda p: (self.info_weights[p.sensor_id], p.arrival_seq))
        else:
            raise ConfigError(f"unknown discipline {d!r}")
        self._selected = pkt
        return pkt

    # -- slot completion --------------------------------------------------

    def slot_update(self, success: bool, arrival: Optional[Packet], cap) -> None:
        """Complete the slot: resolve the attempted packet, then append the
        new arrival (which is counted in the next slot's queue length).

        On success the selected packet leaves the queue; on failure its
        attempt counter is incremented and the packet is dropped once the
        counter reaches the retransmission cap.
        """
        pkt = self._selected
        if success and pkt is None:
            raise RuntimeError("successful transmission recorded with no packet selected")
        if pkt is not None:
            if success:
                self._remove(pkt)
            else:
                pkt.attempts += 1
                if pkt.attempts >= cap:
                    self._remove(pkt)
        self._selected = None
        if arrival is not None:
            self.push(arrival)

    def _remove(self, packet: Packet) -> None:
        self._queues[packet.sensor_id].remove(packet)
        self._length -= 1


def stationary_queue_draw(r: float, p: float, rng) -> int:
    """Draw from the stationary queue-length law of the discrete-time queue
    Q' = (Q - Bern(p))^+ + Bern(r).

    The chain is birth-death with up-rate r(1-p) and down-rate p(1-r) from
    any positive state, giving P(Q=0) = 1 - r/p and a geometric tail with
    ratio sigma = r(1-p) / (p(1-r)).
    """
    if not 0 < r < p < 1:
        raise ConfigError(f"stationary draw requires 0 < r < p < 1, got r={r}, p={p}")
    if rng.random() >= r / p:
        return 0
    sigma = r * (1 - p) / (p * (1 - r))
    return int(rng.geometric(1 - sigma))
