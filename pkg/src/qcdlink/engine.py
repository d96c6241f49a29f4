"""Slotted simulation loop: sampling, queueing, channel, change-point
injection, observation construction, and detector stepping.

Within-slot event order (fixed; the accounting convention everything else
relies on):

1. read the queue length Q_k;
2. if non-empty, select a packet and run the channel trial;
3. deliver the packet, or count the failed attempt and drop it at the cap;
4. append the slot's new arrival (it is counted in Q_{k+1});
5. update the detector with the slot's observation.

Replications are reproducible: a master seed plus a replication index derive
independent named substreams (arrivals / channel / values / scheduler / init),
so coupling traces across disciplines or detectors is exact. Two execution
paths produce bit-identical results where they overlap: a lean specialized
loop for single-sensor FCFS scenarios with a recursive detector, and a
general loop that supports every discipline, multi-sensor scheduling, and the
generalized reordering detector.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .detectors import make_detector
from .likelihood import Outcome, SlotObservation, slot_llr
from .model import (ConfigError, Fcfs, KnownQueue, ScenarioConfig,
                    StationaryDraw, INFINITY)
from .queueing import Packet, TransmitQueue, stationary_queue_draw

LANES = ("init", "arrivals", "channel", "values", "scheduler")

TRACE_COLUMNS = ("k", "Q_k", "y", "U_k", "J_k", "Z_k", "L_k", "C_k")


@dataclass(frozen=True)
class RngPolicy:
    """Derives one independent generator per (replication, lane).

    Identical (master_seed, rep_index) always yield bit-identical streams, and
    the lanes are seeded independently of the scenario, so scenarios that
    differ only in service discipline or detector consume the same arrival,
    loss, and value draws (coupled comparison).
    """

    master_seed: int = 0

    def streams(self, rep_index: int) -> dict:
        return {
            lane: np.random.Generator(np.random.PCG64(
                np.random.SeedSequence(self.master_seed, spawn_key=(rep_index, li))))
            for li, lane in enumerate(LANES)
        }


@dataclass
class ReplicationResult:
    """Outcome of one simulated path.

    ``stopping_slot`` is None when the horizon was exhausted without an alarm
    (truncation sentinel). ``records`` is the running-max crossing curve
    [(slot, new max)], captured on request; it determines the stopping time
    for *any* threshold on this path.
    """

    rep_index: int
    stopping_slot: Optional[int]
    change_slot: float
    final_statistic: float
    prechange_sample_count: int = 0
    trace: Optional[List[tuple]] = None
    records: Optional[List[Tuple[int, float]]] = None

    @property
    def truncated(self) -> bool:
        return self.stopping_slot is None

    @property
    def false_alarm(self) -> bool:
        return self.stopping_slot is not None and self.stopping_slot <= self.change_slot

    @property
    def detection_delay(self) -> Optional[float]:
        """(T - nu)^+ ; None when truncated or when no change was injected."""
        if self.stopping_slot is None or self.change_slot == INFINITY:
            return None
        return max(self.stopping_slot - self.change_slot, 0)

    @property
    def detection_delay_plus_one(self) -> Optional[float]:
        """(T - nu + 1)^+, the Lorden-criterion convention."""
        if self.stopping_slot is None or self.change_slot == INFINITY:
            return None
        return max(self.stopping_slot - self.change_slot + 1, 0)


# ---------------------------------------------------------------------------
# pre-drawn randomness
# ---------------------------------------------------------------------------

def _draw_inputs(config: ScenarioConfig, streams):
    """Draw all per-slot randomness up front (index = slot, entry 0 unused).

    Consumption order is fixed (per lane, then per sensor) so that both
    execution paths see identical draws.
    """
    horizon = config.horizon
    nu = config.change_slot
    n_pre = horizon if nu == INFINITY else min(int(nu), horizon)

    arrivals = np.zeros((len(config.sensors), horizon + 1), dtype=bool)
    for i, sensor in enumerate(config.sensors):
        arrivals[i] = sensor.sampling.arrivals(streams["arrivals"], horizon)

    channel_u = np.empty(horizon + 1)
    channel_u[0] = 1.0
    channel_u[1:] = streams["channel"].random(horizon)

    values = np.zeros((len(config.sensors), horizon + 1))
    for i, sensor in enumerate(config.sensors):
        if n_pre > 0:
            values[i, 1:n_pre + 1] = sensor.density.sample(streams["values"], post=False, size=n_pre)
        if n_pre < horizon:
            values[i, n_pre + 1:] = sensor.density.sample(streams["values"], post=True, size=horizon - n_pre)

    return arrivals, channel_u, values


def _initial_backlogs(config: ScenarioConfig, init_rng) -> List[int]:
    init = config.initial_queue
    if isinstance(init, KnownQueue):
        return [init.q1] * len(config.sensors)
    if isinstance(init, StationaryDraw):
        return [stationary_queue_draw(s.sampling.rate, config.channel.p0, init_rng)
                for s in config.sensors]
    raise ConfigError(f"unknown initial queue mode {init!r}")


def _prestart_values(config: ScenarioConfig, backlogs, init_rng):
    out = []
    for sensor, q in zip(config.sensors, backlogs):
        out.append(sensor.density.sample(init_rng, post=False, size=q) if q else [])
    return out


# ---------------------------------------------------------------------------
# replication drivers
# ---------------------------------------------------------------------------

def run_replication(config: ScenarioConfig, detector_kind: str = "recursive-cusum",
                    threshold: Optional[float] = None, rep_index: int = 0,
                    rng_policy: Optional[RngPolicy] = None,
                    capture_trace: bool = False,
                    capture_records: bool = False) -> ReplicationResult:
    """Simulate one path until the first alarm or the horizon.

    ``threshold=None`` disables alarming (used with ``capture_records`` to
    collect the running-max curve for threshold calibration).
    """
    if rng_policy is None:
        rng_policy = RngPolicy(config.seed)
    streams = rng_policy.streams(rep_index)

    backlogs = _initial_backlogs(config, streams["init"])
    prestart_vals = _prestart_values(config, backlogs, streams["init"])
    arrivals, channel_u, values = _draw_inputs(config, streams)

    fast_ok = (len(config.sensors) == 1 and isinstance(config.discipline, Fcfs)
               and detector_kind in ("recursive-cusum", "network-oblivious")
               and not capture_trace)
    if fast_ok:
        return _run_fcfs_single(config, detector_kind, threshold, rep_index,
                                backlogs[0], arrivals, channel_u, values,
                                capture_records)
    return _run_general(config, detector_kind, threshold, rep_index,
                        backlogs, prestart_vals, arrivals, channel_u, values,
                        streams["scheduler"], capture_trace, capture_records)


def _run_fcfs_single(config, detector_kind, threshold, rep_index, backlog,
                     arrivals, channel_u, values, capture_records):
    """Specialized loop: single sensor, FCFS, retransmit cap, recursive
    detectors. The queue is just a FIFO of sample slots plus a pre-start
    counter; no packet objects are built."""
    ch = config.channel
    nu = config.change_slot
    cap = config.retransmit_cap
    horizon = config.horizon
    density = config.sensors[0].density
    oblivious = detector_kind == "network-oblivious"
    h = math.inf if threshold is None else threshold
    lp_succ = ch.success_logratio
    lp_fail = ch.failure_logratio

    arr = arrivals[0]
    vals = values[0]
    pending = list(range(-backlog + 1, 1))  # pre-start packets: sample slots <= 0
    head = 0
    attempts = 0
    stat = 0.0
    running_max = 0.0
    records: Optional[List[Tuple[int, float]]] = [] if capture_records else None
    stopping = None
    n_pre_samples = 0

    for k in range(1, horizon + 1):
        inc = 0.0
        if head < len(pending):
            if channel_u[k] < (ch.p0 if k <= nu else ch.p1):
                t = pending[head]
                head += 1
                attempts = 0
                if oblivious:
                    inc = density.llr(vals[t]) if t >= 1 else 0.0
                else:
                    inc = lp_succ + (density.llr(vals[t]) if t >= 1 else 0.0)
            else:
                attempts += 1
                if attempts >= cap:
                    head += 1
                    attempts = 0
                if not oblivious:
                    inc = lp_fail
        if arr[k]:
            pending.append(k)
            if k <= nu:
                n_pre_samples += 1
        stat = stat + inc
        if stat < 0.0:
            stat = 0.0
        if stat > running_max:
            running_max = stat
            if records is not None:
                records.append((k, stat))
        if stat > h:
            stopping = k
            break

    return ReplicationResult(rep_index, stopping, nu, stat,
                             prechange_sample_count=n_pre_samples,
                             records=records)


def _run_general(config, detector_kind, threshold, rep_index, backlogs,
                 prestart_vals, arrivals, channel_u, values, sched_rng,
                 capture_trace, capture_records):
    ch = config.channel
    nu = config.change_slot
    cap = config.retransmit_cap
    horizon = config.horizon
    densities = [s.density for s in config.sensors]
    if _needs_weights(config):
        weights = [d.kl_f1_f0() for d in densities]
    else:
        weights = [0.0] * len(densities)

    queue = TransmitQueue(len(config.sensors), config.discipline, info_weights=weights)
    for i, (q, vals_i) in enumerate(zip(backlogs, prestart_vals)):
        for j in range(q):
            queue.push(Packet(sample_index=j - q + 1, sample_slot=j - q + 1,
                              sensor_id=i, value=float(vals_i[j]), is_prestart=True))
    next_index = [1] * len(config.sensors)

    h = math.inf if threshold is None else threshold
    generalized = detector_kind == "generalized-cusum"
    oblivious = detector_kind == "network-oblivious"
    use_detector = generalized or capture_trace
    detector = make_detector(detector_kind, h, ch, densities) if use_detector else None
    lp_succ = ch.success_logratio
    lp_fail = ch.failure_logratio

    stat = 0.0
    running_max = 0.0
    records: Optional[List[Tuple[int, float]]] = [] if capture_records else None
    trace: Optional[List[tuple]] = [] if capture_trace else None
    stopping = None
    n_pre_samples = 0

    for k in range(1, horizon + 1):
        q_k = len(queue)
        outcome = Outcome.IDLE
        pkt = None
        delivered = None
        if q_k > 0:
            pkt = queue.select_packet(k, sched_rng)
            success = channel_u[k] < (ch.p0 if k <= nu else ch.p1)
            outcome = Outcome.SUCCESS if success else Outcome.FAILURE
            if success:
                delivered = pkt
            queue.slot_update(success, None, cap)

        if arrivals[:, k].any():
            for i in range(len(config.sensors)):
                if arrivals[i, k]:
                    queue.push(Packet(sample_index=next_index[i], sample_slot=k,
                                      sensor_id=i, value=float(values[i, k])))
                    next_index[i] += 1
                    if k <= nu:
                        n_pre_samples += 1

        if detector is not None:
            obs = _make_obs(k, outcome, q_k > 0, delivered)
            raw_llr = slot_llr(obs, ch, densities)
            detector.step(obs)
            stat = detector.statistic
            alarm = detector.alarmed_at is not None
        else:
            inc = 0.0
            if outcome is Outcome.FAILURE:
                inc = 0.0 if oblivious else lp_fail
            elif outcome is Outcome.SUCCESS:
                inc = 0.0 if oblivious else lp_succ
                if not delivered.is_prestart:
                    inc += densities[delivered.sensor_id].llr(delivered.value)
            stat = max(stat + inc, 0.0)
            alarm = stat > h

        if trace is not None:
            y = None if outcome is Outcome.IDLE else int(outcome is Outcome.SUCCESS)
            trace.append((k, q_k, y,
                          delivered.sensor_id + 1 if delivered else None,
                          delivered.sample_index if delivered else None,
                          delivered.value if delivered else None,
                          raw_llr, stat))
        if stat > running_max:
            running_max = stat
            if records is not None:
                records.append((k, stat))
        if alarm:
            stopping = k
            break

    return ReplicationResult(rep_index, stopping, nu, stat,
                             prechange_sample_count=n_pre_samples,
                             trace=trace, records=records)


def _needs_weights(config) -> bool:
    from .model import DiscountedInfo, LookBack
    return isinstance(config.discipline, (DiscountedInfo, LookBack))


def _make_obs(k, outcome, nonempty, delivered):
    if outcome is Outcome.SUCCESS:
        return SlotObservation(slot=k, outcome=outcome, queue_nonempty=True,
                               sensor_id=delivered.sensor_id,
                               sample_index=delivered.sample_index,
                               value=delivered.value,
                               is_prestart_delivery=delivered.is_prestart)
    return SlotObservation(slot=k, outcome=outcome, queue_nonempty=nonempty)


# ---------------------------------------------------------------------------
# batches and occupancy
# ---------------------------------------------------------------------------

def _batch_worker(args):
    config, detector_kind, threshold, indices, seed, capture_records = args
    policy = RngPolicy(seed)
    return [run_replication(config, detector_kind, threshold, rep_index=i,
                            rng_policy=policy, capture_records=capture_records)
            for i in indices]


def run_batch(config: ScenarioConfig, detector_kind: str = "recursive-cusum",
              threshold: Optional[float] = None, n_reps: int = 1,
              parallelism: int = 1, rng_policy: Optional[RngPolicy] = None,
              capture_records: bool = False) -> List[ReplicationResult]:
    """Run ``n_reps`` independent replications, deterministically.

    Each replication derives its streams from (master seed, replication
    index), so the result list is identical for any parallelism degree;
    workers only partition the index range.
    """
    if n_reps < 1:
        raise ConfigError("n_reps must be >= 1")
    seed = rng_policy.master_seed if rng_policy is not None else config.seed
    indices = list(range(n_reps))
    if parallelism <= 1 or n_reps < 4:
        return _batch_worker((config, detector_kind, threshold, indices, seed, capture_records))
    chunks = [indices[i::parallelism] for i in range(parallelism)]
    jobs = [(config, detector_kind, threshold, c, seed, capture_records) for c in chunks if c]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        parts = list(pool.map(_batch_worker, jobs))
    results = [r for part in parts for r in part]
    results.sort(key=lambda r: r.rep_index)
    return results


def estimate_occupancy(config: ScenarioConfig, n_slots: int = 1_000_000,
                       seed: Optional[int] = None) -> float:
    """Long-run fraction of slots in which some queue is non-empty, under the
    post-change dynamics (service rate p1, all sensors sampling).

    For an uncapped multi-sensor system the total backlog is a single
    super-queue (selection does not change the total), so only the aggregate
    is simulated. Finite caps are supported for single-sensor scenarios; the
    attempt counter follows the head-of-line packet (FCFS retry semantics).
    """
    cap = config.retransmit_cap
    if len(config.sensors) > 1 and cap != INFINITY:
        raise ConfigError("occupancy with a finite cap is only supported for one sensor")
    rng = np.random.Generator(np.random.PCG64(config.seed if seed is None else seed))
    p1 = config.channel.p1

    rates = [s.sampling.rate for s in config.sensors]
    block = 100_000
    q = 0
    attempts = 0
    busy = 0
    done = 0
    while done < n_slots:
        m = min(block, n_slots - done)
        arr = np.zeros(m, dtype=np.int64)
        for r in rates:
            arr += rng.random(m) < r
        srv = rng.random(m) < p1
        for j in range(m):
            if q > 0:
                busy += 1
                if srv[j]:
                    q -= 1
                    attempts = 0
                else:
                    attempts += 1
                    if attempts >= cap:
                        q -= 1
                        attempts = 0
            q += arr[j]
        done += m
    return busy / n_slots
