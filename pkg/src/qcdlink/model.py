"""Probability primitives: measurement densities, the lossy channel, sampling
processes, scenario configuration, and closed-form information rates.

All information quantities are in nats. Gaussian densities are parameterized
by *variance* (an explicit ``variance`` field, never a standard deviation).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union


class ConfigError(ValueError):
    """Raised when a scenario or operation precondition is violated."""


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

class DensityModel:
    """Pre/post-change measurement distribution pair (f0, f1).

    Subclasses provide log densities, a per-law sampler, and the KL
    divergence D(f1 || f0) used by information-rate formulas and the
    information-weighted schedulers.
    """

    def log_f0(self, z):
        raise NotImplementedError

    def log_f1(self, z):
        raise NotImplementedError

    def llr(self, z):
        """log f1(z) - log f0(z); raises on points outside the common support."""
        out = self.log_f1(z) - self.log_f0(z)
        if not math.isfinite(out):
            raise ValueError(f"log-likelihood ratio not finite at z={z!r}")
        return out

    def sample(self, rng, post: bool, size=None):
        raise NotImplementedError

    def kl_f1_f0(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianKnownVariance(DensityModel):
    """N(mean0, variance) -> N(mean1, variance) with shared, known variance."""

    mean0: float
    mean1: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ConfigError(f"variance must be > 0, got {self.variance}")

    def log_f0(self, z):
        return -0.5 * math.log(2 * math.pi * self.variance) - (z - self.mean0) ** 2 / (2 * self.variance)

    def log_f1(self, z):
        return -0.5 * math.log(2 * math.pi * self.variance) - (z - self.mean1) ** 2 / (2 * self.variance)

    def llr(self, z):
        # closed form: ((m1 - m0) z - (m1^2 - m0^2)/2) / var
        return ((self.mean1 - self.mean0) * z
                - (self.mean1 ** 2 - self.mean0 ** 2) / 2.0) / self.variance

    def sample(self, rng, post, size=None):
        mean = self.mean1 if post else self.mean0
        return rng.normal(mean, math.sqrt(self.variance), size=size)

    def kl_f1_f0(self):
        return (self.mean1 - self.mean0) ** 2 / (2 * self.variance)


@dataclass(frozen=True)
class BernoulliMeasurement(DensityModel):
    """Binary measurements: Bern(q0) before the change, Bern(q1) after."""

    q0: float
    q1: float

    def __post_init__(self):
        for name, q in (("q0", self.q0), ("q1", self.q1)):
            if not 0 < q < 1:
                raise ConfigError(f"{name} must be in (0,1), got {q}")

    def log_f0(self, z):
        return math.log(self.q0) if z else math.log(1 - self.q0)

    def log_f1(self, z):
        return math.log(self.q1) if z else math.log(1 - self.q1)

    def llr(self, z):
        if z:
            return math.log(self.q1 / self.q0)
        return math.log((1 - self.q1) / (1 - self.q0))

    def sample(self, rng, post, size=None):
        q = self.q1 if post else self.q0
        if size is None:
            return 1.0 if rng.random() < q else 0.0
        return (rng.random(size) < q).astype(float)

    def kl_f1_f0(self):
        return kl_bernoulli(self.q1, self.q0)


@dataclass(frozen=True)
class CustomDensity(DensityModel):
    """User-supplied log densities and samplers.

    ``kl`` is the (known) divergence D(f1 || f0); it must be supplied when the
    density is used with information-rate computations or the
    information-weighted schedulers. Log densities are supplied directly --
    nothing is differentiated or estimated numerically.
    """

    logf0: Callable[[float], float]
    logf1: Callable[[float], float]
    sampler0: Callable = None
    sampler1: Callable = None
    kl: Optional[float] = None

    def log_f0(self, z):
        return self.logf0(z)

    def log_f1(self, z):
        return self.logf1(z)

    def sample(self, rng, post, size=None):
        sampler = self.sampler1 if post else self.sampler0
        if sampler is None:
            raise ConfigError("CustomDensity has no sampler for the requested law")
        if size is None:
            return sampler(rng)
        return [sampler(rng) for _ in range(size)]

    def kl_f1_f0(self):
        if self.kl is None:
            raise ConfigError("CustomDensity used without a supplied KL divergence")
        return self.kl


# ---------------------------------------------------------------------------
# channel and sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelModel:
    """Bernoulli packet-success channel: success prob p0 before the change,
    p1 after. Both probabilities are known to the decision maker."""

    p0: float
    p1: float

    def __post_init__(self):
        for name, p in (("p0", self.p0), ("p1", self.p1)):
            if not 0 < p < 1:
                raise ConfigError(f"{name} must be in (0,1), got {p}")

    @property
    def success_logratio(self) -> float:
        return math.log(self.p1 / self.p0)

    @property
    def failure_logratio(self) -> float:
        return math.log((1 - self.p1) / (1 - self.p0))

    def kl(self) -> float:
        """D(Bern(p1) || Bern(p0))."""
        return kl_bernoulli(self.p1, self.p0)

    def success_prob(self, slot: int, change_slot) -> float:
        return self.p0 if slot <= change_slot else self.p1


class SamplingProcess:
    """Packet arrival process at a sensor's transmit queue."""

    rate: float  # long-run arrivals per slot

    def arrivals(self, rng, horizon: int):
        """Boolean arrival indicator for slots 1..horizon (index 0 unused)."""
        raise NotImplementedError


@dataclass(frozen=True)
class BernoulliSampling(SamplingProcess):
    rate: float

    def __post_init__(self):
        if not 0 < self.rate < 1:
            raise ConfigError(f"sampling rate must be in (0,1), got {self.rate}")

    def arrivals(self, rng, horizon):
        import numpy as np
        out = np.empty(horizon + 1, dtype=bool)
        out[0] = False
        out[1:] = rng.random(horizon) < self.rate
        return out


@dataclass(frozen=True)
class PeriodicSampling(SamplingProcess):
    """Deterministic arrivals every ``interval`` slots; the first arrival is in
    slot ``phase`` (the count of slots to the next arrival at slot 1)."""

    interval: int
    phase: int = 1

    def __post_init__(self):
        if self.interval < 1:
            raise ConfigError("sampling interval must be >= 1")
        if not 1 <= self.phase <= self.interval:
            raise ConfigError("phase must lie in [1, interval]")

    @property
    def rate(self):
        return 1.0 / self.interval

    def arrivals(self, rng, horizon):
        import numpy as np
        out = np.zeros(horizon + 1, dtype=bool)
        out[self.phase::self.interval] = True
        out[0] = False
        return out

    def slots_to_next_arrival(self, slot: int) -> int:
        """Countdown V_k: an arrival occurs in slot k iff V_k == 1. Derivable
        from the phase and the slot index alone."""
        return (self.phase - slot) % self.interval + 1


# ---------------------------------------------------------------------------
# disciplines and scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Fcfs:
    name = "fcfs"

    @property
    def label(self) -> str:
        return self.name


@dataclass(frozen=True)
class Lcfs:
    name = "lcfs"

    @property
    def label(self) -> str:
        return self.name


@dataclass(frozen=True)
class RandomAccess:
    """Uniform selection among non-empty sensor queues, FCFS within a sensor."""
    name = "random"

    @property
    def label(self) -> str:
        return self.name


@dataclass(frozen=True)
class DiscountedInfo:
    """Transmit the queued packet maximizing I* . alpha^age."""
    alpha: float
    name = "discounted"

    @property
    def label(self) -> str:
        return f"{self.name}-{self.alpha:g}"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"discount alpha must be in (0,1), got {self.alpha}")


@dataclass(frozen=True)
class LookBack:
    """Most informative packet among the w most recent queued arrivals."""
    window: int
    name = "lookback"

    @property
    def label(self) -> str:
        return f"{self.name}-{self.window}"

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError(f"look-back window must be >= 1, got {self.window}")


Discipline = Union[Fcfs, Lcfs, RandomAccess, DiscountedInfo, LookBack]


@dataclass(frozen=True)
class KnownQueue:
    """Initial backlog of exactly q1 pre-start packets."""
    q1: int = 0

    def __post_init__(self):
        if self.q1 < 0:
            raise ConfigError("initial queue length must be >= 0")


@dataclass(frozen=True)
class StationaryDraw:
    """Initial backlog drawn from the Geom/Geom/1 stationary law with the
    sensor's arrival rate and pre-change service rate p0."""


@dataclass(frozen=True)
class Sensor:
    sampling: SamplingProcess
    density: DensityModel


INFINITY = math.inf


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one simulated scenario."""

    sensors: Sequence[Sensor]
    channel: ChannelModel
    change_slot: float = INFINITY      # slot index nu >= 1, or inf for "never"
    retransmit_cap: float = INFINITY   # K, or inf for retransmit-until-success
    discipline: Discipline = field(default_factory=Fcfs)
    initial_queue: Union[KnownQueue, StationaryDraw] = field(default_factory=KnownQueue)
    horizon: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not self.sensors:
            raise ConfigError("at least one sensor is required")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        nu = self.change_slot
        if nu != INFINITY and (nu != int(nu) or nu < 1):
            raise ConfigError(f"change slot must be a positive integer or inf, got {nu}")
        cap = self.retransmit_cap
        if cap != INFINITY and (cap != int(cap) or cap < 1):
            raise ConfigError(f"retransmit cap must be a positive integer or inf, got {cap}")
        if self.total_rate >= min(self.channel.p0, self.channel.p1):
            # The transmit queue is unstable. Saturated regimes are still
            # meaningful to simulate over a finite horizon (a backlogged
            # queue is exactly the setting where discipline choice matters),
            # so this is a warning here and a hard error only in the
            # closed-form information-rate computations.
            warnings.warn(
                f"aggregate sampling rate {self.total_rate:.3f} >= "
                f"min(p0, p1) = {min(self.channel.p0, self.channel.p1):.3f}; "
                "queue is unstable", stacklevel=2)

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def total_rate(self) -> float:
        return sum(s.sampling.rate for s in self.sensors)

    def check_stable(self):
        if self.total_rate >= min(self.channel.p0, self.channel.p1):
            raise ConfigError(
                f"sampling rate {self.total_rate:.4f} must be < "
                f"min(p0, p1) = {min(self.channel.p0, self.channel.p1):.4f}")


# ---------------------------------------------------------------------------
# information quantities
# ---------------------------------------------------------------------------

def kl_bernoulli(p1: float, p0: float) -> float:
    """D(Bern(p1) || Bern(p0)) in nats."""
    if not (0 < p0 < 1 and 0 < p1 < 1):
        raise ValueError(f"probabilities must lie strictly in (0,1): {p1}, {p0}")
    return p1 * math.log(p1 / p0) + (1 - p1) * math.log((1 - p1) / (1 - p0))


def information_number(config: ScenarioConfig, occupancy: Optional[float] = None) -> float:
    """Long-run mean of the per-slot LLR increment under the post-change law,
    for a single-sensor scenario.

    The general form is occ * (D(p1||p0) + p1 * D(f1||f0)), where occ is the
    post-change probability that the transmit queue is non-empty:

    * retransmit-until-success: occ = r / p1 (Geom/Geom/1 occupancy);
    * best-effort (cap = 1):    occ = r;
    * finite cap > 1:           occ estimated by simulation.
    """
    if config.n_sensors != 1:
        raise ConfigError("information_number is defined for single-sensor scenarios")
    config.check_stable()
    sensor = config.sensors[0]
    r = sensor.sampling.rate
    p1 = config.channel.p1
    d_ch = config.channel.kl()
    d_meas = sensor.density.kl_f1_f0()

    cap = config.retransmit_cap
    if occupancy is not None:
        occ = occupancy
    elif cap == INFINITY:
        occ = r / p1
    elif cap == 1:
        occ = r
    else:
        from .engine import estimate_occupancy
        occ = estimate_occupancy(config)
    return occ * (d_ch + p1 * d_meas)


def information_number_multisensor(config: ScenarioConfig,
                                   occupancy: Optional[float] = None) -> float:
    """Aggregate information rate for a multi-sensor scenario.

    With a change-independent channel (p0 == p1) this is the exact
    sum_i r_i * D(f1_i || f0_i). Otherwise the channel contributes
    occ * D(p1||p0) with occ the probability that some queue is non-empty,
    estimated by simulation unless supplied.
    """
    config.check_stable()
    ch = config.channel
    meas = sum(s.sampling.rate * s.density.kl_f1_f0() for s in config.sensors)
    if ch.p0 == ch.p1:
        return meas
    if occupancy is None:
        from .engine import estimate_occupancy
        occupancy = estimate_occupancy(config)
    return occupancy * ch.kl() + meas
