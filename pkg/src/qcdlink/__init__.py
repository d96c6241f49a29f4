"""Quickest change detection over a lossy retransmitting link.

Slotted-time simulation of sensors that sample, queue, and transmit
measurements over an erasure channel whose loss rate may shift together with
the measurement distribution, plus the sequential detectors (recursive CUSUM,
generalized reordering CUSUM, and a network-oblivious baseline) and the Monte
Carlo tooling used to study them.
"""

from .model import (BernoulliMeasurement, BernoulliSampling, ChannelModel,
                    ConfigError, CustomDensity, DensityModel, DiscountedInfo,
                    Fcfs, GaussianKnownVariance, KnownQueue, Lcfs, LookBack,
                    PeriodicSampling, RandomAccess, ScenarioConfig, Sensor,
                    StationaryDraw, information_number,
                    information_number_multisensor, kl_bernoulli)
from .likelihood import LlrTermLedger, Outcome, SlotObservation, slot_llr
from .detectors import (GeneralizedCusum, NetworkOblivious, RecursiveCusum,
                        generalized_statistic, is_stochastically_dominated,
                        make_detector)
from .queueing import Packet, TransmitQueue, select_sensor, stationary_queue_draw
from .engine import (ReplicationResult, RngPolicy, estimate_occupancy,
                     run_batch, run_replication)

__version__ = "0.1.0"

__all__ = [
    "BernoulliMeasurement", "BernoulliSampling", "ChannelModel", "ConfigError",
    "CustomDensity", "DensityModel", "DiscountedInfo", "Fcfs",
    "GaussianKnownVariance", "GeneralizedCusum", "KnownQueue", "Lcfs",
    "LlrTermLedger", "LookBack", "NetworkOblivious", "Outcome", "Packet",
    "PeriodicSampling", "RandomAccess", "RecursiveCusum", "ReplicationResult",
    "RngPolicy", "ScenarioConfig", "Sensor", "SlotObservation",
    "StationaryDraw", "TransmitQueue", "estimate_occupancy",
    "generalized_statistic", "information_number",
    "information_number_multisensor", "is_stochastically_dominated",
    "kl_bernoulli", "make_detector", "run_batch", "run_replication",
    "select_sensor", "slot_llr", "stationary_queue_draw",
]
