"""Monte Carlo metrics and calibration: detection-delay and run-length
estimation, threshold search for a target false-alarm run length, parameter
sweeps, and CSV emission.

Calibration is built on record curves: one batch of no-alarm replications
under the pre-change law captures, per path, the slots at which the running
maximum of the detector statistic sets a new record. The stopping time for
*any* threshold h is then the first record exceeding h, so the mean run
length ARL2FA(h) is available for every h from a single batch, and it is a
monotone step function of h, which makes bisection exact.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .engine import RngPolicy, run_batch
from .model import (BernoulliMeasurement, BernoulliSampling, ChannelModel,
                    ConfigError, DiscountedInfo, Fcfs, GaussianKnownVariance,
                    INFINITY, KnownQueue, Lcfs, LookBack, PeriodicSampling,
                    RandomAccess, ScenarioConfig, Sensor, StationaryDraw,
                    information_number, information_number_multisensor)

log = logging.getLogger(__name__)


class EstimationError(RuntimeError):
    """Raised when an estimate cannot be formed (e.g. every run truncated)."""


class CalibrationError(RuntimeError):
    """Raised when no threshold bracket meets the target run length."""


# ---------------------------------------------------------------------------
# point estimates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AddEstimate:
    mean: float
    stderr: float
    n_used: int
    n_truncated: int
    n_early: int  # alarms at or before the change slot, excluded


@dataclass(frozen=True)
class Arl2faEstimate:
    mean: float
    stderr: float
    lower_bound: bool  # True when any run hit the horizon without alarming
    n_truncated: int


def estimate_add(config: ScenarioConfig, detector_kind: str, threshold: float,
                 reps: int, parallelism: int = 1,
                 rng_policy: Optional[RngPolicy] = None) -> AddEstimate:
    """Mean detection delay (T - nu)+ over ``reps`` replications.

    Runs that alarm at or before the change slot and runs that exhaust the
    horizon are excluded from the mean and counted separately.
    """
    if config.change_slot == INFINITY:
        raise ConfigError("detection delay needs a finite change slot")
    results = run_batch(config, detector_kind, threshold, n_reps=reps,
                        parallelism=parallelism, rng_policy=rng_policy)
    delays = [r.detection_delay for r in results
              if not r.truncated and r.stopping_slot > config.change_slot]
    n_truncated = sum(r.truncated for r in results)
    n_early = len(results) - n_truncated - len(delays)
    if not delays:
        raise EstimationError(
            f"no usable runs out of {reps} ({n_truncated} truncated, "
            f"{n_early} early alarms); raise the horizon or the threshold")
    arr = np.asarray(delays, dtype=float)
    stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return AddEstimate(float(arr.mean()), stderr, arr.size, n_truncated, n_early)


def estimate_arl2fa(config: ScenarioConfig, detector_kind: str, threshold: float,
                    reps: int, parallelism: int = 1,
                    rng_policy: Optional[RngPolicy] = None) -> Arl2faEstimate:
    """Mean run length to false alarm under the pre-change law (nu = inf).

    Truncated runs contribute the horizon, so the estimate carries a
    lower-bound flag whenever any run truncates.
    """
    if config.change_slot != INFINITY:
        raise ConfigError("run length to false alarm is defined for change_slot = inf")
    results = run_batch(config, detector_kind, threshold, n_reps=reps,
                        parallelism=parallelism, rng_policy=rng_policy)
    stops = np.asarray([config.horizon if r.truncated else r.stopping_slot
                        for r in results], dtype=float)
    n_truncated = sum(r.truncated for r in results)
    stderr = float(stops.std(ddof=1) / math.sqrt(stops.size)) if stops.size > 1 else 0.0
    return Arl2faEstimate(float(stops.mean()), stderr, n_truncated > 0, n_truncated)


# ---------------------------------------------------------------------------
# record curves and calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecordCurves:
    """Per-path record curves of the running-max statistic under nu = inf."""

    values: List[np.ndarray]   # strictly increasing record values, per path
    slots: List[np.ndarray]    # slot at which each record was set
    horizon: int

    def stopping_slots(self, threshold: float) -> Tuple[np.ndarray, int]:
        """First slot whose statistic exceeds ``threshold`` on each path
        (horizon for paths that never cross). Returns (slots, n_truncated)."""
        out = np.empty(len(self.values), dtype=float)
        n_trunc = 0
        for i, (vals, slots) in enumerate(zip(self.values, self.slots)):
            j = np.searchsorted(vals, threshold, side="right")
            if j < vals.size:
                out[i] = slots[j]
            else:
                out[i] = self.horizon
                n_trunc += 1
        return out, n_trunc

    def arl2fa(self, threshold: float) -> Arl2faEstimate:
        stops, n_trunc = self.stopping_slots(threshold)
        stderr = float(stops.std(ddof=1) / math.sqrt(stops.size)) if stops.size > 1 else 0.0
        return Arl2faEstimate(float(stops.mean()), stderr, n_trunc > 0, n_trunc)


def collect_record_curves(config: ScenarioConfig, detector_kind: str, reps: int,
                          parallelism: int = 1,
                          rng_policy: Optional[RngPolicy] = None) -> RecordCurves:
    if config.change_slot != INFINITY:
        raise ConfigError("record curves are collected under change_slot = inf")
    results = run_batch(config, detector_kind, threshold=None, n_reps=reps,
                        parallelism=parallelism, rng_policy=rng_policy,
                        capture_records=True)
    values, slots = [], []
    for r in results:
        recs = r.records or []
        values.append(np.asarray([v for _, v in recs], dtype=float))
        slots.append(np.asarray([s for s, _ in recs], dtype=float))
    return RecordCurves(values, slots, config.horizon)


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    arl2fa: float
    lower_bound: bool
    reps: int


def calibrate_threshold(config: ScenarioConfig, detector_kind: str, gamma: float,
                        tolerance: float = 0.05, reps: int = 400,
                        parallelism: int = 1,
                        rng_policy: Optional[RngPolicy] = None,
                        curves: Optional[RecordCurves] = None) -> CalibrationResult:
    """Find h with estimated ARL2FA within ``tolerance`` of ``gamma``.

    On a fixed set of record curves ARL2FA(h) is a nondecreasing step
    function jumping only at recorded statistic values, so the search
    bisects the sorted pool of record values; ln(gamma) serves as the scale
    for the curve-collection horizon. The scenario passed in provides the
    pre-change law; its change slot must be inf (use ``with_no_change``).
    """
    if gamma <= 1:
        raise ConfigError(f"target run length must exceed 1, got {gamma}")
    if not 0 < tolerance < 1:
        raise ConfigError(f"tolerance must be in (0,1), got {tolerance}")
    if curves is None:
        curves = collect_record_curves(config, detector_kind, reps,
                                       parallelism=parallelism, rng_policy=rng_policy)
    pool = np.concatenate([v for v in curves.values if v.size]) if curves.values else np.array([])
    pool = np.unique(pool[pool > 0])
    if pool.size == 0:
        raise CalibrationError("no positive statistic records; cannot calibrate")

    # smallest candidate h with ARL2FA(h) >= gamma
    lo, hi = 0, pool.size - 1
    if curves.arl2fa(pool[hi]).mean < gamma:
        raise CalibrationError(
            f"target {gamma} unreachable: ARL2FA at the largest observed "
            f"record is below it (horizon {curves.horizon} too short or "
            "too few replications)")
    while lo < hi:
        mid = (lo + hi) // 2
        if curves.arl2fa(pool[mid]).mean >= gamma:
            hi = mid
        else:
            lo = mid + 1
    # ARL2FA is constant on [pool[lo], next record), check both step edges
    candidates = [pool[lo]] if lo == 0 else [pool[lo], pool[lo - 1]]
    best = min(candidates, key=lambda h: abs(curves.arl2fa(h).mean - gamma))
    est = curves.arl2fa(best)
    if abs(est.mean - gamma) > tolerance * gamma:
        raise CalibrationError(
            f"no threshold meets ARL2FA {gamma} within {tolerance:.0%}: "
            f"closest estimate {est.mean:.1f} at h={best:.4f} "
            "(increase replications)")
    return CalibrationResult(float(best), est.mean, est.lower_bound, len(curves.values))


def with_no_change(config: ScenarioConfig, horizon: Optional[int] = None) -> ScenarioConfig:
    """The same scenario under the pre-change law forever (for run-length and
    calibration work), optionally with a longer horizon."""
    kwargs = {"change_slot": INFINITY}
    if horizon is not None:
        kwargs["horizon"] = horizon
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return replace(config, **kwargs)


# ---------------------------------------------------------------------------
# experiment specs (JSON) and sweeps
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("scenario_id", "detector", "discipline", "r", "s", "p0", "p1",
               "K", "alpha", "w", "h", "gamma_target", "arl2fa",
               "arl2fa_lb_flag", "add_mean", "add_stderr", "add_over_h",
               "inv_I", "reps")


@dataclass(frozen=True)
class MetricRow:
    scenario_id: str
    detector: str
    discipline: str
    r: float
    s: float
    p0: float
    p1: float
    K: Optional[float]
    alpha: Optional[float]
    w: Optional[int]
    h: float
    gamma_target: Optional[float]
    arl2fa: Optional[float]
    arl2fa_lb_flag: Optional[bool]
    add_mean: float
    add_stderr: float
    add_over_h: float
    inv_I: Optional[float]
    reps: int

    def as_record(self) -> dict:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return int(v)
            if isinstance(v, float):
                return "inf" if v == INFINITY else f"{v:.10g}"
            return v
        return {c: fmt(getattr(self, c)) for c in CSV_COLUMNS}


@dataclass(frozen=True)
class ExperimentSpec:
    """A grid of scenario points to evaluate.

    Exactly one of ``thresholds`` (run at fixed h) and ``gammas`` (calibrate h
    per point to the target run length) must be non-empty. ``rates``, when
    given, overrides the single sensor's sampling rate per point.
    """

    scenario_id: str
    base: ScenarioConfig
    detectors: Sequence[str]
    disciplines: Sequence[object]
    thresholds: Sequence[float] = ()
    gammas: Sequence[float] = ()
    rates: Sequence[float] = ()
    reps: int = 1000
    arl_horizon: int = 100_000
    calibration_reps: int = 400
    calibration_tolerance: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if bool(self.thresholds) == bool(self.gammas):
            raise ConfigError("exactly one of 'h' and 'gamma' must be a non-empty list")
        if not self.detectors or not self.disciplines:
            raise ConfigError("detector and discipline lists must be non-empty")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.reps < 100:
            warnings.warn(f"reps={self.reps} is low for figure-quality estimates",
                          stacklevel=2)
        if self.rates and self.base.n_sensors != 1:
            raise ConfigError("a rate grid applies only to single-sensor scenarios")


def _scenario_for(spec: ExperimentSpec, rate: Optional[float], discipline) -> ScenarioConfig:
    cfg = spec.base
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if rate is not None:
            sensor = replace(cfg.sensors[0], sampling=BernoulliSampling(rate))
            cfg = replace(cfg, sensors=(sensor,))
        return replace(cfg, discipline=discipline, seed=spec.seed)


def _inverse_information(config: ScenarioConfig) -> Optional[float]:
    try:
        i = (information_number(config) if config.n_sensors == 1
             else information_number_multisensor(config))
    except ConfigError:
        return None
    return 1.0 / i if i > 0 else None


def _point_row(spec: ExperimentSpec, config: ScenarioConfig, detector: str,
               h: Optional[float], gamma: Optional[float],
               curves: Optional[RecordCurves], parallelism: int) -> MetricRow:
    arl = lb = None
    if gamma is not None:
        cal = calibrate_threshold(with_no_change(config, spec.arl_horizon),
                                  detector, gamma,
                                  tolerance=spec.calibration_tolerance,
                                  reps=spec.calibration_reps,
                                  parallelism=parallelism, curves=curves)
        h, arl, lb = cal.threshold, cal.arl2fa, cal.lower_bound
    add = estimate_add(config, detector, h, spec.reps, parallelism=parallelism)
    d = config.discipline
    sensor_rate = config.sensors[0].sampling.rate if config.n_sensors == 1 else config.total_rate
    return MetricRow(
        scenario_id=spec.scenario_id, detector=detector, discipline=d.label,
        r=sensor_rate, s=1.0 / sensor_rate,
        p0=config.channel.p0, p1=config.channel.p1,
        K=config.retransmit_cap,
        alpha=getattr(d, "alpha", None), w=getattr(d, "window", None),
        h=h, gamma_target=gamma, arl2fa=arl, arl2fa_lb_flag=lb,
        add_mean=add.mean, add_stderr=add.stderr, add_over_h=add.mean / h,
        inv_I=_inverse_information(config), reps=add.n_used)


def sweep(spec: ExperimentSpec, out_path: Optional[str] = None,
          parallelism: int = 1) -> Tuple[List[MetricRow], List[str]]:
    """Evaluate every grid point; returns (rows, failure messages).

    A failing point is logged and skipped, the sweep continues. When
    ``out_path`` is given the rows are also written as CSV with the
    documented column schema.
    """
    rows: List[MetricRow] = []
    failures: List[str] = []
    rates = list(spec.rates) or [None]
    curve_cache: Dict[Tuple, RecordCurves] = {}
    for rate, disc, det in itertools.product(rates, spec.disciplines, spec.detectors):
        config = _scenario_for(spec, rate, disc)
        targets = [("h", h) for h in spec.thresholds] or [("gamma", g) for g in spec.gammas]
        for kind, value in targets:
            try:
                curves = None
                if kind == "gamma":
                    key = (rate, repr(disc), det)
                    if key not in curve_cache:
                        curve_cache[key] = collect_record_curves(
                            with_no_change(config, spec.arl_horizon), det,
                            spec.calibration_reps, parallelism=parallelism)
                    curves = curve_cache[key]
                h = value if kind == "h" else None
                gamma = value if kind == "gamma" else None
                rows.append(_point_row(spec, config, det, h, gamma, curves, parallelism))
            except Exception as exc:  # record and continue with the grid
                msg = (f"{spec.scenario_id}: detector={det} discipline={disc.name} "
                       f"rate={rate} {kind}={value}: {exc}")
                failures.append(msg)
                log.error("sweep point failed: %s", msg)
    if out_path is not None:
        write_csv(rows, out_path)
    return rows, failures


def write_csv(rows: Sequence[MetricRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_record())


# ---------------------------------------------------------------------------
# JSON parsing (shared by the CLI)
# ---------------------------------------------------------------------------

def _take(d: dict, context: str, required: Sequence[str], optional: Sequence[str] = ()) -> dict:
    """Pop the allowed keys; anything left over is an error (no key is ever
    silently ignored)."""
    d = dict(d)
    out = {}
    for key in required:
        if key not in d:
            raise ConfigError(f"{context}: missing required key {key!r}")
        out[key] = d.pop(key)
    for key in optional:
        if key in d:
            out[key] = d.pop(key)
    if d:
        raise ConfigError(f"{context}: unknown keys {sorted(d)}")
    return out


def build_density(data: dict):
    kind = data.get("type")
    if kind == "gaussian":
        f = _take(data, "density", ["type", "mean0", "mean1", "variance"])
        return GaussianKnownVariance(f["mean0"], f["mean1"], f["variance"])
    if kind == "bernoulli":
        f = _take(data, "density", ["type", "q0", "q1"])
        return BernoulliMeasurement(f["q0"], f["q1"])
    raise ConfigError(f"density: unknown type {kind!r} (expected gaussian or bernoulli)")


def build_discipline(data: Union[str, dict]):
    if isinstance(data, str):
        data = {"type": data}
    kind = data.get("type")
    if kind == "fcfs":
        _take(data, "discipline", ["type"])
        return Fcfs()
    if kind == "lcfs":
        _take(data, "discipline", ["type"])
        return Lcfs()
    if kind == "random":
        _take(data, "discipline", ["type"])
        return RandomAccess()
    if kind == "discounted":
        f = _take(data, "discipline", ["type", "alpha"])
        return DiscountedInfo(f["alpha"])
    if kind == "lookback":
        f = _take(data, "discipline", ["type", "window"])
        return LookBack(f["window"])
    raise ConfigError(f"discipline: unknown type {kind!r}")


def _build_sampling(data: dict):
    kind = data.get("type", "bernoulli")
    if kind == "bernoulli":
        f = _take(data, "sampling", ["rate"], ["type"])
        return BernoulliSampling(f["rate"])
    if kind == "periodic":
        f = _take(data, "sampling", ["type", "interval"], ["phase"])
        return PeriodicSampling(f["interval"], f.get("phase", 1))
    raise ConfigError(f"sampling: unknown type {kind!r}")


def build_scenario(data: dict, seed: int = 0) -> ScenarioConfig:
    f = _take(data, "scenario",
              ["sensors", "p0", "p1"],
              ["change_slot", "retransmit_cap", "discipline", "initial_queue",
               "horizon", "seed"])
    sensors = []
    for s in f["sensors"]:
        sf = _take(s, "sensor", ["sampling", "density"])
        sensors.append(Sensor(_build_sampling(sf["sampling"]), build_density(sf["density"])))
    cap = f.get("retransmit_cap")
    nu = f.get("change_slot")
    init = f.get("initial_queue", 0)
    if init == "stationary":
        initial = StationaryDraw()
    elif isinstance(init, int) and not isinstance(init, bool):
        initial = KnownQueue(init)
    else:
        raise ConfigError(f"initial_queue must be an integer or 'stationary', got {init!r}")
    return ScenarioConfig(
        sensors=tuple(sensors),
        channel=ChannelModel(f["p0"], f["p1"]),
        change_slot=INFINITY if nu in (None, "inf") else nu,
        retransmit_cap=INFINITY if cap in (None, "inf") else cap,
        discipline=build_discipline(f.get("discipline", "fcfs")),
        initial_queue=initial,
        horizon=f.get("horizon", 10_000),
        seed=f.get("seed", seed))


def load_spec(data: Union[str, dict], seed_override: Optional[int] = None,
              reps_override: Optional[int] = None) -> ExperimentSpec:
    """Parse an experiment spec from a JSON file path or a parsed dict."""
    if isinstance(data, str):
        with open(data) as fh:
            data = json.load(fh)
    f = _take(data, "experiment",
              ["scenario_id", "scenario"],
              ["detector", "discipline", "h", "gamma", "r", "reps", "seed",
               "arl_horizon", "calibration_reps", "calibration_tolerance"])
    seed = seed_override if seed_override is not None else f.get("seed", 0)
    base = build_scenario(f["scenario"], seed=seed)
    detectors = f.get("detector", ["recursive-cusum"])
    if isinstance(detectors, str):
        detectors = [detectors]
    disciplines = [build_discipline(d) for d in f.get("discipline", ["fcfs"])]
    return ExperimentSpec(
        scenario_id=f["scenario_id"], base=base,
        detectors=tuple(detectors), disciplines=tuple(disciplines),
        thresholds=tuple(f.get("h", ())), gammas=tuple(f.get("gamma", ())),
        rates=tuple(f.get("r", ())),
        reps=reps_override if reps_override is not None else f.get("reps", 1000),
        arl_horizon=f.get("arl_horizon", 100_000),
        calibration_reps=f.get("calibration_reps", 400),
        calibration_tolerance=f.get("calibration_tolerance", 0.05),
        seed=seed)
