import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qcdlink.model import (BernoulliMeasurement, BernoulliSampling,
                           ChannelModel, ConfigError, CustomDensity,
                           DiscountedInfo, GaussianKnownVariance, KnownQueue,
                           LookBack, PeriodicSampling, ScenarioConfig, Sensor,
                           information_number, information_number_multisensor,
                           kl_bernoulli)


def make_config(**kw):
    base = dict(
        sensors=(Sensor(BernoulliSampling(0.3), GaussianKnownVariance(0.0, 1.0, 1.0)),),
        channel=ChannelModel(0.7, 0.6), horizon=100)
    base.update(kw)
    return ScenarioConfig(**base)


class TestGaussian:
    def test_llr_closed_form_matches_log_densities(self):
        d = GaussianKnownVariance(0.0, 10.0, 0.5)
        for z in (-3.0, 0.0, 4.2, 10.0, 25.0):
            assert d.llr(z) == pytest.approx(d.log_f1(z) - d.log_f0(z), abs=1e-12)

    @given(st.floats(-50, 50), st.floats(-5, 5), st.floats(-5, 5),
           st.floats(0.1, 10))
    def test_llr_closed_form_property(self, z, m0, m1, var):
        d = GaussianKnownVariance(m0, m1, var)
        assert d.llr(z) == pytest.approx(d.log_f1(z) - d.log_f0(z), abs=1e-9)

    def test_kl(self):
        assert GaussianKnownVariance(0.0, 10.0, 0.5).kl_f1_f0() == pytest.approx(100.0)
        assert GaussianKnownVariance(0.0, 1.0, 0.5).kl_f1_f0() == pytest.approx(1.0)

    def test_sampling_laws(self):
        d = GaussianKnownVariance(0.0, 5.0, 4.0)
        rng = np.random.default_rng(3)
        pre = d.sample(rng, post=False, size=20000)
        post = d.sample(rng, post=True, size=20000)
        assert abs(pre.mean()) < 0.05
        assert abs(post.mean() - 5.0) < 0.05
        assert abs(pre.std() - 2.0) < 0.05

    def test_rejects_bad_variance(self):
        with pytest.raises(ConfigError):
            GaussianKnownVariance(0.0, 1.0, 0.0)


class TestBernoulliMeasurement:
    def test_llr_values(self):
        d = BernoulliMeasurement(1 / 3, 2 / 3)
        assert d.llr(1) == pytest.approx(math.log(2))
        assert d.llr(0) == pytest.approx(-math.log(2))

    def test_kl_matches_helper(self):
        d = BernoulliMeasurement(0.2, 0.7)
        assert d.kl_f1_f0() == pytest.approx(kl_bernoulli(0.7, 0.2))


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_kl_bernoulli_nonnegative_and_zero_iff_equal(p1, p0):
    kl = kl_bernoulli(p1, p0)
    assert kl >= 0.0
    if p1 == p0:
        assert kl == 0.0


def test_custom_density_needs_kl_for_information():
    d = CustomDensity(logf0=lambda z: 0.0, logf1=lambda z: 0.0)
    with pytest.raises(ConfigError):
        d.kl_f1_f0()
    assert CustomDensity(lambda z: 0.0, lambda z: 0.0, kl=0.25).kl_f1_f0() == 0.25


class TestChannel:
    def test_logratios(self):
        ch = ChannelModel(0.61, 0.60)
        assert ch.success_logratio == pytest.approx(math.log(0.60 / 0.61))
        assert ch.failure_logratio == pytest.approx(math.log(0.40 / 0.39))

    def test_success_prob_switches_after_change(self):
        ch = ChannelModel(0.9, 0.5)
        assert ch.success_prob(10, change_slot=10) == 0.9
        assert ch.success_prob(11, change_slot=10) == 0.5

    def test_rejects_degenerate(self):
        with pytest.raises(ConfigError):
            ChannelModel(0.0, 0.5)
        with pytest.raises(ConfigError):
            ChannelModel(0.5, 1.0)


class TestSampling:
    def test_bernoulli_rate(self):
        rng = np.random.default_rng(0)
        arr = BernoulliSampling(0.3).arrivals(rng, 100_000)
        assert not arr[0]
        assert abs(arr[1:].mean() - 0.3) < 0.005

    def test_periodic_pattern(self):
        arr = PeriodicSampling(4, phase=2).arrivals(None, 12)
        assert list(np.flatnonzero(arr)) == [2, 6, 10]

    def test_periodic_countdown(self):
        s = PeriodicSampling(5, phase=3)
        # V_k == 1 exactly on arrival slots
        arr = s.arrivals(None, 30)
        for k in range(1, 31):
            assert (s.slots_to_next_arrival(k) == 1) == bool(arr[k])

    def test_periodic_rate(self):
        assert PeriodicSampling(8).rate == pytest.approx(0.125)


class TestScenarioConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            make_config(sensors=())
        with pytest.raises(ConfigError):
            make_config(horizon=0)
        with pytest.raises(ConfigError):
            make_config(change_slot=0)
        with pytest.raises(ConfigError):
            make_config(change_slot=2.5)
        with pytest.raises(ConfigError):
            make_config(retransmit_cap=0)
        with pytest.raises(ConfigError):
            KnownQueue(-1)

    def test_unstable_rate_warns_but_constructs(self):
        with pytest.warns(UserWarning, match="unstable"):
            cfg = make_config(
                sensors=(Sensor(BernoulliSampling(0.7), GaussianKnownVariance(0, 1, 1)),))
        with pytest.raises(ConfigError):
            cfg.check_stable()

    def test_infinite_defaults(self):
        cfg = make_config()
        assert cfg.change_slot == math.inf
        assert cfg.retransmit_cap == math.inf
        assert cfg.total_rate == pytest.approx(0.3)


class TestInformationNumber:
    def test_retransmit_until_success(self):
        # occ = r/p1, I = occ * (D(p1||p0) + p1 * D(f1||f0))
        cfg = make_config(
            sensors=(Sensor(BernoulliSampling(0.1), GaussianKnownVariance(0.0, 10.0, 0.5)),),
            channel=ChannelModel(0.61, 0.60))
        expected = (0.1 / 0.6) * (kl_bernoulli(0.60, 0.61) + 0.6 * 100.0)
        assert information_number(cfg) == pytest.approx(expected)

    def test_best_effort_cap_one(self):
        cfg = make_config(
            sensors=(Sensor(BernoulliSampling(0.2), GaussianKnownVariance(0.0, 1.0, 0.5)),),
            channel=ChannelModel(0.95, 0.90), retransmit_cap=1)
        expected = 0.2 * (kl_bernoulli(0.90, 0.95) + 0.90 * 1.0)
        assert information_number(cfg) == pytest.approx(expected)

    def test_explicit_occupancy_override(self):
        cfg = make_config()
        d = cfg.channel.kl() + 0.6 * cfg.sensors[0].density.kl_f1_f0()
        assert information_number(cfg, occupancy=0.25) == pytest.approx(0.25 * d)

    def test_unstable_raises(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cfg = make_config(
                sensors=(Sensor(BernoulliSampling(0.65), GaussianKnownVariance(0, 1, 1)),))
        with pytest.raises(ConfigError):
            information_number(cfg)

    def test_multisensor_change_independent_channel(self):
        sensors = tuple(
            Sensor(BernoulliSampling(r), GaussianKnownVariance(0.0, 5.0, v))
            for r, v in [(0.1, 2.0), (0.15, 1.0), (0.2, 0.5)])
        cfg = make_config(sensors=sensors, channel=ChannelModel(0.91, 0.91))
        expected = sum(s.sampling.rate * s.density.kl_f1_f0() for s in sensors)
        assert information_number_multisensor(cfg) == pytest.approx(expected)


def test_discipline_parameter_validation():
    with pytest.raises(ConfigError):
        DiscountedInfo(0.0)
    with pytest.raises(ConfigError):
        DiscountedInfo(1.0)
    with pytest.raises(ConfigError):
        LookBack(0)
