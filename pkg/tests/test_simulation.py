"""Tests for the exact simulators of the finite system."""

import math

import numpy as np
import pytest
from scipy import stats

from config.settings import get_settings
from engine.extinction import simulate_until_extinction
from engine.integrated_rate import (
    integrated_rate,
    invert_integrated_rate,
    residual_integrated_rate,
    total_residual_rate,
)
from engine.potentials import RawPotentials, RescaledPotentials
from engine.state import EventLog, SystemState
from engine.streams import SpikeClock, StreamPurpose, UniformStream, spawn_generator
from engine.system import NeuronSystem, apply_spike, flow, next_spike_by_inversion, step_thinning
from model.params import ModelParams
from model.rates import build_generic_rate
from services.errors import ArgumentError, DomainError, NonExactQuadratureWarning, UnsupportedRateError


@pytest.fixture
def small_buffers(monkeypatch):
    """Short random buffers for tests that build thousands of streams."""
    monkeypatch.setenv("METASTAB_CLOCK_BUFFER_SIZE", "16")
    get_settings.cache_clear()


def _two_level():
    return ModelParams.piecewise_linear(n=1, alpha=1.0, h=1.0, k=1.0, lambda_star=2.0)


class TestStreams:
    def test_same_key_same_numbers(self):
        first = spawn_generator(7, 3, StreamPurpose.SPIKES).random(5)
        second = spawn_generator(7, 3, StreamPurpose.SPIKES).random(5)
        np.testing.assert_array_equal(first, second)

    def test_purposes_are_independent_streams(self):
        spikes = spawn_generator(7, 3, StreamPurpose.SPIKES).random(5)
        marks = spawn_generator(7, 3, StreamPurpose.MARKS).random(5)
        assert not np.array_equal(spikes, marks)

    def test_clock_candidates(self):
        clock = SpikeClock(spawn_generator(1), n=4, lambda_star=2.0, buffer_size=8)
        draws = [clock.next() for _ in range(20)]
        assert all(gap > 0 and 0 <= i < 4 and 0 <= mark < 2.0 for gap, i, mark in draws)
        assert clock.drawn == 20


class TestState:
    def test_wrong_size(self, supercritical):
        with pytest.raises(ArgumentError, match="expected 100 potentials"):
            SystemState.from_potentials(np.ones(99), supercritical)

    def test_negative_potential(self, supercritical):
        u = np.ones(100)
        u[3] = -1.0
        with pytest.raises(ArgumentError):
            SystemState.from_potentials(u, supercritical)

    def test_event_rows_are_one_based(self):
        log = EventLog()
        log.append(0.5, 0)
        log.append(0.7, 9)
        assert log.rows() == [(0.5, 1), (0.7, 10)]


class TestFlowAndSpike:
    def test_zero_duration(self):
        params = ModelParams.piecewise_linear(n=2, alpha=1.0, h=1.0, k=1.0, lambda_star=2.0)
        state = SystemState.from_potentials([1.0, 2.0], params)
        np.testing.assert_array_equal(flow(state, 0.0, params).u, [1.0, 2.0])

    def test_halving(self):
        params = ModelParams.piecewise_linear(n=1, alpha=1.0, h=1.0, k=1.0, lambda_star=2.0)
        state = flow(SystemState.from_potentials([1.0], params), math.log(2.0), params)
        assert state.u[0] == pytest.approx(0.5)

    def test_leaves_saturation(self):
        params = _two_level()
        state = flow(SystemState.from_potentials([3.0], params), math.log(3.0), params)
        assert state.total_rate == pytest.approx(1.0, abs=1e-12)

    def test_negative_duration(self):
        params = _two_level()
        with pytest.raises(ArgumentError):
            flow(SystemState.from_potentials([1.0], params), -0.1, params)

    def test_spike_resets_and_kicks(self):
        params = ModelParams.piecewise_linear(n=2, alpha=1.0, h=1.0, k=1.0, lambda_star=2.0)
        state = apply_spike(SystemState.from_potentials([0.7, 0.0], params), 0, params)
        np.testing.assert_allclose(state.u, [0.0, 0.5])

    def test_spike_changes_sum_by_kicks_minus_reset(self, supercritical, rng):
        u = rng.uniform(0, 2, 100)
        state = SystemState.from_potentials(u, supercritical)
        after = apply_spike(state, 17, supercritical)
        expected = np.sum(u) + 99 * 10.0 / 100 - u[17]
        assert np.sum(after.u) == pytest.approx(expected, rel=1e-12)


class TestIntegratedRate:
    def test_closed_form_values(self):
        params = _two_level()
        assert residual_integrated_rate(2.0 * math.e, params) == pytest.approx(4.0, rel=1e-12)
        assert residual_integrated_rate(1.0, params) == pytest.approx(1.0, rel=1e-12)
        assert residual_integrated_rate(0.0, params) == 0.0

    def test_negative_potential(self):
        with pytest.raises(DomainError):
            residual_integrated_rate(-1.0, _two_level())

    def test_generic_rate_uses_quadrature(self):
        params = ModelParams(n=1, alpha=1.0, h=1.0, rate=build_generic_rate("tanh", k=1.0, lambda_star=1.0, r=1.0))
        with pytest.warns(NonExactQuadratureWarning):
            value = residual_integrated_rate(1.0, params)
        assert 0.0 < value < 1.0

    def test_total_is_sum_of_residuals(self, supercritical, rng):
        u = rng.uniform(0, 3, 100)
        expected = sum(residual_integrated_rate(float(x), supercritical) for x in u)
        assert total_residual_rate(u, supercritical) == pytest.approx(expected, rel=1e-12)

    def test_long_horizon_reaches_residual(self, supercritical, rng):
        u = rng.uniform(0, 3, 100)
        assert integrated_rate(u, 60.0, supercritical) == pytest.approx(total_residual_rate(u, supercritical))

    @pytest.mark.parametrize("target", [1e-6, 0.3, 5.0, 40.0])
    def test_inversion(self, supercritical, rng, target):
        u = rng.uniform(0, 3, 100)
        tau = invert_integrated_rate(u, target, supercritical)
        assert integrated_rate(u, tau, supercritical) == pytest.approx(target, rel=1e-10, abs=1e-12)


class TestPotentialStores:
    def test_rescaled_matches_raw(self):
        raw = RawPotentials(np.array([1.0, 2.0, 0.5]), alpha=1.0, kick=0.5)
        lazy = RescaledPotentials(np.array([1.0, 2.0, 0.5]), alpha=1.0, kick=0.5)
        for i, t in [(0, 0.3), (2, 0.9), (1, 2.5)]:
            raw.spike(i, t)
            lazy.spike(i, t)
        np.testing.assert_allclose(lazy.values_at(3.0), raw.values_at(3.0), rtol=1e-12, atol=1e-15)

    def test_rebase_keeps_values(self):
        lazy = RescaledPotentials(np.array([1.0, 2.0]), alpha=1.0, kick=0.5, rebase_threshold=0.5)
        lazy.advance(1.0)
        assert lazy.rebases == 1
        np.testing.assert_allclose(lazy.values_at(1.0), [math.exp(-1.0), 2.0 * math.exp(-1.0)], rtol=1e-12)
        lazy.spike(0, 1.5)
        assert lazy.value(0, 1.5) == 0.0
        assert lazy.value(1, 1.5) == pytest.approx(2.0 * math.exp(-1.5) + 0.5, rel=1e-12)


class TestNeuronSystem:
    def test_silent_neuron_never_spikes(self):
        params = ModelParams.piecewise_linear(n=1, alpha=1.0, h=1.0, k=1.0, lambda_star=1.0)
        system = NeuronSystem(params, [0.0], SpikeClock(spawn_generator(5), 1, 1.0))
        assert system.step(horizon=10.0) is None
        assert system.t == 10.0

    def test_silent_state_returns_without_horizon(self):
        params = ModelParams.piecewise_linear(n=1, alpha=1.0, h=10.0, k=1.0, lambda_star=1.0)
        start = SystemState.from_potentials([0.0], params)
        state, event = step_thinning(start, params, SpikeClock(spawn_generator(6), 1, 1.0))
        assert event is None
        assert state.total_rate == 0.0
        np.testing.assert_array_equal(state.u, [0.0])

    def test_silent_state_run_ends(self):
        params = ModelParams.piecewise_linear(n=3, alpha=1.0, h=1.0, k=1.0, lambda_star=1.0)
        system = NeuronSystem(params, np.zeros(3), SpikeClock(spawn_generator(6), 3, 1.0))
        outcome = system.run(math.inf)
        assert outcome.accepted == 0
        assert not outcome.truncated

    def test_saturated_event_count(self):
        params = ModelParams.piecewise_linear(n=100, alpha=1.0, h=100.0, k=1.0, lambda_star=1.0)
        gen = spawn_generator(17)
        counts = []
        for _ in range(200):
            system = NeuronSystem(params, np.full(100, 1e3), SpikeClock(gen, 100, 1.0), record_events=False)
            counts.append(system.run(1.0).accepted)
        assert abs(np.mean(counts) - 100.0) <= 3.0 * math.sqrt(100.0)

    def test_same_seed_same_events(self, supercritical, rng):
        u0 = rng.uniform(0, 2, 100)
        logs = []
        for _ in range(2):
            system = NeuronSystem(supercritical, u0, SpikeClock(spawn_generator(9, 0), 100, 1.0))
            system.run(5.0)
            logs.append(system.log.times)
        assert logs[0] == logs[1]
        assert len(logs[0]) > 0

    def test_lazy_storage_gives_same_path(self, supercritical, rng):
        u0 = rng.uniform(0, 2, 100)
        raw = NeuronSystem(supercritical, u0, SpikeClock(spawn_generator(9, 1), 100, 1.0))
        lazy = NeuronSystem(supercritical, u0, SpikeClock(spawn_generator(9, 1), 100, 1.0), lazy=True)
        raw.run(5.0)
        lazy.run(5.0)
        assert raw.log.neurons == lazy.log.neurons
        np.testing.assert_allclose(lazy.potentials(), raw.potentials(), rtol=1e-9, atol=1e-12)

    def test_cap_truncates(self, supercritical):
        system = NeuronSystem(supercritical, np.full(100, 2.0), SpikeClock(spawn_generator(2), 100, 1.0))
        outcome = system.run(100.0, cap=25)
        assert outcome.truncated
        assert outcome.accepted == 25

    def test_observed_grid(self, supercritical):
        system = NeuronSystem(supercritical, np.full(100, 2.0), SpikeClock(spawn_generator(3), 100, 1.0))
        trajectory, truncated = system.run_observed(1.0, 0.1)
        assert not truncated
        assert trajectory.times.size == 11
        assert trajectory.lambda_bar[0] == 1.0
        assert trajectory.mean_potential[0] == 2.0

    def test_no_clock(self, supercritical):
        system = NeuronSystem(supercritical, np.ones(100))
        with pytest.raises(ArgumentError, match="no clock"):
            system.step()

    def test_first_spike_of_saturated_system_is_exponential(self):
        params = ModelParams.piecewise_linear(n=100, alpha=1.0, h=10.0, k=1.0, lambda_star=1.0)
        state = SystemState.from_potentials(np.full(100, 1e3), params)
        gen = spawn_generator(21)
        times = []
        for _ in range(500):
            _, event = step_thinning(state, params, SpikeClock(gen, 100, 1.0, buffer_size=8))
            times.append(event.t)
        assert stats.kstest(times, "expon", args=(0.0, 0.01)).pvalue > 1e-3


@pytest.mark.slow
def test_thinning_and_inversion_agree():
    params = ModelParams.piecewise_linear(n=10, alpha=1.0, h=1.0, k=1.0, lambda_star=1.0)
    state = SystemState.from_potentials(np.linspace(0.5, 3.0, 10), params)
    gen = spawn_generator(31)
    clock = SpikeClock(gen, 10, 1.0)
    stream = UniformStream(gen)
    thinned, inverted = [], []
    for _ in range(10_000):
        _, event = step_thinning(state, params, clock, horizon=50.0)
        if event is not None:
            thinned.append(event.t)
        _, event = next_spike_by_inversion(state, params, stream)
        if event is not None:
            inverted.append(event.t)

    def first_jump_cdf(times):
        return np.array([-math.expm1(-integrated_rate(state.u, float(t), params)) for t in np.atleast_1d(times)])

    assert stats.kstest(thinned, first_jump_cdf).statistic <= 0.02
    assert stats.kstest(inverted, first_jump_cdf).statistic <= 0.02
    assert stats.ks_2samp(thinned, inverted).statistic <= 0.03


@pytest.mark.slow
def test_generator_matches_small_time_increments():
    params = ModelParams.piecewise_linear(n=2, alpha=1.0, h=4.0, k=1.0, lambda_star=2.0)
    u0 = np.array([1.0, 0.5])

    def phi(u):
        return u[0] + u[1] ** 2

    # drift -alpha (u1 + 2 u2^2) plus each neuron's rate times the jump in phi
    start = SystemState.from_potentials(u0, params)
    expected = -(u0[0] + 2.0 * u0[1] ** 2)
    for i in range(2):
        expected += params.rate.value(u0[i]) * (phi(apply_spike(start, i, params).u) - phi(u0))

    dt = 1e-3
    clock = SpikeClock(spawn_generator(41), 2, 2.0)
    increments = np.empty(200_000)
    for run in range(increments.size):
        state = start
        while state.t < dt:
            state, event = step_thinning(state, params, clock, horizon=dt)
            if event is None:
                break
        increments[run] = (phi(state.u) - phi(u0)) / dt
    se = increments.std(ddof=1) / math.sqrt(increments.size)
    assert abs(increments.mean() - expected) <= 4.0 * se + 0.1


class TestExtinction:
    def test_silent_start(self, supercritical, rng):
        result = simulate_until_extinction(np.zeros(100), supercritical, rng)
        assert result.last_spike == 0.0
        assert result.n_events == 0
        assert not result.truncated

    def test_generic_rate_rejected(self, rng):
        params = ModelParams(n=2, alpha=1.0, h=1.0, rate=build_generic_rate("tanh", k=1.0, lambda_star=1.0, r=1.0))
        with pytest.raises(UnsupportedRateError):
            simulate_until_extinction([1.0, 1.0], params, rng)

    def test_event_count_without_log(self, subcritical):
        u0 = np.linspace(0.0, 2.0, 50)
        logged = simulate_until_extinction(u0, subcritical, spawn_generator(4))
        silent = simulate_until_extinction(u0, subcritical, spawn_generator(4), record_events=False)
        assert silent.n_events == logged.n_events == len(logged.log)
        assert silent.last_spike == logged.last_spike
        assert len(silent.log) == 0

    def test_cap(self, supercritical, rng):
        result = simulate_until_extinction(np.full(100, 2.0), supercritical, rng, cap=30)
        assert result.truncated
        assert result.n_events == 30
        assert result.last_spike > 0

    @pytest.mark.slow
    def test_single_neuron_survival(self, small_buffers):
        params = ModelParams.piecewise_linear(n=1, alpha=1.0, h=1.0, k=1.0, lambda_star=1.0)
        gen = spawn_generator(8)
        runs = 4000
        silent = sum(simulate_until_extinction([0.08], params, gen).n_events == 0 for _ in range(runs))
        expected = math.exp(-0.08)
        se = math.sqrt(expected * (1 - expected) / runs)
        assert abs(silent / runs - expected) < 4 * se

    @pytest.mark.slow
    def test_subcritical_dies_quickly(self, subcritical):
        gen = spawn_generator(10)
        last = [
            simulate_until_extinction(gen.uniform(0, 2, 50), subcritical, gen, record_events=False).last_spike
            for _ in range(50)
        ]
        assert np.median(last) < 100.0
