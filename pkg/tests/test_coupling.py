"""Tests for the dominated process, limit particles and the three couplings."""

import math

import numpy as np
import pytest

from engine.auxiliary import AuxParams, simulate_aux
from engine.coupling import chaos_bound, couple_chaos, couple_synchronous, couple_U_Z
from engine.drift import LimitParticles, RatePath
from engine.streams import spawn_generator
from meanfield.limit_ode import LimitOdeConfig, limit_ode
from model.params import ModelParams
from services.errors import ArgumentError, ConstructionError


@pytest.fixture
def small_system():
    """N=10, k=1, h=1, lambda_star=0.5: z_N = 0.11."""
    return ModelParams.piecewise_linear(n=10, alpha=1.0, h=1.0, k=1.0, lambda_star=0.5)


class TestAuxParams:
    def test_jump_map_and_ceiling(self, small_system):
        aux = AuxParams.build(small_system)
        assert aux.m(0.2) == pytest.approx(0.19)
        assert aux.z_n == pytest.approx(0.11)
        assert aux.jump(0.2) == pytest.approx(0.11)
        assert aux.r == 1.0

    def test_too_few_neurons(self, supercritical):
        with pytest.raises(ConstructionError, match="too small"):
            AuxParams.build(supercritical.with_n(10))

    def test_supercritical_ceiling(self, supercritical):
        aux = AuxParams.build(supercritical)
        assert aux.z_n == pytest.approx(0.791)
        assert aux.z_inf == pytest.approx(0.9)


class TestSimulateAux:
    def test_zero_stays_zero(self, small_system, rng):
        aux = AuxParams.build(small_system)
        path = simulate_aux(small_system, aux, 0.0, 10.0, rng)
        assert path.n_jumps == 0
        assert path.value_at(5.0) == 0.0

    def test_start_above_ceiling(self, small_system, rng):
        aux = AuxParams.build(small_system)
        with pytest.raises(ArgumentError):
            simulate_aux(small_system, aux, 0.5, 10.0, rng)

    def test_other_size_rejected(self, small_system, supercritical, rng):
        with pytest.raises(ArgumentError, match="another N"):
            simulate_aux(small_system, AuxParams.build(supercritical), 0.0, 1.0, rng)

    def test_path_stays_below_ceiling(self, supercritical, rng):
        aux = AuxParams.build(supercritical)
        path = simulate_aux(supercritical, aux, aux.z_n, 20.0, rng)
        assert path.n_jumps > 0
        assert np.all(path.values <= aux.z_n)
        assert np.all(path.values >= 0.0)
        assert np.all(np.diff(path.times) > 0)

    def test_exit_below_level(self, small_system, rng):
        aux = AuxParams.build(small_system)
        path = simulate_aux(small_system, aux, aux.z_n, 1e6, rng, stop_below=aux.z_n / 4)
        assert path.exit_time is not None
        assert path.value_at(path.exit_time) == pytest.approx(aux.z_n / 4, rel=1e-9)

    @pytest.mark.slow
    def test_large_system_follows_limit_ode(self, supercritical):
        params = supercritical.with_n(10_000)
        aux = AuxParams.build(params)
        grid = np.linspace(0.0, 5.0, 2001)
        limit = limit_ode(0.5, 5.0, LimitOdeConfig.from_params(params), t_eval=grid).values
        runs = 40
        close = 0
        for run in range(runs):
            path = simulate_aux(params, aux, 0.5, 5.0, spawn_generator(61, run))
            close += float(np.max(np.abs(path.value_at(grid) - limit))) <= 0.05
        assert close >= 0.95 * runs


class TestLimitParticles:
    def test_constant_drive(self):
        path = RatePath.constant(0.5, 10.0)
        particles = LimitParticles(np.array([1.0, 0.0]), alpha=1.0, h=2.0, path=path)
        t = 1.3
        expected = np.exp(-t) * np.array([1.0, 0.0]) + 2.0 * 0.5 * (1.0 - np.exp(-t))
        np.testing.assert_allclose(particles.values_at(t), expected, rtol=1e-12)

    def test_reset(self):
        particles = LimitParticles(np.array([1.0]), alpha=1.0, h=2.0, path=RatePath.constant(0.5, 10.0))
        particles.reset(0, 2.0)
        assert particles.value(0, 2.0) == pytest.approx(0.0, abs=1e-15)
        assert particles.value(0, 3.0) == pytest.approx(1.0 - math.exp(-1.0), rel=1e-12)

    def test_rate_path_validation(self):
        with pytest.raises(ArgumentError):
            RatePath(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
        with pytest.raises(ArgumentError):
            RatePath(np.array([0.0, 1.0]), np.array([1.0, -1.0]))


class TestCoupleUZ:
    def test_domination(self, supercritical):
        for seed in range(5):
            diag = couple_U_Z(np.full(100, 2.0), supercritical, 20.0, spawn_generator(seed))
            assert diag.domination_violations == 0
            assert np.all(diag.discrepancy >= -1e-12)
            assert np.max(diag.extras["z"]) <= diag.extras["z_n"]

    def test_zero_start_stays_zero(self, supercritical, rng):
        diag = couple_U_Z(np.full(100, 2.0), supercritical, 10.0, rng, z0=0.0)
        assert np.all(diag.extras["z"] == 0.0)
        assert diag.extras["last_z_jump"] == 0.0

    def test_start_above_rate(self, supercritical, rng):
        with pytest.raises(ArgumentError):
            couple_U_Z(np.full(100, 0.1), supercritical, 1.0, rng, z0=0.5)

    @pytest.mark.slow
    def test_domination_many_runs(self, supercritical):
        gen = spawn_generator(77)
        for _ in range(100):
            diag = couple_U_Z(gen.uniform(1.0, 3.0, 100), supercritical, 50.0, gen)
            assert diag.domination_violations == 0


class TestCoupleChaos:
    def test_zero_horizon(self, supercritical, rng):
        drift = RatePath.constant(0.8, 1.0)
        diag = couple_chaos(rng.uniform(0, 2, 100), supercritical, 0.0, rng, drift=drift)
        np.testing.assert_array_equal(diag.discrepancy, [0.0])

    def test_missing_drift(self, supercritical, rng):
        with pytest.raises(ArgumentError, match="mean-rate path"):
            couple_chaos(np.ones(100), supercritical, 1.0, rng, drift=None)

    def test_bound_value(self, supercritical):
        assert chaos_bound(supercritical, 1.0) == pytest.approx(300.0 * math.exp(12.0))

    def test_below_bound(self, supercritical):
        drift = RatePath.constant(0.8, 1.0)
        for seed in range(5):
            gen = spawn_generator(seed)
            diag = couple_chaos(gen.uniform(0, 2, 100), supercritical, 1.0, gen, drift=drift, observe_step=0.1)
            assert diag.times.size == 11
            assert not diag.bound_violated
            assert diag.extras["rate_gap"].shape == diag.times.shape


class TestCoupleSynchronous:
    def test_equal_states(self, supercritical, rng):
        u0 = rng.uniform(0, 2, 100)
        diag = couple_synchronous(u0, u0.copy(), supercritical, 5.0, rng)
        assert diag.coalescence_time == 0.0
        assert np.all(diag.discrepancy == 0.0)

    def test_size_mismatch(self, supercritical, rng):
        with pytest.raises(ArgumentError, match="different sizes"):
            couple_synchronous(np.ones(100), np.ones(99), supercritical, 1.0, rng)

    def test_saturated_states_coalesce(self):
        params = ModelParams.piecewise_linear(n=3, alpha=1.0, h=1.0, k=1.0, lambda_star=1.0)
        for seed in range(20):
            diag = couple_synchronous(
                np.full(3, 1e6), np.full(3, 2e6), params, 20.0, spawn_generator(seed), observe_step=0.5
            )
            assert diag.coalescence_time is not None
            assert diag.coalescence_time < math.log(1e6)
            assert diag.extras["synchronous_spikes"] >= 3
            after = diag.times >= diag.coalescence_time
            assert np.all(diag.discrepancy[after] == 0.0)
