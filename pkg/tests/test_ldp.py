"""Tests for the rate function, the quasi-potential bounds and the exit-time scaling."""

import math

import numpy as np
import pytest
from scipy import integrate

from ldp.quasi_potential import PathSample, action_of_path, quasi_potential_bounds, w_zero
from ldp.rate_function import LdpConfig, drain_time, drift_G, entropy_q, hamiltonian, rate_l
from ldp.scaling import extinction_scaling
from meanfield.limit_ode import limit_ode
from model.params import ModelParams
from services.errors import ArgumentError, DomainError, GuardViolation


@pytest.fixture
def config(supercritical):
    return LdpConfig.from_params(supercritical, 0.1)


class TestEntropy:
    def test_values(self):
        assert entropy_q(1.0) == 0.0
        assert entropy_q(0.0) == 1.0
        assert entropy_q(math.e) == pytest.approx(1.0)

    def test_negative(self):
        with pytest.raises(DomainError):
            entropy_q(-0.5)

    def test_convex(self):
        u = np.linspace(0.0, 5.0, 2001)
        values = entropy_q(u)
        assert np.min(values[:-2] - 2.0 * values[1:-1] + values[2:]) >= -1e-12


class TestLdpConfig:
    def test_no_positive_equilibrium(self, subcritical):
        with pytest.raises(DomainError, match="no positive equilibrium"):
            LdpConfig.from_params(subcritical, 0.1)

    @pytest.mark.parametrize("eta", [0.0, 0.8, 0.9])
    def test_eta_range(self, supercritical, eta):
        with pytest.raises(DomainError, match="eta must lie"):
            LdpConfig.from_params(supercritical, eta)

    def test_drain_time(self, config):
        assert drain_time(config) == pytest.approx(math.log(9.0))
        assert config.drain_time == drain_time(config)


class TestRateFunction:
    def test_hamiltonian_vanishes_at_zero_momentum(self, config):
        np.testing.assert_array_equal(hamiltonian(np.array([0.1, 0.5, 0.8]), 0.0, config), 0.0)

    def test_zero_along_the_drift(self, config):
        x = 0.5
        velocity = float(config.ode.drift(x))
        assert rate_l(x, velocity, config) == pytest.approx(0.0, abs=1e-12)

    def test_pure_decay_cost(self, config):
        assert rate_l(0.5, -0.5, config) == pytest.approx(0.5)

    def test_faster_than_decay_is_impossible(self, config):
        assert rate_l(0.5, -0.6, config) == math.inf

    def test_frozen_region(self, config):
        assert rate_l(0.95, -0.95, config) == 0.0
        assert rate_l(0.95, 0.0, config) == math.inf

    def test_negative_position(self, config):
        with pytest.raises(DomainError):
            rate_l(-0.1, 0.0, config)

    @pytest.mark.parametrize("x", [0.05, 0.3, 0.6, 0.85])
    def test_convex_in_velocity(self, config, x):
        floor = -config.r * x
        q = np.linspace(floor, floor + 3.0, 1201)
        cost = rate_l(x, q, config)
        assert np.all(np.isfinite(cost))
        assert np.min(cost[:-2] - 2.0 * cost[1:-1] + cost[2:]) >= -1e-12

    @pytest.mark.parametrize("x", [0.1, 0.4, 0.7])
    @pytest.mark.parametrize("p", [-1.0, -0.2, 0.1, 0.5])
    def test_legendre_pair(self, config, x, p):
        gain = float(config.G(x))
        velocity = float(config.f(x)) * gain * math.exp(gain * p) - config.r * x
        assert p * velocity - hamiltonian(x, p, config) == pytest.approx(rate_l(x, velocity, config), abs=1e-9)


class TestQuasiPotential:
    def test_bounds(self, supercritical, config):
        bounds = quasi_potential_bounds(config, supercritical)
        assert bounds.upper == pytest.approx(0.7)
        assert bounds.lower == pytest.approx(bounds.lower_closed_form, rel=1e-8)
        assert 0.0 < bounds.lower < bounds.upper
        assert bounds.to_dict()["eta"] == 0.1

    def test_w_zero(self, supercritical):
        assert w_zero(supercritical) == pytest.approx(0.33888776, abs=1e-7)

    def test_bounds_ordered_for_random_parameters(self):
        gen = np.random.default_rng(2024)
        for _ in range(100):
            a = gen.uniform(0.02, 0.6)
            b = gen.uniform(0.02, 0.92 - a)
            params = ModelParams.from_ab(a, b, n=100)
            x_inf = params.rate_at_u_star * (1.0 - a - b)
            config = LdpConfig.from_params(params, gen.uniform(0.05, 0.95) * x_inf)
            bounds = quasi_potential_bounds(config, params)
            assert 0.0 < bounds.lower <= bounds.upper

    def test_w_zero_matches_integral_for_random_parameters(self):
        gen = np.random.default_rng(7)
        for _ in range(20):
            a = gen.uniform(0.02, 0.6)
            params = ModelParams.from_ab(a, gen.uniform(0.02, 0.92 - a), n=100)
            x_inf = params.rate_at_u_star * (1.0 - (params.lambda_star + params.r) / params.kh)
            integral, _ = integrate.quad(
                lambda z, p=params: entropy_q(p.r / drift_G(z, p)), 0.0, x_inf, epsabs=1e-12, epsrel=1e-12
            )
            assert w_zero(params) == pytest.approx(integral / params.r, abs=1e-8)

    def test_w_zero_needs_equilibrium(self, subcritical):
        with pytest.raises(DomainError, match="W0 needs"):
            w_zero(subcritical)

    def test_decay_path_costs_the_upper_bound(self, config):
        times = np.arange(0.0, math.log(8.0), 1e-4)
        path = PathSample(times, 0.8 * np.exp(-times))
        assert action_of_path(path, config) == pytest.approx(0.8 - 0.8 * math.exp(-times[-1]), rel=1e-3)

    def test_relaxation_is_free(self, config):
        times = np.linspace(0.0, 5.0, 5001)
        ode = limit_ode(0.1, 5.0, config.ode, t_eval=times)
        assert action_of_path(PathSample(ode.times, ode.values), config) < 1e-4

    def test_impossible_path(self, config):
        times = np.linspace(0.0, 0.1, 11)
        path = PathSample(times, 0.8 * np.exp(-5.0 * times))
        assert action_of_path(path, config) == math.inf

    def test_too_few_nodes(self, config):
        with pytest.raises(ArgumentError, match="at least 3 nodes"):
            action_of_path(PathSample(np.array([0.0, 1.0]), np.array([0.5, 0.4])), config)


class TestScaling:
    def test_report(self, supercritical, rng):
        report = extinction_scaling(supercritical, 0.3, [25, 20], 10, rng)
        assert [row.n for row in report.rows] == [20, 25]
        assert not report.partial
        assert report.verdict in {"consistent", "inconsistent"}
        assert all(row.median > 0 for row in report.rows)
        assert len(report.table()) == 2
        assert len(report.sample_rows()) == 20
        assert report.summary()["eta"] == 0.3

    def test_no_feasible_size(self, supercritical, rng):
        with pytest.raises(ArgumentError, match="increase N"):
            extinction_scaling(supercritical, 0.4, [20, 12], 5, rng)

    def test_guard(self, rng):
        with pytest.raises(GuardViolation):
            extinction_scaling(ModelParams.from_ab(0.6, 0.5, n=50), 0.1, [50], 5, rng)

    def test_empty_sizes(self, supercritical, rng):
        with pytest.raises(ArgumentError, match="ns"):
            extinction_scaling(supercritical, 0.3, [], 5, rng)

    def test_size_below_eta_is_reported_infeasible(self, supercritical, rng):
        report = extinction_scaling(supercritical, 0.4, [40, 20], 3, rng, cap=100_000)
        assert report.infeasible_ns == [20]
        assert [row.feasible for row in report.rows] == [False, True]
        assert report.partial
        assert report.verdict == "partial"
        assert report.table()[0] == (20, None, None, None, False)
        assert len(report.sample_rows()) == 3
        assert report.summary()["infeasible_ns"] == [20]

    @pytest.mark.slow
    def test_half_equilibrium_sweep(self, supercritical, rng):
        report = extinction_scaling(supercritical, 0.4, [20, 40, 80], 4, rng, cap=200_000)
        assert report.infeasible_ns == [20]
        assert [row.n for row in report.feasible_rows] == [40, 80]
        for row in report.feasible_rows:
            assert row.samples.size == 4
            assert np.all(row.samples > 0)
        assert report.verdict == "partial"
