"""Exact W2 computations, the explicit plan, and rate fitting."""

import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from brinklab.errors import ParameterError, SizeCapError
from brinklab.events import SmearedDensity
from brinklab.geometry import DensityModel, ParticleConfiguration, sample_configuration
from brinklab.rng import stream
from brinklab.transport import (
    DiscreteMeasure,
    fit_power_law,
    w2_assignment,
    w2_empirical_vs_density,
    w2_plan_cost_smeared,
)

RHO = DensityModel.uniform_box()


def w2_linprog(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Independent LP oracle for small transport problems."""
    n, m = mu.n, nu.n
    cost = ((mu.points[:, None, :] - nu.points[None, :, :]) ** 2).sum(-1).ravel()
    a_eq = []
    b_eq = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m : (i + 1) * m] = 1.0
        a_eq.append(row)
        b_eq.append(mu.weights[i])
    for j in range(m):
        row = np.zeros(n * m)
        row[j::m] = 1.0
        a_eq.append(row)
        b_eq.append(nu.weights[j])
    res = linprog(cost, A_eq=np.array(a_eq), b_eq=np.array(b_eq), bounds=(0, None))
    assert res.success
    return math.sqrt(res.fun)


class TestW2Assignment:
    def test_identical_multisets_zero(self):
        pts = np.random.default_rng(0).random((40, 3))
        mu = DiscreteMeasure.uniform(pts)
        nu = DiscreteMeasure.uniform(pts[::-1].copy())
        assert w2_assignment(mu, nu) == 0.0

    def test_two_singletons(self):
        x = np.array([[0.1, 0.2, 0.3]])
        y = np.array([[0.5, 0.2, 0.3]])
        val = w2_assignment(DiscreteMeasure.uniform(x), DiscreteMeasure.uniform(y))
        assert val == pytest.approx(0.4, abs=1e-15)

    def test_matches_factorial_brute_force_100(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(1, 7))
            a, b = rng.random((n, 3)), rng.random((n, 3))
            got = w2_assignment(DiscreteMeasure.uniform(a), DiscreteMeasure.uniform(b))
            best = min(
                sum(((a[i] - b[s[i]]) ** 2).sum() for i in range(n))
                for s in itertools.permutations(range(n))
            )
            assert got == pytest.approx(math.sqrt(best / n), rel=1e-14)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a = DiscreteMeasure.uniform(rng.random((30, 3)))
        b = DiscreteMeasure.uniform(rng.random((30, 3)))
        assert w2_assignment(a, b) == pytest.approx(w2_assignment(b, a), rel=1e-14)

    def test_triangle_inequality_100_triples(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            n = int(rng.integers(2, 17))
            ms = [DiscreteMeasure.uniform(rng.random((n, 3))) for _ in range(3)]
            dab = w2_assignment(ms[0], ms[1])
            dbc = w2_assignment(ms[1], ms[2])
            dac = w2_assignment(ms[0], ms[2])
            assert dac <= dab + dbc + 1e-9

    def test_dilation_covariance(self):
        rng = np.random.default_rng(5)
        a = rng.random((25, 3))
        b = rng.random((25, 3))
        base = w2_assignment(DiscreteMeasure.uniform(a), DiscreteMeasure.uniform(b))
        # power-of-two dilation scales distances exactly
        double = w2_assignment(DiscreteMeasure.uniform(2 * a), DiscreteMeasure.uniform(2 * b))
        assert double == 2 * base
        c = 1.7
        scaled = w2_assignment(DiscreteMeasure.uniform(c * a), DiscreteMeasure.uniform(c * b))
        assert scaled == pytest.approx(c * base, rel=1e-12)

    def test_weight_splitting_vs_lp(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            mu = DiscreteMeasure(points=rng.random((3, 3)),
                                 weights=np.array([0.5, 0.25, 0.25]))
            nu = DiscreteMeasure(points=rng.random((4, 3)),
                                 weights=np.array([0.125, 0.375, 0.25, 0.25]))
            assert w2_assignment(mu, nu) == pytest.approx(w2_linprog(mu, nu), abs=1e-9)

    def test_incommensurate_weights_rejected(self):
        mu = DiscreteMeasure(points=np.random.default_rng(7).random((2, 3)),
                             weights=np.array([1 / math.pi, 1 - 1 / math.pi]))
        nu = DiscreteMeasure.uniform(np.random.default_rng(8).random((3, 3)))
        with pytest.raises((ParameterError, SizeCapError)):
            w2_assignment(mu, nu)

    def test_size_cap(self):
        pts = np.zeros((4097, 3))
        with pytest.raises(SizeCapError):
            w2_assignment(DiscreteMeasure.uniform(pts), DiscreteMeasure.uniform(pts))

    def test_weight_validation(self):
        with pytest.raises(ParameterError):
            DiscreteMeasure(points=np.zeros((2, 3)), weights=np.array([0.7, 0.7]))
        with pytest.raises(ParameterError):
            DiscreteMeasure(points=np.zeros((2, 3)), weights=np.array([1.5, -0.5]))


class TestPlanCost:
    def test_single_unit_cube(self):
        cfg = ParticleConfiguration(centers=np.array([[0.5, 0.5, 0.5]]), alpha=2.5)
        cost, bound = w2_plan_cost_smeared(cfg, lam=0.3)
        # side 1: rms distance from the center of a unit cube = sqrt(3/12) = 0.5
        assert cost == pytest.approx(0.5, abs=1e-15)
        assert bound == pytest.approx(math.sqrt(3.0))

    def test_monte_carlo_second_moment_oracle(self):
        rng = stream(77)
        side = 0.42
        pts = (rng.random((400_000, 3)) - 0.5) * side
        mc = float((pts**2).sum(axis=1).mean())
        assert mc == pytest.approx(side**2 / 4.0, rel=5e-3)

    def test_bound_dominates_on_random_configs(self):
        rng = np.random.default_rng(9)
        for k in range(100):
            n = int(rng.integers(1, 400))
            cfg = sample_configuration(RHO, n, seed=5000 + k)
            lam = float(rng.uniform(0.05, 0.9))
            cost, bound = w2_plan_cost_smeared(cfg, lam)
            assert cost <= bound

    def test_exact_w2_below_plan_cost(self):
        """The explicit plan is admissible, so exact W2 cannot exceed it."""
        for n, seed in ((64, 1), (256, 2), (512, 3)):
            cfg = sample_configuration(RHO, n, seed=seed)
            lam = 0.3
            cost, _ = w2_plan_cost_smeared(cfg, lam)
            side = cfg.eps ** (1 - lam)
            # discretize each cube by its 8-point lattice (masses 1/(8N))
            offs = (np.indices((2, 2, 2)).reshape(3, -1).T - 0.5) / 2.0 * side
            cloud = (cfg.centers[:, None, :] + offs[None, :, :]).reshape(-1, 3)
            atoms = DiscreteMeasure.uniform(cloud)
            reps = DiscreteMeasure.uniform(np.repeat(cfg.centers, 8, axis=0))
            w2 = w2_assignment(reps, atoms)
            assert w2 <= cost + 1e-12

    def test_plan_marginals_match_smeared_density(self):
        cfg = sample_configuration(RHO, 100, seed=11)
        lam = 0.35
        sd = SmearedDensity(cfg, lam)
        rng = np.random.default_rng(12)
        pts = rng.random((200, 3))
        # second marginal of the plan: average of the per-cube uniform densities
        side = sd.side
        inside = (np.abs(pts[:, None, :] - cfg.centers[None, :, :]).max(axis=2)
                  <= side / 2.0)
        direct = inside.sum(axis=1) / (cfg.n * side**3)
        assert np.allclose(direct, sd.value(pts), atol=1e-12)


class TestEmpiricalSurrogate:
    def test_point_like_density(self):
        cell = 1e-3
        rho = DensityModel.uniform_box(lo=(0, 0, 0), hi=(cell, cell, cell))
        cfg = sample_configuration(rho, 16, seed=13)
        val = w2_empirical_vs_density(rho, cfg, seed=14)
        assert val <= cell * math.sqrt(3.0)

    def test_identical_points_zero(self):
        # replicating centers against a reference equal to those replicas
        pts = np.random.default_rng(15).random((32, 3))
        reps = DiscreteMeasure.uniform(np.repeat(pts, 4, axis=0))
        assert w2_assignment(reps, DiscreteMeasure.uniform(np.repeat(pts, 4, axis=0))) == 0.0

    def test_ref_floor_enforced(self):
        cfg = sample_configuration(RHO, 100, seed=16)
        with pytest.raises(ParameterError):
            w2_empirical_vs_density(RHO, cfg, seed=0, ref_samples=100)

    def test_size_cap(self):
        cfg = sample_configuration(RHO, 2049, seed=17)
        with pytest.raises(SizeCapError):
            w2_empirical_vs_density(RHO, cfg, seed=0)

    def test_default_ref_multiple_of_n(self):
        cfg = sample_configuration(RHO, 300, seed=18)
        val = w2_empirical_vs_density(RHO, cfg, seed=19)
        assert 0 < val < 1


class TestFitPowerLaw:
    def test_exact_square_law(self):
        s = np.linspace(0.5, 4.0, 6)
        fit = fit_power_law(list(zip(s, s**2)))
        assert fit.slope == pytest.approx(2.0, abs=1e-9)
        assert fit.slope_ci[0] <= fit.slope <= fit.slope_ci[1]

    def test_constant_data(self):
        s = np.array([1.0, 2.0, 4.0, 8.0])
        fit = fit_power_law(list(zip(s, np.full(4, 3.7))))
        assert fit.slope == pytest.approx(0.0, abs=1e-12)

    def test_noisy_three_halves(self):
        rng = np.random.default_rng(20)
        s = np.geomspace(0.1, 10, 8)
        v = s**1.5 * (1 + 0.01 * rng.standard_normal(8))
        fit = fit_power_law(list(zip(s, v)))
        assert abs(fit.slope - 1.5) < 0.1

    def test_input_validation(self):
        with pytest.raises(ParameterError):
            fit_power_law([(1.0, 1.0), (2.0, 2.0)])
        with pytest.raises(ParameterError):
            fit_power_law([(1.0, 1.0), (2.0, -2.0), (3.0, 1.0)])
