# Copyright 2020 ETH Zurich
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import math
from unittest import TestCase

import numpy as np
from parameterized import parameterized

from heatflow.gaussian_oracle import (
    AtomicMeasure,
    GaussianMixture,
    HeatFlow,
    IsotropicGaussian,
    convolve_gaussians,
    evolve_atoms,
    evolve_mixture,
    gaussian_lp_norm,
    gaussian_mass,
    gaussian_power,
    heat_kernel,
    log_gradient_bound,
    mixture_eval,
    mixture_laplacian_ratio,
    mixture_log_eval,
    mixture_log_gradient,
    mixture_log_laplacian,
    mixture_mass,
)
from heatflow.tests.utils import assert_relative


class HeatKernelTests(TestCase):
    @parameterized.expand([
        (0.01, 1), (1.0, 1), (100.0, 1),
        (0.01, 2), (1.0, 2), (100.0, 2),
    ])
    def test_unit_mass(self, t, d):
        assert_relative(self, gaussian_mass(heat_kernel(t, d)), 1.0, 1e-12)

    @parameterized.expand([(0.5, 1.5, 1), (0.25, 4.0, 2)])
    def test_semigroup(self, s, t, d):
        g = convolve_gaussians(heat_kernel(s, d), heat_kernel(t, d))
        expected = heat_kernel(s + t, d)
        assert_relative(self, g.amplitude, expected.amplitude, 1e-12)
        assert_relative(self, g.decay, expected.decay, 1e-12)

    @parameterized.expand([0, -1.0])
    def test_nonpositive_time(self, t):
        with self.assertRaises(ValueError):
            heat_kernel(t, 1)

    def test_dimension(self):
        with self.assertRaises(ValueError):
            heat_kernel(1.0, 3)


class GaussianAlgebraTests(TestCase):
    def test_lp_norm(self):
        # |H_t|_p = t^(-(1 - 1/p)/2) p^(-1/(2p)) in d=1
        for t, p in [(1.0, 2), (0.5, 4.0 / 3), (3.0, 0.5)]:
            expected = t ** (-(1 - 1 / p) / 2) * p ** (-1 / (2 * p))
            assert_relative(self, gaussian_lp_norm(heat_kernel(t, 1), p), expected, 1e-12)

    def test_power(self):
        g = gaussian_power(IsotropicGaussian(2.0, 3.0, (1.0,)), 0.5)
        self.assertAlmostEqual(g.amplitude, math.sqrt(2.0))
        self.assertAlmostEqual(g.decay, 1.5)
        self.assertEqual(g.center, (1.0,))

    @parameterized.expand([(0.1,), (10.0,)])
    def test_kernel_pairing_scale_free(self, scale):
        # (4/3, 4/3; 2) with its balanced rates 3/16
        def pairing(lam):
            g = gaussian_power(heat_kernel(lam * 3 / 16, 1), 0.75)
            return gaussian_lp_norm(convolve_gaussians(g, g), 2)

        assert_relative(self, pairing(scale), pairing(1.0), 1e-12)

    def test_convolution_centers_add(self):
        g = convolve_gaussians(IsotropicGaussian(1.0, 1.0, (1.0, -1.0)),
                               IsotropicGaussian(1.0, 2.0, (0.5, 0.5)))
        self.assertEqual(g.center, (1.5, -0.5))
        self.assertAlmostEqual(g.decay, 2.0 / 3)

    def test_convolution_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            convolve_gaussians(heat_kernel(1.0, 1), heat_kernel(1.0, 2))

    @parameterized.expand([
        (0.0, 1.0),
        (1.0, 0.0),
        (1.0, -2.0),
    ])
    def test_invalid_gaussian(self, amplitude, decay):
        with self.assertRaises(ValueError):
            IsotropicGaussian(amplitude, decay)

    def test_mixture_mass(self):
        m = GaussianMixture([IsotropicGaussian(2.0, math.pi, 0.0),
                             IsotropicGaussian(1.0, math.pi / 4, 1.0)])
        assert_relative(self, mixture_mass(m), 2.0 + 2.0, 1e-12)

    def test_empty_mixture(self):
        with self.assertRaises(ValueError):
            GaussianMixture([])


class AtomicMeasureTests(TestCase):
    def test_scalar_locations(self):
        mu = AtomicMeasure([(0.5, 1.0), (-1.0, 2.0)])
        self.assertEqual(mu.atoms, (((0.5,), 1.0), ((-1.0,), 2.0)))
        self.assertEqual(mu.dimension, 1)
        self.assertEqual(mu.support_radius, 1.0)
        self.assertEqual(mu.total_mass, 3.0)

    @parameterized.expand([
        ([(0.0, 0.0)], None),
        ([(0.0, -1.0)], None),
        ([], None),
        ([((0.0, 0.0), 1.0), (0.0, 1.0)], None),
        ([(2.0, 1.0)], 1.0),
    ])
    def test_invalid(self, atoms, support_radius):
        with self.assertRaises(ValueError):
            AtomicMeasure(atoms, support_radius)


class EvolutionTests(TestCase):
    def test_atoms_become_kernels(self):
        mu = AtomicMeasure([(0.0, 1.0), (1.0, 2.0)])
        m = evolve_atoms(mu, 0.5, 2.0)
        kernel = heat_kernel(1.0, 1)
        self.assertEqual(len(m.terms), 2)
        self.assertAlmostEqual(m.terms[1].amplitude, 2 * kernel.amplitude)
        self.assertAlmostEqual(m.terms[1].decay, kernel.decay)
        self.assertEqual(m.terms[1].center, (1.0,))

    def test_atoms_sigma_zero(self):
        with self.assertRaises(ValueError):
            evolve_atoms(AtomicMeasure([(0.0, 1.0)]), 0.0, 1.0)

    def test_mixture_semigroup(self):
        m = GaussianMixture([heat_kernel(0.5, 1)])
        evolved = evolve_mixture(evolve_mixture(m, 2.0, 0.25), 2.0, 0.5)
        direct = evolve_mixture(m, 2.0, 0.75)
        expected = heat_kernel(2.0, 1)
        for g in (evolved.terms[0], direct.terms[0]):
            assert_relative(self, g.amplitude, expected.amplitude, 1e-12)
            assert_relative(self, g.decay, expected.decay, 1e-12)

    def test_mixture_sigma_zero(self):
        m = GaussianMixture([heat_kernel(0.5, 1)])
        self.assertEqual(evolve_mixture(m, 0.0, 10.0), m)

    def test_mass_conserved(self):
        m = GaussianMixture([IsotropicGaussian(1.0, 2.0, 0.3), IsotropicGaussian(0.5, 5.0, -1.0)])
        for t in (0.1, 1.0, 10.0):
            assert_relative(self, mixture_mass(evolve_mixture(m, 0.75, t)), mixture_mass(m),
                            1e-12)


class MixtureEvaluationTests(TestCase):
    def setUp(self):
        self.m = GaussianMixture([IsotropicGaussian(1.0, math.pi, 0.0),
                                  IsotropicGaussian(0.5, 2.0, 1.0)])

    def _direct(self, x):
        return math.exp(-math.pi * x ** 2) + 0.5 * math.exp(-2.0 * (x - 1.0) ** 2)

    def test_eval(self):
        x = np.array([-1.0, 0.0, 0.3, 2.5])
        values = mixture_eval(self.m, x)
        self.assertEqual(values.shape, (4,))
        for xi, v in zip(x, values):
            assert_relative(self, v, self._direct(xi), 1e-13)

    def test_far_tail_in_log_space(self):
        log_value = mixture_log_eval(self.m, 50.0)
        # the second term dominates: log 0.5 - 2 * 49^2
        assert_relative(self, log_value, math.log(0.5) - 2.0 * 49.0 ** 2, 1e-12)
        self.assertEqual(mixture_eval(self.m, 50.0), 0.0)
        self.assertTrue(np.isfinite(mixture_log_gradient(self.m, 50.0)).all())

    def test_log_gradient_against_difference(self):
        x, step = 0.4, 1e-6
        numeric = (math.log(self._direct(x + step)) - math.log(self._direct(x - step))) / (2 * step)
        assert_relative(self, mixture_log_gradient(self.m, x)[0], numeric, 1e-7)

    def test_log_gradient_at_random_points(self):
        rng = np.random.default_rng(3)
        x, step = rng.uniform(-2.0, 3.0, 100), 1e-5
        numeric = (np.log(mixture_eval(self.m, x + step))
                   - np.log(mixture_eval(self.m, x - step))) / (2 * step)
        gradient = mixture_log_gradient(self.m, x[:, np.newaxis])[:, 0]
        for xi, g, n in zip(x, gradient, numeric):
            # absolute near the stationary point of log u
            self.assertLessEqual(abs(g - n), 1e-6 * max(abs(g), 1.0), "x=%r" % xi)

    def test_laplacian_ratio_single_term(self):
        m = GaussianMixture([IsotropicGaussian(1.0, math.pi, (0.0, 0.0))])
        x = np.array([0.3, -0.2])
        expected = 4 * math.pi ** 2 * 0.13 - 2 * math.pi * 2
        assert_relative(self, mixture_laplacian_ratio(m, x), expected, 1e-12)
        # div(grad log u) of a single Gaussian is constant -2ad
        assert_relative(self, mixture_log_laplacian(m, x), -4 * math.pi, 1e-12)

    def test_minimum_image(self):
        m = GaussianMixture([IsotropicGaussian(1.0, 1.0, 7.9)])
        self.assertAlmostEqual(mixture_eval(m, -7.9, period=16.0), math.exp(-0.04))
        self.assertAlmostEqual(mixture_eval(m, 7.7, period=16.0), math.exp(-0.04))

    def test_dimension_mismatch(self):
        m = GaussianMixture([IsotropicGaussian(1.0, 1.0, (0.0, 0.0))])
        with self.assertRaises(ValueError):
            mixture_eval(m, np.zeros((4, 3)))


class HeatFlowTests(TestCase):
    def test_rejects_atoms_without_diffusion(self):
        with self.assertRaises(ValueError):
            HeatFlow(AtomicMeasure([(0.0, 1.0)]), 0.0)
        with self.assertRaises(ValueError):
            HeatFlow(AtomicMeasure([(0.0, 1.0)]), -1.0)

    def test_constant_flow(self):
        m = GaussianMixture([heat_kernel(1.0, 1)])
        flow = HeatFlow(m, 0.0)
        self.assertEqual(flow.at(5.0), m)
        self.assertTrue(np.all(flow.time_log_derivative(1.0, np.linspace(-1, 1, 5)) == 0))

    @parameterized.expand([(0.1875,), (0.75,), (1.0,)])
    def test_time_log_derivative(self, sigma):
        flow = HeatFlow(AtomicMeasure([(-0.5, 1.0), (0.5, 2.0)]), sigma)
        x, t, step = np.array([-1.0, 0.0, 0.7]), 1.0, 1e-5
        numeric = (mixture_log_eval(flow.at(t + step), x)
                   - mixture_log_eval(flow.at(t - step), x)) / (2 * step)
        analytic = flow.time_log_derivative(t, x)
        for a, n in zip(analytic, numeric):
            self.assertAlmostEqual(a, n, delta=1e-7 * max(1.0, abs(n)))

    def test_properties(self):
        flow = HeatFlow(AtomicMeasure([(1.0, 1.0), (-2.0, 0.5)]), 0.5)
        self.assertTrue(flow.is_atomic)
        self.assertEqual(flow.support_radius, 2.0)
        self.assertEqual(flow.mass, 1.5)
        self.assertEqual(flow.with_sigma(1.0).sigma, 1.0)

    def test_log_gradient_bound(self):
        flow = HeatFlow(AtomicMeasure([(-1.0, 1.0), (0.5, 3.0), (1.0, 0.5)]), 0.75)
        x = np.linspace(-6.0, 6.0, 121)
        for t in (0.05, 1.0, 20.0):
            gradient = np.abs(mixture_log_gradient(flow.at(t), x)[:, 0])
            bound = log_gradient_bound(x, t, flow.support_radius, flow.sigma)
            self.assertTrue(np.all(gradient <= bound))
