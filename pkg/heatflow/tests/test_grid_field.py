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

from heatflow.defines import WRAPAROUND_FACTOR
from heatflow.gaussian_oracle import (
    GaussianMixture,
    IsotropicGaussian,
    evolve_mixture,
    gaussian_lp_norm,
    heat_kernel,
    mixture_eval,
)
from heatflow.grid_field import (
    DomainTooSmall,
    GridField,
    GridSpec,
    _clamp,
    auto_period,
    bulk_mask,
    check_resolution,
    check_wraparound,
    dump_field_csv,
    fft_convolve,
    fourier_lp_norm,
    grid_lp_norm,
    heat_step,
    log_divergence,
    sample_mixture,
    spectral_grad_laplacian,
)
from heatflow.tests.utils import assert_relative, csv_header, csv_rows


def _kernel(t, d=1):
    return GaussianMixture([heat_kernel(t, d)])


class GridSpecTests(TestCase):
    @parameterized.expand([
        (3, 16, 256),
        (1, 0, 256),
        (1, -4, 256),
        (1, 16, 100),
        (1, 16, 8),
    ])
    def test_invalid(self, dimension, period, points):
        with self.assertRaises(ValueError):
            GridSpec(dimension, period, points)

    def test_geometry(self):
        spec = GridSpec(1, 16, 256)
        self.assertEqual(spec.spacing, 1 / 16)
        self.assertEqual(spec.shape, (256,))
        self.assertEqual(spec.coordinates[0], -8.0)
        self.assertEqual(spec.node(3), (-8 + 3 / 16,))
        self.assertEqual(spec.with_points(512).spacing, 1 / 32)

    def test_mesh_2d(self):
        spec = GridSpec(2, 4, 16)
        mesh = spec.mesh()
        self.assertEqual(mesh.shape, (16, 16, 2))
        self.assertEqual(spec.node((1, 2)), (-1.75, -1.5))
        self.assertEqual(tuple(mesh[1, 2]), (-1.75, -1.5))


class GridFieldTests(TestCase):
    def test_rejects_negative(self):
        with self.assertRaises(ValueError):
            GridField(GridSpec(1, 4, 16), -np.ones(16))

    def test_rejects_nan(self):
        values = np.ones(16)
        values[3] = np.nan
        with self.assertRaises(ValueError):
            GridField(GridSpec(1, 4, 16), values)

    def test_read_only(self):
        f = GridField(GridSpec(1, 4, 16), np.ones(16))
        with self.assertRaises(ValueError):
            f.values[0] = 2.0

    def test_mass_and_power(self):
        f = GridField(GridSpec(1, 4, 16), np.full(16, 4.0))
        self.assertEqual(f.mass, 16.0)
        self.assertEqual(f.power(0.5).mass, 8.0)


class SamplingTests(TestCase):
    @parameterized.expand([
        (0.5, 1, 256),
        (1.0, 1, 256),
        (1.0, 2, 64),
    ])
    def test_kernel_mass(self, t, d, points):
        f = sample_mixture(_kernel(t, d), GridSpec(d, 16, points))
        assert_relative(self, f.mass, 1.0, 1e-12)

    def test_domain_too_small(self):
        with self.assertRaises(DomainTooSmall) as cm:
            sample_mixture(_kernel(1.0), GridSpec(1, 4, 256))
        self.assertGreater(cm.exception.min_period, 4)
        self.assertIsInstance(cm.exception, ValueError)

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            sample_mixture(_kernel(1.0, 2), GridSpec(1, 16, 256))

    def test_auto_period(self):
        m = GaussianMixture([heat_kernel(1.0, 1), IsotropicGaussian(1.0, 2 * math.pi, (2.0,))])
        period = auto_period([m])
        self.assertAlmostEqual(period, 4 * (2 + WRAPAROUND_FACTOR), delta=1e-12)
        check_wraparound(m, GridSpec(1, period, 256))

    def test_resolution_warning(self):
        spec = GridSpec(1, 16, 16)
        with self.assertLogs(level='WARNING'):
            exponent = check_resolution(_kernel(0.01), spec)
        self.assertLess(exponent, 1)
        self.assertGreater(check_resolution(_kernel(1.0), GridSpec(1, 16, 256)), 36)


class SpectralTests(TestCase):
    spec = GridSpec(1, 16, 256)

    def test_convolution(self):
        f = sample_mixture(_kernel(0.5), self.spec)
        g = sample_mixture(_kernel(1.0), self.spec)
        expected = mixture_eval(_kernel(1.5), self.spec.mesh())
        np.testing.assert_allclose(fft_convolve(f, g).values, expected, rtol=0, atol=1e-12)

    def test_convolution_off_center(self):
        f = sample_mixture(GaussianMixture([IsotropicGaussian(1.0, math.pi, (1.0,))]), self.spec)
        g = sample_mixture(GaussianMixture([IsotropicGaussian(1.0, math.pi, (-0.5,))]), self.spec)
        expected = GaussianMixture([IsotropicGaussian(1 / math.sqrt(2), math.pi / 2, (0.5,))])
        np.testing.assert_allclose(fft_convolve(f, g).values,
                                   mixture_eval(expected, self.spec.mesh()), rtol=0, atol=1e-12)

    def test_convolution_grid_mismatch(self):
        f = sample_mixture(_kernel(1.0), self.spec)
        g = sample_mixture(_kernel(1.0), self.spec.with_points(512))
        with self.assertRaises(ValueError):
            fft_convolve(f, g)

    def test_clamp(self):
        np.testing.assert_array_equal(_clamp(np.array([1.0, -1e-16]), 'test'), [1.0, 0.0])
        with self.assertRaises(ArithmeticError):
            _clamp(np.array([1.0, -0.5]), 'test')

    def test_heat_step(self):
        m = _kernel(1.0)
        f = heat_step(sample_mixture(m, self.spec), 2.0, 0.25)
        expected = mixture_eval(evolve_mixture(m, 2.0, 0.25), self.spec.mesh())
        np.testing.assert_allclose(f.values, expected, rtol=0, atol=1e-12)

    def test_heat_step_semigroup(self):
        f = sample_mixture(GaussianMixture([IsotropicGaussian(1.0, math.pi, (0.5,)),
                                            IsotropicGaussian(0.5, 4.0, (-1.0,))]), self.spec)
        once = heat_step(f, 1.5, 0.75)
        twice = heat_step(heat_step(f, 1.5, 0.25), 1.5, 0.5)
        np.testing.assert_allclose(twice.values, once.values, rtol=0, atol=1e-14)

    def test_convolution_commutes(self):
        f = sample_mixture(GaussianMixture([IsotropicGaussian(1.0, math.pi, (1.0,))]), self.spec)
        g = sample_mixture(GaussianMixture([IsotropicGaussian(2.0, 5.0, (-0.5,)),
                                            IsotropicGaussian(1.0, 1.0, (0.25,))]), self.spec)
        np.testing.assert_allclose(fft_convolve(f, g).values, fft_convolve(g, f).values,
                                   rtol=0, atol=1e-15)

    def test_heat_step_trivial(self):
        f = sample_mixture(_kernel(1.0), self.spec)
        self.assertIs(heat_step(f, 0.0, 1.0), f)
        self.assertIs(heat_step(f, 1.0, 0.0), f)
        with self.assertRaises(ValueError):
            heat_step(f, -1.0, 1.0)

    def test_derivatives(self):
        x = self.spec.coordinates
        u = np.exp(-math.pi * x ** 2)
        (grad,), laplacian = spectral_grad_laplacian(GridField(self.spec, u))
        np.testing.assert_allclose(grad, -2 * math.pi * x * u, rtol=0, atol=1e-10)
        np.testing.assert_allclose(laplacian, (4 * math.pi ** 2 * x ** 2 - 2 * math.pi) * u,
                                   rtol=0, atol=1e-9)

    def test_log_divergence_of_gaussian(self):
        f = sample_mixture(_kernel(2.0), self.spec)
        values, mask = log_divergence(f)
        self.assertTrue(mask[128])
        self.assertFalse(mask[0])
        np.testing.assert_allclose(values[mask], -math.pi, rtol=1e-8)
        self.assertTrue(np.all(values[~mask] == 0))

    def test_lp_norm(self):
        f = sample_mixture(_kernel(1.0), self.spec)
        for p in (2, 4 / 3, 0.5):
            assert_relative(self, grid_lp_norm(f, p), gaussian_lp_norm(heat_kernel(1.0, 1), p),
                            1e-12)
        with self.assertRaises(ValueError):
            grid_lp_norm(f, 0)

    def test_plancherel(self):
        f = sample_mixture(_kernel(0.5), self.spec)
        assert_relative(self, fourier_lp_norm(f, self.spec, 2), grid_lp_norm(f, 2), 1e-12)

    def test_fourier_norm_of_kernel(self):
        # the transform of H_t is exp(-pi t xi^2)
        f = sample_mixture(_kernel(1.0), self.spec)
        expected = gaussian_lp_norm(IsotropicGaussian(1.0, math.pi), 4)
        assert_relative(self, fourier_lp_norm(f, self.spec, 4), expected, 1e-10)


class BulkAndOutputTests(TestCase):
    def test_bulk_mask(self):
        spec = GridSpec(1, 16, 256)
        mask = bulk_mask(spec)
        self.assertEqual(int(mask.sum()), 127)
        self.assertTrue(mask[128])
        shifted = bulk_mask(spec, center=(8.0,))
        self.assertTrue(shifted[0])
        self.assertFalse(shifted[128])

    def test_dump_field_csv(self):
        spec = GridSpec(1, 16, 16)
        f = GridField(spec, np.arange(16, dtype=float))
        text = dump_field_csv(f, 'demo')
        self.assertEqual(csv_header(text), ['experiment=demo'])
        self.assertEqual(text.splitlines()[1], 'x,value')
        rows = csv_rows(text)
        self.assertEqual(len(rows), 16)
        self.assertEqual(rows[0], ['-8.0', '0.0'])
        self.assertEqual(rows[-1], ['7.0', '15.0'])

    def test_dump_field_csv_2d(self):
        spec = GridSpec(2, 4, 16)
        text = dump_field_csv(GridField(spec, np.ones((16, 16))), 'demo')
        self.assertEqual(text.splitlines()[1], 'x,y,value')
        self.assertEqual(len(csv_rows(text)), 256)
