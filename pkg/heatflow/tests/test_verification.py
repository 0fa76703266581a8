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

import itertools
import math
from unittest import TestCase
from unittest.mock import patch

from parameterized import parameterized

from heatflow.defines import EXIT_FAIL, EXIT_PASS
from heatflow.fixtures.battery import GridDef
from heatflow.tests.utils import csv_header, csv_rows
from heatflow.util.reports import DictWriter
from heatflow.verification import (
    CRITERIA,
    Criterion,
    SuiteOptions,
    coarse_points,
    list_criteria,
    relaxed,
    verify_suite,
)


def _explode(options):
    raise ValueError("no data")


class CoarseModeTests(TestCase):
    @parameterized.expand([
        (16384, 4096),
        (1024, 256),
        (256, 64),
        (128, 64),
        (32, 32),
    ])
    def test_coarse_points(self, points, expected):
        self.assertEqual(coarse_points(points), expected)

    def test_options(self):
        options = SuiteOptions(coarse=True)
        self.assertEqual(options.grid(GridDef(16.0, 1024)).points, 256)
        self.assertAlmostEqual(options.tolerance(1e-9), relaxed(1e-9))
        self.assertAlmostEqual(relaxed(1e-9), 1e-7, delta=1e-20)
        self.assertEqual(SuiteOptions(coarse=False).tolerance(1e-9), 1e-9)


class SuiteTests(TestCase):
    def test_list(self):
        names = [name for name, _ in list_criteria()]
        self.assertEqual(len(names), 13)
        self.assertEqual(names[:2], ['gaussian_constant', 'forward_monotonicity'])
        self.assertIn('closure_residuals', names)

    def test_unknown_criterion(self):
        with self.assertRaises(ValueError):
            verify_suite(only=['gaussian_constant', 'bogus'])

    @parameterized.expand([
        ('gaussian_constant',),
        ('algebraic_identities',),
        ('extremal_flatness',),
        ('derivative_formula',),
        ('quadratic_form_identity',),
        ('pointwise_closures',),
    ])
    def test_criterion(self, name):
        result = verify_suite(only=[name])
        self.assertEqual(result.exit_code, EXIT_PASS, result.results)
        (criterion,) = result.results
        self.assertEqual(criterion.name, name)
        self.assertTrue(criterion.passed)

    def test_closure_with_negative_control(self):
        with self.assertLogs(level='WARNING'):
            result = verify_suite(only=['closure_residuals'])
        self.assertEqual(result.exit_code, EXIT_PASS, result.results)

    def test_summary_file(self):
        writer = DictWriter()
        verify_suite(only=['algebraic_identities'], writer=writer)
        text = writer.dict['verify.csv']
        self.assertEqual(csv_header(text), ['coarse=false'])
        self.assertIn('criterion,measured,expected,tolerance,pass', text.splitlines())
        (row,) = csv_rows(text)
        self.assertEqual(row[0], 'algebraic_identities')
        self.assertEqual(row[-1], 'true')

    def test_weighted_balance_is_checked(self):
        with patch('heatflow.verification.weighted_balance_residual', return_value=1e-3):
            result = verify_suite(only=['algebraic_identities'])
        self.assertEqual(result.exit_code, EXIT_FAIL)
        self.assertAlmostEqual(result.results[0].measured, 1e-3, delta=1e-15)

    def test_integrated_pairings_are_checked(self):
        decreasing = itertools.cycle([3.0, 2.0, 1.0])
        with patch('heatflow.verification.harmonic_mass', side_effect=lambda u: next(decreasing)):
            result = verify_suite(only=['pointwise_closures'])
        self.assertEqual(result.exit_code, EXIT_FAIL)
        self.assertAlmostEqual(result.results[0].measured, -0.5, delta=1e-12)

    def test_log_gradient_bound_is_checked(self):
        with patch('heatflow.verification.log_gradient_bound', return_value=0.0):
            with self.assertLogs(level='WARNING'):
                result = verify_suite(only=['pointwise_closures'])
        self.assertEqual(result.exit_code, EXIT_FAIL)

    def test_raising_criterion_fails(self):
        with patch.dict(CRITERIA, {'explode': Criterion('explode', 'raises', _explode)}):
            with self.assertLogs(level='ERROR'):
                result = verify_suite(only=['explode'])
        self.assertEqual(result.exit_code, EXIT_FAIL)
        (criterion,) = result.results
        self.assertFalse(criterion.passed)
        self.assertTrue(math.isnan(criterion.measured))
        self.assertEqual(criterion.expected, 'no data')

    def test_full_suite(self):
        result = verify_suite()
        failed = [r for r in result.results if not r.passed]
        self.assertEqual(failed, [])
        self.assertEqual(result.exit_code, EXIT_PASS)
        self.assertEqual([r.name for r in result.results], list(CRITERIA))
