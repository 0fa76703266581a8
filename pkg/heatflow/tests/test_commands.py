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

import os
import tempfile
from io import StringIO
from unittest import TestCase
from unittest.mock import patch

import huey.contrib.djhuey as huey
import yaml
from django.core.management import call_command
from django.core.management.base import CommandError

from heatflow.defines import EXIT_FAIL, EXIT_IO
from heatflow.tests.utils import config_path, csv_header, csv_rows


class HeatflowCommandTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = self.tmp.name
        self.stdout, self.stderr = StringIO(), StringIO()

    def tearDown(self):
        self.tmp.cleanup()

    def _call(self, mode, *args, **options):
        call_command('heatflow', mode, *args, out=self.out, stdout=self.stdout,
                     stderr=self.stderr, **options)
        return self.stdout.getvalue()

    def test_list(self):
        output = self._call('verify', list=True)
        lines = output.splitlines()
        self.assertEqual(len(lines), 13)
        self.assertTrue(lines[0].startswith('gaussian_constant'))
        self.assertTrue(lines[-1].startswith('pointwise_closures'))

    def test_constants(self):
        output = self._call('constants', config=config_path('constants'))
        self.assertIn('young_constant=0.877383', output)
        self.assertIn('Experiment young passed', output)
        self.assertTrue(os.path.exists(os.path.join(self.out, 'young.constants.csv')))

    def test_coarse_flag(self):
        self._call('qcurve', '--coarse', config=config_path('extremal'))
        with open(os.path.join(self.out, 'extremal.qcurve.csv')) as f:
            header = f.read()
        self.assertIn('# grid.points=64\n', header)
        self.assertIn('# coarse=true\n', header)

    def test_failing_experiment(self):
        with self.assertRaises(SystemExit) as cm:
            self._call('residual', config=config_path('negative_control'))
        self.assertEqual(cm.exception.code, EXIT_FAIL)
        self.assertIn('Experiment control failed', self.stderr.getvalue())
        self.assertTrue(os.path.exists(os.path.join(self.out, 'control.residual.csv')))

    def test_verify_subset(self):
        output = self._call('verify', only=['algebraic_identities'])
        self.assertIn('algebraic_identities', output)
        self.assertTrue(os.path.exists(os.path.join(self.out, 'verify.csv')))

    def test_unknown_criterion(self):
        with self.assertRaises(CommandError) as cm:
            self._call('verify', only=['no_such_check'])
        self.assertEqual(cm.exception.returncode, EXIT_IO)
        self.assertIn('no_such_check', str(cm.exception))

    def test_numerical_error_fails(self):
        with patch('heatflow.management.commands.heatflow.run_experiment',
                   side_effect=ValueError("domain too small for support")):
            with self.assertRaises(SystemExit) as cm:
                self._call('constants', config=config_path('constants'))
        self.assertEqual(cm.exception.code, EXIT_FAIL)
        self.assertIn('domain too small', self.stderr.getvalue())

    def test_dump_fields(self):
        self._call('residual', config=config_path('geometric_mean'), dump=True)
        for j in (1, 2):
            with open(os.path.join(self.out, 'geometric.field-%d.csv' % j)) as f:
                text = f.read()
            self.assertEqual(csv_header(text), ['experiment=geometric t=2.0'])
            rows = csv_rows(text)
            self.assertEqual(len(rows), 512)
            self.assertTrue(all(float(value) >= 0 for _, value in rows))
        with open(os.path.join(self.out, 'geometric.residual.yml')) as f:
            summary = yaml.safe_load(f)
        self.assertIn('geometric.field-2.csv', summary['reports'])

    def test_dump_without_fields(self):
        with self.assertLogs(level='WARNING'):
            self._call('constants', config=config_path('constants'), dump=True)
        self.assertFalse(any('field' in name for name in os.listdir(self.out)))

    def test_config_required(self):
        with self.assertRaises(CommandError) as cm:
            self._call('qcurve')
        self.assertEqual(cm.exception.returncode, EXIT_IO)

    def test_missing_file(self):
        with self.assertRaises(CommandError) as cm:
            self._call('qcurve', config=os.path.join(self.out, 'missing.toml'))
        self.assertEqual(cm.exception.returncode, EXIT_IO)

    def test_invalid_config(self):
        path = os.path.join(self.out, 'bad.toml')
        with open(path, 'w') as f:
            f.write('mode = "constants"\n[exponents]\np = [2, 2]\n')
        with self.assertRaises(CommandError) as cm:
            self._call('constants', config=path)
        self.assertEqual(cm.exception.returncode, EXIT_IO)
        self.assertIn('line 3: p infinite or negative', str(cm.exception))

    def test_mode_mismatch(self):
        with self.assertRaises(CommandError) as cm:
            self._call('qcurve', config=config_path('constants'))
        self.assertIn("not 'qcurve'", str(cm.exception))


class EnqueueTests(TestCase):
    def setUp(self):
        huey.HUEY.immediate = True
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        huey.HUEY.immediate = False
        self.tmp.cleanup()

    def test_enqueue(self):
        out = StringIO()
        call_command('heatflow', 'constants', config=config_path('constants'), out=self.tmp.name,
                     enqueue=True, stdout=out)
        self.assertIn('Experiment young queued', out.getvalue())
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, 'young.constants.csv')))

    def test_enqueue_keeps_only(self):
        call_command('heatflow', 'verify', out=self.tmp.name, enqueue=True,
                     only=['algebraic_identities'], stdout=StringIO())
        with open(os.path.join(self.tmp.name, 'verify.csv')) as f:
            names = [row[0] for row in csv_rows(f.read())]
        self.assertEqual(names, ['algebraic_identities'])
