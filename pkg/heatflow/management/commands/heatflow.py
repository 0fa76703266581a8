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

import sys

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from heatflow.defines import EXIT_FAIL, EXIT_IO, EXIT_PASS, MODE_VERIFY, MODES
from heatflow.experiments import parse_config, run_experiment
from heatflow.tasks import run_experiment_task
from heatflow.util.reports import FileReportWriter
from heatflow.verification import CRITERIA, list_criteria


class Command(BaseCommand):
    help = 'Runs a heat-flow experiment or the verification suite and writes CSV reports'

    def add_arguments(self, parser):
        parser.add_argument('mode', type=str, choices=MODES,
                            help='Experiment mode')
        parser.add_argument('-c', '--config', type=str, default=None,
                            help='Experiment configuration, TOML (optional for verify)')
        parser.add_argument('-o', '--out', type=str, default=None,
                            help='Report directory (default: HEATFLOW[\'OUTPUT_DIR\'])')
        parser.add_argument('--coarse', action='store_true',
                            help='Quarter the grids and relax tolerances by a factor 100')
        parser.add_argument('--list', action='store_true',
                            help='Print the verification criteria and exit')
        parser.add_argument('--only', action='append', default=None, metavar='NAME',
                            help='Run only this verification criterion (repeatable)')
        parser.add_argument('--dump', action='store_true',
                            help='Also write the sampled fields at the last time as CSV')
        parser.add_argument('--enqueue', action='store_true',
                            help='Queue the experiment on the task queue instead of running it')

    def handle(self, *args, **options):
        mode = options['mode']
        if options['list']:
            for name, description in list_criteria():
                self.stdout.write('%-24s %s' % (name, description))
            return

        text = self._read_config(options['config'], mode)
        try:
            spec = parse_config(text, mode, options['coarse'])
        except ValidationError as e:
            raise CommandError('%s: %s' % (options['config'] or 'configuration',
                                           '; '.join(e.messages)), returncode=EXIT_IO)
        unknown = [name for name in options['only'] or () if name not in CRITERIA]
        if unknown:
            raise CommandError('unknown criterion: %s' % ', '.join(unknown), returncode=EXIT_IO)
        out = options['out'] or settings.HEATFLOW['OUTPUT_DIR']

        if options['enqueue']:
            run_experiment_task(text, mode, out, options['coarse'], options['only'],
                                options['dump'])
            self.stdout.write(self.style.SUCCESS(
                'Experiment %s queued, reports go to %s' % (spec.name, out)))
            return

        try:
            result = run_experiment(spec, FileReportWriter(out), options['only'],
                                    options['dump'])
        except (ValueError, ArithmeticError) as e:
            # numerical failure while running; configuration errors surfaced above
            self.stderr.write(self.style.ERROR('Experiment %s failed: %s' % (spec.name, e)))
            sys.exit(EXIT_FAIL)

        for line in result.summary:
            self.stdout.write(line)
        if result.exit_code == EXIT_PASS:
            self.stdout.write(self.style.SUCCESS(
                'Experiment %s passed, reports written to %s' % (spec.name, out)))
            return
        self.stderr.write(self.style.ERROR(
            'Experiment %s %s' % (spec.name, 'failed' if result.exit_code == EXIT_FAIL
                                  else 'could not write its reports')))
        sys.exit(result.exit_code)

    def _read_config(self, path, mode):
        if path is None:
            if mode != MODE_VERIFY:
                raise CommandError('mode %s needs --config' % mode, returncode=EXIT_IO)
            return ''
        try:
            with open(path) as f:
                return f.read()
        except OSError as e:
            raise CommandError('cannot read %s: %s' % (path, e), returncode=EXIT_IO)
