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

"""
Huey tasks config for heatflow experiments.
"""

import logging
import huey.contrib.djhuey as huey

from django.core.exceptions import ValidationError

from heatflow.defines import EXIT_FAIL, EXIT_IO
from heatflow.experiments import parse_config, run_experiment
from heatflow.util.reports import FileReportWriter


@huey.task()
def run_experiment_task(config_text, mode, out_dir, coarse=False, only=None, dump=False):
    """
    Task to run one experiment in the background and write its reports to `out_dir`.

    Note: the configuration is passed as text instead of as the parsed ExperimentSpec,
    because the parameters are serialised by huey.

    :param str config_text: TOML configuration
    :param str mode: experiment mode
    :param str out_dir: report directory
    :param bool coarse: quarter the grid and relax tolerances
    :param only: criterion names, for the verify mode
    :param bool dump: also write the sampled fields at the last time
    :returns: the experiment's exit code
    """
    try:
        spec = parse_config(config_text, mode, coarse)
    except ValidationError as e:
        logging.error("Huey task run_experiment_task: invalid configuration: %s"
                      % '; '.join(e.messages))
        return EXIT_IO
    try:
        result = run_experiment(spec, FileReportWriter(out_dir), only, dump)
    except (ValueError, ArithmeticError) as e:
        logging.error("Huey task run_experiment_task: %s failed: %s" % (spec.name, e))
        return EXIT_FAIL
    logging.info("Huey task run_experiment_task: %s finished with exit code %d"
                 % (spec.name, result.exit_code))
    return result.exit_code
