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

_TEST_DIR = os.path.dirname(os.path.abspath(__file__))
DATA_DIR = os.path.join(_TEST_DIR, 'data')
CONFIG_DIR = os.path.join(DATA_DIR, 'configs')


def config_path(name):
    return os.path.join(CONFIG_DIR, name + '.toml')


def read_config(name):
    """ Text of the example configuration tests/data/configs/<name>.toml """
    with open(config_path(name)) as f:
        return f.read()


def assert_relative(testcase, actual, expected, tolerance, msg=None):
    """ Assert |actual - expected| <= tolerance * |expected|. """
    error = abs(actual - expected)
    testcase.assertLessEqual(error, tolerance * abs(expected),
                             msg or "%r differs from %r by %g (relative), tolerance %g"
                             % (actual, expected, error / abs(expected), tolerance))


def csv_rows(text):
    """ Data rows of a report CSV, header comments and column names stripped. """
    lines = [line for line in text.splitlines() if not line.startswith('#')]
    return [line.split(',') for line in lines[1:]]


def csv_header(text):
    return [line[2:] for line in text.splitlines() if line.startswith('# ')]
