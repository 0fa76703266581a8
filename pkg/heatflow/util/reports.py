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
:mod:`heatflow.util.reports`  Helper for writing experiment reports (CSV and YAML files) to a
                              directory, or to a dict in tests
"""

import csv
import io
import numbers
import pathlib
from fractions import Fraction

import yaml


def format_value(value):
    """
    Deterministic text for a report cell: shortest round-trip repr for reals, exact form for
    fractions, lower-case booleans.
    """
    if isinstance(value, bool) or type(value).__name__ == 'bool_':
        return 'true' if value else 'false'
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        return repr(float(value))
    if isinstance(value, (tuple, list)):
        return '(%s)' % ', '.join(format_value(v) for v in value)
    return str(value)


def csv_text(header_lines, columns, rows):
    """
    Format a CSV document: `header_lines` become ``# ``-prefixed comment lines, followed by the
    column names and one line per row.

    :param list header_lines: str
    :param list columns: str
    :param rows: iterable of tuples
    :returns: str
    """
    f = io.StringIO()
    for line in header_lines:
        f.write('# %s\n' % line)
    writer = csv.writer(f, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return f.getvalue()


class BaseReportWriter:
    """
    Destination for the files of one run. Subclasses implement `write_text`; report names are
    relative, given as a string or as a tuple of components.
    """

    def write_text(self, name, content):
        raise NotImplementedError()

    def write_csv(self, name, header_lines, columns, rows):
        """ CSV report, see :func:`csv_text`. """
        self.write_text(name, csv_text(header_lines, columns, rows))

    def write_yaml(self, name, summary):
        """ Run summary as block-style YAML. """
        self.write_text(name, yaml.safe_dump(summary, default_flow_style=False, sort_keys=False))

    @staticmethod
    def relative_name(name):
        parts = name if isinstance(name, tuple) else (name,)
        relative = pathlib.PurePosixPath(*parts)
        if relative.is_absolute():
            raise ValueError("report name must be relative: %s" % relative)
        return relative.as_posix()


class FileReportWriter(BaseReportWriter):
    """ Writes reports below the output directory `root`, creating it on demand. """

    def __init__(self, root):
        self.root = pathlib.Path(root)

    def write_text(self, name, content):
        target = self.root / self.relative_name(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(content)


class DictWriter(BaseReportWriter):
    """ Collects reports in `dict`, keyed by relative name. """

    def __init__(self):
        self.dict = {}

    def write_text(self, name, content):
        self.dict[self.relative_name(name)] = content
