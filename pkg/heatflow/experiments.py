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
:mod:`heatflow.experiments` --- experiment configurations and runners
=====================================================================

An experiment is described by a TOML document (see ``heatflow/tests/data/configs`` for examples)
and parsed into an :class:`ExperimentSpec` with every default resolved. :func:`run_experiment`
dispatches on the mode, writes ``<name>.<mode>.csv`` through a report writer and returns the exit
code: 0 if every check passes, 1 otherwise, 2 if the reports could not be written.

Configuration errors are raised as :class:`django.core.exceptions.ValidationError` with a code
and the offending line in ``params['line']``.
"""

import logging
import math
import re
from collections import namedtuple
from fractions import Fraction

import numpy as np
import toml
from django.conf import settings
from django.core.exceptions import ValidationError

from heatflow.defines import (
    DERIVATIVE_FLOOR,
    DERIVATIVE_TOLERANCE,
    ENDPOINT_TOLERANCE,
    EXIT_FAIL,
    EXIT_IO,
    EXIT_PASS,
    LEMMA_TOLERANCE,
    MAX_TRIPLE_QUADRATURE_POINTS,
    MODE_CONSTANTS,
    MODE_HAUSDORFF_YOUNG,
    MODE_LEMMA,
    MODE_LIMITS,
    MODE_QCURVE,
    MODE_QPRIME,
    MODE_RESIDUAL,
    MODE_VERIFY,
    MODE_WEIGHTED,
    MODES,
    MONOTONICITY_TOLERANCE,
    PLANCHEREL_TOLERANCE,
    RESIDUAL_CONVOLUTION,
    RESIDUAL_GEOMETRIC_MEAN,
    RESIDUAL_KINDS,
    RESIDUAL_TOLERANCE,
    SANDWICH_SLACK,
    WEIGHTED_RESIDUAL_TOLERANCE,
)
from heatflow.exponents import (
    canonical_sigmas,
    complete_p,
    diffusion_rates,
    extended_params,
    sharp_constant,
    young_constant,
)
from heatflow.functionals import (
    PATH_GRID,
    PATH_ORACLE,
    QCurve,
    endpoint_limits,
    flatness,
    hausdorff_young_curve,
    oracle_q_value,
    q_curve,
    q_value,
    weighted_q_curve,
)
from heatflow.gaussian_oracle import (
    AtomicMeasure,
    GaussianMixture,
    HeatFlow,
    IsotropicGaussian,
)
from heatflow.grid_field import (
    RESIDUAL_RESOLUTION_EXPONENT,
    DomainTooSmall,
    GridSpec,
    auto_period,
    check_wraparound,
    dump_field_csv,
    resolution_exponent,
    sample_mixture,
)
from heatflow.monotonicity import (
    closure_residual,
    lemma_main_sides,
    monotonicity_report,
    numeric_dqdt,
    pointwise_closure_residual,
    q_prime_remark,
    weighted_closure_residual,
)
from heatflow.verification import coarse_points, relaxed, verify_suite

QPRIME_STEP = 1e-3  # finite-difference step, relative to t

ALLOWED_KEYS = {
    None: {'name', 'mode', 'dimension', 'grid', 'exponents', 'time', 'tolerances', 'residual',
           'lemma', 'qcurve', 'flow'},
    'grid': {'period', 'points'},
    'exponents': {'p', 'sigma', 'sigma_perturbation', 'alpha', 'rho', 'p_target', 'hausdorff'},
    'time': {'t_min', 't_max', 'count', 'spacing', 'values'},
    'tolerances': {'monotonicity', 'residual', 'flatness', 'relative', 'sandwich'},
    'residual': {'kind'},
    'lemma': {'alpha', 'lambda', 'nodes', 'time'},
    'qcurve': {'path'},
    'flow': {'atoms', 'gaussians'},
}

RELATIVE_TOLERANCES = {
    MODE_QPRIME: DERIVATIVE_TOLERANCE,
    MODE_LEMMA: LEMMA_TOLERANCE,
    MODE_HAUSDORFF_YOUNG: PLANCHEREL_TOLERANCE,
    MODE_LIMITS: ENDPOINT_TOLERANCE,
}

# modes that take flows at the balanced rates of an exponent tuple
CONVOLUTION_MODES = (MODE_QCURVE, MODE_QPRIME, MODE_LIMITS, MODE_CONSTANTS)

_NAME = re.compile(r'^[A-Za-z0-9_.-]+$')
_HEADER = re.compile(r'^\[\[?\s*([A-Za-z_][A-Za-z0-9_-]*)\s*\]\]?')
_KEY = re.compile(r'^([A-Za-z_][A-Za-z0-9_-]*)\s*=')

LemmaSettings = namedtuple('LemmaSettings', ['alphas', 'lambdas', 'nodes', 'time'])
ExperimentResult = namedtuple('ExperimentResult', ['exit_code', 'passed', 'files', 'summary'])


class ExperimentSpec(namedtuple('ExperimentSpec', [
        'name', 'mode', 'dimension', 'grid', 'exponents', 'rates', 'extended', 'p_pair',
        'hausdorff', 'residual_kind', 'path', 'initial', 'flows', 'times', 'lemma',
        'tolerances', 'coarse', 'resolved'])):
    """
    A validated experiment with all defaults filled in.

    `flows` are the HeatFlows actually evolved (rates times the optional perturbation), `rates`
    the balanced rates the checks are stated for. `resolved` holds the ``key=value`` lines echoed
    into every report header.
    """
    __slots__ = ()

    @property
    def csv_name(self):
        return '%s.%s.csv' % (self.name, self.mode)

    @property
    def summary_name(self):
        return '%s.%s.yml' % (self.name, self.mode)


def _error(detail, code, line):
    return ValidationError('line %(line)d: ' + detail.replace('%', '%%'), code=code,
                           params={'line': line})


class _Locator:
    """ Line numbers of keys and table headers in TOML text. """

    def __init__(self, text):
        self.entries = {}
        table, counts = None, {}
        for number, line in enumerate(text.splitlines(), 1):
            stripped = line.strip()
            header = _HEADER.match(stripped)
            if header:
                table = header.group(1)
                counts[table] = counts.get(table, -1) + 1
                self.entries.setdefault((table, counts[table], None), number)
                continue
            key = _KEY.match(stripped)
            if key:
                self.entries.setdefault((table, counts.get(table, 0), key.group(1)), number)

    def line(self, table=None, key=None, occurrence=0):
        return (self.entries.get((table, occurrence, key))
                or self.entries.get((table, occurrence, None))
                or 1)


class _Reader:
    """ Typed access to the parsed document; every error names its line. """

    def __init__(self, data, locator):
        self.data = data
        self.locator = locator

    def error(self, detail, code, table=None, key=None, occurrence=0):
        return _error(detail, code, self.locator.line(table, key, occurrence))

    def get(self, table, key, occurrence=0):
        if table is None:
            return self.data.get(key)
        if table == 'flow':
            return self.data['flow'][occurrence].get(key)
        return self.data.get(table, {}).get(key)

    def has(self, table, key):
        return self.get(table, key) is not None

    def string(self, table, key, default=None, choices=None):
        value = self.get(table, key)
        if value is None:
            return default
        if not isinstance(value, str):
            raise self.error("'%s' must be a string" % key, 'invalid', table, key)
        if choices is not None and value not in choices:
            raise self.error("'%s' must be one of %s, got '%s'" % (key, ', '.join(choices), value),
                             'invalid', table, key)
        return value

    def integer(self, table, key, default=None):
        value = self.get(table, key)
        if value is None:
            return default
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error("'%s' must be an integer, got %r" % (key, value), 'malformed_number',
                             table, key)
        return value

    def _number(self, value, table, key, occurrence=0, exact=False):
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise self.error("malformed number %r in '%s'" % (value, key), 'malformed_number',
                             table, key, occurrence)
        if isinstance(value, str):
            try:
                value = Fraction(value.strip())
            except (ValueError, ZeroDivisionError):
                raise self.error("malformed number '%s' in '%s'" % (value, key),
                                 'malformed_number', table, key, occurrence)
        if exact:
            return value
        return float(value)

    def number(self, table, key, default=None, exact=False):
        value = self.get(table, key)
        if value is None:
            return default
        return self._number(value, table, key, exact=exact)

    def numbers(self, table, key, default=None, exact=False, occurrence=0):
        value = self.get(table, key, occurrence)
        if value is None:
            return default
        if not isinstance(value, list):
            raise self.error("'%s' must be a list" % key, 'invalid', table, key, occurrence)
        return tuple(self._number(v, table, key, occurrence, exact) for v in value)

    def rows(self, table, key, width, occurrence=0):
        value = self.get(table, key, occurrence)
        if not isinstance(value, list) or not value:
            raise self.error("'%s' must be a nonempty list of rows" % key, 'invalid', table, key,
                             occurrence)
        rows = []
        for row in value:
            if not isinstance(row, list) or len(row) != width:
                raise self.error("rows of '%s' need %d entries, got %r" % (key, width, row),
                                 'invalid', table, key, occurrence)
            rows.append(tuple(self._number(v, table, key, occurrence) for v in row))
        return rows


def _check_keys(data, locator):
    for key, value in data.items():
        if key not in ALLOWED_KEYS[None]:
            line = locator.line(key) if isinstance(value, (dict, list)) else locator.line(None, key)
            raise _error("unknown key '%s'" % key, 'unknown_key', line)
        if key not in ALLOWED_KEYS:
            continue
        tables = value if key == 'flow' else [value]
        if not isinstance(value, list if key == 'flow' else dict) or \
                not all(isinstance(table, dict) for table in tables):
            raise _error("'%s' must be a table" % key, 'invalid', locator.line(key))
        for i, table in enumerate(tables):
            for inner in table:
                if inner not in ALLOWED_KEYS[key]:
                    raise _error("unknown key '%s' in [%s]" % (inner, key), 'unknown_key',
                                 locator.line(key, inner, i))


def _resolve_mode(reader, mode):
    config_mode = reader.string(None, 'mode')
    if mode is None:
        mode = config_mode
    elif config_mode is not None and config_mode != mode:
        raise reader.error("configuration is for mode '%s', not '%s'" % (config_mode, mode),
                           'invalid', None, 'mode')
    if mode is None:
        raise _error("no mode given", 'missing', 1)
    if mode not in MODES:
        raise reader.error("unknown mode '%s'" % mode, 'invalid', None, 'mode')
    return mode


def _exponent_tuple(reader):
    p_list = reader.numbers('exponents', 'p', exact=True)
    if p_list is None:
        raise reader.error("missing exponents 'p'", 'missing', 'exponents')
    try:
        exponents = complete_p(p_list)
    except ValueError as e:
        raise reader.error(str(e), 'inadmissible_exponents', 'exponents', 'p')
    target = reader.number('exponents', 'p_target', exact=True)
    if target is not None and abs(float(target) - float(exponents.p)) > 1e-12 * float(exponents.p):
        raise reader.error("p_target %s does not solve the scaling relation, p = %s"
                           % (target, exponents.p), 'inadmissible_exponents', 'exponents',
                           'p_target')
    sigma = reader.numbers('exponents', 'sigma', exact=True)
    try:
        rates = canonical_sigmas(exponents) if sigma is None else diffusion_rates(exponents, sigma)
    except ValueError as e:
        raise reader.error(str(e), 'inadmissible_exponents', 'exponents', 'sigma')
    return exponents, rates


def _weighted_params(reader, dimension):
    alphas = reader.numbers('exponents', 'alpha', exact=True)
    rhos = reader.numbers('exponents', 'rho', exact=True)
    p = reader.number('exponents', 'p_target', exact=True)
    if alphas is None or rhos is None or p is None:
        raise reader.error("the weighted mode needs 'alpha', 'rho' and 'p_target'", 'missing',
                           'exponents')
    if len(alphas) != 2 or len(rhos) != 2:
        raise reader.error("'alpha' and 'rho' take two values", 'inadmissible_exponents',
                           'exponents', 'alpha')
    try:
        return extended_params(alphas[0], alphas[1], rhos[0], rhos[1], p, dimension)
    except ValueError as e:
        raise reader.error(str(e), 'inadmissible_exponents', 'exponents', 'alpha')


def _hoelder_pair(reader):
    pair = reader.numbers('exponents', 'p', exact=True)
    if pair is None or len(pair) != 2:
        raise reader.error("the geometric mean needs two exponents 'p'", 'missing', 'exponents')
    if any(not p > 1 for p in pair) or abs(sum(1 / float(p) for p in pair) - 1) > 1e-12:
        raise reader.error("geometric mean exponents need 1/p1 + 1/p2 = 1, got %s, %s" % pair,
                           'inadmissible_exponents', 'exponents', 'p')
    return pair


def _datum(reader, i, dimension):
    table = reader.data['flow'][i]
    if ('atoms' in table) == ('gaussians' in table):
        raise reader.error("a flow needs exactly one of 'atoms' and 'gaussians'", 'invalid',
                           'flow', None, i)
    key = 'atoms' if 'atoms' in table else 'gaussians'
    try:
        if key == 'atoms':
            rows = reader.rows('flow', key, dimension + 1, i)
            return AtomicMeasure([(row[:-1], row[-1]) for row in rows])
        rows = reader.rows('flow', key, dimension + 2, i)
        return GaussianMixture(IsotropicGaussian(row[0], row[1], row[2:]) for row in rows)
    except ValueError as e:
        raise reader.error(str(e), 'invalid', 'flow', key, i)


def _times(reader):
    values = reader.numbers('time', 'values')
    if values is not None:
        if not values or values[0] <= 0 or any(b <= a for a, b in zip(values, values[1:])):
            raise reader.error("time values must be positive and strictly increasing", 'invalid',
                               'time', 'values')
        return values
    conf = settings.HEATFLOW
    t_min = reader.number('time', 't_min', conf['DEFAULT_T_MIN'])
    t_max = reader.number('time', 't_max', conf['DEFAULT_T_MAX'])
    count = reader.integer('time', 'count', conf['DEFAULT_TIME_COUNT'])
    spacing = reader.string('time', 'spacing', conf['DEFAULT_SPACING'], ('log', 'linear'))
    if not 0 < t_min < t_max:
        raise reader.error("need 0 < t_min < t_max, got %r, %r" % (t_min, t_max), 'invalid',
                           'time', 't_min')
    if count < 2:
        raise reader.error("a time grid needs at least two points", 'invalid', 'time', 'count')
    if spacing == 'log':
        return tuple(float(t) for t in np.geomspace(t_min, t_max, count))
    return tuple(float(t) for t in np.linspace(t_min, t_max, count))


def _tolerances(reader, mode, coarse):
    defaults = {
        'monotonicity': MONOTONICITY_TOLERANCE,
        'residual': WEIGHTED_RESIDUAL_TOLERANCE if mode == MODE_WEIGHTED else RESIDUAL_TOLERANCE,
        'relative': RELATIVE_TOLERANCES.get(mode, DERIVATIVE_TOLERANCE),
        'sandwich': SANDWICH_SLACK,
        'flatness': None,
    }
    tolerances = {}
    for key, default in defaults.items():
        value = reader.number('tolerances', key, default)
        if value is not None and not value >= 0:
            raise reader.error("tolerance '%s' must be nonnegative" % key, 'invalid',
                               'tolerances', key)
        tolerances[key] = relaxed(value) if coarse and value is not None else value
    return tolerances


def _flow_count(mode, exponents):
    if mode in (MODE_CONSTANTS, MODE_VERIFY):
        return 0
    if mode == MODE_HAUSDORFF_YOUNG:
        return 1
    if exponents is not None:
        return exponents.n
    return 2


def _base_sigmas(count, rates, params):
    if rates is not None:
        return list(rates.sigma_list)
    if params is not None:
        return list(params.sigmas)
    return [1] * count


def _factor_powers(count, exponents, params, p_pair):
    """ Powers the flows enter the checked quantity with. """
    if exponents is not None:
        return exponents.powers
    if params is not None:
        return params.alphas
    if p_pair is not None:
        return tuple(1 / Fraction(p) for p in p_pair)
    return (1,) * count


def _check_residual_resolution(reader, flows, powers, spec, earliest):
    exponent = min(resolution_exponent(f.at(earliest), spec, float(s))
                   for f, s in zip(flows, powers))
    if exponent < RESIDUAL_RESOLUTION_EXPONENT:
        raise reader.error("grid spacing %g under-resolves the flows at t=%r for spectral "
                           "derivatives (exp(-%.1f), need exp(-%.0f)); raise grid.points or the "
                           "earliest time" % (spec.spacing, earliest, exponent,
                                               RESIDUAL_RESOLUTION_EXPONENT),
                           'invalid', 'grid', 'points')


def _grid(reader, mode, dimension, flows, initial, reference_time, coarse, resolved,
          powers=None, earliest=None):
    conf = settings.HEATFLOW
    points = reader.integer('grid', 'points', conf['DEFAULT_POINTS'])
    if coarse:
        points = coarse_points(points)
    period = reader.number('grid', 'period')
    snapshots = [f.at(reference_time) for f in flows]
    snapshots += [d for d in initial if isinstance(d, GaussianMixture)] if mode == MODE_LIMITS \
        else []
    if period is None:
        period = auto_period(snapshots)
        resolved.append('grid.period=%r (auto: 4*(M + k*sqrt(s_max)) at t=%r)'
                        % (period, reference_time))
    else:
        resolved.append('grid.period=%r' % period)
    try:
        spec = GridSpec(dimension, period, points)
    except ValueError as e:
        raise reader.error(str(e), 'invalid', 'grid', 'points')
    try:
        for m in snapshots:
            check_wraparound(m, spec)
    except DomainTooSmall as e:
        raise reader.error(str(e), 'invalid', 'grid', 'period')
    if mode in (MODE_RESIDUAL, MODE_WEIGHTED) and not coarse:
        _check_residual_resolution(reader, flows, powers, spec, earliest)
    if mode in (MODE_QPRIME, MODE_LEMMA) and points > MAX_TRIPLE_QUADRATURE_POINTS:
        raise reader.error("mode %s needs N <= %d, got %d"
                           % (mode, MAX_TRIPLE_QUADRATURE_POINTS, points), 'invalid', 'grid',
                           'points')
    resolved.append('grid.points=%d' % points)
    return spec


def _lemma(reader):
    alphas = reader.numbers('lemma', 'alpha', (Fraction(1, 2), Fraction(1, 2)))
    lambdas = reader.numbers('lemma', 'lambda', (1.0, 1.0))
    nodes = reader.numbers('lemma', 'nodes', (0.0,))
    time = reader.number('lemma', 'time', 1.0)
    if len(alphas) != 2 or len(lambdas) != 2 or any(not a > 0 for a in alphas) \
            or any(not v >= 0 for v in lambdas):
        raise reader.error("'alpha' takes two positive and 'lambda' two nonnegative values",
                           'invalid', 'lemma')
    if not nodes or not time > 0:
        raise reader.error("'nodes' must be nonempty and 'time' positive", 'invalid', 'lemma')
    return LemmaSettings(tuple(float(a) for a in alphas), lambdas, nodes, time)


def parse_config(text, mode=None, coarse=False):
    """
    Parse and validate an experiment configuration.

    :param str text: TOML document
    :param str mode: mode requested on the command line; if the document names a mode, both must
        agree
    :param bool coarse: quarter the grid and relax tolerances
    :returns: ExperimentSpec
    :raises ValidationError: code 'syntax', 'unknown_key', 'malformed_number',
        'inadmissible_exponents', 'missing' or 'invalid', with params['line']
    """
    locator = _Locator(text)
    try:
        data = toml.loads(text)
    except toml.TomlDecodeError as e:
        raise _error(e.msg, 'syntax', e.lineno)
    _check_keys(data, locator)
    reader = _Reader(data, locator)

    mode = _resolve_mode(reader, mode)
    name = reader.string(None, 'name', 'experiment')
    if not _NAME.match(name):
        raise reader.error("name '%s' is not a valid file name stem" % name, 'invalid', None,
                           'name')
    dimension = reader.integer(None, 'dimension', 1)
    if dimension not in (1, 2):
        raise reader.error("dimension must be 1 or 2, got %d" % dimension, 'invalid', None,
                           'dimension')
    resolved = ['name=%s' % name, 'mode=%s' % mode, 'dimension=%d' % dimension]

    residual_kind = reader.string('residual', 'kind', RESIDUAL_CONVOLUTION, RESIDUAL_KINDS)
    path = reader.string('qcurve', 'path', PATH_GRID, (PATH_GRID, PATH_ORACLE))
    exponents = rates = params = p_pair = hausdorff = lemma = None
    if mode in CONVOLUTION_MODES or mode == MODE_RESIDUAL and residual_kind == RESIDUAL_CONVOLUTION:
        exponents, rates = _exponent_tuple(reader)
        resolved += ['exponents=%s' % (exponents,), 'regime=%+d' % exponents.regime,
                     'sigma=(%s)' % ', '.join(str(s) for s in rates.sigma_list),
                     'sigma_eff=%s' % rates.sigma_eff]
    elif mode == MODE_RESIDUAL and residual_kind == RESIDUAL_GEOMETRIC_MEAN:
        p_pair = _hoelder_pair(reader)
        resolved.append('p=(%s, %s)' % p_pair)
    elif mode == MODE_WEIGHTED:
        params = _weighted_params(reader, dimension)
        resolved += ['alpha=(%s, %s)' % params.alphas, 'rho=(%s, %s)' % (params.rho1, params.rho2),
                     'p=%s' % params.p, 'sigma=(%s, %s)' % params.sigmas,
                     'sigma_eff=%s' % params.sigma_eff, 'beta=%s' % params.beta,
                     'lambda=(%s, %s)' % (params.lambda1, params.lambda2)]
    elif mode == MODE_HAUSDORFF_YOUNG:
        hausdorff = reader.integer('exponents', 'hausdorff', 4)
        if hausdorff < 2 or hausdorff % 2:
            raise reader.error("the Hausdorff-Young exponent must be an even integer >= 2",
                               'inadmissible_exponents', 'exponents', 'hausdorff')
        resolved.append('hausdorff=%d' % hausdorff)
    elif mode == MODE_LEMMA:
        lemma = _lemma(reader)
        resolved += ['lemma.alpha=(%r, %r)' % lemma.alphas,
                     'lemma.lambda=(%r, %r)' % lemma.lambdas,
                     'lemma.nodes=(%s)' % ', '.join('%r' % x for x in lemma.nodes),
                     'lemma.time=%r' % lemma.time]
    if mode == MODE_RESIDUAL:
        resolved.append('residual.kind=%s' % residual_kind)
    if mode == MODE_QCURVE:
        resolved.append('path=%s' % path)
    if mode in (MODE_QPRIME, MODE_LEMMA) and dimension != 1:
        raise reader.error("mode %s is implemented for dimension 1" % mode, 'invalid', None,
                           'dimension')
    if mode == MODE_QPRIME and exponents.n != 2:
        raise reader.error("mode qprime takes two exponents", 'inadmissible_exponents',
                           'exponents', 'p')

    count = _flow_count(mode, exponents)
    given = len(data.get('flow', [])) if mode not in (MODE_CONSTANTS, MODE_VERIFY) else 0
    if given != count:
        code = 'missing' if given < count else 'invalid'
        line = locator.line('flow', None, given - 1) if given else 1
        raise _error("mode %s needs %d [[flow]] tables, got %d" % (mode, count, given), code,
                     line)
    initial = tuple(_datum(reader, i, dimension) for i in range(count))
    for i, datum in enumerate(initial):
        if datum.dimension != dimension:
            raise reader.error("flow of dimension %d in a %d-dimensional experiment"
                               % (datum.dimension, dimension), 'invalid', 'flow', None, i)
        if mode == MODE_LIMITS and isinstance(datum, AtomicMeasure):
            raise reader.error("limits need Gaussian mixture data, not atoms", 'invalid', 'flow',
                               'atoms', i)
        size = len(datum.atoms) if isinstance(datum, AtomicMeasure) else len(datum.terms)
        if mode == MODE_QCURVE and path == PATH_ORACLE and size != 1:
            raise reader.error("the oracle path needs one atom or one Gaussian per flow",
                               'invalid', 'flow', None, i)
        resolved.append('flow.%d=%r' % (i, datum))

    perturbation = reader.numbers('exponents', 'sigma_perturbation')
    if perturbation is not None:
        if mode not in (MODE_QCURVE, MODE_QPRIME, MODE_WEIGHTED, MODE_LIMITS) and \
                not (mode == MODE_RESIDUAL and residual_kind == RESIDUAL_CONVOLUTION):
            raise reader.error("sigma_perturbation is not supported in mode %s" % mode,
                               'invalid', 'exponents', 'sigma_perturbation')
        if len(perturbation) != count or any(not f > 0 for f in perturbation):
            raise reader.error("sigma_perturbation needs %d positive factors" % count, 'invalid',
                               'exponents', 'sigma_perturbation')
        resolved.append('sigma_perturbation=(%s)' % ', '.join('%r' % f for f in perturbation))
    else:
        perturbation = (1.0,) * count
    try:
        flows = tuple(HeatFlow(datum, float(s) * f) for datum, s, f in
                      zip(initial, _base_sigmas(count, rates, params), perturbation))
    except ValueError as e:
        raise reader.error(str(e), 'invalid', 'flow')

    times = ()
    if mode not in (MODE_CONSTANTS, MODE_VERIFY, MODE_LEMMA):
        times = _times(reader)
        resolved.append('times=(%s)' % ', '.join('%r' % t for t in times))
    grid = None
    if flows:
        if mode == MODE_LEMMA:
            reference_time = lemma.time
        elif mode == MODE_QPRIME:
            reference_time = times[-1] * (1 + QPRIME_STEP)
        else:
            reference_time = times[-1]
        grid = _grid(reader, mode, dimension, flows, initial, reference_time, coarse, resolved,
                     _factor_powers(count, exponents, params, p_pair), times[0] if times else None)

    tolerances = _tolerances(reader, mode, coarse)
    resolved += ['tolerance.%s=%r' % (k, v) for k, v in sorted(tolerances.items())
                 if v is not None]
    resolved.append('coarse=%s' % ('true' if coarse else 'false'))
    return ExperimentSpec(name, mode, dimension, grid, exponents, rates, params, p_pair,
                          hausdorff, residual_kind, path, initial, flows, times, lemma,
                          tolerances, bool(coarse), tuple(resolved))


def residual_columns(dimension):
    columns = ['experiment', 'kind', 'min_residual', 'tolerance', 'pass', 't', 'x', 'y']
    return columns[:6 + dimension]


def residual_row(experiment, report, dimension):
    location = tuple(report.location) if report.location is not None else ('',) * dimension
    time = report.time if report.time is not None else ''
    return (experiment, report.kind, report.min_residual, report.tolerance, report.passed,
            time) + location


def _summary(label, report):
    return ('%s: min %r, tolerance %r, %s'
            % (label, report.min_residual, report.tolerance, 'pass' if report.passed else 'FAIL'))


def _run_qcurve(spec, writer):
    curve = q_curve(spec.initial, spec.exponents, spec.rates._replace(
        sigma_list=tuple(f.sigma for f in spec.flows)), times=spec.times, spec=spec.grid,
        experiment=spec.name, path=spec.path)
    report = monotonicity_report(curve, spec.exponents.regime, spec.tolerances['monotonicity'])
    summary = [_summary('monotonicity', report)]
    passed = report.passed
    if spec.tolerances['flatness'] is not None:
        variation = flatness(curve)
        flat = variation <= spec.tolerances['flatness']
        summary.append('flatness: %r, tolerance %r, %s'
                       % (variation, spec.tolerances['flatness'], 'pass' if flat else 'FAIL'))
        passed = passed and flat
    writer.write_csv(spec.csv_name, [curve.header()] + list(spec.resolved) + summary,
                     ['t', 'Q'], curve.rows())
    return passed, [spec.csv_name], summary


def _run_qprime(spec, writer):
    exponents, grid = spec.exponents, spec.grid

    def q_at(t):
        return q_value([sample_mixture(f.at(t), grid) for f in spec.flows], exponents)

    rows, passed = [], True
    for t in spec.times:
        remark = q_prime_remark(spec.flows[0].at(t), spec.flows[1].at(t), exponents, spec.rates,
                                grid)
        step = QPRIME_STEP * t
        q = q_at(t)
        around = QCurve((t - step, t, t + step), (q_at(t - step), q, q_at(t + step)), None)
        numeric = numeric_dqdt(around, 1)
        error = abs(remark - numeric) / abs(numeric) if abs(numeric) > DERIVATIVE_FLOOR * q \
            else 0.0
        passed = (passed and exponents.epsilon * remark >= -DERIVATIVE_FLOOR * q
                  and error <= spec.tolerances['relative'])
        rows.append((t, q, remark, numeric, error))
    summary = ['derivative: worst relative error %r, tolerance %r, %s'
               % (max(r[-1] for r in rows), spec.tolerances['relative'],
                  'pass' if passed else 'FAIL')]
    writer.write_csv(spec.csv_name, list(spec.resolved) + summary,
                     ['t', 'Q', 'dQ_remark', 'dQ_numeric', 'rel_err'], rows)
    return passed, [spec.csv_name], summary


def _run_residual(spec, writer):
    tolerance = spec.tolerances['residual']
    if spec.residual_kind == RESIDUAL_CONVOLUTION:
        report = closure_residual(spec.flows, spec.exponents, spec.rates, spec.grid, spec.times,
                                  tolerance=tolerance)
    else:
        p1, p2 = spec.p_pair or (None, None)
        report = pointwise_closure_residual(spec.residual_kind, spec.flows, p1, p2, spec.grid,
                                            spec.times, tolerance)
    summary = [_summary(spec.residual_kind, report)]
    writer.write_csv(spec.csv_name, list(spec.resolved) + summary,
                     residual_columns(spec.dimension),
                     [residual_row(spec.name, report, spec.dimension)])
    return report.passed, [spec.csv_name], summary


def _run_weighted(spec, writer):
    params = spec.extended
    curve_params = params._replace(sigma1=spec.flows[0].sigma, sigma2=spec.flows[1].sigma)
    curve = weighted_q_curve(spec.initial, curve_params, spec.times, spec.grid, spec.name)
    monotone = monotonicity_report(curve, 1, spec.tolerances['monotonicity'])
    result = weighted_closure_residual(spec.flows, params, spec.grid, spec.times,
                                       spec.tolerances['residual'])
    reports = [monotone, result.heat, result.log_convexity, result.hypothesis]
    summary = [_summary(r.kind, r) for r in reports]
    files = [spec.csv_name, '%s.weighted-curve.csv' % spec.name]
    writer.write_csv(files[0], list(spec.resolved) + summary, residual_columns(spec.dimension),
                     [residual_row(spec.name, r, spec.dimension) for r in reports])
    writer.write_csv(files[1], [curve.header()] + list(spec.resolved), ['t', 'Q'], curve.rows())
    return all(r.passed for r in reports), files, summary


def _run_lemma(spec, writer):
    grid, lemma = spec.grid, spec.lemma
    u1, u2 = [f.at(lemma.time) for f in spec.flows]
    rows, passed = [], True
    for x in lemma.nodes:
        node = int(round((x + grid.period / 2) / grid.spacing)) % grid.points
        sides = lemma_main_sides(u1, u2, lemma.alphas[0], lemma.alphas[1], lemma.lambdas[0],
                                 lemma.lambdas[1], node, grid)
        relative = abs(sides.lhs - sides.rhs) / sides.scale if sides.scale > 0 \
            else abs(sides.lhs - sides.rhs)
        passed = passed and relative <= spec.tolerances['relative']
        rows.append((grid.coordinates[node], sides.lhs, sides.rhs, relative))
    summary = ['quadratic form: worst relative residual %r, tolerance %r, %s'
               % (max(r[-1] for r in rows), spec.tolerances['relative'],
                  'pass' if passed else 'FAIL')]
    writer.write_csv(spec.csv_name, list(spec.resolved) + summary,
                     ['x', 'lhs', 'rhs', 'relative_residual'], rows)
    return passed, [spec.csv_name], summary


def _run_hausdorff_young(spec, writer):
    curve, fourier = hausdorff_young_curve(spec.flows[0], spec.hausdorff, spec.times, spec.grid,
                                           spec.name)
    report = monotonicity_report(curve, 1, spec.tolerances['monotonicity'])
    plancherel = max(abs(v - f) / v for v, f in zip(curve.values, fourier))
    agree = plancherel <= spec.tolerances['relative']
    summary = [_summary('monotonicity', report),
               'plancherel: %r, tolerance %r, %s'
               % (plancherel, spec.tolerances['relative'], 'pass' if agree else 'FAIL')]
    writer.write_csv(spec.csv_name, [curve.header()] + list(spec.resolved) + summary,
                     ['t', 'value', 'fourier_value'],
                     [(t, v, f) for (t, v), f in zip(curve.rows(), fourier)])
    return report.passed and agree, [spec.csv_name], summary


def _run_limits(spec, writer):
    rates = spec.rates._replace(sigma_list=tuple(f.sigma for f in spec.flows))
    curve = q_curve(spec.initial, spec.exponents, rates, times=spec.times, spec=spec.grid,
                    experiment=spec.name)
    limits = endpoint_limits(spec.initial, spec.exponents, spec.rates, spec.grid)
    slack, tolerance = spec.tolerances['sandwich'], spec.tolerances['relative']
    low, high = sorted((limits.q_zero, limits.q_infinity))
    sandwiched = all(low * (1 - slack) <= q <= high * (1 + slack) for q in curve.values)
    distance = max(abs(curve.values[0] - limits.q_zero) / limits.q_zero,
                   abs(curve.values[-1] - limits.q_infinity) / limits.q_infinity)
    summary = ['limits: Q(0)=%r, Q(inf)=%r' % limits,
               'sandwich: %s' % ('pass' if sandwiched else 'FAIL'),
               'endpoints: relative distance %r, tolerance %r, %s'
               % (distance, tolerance, 'pass' if distance <= tolerance else 'FAIL')]
    rows = [(0.0, limits.q_zero)] + list(curve.rows()) + [(math.inf, limits.q_infinity)]
    writer.write_csv(spec.csv_name, [curve.header()] + list(spec.resolved) + summary,
                     ['t', 'Q'], rows)
    return sandwiched and distance <= tolerance, [spec.csv_name], summary


def _run_constants(spec, writer):
    t, rates = spec.exponents, spec.rates
    constant = young_constant(t, spec.dimension)
    rows = [('p', t.p)]
    rows += [('p_%d' % (j + 1), pj) for j, pj in enumerate(t.p_list)]
    rows += [('sigma_%d' % (j + 1), s) for j, s in enumerate(rates.sigma_list)]
    rows += [('sigma_eff', rates.sigma_eff), ('regime', t.regime)]
    rows += [('C_p_%d' % (j + 1), sharp_constant(pj)) for j, pj in enumerate(t.p_list)]
    rows += [('C_p', sharp_constant(t.p)), ('young_constant', constant)]
    passed = True
    if all(s > 0 for s in rates.sigma_list):
        atom = AtomicMeasure([((0.0,) * spec.dimension, 1.0)])
        mixtures = [HeatFlow(atom, s).at(1.0) for s in rates.sigma_list]
        oracle = oracle_q_value(mixtures, t.powers, t.p)
        rows.append(('gaussian_q', oracle))
        passed = abs(oracle - constant) <= 1e-10 * constant
    summary = ['p=%s' % t.p,
               'sigma=(%s)' % ', '.join('%r' % float(s) for s in rates.sigma_list),
               'sigma_eff=%r' % float(rates.sigma_eff),
               'young_constant=%.6f' % constant]
    writer.write_csv(spec.csv_name, list(spec.resolved), ['quantity', 'value'], rows)
    return passed, [spec.csv_name], summary


RUNNERS = {
    MODE_QCURVE: _run_qcurve,
    MODE_QPRIME: _run_qprime,
    MODE_RESIDUAL: _run_residual,
    MODE_WEIGHTED: _run_weighted,
    MODE_LEMMA: _run_lemma,
    MODE_HAUSDORFF_YOUNG: _run_hausdorff_young,
    MODE_LIMITS: _run_limits,
    MODE_CONSTANTS: _run_constants,
}


def _run_verify(spec, writer, only):
    suite = verify_suite(spec.coarse, only, writer, spec.resolved)
    summary = ['%-24s %-12.3e %-10.1e %s'
               % (r.name, r.measured, r.tolerance, 'pass' if r.passed else 'FAIL')
               for r in suite.results]
    return suite.exit_code == EXIT_PASS, ['verify.csv'], summary


def _dump_fields(spec, writer):
    """ Each sampled flow at the last time of the experiment, as ``<name>.field-<j>.csv``. """
    if spec.grid is None or not spec.flows or not spec.times:
        logging.warning("experiment %s: mode %s samples no fields to dump"
                        % (spec.name, spec.mode))
        return []
    t = spec.times[-1]
    names = []
    for j, flow in enumerate(spec.flows, 1):
        name = '%s.field-%d.csv' % (spec.name, j)
        field = sample_mixture(flow.at(t), spec.grid)
        writer.write_text(name, dump_field_csv(field, '%s t=%r' % (spec.name, float(t))))
        names.append(name)
    return names


def run_experiment(spec, writer, only=None, dump=False):
    """
    Run an experiment and write its reports.

    :param ExperimentSpec spec:
    :param BaseReportWriter writer:
    :param only: criterion names, for the verify mode
    :param bool dump: also write the sampled fields at the last time
    :returns: ExperimentResult
    """
    logging.info("experiment %s: mode %s" % (spec.name, spec.mode))
    try:
        if spec.mode == MODE_VERIFY:
            passed, files, summary = _run_verify(spec, writer, only)
        else:
            passed, files, summary = RUNNERS[spec.mode](spec, writer)
        if dump:
            files = list(files) + _dump_fields(spec, writer)
        exit_code = EXIT_PASS if passed else EXIT_FAIL
        writer.write_yaml(spec.summary_name, {
            'experiment': spec.name, 'mode': spec.mode, 'passed': bool(passed),
            'exit_code': exit_code, 'reports': list(files), 'summary': list(summary),
        })
    except OSError as e:
        logging.error("experiment %s: writing reports failed: %s" % (spec.name, e))
        return ExperimentResult(EXIT_IO, False, [], ['cannot write reports: %s' % e])
    logging.info("experiment %s: %s" % (spec.name, 'pass' if passed else 'fail'))
    return ExperimentResult(exit_code, passed, files, summary)
