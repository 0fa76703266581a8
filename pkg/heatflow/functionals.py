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
:mod:`heatflow.functionals` --- convolution functionals of heat flows
=====================================================================

Q(t) = t^beta |u_1^{1/p_1} * ... * u_n^{1/p_n}|_p for heat flows u_j of rates sigma_j, its
weighted two-flow variant, the Hausdorff-Young quantity and the t -> 0 / t -> infinity limits.

Flows are always evolved exactly (closed form) and then sampled; no time-stepping error enters Q.
"""

import logging
import math
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from heatflow.exponents import complete_p, young_constant
from heatflow.gaussian_oracle import (
    AtomicMeasure,
    HeatFlow,
    convolve_gaussians,
    gaussian_lp_norm,
    gaussian_power,
    mixture_mass,
)
from heatflow.grid_field import (
    GridField,
    check_resolution,
    check_wraparound,
    fft_convolve,
    fourier_lp_norm,
    grid_lp_norm,
    sample_mixture,
)

PATH_GRID = 'grid'
PATH_ORACLE = 'oracle'

CurveMeta = namedtuple('CurveMeta', ['experiment', 'label', 'sigmas', 'beta', 'n', 'dimension',
                                     'grid', 'path'])

EndpointLimits = namedtuple('EndpointLimits', ['q_zero', 'q_infinity'])


class QCurve(namedtuple('QCurve', ['times', 'values', 'meta'])):
    """
    Samples of Q on a strictly increasing time grid.
    """
    __slots__ = ()

    def __new__(cls, times, values, meta):
        times, values = tuple(float(t) for t in times), tuple(float(v) for v in values)
        if len(times) != len(values):
            raise ValueError("%d times but %d values" % (len(times), len(values)))
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        if any(not v > 0 for v in values):
            raise ValueError("Q must be positive")
        return super().__new__(cls, times, values, meta)

    def differences(self):
        return [b - a for a, b in zip(self.values, self.values[1:])]

    def header(self):
        meta = self.meta
        sigma = '(%s)' % ', '.join('%r' % float(s) for s in meta.sigmas)
        if meta.grid is None:
            grid = 'L=- N=-'
        else:
            grid = 'L=%r N=%d' % (meta.grid.period, meta.grid.points)
        return ('experiment=%s n=%d p=%s sigma=%s beta=%r d=%d %s'
                % (meta.experiment, meta.n, meta.label, sigma, float(meta.beta), meta.dimension,
                   grid))

    def rows(self):
        return zip(self.times, self.values)


def flatness(curve):
    """ Maximal relative variation (max Q - min Q)/mean Q. """
    values = np.array(curve.values)
    return float((values.max() - values.min()) / values.mean())


def _check_fields(fields):
    if not fields:
        raise ValueError("no fields given")
    spec = fields[0].spec
    if any(f.spec != spec for f in fields):
        raise ValueError("fields live on different grids")
    # GridField holds finite nonnegative values; zeros from underflow are fine
    if any(not f.values.max() > 0 for f in fields):
        raise ValueError("field vanishes identically")


def convolution_power_norm(fields, powers, p):
    """
    |f_1^{s_1} * ... * f_n^{s_n}|_p with convolutions evaluated left to right.
    """
    _check_fields(fields)
    powered = [GridField(f.spec, f.values ** float(s)) for f, s in zip(fields, powers)]
    acc = powered[0]
    for g in powered[1:]:
        acc = fft_convolve(acc, g)
    return grid_lp_norm(acc, p)


def q_value(fields, exponents, rates=None, beta=0, time=1.0):
    """
    time^beta |u_1^{1/p_1} * ... * u_n^{1/p_n}|_p.

    :param list fields: GridField per flow, sampled at `time`
    :param ExponentTuple exponents:
    :param DiffusionRates rates: optional, only checked for consistency
    """
    if len(fields) != exponents.n:
        raise ValueError("%d fields given for %d exponents" % (len(fields), exponents.n))
    if rates is not None and len(rates.sigma_list) != exponents.n:
        raise ValueError("rates do not match the exponents")
    return time ** float(beta) * convolution_power_norm(fields, exponents.powers, exponents.p)


def oracle_q_value(mixtures, powers, p):
    """
    Exact |m_1^{s_1} * ... * m_n^{s_n}|_p for single-term mixtures.
    """
    if any(len(m.terms) != 1 for m in mixtures):
        raise ValueError("the oracle path needs single-term data")
    acc = gaussian_power(mixtures[0].terms[0], float(powers[0]))
    for m, s in zip(mixtures[1:], powers[1:]):
        acc = convolve_gaussians(acc, gaussian_power(m.terms[0], float(s)))
    return gaussian_lp_norm(acc, float(p))


def _check_times(times):
    times = [float(t) for t in times]
    if not times:
        raise ValueError("empty time grid")
    if times[0] <= 0:
        raise ValueError("times must be positive")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be strictly increasing")
    return times


def _prepare_grid(flows, powers, times, spec):
    """ Wraparound check at the latest time, resolution warning at the earliest. """
    for flow in flows:
        check_wraparound(flow.at(times[-1]), spec)
    for flow, s in zip(flows, powers):
        check_resolution(flow.at(times[0]), spec, float(s))


def _evaluate(function, times, max_workers):
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            return list(executor.map(function, times))
    return [function(t) for t in times]


def _curve(flows, powers, p, beta, times, spec, path, max_workers):
    times = _check_times(times)
    if path == PATH_ORACLE:
        def sample(t):
            return t ** float(beta) * oracle_q_value([f.at(t) for f in flows], powers, p)
    elif path == PATH_GRID:
        if spec is None:
            raise ValueError("the grid path needs a GridSpec")
        _prepare_grid(flows, powers, times, spec)

        def sample(t):
            fields = [sample_mixture(f.at(t), spec) for f in flows]
            return t ** float(beta) * convolution_power_norm(fields, powers, p)
    else:
        raise ValueError("unknown path '%s'" % path)
    return times, _evaluate(sample, times, max_workers)


def q_curve(initial, exponents, rates, beta=0, times=(), spec=None, experiment='',
            path=PATH_GRID, max_workers=None):
    """
    Q on a time grid for flows started at `initial` with rates `rates.sigma_list`.

    :param list initial: AtomicMeasure or GaussianMixture per flow
    :param ExponentTuple exponents:
    :param DiffusionRates rates:
    :param beta: time weight exponent
    :param times: positive, strictly increasing
    :param GridSpec spec: grid, required for the grid path
    :param str path: 'grid' (sampled, FFT) or 'oracle' (closed form, single-term data only)
    :param int max_workers: evaluate time samples on a thread pool
    :returns: QCurve
    :raises DomainTooSmall: if the grid cannot hold the flows at the latest time
    """
    if len(initial) != exponents.n:
        raise ValueError("%d initial data given for %d exponents" % (len(initial), exponents.n))
    flows = [HeatFlow(datum, sigma) for datum, sigma in zip(initial, rates.sigma_list)]
    times, values = _curve(flows, exponents.powers, exponents.p, beta, times, spec, path,
                           max_workers)
    logging.info("Q curve %s: %d samples on the %s path" % (experiment, len(times), path))
    meta = CurveMeta(experiment, str(exponents), rates.sigma_list, beta, exponents.n,
                     flows[0].dimension, spec if path == PATH_GRID else None, path)
    return QCurve(times, values, meta)


def weighted_q_value(fields, params, time):
    """ time^beta |u_1^{alpha_1} * u_2^{alpha_2}|_p. """
    if len(fields) != 2:
        raise ValueError("the weighted functional takes two fields")
    return time ** float(params.beta) * convolution_power_norm(fields, params.alphas, params.p)


def weighted_q_curve(initial, params, times, spec=None, experiment='', path=PATH_GRID,
                     max_workers=None):
    """
    The weighted functional along flows of rates (sigma_1, sigma_2) from `params`.
    Only p >= 1 is accepted by :func:`heatflow.exponents.extended_params`, so there is no reverse
    regime here.
    """
    if len(initial) != 2:
        raise ValueError("the weighted functional takes two flows")
    flows = [HeatFlow(datum, sigma) for datum, sigma in zip(initial, params.sigmas)]
    times, values = _curve(flows, params.alphas, params.p, params.beta, times, spec, path,
                           max_workers)
    label = 'alpha=(%s, %s) rho=(%s, %s) p=%s' % (params.alpha1, params.alpha2, params.rho1,
                                                 params.rho2, params.p)
    meta = CurveMeta(experiment, label, params.sigmas, params.beta, 2, flows[0].dimension,
                     spec if path == PATH_GRID else None, path)
    return QCurve(times, values, meta)


def _check_hausdorff_p(p):
    if p != int(p) or p < 2 or int(p) % 2:
        raise ValueError("the Hausdorff-Young quantity needs an even integer p >= 2, got %s" % p)
    return int(p)


def hausdorff_young_value(field, p):
    """
    |u^{1/p'} * ... * u^{1/p'}|_2^{2/p} with p/2 factors, p' = p/(p-1).
    For p = 2 this is |u^{1/2}|_2 = |u|_1^{1/2}.
    """
    p = _check_hausdorff_p(p)
    _check_fields([field])
    g = field.power((p - 1) / p)
    acc = g
    for _ in range(p // 2 - 1):
        acc = fft_convolve(acc, g)
    return grid_lp_norm(acc, 2) ** (2 / p)


def hausdorff_young_fourier(field, p):
    """ |FT(u^{1/p'})|_p from the DFT; equals :func:`hausdorff_young_value` by Plancherel. """
    p = _check_hausdorff_p(p)
    return fourier_lp_norm(field.values ** ((p - 1) / p), field.spec, p)


def hausdorff_young_curve(flow, p, times, spec, experiment=''):
    """
    The Hausdorff-Young quantity along a single heat flow.

    :param HeatFlow flow:
    :returns: (QCurve of the convolution form, list of the Fourier-side values)
    """
    p = _check_hausdorff_p(p)
    times = _check_times(times)
    power = (p - 1) / p
    _prepare_grid([flow], [power], times, spec)
    values, fourier = [], []
    for t in times:
        field = sample_mixture(flow.at(t), spec)
        values.append(hausdorff_young_value(field, p))
        fourier.append(hausdorff_young_fourier(field, p))
    if p > 2:
        label = str(complete_p([Fraction(p, p - 1)] * (p // 2)))
    else:
        label = '(2)'
    meta = CurveMeta(experiment, label, (flow.sigma,), 0, p // 2, flow.dimension, spec,
                     PATH_GRID)
    return QCurve(times, values, meta), fourier


def endpoint_limits(initial, exponents, rates, spec):
    """
    lim_{t->0} Q = |f_1 * ... * f_n|_p and lim_{t->inf} Q = young_constant * prod |f_j|_{p_j},
    where f_j = m_j^{1/p_j} for the initial densities m_j.

    :param list initial: GaussianMixture per flow
    :returns: EndpointLimits
    """
    if any(isinstance(datum, AtomicMeasure) for datum in initial):
        raise ValueError("endpoint limits need density (mixture) initial data, not atoms")
    if len(initial) != exponents.n or len(rates.sigma_list) != exponents.n:
        raise ValueError("initial data and rates must match the exponents")
    fields = [sample_mixture(m, spec) for m in initial]
    q_zero = q_value(fields, exponents)
    norms = math.prod(mixture_mass(m) ** float(1 / pj) for m, pj in zip(initial, exponents.p_list))
    return EndpointLimits(q_zero, young_constant(exponents, spec.dimension) * norms)


def holder_value(fields, p1, p2):
    """ integral of u_1^{1/p_1} u_2^{1/p_2}, for 1/p_1 + 1/p_2 = 1. """
    if abs(1 / float(p1) + 1 / float(p2) - 1) > 1e-12:
        raise ValueError("Hoelder exponents need 1/p1 + 1/p2 = 1, got %s, %s" % (p1, p2))
    _check_fields(fields)
    u1, u2 = fields
    product = u1.values ** (1 / float(p1)) * u2.values ** (1 / float(p2))
    return float(u1.spec.cell_volume * np.sum(product))


def harmonic_mass(fields):
    """ integral of the harmonic sum (1/u_1 + 1/u_2)^{-1}. """
    _check_fields(fields)
    u1, u2 = fields[0].values, fields[1].values
    total = u1 + u2
    values = np.where(total > 0, u1 * u2 / np.where(total > 0, total, 1.0), 0.0)
    return float(fields[0].spec.cell_volume * np.sum(values))
