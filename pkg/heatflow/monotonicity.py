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
:mod:`heatflow.monotonicity` --- derivative-level and PDE-level checks
======================================================================

Residuals of the heat inequalities satisfied by fractional-power convolutions, geometric means
and harmonic sums of heat flows, the closed-form derivative of Q, and the quadratic-form identity
behind the closure theorems.

Time derivatives are analytic: ``du_j/dt = (sigma_j/4pi) Lap u_j`` is evaluated on the mixture
and pushed through the convolution. Spatial derivatives of the combined field are spectral.
Residual minima are taken over the bulk of the torus, within distance L/4 of the data center.
"""

import logging
import math
from collections import namedtuple

import numpy as np

from heatflow.defines import (
    LOG_FLOOR,
    MAX_TRIPLE_QUADRATURE_POINTS,
    MONOTONICITY_TOLERANCE,
    RESIDUAL_GEOMETRIC_MEAN,
    RESIDUAL_HARMONIC_ADDITION,
    RESIDUAL_TOLERANCE,
    WEIGHTED_RESIDUAL_TOLERANCE,
)
from heatflow.gaussian_oracle import (
    AtomicMeasure,
    gaussian_mass,
    mixture_log_eval,
    mixture_log_gradient,
    mixture_log_laplacian,
    mixture_mass,
)
from heatflow.grid_field import (
    RESIDUAL_RESOLUTION_EXPONENT,
    GridField,
    bulk_mask,
    check_resolution,
    convolve_arrays,
    spectral_grad_laplacian,
)

KIND_MONOTONICITY = 'monotonicity'
KIND_CLOSURE = 'closure'
KIND_WEIGHTED_HEAT = 'weighted_heat'
KIND_LOG_CONVEXITY = 'log_convexity'
KIND_HYPOTHESIS = 'hypothesis'


class ResidualReport(namedtuple('ResidualReport', ['kind', 'min_residual', 'location', 'time',
                                                   'tolerance', 'passed'])):
    """
    Minimum of a signed residual with its location; passes iff min_residual >= -tolerance.
    """
    __slots__ = ()

    def __new__(cls, kind, min_residual, location, time, tolerance):
        min_residual, tolerance = float(min_residual), float(tolerance)
        return super().__new__(cls, kind, min_residual, location, time, tolerance,
                               min_residual >= -tolerance)

    @property
    def margin(self):
        """ min_residual / tolerance; the report passes iff margin >= -1. """
        if self.tolerance == 0:
            return 0.0 if self.min_residual >= 0 else -math.inf
        return self.min_residual / self.tolerance


WeightedResidual = namedtuple('WeightedResidual', ['heat', 'log_convexity', 'hypothesis'])
LemmaSides = namedtuple('LemmaSides', ['lhs', 'rhs', 'scale'])


def worst_report(reports):
    """ The report with the smallest margin; it passes iff all of `reports` pass. """
    return min(reports, key=lambda r: r.margin)


def _minimum(kind, residual, mask, tolerance, time, spec):
    masked = np.where(mask, residual, np.inf)
    index = np.unravel_index(np.argmin(masked), masked.shape)
    return ResidualReport(kind, masked[index], spec.node(index), time, tolerance)


def monotonicity_report(curve, regime, tolerance=MONOTONICITY_TOLERANCE):
    """
    Worst adjacent difference of Q, signed by the regime and relative to Q:
    min_i regime*(Q_{i+1} - Q_i)/Q_i, passing at -tolerance.
    """
    values = curve.values
    ratios = [regime * (b - a) / a for a, b in zip(values, values[1:])]
    if not ratios:
        raise ValueError("a monotonicity check needs at least two samples")
    i = int(np.argmin(ratios))
    return ResidualReport(KIND_MONOTONICITY, ratios[i], None, curve.times[i + 1], tolerance)


def numeric_dqdt(curve, index):
    """
    Centered three-point derivative of Q at an interior sample of a (possibly non-uniform) grid.
    """
    if not 0 < index < len(curve.times) - 1:
        raise IndexError("numeric_dqdt needs an interior index, got %d" % index)
    t0, t1, t2 = curve.times[index - 1:index + 2]
    q0, q1, q2 = curve.values[index - 1:index + 2]
    h1, h2 = t1 - t0, t2 - t1
    return (-h2 / (h1 * (h1 + h2)) * q0
            + (h2 - h1) / (h1 * h2) * q1
            + h1 / (h2 * (h1 + h2)) * q2)


def _check_line_grid(spec):
    if spec.dimension != 1:
        raise ValueError("triple quadrature is implemented for d=1 only")
    if spec.points > MAX_TRIPLE_QUADRATURE_POINTS:
        raise ValueError("triple quadrature needs N <= %d, got %d"
                         % (MAX_TRIPLE_QUADRATURE_POINTS, spec.points))


def _shift_indices(n):
    """ shift[i, j] is the node index of x_i - y_j. """
    i = np.arange(n)
    return (i[:, np.newaxis] - i[np.newaxis, :] + n // 2) % n


def q_prime_remark(u1, u2, exponents, rates, spec):
    """
    dQ/dt from the closed form
    ``eps/(8 pi Q^{p-1}) int int int w(x)^{p-2} F(y) F(z) |G(y) - G(z)|^2``
    with w = u1^{1/p1} * u2^{1/p2}, F(y) = u1(x-y)^{1/p1} u2(y)^{1/p2},
    G(y) = a1 v1(x-y) + a2 v2(y), a_j = ((sigma_j/p_j)|1/p_j - 1|)^{1/2}, v_j = grad u_j/u_j.

    The integral is a plain Riemann sum on the grid, O(N^3).

    :param GaussianMixture u1, u2: the flows at the evaluation time
    :param GridSpec spec: d = 1, N <= 512
    """
    _check_line_grid(spec)
    if exponents.n != 2:
        raise ValueError("the derivative formula is stated for two flows")
    (p1, p2), p, eps = [float(pj) for pj in exponents.p_list], float(exponents.p), exponents.epsilon
    s1, s2 = [float(s) for s in rates.sigma_list]
    a1 = math.sqrt(s1 / p1 * abs(1 / p1 - 1))
    a2 = math.sqrt(s2 / p2 * abs(1 / p2 - 1))

    x, h, n = spec.coordinates, spec.spacing, spec.points
    f1 = np.exp(mixture_log_eval(u1, x, spec.period) / p1)
    f2 = np.exp(mixture_log_eval(u2, x, spec.period) / p2)
    v1 = mixture_log_gradient(u1, x, spec.period)[:, 0]
    v2 = mixture_log_gradient(u2, x, spec.period)[:, 0]

    shift = _shift_indices(n)
    w = h * np.sum(f1[shift] * f2[np.newaxis, :], axis=1)
    # h/w must stay finite; nodes below this carry O(w^p) and are dropped
    floor = np.finfo(float).tiny / h
    total = 0.0
    for i in range(n):
        if not w[i] > floor:
            continue
        weights = f1[shift[i]] * f2 * (h / w[i])
        g = a1 * v1[shift[i]] + a2 * v2
        spread = (g[:, np.newaxis] - g[np.newaxis, :]) ** 2
        total += w[i] ** p * (weights @ spread @ weights)
    total *= h

    q = (h * np.sum(w ** p)) ** (1 / p)
    return eps / (8 * math.pi * q ** (p - 1)) * total


def _data_center(flow):
    """ Mass-weighted mean location of the flow's initial datum. """
    datum = flow.initial
    if isinstance(datum, AtomicMeasure):
        weighted = [(w, loc) for loc, w in datum.atoms]
        total = datum.total_mass
    else:
        weighted = [(gaussian_mass(g), g.center) for g in datum.terms]
        total = mixture_mass(datum)
    return np.sum([w * np.asarray(loc) for w, loc in weighted], axis=0) / total


def _check_residual_grid(flows, powers, spec, times):
    """ Resolution warning at the earliest time, where the flows are narrowest. """
    earliest = min(times)
    return min(check_resolution(flow.at(earliest), spec, float(s), RESIDUAL_RESOLUTION_EXPONENT)
               for flow, s in zip(flows, powers))


def _convolution_and_derivative(flows, powers, spec, t):
    """
    w = u_1^{s_1} * ... * u_n^{s_n} and dw/dt, with d(u_j^{s_j})/dt = s_j u_j^{s_j} (du_j/dt)/u_j
    substituted into the product rule for the convolution.
    """
    mesh = spec.mesh()
    factors, derivatives = [], []
    for flow, s in zip(flows, powers):
        s = float(s)
        f = np.exp(s * mixture_log_eval(flow.at(t), mesh, spec.period))
        factors.append(f)
        derivatives.append(s * f * flow.time_log_derivative(t, mesh, spec.period))

    def chain(arrays):
        acc = arrays[0]
        for a in arrays[1:]:
            acc = convolve_arrays(spec, acc, a)
        return acc

    w = np.maximum(chain(factors), 0.0)
    dw = sum(chain(factors[:j] + [derivatives[j]] + factors[j + 1:]) for j in range(len(flows)))
    if not w.max() > 0:
        raise ValueError("convolution vanishes identically")
    return w, dw


def _power_with_derivative(w, dw, p):
    """ u = w^p and du/dt = p w^{p-1} dw/dt (0 where w vanishes). """
    positive = w > 0
    safe = np.where(positive, w, 1.0)
    return w ** p, np.where(positive, p * safe ** (p - 1) * dw, 0.0)


def _convolution_field(flows, powers, p, spec, t):
    w, _ = _convolution_and_derivative(flows, powers, spec, t)
    return w ** p


def closure_residual(flows, exponents, rates, spec, times, dt_probe=None,
                     tolerance=RESIDUAL_TOLERANCE):
    """
    Signed residual eps*(du/dt - (sigma_eff/4pi) Lap u) of u = (u_1^{1/p_1} * ... * u_n^{1/p_n})^p.

    :param list flows: HeatFlow per exponent; each flow diffuses at its own rate, which need not
        be the balanced one (the negative control perturbs it)
    :param ExponentTuple exponents:
    :param DiffusionRates rates: sigma_eff is taken from here
    :param GridSpec spec:
    :param times: evaluation times
    :param float dt_probe: if set, du/dt is the centered difference with this step instead of the
        analytic derivative
    :param float tolerance: relative to max(|du/dt|, |Lap u|) at each time
    :returns: the worst ResidualReport over the bulk and the times
    """
    if len(flows) != exponents.n:
        raise ValueError("%d flows given for %d exponents" % (len(flows), exponents.n))
    eps, p, sigma_eff = exponents.epsilon, float(exponents.p), float(rates.sigma_eff)
    powers = exponents.powers
    bulk = bulk_mask(spec, np.sum([_data_center(f) for f in flows], axis=0))
    _check_residual_grid(flows, powers, spec, [t - (dt_probe or 0) for t in times])

    reports = []
    for t in times:
        w, dw = _convolution_and_derivative(flows, powers, spec, t)
        u, dudt = _power_with_derivative(w, dw, p)
        if dt_probe:
            dudt = (_convolution_field(flows, powers, p, spec, t + dt_probe)
                    - _convolution_field(flows, powers, p, spec, t - dt_probe)) / (2 * dt_probe)
        _, laplacian = spectral_grad_laplacian(u, spec)
        residual = eps * (dudt - sigma_eff / (4 * math.pi) * laplacian)
        scale = max(np.abs(dudt).max(), np.abs(laplacian).max())
        reports.append(_minimum(KIND_CLOSURE, residual, bulk, tolerance * scale, t, spec))
    report = worst_report(reports)
    if not report.passed:
        logging.warning("closure residual %g below tolerance %g at t=%g, x=%s"
                        % (report.min_residual, -report.tolerance, report.time, report.location))
    return report


def weighted_closure_residual(flows, params, spec, times, tolerance=WEIGHTED_RESIDUAL_TOLERANCE):
    """
    Checks for u with u^{1/p} = t^beta (u_1^{alpha_1} * u_2^{alpha_2}):
    the heat inequality du/dt >= (sigma/4pi) Lap u, the log-convexity
    sigma div(grad u/u) >= -2 d pi/t, and the same log-convexity for the inputs (sigma_j, u_j),
    which holds automatically for heat flows.

    :param list flows: two HeatFlows
    :param ExtendedParams params:
    :returns: WeightedResidual of three ResidualReports
    """
    if len(flows) != 2:
        raise ValueError("the weighted closure takes two flows")
    p, beta, sigma_eff = float(params.p), float(params.beta), float(params.sigma_eff)
    alphas = [float(a) for a in params.alphas]
    d = spec.dimension
    mesh = spec.mesh()
    bulk = bulk_mask(spec, _data_center(flows[0]) + _data_center(flows[1]))
    _check_residual_grid(flows, alphas, spec, times)

    heat, logconv, hypothesis = [], [], []
    for t in times:
        w, dw = _convolution_and_derivative(flows, alphas, spec, t)
        weight = t ** beta
        big_u = weight * w
        big_du = beta * t ** (beta - 1) * w + weight * dw
        u, dudt = _power_with_derivative(big_u, big_du, p)
        _, laplacian = spectral_grad_laplacian(u, spec)
        residual = dudt - sigma_eff / (4 * math.pi) * laplacian
        scale = max(np.abs(dudt).max(), np.abs(laplacian).max())
        heat.append(_minimum(KIND_WEIGHTED_HEAT, residual, bulk, tolerance * scale, t, spec))

        bound = 2 * d * math.pi / t
        m1, m2 = flows[0].at(t), flows[1].at(t)
        f1 = np.exp(alphas[0] * mixture_log_eval(m1, mesh, spec.period))
        f2 = np.exp(alphas[1] * mixture_log_eval(m2, mesh, spec.period))
        v1 = mixture_log_gradient(m1, mesh, spec.period)
        div1 = mixture_log_laplacian(m1, mesh, spec.period)
        grad_w = [alphas[0] * convolve_arrays(spec, f1 * v1[..., k], f2) for k in range(d)]
        lap_w = (alphas[0] ** 2 * convolve_arrays(spec, f1 * np.sum(v1 ** 2, axis=-1), f2)
                 + alphas[0] * convolve_arrays(spec, f1 * div1, f2))
        trusted = bulk & (w >= LOG_FLOOR * w.max())
        safe = np.where(trusted, w, 1.0)
        div_u = p * (lap_w / safe - sum(g ** 2 for g in grad_w) / safe ** 2)
        logconv.append(_minimum(KIND_LOG_CONVEXITY, sigma_eff * div_u + bound, trusted,
                                tolerance * bound, t, spec))

        for flow, m in zip(flows, (m1, m2)):
            log_u = mixture_log_eval(m, mesh, spec.period)
            trusted_j = bulk & (log_u >= np.log(LOG_FLOOR) + log_u.max())
            div_j = mixture_log_laplacian(m, mesh, spec.period)
            hypothesis.append(_minimum(KIND_HYPOTHESIS, flow.sigma * div_j + bound, trusted_j,
                                       tolerance * bound, t, spec))

    result = WeightedResidual(worst_report(heat), worst_report(logconv), worst_report(hypothesis))
    if not result.hypothesis.passed:
        logging.warning("input log-convexity fails (%g at t=%g): the flows do not meet the "
                        "hypothesis, the configuration is invalid"
                        % (result.hypothesis.min_residual, result.hypothesis.time))
    return result


def _values_and_log_gradient(source, spec):
    """ Values and grad u/u on a line grid, from a mixture (analytic) or a field (spectral). """
    if isinstance(source, GridField):
        values = source.values
        grads, _ = spectral_grad_laplacian(source)
        positive = values > 0
        return values, np.where(positive, grads[0] / np.where(positive, values, 1.0), 0.0)
    x = spec.coordinates
    values = np.exp(mixture_log_eval(source, x, spec.period))
    return values, mixture_log_gradient(source, x, spec.period)[:, 0]


def lemma_main_sides(u1, u2, alpha1, alpha2, lambda1, lambda2, node, spec):
    """
    Both sides of the quadratic-form identity at node x, with F_j = u_j^{alpha_j},
    S = F_1 * F_2 and r = (lambda1 lambda2)^{1/2}:

    lhs = lambda1 S (F_1|v_1|^2 * F_2) + lambda2 S (F_1 * F_2|v_2|^2) + 2r S (F_1 v_1 * F_2 v_2)
          - (lambda1/alpha1^2 + lambda2/alpha2^2 + 2r/(alpha1 alpha2)) |grad S|^2

    rhs = 1/2 int int F(y) F(z) |a(y) - a(z)|^2 dy dz, F(y) = F_1(x-y) F_2(y),
    a(y) = lambda1^{1/2} v_1(x-y) + lambda2^{1/2} v_2(y).

    :param u1, u2: GaussianMixture or GridField
    :param int node: grid index of x
    :param GridSpec spec: d = 1, N <= 512
    :returns: LemmaSides(lhs, rhs, scale) where scale is the size of the positive lhs terms
    """
    _check_line_grid(spec)
    alpha1, alpha2 = float(alpha1), float(alpha2)
    lambda1, lambda2 = float(lambda1), float(lambda2)
    values1, v1 = _values_and_log_gradient(u1, spec)
    values2, v2 = _values_and_log_gradient(u2, spec)
    f1, f2 = values1 ** alpha1, values2 ** alpha2
    r = math.sqrt(lambda1 * lambda2)

    s = convolve_arrays(spec, f1, f2)
    (grad_s,), _ = spectral_grad_laplacian(s, spec)
    t11 = convolve_arrays(spec, f1 * v1 ** 2, f2)[node]
    t22 = convolve_arrays(spec, f1, f2 * v2 ** 2)[node]
    t12 = convolve_arrays(spec, f1 * v1, f2 * v2)[node]
    s, grad_s = s[node], grad_s[node]
    coefficient = lambda1 / alpha1 ** 2 + lambda2 / alpha2 ** 2 + 2 * r / (alpha1 * alpha2)
    lhs = (lambda1 * s * t11 + lambda2 * s * t22 + 2 * r * s * t12
           - coefficient * grad_s ** 2)

    h = spec.spacing
    shift = _shift_indices(spec.points)[node]
    weights = f1[shift] * f2
    a = math.sqrt(lambda1) * v1[shift] + math.sqrt(lambda2) * v2
    rhs = 0.5 * h ** 2 * (weights @ ((a[:, np.newaxis] - a[np.newaxis, :]) ** 2) @ weights)

    scale = s * (lambda1 * t11 + lambda2 * t22 + 2 * r * abs(t12))
    return LemmaSides(float(lhs), float(rhs), float(scale))


def lemma_main_residual(u1, u2, alpha1, alpha2, lambda1, lambda2, node, spec):
    """ lhs - rhs of :func:`lemma_main_sides`. """
    sides = lemma_main_sides(u1, u2, alpha1, alpha2, lambda1, lambda2, node, spec)
    return sides.lhs - sides.rhs


def pointwise_closure_residual(kind, flows, p1, p2, spec, times, tolerance=RESIDUAL_TOLERANCE):
    """
    Residual du/dt - (1/4pi) Lap u for the geometric mean u = u_1^{1/p_1} u_2^{1/p_2}
    (1/p_1 + 1/p_2 = 1) or the harmonic sum 1/u = 1/u_1 + 1/u_2 of unit-rate heat flows.

    :param str kind: 'geometric_mean' or 'harmonic_addition'
    :returns: the worst ResidualReport over the bulk and the times
    """
    if any(float(f.sigma) != 1.0 for f in flows) or len(flows) != 2:
        raise ValueError("pointwise closures take two unit-rate (sigma=1) heat flows")
    if kind == RESIDUAL_GEOMETRIC_MEAN:
        if abs(1 / float(p1) + 1 / float(p2) - 1) > 1e-12:
            raise ValueError("the geometric mean needs 1/p1 + 1/p2 = 1, got %s, %s" % (p1, p2))
    elif kind != RESIDUAL_HARMONIC_ADDITION:
        raise ValueError("unknown pointwise closure '%s'" % kind)
    mesh = spec.mesh()
    bulk = bulk_mask(spec, (_data_center(flows[0]) + _data_center(flows[1])) / 2)
    powers = (1 / float(p1), 1 / float(p2)) if kind == RESIDUAL_GEOMETRIC_MEAN else (1.0, 1.0)
    _check_residual_grid(flows, powers, spec, times)

    reports = []
    for t in times:
        l1 = mixture_log_eval(flows[0].at(t), mesh, spec.period)
        l2 = mixture_log_eval(flows[1].at(t), mesh, spec.period)
        r1 = flows[0].time_log_derivative(t, mesh, spec.period)
        r2 = flows[1].time_log_derivative(t, mesh, spec.period)
        if kind == RESIDUAL_GEOMETRIC_MEAN:
            u = np.exp(l1 / float(p1) + l2 / float(p2))
            dudt = u * (r1 / float(p1) + r2 / float(p2))
        else:
            log_sum = np.logaddexp(l1, l2)
            u = np.exp(l1 + l2 - log_sum)
            # u/u_1 = u_2/(u_1 + u_2)
            dudt = u * (np.exp(l2 - log_sum) * r1 + np.exp(l1 - log_sum) * r2)
        _, laplacian = spectral_grad_laplacian(u, spec)
        residual = dudt - laplacian / (4 * math.pi)
        scale = max(np.abs(dudt).max(), np.abs(laplacian).max())
        reports.append(_minimum(kind, residual, bulk, tolerance * scale, t, spec))
    return worst_report(reports)
