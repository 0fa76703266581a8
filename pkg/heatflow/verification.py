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
:mod:`heatflow.verification` --- the acceptance battery
=======================================================

Runs the built-in configurations from :mod:`heatflow.fixtures.battery` through the numeric
modules and reduces every criterion to one summary row: name, measured value, expectation,
tolerance and pass flag.
"""

import itertools
import logging
import math
from collections import OrderedDict, namedtuple
from fractions import Fraction

import numpy as np
from django.conf import settings

from heatflow.defines import (
    DERIVATIVE_FLOOR,
    DERIVATIVE_TOLERANCE,
    ENDPOINT_TOLERANCE,
    EXIT_FAIL,
    EXIT_PASS,
    FLATNESS_TOLERANCE_GRID,
    FLATNESS_TOLERANCE_ORACLE,
    LEMMA_TOLERANCE,
    MONOTONICITY_TOLERANCE,
    PLANCHEREL_TOLERANCE,
    RESIDUAL_GEOMETRIC_MEAN,
    RESIDUAL_HARMONIC_ADDITION,
    RESIDUAL_TOLERANCE,
    SANDWICH_SLACK,
    WEIGHTED_RESIDUAL_TOLERANCE,
)
from heatflow.exponents import (
    REGIME_FORWARD,
    REGIME_REVERSE,
    canonical_sigmas,
    complete_p,
    extended_params,
    printed_e1_sides,
    verify_identities,
    weighted_balance_residual,
    young_constant,
)
from heatflow.fixtures import battery
from heatflow.functionals import (
    PATH_ORACLE,
    QCurve,
    convolution_power_norm,
    endpoint_limits,
    flatness,
    harmonic_mass,
    hausdorff_young_curve,
    holder_value,
    oracle_q_value,
    q_curve,
    q_value,
    weighted_q_curve,
)
from heatflow.gaussian_oracle import HeatFlow, log_gradient_bound, mixture_log_gradient
from heatflow.grid_field import GridSpec, sample_mixture
from heatflow.monotonicity import (
    closure_residual,
    lemma_main_sides,
    monotonicity_report,
    numeric_dqdt,
    pointwise_closure_residual,
    q_prime_remark,
    weighted_closure_residual,
    worst_report,
)

FORWARD = (Fraction(4, 3), Fraction(4, 3))
REVERSE = (Fraction(2, 3), Fraction(2, 3))
THREEFOLD = (Fraction(4, 3),) * 3
CONSTANT_TUPLES = (FORWARD, (Fraction(3, 2), Fraction(3, 2)), REVERSE)
ORACLE_TOLERANCE = 1e-10
IDENTITY_TOLERANCE = 1e-12
IDENTITY_DRAWS = 1000
# (alpha1, alpha2, rho1, rho2, p) for the weighted balance and lambda checks
WEIGHTED_PARAMS = (
    (1, 1, Fraction(3, 4), Fraction(3, 4), 2),
    (1, Fraction(3, 4), Fraction(3, 4), 1, 2),
    (1, 1, Fraction(1, 2), Fraction(5, 6), 3),
    (1, 1, Fraction(1, 2), Fraction(3, 4), 4),
    (1, 1, 1, Fraction(1, 2), 2),
)
HOMOGENEITY_FACTOR = 2.5
HOMOGENEITY_TOLERANCE = 1e-10
WEIGHTED_RESIDUAL_GRID = battery.GridDef(16.0, 512)
SATURATION_TOLERANCE = 1e-5

Criterion = namedtuple('Criterion', ['name', 'description', 'check'])
CriterionResult = namedtuple('CriterionResult', ['name', 'measured', 'expected', 'tolerance',
                                                 'passed'])
SuiteResult = namedtuple('SuiteResult', ['exit_code', 'results'])

SUMMARY_COLUMNS = ['criterion', 'measured', 'expected', 'tolerance', 'pass']


def coarse_points(points):
    """ Grid size in coarse mode: N/COARSE_DIVISOR, but at least COARSE_POINTS and at most N. """
    conf = settings.HEATFLOW
    return min(points, max(conf['COARSE_POINTS'], points // conf['COARSE_DIVISOR']))


def relaxed(tolerance):
    return tolerance * settings.HEATFLOW['COARSE_RELAXATION']


class SuiteOptions(namedtuple('SuiteOptions', ['coarse'])):
    """ Grid and tolerance policy for one suite run. """
    __slots__ = ()

    def grid(self, grid_def, dimension=1):
        points = coarse_points(grid_def.points) if self.coarse else grid_def.points
        return GridSpec(dimension, grid_def.period, points)

    def tolerance(self, tolerance):
        return relaxed(tolerance) if self.coarse else tolerance


def _exponents(p_list):
    t = complete_p(p_list)
    return t, canonical_sigmas(t)


def check_gaussian_constant(options):
    tolerance = options.tolerance(1e-4)
    spec = options.grid(battery.CONSTANT_GRID)
    oracle_error = grid_error = 0.0
    for p_list in CONSTANT_TUPLES:
        t, rates = _exponents(p_list)
        mixtures = [HeatFlow(battery.unit_atom(), s).at(1.0) for s in rates.sigma_list]
        expected = young_constant(t)
        oracle = oracle_q_value(mixtures, t.powers, t.p)
        fields = [sample_mixture(m, spec) for m in mixtures]
        grid = convolution_power_norm(fields, t.powers, t.p)
        oracle_error = max(oracle_error, abs(oracle - expected) / expected)
        grid_error = max(grid_error, abs(grid - expected) / expected)
        logging.info("Young constant %s: %r (oracle %r, grid %r)" % (t, expected, oracle, grid))
    return CriterionResult('gaussian_constant', grid_error, 'relative error of the grid value',
                           tolerance, oracle_error <= ORACLE_TOLERANCE and grid_error <= tolerance)


def _monotone_battery(name, configs, p_list, grid_def, regime, options):
    tolerance = options.tolerance(MONOTONICITY_TOLERANCE)
    t, rates = _exponents(p_list)
    spec = options.grid(grid_def)
    reports = []
    for config in configs:
        curve = q_curve(config.initial, t, rates, times=battery.log_times(), spec=spec,
                        experiment=config.name)
        reports.append(monotonicity_report(curve, regime, tolerance))
    worst = worst_report(reports)
    return CriterionResult(name, worst.min_residual, 'regime * dQ/Q >= -tolerance', tolerance,
                           worst.passed)


def check_forward_monotonicity(options):
    return _monotone_battery('forward_monotonicity', battery.forward_battery(), FORWARD,
                             battery.WIDE_GRID, REGIME_FORWARD, options)


def check_reverse_monotonicity(options):
    return _monotone_battery('reverse_monotonicity', battery.reverse_battery(), REVERSE,
                             battery.REVERSE_GRID, REGIME_REVERSE, options)


def check_nfold_monotonicity(options):
    return _monotone_battery('nfold_monotonicity', battery.nfold_battery(), THREEFOLD,
                             battery.WIDE_GRID, REGIME_FORWARD, options)


def check_extremal_flatness(options):
    oracle_tolerance = options.tolerance(FLATNESS_TOLERANCE_ORACLE)
    grid_tolerance = options.tolerance(FLATNESS_TOLERANCE_GRID)
    spec = options.grid(battery.WIDE_GRID)
    oracle_flatness = grid_flatness = 0.0
    for p_list in (FORWARD, THREEFOLD):
        t, rates = _exponents(p_list)
        initial = battery.extremal(t.n).initial
        oracle = q_curve(initial, t, rates, times=battery.log_times(), path=PATH_ORACLE)
        grid = q_curve(initial, t, rates, times=battery.log_times(), spec=spec)
        oracle_flatness = max(oracle_flatness, flatness(oracle))
        grid_flatness = max(grid_flatness, flatness(grid))
    return CriterionResult('extremal_flatness', grid_flatness, 'relative variation of Q (grid)',
                           grid_tolerance,
                           oracle_flatness < oracle_tolerance and grid_flatness < grid_tolerance)


def check_derivative_formula(options):
    tolerance = options.tolerance(DERIVATIVE_TOLERANCE)
    t, rates = _exponents(FORWARD)
    spec = options.grid(battery.QPRIME_GRID)
    worst, sign_ok = 0.0, True
    for config in battery.qprime_battery():
        flows = [HeatFlow(datum, s) for datum, s in zip(config.initial, rates.sigma_list)]

        def q_at(time):
            return q_value([sample_mixture(f.at(time), spec) for f in flows], t)

        for time in battery.QPRIME_TIMES:
            remark = q_prime_remark(flows[0].at(time), flows[1].at(time), t, rates, spec)
            step = 1e-3 * time
            q = q_at(time)
            around = QCurve((time - step, time, time + step),
                            (q_at(time - step), q, q_at(time + step)), None)
            numeric = numeric_dqdt(around, 1)
            sign_ok = sign_ok and t.epsilon * remark >= -DERIVATIVE_FLOOR * q
            if abs(numeric) > DERIVATIVE_FLOOR * q:
                worst = max(worst, abs(remark - numeric) / abs(numeric))
    return CriterionResult('derivative_formula', worst, 'relative error against finite difference',
                           tolerance, sign_ok and worst <= tolerance)


def check_closure_residuals(options):
    tolerance = options.tolerance(RESIDUAL_TOLERANCE)
    reports = []
    for p_list, configs, grid_def in (
            (FORWARD, battery.closure_battery(), battery.CLOSURE_GRID),
            (REVERSE, battery.reverse_closure_battery(), battery.REVERSE_CLOSURE_GRID)):
        t, rates = _exponents(p_list)
        spec = options.grid(grid_def)
        for config in configs:
            flows = [HeatFlow(datum, s) for datum, s in zip(config.initial, rates.sigma_list)]
            reports.append(closure_residual(flows, t, rates, spec, battery.CLOSURE_TIMES,
                                            tolerance=tolerance))
    worst = worst_report(reports)

    # negative control: the first flow diffuses 10% too fast
    t, rates = _exponents(FORWARD)
    flows = [HeatFlow(battery.unit_atom(), rates.sigma_list[0] * 1.1),
             HeatFlow(battery.unit_atom(), rates.sigma_list[1])]
    control = closure_residual(flows, t, rates, options.grid(battery.CLOSURE_GRID),
                               battery.CLOSURE_TIMES, tolerance=tolerance)
    logging.info("closure negative control: min residual %g (tolerance %g), pass=%s"
                 % (control.min_residual, control.tolerance, control.passed))
    return CriterionResult('closure_residuals', worst.margin * tolerance,
                           'relative residual >= -tolerance; perturbed control fails', tolerance,
                           worst.passed and not control.passed)


def check_quadratic_form_identity(options):
    tolerance = options.tolerance(LEMMA_TOLERANCE)
    spec = options.grid(battery.LEMMA_GRID)
    worst, homogeneous = 0.0, True
    for i, draw in enumerate(battery.lemma_draws()):
        node = int(draw.node * spec.points // battery.LEMMA_GRID.points)
        sides = lemma_main_sides(draw.u1, draw.u2, draw.alpha1, draw.alpha2, draw.lambda1,
                                 draw.lambda2, node, spec)
        worst = max(worst, abs(sides.lhs - sides.rhs) / sides.scale)
        if i == 0:
            c = HOMOGENEITY_FACTOR
            scaled = lemma_main_sides(draw.u1, draw.u2, draw.alpha1, draw.alpha2,
                                      c * draw.lambda1, c * draw.lambda2, node, spec)
            bound = HOMOGENEITY_TOLERANCE * c * sides.scale
            homogeneous = (abs(scaled.lhs - c * sides.lhs) <= bound
                           and abs(scaled.rhs - c * sides.rhs) <= bound)
    return CriterionResult('quadratic_form_identity', worst, '|lhs - rhs| / scale', tolerance,
                           homogeneous and worst < tolerance)


def check_algebraic_identities(options):
    rng = np.random.default_rng(battery.SEED)
    worst = 0.0
    for _ in range(IDENTITY_DRAWS):
        t, rates = _exponents(battery.random_exponents(rng))
        report = verify_identities(t, rates)
        worst = max(worst, abs(report.e2_residual), abs(report.gradient_residual))
    for args in WEIGHTED_PARAMS:
        params = extended_params(*args)
        worst = max(worst, abs(math.sqrt(params.lambda1) + math.sqrt(params.lambda2) - 1),
                    abs(weighted_balance_residual(params)))
    t, rates = _exponents(FORWARD)
    printed = printed_e1_sides(t, rates)
    reproduced = printed == (Fraction(25, 64), Fraction(1, 2))
    logging.info("printed gradient identity on %s: %s vs %s" % (t, printed[0], printed[1]))
    return CriterionResult('algebraic_identities', float(worst),
                           'identity residual; printed sides 25/64 vs 1/2', IDENTITY_TOLERANCE,
                           reproduced and worst <= IDENTITY_TOLERANCE)


def check_endpoint_limits(options):
    tolerance = options.tolerance(ENDPOINT_TOLERANCE)
    slack = options.tolerance(SANDWICH_SLACK)
    t, rates = _exponents(FORWARD)
    spec = options.grid(battery.ENDPOINT_GRID)
    worst, sandwiched = 0.0, True
    for config in battery.endpoint_battery():
        curve = q_curve(config.initial, t, rates, times=battery.log_times(), spec=spec,
                        experiment=config.name)
        limits = endpoint_limits(config.initial, t, rates, spec)
        worst = max(worst, abs(curve.values[0] - limits.q_zero) / limits.q_zero,
                    abs(curve.values[-1] - limits.q_infinity) / limits.q_infinity)
        sandwiched = sandwiched and all(
            limits.q_zero * (1 - slack) <= q <= limits.q_infinity * (1 + slack)
            for q in curve.values)
    return CriterionResult('endpoint_limits', worst, 'relative distance of Q to its limits',
                           tolerance, sandwiched and worst <= tolerance)


def check_hausdorff_young(options):
    tolerance = options.tolerance(PLANCHEREL_TOLERANCE)
    monotone_tolerance = options.tolerance(MONOTONICITY_TOLERANCE)
    spec = options.grid(battery.HAUSDORFF_GRID)
    reports, plancherel = [], 0.0
    for config in battery.hausdorff_battery():
        curve, fourier = hausdorff_young_curve(HeatFlow(config.initial[0], 1.0), 4,
                                               battery.log_times(), spec, config.name)
        reports.append(monotonicity_report(curve, REGIME_FORWARD, monotone_tolerance))
        plancherel = max([plancherel] + [abs(v - f) / v for v, f in zip(curve.values, fourier)])
    worst = worst_report(reports)
    return CriterionResult('hausdorff_young', plancherel, 'Plancherel cross-check', tolerance,
                           worst.passed and plancherel <= tolerance)


def check_weighted_closure(options):
    monotone_tolerance = options.tolerance(MONOTONICITY_TOLERANCE)
    tolerance = options.tolerance(WEIGHTED_RESIDUAL_TOLERANCE)
    params = extended_params(1, 1, Fraction(3, 4), Fraction(3, 4), 2)
    curve_spec = options.grid(battery.WEIGHTED_GRID)
    residual_spec = options.grid(WEIGHTED_RESIDUAL_GRID)
    monotone, outputs = [], []
    for config in battery.weighted_battery():
        curve = weighted_q_curve(config.initial, params, battery.log_times(), curve_spec,
                                 config.name)
        monotone.append(monotonicity_report(curve, REGIME_FORWARD, monotone_tolerance))
        flows = [HeatFlow(datum, s) for datum, s in zip(config.initial, params.sigmas)]
        result = weighted_closure_residual(flows, params, residual_spec, battery.CLOSURE_TIMES,
                                           tolerance)
        outputs.extend([result.heat, result.log_convexity])

    flows = [HeatFlow(battery.unit_atom(), s) for s in params.sigmas]
    saturation = weighted_closure_residual(flows, params, residual_spec, battery.CLOSURE_TIMES,
                                           tolerance).hypothesis
    # min_residual is absolute, tolerance is tolerance*bound
    saturation_error = abs(saturation.min_residual) * tolerance / saturation.tolerance
    passed = (worst_report(monotone).passed and worst_report(outputs).passed
              and saturation_error <= options.tolerance(SATURATION_TOLERANCE))
    return CriterionResult('weighted_closure', worst_report(outputs).margin * tolerance,
                           'relative residual >= -tolerance; single atoms saturate', tolerance,
                           passed)


def check_pointwise_closures(options):
    tolerance = options.tolerance(RESIDUAL_TOLERANCE)
    spec = options.grid(battery.POINTWISE_GRID)
    mesh = spec.mesh()
    reports, bounded = [], True
    for config in battery.pointwise_battery():
        flows = [HeatFlow(datum, 1.0) for datum in config.initial]
        for kind in (RESIDUAL_GEOMETRIC_MEAN, RESIDUAL_HARMONIC_ADDITION):
            reports.append(pointwise_closure_residual(kind, flows, 2, 2, spec,
                                                      battery.POINTWISE_TIMES, tolerance))

        # the integrated pairings are nondecreasing along equal-rate flows
        fields = [[sample_mixture(f.at(t), spec) for f in flows] for t in battery.POINTWISE_TIMES]
        for pairing in (lambda u: holder_value(u, 2, 2), harmonic_mass):
            curve = QCurve(battery.POINTWISE_TIMES, [pairing(u) for u in fields], None)
            reports.append(monotonicity_report(curve, REGIME_FORWARD,
                                               options.tolerance(MONOTONICITY_TOLERANCE)))

        for flow, t in itertools.product(flows, battery.POINTWISE_TIMES):
            gradient = np.abs(mixture_log_gradient(flow.at(t), mesh)[..., 0])
            bound = log_gradient_bound(mesh[..., 0], t, flow.support_radius, flow.sigma)
            bounded = bounded and bool(np.all(gradient <= bound * (1 + 1e-12)))
    worst = worst_report(reports)
    if not bounded:
        logging.warning("pointwise closures: |grad u/u| exceeds its a-priori bound")
    return CriterionResult('pointwise_closures', worst.margin * worst.tolerance,
                           'relative residual >= -tolerance', tolerance,
                           worst.passed and bounded)


CRITERIA = OrderedDict((c.name, c) for c in [
    Criterion('gaussian_constant', "Q of Gaussian data equals the Young constant",
              check_gaussian_constant),
    Criterion('forward_monotonicity', "Q nondecreasing for p_j >= 1", check_forward_monotonicity),
    Criterion('reverse_monotonicity', "Q nonincreasing for p_j <= 1", check_reverse_monotonicity),
    Criterion('nfold_monotonicity', "Q nondecreasing for three flows", check_nfold_monotonicity),
    Criterion('extremal_flatness', "Q constant on Gaussian extremizers", check_extremal_flatness),
    Criterion('derivative_formula', "closed-form dQ/dt matches finite differences",
              check_derivative_formula),
    Criterion('closure_residuals', "heat inequality for fractional-power convolutions",
              check_closure_residuals),
    Criterion('quadratic_form_identity', "quadratic-form identity behind the closure",
              check_quadratic_form_identity),
    Criterion('algebraic_identities', "exponent, rate and weighted-balance identities",
              check_algebraic_identities),
    Criterion('endpoint_limits', "Q between its t -> 0 and t -> infinity limits",
              check_endpoint_limits),
    Criterion('hausdorff_young', "Hausdorff-Young quantity nondecreasing",
              check_hausdorff_young),
    Criterion('weighted_closure', "time-weighted functional and its residuals",
              check_weighted_closure),
    Criterion('pointwise_closures', "geometric mean and harmonic sum, pointwise and integrated",
              check_pointwise_closures),
])


def list_criteria():
    """ [(name, description)] in suite order. """
    return [(c.name, c.description) for c in CRITERIA.values()]


def verify_suite(coarse=False, only=None, writer=None, header_lines=()):
    """
    Run the acceptance battery.

    :param bool coarse: quarter the grids and relax tolerances
    :param only: optional criterion names to run
    :param BaseReportWriter writer: if given, the summary is written to ``verify.csv``
    :returns: SuiteResult(exit_code, [CriterionResult])
    :raises ValueError: for an unknown criterion name
    """
    names = list(only) if only else list(CRITERIA)
    unknown = [name for name in names if name not in CRITERIA]
    if unknown:
        raise ValueError("unknown criterion: %s" % ', '.join(unknown))

    options = SuiteOptions(bool(coarse))
    results = []
    for name in names:
        logging.info("criterion %s" % name)
        try:
            result = CRITERIA[name].check(options)
        except (ValueError, ArithmeticError) as e:
            logging.error("criterion %s raised: %s" % (name, e))
            result = CriterionResult(name, math.nan, str(e), math.nan, False)
        results.append(result)

    if writer is not None:
        header = list(header_lines) or ['coarse=%s' % ('true' if coarse else 'false')]
        writer.write_csv('verify.csv', header, SUMMARY_COLUMNS,
                         [(r.name, r.measured, r.expected, r.tolerance, r.passed)
                          for r in results])
    passed = all(r.passed for r in results)
    return SuiteResult(EXIT_PASS if passed else EXIT_FAIL, results)
