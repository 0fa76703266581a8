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
:mod:`heatflow.exponents` --- exponent and diffusion-rate algebra
=================================================================

Scaling relation ``sum 1/p_j = n - 1 + 1/p``, the diffusion-rate balance relation, the sharp
Young constants and the elementary identities behind the closure theorems.

Rational inputs (int or :class:`fractions.Fraction`) are handled in exact arithmetic; any float
input switches to double precision with tolerance ``EXACT_TOLERANCE``.
"""

import math
import numbers
from collections import namedtuple
from fractions import Fraction

from heatflow.defines import EXACT_TOLERANCE

REGIME_FORWARD = 1
REGIME_REVERSE = -1


def _is_exact(values):
    return all(isinstance(v, numbers.Rational) for v in values)


def _normalize(values):
    if _is_exact(values):
        return tuple(Fraction(v) for v in values)
    return tuple(float(v) for v in values)


def _close(a, b, scale=1.0):
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return abs(a - b) <= EXACT_TOLERANCE * max(1.0, abs(scale))


def _exact_sqrt(q):
    """ Square root, exact when q is a rational square. """
    if isinstance(q, Fraction) and q >= 0:
        num, den = math.isqrt(q.numerator), math.isqrt(q.denominator)
        if num * num == q.numerator and den * den == q.denominator:
            return Fraction(num, den)
    return math.sqrt(q)


def _regime(p_list):
    if all(p >= 1 for p in p_list):
        return REGIME_FORWARD
    if all(p <= 1 for p in p_list):
        return REGIME_REVERSE
    raise ValueError("mixed exponent regime: %s" % ', '.join(str(p) for p in p_list))


class ExponentTuple(namedtuple('ExponentTuple', ['p_list', 'p', 'regime'])):
    """
    Exponents (p_1, ..., p_n; p) satisfying the scaling relation, with the regime sign
    (+1 if all p_j >= 1, -1 if all p_j <= 1).
    """
    __slots__ = ()

    def __new__(cls, p_list, p, regime=None):
        values = _normalize(tuple(p_list) + (p,))
        p_list, p = values[:-1], values[-1]
        if len(p_list) < 2:
            raise ValueError("at least two exponents p_j are required")
        if not all(v > 0 for v in values):
            raise ValueError("exponents must be positive")
        actual = _regime(p_list)
        if regime is not None and regime != actual:
            raise ValueError("regime %s does not match exponents %s" % (regime, p_list))
        lhs = sum(1 / pj for pj in p_list)
        rhs = len(p_list) - 1 + 1 / p
        if not _close(lhs, rhs, rhs):
            raise ValueError("exponents violate the scaling relation: sum 1/p_j = %s, "
                             "n - 1 + 1/p = %s" % (lhs, rhs))
        return super().__new__(cls, p_list, p, actual)

    @property
    def n(self):
        return len(self.p_list)

    @property
    def epsilon(self):
        return self.regime

    @property
    def is_exact(self):
        return isinstance(self.p, Fraction)

    @property
    def powers(self):
        """ The pointwise powers 1/p_j applied to the flows. """
        return tuple(1 / pj for pj in self.p_list)

    def __str__(self):
        return '(%s; p=%s)' % (', '.join(str(pj) for pj in self.p_list), self.p)


def complete_p(p_list):
    """
    Solve the scaling relation for p.

    :param p_list: two or more positive exponents on the same side of 1
    :returns: ExponentTuple
    :raises ValueError: "mixed exponent regime", "p infinite or negative"
    """
    p_list = _normalize(p_list)
    if not all(pj > 0 for pj in p_list):
        raise ValueError("exponents must be positive")
    _regime(p_list)
    inverse = sum(1 / pj for pj in p_list) - (len(p_list) - 1)
    if inverse <= 0:
        raise ValueError("p infinite or negative: sum 1/p_j - (n-1) = %s" % inverse)
    return ExponentTuple(p_list, 1 / inverse)


def check_scaling(t):
    """ Residual of the scaling relation, sum 1/p_j - (n - 1 + 1/p). """
    return sum(1 / pj for pj in t.p_list) - (t.n - 1 + 1 / t.p)


def _balance_coefficient(pj):
    return (1 / pj) * (1 - 1 / pj)


class DiffusionRates(namedtuple('DiffusionRates', ['sigma_list', 'sigma_eff'])):
    __slots__ = ()

    def scaled(self, factor):
        """ The same rates up to the free common scale factor. """
        return DiffusionRates(tuple(factor * s for s in self.sigma_list), factor * self.sigma_eff)

    @property
    def sigma_max(self):
        return max(self.sigma_list)


def diffusion_rates(t, sigma_list):
    """
    Validate user-supplied diffusion rates against the pairwise balance relation
    ``(1/p_j)(1-1/p_j) sigma_k = (1/p_k)(1-1/p_k) sigma_j`` and compute the effective rate
    ``(sum sigma_j p_j)/p``.

    :param ExponentTuple t:
    :param sigma_list: one nonnegative rate per exponent
    :returns: DiffusionRates
    """
    if len(sigma_list) != t.n:
        raise ValueError("expected %d diffusion rates, got %d" % (t.n, len(sigma_list)))
    sigma_list = _normalize(sigma_list) if t.is_exact else tuple(float(s) for s in sigma_list)
    if any(s < 0 for s in sigma_list):
        raise ValueError("diffusion rates must be nonnegative")
    scale = max(abs(s) for s in sigma_list)
    for j in range(t.n):
        for k in range(j + 1, t.n):
            lhs = _balance_coefficient(t.p_list[j]) * sigma_list[k]
            rhs = _balance_coefficient(t.p_list[k]) * sigma_list[j]
            if not _close(lhs, rhs, scale):
                raise ValueError("diffusion rates %s violate the balance relation for "
                                 "exponents %s" % (sigma_list, t))
    sigma_eff = sum(s * pj for s, pj in zip(sigma_list, t.p_list)) / t.p
    return DiffusionRates(sigma_list, sigma_eff)


def canonical_sigmas(t):
    """
    The normalization sigma_j = |1 - 1/p_j| / p_j, valid in both regimes; sigma_j = 0 iff p_j = 1.
    """
    return diffusion_rates(t, [abs(1 - 1 / pj) / pj for pj in t.p_list])


def sharp_constant(r):
    """
    C_r = (r^(1/r) / |r'|^(1/r'))^(1/2) with the signed conjugate r' = r/(r-1);
    C_1 = C_inf = 1.
    """
    if r == 1 or math.isinf(r):
        return 1.0
    if not r > 0:
        raise ValueError("r must be positive, got %s" % r)
    r = float(r)
    conjugate = r / (r - 1)
    return math.sqrt(r ** (1 / r) / abs(conjugate) ** (1 / conjugate))


def young_constant(t, d=1):
    """ (prod_j C_{p_j} / C_p)^d, the value of Q on Gaussian extremizers. """
    constant = 1.0
    for pj in t.p_list:
        constant *= sharp_constant(pj)
    return (constant / sharp_constant(t.p)) ** d


IdentityReport = namedtuple('IdentityReport', [
    'e2_lhs', 'e2_rhs', 'e2_residual',
    'gradient_lhs', 'gradient_rhs', 'gradient_residual',
])


def _cross_term(t, s):
    """ 2 (A B)^(1/2) with A = (p sigma_j / p_j)|1 - 1/p_j|. """
    (p1, p2), p = t.p_list, t.p
    (s1, s2) = s.sigma_list
    a = p * s1 / p1 * abs(1 - 1 / p1)
    b = p * s2 / p2 * abs(1 - 1 / p2)
    return 2 * _exact_sqrt(a * b)


def verify_identities(t, s):
    """
    Both sides of the cross-term identity
    ``2(AB)^(1/2) = eps (1/(p1 p2))(sigma1(p-p1) + sigma2(p-p2))``
    and of the gradient-coefficient identity
    ``(p-1)(sigma1 p1 + sigma2 p2) = p sigma1(p1-1) + p sigma2(p2-1) + eps p1 p2 2(AB)^(1/2)``.
    In the forward regime eps = 1 and the first identity is read exactly as printed; in the reverse
    regime its right side changes sign.

    :param ExponentTuple t: n = 2
    :param DiffusionRates s:
    :returns: IdentityReport
    """
    if t.n != 2:
        raise ValueError("identities are stated for two exponents, got %d" % t.n)
    (p1, p2), p, eps = t.p_list, t.p, t.epsilon
    (s1, s2) = s.sigma_list

    cross = _cross_term(t, s)
    e2_rhs = (s1 * (p - p1) + s2 * (p - p2)) / (p1 * p2)
    gradient_lhs = (p - 1) * (s1 * p1 + s2 * p2)
    gradient_rhs = p * s1 * (p1 - 1) + p * s2 * (p2 - 1) + eps * p1 * p2 * cross
    return IdentityReport(cross, e2_rhs, cross - eps * e2_rhs,
                          gradient_lhs, gradient_rhs, gradient_lhs - gradient_rhs)


def printed_e1_sides(t, s):
    """
    The gradient-coefficient identity without the p1 p2 cross factor. Returns (left, right);
    on (4/3, 4/3; 2) with canonical rates this is (25/64, 1/2).
    """
    (p1, p2), p = t.p_list, t.p
    (s1, s2) = s.sigma_list
    left = p * s1 * (p1 - 1) + p * s2 * (p2 - 1) + _cross_term(t, s)
    return left, (p - 1) * (s1 * p1 + s2 * p2)


class ExtendedParams(namedtuple('ExtendedParams', [
        'alpha1', 'alpha2', 'rho1', 'rho2', 'p', 'sigma1', 'sigma2', 'beta', 'lambda1', 'lambda2',
        'dimension'])):
    """
    Parameters of the time-weighted functional ``t^beta |u1^alpha1 * u2^alpha2|_p``.
    """
    __slots__ = ()

    @property
    def alphas(self):
        return (self.alpha1, self.alpha2)

    @property
    def sigmas(self):
        return (self.sigma1, self.sigma2)

    @property
    def sigma_eff(self):
        return (self.sigma1 / self.alpha1 + self.sigma2 / self.alpha2) / self.p


def extended_params(alpha1, alpha2, rho1, rho2, p, d=1):
    """
    Fill in rates, time weight and lambdas for the weighted closure:
    sigma_j = alpha_j (1 - rho_j alpha_j), beta = d(alpha1 + alpha2 - 1 - 1/p)/2,
    lambda_j = ((1 - rho_j alpha_j)/(2 - rho1 alpha1 - rho2 alpha2))^2.

    When rho_j alpha_j = 1 for both j both rates vanish and the lambdas are set to 1/4.

    :raises ValueError: if the weight relation rho1 alpha1 + rho2 alpha2 = 1 + 1/p fails or a
        parameter is out of range
    """
    alpha1, alpha2, rho1, rho2, p = _normalize((alpha1, alpha2, rho1, rho2, p))
    for alpha in (alpha1, alpha2):
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1], got %s" % alpha)
    for rho in (rho1, rho2):
        if not 0 <= rho <= 1:
            raise ValueError("rho must lie in [0, 1], got %s" % rho)
    if p < 1:
        raise ValueError("the weighted functional needs p >= 1, got %s" % p)
    if not _close(rho1 * alpha1 + rho2 * alpha2, 1 + 1 / p, 2):
        raise ValueError("weight relation violated: rho1*alpha1 + rho2*alpha2 = %s, 1 + 1/p = %s"
                         % (rho1 * alpha1 + rho2 * alpha2, 1 + 1 / p))
    if alpha1 + alpha2 < 1 + 1 / p:
        raise ValueError("alpha1 + alpha2 must be at least 1 + 1/p")

    k1, k2 = 1 - rho1 * alpha1, 1 - rho2 * alpha2
    sigma1, sigma2 = alpha1 * k1, alpha2 * k2
    beta = d * (alpha1 + alpha2 - 1 - 1 / p) / 2
    if k1 + k2 == 0:
        lambda1 = lambda2 = Fraction(1, 4) if isinstance(p, Fraction) else 0.25
    else:
        lambda1, lambda2 = (k1 / (k1 + k2)) ** 2, (k2 / (k1 + k2)) ** 2
    return ExtendedParams(alpha1, alpha2, rho1, rho2, p, sigma1, sigma2, beta, lambda1, lambda2,
                          d)


def weighted_balance_residual(params):
    """
    p sigma_eff (lambda1 alpha1/sigma1 + lambda2 alpha2/sigma2) - 1, zero for every admissible
    parameter set. A vanishing rate comes with a vanishing lambda and its term is dropped.

    :raises ValueError: if a vanishing rate carries a nonzero lambda, as when both rates vanish
    """
    total = 0
    for lam, alpha, sigma in ((params.lambda1, params.alpha1, params.sigma1),
                              (params.lambda2, params.alpha2, params.sigma2)):
        if sigma == 0:
            if lam != 0:
                raise ValueError("lambda=%s on a vanishing rate leaves the balance undefined"
                                 % lam)
            continue
        total += lam * alpha / sigma
    return params.p * params.sigma_eff * total - 1
