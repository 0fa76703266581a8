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
:mod:`heatflow.gaussian_oracle` --- closed-form calculus of isotropic Gaussians
===============================================================================

Isotropic Gaussians c*exp(-a|x-mu|^2), finite mixtures of them and atomic measures. Heat flows
with atomic or Gaussian initial data are represented exactly: the solution of
``du/dt = (sigma/4pi) Lap u`` is the datum convolved with the kernel H_{sigma*t}, where
``H_s(x) = s^(-d/2) exp(-pi|x|^2/s)``.

All values are immutable; every function is pure.
Points are passed as arrays of shape (..., d); in dimension 1 a plain array of coordinates is
accepted as well.
"""

import math
from collections import namedtuple

import numpy as np

DIMENSIONS = (1, 2)


def _check_dimension(d):
    if d not in DIMENSIONS:
        raise ValueError("dimension must be 1 or 2, got %s" % d)


class IsotropicGaussian(namedtuple('IsotropicGaussian', ['amplitude', 'decay', 'center'])):
    """
    The function ``amplitude * exp(-decay * |x - center|^2)``.
    """
    __slots__ = ()

    def __new__(cls, amplitude, decay, center=(0.0,)):
        if np.ndim(center) == 0:
            center = (center,)
        center = tuple(float(c) for c in center)
        _check_dimension(len(center))
        if not amplitude > 0:
            raise ValueError("amplitude must be positive, got %s" % amplitude)
        if not decay > 0:
            raise ValueError("decay must be positive, got %s" % decay)
        return super().__new__(cls, float(amplitude), float(decay), center)

    @property
    def dimension(self):
        return len(self.center)


class GaussianMixture(namedtuple('GaussianMixture', ['terms'])):
    """
    A finite sum of isotropic Gaussians of equal dimension; strictly positive everywhere.
    """
    __slots__ = ()

    def __new__(cls, terms):
        terms = tuple(terms)
        if not terms:
            raise ValueError("a mixture needs at least one term")
        if len({g.dimension for g in terms}) != 1:
            raise ValueError("mixture terms must share one dimension")
        return super().__new__(cls, terms)

    @property
    def dimension(self):
        return self.terms[0].dimension

    @property
    def support_radius(self):
        """ Largest distance of a term center from the origin. """
        return max(math.sqrt(sum(c * c for c in g.center)) for g in self.terms)


class AtomicMeasure(namedtuple('AtomicMeasure', ['atoms', 'support_radius'])):
    """
    A finite positive measure sum_i w_i delta_{x_i}, supported in the ball of radius
    `support_radius` (defaults to the smallest such radius).
    """
    __slots__ = ()

    def __new__(cls, atoms, support_radius=None):
        normalized = []
        for location, weight in atoms:
            if np.ndim(location) == 0:
                location = (location,)
            location = tuple(float(c) for c in location)
            _check_dimension(len(location))
            if not weight > 0:
                raise ValueError("atom weights must be positive, got %s" % weight)
            normalized.append((location, float(weight)))
        if not normalized:
            raise ValueError("a measure needs at least one atom")
        if len({len(loc) for loc, _ in normalized}) != 1:
            raise ValueError("atoms must share one dimension")
        radius = max(math.sqrt(sum(c * c for c in loc)) for loc, _ in normalized)
        if support_radius is None:
            support_radius = radius
        elif support_radius < radius:
            raise ValueError("atom outside the support ball of radius %s" % support_radius)
        return super().__new__(cls, tuple(normalized), float(support_radius))

    @property
    def dimension(self):
        return len(self.atoms[0][0])

    @property
    def total_mass(self):
        return sum(weight for _, weight in self.atoms)


def heat_kernel(t, d):
    """
    The heat kernel H_t in dimension d: amplitude t^(-d/2), decay pi/t, centered at 0.

    :param float t: kernel time, positive
    :param int d: dimension
    :returns: IsotropicGaussian of unit mass
    """
    if not t > 0:
        raise ValueError("heat kernel time must be positive, got %s" % t)
    _check_dimension(d)
    return IsotropicGaussian(t ** (-d / 2), math.pi / t, (0.0,) * d)


def convolve_gaussians(g1, g2):
    """
    Closed-form convolution of two isotropic Gaussians.

    :raises ValueError: on dimension mismatch
    """
    if g1.dimension != g2.dimension:
        raise ValueError("cannot convolve Gaussians of dimension %d and %d"
                         % (g1.dimension, g2.dimension))
    d = g1.dimension
    a = g1.decay + g2.decay
    amplitude = g1.amplitude * g2.amplitude * (math.pi / a) ** (d / 2)
    center = tuple(c1 + c2 for c1, c2 in zip(g1.center, g2.center))
    return IsotropicGaussian(amplitude, g1.decay * g2.decay / a, center)


def gaussian_power(g, s):
    """ Pointwise power g^s. """
    if not s > 0:
        raise ValueError("power must be positive, got %s" % s)
    return IsotropicGaussian(g.amplitude ** s, g.decay * s, g.center)


def gaussian_lp_norm(g, p):
    """
    L^p norm ``c * (pi/(a*p))^(d/(2p))``; for p < 1 the same expression (a quasi-norm).
    """
    if not p > 0:
        raise ValueError("p must be positive, got %s" % p)
    return g.amplitude * (math.pi / (g.decay * p)) ** (g.dimension / (2 * p))


def gaussian_mass(g):
    return gaussian_lp_norm(g, 1)


def mixture_mass(m):
    return sum(gaussian_mass(g) for g in m.terms)


def _evolve_term(g, s):
    """ g * H_s for s >= 0. """
    if s == 0:
        return g
    shrink = math.pi / (math.pi + g.decay * s)
    return IsotropicGaussian(g.amplitude * shrink ** (g.dimension / 2), g.decay * shrink,
                             g.center)


def evolve_atoms(mu, sigma, t):
    """
    Solution at time t of ``du/dt = (sigma/4pi) Lap u`` with initial datum the measure `mu`:
    one term ``w * H_{sigma*t}(x - location)`` per atom.

    :param AtomicMeasure mu:
    :param float sigma: diffusion rate, must be positive for atomic data
    :param float t: time, positive
    :returns: GaussianMixture
    """
    if not t > 0:
        raise ValueError("time must be positive, got %s" % t)
    if sigma < 0:
        raise ValueError("diffusion rate must be nonnegative, got %s" % sigma)
    if sigma == 0:
        raise ValueError("a flow with sigma=0 is constant in time and needs a Gaussian mixture "
                         "initial datum, not an atomic measure")
    kernel = heat_kernel(sigma * t, mu.dimension)
    return GaussianMixture(
        IsotropicGaussian(weight * kernel.amplitude, kernel.decay, location)
        for location, weight in mu.atoms
    )


def evolve_mixture(m, sigma, t):
    """ Heat evolution of a Gaussian mixture; sigma=0 returns the mixture unchanged. """
    if t < 0:
        raise ValueError("time must be nonnegative, got %s" % t)
    if sigma < 0:
        raise ValueError("diffusion rate must be nonnegative, got %s" % sigma)
    return GaussianMixture(_evolve_term(g, sigma * t) for g in m.terms)


def _as_points(x, d):
    pts = np.asarray(x, dtype=float)
    if d == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
        pts = pts[..., np.newaxis]
    if pts.shape[-1] != d:
        raise ValueError("points of dimension %d passed for a mixture of dimension %d"
                         % (pts.shape[-1], d))
    return pts


def _log_terms(m, x, period):
    """
    Returns (log of every term at every point, displacements, decays), shapes (..., K),
    (..., K, d) and (K,). With a period, displacements are taken to the nearest periodic image.
    """
    pts = _as_points(x, m.dimension)
    log_amplitudes = np.log([g.amplitude for g in m.terms])
    decays = np.array([g.decay for g in m.terms])
    centers = np.array([g.center for g in m.terms])
    disp = pts[..., np.newaxis, :] - centers
    if period is not None:
        disp = disp - period * np.round(disp / period)
    r2 = np.sum(disp ** 2, axis=-1)
    return log_amplitudes - decays * r2, disp, decays


def _softmax(log_terms):
    log_total = np.logaddexp.reduce(log_terms, axis=-1)
    return np.exp(log_terms - log_total[..., np.newaxis]), log_total


def mixture_log_eval(m, x, period=None):
    """ log u(x), computed by log-sum-exp so that far tails do not underflow. """
    log_terms, _, _ = _log_terms(m, x, period)
    return np.logaddexp.reduce(log_terms, axis=-1)


def mixture_eval(m, x, period=None):
    """
    Pointwise value of the mixture.

    :param GaussianMixture m:
    :param x: point(s), shape (..., d)
    :param float period: optional torus period; displacements use the nearest image
    :returns: array of shape (...)
    """
    return np.exp(mixture_log_eval(m, x, period))


def mixture_log_gradient(m, x, period=None):
    """ grad u / u, shape (..., d). """
    log_terms, disp, decays = _log_terms(m, x, period)
    weights, _ = _softmax(log_terms)
    return np.sum((weights * -2 * decays)[..., np.newaxis] * disp, axis=-2)


def mixture_laplacian_ratio(m, x, period=None):
    """ Lap u / u. """
    log_terms, disp, decays = _log_terms(m, x, period)
    weights, _ = _softmax(log_terms)
    r2 = np.sum(disp ** 2, axis=-1)
    return np.sum(weights * (4 * decays ** 2 * r2 - 2 * decays * m.dimension), axis=-1)


def mixture_log_laplacian(m, x, period=None):
    """ div(grad u / u) = Lap u / u - |grad u / u|^2. """
    grad = mixture_log_gradient(m, x, period)
    return mixture_laplacian_ratio(m, x, period) - np.sum(grad ** 2, axis=-1)


def log_gradient_bound(x, t, support_radius, sigma=1.0):
    """
    Upper bound ``2pi(|x| + M)/(sigma*t)`` on |grad u / u| for a heat flow of rate sigma whose
    datum (atoms or term centers) lies in the ball of radius M.
    """
    pts = np.asarray(x, dtype=float)
    norm = np.abs(pts) if pts.ndim <= 1 else np.sqrt(np.sum(pts ** 2, axis=-1))
    return 2 * math.pi * (norm + support_radius) / (sigma * t)


class HeatFlow(namedtuple('HeatFlow', ['initial', 'sigma'])):
    """
    The exact solution of ``du/dt = (sigma/4pi) Lap u`` with an AtomicMeasure or GaussianMixture
    initial datum.
    """
    __slots__ = ()

    def __new__(cls, initial, sigma):
        if sigma < 0:
            raise ValueError("diffusion rate must be nonnegative, got %s" % sigma)
        if sigma == 0 and isinstance(initial, AtomicMeasure):
            raise ValueError("a flow with sigma=0 is constant in time and needs a Gaussian "
                             "mixture initial datum, not an atomic measure")
        return super().__new__(cls, initial, float(sigma))

    @property
    def dimension(self):
        return self.initial.dimension

    @property
    def is_atomic(self):
        return isinstance(self.initial, AtomicMeasure)

    @property
    def support_radius(self):
        return self.initial.support_radius

    @property
    def mass(self):
        if self.is_atomic:
            return self.initial.total_mass
        return mixture_mass(self.initial)

    def at(self, t):
        """ The mixture u(t, .). """
        if self.is_atomic:
            return evolve_atoms(self.initial, self.sigma, t)
        return evolve_mixture(self.initial, self.sigma, t)

    def time_log_derivative(self, t, x, period=None):
        """ (du/dt)/u = (sigma/4pi) Lap u / u at time t. """
        if self.sigma == 0:
            return np.zeros(np.shape(_as_points(x, self.dimension))[:-1])
        return self.sigma / (4 * math.pi) * mixture_laplacian_ratio(self.at(t), x, period)

    def with_sigma(self, sigma):
        return HeatFlow(self.initial, sigma)
