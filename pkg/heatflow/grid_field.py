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
:mod:`heatflow.grid_field` --- periodic sampled fields
======================================================

Fields sampled on the torus [-L/2, L/2)^d with N nodes per dimension, node i at -L/2 + i*h.
Convolution, heat steps and differentiation are spectral (Fourier convention exp(-2 pi i x.xi),
so H_t has multiplier exp(-pi t |xi|^2) and the Laplacian has symbol -4 pi^2 |xi|^2).

Sampling requires every Gaussian term to have decayed below ``WRAPAROUND_THRESHOLD`` of its peak
at distance L/2 from its center; periodization error is then negligible.
"""

import logging
import math
from collections import namedtuple

import numpy as np

from heatflow.defines import (
    BULK_FRACTION,
    CLAMP_THRESHOLD,
    LOG_FLOOR,
    MIN_POINTS,
    WRAPAROUND_FACTOR,
    WRAPAROUND_THRESHOLD,
)
from heatflow.gaussian_oracle import DIMENSIONS, mixture_eval
from heatflow.util.reports import csv_text

RESOLUTION_EXPONENT = 36.0
""" exp(-RESOLUTION_EXPONENT) bounds the relative quadrature error we accept silently """

RESIDUAL_RESOLUTION_EXPONENT = 100.0
""" Spectral derivatives truncate at the Nyquist wavenumber, where a term decays like exp(-E/4) """


class DomainTooSmall(ValueError):
    """
    The period is too small for the support of a sampled mixture.
    `min_period` is the smallest admissible period.
    """

    def __init__(self, period, min_period):
        super().__init__("domain too small for support: period %g, need more than %g"
                         % (period, min_period))
        self.period = period
        self.min_period = min_period


class GridSpec(namedtuple('GridSpec', ['dimension', 'period', 'points'])):
    __slots__ = ()

    def __new__(cls, dimension, period, points):
        if dimension not in DIMENSIONS:
            raise ValueError("dimension must be 1 or 2, got %s" % dimension)
        if not period > 0:
            raise ValueError("period must be positive, got %s" % period)
        points = int(points)
        if points < MIN_POINTS or points & (points - 1):
            raise ValueError("points per dimension must be a power of two >= %d, got %d"
                             % (MIN_POINTS, points))
        return super().__new__(cls, dimension, float(period), points)

    @property
    def spacing(self):
        return self.period / self.points

    @property
    def cell_volume(self):
        return self.spacing ** self.dimension

    @property
    def shape(self):
        return (self.points,) * self.dimension

    @property
    def axes(self):
        return tuple(range(self.dimension))

    @property
    def coordinates(self):
        return -self.period / 2 + self.spacing * np.arange(self.points)

    def mesh(self):
        """ Node coordinates, shape (N, ..., N, d). """
        grids = np.meshgrid(*([self.coordinates] * self.dimension), indexing='ij')
        return np.stack(grids, axis=-1)

    def node(self, index):
        """ Coordinates of the node with the given (integer or tuple) index. """
        index = (index,) if np.ndim(index) == 0 else tuple(index)
        return tuple(float(self.coordinates[i]) for i in index)

    def wavevector(self, zero_nyquist=False):
        """ Frequency components k/L per axis, each broadcast to the field shape. """
        freqs = np.fft.fftfreq(self.points, d=self.spacing)
        if zero_nyquist:
            freqs[self.points // 2] = 0.0
        return np.meshgrid(*([freqs] * self.dimension), indexing='ij')

    def frequency_squared(self):
        return sum(k ** 2 for k in self.wavevector())

    def with_points(self, points):
        return GridSpec(self.dimension, self.period, points)


class GridField(namedtuple('GridField', ['spec', 'values'])):
    """
    A nonnegative field sampled on `spec`. Values are stored read-only with the field shape.
    """
    __slots__ = ()

    def __new__(cls, spec, values):
        values = np.array(values, dtype=float)
        if values.shape != spec.shape:
            values = values.reshape(spec.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("grid field values must be finite")
        if values.size and values.min() < 0:
            raise ValueError("grid field values must be nonnegative, found %g" % values.min())
        values.setflags(write=False)
        return super().__new__(cls, spec, values)

    @property
    def mass(self):
        return self.spec.cell_volume * float(np.sum(self.values))

    def power(self, s):
        return GridField(self.spec, self.values ** s)


def min_period(m):
    """ Smallest period for which every term of `m` passes the wraparound check. """
    smallest_decay = min(g.decay for g in m.terms)
    return 2 * math.sqrt(math.log(1 / WRAPAROUND_THRESHOLD) / smallest_decay)


def check_wraparound(m, spec):
    """ :raises DomainTooSmall: if a term is not concentrated within distance L/2 """
    needed = min_period(m)
    if spec.period <= needed:
        raise DomainTooSmall(spec.period, needed)


def auto_period(mixtures):
    """
    Period L = 4*(M + k*sqrt(s_max)) for mixtures whose term centers lie within radius M and whose
    widest term is a heat kernel of time s_max = pi/decay; k = sqrt(ln(1/threshold)/pi).
    """
    radius = max(m.support_radius for m in mixtures)
    s_max = max(math.pi / g.decay for m in mixtures for g in m.terms)
    period = 4 * (radius + WRAPAROUND_FACTOR * math.sqrt(s_max))
    logging.info("auto period L = 4*(M + k*sqrt(s_max)) = 4*(%g + %g*sqrt(%g)) = %g"
                 % (radius, WRAPAROUND_FACTOR, s_max, period))
    return period


def resolution_exponent(m, spec, power=1.0):
    """ Trapezoid error exponent pi^2/(a h^2) of the narrowest term of m^power. """
    widest_decay = max(g.decay for g in m.terms) * power
    return math.pi ** 2 / (widest_decay * spec.spacing ** 2)


def check_resolution(m, spec, power=1.0, threshold=RESOLUTION_EXPONENT):
    """
    Log a warning when the narrowest term of m^power is under-resolved by the grid, i.e. when
    :func:`resolution_exponent` drops below `threshold`.

    :returns: the error exponent
    """
    exponent = resolution_exponent(m, spec, power)
    if exponent < threshold:
        logging.warning("grid spacing %g under-resolves a term of m^%g (error ~ exp(-%.1f), "
                        "need exp(-%.0f))" % (spec.spacing, power, exponent, threshold))
    return exponent


def sample_mixture(m, spec):
    """
    Sample a Gaussian mixture on the grid, using nearest periodic images.

    :raises DomainTooSmall: if the wraparound precondition fails
    """
    if m.dimension != spec.dimension:
        raise ValueError("mixture of dimension %d sampled on a %d-dimensional grid"
                         % (m.dimension, spec.dimension))
    check_wraparound(m, spec)
    return GridField(spec, mixture_eval(m, spec.mesh(), period=spec.period))


def _clamp(values, what):
    if not values.size:
        return values
    scale = float(np.max(np.abs(values)))
    low = float(values.min())
    if low < -CLAMP_THRESHOLD * scale:
        raise ArithmeticError("%s produced significantly negative values (%g, scale %g)"
                              % (what, low, scale))
    return np.maximum(values, 0.0)


def convolve_arrays(spec, a, b):
    """
    Circular convolution h^d sum_j a(x - y_j) b(y_j) of two (possibly signed) sampled functions.
    """
    axes = spec.axes
    product = np.fft.fftn(a, axes=axes) * np.fft.fftn(b, axes=axes)
    c = np.fft.ifftn(product, axes=axes).real * spec.cell_volume
    # node x_i - y_j has index i - j + N/2
    return np.roll(c, (spec.points // 2,) * spec.dimension, axis=axes)


def fft_convolve(f, g):
    """
    Convolution of two nonnegative fields; round-off negatives are clamped to zero.

    :raises ValueError: on spec mismatch
    :raises ArithmeticError: on significantly negative output
    """
    if f.spec != g.spec:
        raise ValueError("cannot convolve fields on different grids: %s, %s" % (f.spec, g.spec))
    return GridField(f.spec, _clamp(convolve_arrays(f.spec, f.values, g.values), 'convolution'))


def grid_lp_norm(f, p):
    """ (h^d sum f^p)^(1/p); a quasi-norm for p < 1. """
    if not p > 0:
        raise ValueError("p must be positive, got %s" % p)
    return float(f.spec.cell_volume * np.sum(f.values ** float(p))) ** (1 / float(p))


def heat_step(f, sigma, dt):
    """ Apply the heat multiplier exp(-sigma pi dt |xi|^2). """
    if sigma < 0 or dt < 0:
        raise ValueError("heat step needs sigma >= 0 and dt >= 0")
    if sigma == 0 or dt == 0:
        return f
    spec = f.spec
    multiplier = np.exp(-sigma * math.pi * dt * spec.frequency_squared())
    values = np.fft.ifftn(np.fft.fftn(f.values) * multiplier).real
    return GridField(spec, _clamp(values, 'heat step'))


def spectral_grad_laplacian(values, spec=None):
    """
    Spectral gradient and Laplacian of the trigonometric interpolant. The Nyquist mode is dropped
    from the gradient.

    :param values: GridField, or a plain array together with `spec`
    :returns: (list of d gradient arrays, Laplacian array)
    """
    if isinstance(values, GridField):
        spec, values = values.spec, values.values
    transform = np.fft.fftn(values)
    grads = [np.fft.ifftn(2j * math.pi * k * transform).real
             for k in spec.wavevector(zero_nyquist=True)]
    laplacian = np.fft.ifftn(-4 * math.pi ** 2 * spec.frequency_squared() * transform).real
    return grads, laplacian


def log_divergence(f, floor=LOG_FLOOR):
    """
    div(grad u / u) = Lap u/u - |grad u|^2/u^2 from spectral derivatives.

    :returns: (values, mask) where mask marks nodes with u >= floor * max u; values outside the
        mask are 0
    """
    grads, laplacian = spectral_grad_laplacian(f)
    u = f.values
    mask = u >= floor * u.max()
    safe = np.where(mask, u, 1.0)
    div = laplacian / safe - sum(g ** 2 for g in grads) / safe ** 2
    return np.where(mask, div, 0.0), mask


def periodic_distance(spec, center=None):
    """ Distance of every node to `center` on the torus. """
    center = np.zeros(spec.dimension) if center is None else np.asarray(center, dtype=float)
    disp = spec.mesh() - center
    disp = disp - spec.period * np.round(disp / spec.period)
    return np.sqrt(np.sum(disp ** 2, axis=-1))


def bulk_mask(spec, center=None, fraction=BULK_FRACTION):
    """ Nodes within distance fraction*L of `center`. """
    return periodic_distance(spec, center) < fraction * spec.period


def fourier_lp_norm(values, spec, p):
    """
    L^p norm of the Fourier transform, approximated by the DFT on the frequency lattice of
    spacing 1/L.
    """
    if isinstance(values, GridField):
        values = values.values
    transform = np.abs(np.fft.fftn(values)) * spec.cell_volume
    return float(np.sum(transform ** p) / spec.period ** spec.dimension) ** (1 / p)


def dump_field_csv(f, experiment):
    """ CSV text with columns x[,y],value and a header line naming the experiment. """
    columns = ['x', 'y'][:f.spec.dimension] + ['value']
    mesh = f.spec.mesh().reshape(-1, f.spec.dimension)
    rows = (tuple(node) + (value,) for node, value in zip(mesh, f.values.reshape(-1)))
    return csv_text(['experiment=%s' % experiment], columns, rows)
