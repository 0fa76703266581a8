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
Built-in experiment configurations: seeded random initial data and the grids they need.
Shared by the verification suite and the tests, so both always look at the same data.
"""

import math
from collections import namedtuple
from fractions import Fraction

import numpy as np

from heatflow.gaussian_oracle import AtomicMeasure, GaussianMixture, IsotropicGaussian

# Records of the built-in configurations, so that tests can inspect them as ground truth.
ConfigDef = namedtuple('ConfigDef', ['name', 'initial'])
GridDef = namedtuple('GridDef', ['period', 'points'])
LemmaDraw = namedtuple('LemmaDraw', ['u1', 'u2', 'alpha1', 'alpha2', 'lambda1', 'lambda2', 'node'])

SEED = 20200101

# Grids for the experiments over t in [1e-2, 1e2]; the period covers the widest flow at t=100.
WIDE_GRID = GridDef(64.0, 16384)
REVERSE_GRID = GridDef(128.0, 16384)
ENDPOINT_GRID = GridDef(64.0, 4096)
HAUSDORFF_GRID = GridDef(136.0, 16384)
WEIGHTED_GRID = GridDef(72.0, 16384)
# Grids for fixed-time checks with t in [0.5, 2]
CONSTANT_GRID = GridDef(16.0, 256)
QPRIME_GRID = GridDef(16.0, 256)
CLOSURE_GRID = GridDef(16.0, 1024)
REVERSE_CLOSURE_GRID = GridDef(24.0, 1024)
POINTWISE_GRID = GridDef(16.0, 512)
LEMMA_GRID = GridDef(16.0, 256)

CLOSURE_TIMES = (0.5, 0.75, 1.0, 1.5, 2.0)
POINTWISE_TIMES = (1.0, 1.5, 2.0)
QPRIME_TIMES = (0.5, 1.0, 2.0)


def log_times(t_min=1e-2, t_max=1e2, count=32):
    return tuple(float(t) for t in np.geomspace(t_min, t_max, count))


def _rng(offset):
    return np.random.default_rng(SEED + offset)


def _separated(rng, count, radius, min_separation, max_separation=None):
    """ `count` sorted points in [-radius, radius] with pairwise gaps in the given range. """
    while True:
        points = np.sort(rng.uniform(-radius, radius, count))
        gaps = np.diff(points)
        if np.all(gaps >= min_separation) and (max_separation is None
                                               or np.all(gaps <= max_separation)):
            return [float(x) for x in points]


def random_atoms(rng, count, radius=1.0, min_separation=0.4, max_separation=None):
    """ Atoms with weights in [0.5, 2]. """
    locations = _separated(rng, count, radius, min_separation, max_separation)
    return AtomicMeasure([(x, float(rng.uniform(0.5, 2.0))) for x in locations])


def kernel_term(weight, s, center=0.0):
    """ weight * H_s(x - center) in d=1. """
    return IsotropicGaussian(weight * s ** -0.5, math.pi / s, (center,))


def random_mixture(rng, count, radius=1.0, widths=(0.2, 0.5), min_separation=0.4,
                   max_separation=None):
    """ Sum of weighted heat kernels H_s, s uniform in `widths`. """
    centers = _separated(rng, count, radius, min_separation, max_separation)
    return GaussianMixture(kernel_term(float(rng.uniform(0.5, 2.0)),
                                       float(rng.uniform(*widths)), c) for c in centers)


def unit_atom(location=0.0):
    return AtomicMeasure([(location, 1.0)])


def extremal(n):
    """ Unit atoms at the origin: every flow is a heat kernel. """
    return ConfigDef('extremal-%d' % n, [unit_atom() for _ in range(n)])


def forward_battery(count=20):
    """ Two- and three-atom data, atoms at least 0.4 apart inside [-1, 1]. """
    rng = _rng(1)
    return [ConfigDef('forward-%02d' % i,
                      [random_atoms(rng, int(rng.integers(2, 4))) for _ in range(2)])
            for i in range(count)]


def reverse_battery(count=20):
    """ Two-term mixtures of kernels of width 0.2 to 0.5. """
    rng = _rng(2)
    return [ConfigDef('reverse-%02d' % i, [random_mixture(rng, 2) for _ in range(2)])
            for i in range(count)]


def nfold_battery(count=10):
    rng = _rng(3)
    return [ConfigDef('nfold-%02d' % i,
                      [random_atoms(rng, int(rng.integers(1, 3))) for _ in range(3)])
            for i in range(count)]


def qprime_battery():
    """ Two-atom flow against a one-atom flow. """
    return [
        ConfigDef('qprime-00', [AtomicMeasure([(-1.0, 1.0), (1.0, 1.0)]), unit_atom()]),
        ConfigDef('qprime-01', [AtomicMeasure([(-1.0, 0.5), (1.0, 1.5)]), unit_atom()]),
        ConfigDef('qprime-02', [AtomicMeasure([(-1.0, 1.0), (1.0, 1.0)]), unit_atom(0.5)]),
        ConfigDef('qprime-03', [AtomicMeasure([(-1.25, 1.0), (1.0, 2.0)]), unit_atom(-0.25)]),
        ConfigDef('qprime-04', [unit_atom(0.5), AtomicMeasure([(-1.0, 1.0), (1.0, 0.75)])]),
    ]


def closure_battery(count=20):
    """ Atoms 2 to 2.5 apart, so that fractional powers stay resolved at N=1024, L=16. """
    rng = _rng(4)
    configs = []
    for i in range(count):
        initial = [random_atoms(rng, int(rng.integers(1, 3)), radius=1.25, min_separation=2.0)
                   for _ in range(2)]
        configs.append(ConfigDef('closure-%02d' % i, initial))
    return configs


def reverse_closure_battery(count=20):
    """ Mixtures of width-0.25 kernels at most 1 apart. """
    rng = _rng(5)
    return [ConfigDef('reverse-closure-%02d' % i,
                      [random_mixture(rng, 2, radius=0.5, widths=(0.25, 0.25), min_separation=0.0,
                                      max_separation=1.0)
                       for _ in range(2)])
            for i in range(count)]


def pointwise_battery(count=10):
    """ Two-atom data inside [-0.5, 0.5] for unit-rate flows. """
    rng = _rng(6)
    return [ConfigDef('pointwise-%02d' % i,
                      [random_atoms(rng, 2, radius=0.5, min_separation=0.0) for _ in range(2)])
            for i in range(count)]


def endpoint_battery(count=5):
    """ Two-term mixtures of width-1 kernels inside [-0.5, 0.5]. """
    rng = _rng(7)
    return [ConfigDef('endpoint-%02d' % i,
                      [random_mixture(rng, 2, radius=0.5, widths=(1.0, 1.0), min_separation=0.0)
                       for _ in range(2)])
            for i in range(count)]


def hausdorff_battery(count=10):
    """ Two atoms at least 1 apart, one flow per configuration. """
    rng = _rng(8)
    return [ConfigDef('hausdorff-%02d' % i, [random_atoms(rng, 2, min_separation=1.0)])
            for i in range(count)]


def weighted_battery(count=10):
    rng = _rng(9)
    return [ConfigDef('weighted-%02d' % i, [random_atoms(rng, 2) for _ in range(2)])
            for i in range(count)]


def lemma_draws(count=20):
    """ Random two-term mixtures of width-1 kernels with random powers, weights and nodes. """
    rng = _rng(10)
    spacing = LEMMA_GRID.period / LEMMA_GRID.points
    draws = []
    for _ in range(count):
        u1 = random_mixture(rng, 2, radius=0.5, widths=(1.0, 1.0), min_separation=0.0)
        u2 = random_mixture(rng, 2, radius=0.5, widths=(1.0, 1.0), min_separation=0.0)
        x = float(rng.uniform(-2.0, 2.0))
        node = int(round((x + LEMMA_GRID.period / 2) / spacing))
        draws.append(LemmaDraw(u1, u2, float(rng.uniform(0.3, 1.0)), float(rng.uniform(0.3, 1.0)),
                               float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.1, 2.0)), node))
    return draws


def random_exponents(rng):
    """
    A random admissible pair (p1, p2) as exact fractions, forward or reverse regime with equal
    probability.
    """
    while True:
        if rng.uniform() < 0.5:
            x1 = Fraction(int(rng.integers(5, 101)), 100)
            x2 = Fraction(int(rng.integers(5, 101)), 100)
            if x1 + x2 <= 1:
                continue
        else:
            x1 = Fraction(int(rng.integers(100, 400)), 100)
            x2 = Fraction(int(rng.integers(100, 400)), 100)
        return 1 / x1, 1 / x2
