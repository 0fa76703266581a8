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

import math


WRAPAROUND_THRESHOLD = 1e-14
""" Relative size of a sampled term at distance L/2 from its center below which wraparound is
ignored """

WRAPAROUND_FACTOR = math.sqrt(math.log(1 / WRAPAROUND_THRESHOLD) / math.pi)
""" k in the auto-sized period L = 4*(M + k*sqrt(s_max)) """

CLAMP_THRESHOLD = 1e-13  # relative to the largest output magnitude
EXACT_TOLERANCE = 1e-12

MONOTONICITY_TOLERANCE = 1e-9
RESIDUAL_TOLERANCE = 1e-8
WEIGHTED_RESIDUAL_TOLERANCE = 1e-6
LEMMA_TOLERANCE = 1e-5
DERIVATIVE_TOLERANCE = 1e-2
PLANCHEREL_TOLERANCE = 1e-5
ENDPOINT_TOLERANCE = 1e-2
SANDWICH_SLACK = 1e-6
FLATNESS_TOLERANCE_GRID = 1e-4
FLATNESS_TOLERANCE_ORACLE = 1e-8
DERIVATIVE_FLOOR = 1e-8  # |Q'| below this fraction of Q is not compared

LOG_FLOOR = 1e-3
""" log-derivatives are only trusted where the field exceeds this fraction of its maximum """

BULK_FRACTION = 0.25  # residual minima are taken within distance BULK_FRACTION*L of the center

MAX_TRIPLE_QUADRATURE_POINTS = 512
MIN_POINTS = 16

MODE_QCURVE = 'qcurve'
MODE_QPRIME = 'qprime'
MODE_RESIDUAL = 'residual'
MODE_WEIGHTED = 'weighted'
MODE_LEMMA = 'lemma'
MODE_HAUSDORFF_YOUNG = 'hausdorff_young'
MODE_LIMITS = 'limits'
MODE_CONSTANTS = 'constants'
MODE_VERIFY = 'verify'
MODES = (
    MODE_QCURVE,
    MODE_QPRIME,
    MODE_RESIDUAL,
    MODE_WEIGHTED,
    MODE_LEMMA,
    MODE_HAUSDORFF_YOUNG,
    MODE_LIMITS,
    MODE_CONSTANTS,
    MODE_VERIFY,
)

RESIDUAL_CONVOLUTION = 'convolution'
RESIDUAL_GEOMETRIC_MEAN = 'geometric_mean'
RESIDUAL_HARMONIC_ADDITION = 'harmonic_addition'
RESIDUAL_KINDS = (RESIDUAL_CONVOLUTION, RESIDUAL_GEOMETRIC_MEAN, RESIDUAL_HARMONIC_ADDITION)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_IO = 2
