"""Pinned constants used by the trend checks and error bounds.

Each value was fixed from a pilot run (``torus-nodal calibrate`` for the
kernel and singular-set quantities, ``torus-nodal experiment variance`` for
the variance column) and is kept here so that checks do not tune themselves.

Pilot (seed 0, d = 2):

* ``K(z) sqrt(1 - u^2) / E`` at 300 random ``z`` for E = 25, 2e4 draws each:
  largest value plus three standard errors 5.49.
* ``meas(B) / integral(u^4)`` with ``M = floor(sqrt(E))`` cubes per side:
  12.19, 10.47, 2.84, 1.24, 1.62 for E = 5, 25, 65, 325, 1105.
* grid average of ``sigma_norm`` times ``sqrt(N)`` over nonsingular points
  (64^2 grid): 2.12, 2.00, 1.97, 1.92, 1.74 for the same energies.
"""
from __future__ import annotations

# Upper bound C with K(z) <= C * E / sqrt(1 - u(z)^2), used to bound the
# contribution of skipped near-diagonal cells in the second moment.
KERNEL_BOUND_CONSTANT = 8.0

# Allowed ratio max/min of Var(Z / sqrt(E)) * sqrt(N) across energies.
VARIANCE_BAND_FACTOR = 4.0

# Allowed ratio max/min of the sigma_norm * sqrt(N) averages across energies.
SIGMA_BAND_FACTOR = 4.0

# meas(B) <= C * integral(u^4) for the sampled singular-cube estimate.
SINGULAR_MEASURE_CONSTANT = 16.0
