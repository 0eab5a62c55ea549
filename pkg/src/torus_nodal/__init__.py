"""Nodal volumes of random Laplace eigenfunctions on the flat torus."""
from __future__ import annotations

from .ensemble import Eigenfunction, evaluate, evaluate_grid, sample_eigenfunction, two_point_jet, u_moment_exact
from .errors import TorusNodalError
from .kacrice import covariance_blocks, expected_volume, kernel_K, second_moment
from .lattice import FrequencySet, enumerate_frequencies, orbit_decomposition
from .nodal import nodal_volume_marching, nodal_volume_smoothed

__version__ = "0.1.0"

__all__ = [
    "Eigenfunction",
    "FrequencySet",
    "TorusNodalError",
    "covariance_blocks",
    "enumerate_frequencies",
    "evaluate",
    "evaluate_grid",
    "expected_volume",
    "kernel_K",
    "nodal_volume_marching",
    "nodal_volume_smoothed",
    "orbit_decomposition",
    "sample_eigenfunction",
    "second_moment",
    "two_point_jet",
    "u_moment_exact",
]
