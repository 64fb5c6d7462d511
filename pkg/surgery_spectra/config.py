"""Centralized numerical defaults for surgery experiments."""

from __future__ import annotations

import math

# Mesh construction
DELTA0 = 0.4  # Radius of the flat polar patch carved into primitives
MIN_MOEBIUS_RESOLUTION = 8  # Circle vertices for Moebius bands (must be even)
FLAT_ANGLE_TOL = 1e-9  # Angle-sum tolerance inside declared flat patches
DEGENERATE_ANGLE_TOL = 1e-12
TORUS_PATCH_FRACTION = 0.45  # Patch radius as a fraction of the shortest period

# Spectrum
EIGEN_COUNT = 8
EIGEN_TOL = 1e-10
RESIDUAL_CHECK_TOL = 1e-6
MULTIPLICITY_REL_TOL = 1e-4
SHIFT_FACTOR = 1e-6  # sigma = -SHIFT_FACTOR * mean(diag S)
DENSE_SOLVE_LIMIT = 300  # Below this many vertices use a dense solver
SEED = 20240601

# Gluing
MIN_NECK_LENGTH = 1.5 * math.log(2.0)
BAND_ASPECT = 2.0  # Max axial/circumferential spacing in the neck band
REMOVAL_FACTOR = 2.0  # Remesh radius as a multiple of epsilon
RING_FILL_FRACTION = 0.75  # Regular rings stop at this fraction of the hole radius
COLLAR_LOG_WIDTH = 0.3  # Straightening collar spans epsilon .. epsilon * e^c

# Extension operators
RADIAL_GAUSS_POINTS = 8  # Minimum Gauss-Legendre points per dyadic ring
PANEL_DEGREE = 24  # Chebyshev degree per axial panel
PANEL_STIFFNESS = 4.0  # Max k * panel width for exact profiles
TRACE_FIT_WARN = 1e-2  # Relative trace-fit residual that triggers a warning

# Maximization
ASCENT_MAX_ITER = 60
ASCENT_TOL = 1e-5
ASCENT_CLUSTER_TOL = 1e-2  # Relative gap below which eigenvalues move together
QP_ITERATIONS = 300  # Projected-gradient steps for the min-norm direction
ASCENT_STEP = 0.2  # Initial step as a fraction of the mean density
BACKTRACK_MIN_STEP = 1e-8
MONOTONE_TOL = 1e-10
GRAM_RANK_TOL = 1e-6
GRAM_ITERATIONS = 400
BALANCE_MAX_ITER = 10_000
BALANCE_TOL = 1e-10
BALANCE_UNIT_TOL = 0.05

# Files
MESH_FLOAT_DIGITS = 17  # Significant digits for lengths and chart coordinates
