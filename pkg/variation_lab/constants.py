"""Numerical constants shared across the laboratory.

This module collects the fixed numbers of the theory (truncation thresholds,
tolerances) together with process-wide defaults for grids, quadrature and
reporting. Defaults that a user may want to change per run are also exposed
through `variation_lab.utility.get_setting`.
"""

import math

__all__ = [
    "PROFILE_LO_FACTOR",
    "PROFILE_HI_FACTOR",
    "LIP_TOLERANCE",
    "GRAPH_MEMBERSHIP_TOLERANCE",
    "MASS_TOLERANCE",
    "CZ_BOUND_SLACK",
    "ODDNESS_TOLERANCE",
    "EPS_GUARD_FACTOR",
    "DEFAULT_PER_OCTAVE",
    "DEFAULT_GRID_POINTS",
    "MAX_SKIPPED_OFFSETS",
    "BRUTEFORCE_MAX_LENGTH",
    "INEQUALITY_SLACK",
    "STABILITY_FACTOR",
    "FLOAT_DIGITS",
    "SCHEMA_VERSION",
    "DEFAULT_ALPHA_POINTS",
    "SEED_AGREEMENT",
    "RHO_FLOOR",
    "default_c_gamma",
]

PROFILE_LO_FACTOR: float = 2.1
"""Lower threshold of the truncation profile, in units of sqrt(n)."""

PROFILE_HI_FACTOR: float = 3.0
"""Upper threshold of the truncation profile, in units of sqrt(n)."""

LIP_TOLERANCE: float = 1e-9
"""Relative slack allowed when comparing sampled difference quotients to Lip(A)."""

GRAPH_MEMBERSHIP_TOLERANCE: float = 1e-12
MASS_TOLERANCE: float = 1e-6

CZ_BOUND_SLACK: float = 1e-3
"""Relative slack on the size and smoothness bounds of a kernel."""

ODDNESS_TOLERANCE: float = 1e-12

EPS_GUARD_FACTOR: float = 4.0
"""Smallest admissible truncation parameter, as a multiple of the sampling step h."""

DEFAULT_PER_OCTAVE: int = 8
DEFAULT_GRID_POINTS: int = 4

MAX_SKIPPED_OFFSETS: float = 0.2
"""Largest fraction of translation offsets allowed to fall on empty cells."""

BRUTEFORCE_MAX_LENGTH: int = 20

INEQUALITY_SLACK: float = 1e-9
"""Additive slack used by pointwise inequality checks."""

STABILITY_FACTOR: float = 2.0
"""Largest admissible ratio between recorded constants of successive refinements."""

FLOAT_DIGITS: int = 17
SCHEMA_VERSION: int = 1

DEFAULT_ALPHA_POINTS: int = 8
"""Cells per side of Q used by experiments when coarse-graining a measure for alpha."""

SEED_AGREEMENT: float = 1e-3

RHO_FLOOR: float = 2.0
"""Exponent above which the variational bounds are claimed; smaller values need diagnostic mode."""


def default_c_gamma(n: int, lip: float) -> float:
    """Return the window constant C_Gamma for a graph.

    Args:
        n (int): Dimension of the graph.
        lip (float): Lipschitz constant of the graph.

    Returns:
        float: ceil(10 sqrt(n) (1 + lip)) + 1, which exceeds 10 sqrt(n) (1 + lip).

    Example:
        >>> default_c_gamma(1, 0.0)
        11.0
    """
    return float(math.ceil(10.0 * math.sqrt(n) * (1.0 + lip)) + 1)

