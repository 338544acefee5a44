"""Brute-force references for the exact functionals and coefficients.

These enumerate every candidate directly and are meant for short families and
small point sets only. They back both the test suite and ``verify``.
"""

import functools
import itertools
import math
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from variation_lab.constants import BRUTEFORCE_MAX_LENGTH
from variation_lab.models import CZKernel, DiscreteMeasure, SampledFamily, VCube, WindowSpec
from variation_lab.utility import exact_sum
from variation_lab.validators import is_exponent, validation_error


def _increasing(family) -> list:
    values = family.values if isinstance(family, SampledFamily) else np.asarray(family, dtype=float)
    return [float(v) for v in values[::-1]]


def rho_variation_bruteforce(family, rho: float) -> float:
    """Largest ``(sum |dv|^rho)^(1/rho)`` over every subsequence, by enumeration."""
    rho = is_exponent(rho, "rho")
    values = family.values if isinstance(family, SampledFamily) else np.asarray(family, dtype=float)
    size = len(values)
    if size > BRUTEFORCE_MAX_LENGTH:
        raise validation_error(f"brute force is limited to {BRUTEFORCE_MAX_LENGTH} samples, got {size}", "family")
    best = 0.0
    for length in range(2, size + 1):
        for subsequence in itertools.combinations(range(size), length):
            steps = [abs(values[b] - values[a]) for a, b in zip(subsequence, subsequence[1:])]
            total = max(steps) if math.isinf(rho) else sum(s**rho for s in steps)
            best = max(best, total)
    return best if math.isinf(rho) else best ** (1.0 / rho)


def lambda_jumps_bruteforce(family, lam: float) -> int:
    """Largest number of pairs i < j <= i' < j' ... with |v_j - v_i| > lambda."""
    v = _increasing(family)

    @functools.lru_cache(maxsize=None)
    def best(start: int) -> int:
        result = 0
        for i in range(start, len(v)):
            for j in range(i + 1, len(v)):
                if abs(v[j] - v[i]) > lam:
                    result = max(result, 1 + best(j))
        return result

    return best(0)


def upcrossings_bruteforce(family, a: float, b: float) -> int:
    """Largest number of pairs i < j <= i' < j' ... with v_i < a and v_j > b."""
    v = _increasing(family)

    @functools.lru_cache(maxsize=None)
    def best(start: int) -> int:
        result = 0
        for i in range(start, len(v)):
            if v[i] >= a:
                continue
            for j in range(i + 1, len(v)):
                if v[j] > b:
                    result = max(result, 1 + best(j))
        return result

    return best(0)


def oscillation_bruteforce(family: SampledFamily, windows: WindowSpec) -> float:
    """Oscillation by choosing the best pair eps_m <= delta_m in every window."""
    eps, values = family.grid.values, family.values
    total = []
    for lo, hi in windows.windows():
        members = [k for k in range(len(eps)) if lo <= eps[k] <= hi]
        gaps = [abs(values[i] - values[j]) for i, j in itertools.combinations(members, 2)]
        total.append(max(gaps) ** 2 if gaps else 0.0)
    return math.sqrt(sum(total))


def beta2_line_search(points: np.ndarray, weights: np.ndarray, ell: float, angles: int = 3600) -> float:
    """beta_2 of planar points against lines, searching over the line angle.

    For a fixed normal direction the best offset is the weighted mean height.
    The angle is scanned on a grid and the best cell refined by a bounded
    scalar search.
    """
    points = np.atleast_2d(points)
    weights = np.asarray(weights, dtype=float)

    def cost(theta: float) -> float:
        heights = points @ np.array([-math.sin(theta), math.cos(theta)])
        offset = np.sum(weights * heights) / np.sum(weights)
        return float(np.sum(weights * (heights - offset) ** 2))

    grid = np.linspace(0.0, math.pi, angles, endpoint=False)
    start = grid[int(np.argmin([cost(t) for t in grid]))]
    step = math.pi / angles
    refined = minimize_scalar(cost, bounds=(start - step, start + step), method="bounded", options={"xatol": 1e-12})
    best = min(cost(start), float(refined.fun))
    return math.sqrt(best / ell / ell**2)


def conditional_avg_loops(measure: DiscreteMeasure, kernel: CZKernel, cell: VCube) -> float:
    """E_D mu by an explicit double loop over z in D and y outside D.

    Matches `variation_lab.martingale.conditional_avg` when no tail cut applies.
    """
    inside = cell.contains(measure.base_points)
    total, terms = 0.0, []
    for k in np.flatnonzero(inside):
        for l in np.flatnonzero(~inside):
            value = kernel(measure.points[k] - measure.points[l])[0]
            terms.append(value * measure.weights[k] * measure.weights[l])
        total += measure.weights[k]
    return exact_sum(terms) / total


def bl_two_point_search(
    x: Sequence[float],
    y: Sequence[float],
    depth_x: float,
    depth_y: float,
    steps: int = 4001,
) -> float:
    """dist_F(delta_x, delta_y) by scanning g(x) - g(y) over admissible pairs.

    Admissible values satisfy |g(x)| <= depth_x, |g(y)| <= depth_y and
    |g(x) - g(y)| <= |x - y|.
    """
    gap = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    best = 0.0
    for gx in np.linspace(-depth_x, depth_x, steps):
        gy = max(-depth_y, gx - gap)
        if gy <= depth_y:
            best = max(best, gx - gy)
    return best
