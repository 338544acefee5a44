"""Sharp and smooth truncated singular integrals against discrete measures.

For a point x the contribution of each support point y,
``K(x - y) f(y) w(y)``, is computed once; sharp truncations mask it by
``|x - y| > eps`` and smooth truncations weight it by ``phi_eps(x - y)``.
Sums are correctly rounded (`variation_lab.utility.exact_sum`), so
configurations symmetric about x cancel to exactly zero.

Measures flagged ``flat_tail`` may be integrated with a symmetric far-field
cut: only y with ``|y~ - x~|_inf < M_x`` contribute, where ``M_x`` is the
l-infinity distance from x~ to the edge of the sampled base. The omitted
part is the integral of an odd kernel over a symmetric flat region.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from variation_lab.choices import TruncationModeChoices
from variation_lab.exceptions import GeometryError
from variation_lab.geometry import box_depth
from variation_lab.kernels import truncation_profile
from variation_lab.models import (
    CZKernel,
    DiscreteMeasure,
    EpsGrid,
    PrincipalValue,
    SampledFamily,
    VCube,
)
from variation_lab.utility import exact_sum, parallel_map, write_csv
from variation_lab.validators import is_choice

logger = logging.getLogger(__name__)


def tail_cut(measure: DiscreteMeasure, base_point: np.ndarray) -> float:
    """Half-width M_x of the symmetric far-field cut at ``base_point``.

    Infinite (no cut) unless the measure is flat near its edges and the point
    lies in the sampled base.
    """
    base = measure.base
    if not measure.flat_tail or base is None or not base.contains(base_point)[0]:
        return np.inf
    return float(box_depth(base_point, base)[0])


def contributions(
    kernel: CZKernel,
    measure: DiscreteMeasure,
    f: np.ndarray,
    x: np.ndarray,
    symmetric_tail: bool = False,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-point terms of the truncated integrals at x.

    Returns:
        tuple: ``(terms, distance, base_distance)`` where ``terms[k]`` is
        ``K(x - y_k) f(y_k) w(y_k)``, zero for ``y_k = x`` and for points
        removed by the symmetric tail cut.
    """
    f = np.asarray(f, dtype=float).ravel()
    if f.shape != (measure.size,):
        raise GeometryError(f"f has {f.size} values for a measure of {measure.size} points")
    x = np.asarray(x, dtype=float).ravel()
    diff = x - measure.points
    distance = np.linalg.norm(diff, axis=1)
    base_distance = np.linalg.norm(diff[:, : measure.n], axis=1)
    active = (distance > 0) & (f != 0)
    if symmetric_tail:
        cut = tail_cut(measure, x[: measure.n])
        if np.isfinite(cut):
            active &= np.max(np.abs(diff[:, : measure.n]), axis=1) < cut
    terms = np.zeros(measure.size)
    if np.any(active):
        terms[active] = kernel(diff[active]) * f[active] * measure.weights[active]
    return terms, distance, base_distance


def truncated_sharp(
    kernel: CZKernel,
    measure: DiscreteMeasure,
    f: np.ndarray,
    x: np.ndarray,
    eps: float,
    symmetric_tail: bool = False,
) -> float:
    """T_eps(f mu)(x): sum of K(x - y) f(y) w(y) over support points with |x - y| > eps."""
    terms, distance, _ = contributions(kernel, measure, f, x, symmetric_tail)
    return exact_sum(terms[distance > eps])


def truncated_smooth(
    kernel: CZKernel,
    measure: DiscreteMeasure,
    f: np.ndarray,
    x: np.ndarray,
    eps: float,
    symmetric_tail: bool = False,
) -> float:
    """(K phi_eps * f mu)(x): sum of phi_eps(x - y) K(x - y) f(y) w(y)."""
    terms, _, base_distance = contributions(kernel, measure, f, x, symmetric_tail)
    return exact_sum(terms * truncation_profile(measure.n).value(base_distance / eps))


def sample_family(
    kernel: CZKernel,
    measure: DiscreteMeasure,
    f: np.ndarray,
    x: np.ndarray,
    grid: EpsGrid,
    mode: str = TruncationModeChoices.SMOOTH,
    symmetric_tail: bool = False,
) -> SampledFamily:
    """The truncations of f mu at x for every eps of the grid.

    Args:
        kernel (CZKernel): Kernel K.
        measure (DiscreteMeasure): Measure mu.
        f (np.ndarray): Values of f on the support.
        x (np.ndarray): Evaluation point.
        grid (EpsGrid): Decreasing truncation parameters, at least 4h.
        mode (str): ``smooth`` or ``sharp``.
        symmetric_tail (bool): Apply the symmetric far-field cut.

    Returns:
        SampledFamily: ``values[k]`` is the truncation at ``grid.values[k]``.
    """
    mode = is_choice(mode, TruncationModeChoices, "mode")
    grid.validate_for(measure.h)
    terms, distance, base_distance = contributions(kernel, measure, f, x, symmetric_tail)
    active = terms != 0
    terms, distance, base_distance = terms[active], distance[active], base_distance[active]
    profile = truncation_profile(measure.n)
    values = np.empty(len(grid))
    for k, eps in enumerate(grid.values):
        if mode == TruncationModeChoices.SHARP:
            values[k] = exact_sum(terms[distance > eps])
        else:
            values[k] = exact_sum(terms * profile.value(base_distance / eps))
    return SampledFamily(grid=grid, values=values, anchor=np.asarray(x, dtype=float), provenance=str(mode))


def sample_families(
    kernel: CZKernel,
    measure: DiscreteMeasure,
    f: np.ndarray,
    indices: Sequence[int],
    grid: EpsGrid,
    mode: str = TruncationModeChoices.SMOOTH,
    symmetric_tail: bool = False,
    jobs: int = 1,
) -> List[SampledFamily]:
    """`sample_family` at the support points ``indices``, in order."""

    def one(index: int) -> SampledFamily:
        return sample_family(kernel, measure, f, measure.points[index], grid, mode, symmetric_tail)

    return parallel_map(one, indices, jobs)


def maximal(family: SampledFamily) -> float:
    """sup over the grid of |T_(phi_eps) f(x)|."""
    return float(np.max(np.abs(family.values)))


def hl_maximal(
    measure: DiscreteMeasure,
    f: np.ndarray,
    x: np.ndarray,
    scales: Sequence[float],
) -> float:
    """Dyadic surrogate of the Hardy-Littlewood maximal function M^mu f(x).

    For each scale s the 3^n lattices of side s shifted by multiples of s/3
    along each axis are considered, not lattices shifted by s/2. The cell of
    each lattice containing x~ contributes the average of |f| over it. Every
    cube of side s/3 lies in a cell of one of these lattices, so the surrogate
    bounds the average over any such cube around x~ by a factor 3^n. Cells
    without mass are skipped.
    """
    f = np.abs(np.asarray(f, dtype=float).ravel())
    base_point = np.asarray(x, dtype=float).ravel()[: measure.n]
    base_points = measure.base_points
    best = 0.0
    for scale in scales:
        if not scale > 0:
            raise GeometryError(f"scales must be positive, got {scale!r}")
        for shift in np.ndindex(*([3] * measure.n)):
            offset = np.asarray(shift, dtype=float) * scale / 3.0
            corner = offset + scale * np.floor((base_point - offset) / scale)
            inside = VCube.from_corner(corner, scale).contains(base_points)
            total = exact_sum(measure.weights[inside])
            if total <= 0:
                continue
            best = max(best, exact_sum(f[inside] * measure.weights[inside]) / total)
    return best


def principal_value_estimate(family: SampledFamily) -> PrincipalValue:
    """Value at the smallest eps with the spread over the last octave.

    ``cauchy_defect`` is max - min of the values with eps in [eps_min, 2 eps_min];
    a large defect reports non-convergence.
    """
    eps = family.grid.values
    last_octave = eps <= 2.0 * eps[-1]
    tail = family.values[last_octave]
    return PrincipalValue(value=float(family.values[-1]), cauchy_defect=float(tail.max() - tail.min()))


def truncation_gap_bound(
    kernel: CZKernel,
    measure: DiscreteMeasure,
    f: np.ndarray,
    x: np.ndarray,
    eps: float,
    symmetric_tail: bool = False,
) -> float:
    """Upper bound of |T_eps f(x) - T_(phi_eps) f(x)|.

    The two truncations differ only at points with |x - y| > eps and
    |x~ - y~| < 3 sqrt(n) eps, where the weights differ by at most one.
    """
    terms, distance, base_distance = contributions(kernel, measure, f, x, symmetric_tail)
    annulus = (distance > eps) & (base_distance < truncation_profile(measure.n).hi * eps)
    return exact_sum(np.abs(terms[annulus]))


def write_families_csv(
    families: Sequence[SampledFamily],
    path: Union[str, Path],
    labels: Optional[Sequence] = None,
) -> Path:
    """Export families as rows ``point,eps,value``."""
    labels = range(len(families)) if labels is None else labels
    rows = [
        (label, float(eps), float(value))
        for label, family in zip(labels, families)
        for eps, value in zip(family.grid.values, family.values)
    ]
    return write_csv(Path(path), ["point", "eps", "value"], rows)
