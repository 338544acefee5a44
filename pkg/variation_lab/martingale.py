"""Dyadic martingales of T mu, their translation averages and the W/S diagnostics.

For a v-cell D,

    E_D mu = (1 / mu(D)) sum_(z in D) sum_(y != z) K(z - y) w_z w_y,

the average of T mu over D. Pairs with both points in D cancel, so this is the
sum over y not in D.

E_m^a mu(x) is E_D mu for the cell D of the lattice D_m^a containing x, and
E_m mu(x) averages E_m^a mu(x) over the offsets a_k = 2^-m k / G, k in
{0, ..., G-1}^n, a periodic rectangle rule on [0, 2^-m)^n.

Sums over pairs are accumulated with `variation_lab.utility.exact_sum`, and
every pair term is ``K(z - y) (w_z w_y)`` so the two orientations of a pair
cancel exactly. With ``symmetric_tail`` the y-sum around each z is cut at the
same l-infinity radius as the transforms use. The cut depends on z, so near
the edge of the sample pairs inside D no longer cancel and are summed too.
"""

import itertools
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from variation_lab.choices import TruncationModeChoices
from variation_lab.constants import MAX_SKIPPED_OFFSETS
from variation_lab.exceptions import EmptyRegionError, MartingaleError
from variation_lab.geometry import mass, sample_measure_with_tail, translated_cell
from variation_lab.models import (
    CZKernel,
    DiscreteMeasure,
    DyadicLattice,
    EpsGrid,
    LepingleRecord,
    LipschitzGraph,
    MartingaleConfig,
    MartingaleSample,
    VCube,
    WDiagnostic,
    WindowSpec,
)
from variation_lab.transforms import sample_family, tail_cut
from variation_lab.utility import exact_sum, parallel_map, write_csv
from variation_lab.variation import oscillation, rho_variation, short_variation

logger = logging.getLogger(__name__)


def _pair_terms(
    measure: DiscreteMeasure,
    kernel: CZKernel,
    rows: np.ndarray,
    symmetric_tail: bool,
) -> np.ndarray:
    """Matrix of ``K(z - y) (w_z w_y)`` for z in ``rows`` and every support point y.

    Zero for y = z and, with ``symmetric_tail``, for y beyond the tail cut at z.
    """
    diff = measure.points[rows][:, None, :] - measure.points[None, :, :]
    active = np.any(diff != 0, axis=2)
    if symmetric_tail:
        cuts = np.array([tail_cut(measure, z) for z in measure.base_points[rows]])
        active &= np.max(np.abs(diff[:, :, : measure.n]), axis=2) < cuts[:, None]
    values = np.zeros((len(rows), measure.size))
    products = measure.weights[rows][:, None] * measure.weights[None, :]
    values[active] = kernel(diff[active]) * products[active]
    return values


def conditional_avg(
    measure: DiscreteMeasure,
    kernel: CZKernel,
    cell: VCube,
    symmetric_tail: bool = True,
) -> float:
    """E_D mu for the v-cell ``cell``.

    Raises:
        EmptyRegionError: If the cell carries no mass.
    """
    inside = cell.contains(measure.base_points) if not measure.is_empty else np.zeros(0, dtype=bool)
    total = exact_sum(measure.weights[inside])
    if not total > 0:
        raise EmptyRegionError(f"cell {cell} carries no mass")
    terms = _pair_terms(measure, kernel, np.flatnonzero(inside), symmetric_tail)
    return exact_sum(terms.ravel()) / total


def martingale_term(
    measure: DiscreteMeasure,
    kernel: CZKernel,
    a: Sequence[float],
    m: int,
    x: Sequence[float],
    symmetric_tail: bool = True,
) -> float:
    """E_m^a mu(x): conditional average over the cell of D_m^a containing x."""
    base_point = np.asarray(x, dtype=float).ravel()[: measure.n]
    return conditional_avg(measure, kernel, translated_cell(base_point, a, m), symmetric_tail)


def offsets(m: int, grid_points: int, n: int) -> np.ndarray:
    """Translation offsets a_k = 2^-m k / G, shape (G^n, n), in lexicographic order."""
    steps = np.arange(grid_points, dtype=float) / grid_points
    grid = np.array(list(itertools.product(steps, repeat=n)), dtype=float).reshape(-1, n)
    return grid * 2.0**-m


def _check_skipped(skipped: int, total: int, where: str) -> None:
    if skipped:
        logger.warning("%d of %d translation offsets fall on empty cells at %s", skipped, total, where)
    if skipped > MAX_SKIPPED_OFFSETS * total:
        raise MartingaleError(f"{skipped} of {total} translation offsets skipped at {where}")


def averaged_term(
    measure: DiscreteMeasure,
    kernel: CZKernel,
    m: int,
    x: Sequence[float],
    config: MartingaleConfig,
) -> float:
    """E_m mu(x), the average of E_m^a mu(x) over the G^n offsets.

    Offsets whose cell is empty are skipped and logged.

    Raises:
        MartingaleError: If more than a fifth of the offsets are skipped.
    """
    values, skipped = [], 0
    grid = offsets(m, config.grid_points, measure.n)
    for a in grid:
        try:
            values.append(martingale_term(measure, kernel, a, m, x, config.symmetric_tail))
        except EmptyRegionError:
            skipped += 1
    _check_skipped(skipped, len(grid), f"m={m}")
    return exact_sum(values) / len(values)


def lambda_weight(
    measures: Sequence[DiscreteMeasure],
    m: int,
    xs: Sequence[Sequence[float]],
    ys: Sequence[Sequence[float]],
    grid_points: int = 4,
) -> float:
    """Lambda_m(x_1, ..., x_k; y_1, ..., y_l) by the offset rule of `averaged_term`.

    Averages ``1 / prod_l mu_l(D)`` over the offsets a whose cell D of D_m^a
    contains every x and none of the y.

    Raises:
        EmptyRegionError: If such a cell has zero mass for some measure.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float)) if len(ys) else np.zeros((0, xs.shape[1]))
    n = measures[0].n
    values = []
    for a in offsets(m, grid_points, n):
        cell = translated_cell(xs[0, :n], a, m)
        if not np.all(cell.contains(xs[:, :n])) or (len(ys) and np.any(cell.contains(ys[:, :n]))):
            values.append(0.0)
            continue
        masses = [mass(mu, cell) for mu in measures]
        if min(masses) <= 0:
            raise EmptyRegionError(f"cell {cell} carries no mass")
        values.append(1.0 / math.prod(masses))
    return exact_sum(values) / len(values)


def lambda_form_term(
    measure: DiscreteMeasure,
    kernel: CZKernel,
    m: int,
    x: Sequence[float],
    config: MartingaleConfig,
) -> float:
    """E_m mu(x) as the double sum of Lambda_m(x, z; y) K(z - y) over z and y.

    Pairs inside a cell are summed too: they cancel except across a one-sided
    tail cut. Agrees with `averaged_term` up to the order of summation.
    """
    base_point = np.asarray(x, dtype=float).ravel()[: measure.n]
    grid = offsets(m, config.grid_points, measure.n)
    masks, masses = [], []
    for a in grid:
        inside = translated_cell(base_point, a, m).contains(measure.base_points)
        total = exact_sum(measure.weights[inside])
        if total > 0:
            masks.append(inside)
            masses.append(total)
    _check_skipped(len(grid) - len(masks), len(grid), f"m={m}")
    rows = np.flatnonzero(np.any(masks, axis=0))
    weight = np.zeros((len(rows), measure.size))
    for inside, total in zip(masks, masses):
        weight += np.outer(inside[rows], np.ones(measure.size)) / (len(masks) * total)
    terms = _pair_terms(measure, kernel, rows, config.symmetric_tail)
    return exact_sum((weight * terms).ravel())


def _generation_terms(
    measure: DiscreteMeasure,
    kernel: CZKernel,
    m: int,
    a: np.ndarray,
    base_points: np.ndarray,
    symmetric_tail: bool,
) -> np.ndarray:
    lattice = DyadicLattice(root=VCube.from_corner(np.zeros(measure.n), 1.0), m_min=m, m_max=m, translation=a)
    indices = lattice.cell_indices(base_points, m)
    cache: Dict[Tuple[int, ...], float] = {}
    out = np.empty(len(base_points))
    for column, index in enumerate(map(tuple, indices)):
        if index not in cache:
            try:
                cache[index] = conditional_avg(measure, kernel, lattice.cell(index, m), symmetric_tail)
            except EmptyRegionError:
                cache[index] = np.nan
        out[column] = cache[index]
    return out


def martingale_sample(
    measure: DiscreteMeasure,
    kernel: CZKernel,
    config: MartingaleConfig,
    point_indices: Sequence[int],
    jobs: int = 1,
) -> MartingaleSample:
    """E_m^a mu and E_m mu at the support points ``point_indices``.

    Conditional averages are computed once per occupied cell and shared by the
    points in it; (m, a) pairs run on up to ``jobs`` threads.

    Raises:
        MartingaleError: If a point has more than a fifth of its offsets skipped.
    """
    config.validate_for(measure.h)
    point_indices = np.asarray(point_indices, dtype=np.int64)
    base_points = measure.base_points[point_indices]
    generations = np.asarray(config.generations, dtype=np.int64)
    unit = offsets(0, config.grid_points, measure.n)
    tasks = [(m, k) for m in generations for k in range(len(unit))]

    def one(task) -> np.ndarray:
        m, k = task
        return _generation_terms(measure, kernel, int(m), unit[k] * 2.0**-m, base_points, config.symmetric_tail)

    flat = parallel_map(one, tasks, jobs)
    terms = np.array(flat).reshape(len(generations), len(unit), len(point_indices))
    averaged = np.empty((len(generations), len(point_indices)))
    for i, m in enumerate(generations):
        for column in range(len(point_indices)):
            values = terms[i, :, column]
            kept = values[np.isfinite(values)]
            _check_skipped(len(values) - len(kept), len(values), f"m={m}, point {point_indices[column]}")
            averaged[i, column] = exact_sum(kept) / len(kept)
    logger.debug("martingale sampled at %d points over %d (m, a) pairs", len(point_indices), len(tasks))
    return MartingaleSample(
        point_indices=point_indices, generations=generations, offsets=unit, terms=terms, averaged=averaged
    )


def _ones(measure: DiscreteMeasure) -> np.ndarray:
    return np.ones(measure.size)


def _w_from_values(smooth: np.ndarray, averaged: np.ndarray) -> WDiagnostic:
    profile = tuple(float(abs(s - e)) for s, e in zip(smooth, averaged))
    return WDiagnostic(value=math.sqrt(exact_sum([v * v for v in profile])), profile=profile)


def w_diagnostic(
    measure: DiscreteMeasure,
    kernel: CZKernel,
    x: Sequence[float],
    config: MartingaleConfig,
) -> WDiagnostic:
    """W mu(x) over the configured generations.

    ``profile[k]`` is ``|(K phi_(2^-m) * mu)(x) - E_m mu(x)|`` for the k-th
    generation m, so the saturation of the sum can be inspected.
    """
    config.validate_for(measure.h)
    grid = EpsGrid.dyadic(config.m_min, config.m_max)
    x = np.asarray(x, dtype=float)
    smooth = sample_family(
        kernel, measure, _ones(measure), x, grid, TruncationModeChoices.SMOOTH, config.symmetric_tail
    ).values
    averaged = [averaged_term(measure, kernel, m, x, config) for m in config.generations]
    return _w_from_values(smooth, averaged)


def w_from_sample(
    measure: DiscreteMeasure,
    kernel: CZKernel,
    sample: MartingaleSample,
    config: MartingaleConfig,
) -> List[WDiagnostic]:
    """`w_diagnostic` at every point of a martingale sample, reusing its E_m values."""
    grid = EpsGrid.dyadic(config.m_min, config.m_max)
    out = []
    for column, index in enumerate(sample.point_indices):
        smooth = sample_family(
            kernel,
            measure,
            _ones(measure),
            measure.points[index],
            grid,
            TruncationModeChoices.SMOOTH,
            config.symmetric_tail,
        ).values
        out.append(_w_from_values(smooth, sample.averaged[:, column]))
    return out


def s_diagnostic(
    measure: DiscreteMeasure,
    kernel: CZKernel,
    x: Sequence[float],
    grid: EpsGrid,
    symmetric_tail: bool = True,
) -> float:
    """S mu(x): the short variation of the smooth family of mu at x."""
    family = sample_family(
        kernel, measure, _ones(measure), np.asarray(x, dtype=float), grid, TruncationModeChoices.SMOOTH, symmetric_tail
    )
    return short_variation(family)


def _weighted_norm(values: np.ndarray, weights: np.ndarray, normalizer: float) -> float:
    return math.sqrt(exact_sum(weights * values**2) / normalizer)


def lepingle_ratio(
    measure: DiscreteMeasure,
    kernel: CZKernel,
    config: MartingaleConfig,
    point_indices: Sequence[int],
    rho: float = 3.0,
    sample: Optional[MartingaleSample] = None,
    jobs: int = 1,
) -> LepingleRecord:
    """||V_rho(E^a mu)||_(L^2(mu)) / mu(P)^(1/2) and the oscillation analogue.

    P is the set of points ``point_indices``; the norms are taken over it.
    Oscillation windows are the dyadic intervals between consecutive
    generations. Reported per offset a and for the averaged martingale.
    """
    sample = sample or martingale_sample(measure, kernel, config, point_indices, jobs)
    weights = measure.weights[sample.point_indices]
    total = exact_sum(weights)
    if not total > 0:
        raise EmptyRegionError("no mass at the martingale points")
    windows = WindowSpec.dyadic(config.m_min, max(config.m_min, config.m_max - 1))

    def ratios(offset: Optional[int]) -> Tuple[float, float]:
        variation, osc = np.zeros(len(weights)), np.zeros(len(weights))
        for column in range(len(weights)):
            values = sample.averaged[:, column] if offset is None else sample.terms[:, offset, column]
            if not np.all(np.isfinite(values)):
                continue
            family = sample.family(column, offset)
            variation[column] = rho_variation(family, rho).value
            osc[column] = oscillation(family, windows)
        return _weighted_norm(variation, weights, total), _weighted_norm(osc, weights, total)

    per_offset = [ratios(k) for k in range(len(sample.offsets))]
    averaged = ratios(None)
    return LepingleRecord(
        variation_ratio=averaged[0],
        oscillation_ratio=averaged[1],
        per_offset_variation=tuple(v for v, _ in per_offset),
        per_offset_oscillation=tuple(o for _, o in per_offset),
    )


def tail_doubling_defect(
    graph: LipschitzGraph,
    kernel: CZKernel,
    config: MartingaleConfig,
    box: VCube,
    h: float,
    jobs: int = 1,
) -> float:
    """Largest change of E_m mu at the points of ``box`` when the tail radius doubles.

    The tail radius must be a multiple of h so both samplings share the
    points of ``box``.
    """
    samples = []
    for radius in (config.tail_radius, 2.0 * config.tail_radius):
        measure = sample_measure_with_tail(graph, box, h, radius)
        indices = np.flatnonzero(box.contains(measure.base_points))
        samples.append(martingale_sample(measure, kernel, config, indices, jobs).averaged)
    near, far = samples
    changes = np.abs(near - far)
    defect = float(np.max(changes)) if changes.size else 0.0
    logger.info("tail doubling from %g changes E_m by at most %g", config.tail_radius, defect)
    return defect


def write_martingale_csv(
    measure: DiscreteMeasure,
    sample: MartingaleSample,
    diagnostics: Sequence[WDiagnostic],
    path: Union[str, Path],
) -> Path:
    """Export rows ``x1..xd,m,E_m,W_partial``; W_partial sums the profile up to m."""
    header = [f"x{i + 1}" for i in range(measure.d)] + ["m", "E_m", "W_partial"]
    rows = []
    for column, (index, diagnostic) in enumerate(zip(sample.point_indices, diagnostics)):
        point = measure.points[index].tolist()
        for k, m in enumerate(sample.generations):
            partial = math.sqrt(exact_sum([v * v for v in diagnostic.profile[: k + 1]]))
            rows.append(point + [int(m), float(sample.averaged[k, column]), partial])
    return write_csv(Path(path), header, rows)
