"""Lipschitz graphs, their discretized surface measures and v-cube lattices.

Graph families:
    - flat: A = 0
    - sawtooth(slope, period): triangle wave in x~_1
    - corner(slope, at): slope |x~_1 - at|
    - multiscale(seed, lip, levels): random dyadic sign pattern of slope +-lip
    - from_samples(table): piecewise-linear interpolation, n = 1

Families given a ``support_box`` are clipped to ``[-lip g, lip g]`` with
``g = dist_inf(x~, box^c)``, so A vanishes outside the box and keeps its
Lipschitz constant.

Example:
    graph = build_graph("sawtooth", slope=1.0, period=0.25)
    measure = sample_measure(graph, VCube(center=[0.5], side=1.0), h=2.0**-6)
    mass(measure, measure.base)  # sqrt(2)
"""

import itertools
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from variation_lab.choices import GraphFamilyChoices
from variation_lab.constants import LIP_TOLERANCE
from variation_lab.exceptions import GeometryError, LipschitzViolationError
from variation_lab.models import DiscreteMeasure, DyadicLattice, LipschitzGraph, VCube
from variation_lab.utility import exact_sum, read_csv, rng, write_csv
from variation_lab.validators import is_choice, is_positive, is_positive_int

logger = logging.getLogger(__name__)

Density = Callable[[np.ndarray], np.ndarray]


def _embed(values: np.ndarray, codim: int) -> np.ndarray:
    """Place a scalar profile in the first normal coordinate."""
    out = np.zeros((len(values), codim))
    out[:, 0] = values
    return out


def box_depth(base_points: np.ndarray, box: VCube) -> np.ndarray:
    """l-infinity distance from each base point to the complement of ``box``."""
    base_points = np.atleast_2d(base_points)
    lower = box.corner
    upper = lower + box.side
    depth = np.minimum(base_points - lower, upper - base_points).min(axis=1)
    return np.maximum(depth, 0.0)


def _compact(profile: Callable[[np.ndarray], np.ndarray], box: Optional[VCube], lip: float):
    if box is None:
        return profile

    def clipped(base_points: np.ndarray) -> np.ndarray:
        bound = lip * box_depth(base_points, box)
        return np.clip(profile(base_points), -bound, bound)

    return clipped


def _sawtooth(slope: float, period: float) -> Callable[[np.ndarray], np.ndarray]:
    def profile(base_points: np.ndarray) -> np.ndarray:
        phase = np.mod(base_points[:, 0], period)
        return slope * np.minimum(phase, period - phase)

    return profile


def _corner(slope: float, at: float) -> Callable[[np.ndarray], np.ndarray]:
    def profile(base_points: np.ndarray) -> np.ndarray:
        return slope * np.abs(base_points[:, 0] - at)

    return profile


def _multiscale(seed: int, lip: float, levels: int, box: Optional[VCube]) -> Callable[[np.ndarray], np.ndarray]:
    generator = rng(seed)
    cells = 2**levels
    signs = np.ones(cells)
    for level in range(1, levels + 1):
        pattern = generator.choice([-1.0, 1.0], size=2**level)
        signs *= np.repeat(pattern, 2 ** (levels - level))
    lower = box.corner[0] if box is not None else 0.0
    side = box.side if box is not None else 1.0
    knots = np.linspace(0.0, 1.0, cells + 1)
    heights = np.concatenate([[0.0], np.cumsum(lip * signs / cells)])

    def profile(base_points: np.ndarray) -> np.ndarray:
        t = (base_points[:, 0] - lower) / side
        return side * np.interp(t, knots, heights)

    return profile


def estimate_lip(base_points: np.ndarray, values: np.ndarray) -> float:
    """Largest difference quotient |A(x) - A(y)| / |x - y| over sampled pairs.

    For n = 1 the points are sorted and consecutive pairs suffice; otherwise
    all pairs are compared.
    """
    base_points = np.atleast_2d(np.asarray(base_points, dtype=float))
    values = np.asarray(values, dtype=float).reshape(len(base_points), -1)
    if len(base_points) < 2:
        return 0.0
    if base_points.shape[1] == 1:
        order = np.argsort(base_points[:, 0], kind="stable")
        dx = np.diff(base_points[order, 0])
        dv = np.linalg.norm(np.diff(values[order], axis=0), axis=1)
        keep = dx > 0
        return float(np.max(dv[keep] / dx[keep])) if np.any(keep) else 0.0
    best = 0.0
    for i in range(len(base_points) - 1):
        dx = np.linalg.norm(base_points[i + 1 :] - base_points[i], axis=1)
        dv = np.linalg.norm(values[i + 1 :] - values[i], axis=1)
        keep = dx > 0
        if np.any(keep):
            best = max(best, float(np.max(dv[keep] / dx[keep])))
    return best


def graph_from_samples(table: np.ndarray, lip: Optional[float] = None) -> LipschitzGraph:
    """Build an n = 1 graph by piecewise-linear interpolation of a sample table.

    Args:
        table (np.ndarray): Rows ``(x1, a1, ..., a_(d-1))`` sorted by ``x1``.
        lip (float, optional): Declared Lipschitz constant to enforce.

    Returns:
        LipschitzGraph: Graph whose ``lip`` is the largest sampled slope. Outside
        the table range A is extended by its end values.

    Raises:
        GeometryError: If the table is not finite, unsorted or too short.
        LipschitzViolationError: If a slope exceeds the declared ``lip``.
    """
    table = np.atleast_2d(np.asarray(table, dtype=float))
    if table.shape[0] < 2 or table.shape[1] < 2:
        raise GeometryError(f"sample table needs at least two rows and two columns, got {table.shape}")
    if not np.all(np.isfinite(table)):
        raise GeometryError("sample table contains non-finite values")
    xs = table[:, 0]
    if np.any(np.diff(xs) <= 0):
        raise GeometryError("sample table must be strictly increasing in x1")
    values = table[:, 1:]
    slope = estimate_lip(xs[:, None], values)
    if lip is not None and slope > lip * (1 + LIP_TOLERANCE):
        raise LipschitzViolationError(f"sampled slope {slope!r} exceeds declared Lipschitz constant {lip!r}")

    def evaluate(base_points: np.ndarray) -> np.ndarray:
        return np.column_stack([np.interp(base_points[:, 0], xs, column) for column in values.T])

    return LipschitzGraph(
        n=1,
        d=1 + values.shape[1],
        A=evaluate,
        lip=slope,
        family=GraphFamilyChoices.FROM_SAMPLES,
        params={"rows": len(xs)},
    )


def build_graph(
    family: str,
    n: int = 1,
    d: int = 2,
    support_box: Optional[VCube] = None,
    **params,
) -> LipschitzGraph:
    """Instantiate a built-in graph family.

    Args:
        family (str): One of `GraphFamilyChoices`.
        n (int): Domain dimension.
        d (int): Ambient dimension.
        support_box (VCube, optional): Box outside which A vanishes
            (sawtooth, multiscale and corner only).
        **params: Family parameters, e.g. ``slope`` and ``period``.

    Returns:
        LipschitzGraph: The graph with its exact Lipschitz constant.

    Raises:
        ValidationError: For unknown families or non-positive parameters.
        GeometryError: For inconsistent dimensions.
    """
    family = is_choice(family, GraphFamilyChoices, "graph.family")
    if support_box is not None and support_box.n != n:
        raise GeometryError(f"support box has dimension {support_box.n}, graph has n={n}")
    codim = d - n
    if codim < 1:
        raise GeometryError(f"need 1 <= n < d, got n={n}, d={d}")

    if family == GraphFamilyChoices.FLAT:
        profile, lip = (lambda base_points: np.zeros(len(base_points))), 0.0
        support_box = None
    elif family == GraphFamilyChoices.SAWTOOTH:
        slope = is_positive(params.get("slope", 1.0), "slope")
        period = is_positive(params.get("period", 0.25), "period")
        profile, lip = _sawtooth(slope, period), slope
    elif family == GraphFamilyChoices.CORNER:
        slope = is_positive(params.get("slope", 1.0), "slope")
        at = float(params.get("at", 0.5))
        profile, lip = _corner(slope, at), slope
    elif family == GraphFamilyChoices.MULTISCALE:
        lip = is_positive(params.get("lip", 1.0), "lip")
        levels = is_positive_int(params.get("levels", 4), "levels")
        profile = _multiscale(int(params.get("seed", 0)), lip, levels, support_box)
    else:
        if "table" not in params:
            raise GeometryError("from_samples needs a 'table'")
        return graph_from_samples(params["table"], params.get("lip"))

    profile = _compact(profile, support_box, lip)
    return LipschitzGraph(
        n=n,
        d=d,
        A=lambda base_points: _embed(profile(base_points), codim),
        lip=lip,
        support_box=support_box,
        family=family,
        params=dict(params),
    )


def cell_centers(base: VCube, h: float) -> np.ndarray:
    """Centers of the h-grid cells of ``base`` in lexicographic order, shape (k, n)."""
    if not h > 0:
        raise GeometryError(f"h must be positive, got {h!r}")
    ratio = base.side / h
    count = int(round(ratio))
    if count < 1 or abs(ratio - count) > 1e-9 * max(1.0, ratio):
        raise GeometryError(f"h={h!r} must divide the base side {base.side!r}")
    axis = (np.arange(count) + 0.5) * h
    grids = np.meshgrid(*([axis] * base.n), indexing="ij")
    return base.corner + np.stack([g.ravel() for g in grids], axis=1)


def surface_jacobian(graph: LipschitzGraph, base_points: np.ndarray, h: float) -> np.ndarray:
    """sqrt(det(I + J^T J)) with J from central differences of step h/2."""
    delta = h / 2.0
    n = graph.n
    jac = np.empty((len(base_points), graph.d - n, n))
    for i in range(n):
        step = np.zeros(n)
        step[i] = delta
        jac[:, :, i] = (graph.evaluate(base_points + step) - graph.evaluate(base_points - step)) / (2 * delta)
    gram = np.eye(n) + np.einsum("kji,kjl->kil", jac, jac)
    return np.sqrt(np.linalg.det(gram))


def sample_measure(
    graph: LipschitzGraph,
    base: VCube,
    h: float,
    f: Optional[Density] = None,
    flat_tail: Optional[bool] = None,
) -> DiscreteMeasure:
    """Discretize f H^n restricted to the graph over ``base``.

    One point per h-cell of ``base`` at ``(x~_c, A(x~_c))`` with weight
    ``f(x_c) h^n sqrt(det(I + J^T J))``.

    Args:
        graph (LipschitzGraph): Graph carrying the measure.
        base (VCube): Base cube, its side a multiple of ``h``.
        h (float): Cell side.
        f (callable, optional): Density on points of shape (k, d); 1 if omitted.
        flat_tail (bool, optional): Mark the measure as flat near the edges of
            ``base``. Defaults to True for flat graphs and for graphs whose
            support box lies inside ``base``.

    Raises:
        GeometryError: For h <= 0, h not dividing the side, or an invalid density.
    """
    if base.n != graph.n:
        raise GeometryError(f"base has dimension {base.n}, graph has n={graph.n}")
    centers = cell_centers(base, h)
    points = graph.lift(centers)
    density = np.ones(len(points)) if f is None else np.asarray(f(points), dtype=float).ravel()
    if density.shape != (len(points),) or not np.all(np.isfinite(density)) or np.any(density <= 0):
        raise GeometryError("density must be finite and strictly positive at every sample")
    weights = density * h**graph.n * surface_jacobian(graph, centers, h)
    if flat_tail is None:
        flat_tail = graph.family == GraphFamilyChoices.FLAT or (
            graph.support_box is not None and _inside(graph.support_box, base)
        )
    logger.debug("sampled %d points of %s graph at h=%g", len(points), graph.family, h)
    return DiscreteMeasure(
        points=points,
        weights=weights,
        density=density,
        n=graph.n,
        h=h,
        base=base,
        lip=graph.lip,
        flat_tail=flat_tail,
    )


def _inside(inner: VCube, outer: VCube) -> bool:
    return bool(
        np.all(inner.corner >= outer.corner - 1e-12)
        and np.all(inner.corner + inner.side <= outer.corner + outer.side + 1e-12)
    )


def tail_base(box: VCube, tail_radius: float) -> VCube:
    """Base cube extending ``box`` by ``tail_radius`` on every side."""
    return VCube(center=box.center, side=box.side + 2.0 * tail_radius)


def sample_measure_with_tail(
    graph: LipschitzGraph,
    box: VCube,
    h: float,
    tail_radius: float,
    f: Optional[Density] = None,
) -> DiscreteMeasure:
    """Sample over ``box`` plus a flat collar of width ``tail_radius``."""
    return sample_measure(graph, tail_base(box, tail_radius), h, f=f, flat_tail=True)


def dyadic_cubes(root: VCube, m_min: int, m_max: int) -> List[VCube]:
    """Dyadic descendants of ``root`` for generations m_min..m_max.

    Cubes are listed generation by generation, each generation in
    lexicographic order of the centers.
    """
    if m_min > m_max:
        raise GeometryError(f"m_min must not exceed m_max, got {m_min} > {m_max}")
    if m_min < 0:
        raise GeometryError(f"m_min must be non-negative, got {m_min}")
    cubes = []
    for m in range(m_min, m_max + 1):
        side = root.side * 2.0**-m
        for index in itertools.product(range(2**m), repeat=root.n):
            cubes.append(VCube.from_corner(root.corner + side * np.asarray(index, dtype=float), side))
    return cubes


def translated_cell(base_point: Sequence[float], a: Sequence[float], m: int) -> VCube:
    """The cell D_m^a = a + 2^-m (k + [0, 1)^n) containing ``base_point``."""
    base_point = np.atleast_1d(np.asarray(base_point, dtype=float))
    lattice = DyadicLattice(root=VCube.from_corner(np.zeros(len(base_point)), 1.0), m_min=m, m_max=m, translation=a)
    return lattice.cell_containing(base_point, m)


def mass(measure: DiscreteMeasure, region: VCube) -> float:
    """Sum of weights of the points whose base coordinates lie in ``region``."""
    if measure.is_empty:
        return 0.0
    return exact_sum(measure.weights[region.contains(measure.base_points)])


def restrict(measure: DiscreteMeasure, region: VCube, complement: bool = False) -> DiscreteMeasure:
    """Keep the points in ``region`` (or outside it when ``complement``).

    An empty result is returned, not raised, and logged as a warning.
    """
    inside = region.contains(measure.base_points) if not measure.is_empty else np.zeros(0, dtype=bool)
    keep = ~inside if complement else inside
    restricted = measure.subset(keep)
    if restricted.is_empty:
        logger.warning("restriction to %s%s is empty", "complement of " if complement else "", region)
    return restricted


def graph_table(graph: LipschitzGraph, base: VCube, h: float) -> np.ndarray:
    """Rows ``(x~, A(x~))`` at the h-grid nodes of ``base``, ends included."""
    if not h > 0:
        raise GeometryError(f"h must be positive, got {h!r}")
    ratio = base.side / h
    count = int(round(ratio))
    if count < 1 or abs(ratio - count) > 1e-9 * max(1.0, ratio):
        raise GeometryError(f"h={h!r} must divide the base side {base.side!r}")
    axis = np.arange(count + 1) * h
    grids = np.meshgrid(*([axis] * graph.n), indexing="ij")
    nodes = base.corner + np.stack([g.ravel() for g in grids], axis=1)
    return graph.lift(nodes)


def graph_header(n: int, d: int) -> List[str]:
    return [f"x{i + 1}" for i in range(n)] + [f"a{i + 1}" for i in range(d - n)]


def write_graph_csv(graph: LipschitzGraph, base: VCube, h: float, path: Union[str, Path]) -> Path:
    return write_csv(Path(path), graph_header(graph.n, graph.d), graph_table(graph, base, h).tolist())


def read_graph_csv(path: Union[str, Path]) -> np.ndarray:
    header, table = read_csv(Path(path))
    if not header or not header[0].startswith("x"):
        raise GeometryError(f"{path}: expected a graph table with header x1,...,a1,...")
    return table


def write_measure_csv(measure: DiscreteMeasure, path: Union[str, Path]) -> Path:
    header = [f"x{i + 1}" for i in range(measure.d)] + ["weight"]
    rows = np.column_stack([measure.points, measure.weights]).tolist()
    return write_csv(Path(path), header, rows)


def _grid_area(base_points: np.ndarray, values: np.ndarray) -> float:
    """Area of the interpolant over a full tensor grid, cell by cell.

    Each cell contributes ``sqrt(det(I + J^T J))`` times its volume, J being
    the difference quotients of A along each axis averaged over the cell.
    """
    n = base_points.shape[1]
    axes = [np.unique(base_points[:, i]) for i in range(n)]
    shape = tuple(len(axis) for axis in axes)
    order = np.lexsort(base_points.T[::-1])
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    if min(shape) < 2 or len(nodes) != len(base_points) or not np.array_equal(base_points[order], nodes):
        raise GeometryError("graph table rows do not form a full tensor grid")
    heights = values[order].reshape(*shape, values.shape[1])
    spacing = [np.diff(axis) for axis in axes]
    slopes = []
    for i in range(n):
        step = spacing[i].reshape([-1 if j == i else 1 for j in range(n)] + [1])
        slope = np.diff(heights, axis=i) / step
        for j in range(n):
            if j != i:
                lower, upper = np.arange(shape[j] - 1), np.arange(1, shape[j])
                slope = 0.5 * (slope.take(lower, axis=j) + slope.take(upper, axis=j))
        slopes.append(slope)
    jacobian = np.stack(slopes, axis=-1)
    metric = np.eye(n) + np.einsum("...ki,...kj->...ij", jacobian, jacobian)
    volume = np.prod(np.stack(np.meshgrid(*spacing, indexing="ij"), axis=-1), axis=-1)
    return exact_sum((np.sqrt(np.linalg.det(metric)) * volume).ravel())


def inspect_table(table: np.ndarray, n: int = 1) -> Dict[str, float]:
    """Summary of a graph table: Lipschitz estimate, graph mass and extent.

    The mass is the arclength/area of the interpolant. For n = 1 it is the sum
    of segment lengths. For n > 1 the rows must form a full tensor grid, and
    the area is summed over its cells.

    Raises:
        GeometryError: If n > 1 and the rows do not form a full grid.
    """
    table = np.atleast_2d(np.asarray(table, dtype=float))
    base_points, values = table[:, :n], table[:, n:]
    summary = {
        "rows": float(len(table)),
        "lip": estimate_lip(base_points, values),
        "extent_min": float(base_points.min()),
        "extent_max": float(base_points.max()),
        "height_min": float(values.min()),
        "height_max": float(values.max()),
    }
    if n == 1:
        order = np.argsort(base_points[:, 0], kind="stable")
        segments = np.diff(table[order], axis=0)
        summary["mass"] = exact_sum(np.linalg.norm(segments, axis=1))
    else:
        summary["mass"] = _grid_area(base_points, values)
    return summary
