"""Multiscale flatness coefficients: beta_p, the localized transport distance and alpha.

beta_p(Q) = ((1/l^n) sum_(x in C_Gamma Q) w (dist(x, L)/l)^p)^(1/p), minimized over
n-planes L. For p = 2 the weighted centroid and the top-n eigenvectors of the
weighted second-moment matrix give the exact minimizer; other exponents refine
that plane with Nelder-Mead.

dist_F(mu, nu) = sup of the integral of g d(mu - nu) over 1-Lipschitz g supported
in F. On point measures this is a linear program in the values of g, with
the support condition replaced by ``|g_i| <= dist(x_i, F^c)``.

alpha(Q) = min over planes L and c >= 0 of dist_(B_Q)(mu, c H^n_L) / l^(n+1). Both
measures are discretized at the sampling step h, or coarse-grained to
``alpha_points`` cells per side of Q when that is coarser.
The minimum over c is part of a single transport program; the plane is
searched with Nelder-Mead from two seeds.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.linalg import null_space
from scipy.optimize import linprog, minimize

from variation_lab.choices import PackingTermChoices
from variation_lab.constants import SEED_AGREEMENT, default_c_gamma
from variation_lab.exceptions import EmptyRegionError, GeometryError, TransportError
from variation_lab.geometry import dyadic_cubes, mass
from variation_lab.models import (
    AlphaResult,
    Ball,
    BetaResult,
    DiscreteMeasure,
    PackingResult,
    Plane,
    RatioDistribution,
    VBall,
    VCube,
)
from variation_lab.utility import exact_sum, parallel_map
from variation_lab.validators import is_exponent, validation_error

logger = logging.getLogger(__name__)

Region = Union[Ball, VBall]

LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def _window_constant(measure: DiscreteMeasure, window_const: Optional[float]) -> float:
    return default_c_gamma(measure.n, measure.lip) if window_const is None else float(window_const)


def fit_plane(points: np.ndarray, weights: np.ndarray, n: int) -> Tuple[Plane, bool]:
    """Weighted least-squares n-plane through the weighted centroid.

    Returns:
        tuple: ``(plane, degenerate)``; ``degenerate`` is True when all mass sits
        at one point, in which case the plane is horizontal through it.
    """
    points = np.atleast_2d(points)
    d = points.shape[1]
    centroid = np.sum(weights[:, None] * points, axis=0) / np.sum(weights)
    centered = points - centroid
    moment = (centered * weights[:, None]).T @ centered
    if not np.any(np.abs(centered) > 0):
        return Plane(base=centroid, frame=np.eye(d)[:n]), True
    _, vectors = np.linalg.eigh(moment)
    return Plane(base=centroid, frame=vectors[:, -n:][:, ::-1].T), False


def _plane_cost(plane: Plane, points: np.ndarray, weights: np.ndarray, p: float, ell: float) -> float:
    distance = plane.distance(points) / ell
    if math.isinf(p):
        return float(distance.max())
    return exact_sum(weights * distance**p)


def _perturbed(seed: Plane, normals: np.ndarray, theta: np.ndarray, ell: float) -> Plane:
    n, codim = seed.n, normals.shape[0]
    tilt = theta[: n * codim].reshape(codim, n)
    offset = theta[n * codim :]
    return Plane(base=seed.base + ell * offset @ normals, frame=seed.frame + tilt.T @ normals)


def refine_plane(
    seeds: Sequence[Plane],
    cost,
    ell: float,
    step: float = 0.1,
) -> Tuple[Plane, List[float]]:
    """Derivative-free plane search started from each seed.

    Each seed plane is perturbed by a tilt towards its normal directions and
    an offset along them (in units of ``ell``); Nelder-Mead minimizes
    ``cost(plane)``.

    Returns:
        tuple: The best plane found and the final cost from every seed.
    """
    best_plane, best_cost, finals = None, math.inf, []
    for seed in seeds:
        normals = null_space(seed.frame).T
        size = normals.shape[0] * (seed.n + 1)
        simplex = np.vstack([np.zeros(size), step * np.eye(size)])
        result = minimize(
            lambda theta: cost(_perturbed(seed, normals, theta, ell)),
            np.zeros(size),
            method="Nelder-Mead",
            options={"initial_simplex": simplex, "xatol": 1e-9, "fatol": 1e-12, "maxiter": 400 * size},
        )
        plane, value = _perturbed(seed, normals, result.x, ell), float(result.fun)
        start = cost(seed)
        if start <= value:
            plane, value = seed, start
        finals.append(value)
        if value < best_cost:
            best_plane, best_cost = plane, value
    return best_plane, finals


def beta(
    measure: DiscreteMeasure,
    cube: VCube,
    p: float = 2.0,
    window_const: Optional[float] = None,
) -> BetaResult:
    """beta_(p, mu)(Q) over the window C_Gamma Q.

    Args:
        measure (DiscreteMeasure): Measure mu.
        cube (VCube): Cube Q; the normalization uses l(Q).
        p (float): Exponent in [1, inf].
        window_const (float, optional): C_Gamma, by default from the measure's
            Lipschitz constant.

    Raises:
        EmptyRegionError: If the window carries no mass.
    """
    p = is_exponent(p, "p")
    window = cube.window(_window_constant(measure, window_const))
    inside = window.contains(measure.base_points) if not measure.is_empty else np.zeros(0, dtype=bool)
    if not np.any(inside):
        raise EmptyRegionError(f"window of {cube} carries no mass")
    points, weights = measure.points[inside], measure.weights[inside]
    ell = cube.side
    plane, degenerate = fit_plane(points, weights, measure.n)
    if degenerate:
        logger.warning("all mass of the window of %s sits at one point; beta set to 0", cube)
        return BetaResult(beta=0.0, plane=plane, p=p, degenerate=True)

    if p != 2.0:
        horizontal = Plane.horizontal(measure.n, measure.d, np.average(points[:, measure.n :], axis=0, weights=weights))
        plane, _ = refine_plane([plane, horizontal], lambda L: _plane_cost(L, points, weights, p, ell), ell)

    cost = _plane_cost(plane, points, weights, p, ell)
    value = cost if math.isinf(p) else (cost / ell**measure.n) ** (1.0 / p)
    return BetaResult(beta=float(value), plane=plane, p=p)


def _merge(points: np.ndarray, masses: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    unique, inverse = np.unique(points, axis=0, return_inverse=True)
    return unique, np.bincount(inverse.reshape(-1), weights=masses, minlength=len(unique))


def bl_distance(mu_a: DiscreteMeasure, mu_b: DiscreteMeasure, region: Region) -> float:
    """dist_F(mu_a, mu_b) for a ball or vertical ball F.

    Maximizes sum g_i (a_i - b_i) subject to g_i - g_j <= |x_i - x_j| and
    |g_i| <= dist(x_i, F^c). Points outside F are dropped and coincident
    points merged.

    Raises:
        TransportError: If the solver does not report an optimum.
    """
    points = np.vstack([mu_a.points, mu_b.points])
    signed = np.concatenate([mu_a.weights, -mu_b.weights])
    depth = region.depth(points)
    keep = depth > 0
    if not np.any(keep):
        return 0.0
    points, signed = _merge(points[keep], signed[keep])
    depth = region.depth(points)
    size = len(points)
    if size == 1:
        return float(abs(signed[0]) * depth[0])

    rows_i, rows_j = np.nonzero(~np.eye(size, dtype=bool))
    gaps = np.linalg.norm(points[rows_i] - points[rows_j], axis=1)
    implied = gaps >= depth[rows_i] + depth[rows_j]
    rows_i, rows_j, gaps = rows_i[~implied], rows_j[~implied], gaps[~implied]
    count = len(gaps)
    a_ub = sparse.coo_matrix(
        (
            np.concatenate([np.ones(count), -np.ones(count)]),
            (np.concatenate([np.arange(count)] * 2), np.concatenate([rows_i, rows_j])),
        ),
        shape=(count, size),
    ).tocsr()
    result = linprog(
        -signed,
        A_ub=a_ub if count else None,
        b_ub=gaps if count else None,
        bounds=list(zip(-depth, depth)),
        method="highs",
        options=LP_OPTIONS,
    )
    if not result.success:
        raise TransportError(f"transport program failed: {result.message}")
    return max(0.0, float(-result.fun))


def coarse_grain(
    points: np.ndarray,
    masses: np.ndarray,
    origin: np.ndarray,
    step: float,
    n: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Aggregate points by the base cells ``origin + step * (k + [0, 1)^n)``.

    Returns:
        tuple: ``(centroids, masses, labels)``: mass-weighted centroids and
        total masses per occupied cell, and each point's cell label.
    """
    cells = np.floor((points[:, :n] - origin) / step).astype(np.int64)
    _, labels = np.unique(cells, axis=0, return_inverse=True)
    labels = labels.reshape(-1)
    total = np.bincount(labels, weights=masses)
    centroids = np.column_stack(
        [np.bincount(labels, weights=masses * points[:, k]) / total for k in range(points.shape[1])]
    )
    return centroids, total, labels


class FlatComparison:
    """Transport from a measure to the flat measures c H^n_L inside B_Q.

    The flat measure is discretized at the measure's own base points in B_Q,
    each carrying ``h^n sqrt(det(I + T^T T))`` for the plane
    ``L = {(x~, v + T (x~ - z~_Q))}``. Both measures are then coarse-grained by
    the same base cells of side ``max(h, l(Q) / alpha_points)``, aligned with Q;
    with ``alpha_points=None`` the cells are the sampling cells.
    """

    def __init__(self, measure: DiscreteMeasure, cube: VCube, c_gamma: float, alpha_points: Optional[int] = None):
        if not measure.h > 0:
            raise GeometryError("alpha needs a sampled measure with a known step h")
        self.n, self.d = measure.n, measure.d
        self.h = measure.h
        self.center = cube.center
        self.radius = cube.ball_radius(c_gamma)
        self.region = VBall(center=cube.center, radius=self.radius)
        self.step = self.h if alpha_points is None else max(self.h, cube.side / alpha_points)
        origin = cube.corner

        in_ball = cube.in_ball(measure.base_points, c_gamma)
        points, weights = measure.points[in_ball], measure.weights[in_ball]
        self.mu_points, self.mu_mass, _ = coarse_grain(points, weights, origin, self.step, self.n)
        self.mu_depth = self.region.depth(self.mu_points)

        base_nodes = np.unique(points[:, : self.n], axis=0)
        self.sigma_base, self.sigma_count, _ = coarse_grain(
            base_nodes, np.ones(len(base_nodes)), origin, self.step, self.n
        )
        self.sigma_depth = np.maximum(self.radius - np.linalg.norm(self.sigma_base - self.center, axis=1), 0.0)

    def plane(self, tilt: np.ndarray, height: np.ndarray) -> Plane:
        base = np.concatenate([self.center, height])
        frame = np.hstack([np.eye(self.n), tilt.T])
        return Plane(base=base, frame=frame)

    def solve(self, tilt: np.ndarray, height: np.ndarray) -> Tuple[float, float]:
        """Minimal transport over c >= 0 for one plane; returns ``(transport, c)``."""
        sigma_points = np.hstack([self.sigma_base, height + (self.sigma_base - self.center) @ tilt.T])
        jacobian = math.sqrt(np.linalg.det(np.eye(self.n) + tilt.T @ tilt))
        sigma_mass = self.sigma_count * self.h**self.n * jacobian

        k1, k2 = len(self.mu_mass), len(sigma_mass)
        gaps = np.linalg.norm(self.mu_points[:, None, :] - sigma_points[None, :, :], axis=2)
        useful = gaps < self.mu_depth[:, None] + self.sigma_depth[None, :]
        src, dst = np.nonzero(useful)
        gaps = gaps[useful]
        pairs, nodes = len(gaps), k1 + k2

        # columns: flows, p, q, c
        depth = np.concatenate([self.mu_depth, self.sigma_depth])
        cost = np.concatenate([gaps, depth, depth, [0.0]])
        rows = np.concatenate([src, k1 + dst, np.arange(nodes), np.arange(nodes), k1 + np.arange(k2)])
        cols = np.concatenate(
            [
                np.arange(pairs),
                np.arange(pairs),
                pairs + np.arange(nodes),
                pairs + nodes + np.arange(nodes),
                np.full(k2, pairs + 2 * nodes),
            ]
        )
        data = np.concatenate([np.ones(pairs), -np.ones(pairs), np.ones(nodes), -np.ones(nodes), sigma_mass])
        a_eq = sparse.coo_matrix((data, (rows, cols)), shape=(nodes, pairs + 2 * nodes + 1)).tocsr()
        b_eq = np.concatenate([self.mu_mass, np.zeros(k2)])
        result = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs", options=LP_OPTIONS)
        if not result.success:
            raise TransportError(f"flat comparison program failed: {result.message}")
        return max(0.0, float(result.fun)), float(result.x[-1])


def _graph_form(plane: Plane, center: np.ndarray) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Write a plane as {(x~, v + T (x~ - center))}, or None if it is vertical."""
    n = plane.n
    along, across = plane.frame[:, :n], plane.frame[:, n:]
    if np.linalg.cond(along) > 1e8:
        return None
    tilt = np.linalg.solve(along, across).T
    height = plane.base[n:] + tilt @ (center - plane.base[:n])
    return tilt, height


def alpha(
    measure: DiscreteMeasure,
    cube: VCube,
    window_const: Optional[float] = None,
    alpha_points: Optional[int] = None,
) -> AlphaResult:
    """alpha_mu(Q) = min over L and c of dist_(B_Q)(mu, c H^n_L) / l(Q)^(n+1).

    The measures are compared at the sampling step h by default. A positive
    ``alpha_points`` coarse-grains both to cells of side ``l(Q) / alpha_points``
    when that exceeds h; ``tol`` reports the cell side over l(Q).

    Cubes that miss the support get alpha = 0. The plane search starts from the
    beta_2 plane and from the horizontal plane at the mean height; when the two
    searches end more than 1e-3 apart the larger value is reported as
    ``alpha_upper`` and ``seeds_agree`` is False.

    Raises:
        GeometryError: If the measure has no sampling step.
        ValidationError: If ``alpha_points`` is below 2.
    """
    if alpha_points is not None and alpha_points < 2:
        raise validation_error(f"needs at least 2 cells per cube side, got {alpha_points}", "alpha_points")
    if measure.is_empty or mass(measure, cube) == 0:
        return AlphaResult(alpha=0.0, plane=None, c=0.0, transport=0.0)
    c_gamma = _window_constant(measure, window_const)
    problem = FlatComparison(measure, cube, c_gamma, alpha_points)
    n, codim = measure.n, measure.d - measure.n
    scale = cube.side ** (n + 1)
    ell = cube.side

    in_ball = cube.in_ball(measure.base_points, c_gamma)
    points, weights = measure.points[in_ball], measure.weights[in_ball]
    seeds = [(np.zeros((codim, n)), np.average(points[:, n:], axis=0, weights=weights))]
    fitted = _graph_form(fit_plane(points, weights, n)[0], cube.center)
    if fitted is not None:
        seeds.insert(0, fitted)

    def objective(theta: np.ndarray) -> float:
        tilt = theta[: codim * n].reshape(codim, n)
        return problem.solve(tilt, ell * theta[codim * n :])[0] / scale

    finals = []
    for tilt, height in seeds:
        start = np.concatenate([tilt.ravel(), height / ell])
        size = len(start)
        simplex = np.vstack([start, start + 0.05 * np.eye(size)])
        result = minimize(
            objective,
            start,
            method="Nelder-Mead",
            options={"initial_simplex": simplex, "xatol": 1e-7, "fatol": 1e-10, "maxiter": 100 * size},
        )
        start_value = objective(start)
        finals.append((float(result.fun), result.x) if result.fun <= start_value else (start_value, start))

    finals.sort(key=lambda item: item[0])
    value, theta = finals[0]
    tilt = theta[: codim * n].reshape(codim, n)
    height = ell * theta[codim * n :]
    transport, c = problem.solve(tilt, height)
    upper = finals[-1][0]
    agree = upper - value <= SEED_AGREEMENT
    if not agree:
        logger.warning("alpha plane searches disagree on %s: %g vs %g", cube, value, upper)
    return AlphaResult(
        alpha=transport / scale,
        plane=problem.plane(tilt, height),
        c=c,
        transport=transport,
        tol=problem.step / ell,
        alpha_upper=upper,
        seeds_agree=agree,
    )


def packing_sum(
    measure: DiscreteMeasure,
    root: VCube,
    max_depth: int,
    terms: Sequence[str] = (PackingTermChoices.BETA2_SQ, PackingTermChoices.ALPHA_SQ),
    c2: float = 1.0,
    c3: float = 1.0,
    window_const: Optional[float] = None,
    alpha_points: Optional[int] = None,
    jobs: int = 1,
) -> PackingResult:
    """sum over dyadic Q under ``root`` of (beta_2(C2 Q)^2 + alpha(C3 Q)^2) mu(Q).

    Cubes down to side 2^-max_depth l(root) are included; cubes without mass
    are skipped. ``profile[m]`` is the subtotal of generation m and ``rows``
    holds the per-cube coefficients.
    """
    if max_depth < 0:
        raise GeometryError(f"max_depth must be non-negative, got {max_depth}")
    terms = {str(t) for t in terms}
    cubes = dyadic_cubes(root, 0, max_depth)

    def one(cube: VCube) -> Optional[Dict]:
        weight = mass(measure, cube)
        if weight == 0:
            return None
        b2 = beta(measure, cube.dilate(c2), 2.0, window_const).beta if PackingTermChoices.BETA2_SQ in terms else 0.0
        a = (
            alpha(measure, cube.dilate(c3), window_const, alpha_points)
            if PackingTermChoices.ALPHA_SQ in terms
            else None
        )
        return {
            "gen": int(round(math.log2(root.side / cube.side))),
            "center": cube.center.tolist(),
            "ell": cube.side,
            "mass": weight,
            "beta2": b2,
            "alpha": a.alpha if a else 0.0,
            "c": a.c if a else 0.0,
            "term": (b2**2 + (a.alpha if a else 0.0) ** 2) * weight,
        }

    rows = [row for row in parallel_map(one, cubes, jobs) if row is not None]
    skipped = len(cubes) - len(rows)
    if skipped:
        logger.debug("packing skipped %d cubes without mass", skipped)
    profile = tuple(exact_sum([r["term"] for r in rows if r["gen"] == m]) for m in range(max_depth + 1))
    return PackingResult(total=exact_sum(profile), profile=profile, rows=tuple(rows))


def beta1_vs_alpha(
    measure: DiscreteMeasure,
    cubes: Sequence[VCube],
    window_const: Optional[float] = None,
    alpha_points: Optional[int] = None,
    threshold: float = 1e-9,
) -> RatioDistribution:
    """beta_1(Q) / alpha(Q) over cubes meeting the support with alpha above ``threshold``."""
    ratios, skipped = [], 0
    for cube in cubes:
        if mass(measure, cube) == 0:
            skipped += 1
            continue
        a = alpha(measure, cube, window_const, alpha_points)
        if a.alpha <= threshold:
            skipped += 1
            continue
        ratios.append(beta(measure, cube, 1.0, window_const).beta / a.alpha)
    return RatioDistribution(max_ratio=max(ratios) if ratios else 0.0, ratios=tuple(ratios), skipped=skipped)
