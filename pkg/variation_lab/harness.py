"""Experiments assembling measures, operators and functionals.

Every recorded "constant" is an empirical ratio computed at desk scale:

    - operator ratios ||F(T_phi f)||_(L^p) / ||f||_(L^p) for F = V_rho or O
    - the Cotlar constant C_0 of T_eps f <= T_(phi_eps) f + C_0 M f
    - localization and decomposition constants
    - endpoint diagnostics for atoms, BMO oscillation and jump counts

Norms of operator outputs are taken over a deterministic stratified subsample
of the support inside the region of interest P (the support box of the graph,
or the configured base cube). Test functions are supported in P.

`run_experiment` dispatches a configuration to its experiment and writes the
CSV tables, tracking progress on a `RunManifest`.
"""

import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from variation_lab.choices import (
    ExperimentChoices,
    FunctionalChoices,
    GraphFamilyChoices,
    TestFunctionChoices,
    TruncationModeChoices,
)
from variation_lab.coefficients import alpha, beta, beta1_vs_alpha, packing_sum
from variation_lab.constants import STABILITY_FACTOR
from variation_lab.exceptions import ConfigError, EmptyRegionError, InvariantError
from variation_lab.geometry import (
    build_graph,
    dyadic_cubes,
    mass,
    sample_measure,
    sample_measure_with_tail,
)
from variation_lab.kernels import build_kernel
from variation_lab.martingale import (
    lepingle_ratio,
    martingale_sample,
    tail_doubling_defect,
    w_from_sample,
    write_martingale_csv,
)
from variation_lab.models import (
    CotlarRecord,
    CZKernel,
    DiscreteMeasure,
    EndpointReport,
    EpsGrid,
    ExperimentConfig,
    LipschitzGraph,
    RatioRecord,
    RunManifest,
    SampledFamily,
    SquareFunctionRecord,
    SweepResult,
    VCube,
    WindowSpec,
)
from variation_lab.transforms import (
    hl_maximal,
    maximal,
    principal_value_estimate,
    sample_families,
    write_families_csv,
)
from variation_lab.utility import exact_sum, parallel_map, rng, write_csv
from variation_lab.validators import is_choice, is_exponent, validation_error
from variation_lab.variation import lambda_jumps, oscillation, rho_variation, short_variation

logger = logging.getLogger(__name__)

SWEEP_HEADER = ["experiment", "graph", "lip", "kernel", "rho", "p", "h", "ratio", "stability_factor", "witness"]


# setup
def region_of_interest(config: ExperimentConfig) -> VCube:
    """P: the support box of the graph when given, else the base cube."""
    return config.support_box if config.support_box is not None else config.base


def prepare(config: ExperimentConfig, h: float) -> Tuple[LipschitzGraph, DiscreteMeasure]:
    """Build the configured graph and sample its measure at step h.

    Graphs with a support box are sampled over the box plus a flat collar of
    width ``martingale.tail_radius``; other graphs over the base cube.
    """
    graph = build_graph(config.family, config.n, config.d, config.support_box, **config.family_params)
    if config.support_box is not None:
        measure = sample_measure_with_tail(graph, config.support_box, h, config.martingale.tail_radius)
    else:
        measure = sample_measure(graph, config.base, h)
    return graph, measure


def kernel_for(config: ExperimentConfig) -> CZKernel:
    return build_kernel(config.kernel, config.component, config.n, config.d)


def eps_grid(config: ExperimentConfig, per_octave: Optional[int] = None) -> EpsGrid:
    return EpsGrid.log_uniform(config.eps_max, config.octaves, per_octave or config.per_octave)


def window_specs(config: ExperimentConfig, grid: EpsGrid) -> List[WindowSpec]:
    """One `WindowSpec` per configured ``(start, ratio)`` pair, reaching below the grid."""
    return [WindowSpec.geometric(start, ratio, grid.values[-1]) for start, ratio in config.windows]


# norms and test functions
def lp_norm(measure, values: np.ndarray, p: float) -> float:
    """(sum w_i |v_i|^p)^(1/p); ``p = inf`` gives max |v_i|.

    Args:
        measure (DiscreteMeasure | np.ndarray): Measure or plain weights.
        values (np.ndarray): One value per weight.
        p (float): Exponent in [1, inf].
    """
    p = is_exponent(p, "p")
    weights = measure.weights if isinstance(measure, DiscreteMeasure) else np.asarray(measure, dtype=float)
    values = np.abs(np.asarray(values, dtype=float).ravel())
    if not np.all(np.isfinite(values)):
        raise validation_error("values must be finite", "values")
    if len(values) == 0:
        return 0.0
    if math.isinf(p):
        return float(values.max())
    return exact_sum(weights * values**p) ** (1.0 / p)


def test_functions(
    measure: DiscreteMeasure,
    kind: str,
    cube: Optional[VCube] = None,
    seed: int = 0,
) -> np.ndarray:
    """Values on the support of a test function of the given kind.

    ``indicator`` and ``h1_atom`` live on ``cube`` (the sampled base if
    omitted); the random kinds are restricted to ``cube`` when it is given.
    The atom takes the values ``s_L`` and ``-s_R`` on the two halves of the
    cube along the first axis, with ``s_L mu(L) = s_R mu(R)`` and
    ``max(s_L, s_R) = 1 / mu(D)``.

    Raises:
        EmptyRegionError: If the cube has no mass, or a half of it has none
            for an atom.
    """
    kind = is_choice(kind, TestFunctionChoices, "test_functions")
    region = cube if cube is not None else measure.base
    inside = region.contains(measure.base_points) if region is not None else np.ones(measure.size, dtype=bool)
    if kind == TestFunctionChoices.RADEMACHER:
        return rng(seed).choice([-1.0, 1.0], size=measure.size) * inside
    if kind == TestFunctionChoices.BOUNDED_RANDOM:
        return rng(seed).uniform(-1.0, 1.0, size=measure.size) * inside

    total = exact_sum(measure.weights[inside])
    if not total > 0:
        raise EmptyRegionError(f"test function cube {region} carries no mass")
    if kind == TestFunctionChoices.INDICATOR:
        return inside.astype(float)

    left = inside & (measure.base_points[:, 0] < region.center[0])
    right = inside & ~left
    mass_left, mass_right = exact_sum(measure.weights[left]), exact_sum(measure.weights[right])
    if not (mass_left > 0 and mass_right > 0):
        raise EmptyRegionError(f"cube {region} is too small to split into an atom")
    scale = total * max(mass_left, mass_right)
    values = np.zeros(measure.size)
    values[left] = mass_right / scale
    values[right] = -mass_left / scale
    return values


test_functions.__test__ = False


def evaluation_points(
    measure: DiscreteMeasure, count: int, region: Optional[VCube] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Deterministic stratified subsample of the support in ``region``.

    The region is split into the dyadic cells of the finest generation with at
    most ``count`` cells; each cell contributes evenly spaced support points
    (in support order), each weighted by the cell mass over the number taken.

    Returns:
        tuple: ``(indices, weights)`` so that ``sum weights g(x)`` approximates
        the integral of g over the region.
    """
    region = region if region is not None else measure.base
    generation = max(0, int(math.floor(math.log2(max(count, 1)) / measure.n)))
    cells = dyadic_cubes(region, generation, generation)
    quota = max(1, count // len(cells))
    indices, weights = [], []
    for cell in cells:
        members = np.flatnonzero(cell.contains(measure.base_points))
        if len(members) == 0:
            continue
        take = members[np.unique(np.linspace(0, len(members) - 1, min(quota, len(members))).round().astype(int))]
        indices.extend(take.tolist())
        weights.extend([exact_sum(measure.weights[members]) / len(take)] * len(take))
    return np.asarray(indices, dtype=np.int64), np.asarray(weights, dtype=float)


# functionals
def functional_values(
    families: Sequence[SampledFamily],
    functional: str,
    rho: float,
    windows: Optional[WindowSpec] = None,
) -> np.ndarray:
    """V_rho or O of every family."""
    functional = is_choice(functional, FunctionalChoices, "functional")
    if functional == FunctionalChoices.OSCILLATION:
        if windows is None:
            raise validation_error("oscillation needs windows", "windows")
        return np.array([oscillation(family, windows) for family in families])
    return np.array([rho_variation(family, rho).value for family in families])


def operator_values(
    config: ExperimentConfig,
    measure: DiscreteMeasure,
    f: np.ndarray,
    indices: np.ndarray,
    functional: Optional[str] = None,
    windows: Optional[WindowSpec] = None,
    grid: Optional[EpsGrid] = None,
    jobs: int = 1,
) -> np.ndarray:
    """(F o T_phi) f at the support points ``indices``."""
    grid = grid or eps_grid(config)
    families = sample_families(kernel_for(config), measure, f, indices, grid, TruncationModeChoices.SMOOTH, False, jobs)
    return functional_values(families, functional or config.functional, config.rho, windows)


def operator_ratio(
    config: ExperimentConfig,
    f: np.ndarray,
    measure: DiscreteMeasure,
    functional: Optional[str] = None,
    windows: Optional[WindowSpec] = None,
    grid: Optional[EpsGrid] = None,
    jobs: int = 1,
    **metadata,
) -> RatioRecord:
    """||(F o T_phi) f||_(L^p(mu|P)) / ||f||_(L^p(mu)).

    Raises:
        ValidationError: If f vanishes.
    """
    indices, weights = evaluation_points(measure, config.evaluation_points, region_of_interest(config))
    values = operator_values(config, measure, f, indices, functional, windows, grid, jobs)
    return RatioRecord.build(
        lp_norm(weights, values, config.p),
        lp_norm(measure, f, config.p),
        measure.h,
        functional=str(functional or config.functional),
        **metadata,
    )


def stability(values: Sequence[float]) -> float:
    """Largest factor between successive positive values; 1 for a single value."""
    factor = 1.0
    for previous, current in zip(values, values[1:]):
        if previous > 0 and current > 0:
            factor = max(factor, previous / current, current / previous)
        elif previous != current:
            factor = math.inf
    return factor


def refinement_sweep(config: ExperimentConfig, jobs: int = 1) -> SweepResult:
    """Operator ratios per test function (and window) at every resolution.

    The stability factor is the largest successive-resolution factor over all
    test functions.
    """
    if len(config.resolutions) < 2:
        raise ConfigError("a sweep needs at least two resolutions")
    grid = eps_grid(config)
    windows = window_specs(config, grid) if config.functional == FunctionalChoices.OSCILLATION else [None]
    records: List[RatioRecord] = []
    for h in config.resolutions:
        _, measure = prepare(config, h)
        for kind in config.test_functions:
            f = test_functions(measure, kind, region_of_interest(config), config.seed)
            for number, window in enumerate(windows):
                witness = str(kind) if window is None else f"{kind}/window{number}"
                records.append(
                    operator_ratio(config, f, measure, windows=window, grid=grid, jobs=jobs, witness=witness)
                )
        logger.info("sweep finished h=%g", h)
    by_witness: Dict[str, List[float]] = {}
    for record in records:
        by_witness.setdefault(record.metadata["witness"], []).append(record.ratio)
    factor = max(stability(values) for values in by_witness.values())
    if factor > STABILITY_FACTOR:
        logger.warning("sweep ratios move by a factor %g across resolutions", factor)
    return SweepResult(records=tuple(records), stability_factor=factor)


def cotlar_check(
    config: ExperimentConfig,
    measure: DiscreteMeasure,
    f: Optional[np.ndarray] = None,
    scales: Optional[Sequence[float]] = None,
    jobs: int = 1,
) -> CotlarRecord:
    """Smallest C_0 with T_eps f <= T_(phi_eps) f + C_0 M f over the sampled (x, eps).

    ``f`` defaults to the indicator of P and ``scales`` to ``eps_max 2^-k`` for
    k = -2 .. octaves. Recorded with the witness (support index, eps).

    Raises:
        InvariantError: If the sharp truncation exceeds the smooth one where
            the maximal function vanishes.
    """
    region = region_of_interest(config)
    f = test_functions(measure, TestFunctionChoices.INDICATOR, region) if f is None else np.asarray(f, dtype=float)
    scales = scales or [config.eps_max * 2.0**-k for k in range(-2, config.octaves + 1)]
    grid = eps_grid(config)
    kernel = kernel_for(config)
    indices, _ = evaluation_points(measure, config.evaluation_points, region)
    sharp = sample_families(kernel, measure, f, indices, grid, TruncationModeChoices.SHARP, False, jobs)
    smooth = sample_families(kernel, measure, f, indices, grid, TruncationModeChoices.SMOOTH, False, jobs)
    best = CotlarRecord(c0=0.0, witness_index=-1, witness_eps=math.nan)
    for index, sharp_family, smooth_family in zip(indices, sharp, smooth):
        excess = sharp_family.values - smooth_family.values
        if not np.any(excess > 0):
            continue
        bound = hl_maximal(measure, f, measure.points[index], scales)
        if bound <= 0:
            raise InvariantError(f"maximal function vanishes at point {index} where T_eps f exceeds T_phi f")
        k = int(np.argmax(excess))
        if excess[k] / bound > best.c0:
            best = CotlarRecord(
                c0=float(excess[k] / bound),
                witness_index=int(index),
                witness_eps=float(grid.values[k]),
            )
    logger.info("Cotlar constant %g at point %d", best.c0, best.witness_index)
    return best


def _weak_profile(values: np.ndarray, weights: np.ndarray) -> float:
    """sup_t t mu{values >= t}, the weak-L^1 quasi-norm of non-negative values."""
    order = np.argsort(-values, kind="stable")
    tail = np.cumsum(weights[order])
    return float(np.max(values[order] * tail)) if len(values) else 0.0


def endpoint_diagnostics(
    config: ExperimentConfig,
    measure: DiscreteMeasure,
    atom: Optional[np.ndarray] = None,
    bounded: Optional[np.ndarray] = None,
    jobs: int = 1,
) -> EndpointReport:
    """Atom, BMO, weak-L^1 and jump diagnostics of (V_rho o T_phi).

    ``atom`` defaults to the atom of P and ``bounded`` to a bounded random
    function on P. The BMO oscillation is the largest mean oscillation over
    the dyadic cubes of P of generations 0 to 2.
    """
    region = region_of_interest(config)
    if atom is None:
        atom = test_functions(measure, TestFunctionChoices.H1_ATOM, region)
    atom = np.asarray(atom, dtype=float)
    if bounded is None:
        bounded = test_functions(measure, TestFunctionChoices.BOUNDED_RANDOM, region, config.seed)
    indices, weights = evaluation_points(measure, config.evaluation_points, region)
    grid = eps_grid(config)
    kernel = kernel_for(config)

    atom_values = operator_values(config, measure, atom, indices, FunctionalChoices.VARIATION, grid=grid, jobs=jobs)
    atom_l1 = lp_norm(measure, atom, 1.0)
    atom_integral = exact_sum(weights * atom_values)
    weak = _weak_profile(atom_values, weights) / atom_l1 if atom_l1 > 0 else 0.0

    families = sample_families(kernel, measure, bounded, indices, grid, TruncationModeChoices.SMOOTH, False, jobs)
    g = functional_values(families, FunctionalChoices.VARIATION, config.rho)
    bmo = 0.0
    base = measure.base_points[indices]
    for cube in dyadic_cubes(region, 0, 2):
        inside = cube.contains(base)
        total = exact_sum(weights[inside])
        if total > 0:
            mean = exact_sum(weights[inside] * g[inside]) / total
            bmo = max(bmo, exact_sum(weights[inside] * np.abs(g[inside] - mean)) / total)

    f_norm = lp_norm(measure, bounded, config.p)
    f_l1 = lp_norm(measure, bounded, 1.0)
    jump_norms, jump_weak = [], []
    for lam in config.lambdas:
        counts = np.array([lambda_jumps(family, lam) for family in families], dtype=float) ** (1.0 / config.rho)
        jump_norms.append(lam * lp_norm(weights, counts, config.p) / f_norm if f_norm > 0 else 0.0)
        jump_weak.append(lam * _weak_profile(counts, weights) / f_l1 if f_l1 > 0 else 0.0)
    return EndpointReport(
        atom_integral=atom_integral,
        bmo_oscillation=bmo,
        weak_l1_profile=weak,
        jump_norms=tuple(jump_norms),
        jump_weak_profile=tuple(jump_weak),
    )


def localization_constant(
    config: ExperimentConfig,
    measure: DiscreteMeasure,
    cubes: Sequence[VCube],
    jobs: int = 1,
) -> Tuple[float, Tuple[float, ...]]:
    """max over D of the integral over D of ((V_rho o T_phi) chi_D)^2 / mu(D).

    Every support point of D is an evaluation point. Cubes without mass are
    skipped. Returns the maximum and the per-cube values.
    """
    grid = eps_grid(config)
    per_cube = []
    for cube in cubes:
        inside = cube.contains(measure.base_points)
        total = exact_sum(measure.weights[inside])
        if not total > 0:
            continue
        indices = np.flatnonzero(inside)
        values = operator_values(
            config, measure, inside.astype(float), indices, FunctionalChoices.VARIATION, grid=grid, jobs=jobs
        )
        per_cube.append(exact_sum(measure.weights[indices] * values**2) / total)
    return (max(per_cube) if per_cube else 0.0), tuple(per_cube)


def decomposition_constant(
    config: ExperimentConfig,
    measure: DiscreteMeasure,
    point_indices: Sequence[int],
    jobs: int = 1,
) -> float:
    """Smallest C with V_rho(K phi * mu)(x) <= C (S mu(x) + W mu(x) + V_rho(E mu)(x)).

    Taken over ``point_indices``; a point where the right side vanishes but
    the left does not gives an infinite constant.
    """
    kernel = kernel_for(config)
    sample = martingale_sample(measure, kernel, config.martingale, point_indices, jobs)
    w = w_from_sample(measure, kernel, sample, config.martingale)
    families = sample_families(
        kernel, measure, np.ones(measure.size), sample.point_indices, eps_grid(config),
        TruncationModeChoices.SMOOTH, config.martingale.symmetric_tail, jobs,
    )
    best = 0.0
    for column, family in enumerate(families):
        left = rho_variation(family, config.rho).value
        right = short_variation(family) + w[column].value + rho_variation(sample.family(column), config.rho).value
        if left <= 0:
            continue
        best = max(best, left / right if right > 0 else math.inf)
    return best


def square_function_ratios(config: ExperimentConfig, h: float, jobs: int = 1) -> SquareFunctionRecord:
    """||W mu||^2 and ||S mu||^2 over P at step h, with the packing sum they are bounded by.

    Both squared norms are sums over the sample points of P. The packing sum
    runs over the dyadic cubes of P down to ``config.max_depth`` with the
    configured terms, dilations and ``alpha_points``.

    Raises:
        ConfigError: If a non-flat graph has no support box.
    """
    _require_compact(config)
    kernel = kernel_for(config)
    region = region_of_interest(config)
    graph, measure = prepare(config, h)
    if config.support_box is None:
        measure = sample_measure_with_tail(graph, region, h, config.martingale.tail_radius)
    indices = np.flatnonzero(region.contains(measure.base_points))
    sample = martingale_sample(measure, kernel, config.martingale, indices, jobs)
    w = w_from_sample(measure, kernel, sample, config.martingale)
    families = sample_families(
        kernel, measure, np.ones(measure.size), indices, eps_grid(config),
        TruncationModeChoices.SMOOTH, config.martingale.symmetric_tail, jobs,
    )
    weights = measure.weights[indices]
    packing = packing_sum(
        measure,
        region,
        config.max_depth,
        config.terms,
        config.c2,
        config.c3,
        alpha_points=config.alpha_points,
        jobs=jobs,
    )
    return SquareFunctionRecord(
        h=h,
        w_norm_sq=exact_sum(weights * np.array([d.value for d in w]) ** 2),
        s_norm_sq=exact_sum(weights * np.array([short_variation(family) for family in families]) ** 2),
        packing=packing.total,
        sample=sample,
        diagnostics=tuple(w),
    )


def sublinearity_defect(
    config: ExperimentConfig,
    measure: DiscreteMeasure,
    f: np.ndarray,
    g: np.ndarray,
    jobs: int = 1,
) -> Tuple[float, float, float]:
    """Pointwise defects of sublinearity, difference domination and positivity.

    Returns:
        tuple: max of ``V(f + g) - V(f) - V(g)``, max of
        ``|V f - V g| - V(f - g)`` and max of ``-V f``, over the evaluation
        points. Each is at most 0 up to rounding.
    """
    indices, _ = evaluation_points(measure, config.evaluation_points, region_of_interest(config))

    def values(h: np.ndarray) -> np.ndarray:
        return operator_values(config, measure, h, indices, FunctionalChoices.VARIATION, jobs=jobs)

    vf, vg, vsum, vdiff = values(f), values(g), values(f + g), values(f - g)
    return float(np.max(vsum - vf - vg)), float(np.max(np.abs(vf - vg) - vdiff)), float(np.max(-vf))


# experiments
def _sweep_row(
    config: ExperimentConfig,
    graph: LipschitzGraph,
    experiment: str,
    h: float,
    ratio: float,
    factor: float,
    witness: str,
) -> list:
    return [
        experiment,
        str(graph.family),
        graph.lip,
        str(config.kernel),
        config.rho,
        config.p,
        h,
        ratio,
        factor,
        witness,
    ]


def _run_transform(config: ExperimentConfig, out: Path, manifest: RunManifest, jobs: int) -> List[Path]:
    _, measure = prepare(config, config.resolutions[0])
    region = region_of_interest(config)
    f = test_functions(measure, config.test_functions[0], region, config.seed)
    indices, _ = evaluation_points(measure, config.evaluation_points, region)
    families = sample_families(
        kernel_for(config), measure, f, indices, eps_grid(config), TruncationModeChoices.SMOOTH, False, jobs
    )
    manifest.log_step("transform", f"sampled {len(families)} families", h=measure.h)
    rows = []
    for index, family in zip(indices, families):
        estimate = principal_value_estimate(family)
        summary = [estimate.value, estimate.cauchy_defect, maximal(family)]
        rows.append([int(index)] + measure.points[index].tolist() + summary)
    header = ["point"] + [f"x{i + 1}" for i in range(measure.d)] + ["value", "cauchy_defect", "maximal"]
    return [
        write_families_csv(families, out / "transform_families.csv", labels=indices.tolist()),
        write_csv(out / "principal_values.csv", header, rows),
    ]


def _run_variation(config: ExperimentConfig, out: Path, manifest: RunManifest, jobs: int) -> List[Path]:
    _, measure = prepare(config, config.resolutions[0])
    region = region_of_interest(config)
    f = test_functions(measure, config.test_functions[0], region, config.seed)
    indices, _ = evaluation_points(measure, config.evaluation_points, region)
    grid = eps_grid(config)
    families = sample_families(kernel_for(config), measure, f, indices, grid, TruncationModeChoices.SMOOTH, False, jobs)
    windows = window_specs(config, grid)[0]
    header = ["point", "rho_variation", "v2", "oscillation", "short_variation", "maximal"]
    header += [f"jumps_{lam:g}" for lam in config.lambdas]
    rows = []
    for index, family in zip(indices, families):
        row = [int(index), rho_variation(family, config.rho).value, rho_variation(family, 2.0).value]
        row += [oscillation(family, windows), short_variation(family), maximal(family)]
        row += [lambda_jumps(family, lam) for lam in config.lambdas]
        rows.append(row)
    manifest.log_step("variation", f"evaluated {len(rows)} families")
    return [write_csv(out / "variation.csv", header, rows)]


def _run_coeffs(config: ExperimentConfig, out: Path, manifest: RunManifest, jobs: int) -> List[Path]:
    _, measure = prepare(config, config.resolutions[0])
    cubes = [cube for cube in dyadic_cubes(region_of_interest(config), 0, config.max_depth) if mass(measure, cube) > 0]

    def one(cube: VCube) -> list:
        a = alpha(measure, cube, alpha_points=config.alpha_points)
        b1 = beta(measure, cube, 1.0).beta
        b2 = beta(measure, cube, 2.0).beta
        generation = int(round(math.log2(region_of_interest(config).side / cube.side)))
        return [generation] + cube.center.tolist() + [cube.side, b1, b2, a.alpha, a.c, a.alpha_upper, a.tol]

    rows = parallel_map(one, cubes, jobs)
    ratios = beta1_vs_alpha(measure, cubes, alpha_points=config.alpha_points)
    manifest.log_step("coeffs", f"computed coefficients of {len(rows)} cubes", beta1_alpha_max=ratios.max_ratio)
    header = (
        ["gen"]
        + [f"center{i + 1}" for i in range(config.n)]
        + ["ell", "beta1", "beta2", "alpha", "c", "alpha_upper", "tol"]
    )
    return [write_csv(out / "coefficients.csv", header, rows)]


def _run_packing(config: ExperimentConfig, out: Path, manifest: RunManifest, jobs: int) -> List[Path]:
    rows = []
    for h in config.resolutions:
        _, measure = prepare(config, h)
        root = region_of_interest(config)
        result = packing_sum(
            measure,
            root,
            config.max_depth,
            config.terms,
            config.c2,
            config.c3,
            alpha_points=config.alpha_points,
            jobs=jobs,
        )
        root_mass = mass(measure, root)
        for generation, subtotal in enumerate(result.profile):
            rows.append([h, generation, subtotal, result.total, result.total / root_mass])
        manifest.log_step("packing", f"packing sum {result.total:g}", h=h)
    return [write_csv(out / "packing.csv", ["h", "gen", "subtotal", "total", "total_over_mass"], rows)]


def _require_compact(config: ExperimentConfig) -> None:
    if config.support_box is None and config.family != GraphFamilyChoices.FLAT:
        raise ConfigError("martingale experiments need graph.support_box for non-flat graphs")


def _run_martingale(config: ExperimentConfig, out: Path, manifest: RunManifest, jobs: int) -> List[Path]:
    _require_compact(config)
    kernel = kernel_for(config)
    region = region_of_interest(config)
    rows, paths = [], []
    for h in config.resolutions:
        graph, measure = prepare(config, h)
        if config.support_box is None:
            measure = sample_measure_with_tail(graph, region, h, config.martingale.tail_radius)
        record = square_function_ratios(config, h, jobs)
        sample = record.sample
        lepingle = lepingle_ratio(measure, kernel, config.martingale, sample.point_indices, rho=3.0, sample=sample)
        defect = tail_doubling_defect(graph, kernel, config.martingale, region, h, jobs)
        rows.append([
            h, record.w_norm_sq, record.s_norm_sq, record.packing, record.w_ratio, record.s_ratio,
            lepingle.variation_ratio, lepingle.oscillation_ratio, defect,
        ])
        paths.append(write_martingale_csv(measure, sample, record.diagnostics, out / f"martingale_trace_h{h:g}.csv"))
        manifest.log_step("martingale", f"martingale diagnostics at h={h:g}", lepingle=lepingle.variation_ratio)
    header = [
        "h",
        "w_norm_sq",
        "s_norm_sq",
        "packing",
        "w_ratio",
        "s_ratio",
        "lepingle_variation",
        "lepingle_oscillation",
        "tail_defect",
    ]
    return [write_csv(out / "martingale.csv", header, rows)] + paths


def _run_sweep(config: ExperimentConfig, out: Path, manifest: RunManifest, jobs: int) -> List[Path]:
    graph = build_graph(config.family, config.n, config.d, config.support_box, **config.family_params)
    result = refinement_sweep(config, jobs)
    by_witness: Dict[str, List[float]] = {}
    for record in result.records:
        by_witness.setdefault(record.metadata["witness"], []).append(record.ratio)
    rows = []
    for r in result.records:
        witness = r.metadata["witness"]
        factor = stability(by_witness[witness])
        rows.append(_sweep_row(config, graph, str(ExperimentChoices.SWEEP), r.resolution, r.ratio, factor, witness))
    manifest.log_step("sweep", f"operator ratios stable within {result.stability_factor:g}")

    cotlar, local = [], []
    region = region_of_interest(config)
    for h in config.resolutions:
        _, measure = prepare(config, h)
        record = cotlar_check(config, measure, jobs=jobs)
        cotlar.append((h, record))
        constant, _ = localization_constant(config, measure, dyadic_cubes(region, 1, 1), jobs)
        local.append((h, constant))
    cotlar_factor = stability([record.c0 for _, record in cotlar])
    local_factor = stability([constant for _, constant in local])
    for h, record in cotlar:
        witness = f"{record.witness_index}@{record.witness_eps!r}"
        rows.append(_sweep_row(config, graph, "cotlar", h, record.c0, cotlar_factor, witness))
    for h, constant in local:
        rows.append(_sweep_row(config, graph, "localization", h, constant, local_factor, "dyadic_children"))
    manifest.log_step("sweep", "recorded Cotlar and localization constants", cotlar_factor=cotlar_factor)
    return [write_csv(out / "sweep.csv", SWEEP_HEADER, rows)]


def _run_endpoints(config: ExperimentConfig, out: Path, manifest: RunManifest, jobs: int) -> List[Path]:
    rows, jumps = [], []
    for h in config.resolutions:
        _, measure = prepare(config, h)
        report = endpoint_diagnostics(config, measure, jobs=jobs)
        rows.append([h, report.atom_integral, report.bmo_oscillation, report.weak_l1_profile])
        profile = zip(config.lambdas, report.jump_norms, report.jump_weak_profile)
        jumps.extend([h, lam, norm, weak] for lam, norm, weak in profile)
        manifest.log_step("endpoints", f"endpoint diagnostics at h={h:g}", atom_integral=report.atom_integral)
    return [
        write_csv(out / "endpoints.csv", ["h", "atom_integral", "bmo_oscillation", "weak_l1_profile"], rows),
        write_csv(out / "jumps.csv", ["h", "lambda", "jump_norm", "jump_weak"], jumps),
    ]


EXPERIMENTS: Dict[str, Callable[[ExperimentConfig, Path, RunManifest, int], List[Path]]] = {
    ExperimentChoices.TRANSFORM: _run_transform,
    ExperimentChoices.VARIATION: _run_variation,
    ExperimentChoices.COEFFS: _run_coeffs,
    ExperimentChoices.PACKING: _run_packing,
    ExperimentChoices.MARTINGALE: _run_martingale,
    ExperimentChoices.SWEEP: _run_sweep,
    ExperimentChoices.ENDPOINTS: _run_endpoints,
}


def run_experiment(config: ExperimentConfig, out: Path, manifest: RunManifest, jobs: int = 1) -> List[Path]:
    """Run the configured experiment, writing its tables under ``out``.

    The manifest is marked started, gets one output entry per table and is
    marked completed; on a domain error it is marked failed and the error
    re-raised.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest.total_steps = 1
    manifest.mark_as_started()
    logger.info("running %s on %s graph", config.experiment, config.family)
    try:
        paths = EXPERIMENTS[config.experiment](config, out, manifest, jobs)
    except Exception as e:
        manifest.mark_as_failed(str(e))
        raise
    for path in paths:
        manifest.add_output(path)
    manifest.update_progress(1)
    manifest.mark_as_completed()
    return paths
