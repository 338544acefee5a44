"""Registry of invariant checks run by the ``verify`` command.

Checks are plain functions taking a seed and returning a short detail string;
they raise `InvariantError` when the invariant fails. Each is registered under
the module it exercises and a suite: ``fast`` checks run on every call,
``full`` checks only with ``verify --suite full``.

Example:
    @register.check(module="kernels")
    def cauchy_is_odd(seed):
        ...
        return "oddness defect 0"

    results = register.run("fast", seed=0)
"""

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
from django.core.exceptions import ValidationError

from variation_lab import harness
from variation_lab.choices import GraphFamilyChoices, SuiteChoices, TestFunctionChoices
from variation_lab.coefficients import alpha, beta, bl_distance, packing_sum
from variation_lab.constants import INEQUALITY_SLACK, STABILITY_FACTOR
from variation_lab.exceptions import InvariantError, VariationLabError
from variation_lab.geometry import (
    build_graph,
    dyadic_cubes,
    mass,
    sample_measure,
    sample_measure_with_tail,
    translated_cell,
)
from variation_lab.kernels import (
    cauchy_component,
    even_power_kernel,
    phi,
    phi_window,
    riesz_component,
    truncation_profile,
    verify_cz_bounds,
)
from variation_lab.martingale import (
    averaged_term,
    conditional_avg,
    lambda_form_term,
    martingale_term,
    s_diagnostic,
    w_diagnostic,
)
from variation_lab.models import (
    Ball,
    DiscreteMeasure,
    EpsGrid,
    ExperimentConfig,
    MartingaleConfig,
    SampledFamily,
    VCube,
    WindowSpec,
)
from variation_lab.oracles import (
    beta2_line_search,
    lambda_jumps_bruteforce,
    oscillation_bruteforce,
    rho_variation_bruteforce,
    upcrossings_bruteforce,
)
from variation_lab.transforms import sample_family, truncated_sharp, truncated_smooth
from variation_lab.utility import exact_sum, rng, write_csv
from variation_lab.variation import (
    lambda_jumps,
    oscillation,
    rho_variation,
    short_variation,
    upcrossings,
)

logger = logging.getLogger(__name__)

SUMMARY_HEADER = ["module", "check", "suite", "status", "seed", "elapsed", "detail"]
PASSED = "passed"
FAILED = "failed"
ERROR = "error"


@dataclass(frozen=True)
class Check:
    name: str
    module: str
    suite: str
    func: Callable[[int], str]


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one check.

    Attributes:
        module (str): Module the invariant belongs to.
        check (str): Check name.
        suite (str): Suite the check is tagged with.
        status (str): ``passed``, ``failed`` or ``error``.
        seed (int): Seed the check ran with.
        elapsed (float): Seconds spent.
        detail (str): Measured values or the failure message.
    """

    module: str
    check: str
    suite: str
    status: str
    seed: int
    elapsed: float
    detail: str

    @property
    def ok(self) -> bool:
        return self.status == PASSED

    def as_row(self) -> list:
        return [self.module, self.check, str(self.suite), self.status, self.seed, self.elapsed, self.detail]


class CheckRegistry:
    """Ordered collection of checks."""

    def __init__(self):
        self._checks: List[Check] = []

    def check(self, module: str, suite: str = SuiteChoices.FAST):
        def decorator(func: Callable[[int], str]) -> Callable[[int], str]:
            self._checks.append(Check(name=func.__name__, module=module, suite=suite, func=func))
            return func

        return decorator

    def checks(self, suite: str = SuiteChoices.FULL, modules: Optional[Sequence[str]] = None) -> List[Check]:
        return [
            c
            for c in self._checks
            if SuiteChoices.includes(suite, c.suite) and (not modules or c.module in modules)
        ]

    def run(
        self,
        suite: str = SuiteChoices.FAST,
        seed: int = 0,
        modules: Optional[Sequence[str]] = None,
    ) -> List[CheckResult]:
        """Run the selected checks in registration order; never raises for a failing check."""
        results = []
        for check in self.checks(suite, modules):
            start = time.perf_counter()
            try:
                status, detail = PASSED, check.func(seed)
            except InvariantError as e:
                status, detail = FAILED, str(e)
            except (VariationLabError, ValidationError) as e:
                status, detail = ERROR, f"{type(e).__name__}: {e}"
            elapsed = time.perf_counter() - start
            log = logger.info if status == PASSED else logger.error
            log("%s.%s %s (%.2fs): %s", check.module, check.name, status, elapsed, detail)
            results.append(CheckResult(check.module, check.name, check.suite, status, seed, round(elapsed, 3), detail))
        return results


def write_summary(results: Sequence[CheckResult], path: Path) -> Path:
    return write_csv(Path(path), SUMMARY_HEADER, [r.as_row() for r in results])


def expect(condition: bool, message: str) -> None:
    if not condition:
        raise InvariantError(message)


register = CheckRegistry()


# fixtures
def _flat(h: float, base: Optional[VCube] = None) -> DiscreteMeasure:
    return sample_measure(build_graph(GraphFamilyChoices.FLAT), base or VCube(center=[0.5], side=1.0), h)


def _sawtooth(h: float, slope: float = 1.0) -> DiscreteMeasure:
    graph = build_graph(GraphFamilyChoices.SAWTOOTH, slope=slope, period=0.25)
    return sample_measure(graph, VCube(center=[0.5], side=1.0), h)


def _compact(family: str, h: float, tail_radius: float = 2.0, **params) -> DiscreteMeasure:
    box = VCube(center=[0.5], side=1.0)
    graph = build_graph(family, support_box=box if family != GraphFamilyChoices.FLAT else None, **params)
    return sample_measure_with_tail(graph, box, h, tail_radius)


def _random_families(seed: int, count: int, length: int) -> List[SampledFamily]:
    generator = rng(seed)
    families = []
    for _ in range(count):
        size = int(generator.integers(1, length + 1))
        values = np.round(generator.normal(size=size), 3)
        families.append(SampledFamily.from_values(values))
    return families


# geometry
@register.check(module="geometry")
def mass_additivity(seed: int) -> str:
    measure = _sawtooth(2.0**-6)
    worst = 0.0
    for cube in dyadic_cubes(measure.base, 0, 3):
        worst = max(worst, abs(mass(measure, cube) - sum(mass(measure, child) for child in cube.children())))
    expect(worst <= 1e-14, f"children masses differ from parent by {worst!r}")
    return f"max defect {worst:g}"


@register.check(module="geometry")
def sawtooth_arclength(seed: int) -> str:
    total = _sawtooth(2.0**-6).total_mass()
    finer = _sawtooth(2.0**-7).total_mass()
    expect(abs(total - math.sqrt(2.0)) <= 1e-6 * math.sqrt(2.0), f"total mass {total!r} is not sqrt(2)")
    expect(abs(total - finer) <= 1e-6 * total, f"mass moves from {total!r} to {finer!r} under refinement")
    return f"mass {total!r}"


@register.check(module="geometry")
def translated_cells_tile(seed: int) -> str:
    base_points = rng(seed).uniform(-2.0, 2.0, size=(20, 2))
    shifts = np.array(list(np.ndindex(3, 3)), dtype=float) - 1.0
    for m in (0, 2, 3):
        a = rng(seed + m).uniform(0.0, 1.0, size=2)
        for point in base_points:
            cell = translated_cell(point, a, m)
            neighbours = [VCube(center=cell.center + cell.side * s, side=cell.side) for s in shifts]
            hits = sum(int(other.contains(point)[0]) for other in neighbours)
            expect(cell.contains(point)[0] and hits == 1, f"point {point} is not in exactly one cell of D_{m}^a")
    return "every point in exactly one cell"


# kernels
@register.check(module="kernels")
def kernels_are_odd(seed: int) -> str:
    for kernel in (cauchy_component(1), cauchy_component(2), riesz_component(1, 1, 2), riesz_component(3, 2, 3)):
        report = verify_cz_bounds(kernel, samples=500, seed=seed)
        expect(not report.odd_violation, f"{kernel.name} oddness defect {report.oddness_defect!r}")
        expect(not report.violation, f"{kernel.name} exceeds its bound constant: {report}")
    report = verify_cz_bounds(even_power_kernel(1, 2), samples=50, seed=seed)
    expect(report.odd_violation, "the even kernel was not flagged")
    return "Cauchy and Riesz odd within bounds"


@register.check(module="kernels")
def truncation_profile_shape(seed: int) -> str:
    profile = truncation_profile(1)
    expect(profile.value(np.array([2.0]))[0] == 0.0, "profile does not vanish below 2.1")
    expect(profile.value(np.array([3.5]))[0] == 1.0, "profile is not 1 above 3")
    expect(abs(profile.value(np.array([2.55]))[0] - 0.5) <= 1e-12, "profile midpoint is not 1/2")
    r = np.linspace(0.0, 4.0, 4001)
    expect(np.all(np.diff(profile.value(r)) >= 0), "profile decreases")
    step = 1e-4
    for edge in (profile.lo, profile.hi):
        left, middle, right = profile.value(np.array([edge - step, edge, edge + step]))
        second = (right - 2 * middle + left) / step**2
        expect(abs(second) <= 1e-2, f"second derivative jumps at {edge}")
    x = rng(seed).uniform(-3.0, 3.0, size=(100, 2))
    telescoped = sum(phi_window(2.0 ** -(j + 1), 2.0**-j, x) for j in range(0, 4))
    expect(np.allclose(telescoped, phi(2.0**-4, x) - phi(1.0, x), atol=1e-12), "windows do not telescope")
    return "C2 profile in the sandwich"


# transforms
@register.check(module="transforms")
def closed_form_transform(seed: int) -> str:
    measure = _flat(2.0**-10)
    f = np.ones(measure.size)
    kernel = cauchy_component(1)
    worst = 0.0
    for target in (1.5, 2.0, 4.0):
        exact = math.log(target / (target - 1.0))
        x = np.array([target, 0.0])
        eps = (target - 1.0) / 4.0
        for value in (truncated_sharp(kernel, measure, f, x, eps), truncated_smooth(kernel, measure, f, x, eps)):
            worst = max(worst, abs(value - exact))
    expect(worst <= 2e-3, f"transform misses log(x/(x-1)) by {worst!r}")
    return f"max error {worst:g}"


@register.check(module="transforms")
def symmetric_configuration_vanishes(seed: int) -> str:
    measure = _flat(2.0**-7)
    f = np.ones(measure.size)
    x = np.array([0.5, 0.0])
    kernel = cauchy_component(1)
    for eps in (0.05, 0.1, 0.3):
        for value in (truncated_sharp(kernel, measure, f, x, eps), truncated_smooth(kernel, measure, f, x, eps)):
            expect(abs(value) <= 1e-12, f"symmetric configuration gives {value!r} at eps={eps}")
    return "exact cancellation"


@register.check(module="transforms")
def linearity_in_f(seed: int) -> str:
    measure = _sawtooth(2.0**-6)
    generator = rng(seed)
    f, g = generator.uniform(-1, 1, measure.size), generator.uniform(-1, 1, measure.size)
    grid = EpsGrid.log_uniform(0.5, 2, 4)
    kernel = cauchy_component(1)
    x = measure.points[10]
    combined = sample_family(kernel, measure, 2.0 * f - 3.0 * g, x, grid).values
    f_values = sample_family(kernel, measure, f, x, grid).values
    g_values = sample_family(kernel, measure, g, x, grid).values
    separate = 2.0 * f_values - 3.0 * g_values
    defect = float(np.max(np.abs(combined - separate)))
    expect(defect <= 1e-10, f"families are not linear in f, defect {defect!r}")
    return f"defect {defect:g}"


# variation
@register.check(module="variation")
def variation_matches_bruteforce(seed: int) -> str:
    families = _random_families(seed, 200, 8)
    for family in families:
        for rho in (1.0, 2.0, 2.5, 3.0):
            fast, slow = rho_variation(family, rho).value, rho_variation_bruteforce(family, rho)
            expect(
                abs(fast - slow) <= 1e-12 * max(1.0, slow),
                f"rho={rho}: dynamic program {fast!r} vs enumeration {slow!r}",
            )
        for lam in (0.3, 1.0):
            jumps = lambda_jumps(family, lam)
            expect(jumps == lambda_jumps_bruteforce(family, lam), f"jump counts differ at lambda={lam}")
        expect(upcrossings(family, -0.2, 0.4) == upcrossings_bruteforce(family, -0.2, 0.4), "upcrossing counts differ")
        windows = WindowSpec.dyadic(0, 2)
        gap = abs(oscillation(family, windows) - oscillation_bruteforce(family, windows))
        expect(gap <= 1e-12, "oscillations differ")
    return f"{len(families)} families agree"


@register.check(module="variation", suite=SuiteChoices.FULL)
def variation_matches_bruteforce_full(seed: int) -> str:
    families = _random_families(seed + 1, 1000, 10)
    for family in families:
        for rho in (1.0, 2.0, 2.5, 3.0):
            fast, slow = rho_variation(family, rho).value, rho_variation_bruteforce(family, rho)
            expect(
                abs(fast - slow) <= 1e-12 * max(1.0, slow),
                f"rho={rho}: dynamic program {fast!r} vs enumeration {slow!r}",
            )
        expect(lambda_jumps(family, 0.5) == lambda_jumps_bruteforce(family, 0.5), "jump counts differ")
        expect(upcrossings(family, 0.0, 0.5) == upcrossings_bruteforce(family, 0.0, 0.5), "upcrossing counts differ")
    return f"{len(families)} families agree"


def _pointwise_suite(families: Sequence[SampledFamily], windows: Sequence[WindowSpec], lambdas: Sequence[float]) -> int:
    checked = 0
    for family in families:
        v2, v25, v3 = (rho_variation(family, rho).value for rho in (2.0, 2.5, 3.0))
        expect(v3 <= v25 + INEQUALITY_SLACK and v25 <= v2 + INEQUALITY_SLACK, "variation is not antitone in rho")
        expect(short_variation(family) <= v2 + INEQUALITY_SLACK, "short variation exceeds V_2")
        for window_spec in windows:
            expect(oscillation(family, window_spec) <= v2 + INEQUALITY_SLACK, "oscillation exceeds V_2")
        for lam in lambdas:
            bound = lam * lambda_jumps(family, lam) ** (1 / 3.0)
            expect(bound <= v3 + INEQUALITY_SLACK, f"lambda N^(1/3) exceeds V_3 at {lam}")
        checked += 1
    return checked


@register.check(module="variation")
def pointwise_inequalities(seed: int) -> str:
    grid = EpsGrid.log_uniform(1.0, 3, 8)
    windows = [WindowSpec.geometric(1.0, 2.0, grid.values[-1]), WindowSpec.geometric(0.75, 3.0, grid.values[-1])]
    kernel = cauchy_component(1)
    checked = 0
    corner = sample_measure(build_graph("corner", slope=2.0), VCube(center=[0.5], side=1.0), 2.0**-6)
    for measure in (_flat(2.0**-6), _sawtooth(2.0**-6), corner):
        f = rng(seed).uniform(-1, 1, measure.size)
        families = [sample_family(kernel, measure, f, measure.points[k], grid) for k in range(0, measure.size, 8)]
        checked += _pointwise_suite(families, windows, (0.05, 0.2, 1.0))
    return f"{checked} families, zero violations"


# coefficients
@register.check(module="coefficients")
def transport_closed_forms(seed: int) -> str:
    x, y = np.array([[0.0, 0.0]]), np.array([[0.3, 0.4]])
    ball = Ball(center=[0.0, 0.0], radius=5.0)
    value = bl_distance(DiscreteMeasure.from_points(x, [1.0], n=1), DiscreteMeasure.from_points(y, [1.0], n=1), ball)
    expect(abs(value - 0.5) <= 1e-6, f"dist(delta_x, delta_y) = {value!r}, expected 0.5")
    value = bl_distance(DiscreteMeasure.from_points(x, [1.0], n=1), DiscreteMeasure.from_points(x, [2.0], n=1), ball)
    expect(abs(value - 5.0) <= 1e-6, f"mass excess costs {value!r}, expected the radius 5")
    return "closed forms reproduced"


@register.check(module="coefficients")
def transport_is_metric(seed: int) -> str:
    generator = rng(seed)
    ball = Ball(center=[0.0, 0.0], radius=1.5)
    cases = 20
    for _ in range(cases):
        measures = [
            DiscreteMeasure.from_points(generator.uniform(-1, 1, (k, 2)), generator.uniform(0.1, 1.0, k), n=1)
            for k in generator.integers(1, 11, size=3)
        ]
        ab, ba = bl_distance(measures[0], measures[1], ball), bl_distance(measures[1], measures[0], ball)
        bc, ac = bl_distance(measures[1], measures[2], ball), bl_distance(measures[0], measures[2], ball)
        expect(abs(ab - ba) <= 1e-9, f"asymmetric distance {ab!r} vs {ba!r}")
        expect(ac <= ab + bc + 1e-9, f"triangle inequality fails: {ac!r} > {ab!r} + {bc!r}")
    return f"{cases} triples"


@register.check(module="coefficients")
def beta2_matches_line_search(seed: int) -> str:
    generator = rng(seed)
    for _ in range(5):
        points = generator.uniform(0.0, 1.0, (30, 2))
        weights = generator.uniform(0.5, 1.5, 30)
        measure = DiscreteMeasure.from_points(points, weights, n=1)
        cube = VCube(center=[0.5], side=1.0)
        fast = beta(measure, cube, 2.0).beta
        slow = beta2_line_search(points, weights, 1.0)
        expect(abs(fast - slow) <= 1e-6, f"beta_2 closed form {fast!r} vs line search {slow!r}")
    corners = DiscreteMeasure.from_points(np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float), np.ones(4), n=1)
    value = beta(corners, VCube(center=[0.5], side=1.0), 2.0).beta
    expect(abs(value - 1.0) <= 1e-9, f"four corners give beta_2 = {value!r}")
    return "closed form is optimal"


@register.check(module="coefficients")
def flat_coefficients_vanish(seed: int) -> str:
    h = 2.0**-6
    measure = _flat(h)
    worst = 0.0
    for cube in dyadic_cubes(measure.base, 1, 2):
        tolerance = 10 * h / cube.side
        b, a = beta(measure, cube, 2.0).beta, alpha(measure, cube, alpha_points=12).alpha
        expect(b <= tolerance and a <= tolerance, f"flat cube {cube} has beta_2={b!r}, alpha={a!r}")
        worst = max(worst, a, b)
    return f"largest coefficient {worst:g}"


@register.check(module="coefficients", suite=SuiteChoices.FULL)
def corner_packing_decays(seed: int) -> str:
    graph = build_graph(GraphFamilyChoices.CORNER, slope=1.0, at=1.0 / 3.0)
    measure = sample_measure(graph, VCube.from_corner([-1.0], 3.0), 2.0**-8)
    profile = packing_sum(measure, VCube.from_corner([0.0], 1.0), 5, window_const=1.0, alpha_points=8).profile
    expect(profile[2] > 0, f"corner packing profile {profile!r} vanishes")
    for generation in range(3, len(profile)):
        ratio = profile[generation] / profile[generation - 1]
        expect(ratio <= 0.7, f"generation {generation} keeps {ratio:.3g} of the previous subtotal")

    per_mass = []
    for shift in np.linspace(-0.35, 0.35, 8):
        root = VCube(center=[1.0 / 3.0 + shift], side=1.0)
        total = packing_sum(measure, root, 3, window_const=1.0, alpha_points=8).total
        per_mass.append(total / mass(measure, root))
    spread = max(per_mass) / min(per_mass)
    expect(spread <= 10.0, f"packing per unit mass varies by {spread:.3g} across roots")
    return "profile " + ", ".join(f"{v:.3g}" for v in profile) + f"; root spread {spread:.3g}"


# martingale
@register.check(module="martingale")
def tower_property(seed: int) -> str:
    worst = 0.0
    kernel = cauchy_component(1)
    for family, params in (("flat", {}), ("sawtooth", {"slope": 1.0, "period": 0.25}), ("corner", {"slope": 1.0})):
        measure = _compact(family, 2.0**-6, **params)
        for cell in dyadic_cubes(VCube.from_corner([-2.0], 4.0), 2, 4):
            parent = mass(measure, cell) * conditional_avg(measure, kernel, cell)
            children = exact_sum([mass(measure, c) * conditional_avg(measure, kernel, c) for c in cell.children()])
            worst = max(worst, abs(parent - children))
    expect(worst <= 1e-12, f"tower property fails by {worst!r}")
    return f"max defect {worst:g}"


@register.check(module="martingale")
def lambda_form_matches_average(seed: int) -> str:
    measure = _compact("sawtooth", 2.0**-6, slope=1.0, period=0.25)
    config = MartingaleConfig(grid_points=2, m_min=1, m_max=3)
    kernel = cauchy_component(1)
    worst = 0.0
    for index in np.flatnonzero(VCube(center=[0.5], side=1.0).contains(measure.base_points))[::16]:
        x = measure.points[index]
        for m in config.generations:
            direct = averaged_term(measure, kernel, m, x, config)
            worst = max(worst, abs(direct - lambda_form_term(measure, kernel, m, x, config)))
    expect(worst <= 1e-9, f"Lambda form differs from E_m by {worst!r}")
    return f"max difference {worst:g}"


@register.check(module="martingale")
def flat_martingale_vanishes(seed: int) -> str:
    h = 2.0**-6
    measure = _compact("flat", h)
    config = MartingaleConfig(grid_points=2, m_min=1, m_max=3)
    kernel = cauchy_component(1)
    grid = EpsGrid.log_uniform(0.5, 2, 4)
    worst = 0.0
    for index in np.flatnonzero(VCube(center=[0.5], side=1.0).contains(measure.base_points))[::8]:
        x = measure.points[index]
        worst = max(worst, abs(martingale_term(measure, kernel, [0.0], 2, x)))
        worst = max(worst, w_diagnostic(measure, kernel, x, config).value, s_diagnostic(measure, kernel, x, grid))
    expect(worst <= 10 * h, f"flat martingale diagnostics reach {worst!r}")
    return f"largest value {worst:g}"


# harness
@register.check(module="harness")
def atoms_are_balanced(seed: int) -> str:
    measure = _sawtooth(2.0**-6)
    cube = VCube(center=[0.375], side=0.25)
    f = harness.test_functions(measure, TestFunctionChoices.H1_ATOM, cube)
    total = mass(measure, cube)
    expect(abs(exact_sum(measure.weights * f)) <= 1e-15, "atom does not have zero mean")
    expect(np.max(np.abs(f)) * total <= 1 + 1e-12, "atom exceeds 1 / mu(D)")
    expect(np.all(f[~cube.contains(measure.base_points)] == 0), "atom leaks outside its cube")
    return "zero mean, normalized, supported"


@register.check(module="harness", suite=SuiteChoices.FULL)
def square_functions_track_packing(seed: int) -> str:
    worst = 1.0
    families = ((GraphFamilyChoices.SAWTOOTH, {"slope": 1.0, "period": 0.25}), (GraphFamilyChoices.CORNER, {}))
    for family, params in families:
        config = ExperimentConfig(
            experiment="martingale",
            family=family,
            family_params=params,
            support_box=VCube(center=[0.5], side=1.0),
            eps_max=1.0,
            octaves=2,
            per_octave=4,
            resolutions=(2.0**-5, 2.0**-6),
            max_depth=2,
            alpha_points=4,
            martingale=MartingaleConfig(grid_points=2, m_min=1, m_max=3, tail_radius=1.0),
        )
        records = [harness.square_function_ratios(config, h) for h in config.resolutions]
        for name in ("w_ratio", "s_ratio"):
            ratios = [getattr(r, name) for r in records]
            expect(all(math.isfinite(v) and v > 0 for v in ratios), f"{family} {name} is not finite: {ratios!r}")
            factor = harness.stability(ratios)
            expect(factor <= STABILITY_FACTOR, f"{family} {name} changes by {factor:.3g} when h halves")
            worst = max(worst, factor)
    return f"largest change {worst:.3g}"
