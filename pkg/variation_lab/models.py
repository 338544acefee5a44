"""Domain types of the laboratory.

All types are frozen dataclasses holding numpy arrays, except `RunManifest`,
which tracks the mutable progress of a single command-line run. Types are grouped
the way the operations use them: geometry, kernels, transforms, variation,
coefficients, martingale and harness.
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from variation_lab.choices import (
    ExperimentChoices,
    FunctionalChoices,
    GraphFamilyChoices,
    KernelChoices,
    PackingTermChoices,
    RunStatusChoices,
    TestFunctionChoices,
    TruncationModeChoices,
)
from variation_lab.constants import (
    DEFAULT_ALPHA_POINTS,
    EPS_GUARD_FACTOR,
    PROFILE_HI_FACTOR,
    PROFILE_LO_FACTOR,
    RHO_FLOOR,
)
from variation_lab.exceptions import GeometryError, GridError
from variation_lab.utility import utc_now_iso
from variation_lab.validators import validation_error

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]


# geometry
@dataclass(frozen=True, eq=False)
class VCube:
    """Vertical cube Q = Q~ x R^(d-n), stored through its base cube Q~.

    Membership is half-open, [corner, corner + side) on every axis, so the
    children of a cube and the cells of a lattice tile without overlap.

    Attributes:
        center (np.ndarray): Center z~_Q of the base cube, shape (n,).
        side (float): Side length l(Q).
    """

    center: np.ndarray
    side: float

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if center.ndim != 1 or not np.all(np.isfinite(center)):
            raise GeometryError(f"cube center must be a finite vector, got {self.center!r}")
        if not (self.side > 0 and math.isfinite(self.side)):
            raise GeometryError(f"cube side must be positive, got {self.side!r}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "side", float(self.side))

    @classmethod
    def from_corner(cls, corner: Sequence[float], side: float) -> "VCube":
        corner = np.atleast_1d(np.asarray(corner, dtype=float))
        return cls(center=corner + side / 2.0, side=side)

    @property
    def n(self) -> int:
        return self.center.shape[0]

    @property
    def corner(self) -> np.ndarray:
        return self.center - self.side / 2.0

    def dilate(self, factor: float) -> "VCube":
        """Return lambda Q: same center, side multiplied by ``factor``."""
        return VCube(center=self.center, side=self.side * factor)

    def window(self, c_gamma: float) -> "VCube":
        """Return the window C_Gamma Q used by the beta coefficients."""
        return self.dilate(c_gamma)

    def ball_radius(self, c_gamma: float) -> float:
        """Radius of B_Q = B(z~_Q, C_Gamma l(Q)) x R^(d-n)."""
        return c_gamma * self.side

    def contains(self, base_points: np.ndarray) -> np.ndarray:
        """Half-open membership mask of base points, shape (k,) from (k, n)."""
        base_points = np.atleast_2d(base_points)
        lower = self.corner
        upper = lower + self.side
        return np.all((base_points >= lower) & (base_points < upper), axis=1)

    def in_ball(self, base_points: np.ndarray, c_gamma: float) -> np.ndarray:
        """Closed membership in B_Q (distance measured on base coordinates)."""
        base_points = np.atleast_2d(base_points)
        distance = np.linalg.norm(base_points - self.center, axis=1)
        return distance <= self.ball_radius(c_gamma)

    def children(self) -> List["VCube"]:
        """The 2^n dyadic children, in lexicographic order of their centers."""
        quarter = self.side / 4.0
        return [
            VCube(center=self.center + quarter * (2 * np.asarray(bits) - 1), side=self.side / 2.0)
            for bits in itertools.product((0, 1), repeat=self.n)
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {"center": self.center.tolist(), "side": self.side}


@dataclass(frozen=True, eq=False)
class LipschitzGraph:
    """Graph of a Lipschitz map A: R^n -> R^(d-n).

    Attributes:
        n (int): Domain dimension.
        d (int): Ambient dimension, d > n.
        A (Evaluator): Maps base points of shape (k, n) to values of shape (k, d - n).
        lip (float): Declared Lipschitz constant, exact for built-in families.
        support_box (VCube | None): Cube outside which A is constant.
        family (str): Family name, for reporting.
        params (dict): Family parameters, for reporting.
    """

    n: int
    d: int
    A: Evaluator = field(repr=False)
    lip: float
    support_box: Optional[VCube] = None
    family: str = GraphFamilyChoices.FROM_SAMPLES
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1 or self.d <= self.n:
            raise GeometryError(f"need 1 <= n < d, got n={self.n}, d={self.d}")
        if not (self.lip >= 0 and math.isfinite(self.lip)):
            raise GeometryError(f"Lipschitz constant must be non-negative, got {self.lip!r}")

    def evaluate(self, base_points: np.ndarray) -> np.ndarray:
        base_points = np.atleast_2d(np.asarray(base_points, dtype=float))
        values = np.asarray(self.A(base_points), dtype=float).reshape(len(base_points), self.d - self.n)
        if not np.all(np.isfinite(values)):
            raise GeometryError(f"graph {self.family!r} produced non-finite values")
        return values

    def lift(self, base_points: np.ndarray) -> np.ndarray:
        """Return the graph points (x~, A(x~)), shape (k, d)."""
        base_points = np.atleast_2d(np.asarray(base_points, dtype=float))
        return np.hstack([base_points, self.evaluate(base_points)])


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point cloud approximating f H^n restricted to a graph.

    Attributes:
        points (np.ndarray): Support points, shape (N, d).
        weights (np.ndarray): Positive masses, shape (N,).
        density (np.ndarray): Values of f used to build the weights, shape (N,).
        n (int): Dimension of the underlying graph.
        h (float): Sampling step (0 when unknown).
        base (VCube | None): Base cube the measure was sampled on.
        lip (float): Lipschitz constant of the graph it lies on.
        flat_tail (bool): True when the sampled graph is flat near the edges of
            ``base``, so far-field integrals may be truncated symmetrically.
    """

    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    n: int
    h: float = 0.0
    base: Optional[VCube] = None
    lip: float = 0.0
    flat_tail: bool = False

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        weights = np.asarray(self.weights, dtype=float).ravel()
        density = np.asarray(self.density, dtype=float).ravel()
        if points.ndim != 2:
            raise GeometryError(f"points must have shape (N, d), got {points.shape}")
        if not (len(points) == len(weights) == len(density)):
            raise GeometryError(
                f"points, weights and density lengths differ: {len(points)}, {len(weights)}, {len(density)}"
            )
        if len(weights) and not np.all(weights > 0):
            raise GeometryError("measure weights must be strictly positive")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "density", density)

    @classmethod
    def from_points(cls, points: np.ndarray, weights: np.ndarray, n: int, **kwargs) -> "DiscreteMeasure":
        """Build a measure from raw points, with density 1."""
        weights = np.asarray(weights, dtype=float)
        return cls(points=points, weights=weights, density=np.ones_like(weights), n=n, **kwargs)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.size == 0

    @property
    def base_points(self) -> np.ndarray:
        return self.points[:, : self.n]

    def total_mass(self) -> float:
        return math.fsum(self.weights.tolist())

    def subset(self, mask: np.ndarray) -> "DiscreteMeasure":
        """Keep the points selected by ``mask``; weights unchanged."""
        return DiscreteMeasure(
            points=self.points[mask],
            weights=self.weights[mask],
            density=self.density[mask],
            n=self.n,
            h=self.h,
            base=self.base,
            lip=self.lip,
            flat_tail=self.flat_tail,
        )


@dataclass(frozen=True, eq=False)
class DyadicLattice:
    """Dyadic lattice generated by a root cube, optionally translated.

    Generation m cells have side ``root.side * 2**-m`` and corners
    ``origin + side_m * k`` for integer vectors k, where ``origin`` is the root
    corner shifted by ``translation``. With root [0, 1)^n and translation a this
    is the lattice D_m^a.
    """

    root: VCube
    m_min: int = 0
    m_max: int = 0
    translation: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.m_min > self.m_max:
            raise GeometryError(f"m_min must not exceed m_max, got {self.m_min} > {self.m_max}")
        translation = np.zeros(self.root.n) if self.translation is None else self.translation
        object.__setattr__(self, "translation", np.atleast_1d(np.asarray(translation, dtype=float)))

    @property
    def origin(self) -> np.ndarray:
        return self.root.corner + self.translation

    def cell_side(self, m: int) -> float:
        return self.root.side * 2.0**-m

    def cell_indices(self, base_points: np.ndarray, m: int) -> np.ndarray:
        """Integer index vectors of the generation-m cells containing each base point."""
        side = self.cell_side(m)
        return np.floor((np.atleast_2d(base_points) - self.origin) / side).astype(np.int64)

    def cell(self, index: Sequence[int], m: int) -> VCube:
        side = self.cell_side(m)
        return VCube.from_corner(self.origin + side * np.asarray(index, dtype=float), side)

    def cell_containing(self, base_point: Sequence[float], m: int) -> VCube:
        return self.cell(self.cell_indices(np.asarray(base_point, dtype=float), m)[0], m)


# kernels
@dataclass(frozen=True, eq=False)
class CZKernel:
    """Scalar odd Calderon-Zygmund kernel.

    Attributes:
        n (int): Homogeneity dimension.
        d (int): Ambient dimension.
        func (Evaluator): Vectorized evaluation, (k, d) -> (k,), away from 0.
        bound_C (float): Constant claimed for the size and smoothness bounds.
        name (str): Identifier used in reports.
    """

    n: int
    d: int
    func: Evaluator = field(repr=False)
    bound_C: float = 1.0
    name: str = "kernel"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.func(x), dtype=float).reshape(len(x))


@dataclass(frozen=True)
class TruncationProfile:
    """C^2 profile phi_R with phi_R = 0 on [0, lo] and 1 on [hi, inf).

    The transition is the quintic smoothstep s(t) = 6t^5 - 15t^4 + 10t^3
    rescaled to [lo, hi], with lo = 2.1 sqrt(n) and hi = 3 sqrt(n).
    """

    n: int = 1

    @property
    def lo(self) -> float:
        return PROFILE_LO_FACTOR * math.sqrt(self.n)

    @property
    def hi(self) -> float:
        return PROFILE_HI_FACTOR * math.sqrt(self.n)

    def _t(self, r: np.ndarray) -> np.ndarray:
        return np.clip((np.asarray(r, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def value(self, r: np.ndarray) -> np.ndarray:
        t = self._t(r)
        return t * t * t * (t * (6.0 * t - 15.0) + 10.0)

    def derivative(self, r: np.ndarray) -> np.ndarray:
        t = self._t(r)
        return 30.0 * t * t * (t - 1.0) ** 2 / (self.hi - self.lo)

    def second_derivative(self, r: np.ndarray) -> np.ndarray:
        t = self._t(r)
        return 60.0 * t * (t - 1.0) * (2.0 * t - 1.0) / (self.hi - self.lo) ** 2


# transforms
@dataclass(frozen=True, eq=False)
class EpsGrid:
    """Strictly decreasing list of truncation parameters.

    Attributes:
        values (np.ndarray): Decreasing positive epsilons.
        per_octave (int): Points per octave of the generator (0 if custom).
    """

    values: np.ndarray
    per_octave: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if len(values) == 0 or not np.all(values > 0) or not np.all(np.isfinite(values)):
            raise GridError("grid values must be finite and positive")
        if np.any(np.diff(values) >= 0):
            raise GridError("grid values must be strictly decreasing")
        object.__setattr__(self, "values", values)

    @classmethod
    def log_uniform(cls, eps_max: float, octaves: int, per_octave: int) -> "EpsGrid":
        """eps_k = eps_max 2^(-k / K) for k = 0 .. octaves * K."""
        k = np.arange(octaves * per_octave + 1, dtype=float)
        return cls(values=eps_max * 2.0 ** (-k / per_octave), per_octave=per_octave)

    @classmethod
    def dyadic(cls, m_min: int, m_max: int) -> "EpsGrid":
        """Grid 2^-m for m = m_min .. m_max, used to index martingales by scale."""
        return cls(values=2.0 ** -np.arange(m_min, m_max + 1, dtype=float), per_octave=1)

    def __len__(self) -> int:
        return len(self.values)

    def validate_for(self, h: float) -> "EpsGrid":
        """Reject grids finer than EPS_GUARD_FACTOR * h."""
        if h > 0 and self.values[-1] < EPS_GUARD_FACTOR * h * (1 - 1e-12):
            raise GridError(
                f"smallest epsilon {self.values[-1]!r} is below {EPS_GUARD_FACTOR:g} h = {EPS_GUARD_FACTOR * h!r}"
            )
        return self


@dataclass(frozen=True, eq=False)
class SampledFamily:
    """The map eps -> T_{phi_eps} f(x) sampled on a grid.

    Attributes:
        grid (EpsGrid): Truncation parameters, decreasing.
        values (np.ndarray): One value per grid point.
        anchor (np.ndarray | None): Evaluation point x.
        provenance (str): Operator that produced the family.
    """

    grid: EpsGrid
    values: np.ndarray
    anchor: Optional[np.ndarray] = None
    provenance: str = TruncationModeChoices.SMOOTH

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if len(values) != len(self.grid):
            raise GridError(f"family has {len(values)} values for {len(self.grid)} grid points")
        if not np.all(np.isfinite(values)):
            raise GridError("family values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values: Sequence[float], eps: Optional[Sequence[float]] = None, **kwargs) -> "SampledFamily":
        """Wrap raw values; without ``eps`` the grid is 2^(-k/8)."""
        values = np.asarray(values, dtype=float)
        if eps is None:
            eps = 2.0 ** (-np.arange(len(values)) / 8.0)
        return cls(grid=EpsGrid(values=np.asarray(eps, dtype=float)), values=values, **kwargs)

    def scaled(self, factor: float) -> "SampledFamily":
        return SampledFamily(self.grid, self.values * factor, self.anchor, self.provenance)

    def restrict(self, mask: np.ndarray) -> "SampledFamily":
        return SampledFamily(EpsGrid(self.grid.values[mask]), self.values[mask], self.anchor, self.provenance)


@dataclass(frozen=True)
class PrincipalValue:
    value: float
    cauchy_defect: float


@dataclass(frozen=True)
class CZBoundsReport:
    """Sampled suprema of the three normalized kernel bounds.

    Attributes:
        size_ratio (float): max |K(x)| |x|^n.
        gradient_ratio (float): max |d_i K(x)| |x|^(n+1).
        hessian_ratio (float): max |d_i d_j K(x)| |x|^(n+2).
        oddness_defect (float): max |K(x) + K(-x)| |x|^n.
        violation (bool): A ratio exceeds bound_C (1 + 1e-3).
        odd_violation (bool): The oddness defect exceeds tolerance.
    """

    size_ratio: float
    gradient_ratio: float
    hessian_ratio: float
    oddness_defect: float
    violation: bool
    odd_violation: bool


# variation
@dataclass(frozen=True)
class VariationResult:
    value: float
    subsequence: Tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class WindowSpec:
    """Fixed decreasing boundaries r_0 > r_1 > ...; window m is [r_(m+1), r_m]."""

    boundaries: np.ndarray

    def __post_init__(self):
        boundaries = np.asarray(self.boundaries, dtype=float).ravel()
        if len(boundaries) < 2 or np.any(np.diff(boundaries) >= 0) or np.any(boundaries <= 0):
            raise GridError("window boundaries must be at least two strictly decreasing positive numbers")
        object.__setattr__(self, "boundaries", boundaries)

    @classmethod
    def geometric(cls, start: float, ratio: float, stop: float) -> "WindowSpec":
        """Boundaries start, start/ratio, ... down to the first value below ``stop``."""
        if ratio <= 1:
            raise GridError(f"window ratio must exceed 1, got {ratio!r}")
        count = max(2, int(math.ceil(math.log(start / stop) / math.log(ratio))) + 2)
        return cls(boundaries=start * ratio ** -np.arange(count, dtype=float))

    @classmethod
    def dyadic(cls, j_min: int, j_max: int) -> "WindowSpec":
        """r_m = 2^-m, so windows are the octaves I_j = [2^(-j-1), 2^-j]."""
        return cls(boundaries=2.0 ** -np.arange(j_min, j_max + 2, dtype=float))

    def windows(self) -> List[Tuple[float, float]]:
        return list(zip(self.boundaries[1:], self.boundaries[:-1]))


# coefficients
@dataclass(frozen=True, eq=False)
class Plane:
    """Affine n-plane through ``base`` spanned by the orthonormal rows of ``frame``."""

    base: np.ndarray
    frame: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float).ravel()
        frame = np.atleast_2d(np.asarray(self.frame, dtype=float))
        q, _ = np.linalg.qr(frame.T)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "frame", q.T[: frame.shape[0]])

    @classmethod
    def horizontal(cls, n: int, d: int, height: Optional[Sequence[float]] = None) -> "Plane":
        """R^n x {height}."""
        base = np.zeros(d)
        if height is not None:
            base[n:] = height
        return cls(base=base, frame=np.eye(d)[:n])

    @property
    def n(self) -> int:
        return self.frame.shape[0]

    def distance(self, points: np.ndarray) -> np.ndarray:
        """|(I - P)(x - base)| for each row of ``points``."""
        rel = np.atleast_2d(points) - self.base
        along = rel @ self.frame.T
        return np.linalg.norm(rel - along @ self.frame, axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {"base": self.base.tolist(), "frame": self.frame.tolist()}


@dataclass(frozen=True, eq=False)
class Ball:
    """Closed Euclidean ball B(center, radius) in R^d."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        if not self.radius > 0:
            raise GeometryError(f"ball radius must be positive, got {self.radius!r}")

    def depth(self, points: np.ndarray) -> np.ndarray:
        """dist(x, complement), zero outside the ball."""
        distance = np.linalg.norm(np.atleast_2d(points) - self.center, axis=1)
        return np.maximum(self.radius - distance, 0.0)


@dataclass(frozen=True, eq=False)
class VBall:
    """Vertical ball B(center~, radius) x R^(d-n); depth is measured on base coordinates."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        if not self.radius > 0:
            raise GeometryError(f"ball radius must be positive, got {self.radius!r}")

    @property
    def n(self) -> int:
        return self.center.shape[0]

    def depth(self, points: np.ndarray) -> np.ndarray:
        base = np.atleast_2d(points)[:, : self.n]
        distance = np.linalg.norm(base - self.center, axis=1)
        return np.maximum(self.radius - distance, 0.0)


@dataclass(frozen=True)
class BetaResult:
    beta: float
    plane: Plane
    p: float
    degenerate: bool = False


@dataclass(frozen=True)
class AlphaResult:
    """Outcome of the alpha minimization for one cube.

    Attributes:
        alpha (float): transport / l(Q)^(n+1) at the best plane found.
        plane (Plane | None): Minimizing plane, None for cubes missing the support.
        c (float): Density of the comparison measure c H^n_L.
        transport (float): Achieved dist_{B_Q} value.
        tol (float): Discretization tolerance (step / l(Q)).
        alpha_upper (float): Value reached from the worse seed.
        seeds_agree (bool): Seeds agree to within 1e-3.
    """

    alpha: float
    plane: Optional[Plane]
    c: float
    transport: float
    tol: float = 0.0
    alpha_upper: float = 0.0
    seeds_agree: bool = True


@dataclass(frozen=True)
class PackingResult:
    total: float
    profile: Tuple[float, ...]
    rows: Tuple[Dict[str, Any], ...] = ()


@dataclass(frozen=True)
class RatioDistribution:
    max_ratio: float
    ratios: Tuple[float, ...]
    skipped: int


# martingale
@dataclass(frozen=True)
class MartingaleConfig:
    """Parameters of the translated dyadic martingales.

    Attributes:
        grid_points (int): G, offsets per axis in the translation average.
        m_min (int): Coarsest generation.
        m_max (int): Finest generation.
        tail_radius (float): Half-width of the sampled base around the support box.
        symmetric_tail (bool): Truncate far-field sums symmetrically about each point.
    """

    grid_points: int = 4
    m_min: int = 1
    m_max: int = 4
    tail_radius: float = 2.0
    symmetric_tail: bool = True

    def __post_init__(self):
        if self.grid_points < 1:
            raise validation_error("must be at least 1", "martingale.grid_points")
        if self.m_min > self.m_max:
            raise validation_error("m_min must not exceed m_max", "martingale.m_min")
        if self.tail_radius <= 0:
            raise validation_error("must be positive", "martingale.tail_radius")

    @property
    def generations(self) -> List[int]:
        return list(range(self.m_min, self.m_max + 1))

    def validate_for(self, h: float) -> "MartingaleConfig":
        if 2.0**-self.m_max < EPS_GUARD_FACTOR * h * (1 - 1e-12):
            raise validation_error(
                f"cells of side 2^-{self.m_max} hold fewer than {EPS_GUARD_FACTOR:g} samples at h={h!r}",
                "martingale.m_max",
            )
        return self


@dataclass(frozen=True, eq=False)
class MartingaleSample:
    """E_m^a and E_m at selected support points.

    Attributes:
        point_indices (np.ndarray): Indices into the measure, shape (P,).
        generations (np.ndarray): Generations m, shape (M,).
        offsets (np.ndarray): Translation offsets in units of 2^-m, shape (A, n).
        terms (np.ndarray): E_m^a values, shape (M, A, P); NaN for skipped offsets.
        averaged (np.ndarray): E_m values, shape (M, P).
    """

    point_indices: np.ndarray
    generations: np.ndarray
    offsets: np.ndarray
    terms: np.ndarray
    averaged: np.ndarray

    def family(self, column: int, offset: Optional[int] = None) -> SampledFamily:
        """Martingale at one point as a family indexed by eps = 2^-m."""
        values = self.averaged[:, column] if offset is None else self.terms[:, offset, column]
        grid = EpsGrid(values=2.0 ** -self.generations.astype(float))
        return SampledFamily(grid=grid, values=values, provenance="martingale")


@dataclass(frozen=True)
class WDiagnostic:
    value: float
    profile: Tuple[float, ...]


@dataclass(frozen=True)
class LepingleRecord:
    variation_ratio: float
    oscillation_ratio: float
    per_offset_variation: Tuple[float, ...]
    per_offset_oscillation: Tuple[float, ...]


# harness
@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration; see `variation_lab.config.load_config`."""

    experiment: str = ExperimentChoices.SWEEP
    family: str = GraphFamilyChoices.SAWTOOTH
    family_params: Dict[str, Any] = field(default_factory=dict)
    n: int = 1
    d: int = 2
    support_box: Optional[VCube] = None
    kernel: str = KernelChoices.CAUCHY
    component: int = 1
    rho: float = 3.0
    p: float = 2.0
    functional: str = FunctionalChoices.VARIATION
    eps_max: float = 1.0
    octaves: int = 4
    per_octave: int = 8
    evaluation_points: int = 16
    resolutions: Tuple[float, ...] = (2.0**-6, 2.0**-7)
    base_center: Tuple[float, ...] = (0.5,)
    base_side: float = 1.0
    test_functions: Tuple[str, ...] = (TestFunctionChoices.INDICATOR,)
    windows: Tuple[Tuple[float, float], ...] = ((1.0, 2.0), (0.75, 2.0), (1.0, 3.0))
    martingale: MartingaleConfig = field(default_factory=MartingaleConfig)
    max_depth: int = 3
    terms: Tuple[str, ...] = (PackingTermChoices.BETA2_SQ, PackingTermChoices.ALPHA_SQ)
    c2: float = 1.0
    c3: float = 1.0
    lambdas: Tuple[float, ...] = (0.05, 0.1, 0.2, 0.4)
    alpha_points: Optional[int] = DEFAULT_ALPHA_POINTS
    seed: int = 0
    diagnostic: bool = False

    def __post_init__(self):
        if len(self.resolutions) == 0:
            raise validation_error("must not be empty", "resolutions")
        for previous, current in zip(self.resolutions, self.resolutions[1:]):
            if current >= previous:
                raise validation_error("must be strictly decreasing", "resolutions")
        if self.rho <= RHO_FLOOR and not self.diagnostic:
            raise validation_error(f"rho must exceed {RHO_FLOOR:g} outside diagnostic mode", "rho")
        if len(self.base_center) != self.n:
            raise validation_error(f"needs {self.n} coordinates", "base.center")

    @property
    def base(self) -> VCube:
        return VCube(center=np.asarray(self.base_center, dtype=float), side=self.base_side)

    def snapshot(self) -> Dict[str, Any]:
        """JSON-serializable view of the configuration."""
        return {
            "experiment": str(self.experiment),
            "graph": {
                "family": str(self.family),
                "params": dict(self.family_params),
                "n": self.n,
                "d": self.d,
                "support_box": self.support_box.to_dict() if self.support_box else None,
            },
            "kernel": {"id": str(self.kernel), "component": self.component},
            "rho": self.rho,
            "p": self.p,
            "functional": str(self.functional),
            "eps_grid": {"eps_max": self.eps_max, "octaves": self.octaves, "per_octave": self.per_octave},
            "evaluation_points": self.evaluation_points,
            "resolutions": list(self.resolutions),
            "base": {"center": list(self.base_center), "side": self.base_side},
            "test_functions": [str(t) for t in self.test_functions],
            "windows": [list(w) for w in self.windows],
            "martingale": {
                "grid_points": self.martingale.grid_points,
                "m_min": self.martingale.m_min,
                "m_max": self.martingale.m_max,
                "tail_radius": self.martingale.tail_radius,
            },
            "packing": {
                "max_depth": self.max_depth,
                "terms": [str(t) for t in self.terms],
                "c2": self.c2,
                "c3": self.c3,
            },
            "lambdas": list(self.lambdas),
            "alpha_points": self.alpha_points,
            "seed": self.seed,
            "diagnostic": self.diagnostic,
        }


@dataclass(frozen=True)
class RatioRecord:
    """Operator norm ratio measured at one resolution."""

    numerator: float
    denominator: float
    ratio: float
    resolution: float
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def build(cls, numerator: float, denominator: float, resolution: float, **metadata) -> "RatioRecord":
        if not denominator > 0:
            raise validation_error("denominator norm must be positive", "f")
        return cls(numerator, denominator, numerator / denominator, resolution, metadata)


@dataclass(frozen=True)
class SweepResult:
    records: Tuple[RatioRecord, ...]
    stability_factor: float


@dataclass(frozen=True)
class CotlarRecord:
    c0: float
    witness_index: int
    witness_eps: float


@dataclass(frozen=True)
class SquareFunctionRecord:
    """Squared L^2 norms of W mu and S mu over P against the packing sum at one step h."""

    h: float
    w_norm_sq: float
    s_norm_sq: float
    packing: float
    sample: Optional[MartingaleSample] = field(default=None, repr=False, compare=False)
    diagnostics: Tuple[WDiagnostic, ...] = field(default=(), repr=False, compare=False)

    @property
    def w_ratio(self) -> float:
        return self.w_norm_sq / self.packing if self.packing > 0 else math.nan

    @property
    def s_ratio(self) -> float:
        return self.s_norm_sq / self.packing if self.packing > 0 else math.nan


@dataclass(frozen=True)
class EndpointReport:
    atom_integral: float
    bmo_oscillation: float
    weak_l1_profile: float
    jump_norms: Tuple[float, ...]
    jump_weak_profile: Tuple[float, ...] = ()


@dataclass
class RunManifest:
    """Track and persist the progress of one command-line run.

    The manifest is written next to the run's CSV outputs. Re-running with the
    same configuration snapshot, seed and version reproduces every CSV.

    Attributes:
        config (dict): Configuration snapshot.
        version (str): Package version.
        seed (int): Seed used for every random choice of the run.
        status (str): Current status of the run.
        total_steps (int): Number of planned steps.
        completed_steps (int): Number of steps finished so far.
        outputs (list): Paths of the files written.
        progress_log (dict): Structured log containing:
            - steps: processing steps with timestamps
            - errors: non-terminal errors with context
            - error: terminal error message if failed

    Example:
        manifest = RunManifest(config=cfg.snapshot(), version=__version__, seed=0, total_steps=2)
        try:
            manifest.mark_as_started()
            manifest.log_step("measure", "Sampled graph", h=0.015625)
            manifest.update_progress(1)
            manifest.mark_as_completed()
        except VariationLabError as e:
            manifest.mark_as_failed(str(e))
    """

    config: Dict[str, Any]
    version: str
    seed: int
    status: str = RunStatusChoices.PENDING
    total_steps: int = 0
    completed_steps: int = 0
    started_at: Optional[str] = None
    finished_at: Optional[str] = None
    outputs: List[str] = field(default_factory=list)
    progress_log: Dict[str, Any] = field(default_factory=dict)
    path: Optional[Path] = None

    def get_progress_percentage(self) -> float:
        """Calculate the current progress as a percentage.

        Returns:
            float: Percentage of completion from 0.0 to 100.0
        """
        if self.total_steps == 0:
            return 0.0
        return round((self.completed_steps / self.total_steps) * 100, 2)

    def mark_as_started(self) -> None:
        self.status = RunStatusChoices.IN_PROGRESS
        self.started_at = utc_now_iso()
        self.save()

    def mark_as_completed(self) -> None:
        self.status = RunStatusChoices.COMPLETED
        self.finished_at = utc_now_iso()
        self.save()

    def mark_as_failed(self, error_message: str) -> None:
        """Mark the run as failed with an error message.

        Args:
            error_message (str): Description of what caused the failure
        """
        self.status = RunStatusChoices.FAILED
        self.finished_at = utc_now_iso()
        self.progress_log["error"] = error_message
        self.save()

    def log_step(self, step: str, message: str, **additional_info) -> None:
        """Log a processing step with timestamp.

        Args:
            step (str): Name or identifier of the processing step
            message (str): Description of what was done
            **additional_info: Additional context as keyword arguments
        """
        self.progress_log.setdefault("steps", []).append(
            {"step": step, "message": message, "timestamp": utc_now_iso(), **additional_info}
        )
        logger.info("%s: %s", step, message)
        self.save()

    def log_error(self, step: str, error: str, **additional_info) -> None:
        """Log a non-terminal error with context."""
        self.progress_log.setdefault("errors", []).append(
            {"step": step, "error": str(error), "timestamp": utc_now_iso(), **additional_info}
        )
        logger.warning("%s: %s", step, error)
        self.save()

    def update_progress(self, completed: int) -> None:
        self.completed_steps = completed
        self.save()

    def add_output(self, path: Path) -> None:
        self.outputs.append(str(path))
        self.save()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "version": self.version,
            "seed": self.seed,
            "status": str(self.status),
            "total_steps": self.total_steps,
            "completed_steps": self.completed_steps,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "outputs": self.outputs,
            "progress_log": self.progress_log,
        }

    def save(self) -> None:
        """Write ``manifest.json`` if the manifest has a path."""
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True, default=str)
