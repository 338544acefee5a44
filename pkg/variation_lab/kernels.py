"""Odd Calderon-Zygmund kernels and the smooth truncation family.

Kernels evaluate on arrays of shape (k, d) and return 0 at the origin, where
they are undefined; the transforms never evaluate them there.
"""

import functools
import logging
import math

import numpy as np

from variation_lab.choices import KernelChoices
from variation_lab.constants import CZ_BOUND_SLACK, ODDNESS_TOLERANCE
from variation_lab.exceptions import GeometryError, GridError, KernelError
from variation_lab.models import CZBoundsReport, CZKernel, TruncationProfile
from variation_lab.utility import rng
from variation_lab.validators import is_choice, is_positive_int

logger = logging.getLogger(__name__)

CAUCHY_BOUND = 2.0
"""Sup of the normalized size and derivative ratios of x^1/|x|^2 in the plane."""

SAMPLE_RADIUS_RANGE = (1e-2, 1e2)
DIFFERENCE_STEP = 1e-5


def _squared_norm(x: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", x, x)


def cauchy_component(i: int) -> CZKernel:
    """Component of the Cauchy kernel (x^1, -x^2)/|x|^2 for n = 1, d = 2.

    Args:
        i (int): 1 for x^1/|x|^2, 2 for -x^2/|x|^2.
    """
    if i not in (1, 2):
        raise GeometryError(f"Cauchy component must be 1 or 2, got {i!r}")
    sign = 1.0 if i == 1 else -1.0

    def evaluate(x: np.ndarray) -> np.ndarray:
        r2 = _squared_norm(x)
        out = np.zeros(len(x))
        nonzero = r2 > 0
        out[nonzero] = sign * x[nonzero, i - 1] / r2[nonzero]
        return out

    return CZKernel(n=1, d=2, func=evaluate, bound_C=CAUCHY_BOUND, name=f"cauchy_{i}")


def riesz_component(i: int, n: int, d: int) -> CZKernel:
    """Component x^i/|x|^(n+1) of the n-dimensional Riesz kernel in R^d.

    The claimed constant (n + 1)(n + 6) bounds the size, gradient and Hessian
    ratios of every component.
    """
    if not 0 < n < d:
        raise GeometryError(f"need 0 < n < d, got n={n}, d={d}")
    if not 1 <= i <= d:
        raise GeometryError(f"Riesz component must lie in 1..{d}, got {i!r}")

    def evaluate(x: np.ndarray) -> np.ndarray:
        r = np.sqrt(_squared_norm(x))
        out = np.zeros(len(x))
        nonzero = r > 0
        out[nonzero] = x[nonzero, i - 1] / r[nonzero] ** (n + 1)
        return out

    return CZKernel(n=n, d=d, func=evaluate, bound_C=float((n + 1) * (n + 6)), name=f"riesz_{i}")


def even_power_kernel(n: int, d: int) -> CZKernel:
    """The even kernel 1/|x|^n; fails the oddness requirement."""

    def evaluate(x: np.ndarray) -> np.ndarray:
        r = np.sqrt(_squared_norm(x))
        out = np.zeros(len(x))
        nonzero = r > 0
        out[nonzero] = 1.0 / r[nonzero] ** n
        return out

    return CZKernel(n=n, d=d, func=evaluate, bound_C=float(n * (n + 2)), name="even_power")


def build_kernel(kernel_id: str, component: int = 1, n: int = 1, d: int = 2) -> CZKernel:
    """Kernel named by a configuration."""
    kernel_id = is_choice(kernel_id, KernelChoices, "kernel.id")
    if kernel_id == KernelChoices.CAUCHY:
        if (n, d) != (1, 2):
            raise GeometryError(f"the Cauchy kernel needs n=1, d=2, got n={n}, d={d}")
        return cauchy_component(component)
    return riesz_component(component, n, d)


def _sample_points(d: int, samples: int, seed: int) -> np.ndarray:
    generator = rng(seed)
    directions = generator.standard_normal((samples, d))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    lo, hi = SAMPLE_RADIUS_RANGE
    radii = np.exp(generator.uniform(math.log(lo), math.log(hi), samples))
    return directions * radii[:, None]


def _checked(kernel: CZKernel, x: np.ndarray) -> np.ndarray:
    values = kernel(x)
    if not np.all(np.isfinite(values)):
        raise KernelError(f"kernel {kernel.name} is not finite at a sample point")
    return values


def verify_cz_bounds(kernel: CZKernel, samples: int = 1000, seed: int = 0) -> CZBoundsReport:
    """Sample the size, smoothness and oddness bounds of a kernel.

    Points have uniform directions and log-uniform radii in [1e-2, 1e2].
    Derivatives use central differences with step 1e-5 |x|; mixed second
    derivatives use the four-point stencil.

    Args:
        kernel (CZKernel): Kernel to check.
        samples (int): Number of sample points.
        seed (int): Seed of the sample points.

    Returns:
        CZBoundsReport: Sampled maxima of |K||x|^n, |dK||x|^(n+1),
        |d^2K||x|^(n+2) and |K(x) + K(-x)||x|^n, with violation flags.

    Raises:
        KernelError: If the kernel is not finite at a sample.
    """
    samples = is_positive_int(samples, "samples")
    x = _sample_points(kernel.d, samples, seed)
    r = np.linalg.norm(x, axis=1)
    n, d = kernel.n, kernel.d
    step = DIFFERENCE_STEP * r
    eye = np.eye(d)

    k0 = _checked(kernel, x)
    size = np.abs(k0) * r**n
    oddness = np.abs(k0 + _checked(kernel, -x)) * r**n

    gradient = np.zeros(samples)
    hessian = np.zeros(samples)
    for i in range(d):
        ei = step[:, None] * eye[i]
        plus, minus = _checked(kernel, x + ei), _checked(kernel, x - ei)
        gradient = np.maximum(gradient, np.abs(plus - minus) / (2 * step) * r ** (n + 1))
        hessian = np.maximum(hessian, np.abs(plus - 2 * k0 + minus) / step**2 * r ** (n + 2))
        for j in range(i + 1, d):
            ej = step[:, None] * eye[j]
            mixed = (
                _checked(kernel, x + ei + ej)
                - _checked(kernel, x + ei - ej)
                - _checked(kernel, x - ei + ej)
                + _checked(kernel, x - ei - ej)
            ) / (4 * step**2)
            hessian = np.maximum(hessian, np.abs(mixed) * r ** (n + 2))

    limit = kernel.bound_C * (1 + CZ_BOUND_SLACK)
    report = CZBoundsReport(
        size_ratio=float(size.max()),
        gradient_ratio=float(gradient.max()),
        hessian_ratio=float(hessian.max()),
        oddness_defect=float(oddness.max()),
        violation=bool(max(size.max(), gradient.max(), hessian.max()) > limit),
        odd_violation=bool(oddness.max() > ODDNESS_TOLERANCE),
    )
    if report.violation or report.odd_violation:
        logger.warning("kernel %s fails its bounds: %s", kernel.name, report)
    return report


@functools.lru_cache(maxsize=None)
def truncation_profile(n: int) -> TruncationProfile:
    return TruncationProfile(n=n)


def base_norm(x: np.ndarray, n: int) -> np.ndarray:
    """|x~|, the norm of the first n coordinates."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.linalg.norm(x[:, :n], axis=1)


def phi(eps: float, x: np.ndarray, n: int = 1) -> np.ndarray:
    """phi_eps(x) = phi_R(|x~| / eps)."""
    if not eps > 0:
        raise GridError(f"eps must be positive, got {eps!r}")
    return truncation_profile(n).value(base_norm(x, n) / eps)


def phi_window(eps: float, delta: float, x: np.ndarray, n: int = 1) -> np.ndarray:
    """phi_eps^delta = phi_eps - phi_delta for eps <= delta."""
    if eps > delta:
        raise GridError(f"phi_window needs eps <= delta, got {eps!r} > {delta!r}")
    return phi(eps, x, n) - phi(delta, x, n)


def gamma(eps: float, x: np.ndarray, n: int = 1) -> np.ndarray:
    """gamma_eps = 1 - phi_eps."""
    return 1.0 - phi(eps, x, n)
