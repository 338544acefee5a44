"""Variational functionals of sampled families.

Families are stored in decreasing eps; the jump and upcrossing counts scan
them in increasing eps. Every functional is exact on the sampled grid, which
makes it a lower bound of the continuum supremum.
"""

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np

from variation_lab.exceptions import GridError
from variation_lab.models import SampledFamily, VariationResult, WindowSpec
from variation_lab.utility import exact_sum
from variation_lab.validators import is_exponent, is_positive, validation_error

logger = logging.getLogger(__name__)


def _values(family) -> np.ndarray:
    if isinstance(family, SampledFamily):
        return family.values
    return np.asarray(family, dtype=float).ravel()


def rho_variation(family: SampledFamily, rho: float) -> VariationResult:
    """rho-variation of a family over all subsequences of the grid.

    Dynamic program ``best[i] = max_j<i (best[j] + |v_i - v_j|^rho)`` with
    back-pointers; ties go to the first maximizer. ``rho = inf`` gives
    max - min.

    Args:
        family (SampledFamily): Family (or plain sequence of values).
        rho (float): Exponent in [1, inf].

    Returns:
        VariationResult: The rho-th root of the maximal sum and the indices of
        a subsequence realizing it (empty when the value is 0).

    Raises:
        ValidationError: If rho < 1.
    """
    rho = is_exponent(rho, "rho")
    v = _values(family)
    size = len(v)
    if size < 2:
        return VariationResult(0.0, ())
    if math.isinf(rho):
        lo, hi = int(np.argmin(v)), int(np.argmax(v))
        value = float(v[hi] - v[lo])
        return VariationResult(value, tuple(sorted((lo, hi))) if value > 0 else ())

    best = np.zeros(size)
    parent = np.full(size, -1, dtype=np.int64)
    for i in range(1, size):
        candidates = best[:i] + np.abs(v[i] - v[:i]) ** rho
        j = int(np.argmax(candidates))
        best[i] = candidates[j]
        parent[i] = j
    end = int(np.argmax(best))
    if best[end] <= 0:
        return VariationResult(0.0, ())
    subsequence = [end]
    while best[subsequence[0]] > 0:
        subsequence.insert(0, int(parent[subsequence[0]]))
    return VariationResult(float(best[end] ** (1.0 / rho)), tuple(subsequence))


def variation_sum(family: SampledFamily, subsequence: Sequence[int], rho: float) -> float:
    """sum_k |v_(i_(k+1)) - v_(i_k)|^rho along ``subsequence``."""
    v = _values(family)
    steps = np.abs(np.diff(v[list(subsequence)]))
    if math.isinf(rho):
        return float(steps.max()) if len(steps) else 0.0
    return exact_sum(steps**rho)


def oscillation(family: SampledFamily, windows: WindowSpec) -> float:
    """sqrt(sum_m (max - min over the samples with eps in [r_(m+1), r_m])^2).

    Windows are closed; a window holding fewer than two samples contributes 0.
    """
    v = _values(family)
    eps = family.grid.values
    squares = []
    for lo, hi in windows.windows():
        selected = v[(eps >= lo) & (eps <= hi)]
        if len(selected) >= 2:
            squares.append((selected.max() - selected.min()) ** 2)
    return math.sqrt(exact_sum(squares)) if squares else 0.0


def lambda_jumps(family: SampledFamily, lam: float) -> int:
    """N_lambda: the largest number of disjoint ordered pairs with jumps above lambda.

    Scanning in increasing eps, a pair is closed as soon as the current value
    differs by more than lambda from some value since the last cut; the scan
    restarts at the closing sample. Closing at the earliest possible sample is
    optimal for pair systems sharing endpoints.
    """
    lam = is_positive(lam, "lambda")
    v = _values(family)[::-1]
    if len(v) == 0:
        return 0
    count = 0
    low = high = v[0]
    for value in v[1:]:
        if value - low > lam or high - value > lam:
            count += 1
            low = high = value
        else:
            low, high = min(low, value), max(high, value)
    return count


def upcrossings(family: SampledFamily, a: float, b: float) -> int:
    """N_a^b: pairs eps_i < delta_i with T_(eps_i) < a and T_(delta_i) > b."""
    if not a < b:
        raise validation_error(f"need a < b, got a={a!r}, b={b!r}", "a")
    count = 0
    below = False
    for value in _values(family)[::-1]:
        if not below and value < a:
            below = True
        elif below and value > b:
            count += 1
            below = False
    return count


def octave(eps: float) -> int:
    """The index j with eps in I_j = [2^(-j-1), 2^-j)."""
    if not eps > 0:
        raise GridError(f"eps must be positive, got {eps!r}")
    _, exponent = math.frexp(eps)
    return -exponent


def split_short_long(eps: Sequence[float]) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """Split consecutive index pairs into short (same octave) and long ones.

    Returns:
        tuple: ``(S, L)`` where m is in S when eps_m and eps_(m+1) share a
        dyadic interval I_j, and in L otherwise.
    """
    eps = [float(e) for e in eps]
    for previous, current in zip(eps, eps[1:]):
        if current >= previous:
            raise GridError("eps sequence must be strictly decreasing")
    octaves = [octave(e) for e in eps]
    short, long = [], []
    for m in range(len(eps) - 1):
        (short if octaves[m] == octaves[m + 1] else long).append(m)
    return tuple(short), tuple(long)


def octave_groups(family: SampledFamily) -> List[np.ndarray]:
    """Sample indices grouped by octave, coarsest octave first."""
    octaves = np.array([octave(e) for e in family.grid.values])
    return [np.flatnonzero(octaves == j) for j in np.unique(octaves)]


def short_variation(family: SampledFamily) -> float:
    """sqrt(sum_j V_2(family restricted to I_j)^2), the sampled short square function."""
    squares = [rho_variation(family.values[group], 2.0).value ** 2 for group in octave_groups(family)]
    return math.sqrt(exact_sum(squares)) if squares else 0.0
