import math
from unittest import TestCase

import numpy as np
from django.core.exceptions import ValidationError

from variation_lab.exceptions import GridError
from variation_lab.models import SampledFamily, WindowSpec
from variation_lab.oracles import (
    lambda_jumps_bruteforce,
    oscillation_bruteforce,
    rho_variation_bruteforce,
    upcrossings_bruteforce,
)
from variation_lab.variation import (
    lambda_jumps,
    octave,
    octave_groups,
    oscillation,
    rho_variation,
    short_variation,
    split_short_long,
    upcrossings,
    variation_sum,
)


def family(values, eps=None):
    """Wraps raw values in a family on the default 2^(-k/8) grid."""
    return SampledFamily.from_values(values, eps)


def random_families(seed, count, max_length):
    """Returns seeded random families with values rounded to 3 decimals."""
    generator = np.random.default_rng(seed)
    return [
        family(np.round(generator.normal(size=int(generator.integers(1, max_length + 1))), 3))
        for _ in range(count)
    ]


class RhoVariationTests(TestCase):
    """Test suite for the rho-variation dynamic program."""

    def test_examples(self):
        """Test hand-computed variations.

        Ensures:
            - [0, 1, 0, 1] has 2-variation sqrt(3)
            - [0, 2, 1, 3] has 1-variation 5
            - Monotone families have every variation equal to their range
        """
        self.assertAlmostEqual(rho_variation(family([0, 1, 0, 1]), 2).value, math.sqrt(3), places=14)
        self.assertAlmostEqual(rho_variation(family([0, 2, 1, 3]), 1).value, 5.0, places=14)
        for rho in (1.0, 2.0, 3.0, math.inf):
            self.assertAlmostEqual(rho_variation(family([0.0, 0.5, 2.0]), rho).value, 2.0, places=14)

    def test_trivial_families(self):
        """Test constant and single-sample families.

        Ensures:
            - Both have variation 0 and an empty subsequence
            - rho < 1 raises ValidationError
        """
        self.assertEqual(rho_variation(family([1.5]), 2).value, 0.0)
        result = rho_variation(family([1.0, 1.0, 1.0]), 2)
        self.assertEqual((result.value, result.subsequence), (0.0, ()))
        with self.assertRaises(ValidationError):
            rho_variation(family([0, 1]), 0.5)

    def test_subsequence_realizes_value(self):
        """Test the back-pointers.

        Ensures:
            - The returned subsequence is increasing
            - Its variation sum is the reported value to the rho
        """
        for f in random_families(4, 50, 12):
            result = rho_variation(f, 2.5)
            if result.value == 0:
                continue
            self.assertEqual(list(result.subsequence), sorted(result.subsequence))
            total = result.value**2.5
            self.assertAlmostEqual(variation_sum(f, result.subsequence, 2.5), total, delta=1e-12 * max(1.0, total))

    def test_matches_bruteforce(self):
        """Test the dynamic program against enumeration.

        Ensures:
            - Values agree to 1e-12 on 1000 random families of length <= 12
        """
        for f in random_families(0, 1000, 12):
            for rho in (1.0, 2.0, 2.5, 3.0):
                slow = rho_variation_bruteforce(f, rho)
                self.assertLessEqual(abs(rho_variation(f, rho).value - slow), 1e-12 * max(1.0, slow))

    def test_antitone_in_rho(self):
        """Test monotonicity in the exponent.

        Ensures:
            - V_3 <= V_2.5 <= V_2 <= V_1
        """
        for f in random_families(9, 200, 30):
            values = [rho_variation(f, rho).value for rho in (1.0, 2.0, 2.5, 3.0)]
            for larger, smaller in zip(values, values[1:]):
                self.assertLessEqual(smaller, larger + 1e-9)


class JumpTests(TestCase):
    """Test suite for lambda-jumps and upcrossings."""

    def test_examples(self):
        """Test hand-counted jumps.

        Ensures:
            - Each alternation above lambda counts once
            - Jumps equal to lambda do not count
        """
        self.assertEqual(lambda_jumps(family([0, 1, 0, 1]), 0.5), 3)
        self.assertEqual(lambda_jumps(family([0, 1, 0, 1]), 1.0), 0)
        self.assertEqual(lambda_jumps(family([0]), 0.1), 0)

    def test_matches_bruteforce(self):
        """Test the greedy counts against exhaustive search.

        Ensures:
            - lambda_jumps and upcrossings agree with the oracles on 1000 families
        """
        for f in random_families(1, 1000, 12):
            for lam in (0.2, 0.7, 1.5):
                self.assertEqual(lambda_jumps(f, lam), lambda_jumps_bruteforce(f, lam))
            self.assertEqual(upcrossings(f, -0.3, 0.3), upcrossings_bruteforce(f, -0.3, 0.3))
            self.assertEqual(upcrossings(f, 0.0, 1.0), upcrossings_bruteforce(f, 0.0, 1.0))

    def test_jumps_bounded_by_variation(self):
        """Test lambda N_lambda^(1/rho) <= V_rho.

        Ensures:
            - The jump inequality holds for every family and lambda
        """
        for f in random_families(2, 300, 25):
            for lam in (0.1, 0.5, 1.0):
                for rho in (2.5, 3.0):
                    self.assertLessEqual(lam * lambda_jumps(f, lam) ** (1 / rho), rho_variation(f, rho).value + 1e-9)

    def test_upcrossing_levels(self):
        """Test upcrossing validation.

        Ensures:
            - a >= b raises ValidationError
        """
        with self.assertRaises(ValidationError):
            upcrossings(family([0, 1]), 1.0, 1.0)


class OscillationTests(TestCase):
    """Test suite for the oscillation operator and the octave split."""

    def test_matches_bruteforce(self):
        """Test oscillation against pairwise enumeration.

        Ensures:
            - Values agree to 1e-12 for dyadic and geometric windows
        """
        windows = (WindowSpec.dyadic(0, 2), WindowSpec.geometric(0.9, 1.5, 0.2))
        for f in random_families(3, 1000, 12):
            for window_spec in windows:
                self.assertLessEqual(abs(oscillation(f, window_spec) - oscillation_bruteforce(f, window_spec)), 1e-12)

    def test_oscillation_bounded_by_variation(self):
        """Test O <= V_2.

        Ensures:
            - The oscillation never exceeds the 2-variation
        """
        window_spec = WindowSpec.geometric(1.0, 2.0, 0.01)
        for f in random_families(5, 300, 40):
            self.assertLessEqual(oscillation(f, window_spec), rho_variation(f, 2.0).value + 1e-9)

    def test_windows(self):
        """Test window construction.

        Ensures:
            - Dyadic windows are the octaves
            - Ratios <= 1 raise GridError
        """
        self.assertEqual(WindowSpec.dyadic(0, 1).windows(), [(0.5, 1.0), (0.25, 0.5)])
        with self.assertRaises(GridError):
            WindowSpec.geometric(1.0, 1.0, 0.1)

    def test_octaves(self):
        """Test octave indices and the short/long split.

        Ensures:
            - eps in [2^(-j-1), 2^-j) has octave j
            - Consecutive pairs in one octave are short
            - Unsorted eps raise GridError
        """
        self.assertEqual([octave(e) for e in (1.0, 0.75, 0.5, 0.3)], [-1, 0, 0, 1])
        self.assertEqual(split_short_long([0.9, 0.7, 0.5, 0.4, 0.2]), ((0, 1), (2, 3)))
        with self.assertRaises(GridError):
            split_short_long([0.5, 0.7])

    def test_short_variation(self):
        """Test the short square function.

        Ensures:
            - Octave groups partition the samples
            - Short variation is at most V_2
        """
        for f in random_families(6, 200, 30):
            groups = octave_groups(f)
            self.assertEqual(sorted(np.concatenate(groups).tolist()), list(range(len(f.values))))
            self.assertLessEqual(short_variation(f), rho_variation(f, 2.0).value + 1e-9)
