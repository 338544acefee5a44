from unittest import TestCase

import numpy as np
from django.core.exceptions import ValidationError

from variation_lab.exceptions import GeometryError, GridError
from variation_lab.kernels import (
    build_kernel,
    cauchy_component,
    even_power_kernel,
    gamma,
    phi,
    phi_window,
    riesz_component,
    truncation_profile,
    verify_cz_bounds,
)


class KernelTests(TestCase):
    """Test suite for the odd Calderon-Zygmund kernels."""

    def test_cauchy_values(self):
        """Test the two Cauchy components.

        Ensures:
            - K_1(x) = x^1 / |x|^2 and K_2(x) = -x^2 / |x|^2
            - Both vanish at the origin
        """
        x = np.array([[3.0, 4.0], [0.0, 0.0]])
        np.testing.assert_allclose(cauchy_component(1)(x), [3.0 / 25.0, 0.0])
        np.testing.assert_allclose(cauchy_component(2)(x), [-4.0 / 25.0, 0.0])

    def test_riesz_matches_cauchy(self):
        """Test the one-dimensional Riesz kernel in the plane.

        Ensures:
            - Its first component is the first Cauchy component
        """
        x = np.random.default_rng(1).normal(size=(50, 2))
        np.testing.assert_allclose(riesz_component(1, 1, 2)(x), cauchy_component(1)(x))

    def test_bounds_hold(self):
        """Test sampled size, smoothness and oddness bounds.

        Ensures:
            - Cauchy and Riesz kernels are odd to 1e-12
            - Their sampled ratios stay below the claimed constant
        """
        for kernel in (cauchy_component(1), cauchy_component(2), riesz_component(2, 2, 3)):
            report = verify_cz_bounds(kernel, samples=300, seed=3)
            self.assertFalse(report.odd_violation, kernel.name)
            self.assertFalse(report.violation, kernel.name)
            self.assertLessEqual(report.size_ratio, 1.0 + 1e-12)

    def test_even_kernel_is_flagged(self):
        """Test the oddness check on an even kernel.

        Ensures:
            - The oddness violation flag is raised
        """
        report = verify_cz_bounds(even_power_kernel(1, 2), samples=20)
        self.assertTrue(report.odd_violation)
        self.assertGreater(report.oddness_defect, 1.0)

    def test_build_kernel(self):
        """Test kernels named by configurations.

        Ensures:
            - Cauchy requires n=1, d=2
            - Unknown identifiers raise ValidationError
            - Invalid components raise GeometryError
        """
        self.assertEqual(build_kernel("cauchy", 2).name, "cauchy_2")
        self.assertEqual(build_kernel("riesz", 3, 2, 3).d, 3)
        with self.assertRaises(GeometryError):
            build_kernel("cauchy", 1, 2, 3)
        with self.assertRaises(GeometryError):
            build_kernel("riesz", 4, 1, 2)
        with self.assertRaises(ValidationError):
            build_kernel("hilbert")


class TruncationProfileTests(TestCase):
    """Test suite for the smooth truncation family."""

    def test_profile_sandwich(self):
        """Test the profile thresholds.

        Ensures:
            - phi_R vanishes below 2.1 sqrt(n) and is 1 above 3 sqrt(n)
            - The profile is monotone
        """
        for n in (1, 2):
            profile = truncation_profile(n)
            r = np.linspace(0, 5, 5001)
            values = profile.value(r)
            self.assertTrue(np.all(values[r <= 2.1 * np.sqrt(n)] == 0))
            self.assertTrue(np.all(values[r >= 3.0 * np.sqrt(n)] == 1))
            self.assertTrue(np.all(np.diff(values) >= 0))

    def test_profile_is_c2(self):
        """Test the analytic derivatives.

        Ensures:
            - First and second derivatives vanish at both thresholds
            - The first derivative matches a central difference
        """
        profile = truncation_profile(1)
        edges = np.array([profile.lo, profile.hi])
        np.testing.assert_allclose(profile.derivative(edges), 0.0, atol=1e-12)
        np.testing.assert_allclose(profile.second_derivative(edges), 0.0, atol=1e-12)
        r = np.array([2.3, 2.55, 2.8])
        step = 1e-6
        numeric = (profile.value(r + step) - profile.value(r - step)) / (2 * step)
        np.testing.assert_allclose(profile.derivative(r), numeric, rtol=1e-6)

    def test_windows_telescope(self):
        """Test phi windows and gamma.

        Ensures:
            - Windows over consecutive scales sum to phi_eps - phi_delta
            - gamma_eps = 1 - phi_eps
            - Reversed windows raise GridError
        """
        x = np.random.default_rng(2).uniform(-4, 4, (200, 2))
        telescoped = phi_window(0.25, 0.5, x) + phi_window(0.5, 1.0, x)
        np.testing.assert_allclose(telescoped, phi_window(0.25, 1.0, x), atol=1e-15)
        np.testing.assert_allclose(gamma(0.5, x) + phi(0.5, x), 1.0)
        with self.assertRaises(GridError):
            phi_window(1.0, 0.5, x)
        with self.assertRaises(GridError):
            phi(0.0, x)

    def test_phi_uses_base_coordinates(self):
        """Test that phi only sees the first n coordinates.

        Ensures:
            - Moving a point vertically does not change phi
        """
        x = np.array([[2.55, 0.0], [2.55, 10.0]])
        values = phi(1.0, x)
        self.assertAlmostEqual(values[0], 0.5, places=12)
        self.assertEqual(values[0], values[1])
