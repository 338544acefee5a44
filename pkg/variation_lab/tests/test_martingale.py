import math
import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np
from django.core.exceptions import ValidationError

from variation_lab.exceptions import EmptyRegionError, MartingaleError
from variation_lab.geometry import build_graph, dyadic_cubes, mass, sample_measure, sample_measure_with_tail
from variation_lab.kernels import cauchy_component
from variation_lab.martingale import (
    averaged_term,
    conditional_avg,
    lambda_form_term,
    lambda_weight,
    lepingle_ratio,
    martingale_sample,
    martingale_term,
    offsets,
    s_diagnostic,
    tail_doubling_defect,
    w_diagnostic,
    w_from_sample,
    write_martingale_csv,
)
from variation_lab.models import EpsGrid, MartingaleConfig, VCube
from variation_lab.oracles import conditional_avg_loops
from variation_lab.utility import exact_sum, read_csv

BOX = VCube(center=[0.5], side=1.0)
CONFIG = MartingaleConfig(grid_points=2, m_min=1, m_max=3)


def compact(family, h=2.0**-5, tail_radius=1.0, **params):
    """Samples a graph supported in [0, 1) with a flat collar."""
    graph = build_graph(family, support_box=None if family == "flat" else BOX, **params)
    return sample_measure_with_tail(graph, BOX, h, tail_radius)


def box_points(measure, step=8):
    """Every step-th support point over [0, 1)."""
    return np.flatnonzero(BOX.contains(measure.base_points))[::step]


class ConditionalAverageTests(TestCase):
    """Test suite for E_D mu and E_m^a mu."""

    def setUp(self):
        self.kernel = cauchy_component(1)
        self.measure = compact("sawtooth", slope=1.0, period=0.25)

    def test_tower_property(self):
        """Test mu(D) E_D mu against the children of D.

        Ensures:
            - mu(D) E_D mu equals the sum over children to 1e-12
        """
        for cell in dyadic_cubes(BOX, 1, 2):
            parent = mass(self.measure, cell) * conditional_avg(self.measure, self.kernel, cell)
            children = exact_sum(
                [mass(self.measure, c) * conditional_avg(self.measure, self.kernel, c) for c in cell.children()]
            )
            self.assertAlmostEqual(parent, children, delta=1e-12)

    def test_tower_property_in_collar(self):
        """Test the tower property on cells near the edge of the sample.

        Ensures:
            - mu(D) E_D mu equals the sum over children to 1e-12 on the flat collar
            - A flat graph gives E_D mu = 0 there
        """
        measure = compact("sawtooth", h=2.0**-6, tail_radius=2.0, slope=1.0, period=0.25)
        flat = compact("flat", h=2.0**-6, tail_radius=2.0)
        for corner in (-2.0, -1.0, 1.0, 2.0):
            cell = VCube.from_corner([corner], 1.0)
            parent = mass(measure, cell) * conditional_avg(measure, self.kernel, cell)
            children = exact_sum([mass(measure, c) * conditional_avg(measure, self.kernel, c) for c in cell.children()])
            self.assertAlmostEqual(parent, children, delta=1e-12)
            self.assertAlmostEqual(conditional_avg(flat, self.kernel, cell), 0.0, delta=1e-12)

    def test_matches_double_loop(self):
        """Test E_D mu against an explicit double loop over z in D and y outside D.

        Ensures:
            - A corner inside D gives the same value to 1e-12
        """
        corner = sample_measure(build_graph("corner", slope=1.0), BOX, 2.0**-5)
        cell = VCube(center=[0.5], side=0.5)
        self.assertAlmostEqual(
            conditional_avg(corner, self.kernel, cell),
            conditional_avg_loops(corner, self.kernel, cell),
            delta=1e-12,
        )

    def test_empty_cell(self):
        """Test a cell without mass.

        Ensures:
            - EmptyRegionError is raised
        """
        with self.assertRaises(EmptyRegionError):
            conditional_avg(self.measure, self.kernel, VCube(center=[40.0], side=1.0))

    def test_flat_martingale_vanishes(self):
        """Test E_m^a on a flat line with symmetric tails.

        Ensures:
            - Every term is 0 to 1e-12
        """
        flat = compact("flat")
        for index in box_points(flat):
            for m in (1, 2, 3):
                term = martingale_term(flat, self.kernel, [0.0], m, flat.points[index])
                self.assertAlmostEqual(term, 0.0, delta=1e-12)

    def test_offsets(self):
        """Test the translation offsets.

        Ensures:
            - a_k = 2^-m k / G in lexicographic order
        """
        np.testing.assert_allclose(offsets(2, 4, 1)[:, 0], [0.0, 1 / 16, 2 / 16, 3 / 16])
        self.assertEqual(offsets(1, 3, 2).shape, (9, 2))
        np.testing.assert_allclose(offsets(0, 2, 2)[1], [0.0, 0.5])


class AveragedMartingaleTests(TestCase):
    """Test suite for the translation-averaged martingale."""

    def setUp(self):
        self.kernel = cauchy_component(1)
        self.measure = compact("sawtooth", slope=1.0, period=0.25)

    def test_lambda_form(self):
        """Test the Lambda double sum.

        Ensures:
            - It matches the offset average to 1e-9
        """
        for index in box_points(self.measure, 16):
            x = self.measure.points[index]
            for m in CONFIG.generations:
                self.assertAlmostEqual(
                    averaged_term(self.measure, self.kernel, m, x, CONFIG),
                    lambda_form_term(self.measure, self.kernel, m, x, CONFIG),
                    delta=1e-9,
                )

    def test_lambda_weight(self):
        """Test Lambda_m on a flat line of unit density.

        Ensures:
            - Cells containing x average 1 / mu(D)
            - Cells containing an excluded y count as 0
        """
        flat = sample_measure(build_graph("flat"), VCube.from_corner([0.0], 1.0), 2.0**-5)
        self.assertAlmostEqual(lambda_weight([flat], 1, [[0.3, 0.0]], [], grid_points=2), 2.0)
        self.assertAlmostEqual(lambda_weight([flat], 1, [[0.3, 0.0]], [[0.6, 0.0]], grid_points=2), 1.0)

    def test_skipped_offsets(self):
        """Test a point whose translated cells are mostly empty.

        Ensures:
            - MartingaleError is raised past the skip limit
        """
        flat = sample_measure(build_graph("flat"), VCube.from_corner([0.0], 1.0), 2.0**-5)
        with self.assertRaises(MartingaleError):
            averaged_term(flat, self.kernel, 1, [-0.3, 0.0], MartingaleConfig(grid_points=4, m_min=1, m_max=1))

    def test_sample_shapes(self):
        """Test a martingale sample.

        Ensures:
            - terms has shape (M, A, P) and averaged (M, P)
            - averaged is the mean over offsets
            - A point family is indexed by eps = 2^-m
        """
        indices = box_points(self.measure, 12)
        sample = martingale_sample(self.measure, self.kernel, CONFIG, indices)
        self.assertEqual(sample.terms.shape, (3, 2, len(indices)))
        self.assertEqual(sample.averaged.shape, (3, len(indices)))
        np.testing.assert_allclose(sample.averaged, sample.terms.mean(axis=1), atol=1e-12)
        np.testing.assert_allclose(sample.family(0).grid.values, [0.5, 0.25, 0.125])
        x = self.measure.points[indices[1]]
        direct = averaged_term(self.measure, self.kernel, 2, x, CONFIG)
        self.assertAlmostEqual(sample.averaged[1, 1], direct, delta=1e-13)

    def test_sample_is_worker_independent(self):
        """Test parallel sampling.

        Ensures:
            - Serial and threaded samples are bit-identical
        """
        indices = box_points(self.measure, 12)
        serial = martingale_sample(self.measure, self.kernel, CONFIG, indices, jobs=1)
        parallel = martingale_sample(self.measure, self.kernel, CONFIG, indices, jobs=3)
        self.assertEqual(serial.terms.tolist(), parallel.terms.tolist())

    def test_generations_too_fine(self):
        """Test the resolution guard.

        Ensures:
            - Cells holding fewer than 4 samples raise ValidationError
        """
        with self.assertRaises(ValidationError):
            martingale_sample(self.measure, self.kernel, MartingaleConfig(m_min=1, m_max=5), [0])


class DiagnosticTests(TestCase):
    """Test suite for the W, S and Lepingle diagnostics."""

    def setUp(self):
        self.kernel = cauchy_component(1)
        self.measure = compact("sawtooth", slope=1.0, period=0.25)

    def test_w_from_sample_matches_direct(self):
        """Test W computed from a sample.

        Ensures:
            - It equals the direct diagnostic
            - The profile has one entry per generation
        """
        indices = box_points(self.measure, 16)
        sample = martingale_sample(self.measure, self.kernel, CONFIG, indices)
        for diagnostic, index in zip(w_from_sample(self.measure, self.kernel, sample, CONFIG), indices):
            direct = w_diagnostic(self.measure, self.kernel, self.measure.points[index], CONFIG)
            self.assertEqual(len(direct.profile), 3)
            self.assertAlmostEqual(diagnostic.value, direct.value, delta=1e-12)
            self.assertAlmostEqual(direct.value, math.sqrt(sum(v * v for v in direct.profile)), delta=1e-14)

    def test_s_diagnostic(self):
        """Test the short variation diagnostic.

        Ensures:
            - It is 0 on a flat line
            - It is non-negative on a sawtooth
        """
        grid = EpsGrid.log_uniform(0.5, 2, 4)
        flat = compact("flat")
        for index in box_points(flat, 8):
            self.assertAlmostEqual(s_diagnostic(flat, self.kernel, flat.points[index], grid), 0.0, delta=1e-12)
        self.assertGreaterEqual(s_diagnostic(self.measure, self.kernel, self.measure.points[100], grid), 0.0)

    def test_lepingle_ratio(self):
        """Test the martingale variation norms.

        Ensures:
            - One ratio per offset
            - Oscillation never exceeds the 2-variation
        """
        indices = box_points(self.measure, 8)
        record = lepingle_ratio(self.measure, self.kernel, CONFIG, indices, rho=2.0)
        self.assertEqual(len(record.per_offset_variation), 2)
        self.assertLessEqual(record.oscillation_ratio, record.variation_ratio + 1e-12)
        for value in record.per_offset_variation:
            self.assertTrue(math.isfinite(value))

    def test_tail_doubling(self):
        """Test the far-field sensitivity.

        Ensures:
            - The defect is 0 for a flat line
            - It is finite for a sawtooth
        """
        config = MartingaleConfig(grid_points=2, m_min=1, m_max=2, tail_radius=1.0)
        self.assertEqual(tail_doubling_defect(build_graph("flat"), self.kernel, config, BOX, 2.0**-4), 0.0)
        graph = build_graph("sawtooth", support_box=BOX)
        self.assertTrue(math.isfinite(tail_doubling_defect(graph, self.kernel, config, BOX, 2.0**-4)))

    def test_write_martingale_csv(self):
        """Test the martingale export.

        Ensures:
            - One row per point and generation
            - W_partial ends at W
        """
        indices = box_points(self.measure, 32)
        sample = martingale_sample(self.measure, self.kernel, CONFIG, indices)
        diagnostics = w_from_sample(self.measure, self.kernel, sample, CONFIG)
        with tempfile.TemporaryDirectory() as tmp:
            header, table = read_csv(write_martingale_csv(self.measure, sample, diagnostics, Path(tmp) / "m.csv"))
        self.assertEqual(header, ["x1", "x2", "m", "E_m", "W_partial"])
        self.assertEqual(len(table), 3 * len(indices))
        self.assertAlmostEqual(table[2, 4], diagnostics[0].value, delta=1e-12)
