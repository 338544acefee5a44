import json
import math
import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np
from django.core.exceptions import ValidationError

from variation_lab.choices import RunStatusChoices
from variation_lab.exceptions import ConfigError
from variation_lab.geometry import build_graph, dyadic_cubes, sample_measure
from variation_lab.harness import (
    cotlar_check,
    decomposition_constant,
    endpoint_diagnostics,
    evaluation_points,
    localization_constant,
    lp_norm,
    prepare,
    refinement_sweep,
    run_experiment,
    square_function_ratios,
    stability,
    sublinearity_defect,
    test_functions,
)
from variation_lab.models import ExperimentConfig, MartingaleConfig, RunManifest, VCube
from variation_lab.utility import exact_sum

FAST = dict(eps_max=1.0, octaves=2, per_octave=4, evaluation_points=8, resolutions=(2.0**-5, 2.0**-6))


def fast_config(**kwargs):
    """Small configuration that keeps every grid above 4h."""
    return ExperimentConfig(**{**FAST, **kwargs})


def flat_line(h=2.0**-5):
    return sample_measure(build_graph("flat"), VCube.from_corner([0.0], 1.0), h)


class NormTests(TestCase):
    """Test suite for norms, test functions and evaluation points."""

    def test_lp_norm(self):
        """Test weighted L^p norms.

        Ensures:
            - p = 1, 2 and inf give the expected values
            - Non-finite values raise ValidationError
        """
        weights = np.ones(2)
        self.assertAlmostEqual(lp_norm(weights, [3.0, -4.0], 1), 7.0)
        self.assertAlmostEqual(lp_norm(weights, [3.0, -4.0], 2), 5.0)
        self.assertEqual(lp_norm(weights, [3.0, -4.0], math.inf), 4.0)
        with self.assertRaises(ValidationError):
            lp_norm(weights, [1.0, math.nan], 2)

    def test_atom(self):
        """Test the H^1 atom of the unit cube.

        Ensures:
            - Its integral is exactly 0
            - Its sup is 1 / mu(D)
        """
        measure = flat_line()
        atom = test_functions(measure, "h1_atom", VCube.from_corner([0.0], 1.0))
        self.assertEqual(exact_sum(measure.weights * atom), 0.0)
        self.assertAlmostEqual(np.abs(atom).max(), 1.0)

    def test_random_functions(self):
        """Test the seeded random test functions.

        Ensures:
            - Signs are +-1 inside the cube and 0 outside
            - Equal seeds give equal functions
        """
        measure = flat_line()
        cube = VCube.from_corner([0.0], 0.5)
        signs = test_functions(measure, "rademacher", cube, seed=3)
        inside = cube.contains(measure.base_points)
        self.assertTrue(np.all(np.abs(signs[inside]) == 1.0))
        self.assertTrue(np.all(signs[~inside] == 0.0))
        np.testing.assert_array_equal(signs, test_functions(measure, "rademacher", cube, seed=3))

    def test_evaluation_points(self):
        """Test the stratified subsample.

        Ensures:
            - Points lie in the region
            - Weights add up to the mass of the region
        """
        measure = flat_line(2.0**-6)
        region = VCube.from_corner([0.25], 0.5)
        indices, weights = evaluation_points(measure, 8, region)
        self.assertEqual(len(indices), 8)
        self.assertTrue(np.all(region.contains(measure.base_points[indices])))
        self.assertAlmostEqual(exact_sum(weights), 0.5, places=14)

    def test_stability(self):
        """Test the successive-ratio factor.

        Ensures:
            - It is the largest ratio between neighbours
            - Vanishing at only one resolution gives inf
        """
        self.assertEqual(stability([1.0]), 1.0)
        self.assertEqual(stability([1.0, 2.0, 1.5]), 2.0)
        self.assertEqual(stability([0.0, 1.0]), math.inf)
        self.assertEqual(stability([0.0, 0.0]), 1.0)


class ExperimentTests(TestCase):
    """Test suite for the empirical constants."""

    def test_sweep_is_stable_on_flat_line(self):
        """Test the refinement sweep.

        Ensures:
            - One record per resolution
            - Ratios on a flat line move by less than 1.2
        """
        result = refinement_sweep(fast_config(family="flat"))
        self.assertEqual(len(result.records), 2)
        self.assertLess(result.stability_factor, 1.2)

    def test_sweep_needs_two_resolutions(self):
        """Test sweep validation.

        Ensures:
            - A single resolution raises ConfigError
        """
        with self.assertRaises(ConfigError):
            refinement_sweep(fast_config(resolutions=(2.0**-5,)))

    def test_cotlar_and_localization(self):
        """Test the Cotlar and localization constants.

        Ensures:
            - Both are finite and non-negative
            - Localization reports one value per cube with mass
        """
        config = fast_config(family="sawtooth")
        _, measure = prepare(config, 2.0**-5)
        record = cotlar_check(config, measure)
        self.assertTrue(0.0 <= record.c0 < math.inf)
        constant, per_cube = localization_constant(config, measure, dyadic_cubes(config.base, 1, 1))
        self.assertEqual(len(per_cube), 2)
        self.assertEqual(constant, max(per_cube))

    def test_endpoints(self):
        """Test the endpoint report.

        Ensures:
            - One jump norm per lambda
            - Every diagnostic is finite
        """
        config = fast_config(family="sawtooth", lambdas=(0.1, 0.2))
        _, measure = prepare(config, 2.0**-5)
        report = endpoint_diagnostics(config, measure)
        self.assertEqual(len(report.jump_norms), 2)
        for value in (report.atom_integral, report.bmo_oscillation, report.weak_l1_profile) + report.jump_norms:
            self.assertTrue(math.isfinite(value))

    def test_square_function_ratios_are_stable(self):
        """Test ||W mu||^2 and ||S mu||^2 against the packing sum under refinement.

        Ensures:
            - Both ratios are finite and positive on a compact sawtooth
            - Each changes by at most a factor 2 when h halves
        """
        config = fast_config(
            experiment="martingale",
            family="sawtooth",
            support_box=VCube(center=[0.5], side=1.0),
            max_depth=2,
            alpha_points=4,
            martingale=MartingaleConfig(grid_points=2, m_min=1, m_max=3, tail_radius=1.0),
        )
        records = [square_function_ratios(config, h) for h in config.resolutions]
        for record in records:
            self.assertGreater(record.packing, 0.0)
            for ratio in (record.w_ratio, record.s_ratio):
                self.assertTrue(math.isfinite(ratio) and ratio > 0, record)
        self.assertLessEqual(stability([r.w_ratio for r in records]), 2.0)
        self.assertLessEqual(stability([r.s_ratio for r in records]), 2.0)

    def test_sublinearity(self):
        """Test pointwise sublinearity of V_rho o T_phi.

        Ensures:
            - All three defects are at most 1e-12
        """
        config = fast_config(family="sawtooth")
        _, measure = prepare(config, 2.0**-5)
        generator = np.random.default_rng(4)
        f, g = generator.uniform(-1, 1, (2, measure.size))
        for defect in sublinearity_defect(config, measure, f, g):
            self.assertLessEqual(defect, 1e-12)

    def test_decomposition_constant(self):
        """Test the S + W + V(E) decomposition constant.

        Ensures:
            - It is a non-negative number
        """
        box = VCube(center=[0.5], side=1.0)
        config = fast_config(
            family="sawtooth",
            support_box=box,
            martingale=MartingaleConfig(grid_points=2, m_min=1, m_max=3, tail_radius=1.0),
        )
        _, measure = prepare(config, 2.0**-5)
        indices = np.flatnonzero(box.contains(measure.base_points))[::8]
        self.assertGreaterEqual(decomposition_constant(config, measure, indices), 0.0)


class RunExperimentTests(TestCase):
    """Test suite for experiment dispatch and run manifests."""

    def run_transform(self, tmp):
        config = fast_config(experiment="transform", family="sawtooth")
        manifest = RunManifest(config=config.snapshot(), version="test", seed=0, path=Path(tmp) / "manifest.json")
        return run_experiment(config, Path(tmp), manifest), manifest

    def test_manifest_lifecycle(self):
        """Test a successful run.

        Ensures:
            - The manifest is completed and lists every output
            - The saved manifest matches the in-memory one
        """
        with tempfile.TemporaryDirectory() as tmp:
            paths, manifest = self.run_transform(tmp)
            self.assertEqual(manifest.status, RunStatusChoices.COMPLETED)
            self.assertEqual(manifest.get_progress_percentage(), 100.0)
            self.assertEqual(manifest.outputs, [str(p) for p in paths])
            self.assertTrue(all(p.exists() for p in paths))
            with open(Path(tmp) / "manifest.json") as f:
                self.assertEqual(json.load(f)["status"], "COMPLETED")

    def test_runs_are_reproducible(self):
        """Test determinism of the outputs.

        Ensures:
            - Two runs write byte-identical tables
        """
        contents = []
        for _ in range(2):
            with tempfile.TemporaryDirectory() as tmp:
                paths, _ = self.run_transform(tmp)
                contents.append([p.read_bytes() for p in paths])
        self.assertEqual(contents[0], contents[1])

    def test_failed_run(self):
        """Test a run that fails validation inside the experiment.

        Ensures:
            - The error propagates
            - The manifest is marked failed with the message
        """
        config = fast_config(experiment="martingale", family="sawtooth")
        manifest = RunManifest(config=config.snapshot(), version="test", seed=0)
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigError):
                run_experiment(config, Path(tmp), manifest)
        self.assertEqual(manifest.status, RunStatusChoices.FAILED)
        self.assertIn("support_box", manifest.progress_log["error"])
