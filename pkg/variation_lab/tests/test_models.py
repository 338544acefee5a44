import json
import math
import os
import tempfile
from pathlib import Path
from unittest import TestCase, mock

import numpy as np
from django.core.exceptions import ValidationError
from django.test import override_settings

from variation_lab.checks import CheckRegistry, expect
from variation_lab.choices import GraphFamilyChoices, RunStatusChoices, SuiteChoices
from variation_lab.conf import DEFAULT_OUT, environment_settings
from variation_lab.exceptions import GeometryError, GridError, InvariantError
from variation_lab.models import DiscreteMeasure, EpsGrid, RunManifest
from variation_lab.utility import exact_sum, get_setting, parallel_map, read_csv, write_csv
from variation_lab.validators import is_choice, is_exponent, is_positive_int, no_unknown_keys


def manifest_example(path=None, **kwargs):
    """Creates and returns a pending run manifest.

    Args:
        path (Path, optional): Where the manifest saves itself.
        **kwargs: Additional fields passed to RunManifest.

    Returns:
        RunManifest: A manifest with a two-step plan.
    """
    return RunManifest(config={"experiment": "sweep"}, version="0.1.0", seed=0, total_steps=2, path=path, **kwargs)


class ChoicesTests(TestCase):
    """Test suite for choice classes and validators."""

    def test_choices(self):
        """Test lookup helpers.

        Ensures:
            - Values compare equal to plain strings and print as their value
            - Labels are available by value
            - Terminal states are COMPLETED and FAILED
        """
        self.assertEqual(GraphFamilyChoices.SAWTOOTH, "sawtooth")
        self.assertEqual(str(GraphFamilyChoices.FROM_SAMPLES), "from_samples")
        self.assertEqual(GraphFamilyChoices.get_label("corner"), "Single corner")
        self.assertFalse(GraphFamilyChoices.is_valid("spiral"))
        self.assertTrue(RunStatusChoices.is_terminal_state(RunStatusChoices.FAILED))
        self.assertFalse(RunStatusChoices.is_terminal_state(RunStatusChoices.IN_PROGRESS))
        self.assertTrue(SuiteChoices.includes("full", "full"))
        self.assertFalse(SuiteChoices.includes("fast", "full"))

    def test_validators(self):
        """Test the field validators.

        Ensures:
            - Valid inputs are returned converted
            - Invalid inputs raise ValidationError keyed by the field
        """
        self.assertEqual(is_exponent("inf"), math.inf)
        self.assertEqual(is_choice("flat", GraphFamilyChoices), GraphFamilyChoices.FLAT)
        with self.assertRaises(ValidationError) as ctx:
            is_positive_int(True, "jobs")
        self.assertEqual(list(ctx.exception.message_dict), ["jobs"])
        with self.assertRaises(ValidationError):
            no_unknown_keys({"a": 1, "b": 2}, {"a"}, "section")


class UtilityTests(TestCase):
    """Test suite for shared helpers."""

    def test_exact_sum(self):
        """Test correctly rounded sums.

        Ensures:
            - Cancelling terms give exactly 0 in any order
        """
        self.assertEqual(exact_sum([1e16, 1.0, -1e16, -1.0]), 0.0)
        self.assertEqual(exact_sum([0.1] * 10), 1.0)

    def test_parallel_map(self):
        """Test the order of threaded results.

        Ensures:
            - Results follow the input order for any worker count
        """
        items = list(range(50))
        for jobs in (1, 4):
            self.assertEqual(parallel_map(lambda x: x * x, items, jobs), [x * x for x in items])

    def test_get_setting(self):
        """Test Django settings lookup.

        Ensures:
            - VARIATION_LAB_* settings are read by their short name
            - Missing settings give the default
        """
        with override_settings(VARIATION_LAB_JOBS=3):
            self.assertEqual(get_setting("JOBS", 1), 3)
        self.assertEqual(get_setting("MISSING", 7), 7)

    def test_environment_settings(self):
        """Test the settings read from the environment.

        Ensures:
            - VARIATION_LAB_JOBS is converted to int
            - Unset variables give the defaults
        """
        with mock.patch.dict(os.environ, {"VARIATION_LAB_JOBS": "3", "VARIATION_LAB_OUT": "results"}):
            self.assertEqual(environment_settings(), {"VARIATION_LAB_JOBS": 3, "VARIATION_LAB_OUT": "results"})
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertEqual(environment_settings()["VARIATION_LAB_OUT"], DEFAULT_OUT)

    def test_csv_floats_round_trip(self):
        """Test the float format of tables.

        Ensures:
            - Floats are written with enough digits to read back exactly
        """
        value = 1.0 / 3.0
        with tempfile.TemporaryDirectory() as tmp:
            header, table = read_csv(write_csv(Path(tmp) / "t.csv", ["a", "b"], [[value, 2]]))
        self.assertEqual(header, ["a", "b"])
        self.assertEqual(table[0, 0], value)


class MeasureModelTests(TestCase):
    """Test suite for measures and truncation grids."""

    def test_measure_validation(self):
        """Test measure construction.

        Ensures:
            - Non-positive weights raise GeometryError
            - Mismatched lengths raise GeometryError
            - Base points are the first n coordinates
        """
        with self.assertRaises(GeometryError):
            DiscreteMeasure.from_points(np.zeros((2, 2)), np.array([1.0, 0.0]), n=1)
        with self.assertRaises(GeometryError):
            DiscreteMeasure.from_points(np.zeros((2, 2)), np.ones(3), n=1)
        measure = DiscreteMeasure.from_points(np.array([[0.1, 0.2], [0.3, 0.4]]), np.ones(2), n=1)
        np.testing.assert_array_equal(measure.base_points[:, 0], [0.1, 0.3])
        self.assertEqual((measure.size, measure.d), (2, 2))

    def test_eps_grid(self):
        """Test truncation grids.

        Ensures:
            - log_uniform has octaves * K + 1 values ending at eps_max 2^-octaves
            - Grids must be strictly decreasing
            - validate_for rejects values below 4h
        """
        grid = EpsGrid.log_uniform(1.0, 3, 8)
        self.assertEqual(len(grid), 25)
        self.assertEqual(grid.values[-1], 0.125)
        with self.assertRaises(GridError):
            EpsGrid(values=[0.5, 0.5])
        grid.validate_for(2.0**-5)
        with self.assertRaises(GridError):
            grid.validate_for(2.0**-4)


class RunManifestTests(TestCase):
    """Test suite for run manifests."""

    def test_lifecycle(self):
        """Test a complete run.

        Ensures:
            - Status moves from PENDING to IN_PROGRESS to COMPLETED
            - Progress percentage follows completed steps
            - Steps are logged with their extra context
        """
        manifest = manifest_example()
        self.assertEqual(manifest.status, RunStatusChoices.PENDING)
        manifest.mark_as_started()
        self.assertEqual(manifest.status, RunStatusChoices.IN_PROGRESS)
        manifest.log_step("measure", "sampled graph", h=0.25)
        manifest.update_progress(1)
        self.assertEqual(manifest.get_progress_percentage(), 50.0)
        manifest.mark_as_completed()
        self.assertEqual(manifest.status, RunStatusChoices.COMPLETED)
        self.assertEqual(manifest.progress_log["steps"][0]["h"], 0.25)
        self.assertIsNotNone(manifest.finished_at)

    def test_failure_is_saved(self):
        """Test a failing run with a manifest path.

        Ensures:
            - The saved JSON carries the FAILED status and the error
            - Non-terminal errors are kept separately
        """
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run" / "manifest.json"
            manifest = manifest_example(path=path)
            manifest.mark_as_started()
            manifest.log_error("alpha", "plane searches disagree")
            manifest.mark_as_failed("transport program failed")
            with open(path) as f:
                saved = json.load(f)
        self.assertEqual(saved["status"], "FAILED")
        self.assertEqual(saved["progress_log"]["error"], "transport program failed")
        self.assertEqual(saved["progress_log"]["errors"][0]["step"], "alpha")


class CheckRegistryTests(TestCase):
    """Test suite for the invariant registry."""

    def test_statuses(self):
        """Test how check outcomes are classified.

        Ensures:
            - Returning passes and InvariantError fails
            - Domain and validation errors are errors
            - fast runs skip full checks
        """
        registry = CheckRegistry()

        @registry.check(module="demo")
        def holds(seed):
            return "ok"

        @registry.check(module="demo")
        def breaks(seed):
            expect(seed > 0, "seed must be positive")

        @registry.check(module="demo")
        def crashes(seed):
            raise GridError("bad grid")

        @registry.check(module="demo")
        def rejects(seed):
            is_exponent(0.5)

        @registry.check(module="demo", suite="full")
        def slow(seed):
            return "slow"

        results = registry.run("fast", seed=0)
        self.assertEqual([r.status for r in results], ["passed", "failed", "error", "error"])
        self.assertEqual(len(registry.run("full", seed=0)), 5)
        self.assertEqual(registry.run("fast", modules=["other"]), [])
        with self.assertRaises(InvariantError):
            expect(False, "message")
