import io
import json
import tempfile
from pathlib import Path
from unittest import TestCase, mock

import numpy as np
from django.core.management import call_command, get_commands
from django.core.management.base import CommandError

from variation_lab import __version__
from variation_lab.management import main
from variation_lab.management.base import EXIT_CONFIG, EXIT_FAILURE, LabCommand
from variation_lab.utility import read_csv

TRANSFORM_CONFIG = {
    "experiment": "transform",
    "graph": {"family": "sawtooth", "params": {"slope": 1.0, "period": 0.25}},
    "eps_grid": {"eps_max": 1.0, "octaves": 2, "per_octave": 4},
    "evaluation_points": 8,
    "resolutions": [0.03125],
}


class CommandTestCase(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)
        self.stdout, self.stderr = io.StringIO(), io.StringIO()

    def tearDown(self):
        self.tmp.cleanup()

    def call(self, name, *args):
        call_command(name, *args, "--out", str(self.out), stdout=self.stdout, stderr=self.stderr)

    def assertExits(self, returncode, name, *args):
        with self.assertRaises(CommandError) as ctx:
            self.call(name, *args)
        self.assertEqual(ctx.exception.returncode, returncode, str(ctx.exception))
        return ctx.exception

    def write_config(self, document, name="config.json"):
        path = self.out / name
        path.write_text(json.dumps(document))
        return str(path)


class EntryPointTests(CommandTestCase):
    """Test suite for command discovery and dispatch."""

    def test_commands_are_discovered(self):
        """Test subcommand discovery.

        Ensures:
            - verify, run and graph are registered under the variation_lab app
        """
        commands = get_commands()
        for name in ("verify", "run", "graph"):
            self.assertEqual(commands.get(name), "variation_lab")

    def test_unknown_command(self):
        """Test dispatch of an unknown subcommand from the command line.

        Ensures:
            - The exit status is 1
        """
        with mock.patch("sys.stderr", new_callable=io.StringIO) as stderr:
            with self.assertRaises(SystemExit) as ctx:
                main(["variation-lab", "frobnicate"])
        self.assertEqual(ctx.exception.code, EXIT_FAILURE)
        self.assertIn("Unknown command", stderr.getvalue())

    def test_command_error_exit_status(self):
        """Test the exit status of a failing command from the command line.

        Ensures:
            - --jobs 0 exits with 2
        """
        with mock.patch("sys.stderr", new_callable=io.StringIO) as stderr:
            with self.assertRaises(SystemExit) as ctx:
                main(["variation-lab", "graph", "gen", "flat", "--jobs", "0", "--out", str(self.out)])
        self.assertEqual(ctx.exception.code, EXIT_CONFIG)
        self.assertIn("--jobs must be at least 1", stderr.getvalue())

    def test_invalid_jobs(self):
        """Test the worker count guard.

        Ensures:
            - --jobs 0 raises CommandError with status 2
        """
        self.assertExits(EXIT_CONFIG, "graph", "gen", "flat", "--jobs", "0")

    def test_shared_options(self):
        """Test the options every command adds.

        Ensures:
            - --seed, --jobs and --out are parsed
            - The version is the package version
        """
        command = LabCommand()
        options = command.create_parser("variation-lab", "graph").parse_args(["--seed", "4", "--jobs", "2"])
        self.assertEqual((options.seed, options.jobs), (4, 2))
        self.assertTrue(options.out)
        self.assertEqual(command.get_version(), __version__)


class VerifyCommandTests(CommandTestCase):
    """Test suite for the verify command."""

    def test_fast_suite_passes(self):
        """Test the fast invariants of two modules.

        Ensures:
            - The command succeeds
            - The summary lists every check as passed
        """
        self.call("verify", "--suite", "fast", "--module", "geometry", "--module", "kernels")
        lines = (self.out / "verify_summary.csv").read_text().splitlines()
        self.assertEqual(lines[0].split(",")[:4], ["module", "check", "suite", "status"])
        self.assertEqual(len(lines), 6)
        self.assertTrue(all(",passed," in line for line in lines[1:]))

    def test_unknown_module(self):
        """Test a module without checks.

        Ensures:
            - The exit status is 1
        """
        self.assertExits(EXIT_FAILURE, "verify", "--module", "nothing")

    def test_unknown_suite(self):
        """Test a suite outside the choices.

        Ensures:
            - The parser rejects it
        """
        with self.assertRaises(CommandError):
            self.call("verify", "--suite", "slow")


class GraphCommandTests(CommandTestCase):
    """Test suite for the graph command."""

    def test_gen_flat(self):
        """Test writing a flat graph table.

        Ensures:
            - Heights are all 0 with one row per node
        """
        self.call("graph", "gen", "flat", "--h", "0.125")
        header, table = read_csv(self.out / "graph_flat.csv")
        self.assertEqual(header, ["x1", "a1"])
        self.assertEqual(table.shape, (9, 2))
        self.assertTrue(np.all(table[:, 1] == 0))

    def test_inspect_sawtooth(self):
        """Test inspecting a generated sawtooth.

        Ensures:
            - The reported Lipschitz constant is the slope
        """
        self.call("graph", "gen", "sawtooth", "--param", "slope=1", "--param", "period=0.25")
        self.stdout.truncate(0)
        self.stdout.seek(0)
        self.call("graph", "inspect", str(self.out / "graph_sawtooth.csv"))
        summary = dict(line.split(": ") for line in self.stdout.getvalue().splitlines())
        self.assertAlmostEqual(float(summary["lip"]), 1.0, delta=1e-9)

    def test_bad_parameters(self):
        """Test invalid graph requests.

        Ensures:
            - A malformed --param exits with 2
            - An invalid family parameter exits with 2 naming the field
            - A missing table exits with 1
        """
        self.assertExits(EXIT_CONFIG, "graph", "gen", "sawtooth", "--param", "slope")
        error = self.assertExits(EXIT_CONFIG, "graph", "gen", "sawtooth", "--param", "slope=-1")
        self.assertIn("slope", str(error))
        self.assertExits(EXIT_FAILURE, "graph", "inspect", str(self.out / "missing.csv"))


class RunCommandTests(CommandTestCase):
    """Test suite for the run command."""

    def test_invalid_configs(self):
        """Test configurations that fail to load.

        Ensures:
            - Unknown keys, rho <= 2 and missing files exit with 2
        """
        self.assertExits(EXIT_CONFIG, "run", self.write_config({"rhoo": 3}))
        self.assertExits(EXIT_CONFIG, "run", self.write_config({"rho": 2}))
        self.assertExits(EXIT_CONFIG, "run", str(self.out / "missing.json"))

    def test_diagnostic_flag(self):
        """Test rho <= 2 in diagnostic mode.

        Ensures:
            - The run succeeds and the manifest records diagnostic mode
        """
        config = self.write_config({**TRANSFORM_CONFIG, "rho": 2})
        self.call("run", config, "--diagnostic", "--jobs", "1")
        manifest = json.loads((self.out / "manifest.json").read_text())
        self.assertTrue(manifest["config"]["diagnostic"])
        self.assertEqual(manifest["status"], "COMPLETED")

    def test_runs_are_byte_identical(self):
        """Test reproducibility through the command line.

        Ensures:
            - Two runs with the same seed write identical tables
        """
        config = self.write_config(TRANSFORM_CONFIG)
        contents = []
        for jobs in ("1", "2"):
            self.call("run", config, "--seed", "3", "--jobs", jobs)
            tables = ("transform_families.csv", "principal_values.csv")
            contents.append([(self.out / name).read_bytes() for name in tables])
        self.assertEqual(contents[0], contents[1])
