from pathlib import Path

from variation_lab import __version__
from variation_lab.config import load_config
from variation_lab.harness import run_experiment
from variation_lab.management.base import LabCommand
from variation_lab.models import RunManifest


class Command(LabCommand):
    help = "Run the experiment described by a JSON configuration and write its tables and manifest.json"

    def add_arguments(self, parser):
        parser.add_argument("config", type=str, help="Path of the JSON configuration")
        parser.add_argument(
            "--diagnostic",
            action="store_true",
            help="Allow rho <= 2, outside the range the bounds are claimed for (default: False)",
        )

    def handle(self, *args, **kwargs):
        config = load_config(kwargs["config"], diagnostic=kwargs["diagnostic"], seed=kwargs["seed"])
        out = Path(kwargs["out"])
        manifest = RunManifest(
            config=config.snapshot(),
            version=__version__,
            seed=config.seed,
            path=out / "manifest.json",
        )
        paths = run_experiment(config, out, manifest, jobs=kwargs["jobs"])
        for path in paths:
            self.stdout.write(f"  {path}")
        self.stdout.write(
            self.style.SUCCESS(f'Successfully ran "{config.experiment}" experiment: {len(paths)} tables in {out}')
        )
