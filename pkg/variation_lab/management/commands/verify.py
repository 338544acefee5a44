from pathlib import Path

from django.core.management.base import CommandError

from variation_lab.checks import register, write_summary
from variation_lab.choices import SuiteChoices
from variation_lab.management.base import EXIT_FAILURE, LabCommand


class Command(LabCommand):
    help = "Run the invariant checks of every module and write verify_summary.csv"

    def add_arguments(self, parser):
        parser.add_argument(
            "--suite",
            choices=SuiteChoices.values,
            default=SuiteChoices.FAST.value,
            help="fast runs on every call; full adds the expensive checks (default: fast)",
        )
        parser.add_argument(
            "--module",
            action="append",
            dest="modules",
            help="Only run the checks of this module (repeatable)",
        )

    def handle(self, *args, **kwargs):
        suite = kwargs["suite"]
        seed = 0 if kwargs["seed"] is None else kwargs["seed"]
        results = register.run(suite, seed=seed, modules=kwargs.get("modules"))
        if not results:
            raise CommandError(f"No checks selected for modules {kwargs.get('modules')}", returncode=EXIT_FAILURE)
        path = write_summary(results, Path(kwargs["out"]) / "verify_summary.csv")

        failures = [r for r in results if not r.ok]
        for result in failures:
            self.stderr.write(
                self.style.ERROR(
                    f"{result.module}.{result.check} [seed={result.seed}] {result.status}: {result.detail}"
                )
            )
        if failures:
            modules = ", ".join(sorted({r.module for r in failures}))
            raise CommandError(
                f"{len(failures)} of {len(results)} invariants failed in: {modules} (summary in {path})",
                returncode=EXIT_FAILURE,
            )
        self.stdout.write(self.style.SUCCESS(f"All {len(results)} invariants hold ({suite} suite). Summary: {path}"))
