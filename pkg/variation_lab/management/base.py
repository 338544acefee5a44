"""Shared base class of the laboratory's management commands.

`LabCommand` is a Django `BaseCommand` that adds the options every command
takes (``--seed``, ``--jobs``, ``--out``) and turns domain errors escaping
``handle`` into a `CommandError` carrying the exit status: configuration and
validation errors exit with 2, invariant failures and other domain errors
with 1.
"""

import logging
import os
import sys

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from variation_lab import __version__
from variation_lab.conf import DEFAULT_OUT
from variation_lab.exceptions import ConfigError, VariationLabError
from variation_lab.utility import get_setting

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

LOG_LEVELS = {0: logging.ERROR, 1: logging.WARNING, 2: logging.INFO, 3: logging.DEBUG}


def configure_logging(verbosity: int) -> None:
    """Send the package's log records to stderr at the level of ``--verbosity``."""
    root = logging.getLogger("variation_lab")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(LOG_LEVELS.get(verbosity, logging.DEBUG))


def describe(error: ValidationError) -> str:
    """One line naming every invalid field and its messages."""
    if hasattr(error, "error_dict"):
        return "; ".join(f"{field}: {' '.join(messages)}" for field, messages in error.message_dict.items())
    return " ".join(error.messages)


class LabCommand(BaseCommand):
    requires_system_checks = []

    def get_version(self) -> str:
        return __version__

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.add_argument("--seed", type=int, default=None, help="Seed for every random choice (default: 0)")
        parser.add_argument(
            "--jobs",
            type=int,
            default=get_setting("JOBS", os.cpu_count() or 1),
            help="Worker threads (default: VARIATION_LAB_JOBS or the number of cores)",
        )
        parser.add_argument(
            "--out",
            default=get_setting("OUT", DEFAULT_OUT),
            help=f"Output directory (default: VARIATION_LAB_OUT or {DEFAULT_OUT})",
        )
        return parser

    def execute(self, *args, **options):
        if options["jobs"] < 1:
            raise CommandError("--jobs must be at least 1", returncode=EXIT_CONFIG)
        configure_logging(options["verbosity"])
        try:
            return super().execute(*args, **options)
        except ConfigError as e:
            raise CommandError(f"Invalid configuration: {e}", returncode=EXIT_CONFIG) from e
        except ValidationError as e:
            raise CommandError(f"Invalid value: {describe(e)}", returncode=EXIT_CONFIG) from e
        except VariationLabError as e:
            raise CommandError(f"{type(e).__name__}: {e}", returncode=EXIT_FAILURE) from e
