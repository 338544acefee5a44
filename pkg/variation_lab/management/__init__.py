"""Command-line entry point.

The subcommands are Django management commands in
``variation_lab/management/commands``::

    variation-lab verify --suite fast
    variation-lab run sweep.json --jobs 4 --out results
    variation-lab graph gen sawtooth --h 0.015625 --out graphs

`main` configures Django (see `variation_lab.conf`) and hands the arguments to
Django's command-line utility. A Django project listing ``variation_lab`` in
``INSTALLED_APPS`` gets the same commands through ``manage.py``.
"""

import sys
from typing import List, Optional

from django.core.management import execute_from_command_line

from variation_lab.conf import configure

PROG_NAME = "variation-lab"


def main(argv: Optional[List[str]] = None) -> None:
    argv = list(sys.argv if argv is None else argv)
    configure()
    execute_from_command_line([PROG_NAME, *argv[1:]])
