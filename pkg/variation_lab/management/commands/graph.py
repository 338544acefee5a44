import json
from pathlib import Path

from django.core.management.base import CommandError

from variation_lab.choices import GraphFamilyChoices
from variation_lab.exceptions import ConfigError, GeometryError
from variation_lab.geometry import build_graph, inspect_table, read_graph_csv, write_graph_csv
from variation_lab.management.base import EXIT_FAILURE, LabCommand
from variation_lab.models import VCube


def parse_param(text: str):
    """``key=value`` with a JSON (or plain string) value."""
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"graph parameter must look like key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


class Command(LabCommand):
    help = "Write a sampled graph table (gen) or summarize one (inspect)"

    def add_arguments(self, parser):
        parser.add_argument("action", choices=["gen", "inspect"], help="gen writes a CSV, inspect reads one")
        parser.add_argument("target", type=str, help="Graph family for gen, CSV path for inspect")
        parser.add_argument("--n", type=int, default=1, help="Domain dimension (default: 1)")
        parser.add_argument("--d", type=int, default=None, help="Ambient dimension (default: n + 1)")
        parser.add_argument("--h", type=float, default=2.0**-6, help="Sampling step (default: 2^-6)")
        parser.add_argument("--side", type=float, default=1.0, help="Side of the base cube [0, side)^n (default: 1)")
        parser.add_argument(
            "--param",
            action="append",
            default=[],
            help="Family parameter as key=value, e.g. --param slope=2 (repeatable)",
        )

    def handle(self, *args, **kwargs):
        if kwargs["action"] == "gen":
            self.generate(**kwargs)
        else:
            self.inspect(**kwargs)

    def generate(self, target, n, d, h, side, param, out, **kwargs):
        d = n + 1 if d is None else d
        params = dict(parse_param(p) for p in param)
        graph = build_graph(target, n=n, d=d, **params)
        base = VCube.from_corner([0.0] * n, side)
        try:
            path = write_graph_csv(graph, base, h, Path(out) / f"graph_{GraphFamilyChoices(target).value}.csv")
        except OSError as e:
            raise CommandError(f"Error writing graph table: {e}", returncode=EXIT_FAILURE)
        self.stdout.write(self.style.SUCCESS(f'Successfully wrote "{target}" graph (lip={graph.lip:g}) to {path}'))

    def inspect(self, target, n, **kwargs):
        try:
            table = read_graph_csv(target)
        except OSError as e:
            raise CommandError(f"Error reading graph table '{target}': {e}", returncode=EXIT_FAILURE)
        if table.shape[1] <= n:
            raise GeometryError(f"{target}: {table.shape[1]} columns cannot hold a graph with n={n}")
        for key, value in inspect_table(table, n).items():
            self.stdout.write(f"{key}: {value!r}")
