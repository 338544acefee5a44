"""Exception hierarchy for the laboratory.

Domain errors raised by the package derive from `VariationLabError` so
callers (the command line in particular) can separate domain failures from
programming errors. Invalid single values raise Django's
`django.core.exceptions.ValidationError` instead, see `variation_lab.validators`.
"""

__all__ = [
    "VariationLabError",
    "ConfigError",
    "GeometryError",
    "LipschitzViolationError",
    "KernelError",
    "GridError",
    "EmptyRegionError",
    "TransportError",
    "MartingaleError",
    "InvariantError",
]


class VariationLabError(Exception):
    """Base class of all errors raised by variation_lab."""


class ConfigError(VariationLabError):
    """An experiment configuration cannot be parsed or is inconsistent."""


class GeometryError(VariationLabError):
    """Invalid graph, measure or lattice parameters."""


class LipschitzViolationError(GeometryError):
    """Sampled slopes exceed the declared Lipschitz constant."""


class KernelError(VariationLabError):
    """A kernel evaluated to a non-finite value."""


class GridError(VariationLabError):
    """A truncation grid is not strictly decreasing or is finer than the sampling allows."""


class EmptyRegionError(VariationLabError):
    """An operation needed positive mass in a region that has none."""


class TransportError(VariationLabError):
    """The transport linear program did not reach an optimum."""


class MartingaleError(VariationLabError):
    """Too many translated lattices fell on empty cells."""


class InvariantError(VariationLabError):
    """A registered invariant failed."""
