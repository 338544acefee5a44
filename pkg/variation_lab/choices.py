"""Enumerated choices used by configurations, results and the command line.

Each class pairs a stable string value (what appears in JSON configs and CSV
tables) with a human readable label. They are Django `TextChoices`, so they
can also back model or form fields in a Django project.

Categories:
    - Geometry: graph families
    - Operators: kernels, truncation modes, functionals
    - Experiments: experiment kinds, test functions, packing terms, suites
    - Runs: run status

Example:
    from variation_lab.choices import GraphFamilyChoices

    GraphFamilyChoices.is_valid("sawtooth")  # True
    GraphFamilyChoices.get_label("corner")  # "Single corner"
"""

from typing import Dict, Optional, Set

from django.db import models

GEOMETRY_CHOICES = [
    "GraphFamilyChoices",
]

OPERATOR_CHOICES = [
    "KernelChoices",
    "TruncationModeChoices",
    "FunctionalChoices",
]

EXPERIMENT_CHOICES = [
    "ExperimentChoices",
    "TestFunctionChoices",
    "PackingTermChoices",
    "SuiteChoices",
    "RunStatusChoices",
]

__all__ = [
    *GEOMETRY_CHOICES,
    *OPERATOR_CHOICES,
    *EXPERIMENT_CHOICES,
]


class ChoicesMixin:
    """Mixin providing lookup helpers for Django choice classes.

    Example:
        class MyChoices(ChoicesMixin, models.TextChoices):
            OPTION_A = "a", "Option A"

        MyChoices.is_valid("a")  # True
        MyChoices.get_label("a")  # "Option A"
    """

    @classmethod
    def get_values(cls) -> Set[str]:
        """Return the set of all valid choice values."""
        return {choice[0] for choice in cls.choices}

    @classmethod
    def get_labels(cls) -> Dict[str, str]:
        """Return mapping of values to their display labels."""
        return {choice[0]: choice[1] for choice in cls.choices}

    @classmethod
    def is_valid(cls, value: str) -> bool:
        """Check if a value is valid for this choice set.

        Args:
            value (str): The choice value to validate.

        Returns:
            bool: True if the value is valid, False otherwise.
        """
        return value in cls.get_values()

    @classmethod
    def get_label(cls, value: str) -> Optional[str]:
        """Get display label for a value."""
        return cls.get_labels().get(value)


# Geometry
class GraphFamilyChoices(ChoicesMixin, models.TextChoices):
    """Built-in Lipschitz graph families.

    Attributes:
        FLAT (str): A identically zero
        SAWTOOTH (str): Triangle wave of slope +-slope and given period
        CORNER (str): slope * |x_1 - at|, a single corner
        MULTISCALE (str): Random dyadic sign pattern of slope +-lip
        FROM_SAMPLES (str): Piecewise-linear interpolation of a table
    """

    FLAT = "flat", "Flat"
    SAWTOOTH = "sawtooth", "Sawtooth"
    CORNER = "corner", "Single corner"
    MULTISCALE = "multiscale", "Multiscale"
    FROM_SAMPLES = "from_samples", "From samples"


# Operators
class KernelChoices(ChoicesMixin, models.TextChoices):
    """Odd Calderon-Zygmund kernels available to experiments."""

    CAUCHY = "cauchy", "Cauchy component"
    RIESZ = "riesz", "Riesz component"


class TruncationModeChoices(ChoicesMixin, models.TextChoices):
    """How a singular integral is truncated at scale epsilon."""

    SMOOTH = "smooth", "Smooth truncation"
    SHARP = "sharp", "Sharp truncation"


class FunctionalChoices(ChoicesMixin, models.TextChoices):
    """Functional applied to a sampled family before taking norms."""

    VARIATION = "variation", "rho-variation"
    OSCILLATION = "oscillation", "Oscillation"


# Experiments
class ExperimentChoices(ChoicesMixin, models.TextChoices):
    """Experiments runnable through the ``run`` command."""

    TRANSFORM = "transform", "Transform families"
    VARIATION = "variation", "Variation functionals"
    COEFFS = "coeffs", "Alpha and beta coefficients"
    PACKING = "packing", "Packing sums"
    MARTINGALE = "martingale", "Dyadic martingale"
    SWEEP = "sweep", "Refinement sweep"
    ENDPOINTS = "endpoints", "Endpoint diagnostics"


class TestFunctionChoices(ChoicesMixin, models.TextChoices):
    """Kinds of test function generated on a measure's support."""

    __test__ = False

    INDICATOR = "indicator", "Indicator of a v-cube"
    H1_ATOM = "h1_atom", "H1 atom"
    RADEMACHER = "rademacher", "Random signs"
    BOUNDED_RANDOM = "bounded_random", "Uniform in [-1, 1]"


class PackingTermChoices(ChoicesMixin, models.TextChoices):
    """Terms that may enter a packing sum."""

    BETA2_SQ = "beta2_sq", "beta_2 squared"
    ALPHA_SQ = "alpha_sq", "alpha squared"


class SuiteChoices(ChoicesMixin, models.TextChoices):
    """Invariant suites run by ``verify``."""

    FAST = "fast", "Fast"
    FULL = "full", "Full"

    @classmethod
    def includes(cls, suite: str, check_suite: str) -> bool:
        """Return True if running ``suite`` should run a check tagged ``check_suite``."""
        return suite == cls.FULL or check_suite == cls.FAST


class RunStatusChoices(ChoicesMixin, models.TextChoices):
    """Run lifecycle states.

    Attributes:
        PENDING (str): Run is configured but not started
        IN_PROGRESS (str): Run is executing
        COMPLETED (str): Run finished and wrote its outputs
        FAILED (str): Run stopped on an error
    """

    PENDING = "PENDING", "Pending"
    IN_PROGRESS = "IN_PROGRESS", "In Progress"
    COMPLETED = "COMPLETED", "Completed"
    FAILED = "FAILED", "Failed"

    @classmethod
    def is_terminal_state(cls, status: str) -> bool:
        """Check if the status is in a terminal state (completed or failed)."""
        return status in {cls.COMPLETED, cls.FAILED}
