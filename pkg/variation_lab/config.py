"""Loading and validation of experiment configurations.

Configurations are JSON documents of schema version 1. Every section is
checked for unknown keys, so a typo fails fast instead of silently falling
back to a default. Omitted keys take the defaults of `ExperimentConfig`.

Example:
    {
        "schema_version": 1,
        "experiment": "sweep",
        "graph": {"family": "sawtooth", "params": {"slope": 1.0, "period": 0.25}},
        "kernel": {"id": "cauchy", "component": 1},
        "rho": 3,
        "p": 2,
        "resolutions": [0.015625, 0.0078125]
    }
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np

from variation_lab.choices import (
    ExperimentChoices,
    FunctionalChoices,
    GraphFamilyChoices,
    KernelChoices,
    PackingTermChoices,
    TestFunctionChoices,
)
from variation_lab.constants import DEFAULT_ALPHA_POINTS, SCHEMA_VERSION
from variation_lab.exceptions import ConfigError, GeometryError
from variation_lab.geometry import read_graph_csv
from variation_lab.models import ExperimentConfig, MartingaleConfig, VCube
from variation_lab.validators import (
    is_choice,
    is_exponent,
    is_finite,
    is_non_negative,
    is_positive,
    is_positive_int,
    is_strictly_decreasing,
    no_unknown_keys,
    validation_error,
)

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {
    "schema_version",
    "experiment",
    "graph",
    "kernel",
    "rho",
    "p",
    "functional",
    "eps_grid",
    "evaluation_points",
    "resolutions",
    "base",
    "test_functions",
    "windows",
    "martingale",
    "packing",
    "lambdas",
    "alpha_points",
    "seed",
    "diagnostic",
}
GRAPH_KEYS = {"family", "params", "n", "d", "support_box"}
KERNEL_KEYS = {"id", "component"}
EPS_GRID_KEYS = {"eps_max", "octaves", "per_octave"}
CUBE_KEYS = {"center", "side"}
MARTINGALE_KEYS = {"grid_points", "m_min", "m_max", "tail_radius"}
PACKING_KEYS = {"max_depth", "terms", "c2", "c3"}


def _section(document: Mapping[str, Any], key: str, allowed: set) -> Dict[str, Any]:
    value = document.get(key, {})
    if not isinstance(value, dict):
        raise validation_error("expected an object", key)
    return no_unknown_keys(value, allowed, key)


def _integer(value: Any, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise validation_error(f"expected an integer, got {value!r}", field)
    return value


def _alpha_points(value: Any) -> Optional[int]:
    if value is None:
        return None
    value = is_positive_int(value, "alpha_points")
    if value < 2:
        raise validation_error(f"needs at least 2 cells per cube side, got {value}", "alpha_points")
    return value


def _cube(value: Any, field: str, n: int) -> VCube:
    if not isinstance(value, dict):
        raise validation_error("expected an object with center and side", field)
    no_unknown_keys(value, CUBE_KEYS, field)
    center = [is_finite(c, f"{field}.center") for c in value.get("center", [0.5] * n)]
    if len(center) != n:
        raise validation_error(f"needs {n} coordinates, got {len(center)}", f"{field}.center")
    return VCube(center=np.asarray(center), side=is_positive(value.get("side", 1.0), f"{field}.side"))


def _graph_params(family: str, params: Any, root: Optional[Path]) -> Dict[str, Any]:
    if not isinstance(params, dict):
        raise validation_error("expected an object", "graph.params")
    params = dict(params)
    if family == GraphFamilyChoices.FROM_SAMPLES:
        table = params.get("table")
        if isinstance(table, str):
            path = Path(table) if root is None or Path(table).is_absolute() else root / table
            try:
                params["table"] = read_graph_csv(path)
            except (OSError, GeometryError) as e:
                raise validation_error(f"cannot read sample table: {e}", "graph.params.table")
        elif table is not None:
            params["table"] = np.asarray(table, dtype=float)
    return params


def parse_config(
    document: Mapping[str, Any],
    diagnostic: bool = False,
    seed: Optional[int] = None,
    root: Optional[Path] = None,
) -> ExperimentConfig:
    """Validate a configuration mapping into an `ExperimentConfig`.

    Args:
        document (Mapping): Parsed JSON.
        diagnostic (bool): Allow rho <= 2 regardless of the document.
        seed (int, optional): Overrides the document's seed.
        root (Path, optional): Directory relative table paths are resolved against.

    Raises:
        ConfigError: For a wrong schema version.
        ValidationError: For any invalid or unknown field, naming it.
    """
    if not isinstance(document, Mapping):
        raise ConfigError("configuration must be a JSON object")
    no_unknown_keys(document, TOP_LEVEL_KEYS)
    version = document.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")

    graph = _section(document, "graph", GRAPH_KEYS)
    n = is_positive_int(graph.get("n", 1), "graph.n")
    d = is_positive_int(graph.get("d", n + 1), "graph.d")
    if d <= n:
        raise validation_error(f"must exceed n={n}, got {d}", "graph.d")
    family = is_choice(graph.get("family", GraphFamilyChoices.SAWTOOTH), GraphFamilyChoices, "graph.family")
    support_box = _cube(graph["support_box"], "graph.support_box", n) if graph.get("support_box") else None

    kernel = _section(document, "kernel", KERNEL_KEYS)
    eps = _section(document, "eps_grid", EPS_GRID_KEYS)
    base = _section(document, "base", CUBE_KEYS)
    base_cube = _cube(base, "base", n) if base else VCube(center=np.full(n, 0.5), side=1.0)
    martingale = _section(document, "martingale", MARTINGALE_KEYS)
    packing = _section(document, "packing", PACKING_KEYS)

    windows = []
    for k, window in enumerate(document.get("windows", ExperimentConfig.windows)):
        if not isinstance(window, (list, tuple)) or len(window) != 2:
            raise validation_error("each window is a [start, ratio] pair", f"windows[{k}]")
        windows.append((is_positive(window[0], f"windows[{k}]"), is_positive(window[1], f"windows[{k}]")))

    defaults = MartingaleConfig()
    config = ExperimentConfig(
        experiment=is_choice(document.get("experiment", ExperimentChoices.SWEEP), ExperimentChoices, "experiment"),
        family=family,
        family_params=_graph_params(family, graph.get("params", {}), root),
        n=n,
        d=d,
        support_box=support_box,
        kernel=is_choice(kernel.get("id", KernelChoices.CAUCHY), KernelChoices, "kernel.id"),
        component=is_positive_int(kernel.get("component", 1), "kernel.component"),
        rho=is_exponent(document.get("rho", 3.0), "rho"),
        p=is_exponent(document.get("p", 2.0), "p"),
        functional=is_choice(document.get("functional", FunctionalChoices.VARIATION), FunctionalChoices, "functional"),
        eps_max=is_positive(eps.get("eps_max", 1.0), "eps_grid.eps_max"),
        octaves=is_positive_int(eps.get("octaves", 4), "eps_grid.octaves"),
        per_octave=is_positive_int(eps.get("per_octave", 8), "eps_grid.per_octave"),
        evaluation_points=is_positive_int(document.get("evaluation_points", 16), "evaluation_points"),
        resolutions=tuple(
            is_strictly_decreasing(document.get("resolutions", ExperimentConfig.resolutions), "resolutions")
        ),
        base_center=tuple(base_cube.center.tolist()),
        base_side=base_cube.side,
        test_functions=tuple(
            is_choice(kind, TestFunctionChoices, "test_functions")
            for kind in document.get("test_functions", [TestFunctionChoices.INDICATOR])
        ),
        windows=tuple(windows),
        martingale=MartingaleConfig(
            grid_points=is_positive_int(martingale.get("grid_points", defaults.grid_points), "martingale.grid_points"),
            m_min=_integer(martingale.get("m_min", defaults.m_min), "martingale.m_min"),
            m_max=_integer(martingale.get("m_max", defaults.m_max), "martingale.m_max"),
            tail_radius=is_positive(martingale.get("tail_radius", defaults.tail_radius), "martingale.tail_radius"),
        ),
        max_depth=int(is_non_negative(packing.get("max_depth", 3), "packing.max_depth")),
        terms=tuple(
            is_choice(term, PackingTermChoices, "packing.terms")
            for term in packing.get("terms", [PackingTermChoices.BETA2_SQ, PackingTermChoices.ALPHA_SQ])
        ),
        c2=is_positive(packing.get("c2", 1.0), "packing.c2"),
        c3=is_positive(packing.get("c3", 1.0), "packing.c3"),
        lambdas=tuple(is_positive(lam, "lambdas") for lam in document.get("lambdas", ExperimentConfig.lambdas)),
        alpha_points=_alpha_points(document.get("alpha_points", DEFAULT_ALPHA_POINTS)),
        seed=_integer(document.get("seed", 0) if seed is None else seed, "seed"),
        diagnostic=bool(document.get("diagnostic", False)) or diagnostic,
    )
    if not config.test_functions:
        raise validation_error("must not be empty", "test_functions")
    logger.debug("loaded %s configuration for %s graph", config.experiment, config.family)
    return config


def load_config(
    source: Union[str, Path, Mapping[str, Any]],
    diagnostic: bool = False,
    seed: Optional[int] = None,
) -> ExperimentConfig:
    """Read a JSON configuration file (or an already parsed mapping).

    Raises:
        ConfigError: If the file cannot be read or parsed, or fails validation.
    """
    if isinstance(source, Mapping):
        return parse_config(source, diagnostic, seed)
    path = Path(source)
    try:
        with open(path) as f:
            document = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}")
    return parse_config(document, diagnostic, seed, root=path.parent)
