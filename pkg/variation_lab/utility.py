import csv
import math
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, List, Sequence

import numpy as np
from django.conf import settings

from variation_lab.constants import FLOAT_DIGITS

SETTING_PREFIX = "VARIATION_LAB_"


def get_setting(name: str, default: Any) -> Any:
    """Read a ``VARIATION_LAB_*`` Django setting, falling back to ``default``.

    Args:
        name (str): Setting name without the prefix, e.g. ``"JOBS"``.
        default (Any): Value used when settings are not configured or lack the name.

    Returns:
        Any: The setting value.
    """
    if not settings.configured:
        return default
    return getattr(settings, SETTING_PREFIX + name, default)


def exact_sum(values: Iterable[float]) -> float:
    """Correctly rounded sum; exactly cancelling terms give exactly zero."""
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def format_float(value: float) -> str:
    """Format a float with 17 significant digits so it round-trips."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), f".{FLOAT_DIGITS}g")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a table, formatting floats with `format_float`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(v) if isinstance(v, (float, np.floating)) else v for v in row]
            )
    return path


def read_csv(path: Path) -> tuple:
    """Read a numeric table written by `write_csv`; returns ``(header, array)``."""
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    return header, np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def parallel_map(func: Callable, items: Iterable, jobs: int = 1) -> List:
    """Apply ``func`` to every item, in order, on up to ``jobs`` threads."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(func, items))
