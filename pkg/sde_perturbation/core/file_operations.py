"""File operations module for SDE Perturbation Lab: report and table output."""

import csv
import json
import logging
import os
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from send2trash import send2trash

from ..utils.helpers import format_float

logger = logging.getLogger(__name__)


def remove_stale_outputs(output_dir: str, names: Sequence[str], permanent: bool = False) -> int:
    """Clear the report, table and config echo of a previous run from ``output_dir``.

    Outputs go to the trash unless ``permanent``. An output that cannot be
    removed is logged and left for the new run to overwrite.

    Returns:
        Number of files removed
    """
    removed = 0
    for name in names:
        path = os.path.join(output_dir, name)
        if not os.path.isfile(path):
            continue
        try:
            if permanent:
                os.remove(path)
            else:
                send2trash(path)
        except OSError as e:
            logger.warning("Could not remove stale output %s: %s", path, e)
            continue
        logger.debug("Removed stale output %s", path)
        removed += 1
    return removed


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if value is None:
        return ''
    return str(value)


def write_table(path: str, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> int:
    """Write a comma-separated table with a header row and LF line endings.

    Floats are written with 17 significant digits; missing cells are empty.

    Returns:
        Number of data rows written
    """
    count = 0
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
            count += 1
    return count


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # JSON has no inf/nan; keep them readable
        return value if np.isfinite(value) else str(value)
    return value


def write_report(path: str, report: Mapping[str, Any]) -> None:
    """Write the run report as one JSON document."""
    with open(path, 'w', newline='\n', encoding='utf-8') as f:
        json.dump(_jsonable(report), f, indent=2, sort_keys=False)
        f.write('\n')
