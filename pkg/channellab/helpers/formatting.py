import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Union

import numpy as np


def clean_json(value: Any) -> Any:
    """Converts numpy scalars and arrays to plain Python and non-finite floats to None."""
    if isinstance(value, dict):
        return {str(key): clean_json(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean_json(item) for item in value]
    if isinstance(value, np.ndarray):
        return [clean_json(item) for item in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


def dumps(payload: Any) -> str:
    return json.dumps(clean_json(payload), sort_keys=True, indent=2)


def write_json(path: Union[str, Path], payload: Any) -> Path:
    path = Path(path)
    path.write_text(dumps(payload) + "\n", encoding="utf-8")
    return path


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return path


def write_table(path: Union[str, Path], names: List[str], table: np.ndarray) -> Path:
    """Whitespace-separated columns with a commented header line."""
    path = Path(path)
    np.savetxt(path, table, fmt="%.17g", header=" ".join(names))
    return path


def config_hash(payload: Any) -> str:
    """sha256 of the canonical JSON form of a config payload."""
    canonical = json.dumps(clean_json(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
