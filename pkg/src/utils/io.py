import csv
import io
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from src.utils.errors import ConfigError


def read_json(path: Path) -> Any:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"{path}: file not found") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON at line {e.lineno} column {e.colno}") from e


def dump_json(doc: Any) -> str:
    return json.dumps(doc, indent=2) + "\n"


def read_csv_matrix(path: Path) -> np.ndarray:
    """
    Numeric CSV as an (N, d) array

    A first row that does not parse as numbers is taken as a header. Ragged
    rows, non-numeric cells and empty files are config errors.
    """
    try:
        with open(path, encoding="utf-8", newline="") as f:
            rows = [row for row in csv.reader(f) if row and any(cell.strip() for cell in row)]
    except FileNotFoundError as e:
        raise ConfigError(f"{path}: file not found") from e

    if rows and not _is_numeric(rows[0]):
        rows = rows[1:]
    if not rows:
        raise ConfigError(f"{path}: no sample rows")

    width = len(rows[0])
    for index, row in enumerate(rows):
        if len(row) != width:
            raise ConfigError(f"{path}: row {index + 1} has {len(row)} values, expected {width}")
        if not _is_numeric(row):
            raise ConfigError(f"{path}: row {index + 1} is not numeric")
    return np.asarray(rows, dtype=float)


def _is_numeric(row: Sequence[str]) -> bool:
    try:
        [float(cell) for cell in row]
    except ValueError:
        return False
    return True


def dump_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buffer.getvalue()


def write_outputs(out_dir: Path, files: dict) -> list:
    """Write {name: text} under out_dir; returns the written paths"""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        path = out_dir / name
        path.write_text(text, encoding="utf-8")
        written.append(str(path))
    return written
