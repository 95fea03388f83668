"""Writers and readers for experiment artifacts: CSV tables, summary JSON, plot data and binary dumps."""

import csv
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from wavelab.models import Summary

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

OPERATOR_MAGIC = b"WEYLOP01"
STATE_MAGIC = b"WAVEST01"
_OPERATOR_HEADER = struct.Struct("<8sqqd")
_STATE_HEADER = struct.Struct("<8sqqdd")


def format_value(value: Any) -> str:
    """Floats with 17 significant digits so reruns are byte-identical."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(column, "")) for column in columns])
    logger.debug(f"Wrote {path}")
    return path


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def write_plot_data(path: PathLike, xs: Sequence[float], ys: Sequence[float]) -> Path:
    """Two whitespace-separated columns ``x y``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for x, y in zip(xs, ys):
            handle.write(f"{format_value(float(x))} {format_value(float(y))}\n")
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_summary(path: PathLike, summary: Summary) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _jsonable(summary.model_dump())
    payload["passed"] = summary.passed
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2, ensure_ascii=False)
        handle.write("\n")
    return path


def read_summary(path: PathLike) -> Dict[str, Any]:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


# ---------------------------------------------------------------------------
# Binary dumps
# ---------------------------------------------------------------------------


def write_operator_dump(path: PathLike, matrix: np.ndarray, n1: int, n2: int, eps: float) -> Path:
    """Header (magic, n1, n2, eps) then the matrix row-major as little-endian complex128."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(_OPERATOR_HEADER.pack(OPERATOR_MAGIC, n1, n2, eps))
        handle.write(np.ascontiguousarray(matrix, dtype="<c16").tobytes())
    return path


def read_operator_dump(path: PathLike) -> Tuple[np.ndarray, int, int, float]:
    data = Path(path).read_bytes()
    magic, n1, n2, eps = _OPERATOR_HEADER.unpack_from(data)
    if magic != OPERATOR_MAGIC:
        raise ValueError(f"{path} is not an operator dump")
    values = np.frombuffer(data, dtype="<c16", offset=_OPERATOR_HEADER.size)
    size = int(np.sqrt(values.size))
    return values.reshape(size, size).astype(complex), n1, n2, eps


def write_state_dump(path: PathLike, field: np.ndarray, eps: float, t: float) -> Path:
    """Header (magic, n1, n2, eps, t) then the three fields row-major as little-endian complex128."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _, n1, n2 = field.shape
    with open(path, "wb") as handle:
        handle.write(_STATE_HEADER.pack(STATE_MAGIC, n1, n2, eps, t))
        handle.write(np.ascontiguousarray(field, dtype="<c16").tobytes())
    return path


def read_state_dump(path: PathLike) -> Tuple[np.ndarray, float, float]:
    data = Path(path).read_bytes()
    magic, n1, n2, eps, t = _STATE_HEADER.unpack_from(data)
    if magic != STATE_MAGIC:
        raise ValueError(f"{path} is not a wave state dump")
    field = np.frombuffer(data, dtype="<c16", offset=_STATE_HEADER.size).reshape(3, n1, n2)
    return field.astype(complex), eps, t
