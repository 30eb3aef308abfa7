"""
Reading and writing the CLI's files: observation and grid CSVs, chain CSVs,
JSON artifacts and the run configuration.
"""

import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.schema import RunConfig
from src.errors import MalformedInputError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
MISSING = "-"


def _read_table(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise MalformedInputError("file not found", path=str(path))
    try:
        return pd.read_csv(path, dtype=str, skip_blank_lines=False, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise MalformedInputError("empty file, expected a header row", str(path), 1) from exc
    except pd.errors.ParserError as exc:
        raise MalformedInputError(f"cannot parse CSV: {exc}", str(path)) from exc
    except UnicodeDecodeError as exc:
        raise MalformedInputError("file is not UTF-8", str(path)) from exc


def _numeric(frame: pd.DataFrame, path: str | Path) -> pd.DataFrame:
    """Every cell as float; the first bad cell is reported with its file line."""
    values = pd.DataFrame(
        {c: pd.to_numeric(frame[c].str.strip(), errors="coerce") for c in frame.columns}
    )
    bad = values.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        cell = frame.iat[row, col]
        raise MalformedInputError(
            f"column {frame.columns[col]!r}: {cell!r} is not a number",
            str(path),
            int(row) + 2,
        )
    return values.astype(float)


def _check_columns(frame: pd.DataFrame, path: str | Path, with_y: bool) -> int:
    columns = [str(c).strip() for c in frame.columns]
    frame.columns = columns
    inputs = [c for c in columns if c != "y"]
    if with_y and "y" not in columns:
        raise MalformedInputError("missing column 'y'", str(path), 1)
    if inputs not in (["x1"], ["x1", "x2"]):
        raise MalformedInputError(
            f"expected input columns x1[,x2], got {inputs}", str(path), 1
        )
    return len(inputs)


def read_observations(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """(design (n, d), y (n,)) from a CSV with columns x1[,x2],y; n may be 0."""
    frame = _read_table(path)
    dim = _check_columns(frame, path, with_y=True)
    values = _numeric(frame, path)
    inputs = [f"x{i + 1}" for i in range(dim)]
    logger.info(f"Read {len(values)} observations from {path}")
    return values[inputs].to_numpy().reshape(-1, dim), values["y"].to_numpy()


def read_points(path: str | Path) -> np.ndarray:
    """(n, d) points from a CSV with columns x1[,x2]; a `y` column is ignored."""
    frame = _read_table(path)
    dim = _check_columns(frame, path, with_y=False)
    values = _numeric(frame, path)
    return values[[f"x{i + 1}" for i in range(dim)]].to_numpy().reshape(-1, dim)


def read_chain(path: str | Path) -> np.ndarray:
    """(S, M) knot vectors from a chain CSV; columns other than xi_* are ignored."""
    frame = _read_table(path)
    columns = [c for c in frame.columns if str(c).startswith("xi_")]
    if not columns:
        raise MalformedInputError("no xi_* columns in chain file", str(path), 1)
    values = _numeric(frame[columns], path)
    return values.to_numpy()


def write_frame(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(
        path, index=False, float_format=FLOAT_FORMAT, na_rep=MISSING, lineterminator="\n"
    )
    logger.info(f"Wrote {path}")
    return path


def _json_ready(value):
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_ready(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(data: dict, path: str | Path) -> Path:
    """Non-finite floats become null."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_json_ready(data), f, indent=2, allow_nan=False)
        f.write("\n")
    logger.info(f"Wrote {path}")
    return path


def read_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise MalformedInputError("file not found", path=str(path))
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"invalid JSON: {exc.msg}", str(path), exc.lineno) from exc
    if not isinstance(data, dict):
        raise MalformedInputError("expected a JSON object at the top level", str(path), 1)
    return data


def load_config(path: str | Path | None) -> RunConfig:
    """Validated run configuration; all defaults when `path` is None."""
    if path is None:
        return RunConfig()
    data = read_json(path)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise MalformedInputError(
            f"invalid config ({exc.error_count()} errors), first at {where}: {first['msg']}",
            str(path),
        ) from exc
