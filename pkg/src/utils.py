import json
import logging
import os
from pathlib import Path

import numpy as np
import pandas as pd
from prefect import get_run_logger
from prefect.exceptions import MissingContextError
from prefect.logging import get_logger as get_prefect_logger

from src.config import settings


def get_logger() -> logging.Logger | logging.LoggerAdapter:
    """Run logger inside a flow/task, the plain `coolsim` Prefect logger elsewhere."""
    try:
        return get_run_logger()
    except MissingContextError:
        return get_prefect_logger("coolsim")


def chunked_by_num_chunks(lst, num_chunks):
    """Yield num_chunks chunks from lst, as evenly sized as possible."""
    k, m = divmod(len(lst), num_chunks)
    for i in range(num_chunks):
        start = i * k + min(i, m)
        end = (i + 1) * k + min(i + 1, m)
        yield lst[start:end]


def ensure_directory(directory: str | os.PathLike) -> Path:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path} is not writable")
    return path


def write_table(columns: dict[str, np.ndarray], path: str | os.PathLike) -> Path:
    """Write equal-length columns as CSV with one header row and scientific floats."""
    df = pd.DataFrame({name: np.asarray(values) for name, values in columns.items()})
    df.to_csv(path, index=False, float_format=settings.COOLSIM_CSV_FLOAT_FORMAT)
    return Path(path)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if hasattr(obj, "model_dump"):
        return obj.model_dump(mode="json")
    return obj


def write_json(payload: dict, path: str | os.PathLike) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")
    return Path(path)


def generate_markdown_table(rows: list[dict]) -> str:
    if not rows:
        return ""
    headers = list(rows[0].keys())
    header_line = "| " + " | ".join(headers) + " |"
    separator_line = "| " + " | ".join(["-" * len(h) for h in headers]) + " |"
    lines = []
    for row in rows:
        cells = []
        for h in headers:
            value = row[h]
            cells.append(f"{value:.6g}" if isinstance(value, float) else str(value))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join([header_line, separator_line] + lines)
