# utils/files.py
"""Atomic whole-file writes and stable JSON."""
from pathlib import Path
from typing import Any, Union
import json
import os
import tempfile

import numpy as np

from utils.errors import IoError, ParseError

PathLike = Union[str, Path]


def _default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return obj.as_posix()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def dumps_stable(data: Any) -> str:
    """Sorted keys, fixed indent and trailing newline (byte-stable across runs)."""
    return json.dumps(data, sort_keys=True, indent=2, default=_default, allow_nan=False) + "\n"


def write_atomic(path: PathLike, data: bytes) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}")
    return path


def write_json(path: PathLike, data: Any) -> Path:
    return write_atomic(path, dumps_stable(data).encode("utf-8"))


def write_text(path: PathLike, text: str) -> Path:
    return write_atomic(path, text.encode("utf-8"))


def read_json(path: PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e.msg}", e.lineno, e.colno)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}")
