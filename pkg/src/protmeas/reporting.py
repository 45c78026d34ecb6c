"""CSV and JSON emission with a fixed number format."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _num(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        # JSON has no literal for these
        return json.dumps(str(x))
    return format(x, ".17g")


def dumps(obj, indent: int | None = 2, _level: int = 0) -> str:
    """``json.dumps`` equivalent that writes every float with 17 significant digits."""
    pad = "" if indent is None else "\n" + " " * (indent * (_level + 1))
    end = "" if indent is None else "\n" + " " * (indent * _level)
    sep = "," if indent is None else ","
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.generic)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v, None) for v in obj) + "]"
        items = [f"{pad}{dumps(v, indent, _level + 1)}" for v in obj]
        return "[" + sep.join(items) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence], config_digest: str) -> Path:
    """UTF-8, comma-delimited; first line is ``# config_sha256=<digest>``, then the header."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_sha256={config_digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_csv(path: Path) -> tuple[str, list[str], list[list[str]]]:
    """Return ``(comment, header, rows)`` of a file written by :func:`write_csv`."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        comment = fh.readline().rstrip("\n")
        reader = csv.reader(fh)
        header = next(reader)
        return comment, header, list(reader)


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj) + "\n", encoding="utf-8")
    return path
