"""Locale-independent CSV and JSON report writers."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from pathlib import Path

import numpy as np
import scipy

from . import __version__


def format_float(v: float) -> str:
    """Shortest round-trip decimal; "-inf", "inf" and "nan" spelled out."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def csv_text(header: list, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: list, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows))
    return path


def dict_rows_csv(path, rows: list) -> Path:
    """Rows of dicts; the header is the union of keys in first-seen order."""
    header: list = []
    for row in rows:
        header.extend(k for k in row if k not in header)
    return write_csv(path, header, ([row.get(k) for k in header] for row in rows))


def _json_value(v, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if v is None or isinstance(v, (bool, np.bool_)):
        return json.dumps(None if v is None else bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        # JSON has no infinities; non-finite values travel as strings.
        return f"{f:.17g}" if math.isfinite(f) else json.dumps(format_float(f))
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_json_value(x, indent, level + 1)}"
                 for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple)):
        if not v:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple, np.ndarray)) for x in v):
            return "[" + ", ".join(_json_value(x, indent, level + 1) for x in v) + "]"
        return "[\n" + ",\n".join(pad + _json_value(x, indent, level + 1) for x in v) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def jsonable(v):
    """Plain Python data with non-finite floats spelled as strings."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [jsonable(x) for x in (v.tolist() if isinstance(v, np.ndarray) else v)]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else format_float(v)
    return v


def json_text(obj, indent: int = 2) -> str:
    """JSON with every float printed to 17 significant digits."""
    return _json_value(obj, indent, 0) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json_text(obj))
    return path


def versions() -> dict:
    return {"ldp_lab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}
