"""Deterministic text serialization for model, metrics and CSV files.

Floats in JSON documents are written as ``%.16e`` (17 significant digits),
which round-trips any finite float64 bit-exactly; CSV cells use ``%.17g``
for the same guarantee in a more compact form. The JSON emitter preserves
key order and always produces identical bytes for identical values.
"""

from __future__ import annotations

import json
import math

import numpy as np


def fmt_g(x: float) -> str:
    """Compact float text that still round-trips float64 exactly."""
    return "%.17g" % x


def _emit(obj, out, indent, level):
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(pad_in + json.dumps(str(k)) + ": ")
            _emit(v, out, indent, level + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        if isinstance(obj, np.ndarray):
            obj = obj.tolist()
        flat = not any(isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj)
        if flat:
            out.append("[")
            for i, v in enumerate(obj):
                _emit(v, out, indent, level)
                if i < len(obj) - 1:
                    out.append(", ")
            out.append("]")
        else:
            out.append("[\n")
            for i, v in enumerate(obj):
                out.append(pad_in)
                _emit(v, out, indent, level + 1)
                out.append(",\n" if i < len(obj) - 1 else "\n")
            out.append(pad + "]")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError(f"cannot serialize non-finite value {x!r}")
        out.append("%.16e" % x)
    elif obj is None:
        out.append("null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    out: list[str] = []
    _emit(obj, out, indent, 0)
    out.append("\n")
    return "".join(out)


def dump(obj, path, indent: int = 2) -> None:
    text = dumps(obj, indent)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)
