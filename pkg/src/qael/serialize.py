"""Canonical JSON: sorted keys, 17 significant digits, complex as ``[re, im]``.

The standard encoder prints floats with ``repr``, which is shortest
round-trip rather than fixed width, so this module has its own small writer.
"""

from __future__ import annotations

import json
import math

import numpy as np


def to_jsonable(obj):
    """Convert numpy arrays, complex numbers and tuples to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    if x == 0:
        return "0.0"
    s = format(x, ".17g")
    if "e" not in s and "." not in s:
        s += ".0"
    return s


def _write(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = sorted(obj.items())
        for k, (key, val) in enumerate(items):
            out.append(pad + json.dumps(key, ensure_ascii=False) + ": ")
            _write(val, indent, level + 1, out)
            out.append(",\n" if k < len(items) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(not isinstance(v, (dict, list)) for v in obj):
            out.append("[")
            for k, v in enumerate(obj):
                _write(v, indent, level, out)
                if k < len(obj) - 1:
                    out.append(", ")
            out.append("]")
            return
        out.append("[\n")
        for k, v in enumerate(obj):
            out.append(pad)
            _write(v, indent, level + 1, out)
            out.append(",\n" if k < len(obj) - 1 else "\n")
        out.append(end + "]")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_float(obj))
    elif obj is None:
        out.append("null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    out = []
    _write(to_jsonable(obj), indent, 0, out)
    return "".join(out) + "\n"


def reduced_model_dict(model, tol=None) -> dict:
    from .config import DEFAULT

    gen = model.generator(tol=tol or DEFAULT)
    return {
        "slow_dim": model.slow_dim,
        "epsilon": model.epsilon,
        "order": model.order,
        "is_trivial": model.is_trivial,
        "S0": model.S0,
        "H_s1": model.H_s1,
        "A_ops": list(model.A_ops),
        "B_ops": list(model.B_ops),
        "C1": model.C1,
        "generator": {"hamiltonian": gen.hamiltonian, "jumps": list(gen.jumps)},
        "residuals": dict(model.residuals),
        "notes": list(model.notes),
    }
