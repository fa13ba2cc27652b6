"""Shared numerics and canonical serialization helpers."""

from __future__ import annotations

import hashlib
import math

import numpy as np


def logsumexp(a, axis=None):
    """-inf-safe log-sum-exp reduction."""
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def fmt_float(v: float) -> str:
    """Canonical decimal text for a double: integral values as ints, the
    rest with 17 significant digits (exact round-trip)."""
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError("non-finite value in serialization")
    if v == math.floor(v) and abs(v) < 1e16:
        return str(int(v))
    return format(v, ".17g")


def dump_canonical(obj) -> bytes:
    """Deterministic JSON: sorted object keys, canonical float text."""
    out = []

    def emit(o):
        if o is None:
            out.append("null")
        elif o is True:
            out.append("true")
        elif o is False:
            out.append("false")
        elif isinstance(o, str):
            import json

            out.append(json.dumps(o))
        elif isinstance(o, (int, np.integer)):
            out.append(str(int(o)))
        elif isinstance(o, (float, np.floating)):
            out.append(fmt_float(float(o)))
        elif isinstance(o, np.ndarray):
            emit(o.tolist())
        elif isinstance(o, (list, tuple)):
            out.append("[")
            for i, v in enumerate(o):
                if i:
                    out.append(",")
                emit(v)
            out.append("]")
        elif isinstance(o, dict):
            out.append("{")
            for i, k in enumerate(sorted(o)):
                if i:
                    out.append(",")
                emit(str(k))
                out.append(":")
                emit(o[k])
            out.append("}")
        else:
            raise TypeError(f"cannot serialize {type(o)!r}")

    emit(obj)
    return "".join(out).encode("utf-8")


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]
