"""JSON composition specs and reproducible report serialization.

Schema 1::

    {"schema": 1,
     "factors": [{"kind": "point", "c": 1.0},
                 {"kind": "flat", "n0": 2, "C0": 1.0, "c": 1.0},
                 {"kind": "hyperboloid", "n": 2, "c": 1.0},
                 {"kind": "composite", "factors": [...], "c": 1.0}]}

``c`` is the composition weight of the factor (default 1). Unknown fields,
unknown kinds or a wrong schema number are rejected.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .calabi import CompositionSpec
from .factors import Composite, Flat, Hyperboloid, Point

SCHEMA_VERSION = 1

_FIELDS = {
    "point": {"kind", "c"},
    "flat": {"kind", "n0", "C0", "c"},
    "hyperboloid": {"kind", "n", "c"},
    "composite": {"kind", "factors", "c"},
}


class SpecError(ValueError):
    pass


def _number(obj: dict, key: str, default=None, positive=True) -> float:
    if key not in obj:
        if default is None:
            raise SpecError(f"missing field {key!r} in {obj}")
        return default
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SpecError(f"field {key!r} must be a finite number, got {value!r}")
    if positive and value <= 0:
        raise SpecError(f"field {key!r} must be positive, got {value!r}")
    return float(value)


def _integer(obj: dict, key: str, minimum: int) -> int:
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise SpecError(f"field {key!r} must be an integer >= {minimum}, got {value!r}")
    return value


def _factor_from(obj: Any):
    if not isinstance(obj, dict):
        raise SpecError(f"factor must be an object, got {obj!r}")
    kind = obj.get("kind")
    if kind not in _FIELDS:
        raise SpecError(f"unknown factor kind {kind!r}")
    extra = set(obj) - _FIELDS[kind]
    if extra:
        raise SpecError(f"unknown fields {sorted(extra)} for kind {kind!r}")
    weight = _number(obj, "c", 1.0)
    if kind == "point":
        return Point(), weight
    if kind == "flat":
        return Flat(_integer(obj, "n0", 1), _number(obj, "C0", 1.0)), weight
    if kind == "hyperboloid":
        return Hyperboloid(_integer(obj, "n", 1)), weight
    return Composite(_spec_from_factors(obj.get("factors"))), weight


def _spec_from_factors(items: Any) -> CompositionSpec:
    if not isinstance(items, list) or len(items) < 2:
        raise SpecError("'factors' must be a list of at least two factors")
    pairs = [_factor_from(item) for item in items]
    return CompositionSpec(tuple(f for f, _ in pairs), tuple(w for _, w in pairs))


def spec_from_dict(data: Any) -> CompositionSpec:
    if not isinstance(data, dict):
        raise SpecError("spec must be a JSON object")
    extra = set(data) - {"schema", "factors"}
    if extra:
        raise SpecError(f"unknown top-level fields {sorted(extra)}")
    if data.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise SpecError(f"unsupported schema {data.get('schema')!r}; expected {SCHEMA_VERSION}")
    return _spec_from_factors(data.get("factors"))


def _factor_to(f, weight: float) -> dict:
    if isinstance(f, Point):
        return {"kind": "point", "c": weight * f.c}
    if isinstance(f, Flat):
        return {"kind": "flat", "n0": f.n0, "C0": f.C0, "c": weight}
    if isinstance(f, Hyperboloid):
        return {"kind": "hyperboloid", "n": f.n, "c": weight}
    inner = spec_to_dict(f.inner)
    return {"kind": "composite", "factors": inner["factors"], "c": weight}


def spec_to_dict(spec: CompositionSpec) -> dict:
    return {"schema": SCHEMA_VERSION, "factors": [_factor_to(f, w) for f, w in zip(spec.factors, spec.weights)]}


def load_spec(path: str | Path) -> CompositionSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON in {path}: {exc}") from exc
    try:
        return spec_from_dict(data)
    except SpecError:
        raise
    except ValueError as exc:
        raise SpecError(str(exc)) from exc


def save_spec(spec: CompositionSpec, path: str | Path) -> None:
    Path(path).write_text(dumps(spec_to_dict(spec)) + "\n")


def _format(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if math.isnan(obj):
            return '"nan"'
        if math.isinf(obj):
            return '"inf"' if obj > 0 else '"-inf"'
        text = f"{obj:.17g}"
        return text if any(ch in text for ch in ".en") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if hasattr(obj, "tolist"):
        return _format(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_format(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_format(v, indent, level + 1) for v in obj) + "]"
        items = [f"{pad}{_format(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):
        return _format(obj.item(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON with every float written to 17 significant digits.

    Non-finite floats become the strings "nan", "inf", "-inf" so the output
    stays valid JSON.
    """
    return _format(obj, indent, 0)
