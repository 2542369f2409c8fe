"""Reading and writing model files.

A model file is a JSON document::

    {
      "schema_version": "1",
      "states": ["s0", "s1"],
      "rate_model": {"kind": "interval", "lower": [[0, "1"], ["1", 0]], "upper": [[0, "2"], ["3", 0]]}
    }

Rates are JSON numbers, decimal strings or exact rationals "p/q". Strings are
parsed exactly; JSON numbers go through float and get the float row-sum
tolerance.
"""

from __future__ import annotations

import hashlib
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import cast

from .gambles import StateSpace
from .rates import (
    ExactRow,
    IntervalModel,
    InvalidRateModelError,
    LowerRateModel,
    PreciseModel,
    RateInput,
    RowSetModel,
)

JSONPrimitive = str | int | float | bool | None
JSONValue = JSONPrimitive | dict[str, "JSONValue"] | list["JSONValue"]
JSONDict = dict[str, JSONValue]

SCHEMA_VERSION = "1"
KINDS = ("precise", "interval", "rowsets")


class ModelFileError(ValueError):
    """Raised for documents that do not describe a valid model; `path` points into the document."""

    path: str

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


def _require_dict(value: JSONValue, path: str) -> JSONDict:
    if not isinstance(value, dict):
        raise ModelFileError(path, "expected an object")
    return value


def _require_list(value: JSONValue, path: str) -> list[JSONValue]:
    if not isinstance(value, list):
        raise ModelFileError(path, "expected a list")
    return value


def _rate(value: JSONValue, path: str) -> RateInput:
    if isinstance(value, bool) or value is None:
        raise ModelFileError(path, f"expected a rate, got {json.dumps(value)}")
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ModelFileError(path, f"invalid rate literal {value!r}") from None
    if isinstance(value, float) and not math.isfinite(value):
        raise ModelFileError(path, f"rates must be finite, got {value!r}")
    if isinstance(value, (int, float)):
        return value
    raise ModelFileError(path, "expected a number or a rate string")


def _matrix(value: JSONValue, path: str, n: int) -> list[list[RateInput]]:
    rows = _require_list(value, path)
    if len(rows) != n:
        raise ModelFileError(path, f"expected {n} rows, got {len(rows)}")
    result: list[list[RateInput]] = []
    for x, row_value in enumerate(rows):
        row = _require_list(row_value, f"{path}[{x}]")
        if len(row) != n:
            raise ModelFileError(f"{path}[{x}]", f"expected {n} entries, got {len(row)}")
        result.append([_rate(entry, f"{path}[{x}][{y}]") for y, entry in enumerate(row)])
    return result


def _entry_path(space: StateSpace, base: str, exc: InvalidRateModelError) -> str:
    if exc.entry is None:
        return base
    x, y = (space.index(label) for label in exc.entry)
    return f"{base}[{x}][{y}]"


def _states(value: JSONValue) -> StateSpace:
    labels = _require_list(value, "states")
    for idx, label in enumerate(labels):
        if not isinstance(label, str) or not label:
            raise ModelFileError(f"states[{idx}]", "state labels must be nonempty strings")
    try:
        return StateSpace(tuple(cast(list[str], labels)))
    except ValueError as exc:
        raise ModelFileError("states", str(exc)) from None


def model_from_document(document: JSONValue) -> LowerRateModel:
    root = _require_dict(document, "$")
    version = root.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ModelFileError("schema_version", f"unsupported schema version {json.dumps(version)}")
    space = _states(root.get("states"))
    n = space.size
    payload = _require_dict(root.get("rate_model"), "rate_model")
    kind = payload.get("kind")
    if kind == "precise":
        rows = _matrix(payload.get("matrix"), "rate_model.matrix", n)
        try:
            return PreciseModel.from_matrix(space, rows)
        except InvalidRateModelError as exc:
            raise ModelFileError(_entry_path(space, "rate_model.matrix", exc), str(exc)) from None
    if kind == "interval":
        lower = _matrix(payload.get("lower"), "rate_model.lower", n)
        upper = _matrix(payload.get("upper"), "rate_model.upper", n)
        try:
            return IntervalModel.from_bounds(space, lower, upper)
        except InvalidRateModelError as exc:
            raise ModelFileError(_entry_path(space, f"rate_model.{exc.bound or 'lower'}", exc), str(exc)) from None
    if kind == "rowsets":
        sets = _require_list(payload.get("rows"), "rate_model.rows")
        if len(sets) != n:
            raise ModelFileError("rate_model.rows", f"expected row sets for {n} states, got {len(sets)}")
        candidates: list[list[list[RateInput]]] = []
        for x, entry in enumerate(sets):
            path = f"rate_model.rows[{x}]"
            rows_x = _require_list(entry, path)
            if not rows_x:
                raise ModelFileError(path, f"state '{space.label(x)}' needs at least one candidate row")
            parsed: list[list[RateInput]] = []
            for k, row_value in enumerate(rows_x):
                row = _require_list(row_value, f"{path}[{k}]")
                if len(row) != n:
                    raise ModelFileError(f"{path}[{k}]", f"expected {n} entries, got {len(row)}")
                parsed.append([_rate(value, f"{path}[{k}][{y}]") for y, value in enumerate(row)])
            candidates.append(parsed)
        for x, rows_x in enumerate(candidates):
            for k, row in enumerate(rows_x):
                try:
                    _ = PreciseModel.from_matrix(space, _embed_row(n, x, row))
                except InvalidRateModelError as exc:
                    column = space.index(exc.entry[1]) if exc.entry is not None else x
                    raise ModelFileError(f"rate_model.rows[{x}][{k}][{column}]", str(exc)) from None
        return RowSetModel.from_rows(space, candidates)
    raise ModelFileError("rate_model.kind", f"expected one of {', '.join(KINDS)}, got {json.dumps(kind)}")


def _embed_row(n: int, x: int, row: list[RateInput]) -> list[list[RateInput]]:
    """A matrix with `row` at position x and zero rows elsewhere, for validating one candidate."""
    rows: list[list[RateInput]] = [[0] * n for _ in range(n)]
    rows[x] = row
    return rows


def parse_model(source: Path | str) -> LowerRateModel:
    """Parse a model from a file path or from JSON text."""
    if isinstance(source, Path):
        try:
            text = source.read_text(encoding="utf-8")
        except OSError as exc:
            raise ModelFileError(str(source), f"cannot read model file ({exc.strerror})") from None
    else:
        text = source
    try:
        document = cast(JSONValue, json.loads(text))
    except json.JSONDecodeError as exc:
        raise ModelFileError("$", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return model_from_document(document)


def _literal(value: Fraction) -> str:
    return str(value)


def _rows(rows: tuple[ExactRow, ...]) -> list[JSONValue]:
    return [[_literal(rate) for rate in row] for row in rows]


def model_document(model: LowerRateModel) -> JSONDict:
    payload: JSONDict
    if isinstance(model, PreciseModel):
        payload = {"kind": "precise", "matrix": _rows(model.matrix.entries)}
    elif isinstance(model, IntervalModel):
        payload = {"kind": "interval", "lower": _rows(model.lower), "upper": _rows(model.upper)}
    elif isinstance(model, RowSetModel):
        payload = {"kind": "rowsets", "rows": [_rows(candidates) for candidates in model.rows]}
    else:
        raise TypeError(f"Cannot serialize model of type {type(model).__name__}.")
    return {
        "schema_version": SCHEMA_VERSION,
        "states": list(model.space.labels),
        "rate_model": payload,
    }


def serialize_model(model: LowerRateModel) -> str:
    """Canonical JSON text; every rate is written as an exact "p/q" or integer string."""
    return json.dumps(model_document(model), indent=2, sort_keys=True) + "\n"


def model_digest(model: LowerRateModel) -> str:
    canonical = json.dumps(model_document(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
