"""Model files.

Three JSON layouts are accepted, all with row-major matrices::

    {"mbar": 1.0, "J": [[...] x3], "A": [[...] x6], "B": [[...] x6]}
    {"spherical": {"rho1": .., "rho2": .., "B1": [[...] x3], "B2": [[...] x3]}}
    {"kinematic": {"L1": [[...] x3], "L2": [[...] x3]}}

A general model may carry ``"dissipative": false`` to skip the sign check
on A. Floats are written with 17 significant digits so a dump/load round
trip is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import KinematicModel, SphericalModel, SwimmerModel, ValidationError


class ModelFileError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def _field_line(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for i, row in enumerate(text.splitlines(), start=1):
        if needle in row:
            return i
    return None


def _matrix(obj: dict, key: str, text: str, rows: int | None = None) -> np.ndarray:
    if key not in obj:
        raise ModelFileError("missing", key, None)
    try:
        M = np.array(obj[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"not a numeric matrix ({exc})", key, _field_line(text, key))
    if M.ndim == 1 and rows is not None and M.size == rows:
        M = M.reshape(rows, 1)
    if M.ndim != 2 or (rows is not None and M.shape[0] != rows):
        raise ModelFileError(f"expected {rows} rows, got shape {M.shape}", key,
                             _field_line(text, key))
    return M


def parse_model(text: str):
    """Parse a model document; returns SwimmerModel, SphericalModel or KinematicModel."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(exc.msg, None, exc.lineno) from None
    if not isinstance(doc, dict):
        raise ModelFileError("top level must be an object")
    try:
        if "spherical" in doc:
            s = doc["spherical"]
            return SphericalModel(float(s["rho1"]), float(s["rho2"]),
                                  _matrix(s, "B1", text, 3), _matrix(s, "B2", text, 3))
        if "kinematic" in doc:
            k = doc["kinematic"]
            return KinematicModel(_matrix(k, "L1", text, 3), _matrix(k, "L2", text, 3))
        for key in ("mbar", "J", "A", "B"):
            if key not in doc:
                raise ModelFileError("missing", key)
        return SwimmerModel(_matrix(doc, "A", text, 6), _matrix(doc, "B", text, 6),
                            _matrix(doc, "J", text, 3), float(doc["mbar"]),
                            dissipative=bool(doc.get("dissipative", True)))
    except KeyError as exc:
        raise ModelFileError("missing", str(exc.args[0])) from None
    except ValidationError as exc:
        key = exc.invariant.split()[0]
        raise ModelFileError(str(exc), key, _field_line(text, key)) from None


def load_model(path):
    return parse_model(Path(path).read_text(encoding="utf-8"))


def _rows(M) -> list:
    return [[float(x) for x in row] for row in np.atleast_2d(M)]


def repr_17(x: float) -> str:
    return format(float(x), ".17g")


def _dumps(doc) -> str:
    def enc(o):
        if isinstance(o, dict):
            return "{" + ", ".join(f"{json.dumps(k)}: {enc(v)}" for k, v in o.items()) + "}"
        if isinstance(o, (list, tuple)):
            return "[" + ", ".join(enc(v) for v in o) + "]"
        if isinstance(o, bool):
            return "true" if o else "false"
        if isinstance(o, float):
            return repr_17(o)
        return json.dumps(o)
    return enc(doc)


def model_to_dict(model) -> dict:
    if isinstance(model, SphericalModel):
        return {"spherical": {"rho1": model.rho1, "rho2": model.rho2,
                              "B1": _rows(model.B1), "B2": _rows(model.B2)}}
    if isinstance(model, KinematicModel):
        return {"kinematic": {"L1": _rows(model.L1), "L2": _rows(model.L2)}}
    doc = {"mbar": model.mbar, "J": _rows(model.J), "A": _rows(model.A), "B": _rows(model.B)}
    if not model.dissipative:
        doc["dissipative"] = False
    return doc


def dumps_model(model) -> str:
    return _dumps(model_to_dict(model)) + "\n"


def save_model(model, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")
