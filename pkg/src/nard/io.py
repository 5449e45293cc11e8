"""Matrix CSV files, model JSON documents and run manifests."""

from __future__ import annotations

import csv
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List

import numpy as np

from .errors import DataError, EmptyInputError, ParseError
from .model import AlphaVector, ArdState, TraceRecord
from .synth import support

W_SUPPORT_TOL = 1e-4


def _version():
    from . import __version__
    return __version__


def load_matrix(path):
    """Read a header-less, comma-separated matrix, one row per line.

    Raises :class:`ParseError` with the 1-based line (and column) of the
    first ragged row or bad cell, and :class:`EmptyInputError` for a file
    with no rows.
    """
    try:
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise EmptyInputError(f"{path}: no data")
    rows = []
    width = None
    for lineno, cells in enumerate(csv.reader(lines), start=1):
        if not cells or (len(cells) == 1 and not cells[0].strip()):
            raise ParseError(f"{path}: line {lineno} is empty", line=lineno)
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(f"{path}: line {lineno} has {len(cells)} values, expected {width}", line=lineno)
        row = []
        for col, cell in enumerate(cells, start=1):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"{path}: line {lineno}, column {col}: not a number: {cell.strip()!r}",
                                 line=lineno, column=col) from None
            if not math.isfinite(value):
                raise ParseError(f"{path}: line {lineno}, column {col}: value is not finite",
                                 line=lineno, column=col)
            row.append(value)
        rows.append(row)
    return np.array(rows, dtype=float)


def save_matrix(path, mat):
    """Write ``mat`` as CSV using shortest round-trip float text."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    try:
        with open(path, "w", newline="") as fh:
            for row in mat:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from exc


@dataclass
class RunManifest:
    """Enough information to repeat a command: its arguments, resolved configuration and paths."""

    command: str
    config: Dict = field(default_factory=dict)
    input_paths: List[str] = field(default_factory=list)
    output_paths: List[str] = field(default_factory=list)
    argv: List[str] = field(default_factory=list)
    started: str = ""
    finished: str = ""
    version: str = ""
    python: str = ""

    @classmethod
    def start(cls, command, argv=None, config=None):
        return cls(command=command, config=dict(config or {}), argv=list(argv or []), started=_now(),
                   version=_version(), python=f"{platform.python_implementation()} {sys.version.split()[0]}")

    def finish(self):
        self.finished = _now()
        return self

    def to_dict(self):
        return {
            "command": self.command,
            "config": _jsonable(self.config),
            "input_paths": list(self.input_paths),
            "output_paths": list(self.output_paths),
            "argv": list(self.argv),
            "started": self.started,
            "finished": self.finished,
            "version": self.version,
            "python": self.python,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d.get(k, v) for k, v in cls("").__dict__.items()})

    def write(self, path):
        _write_json(path, self.to_dict())


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return obj


def _write_json(path, doc):
    text = json.dumps(doc, indent=1, sort_keys=False, allow_nan=False)
    try:
        with open(path, "w") as fh:
            fh.write(text)
            fh.write("\n")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from exc


def model_document(state: ArdState, manifest=None):
    doc = {
        "method": state.method,
        "lambda": float(state.lam),
        "iter": int(state.iter),
        "converged": bool(state.converged),
        "alpha": state.alpha.to_list(),
        "active_indices": [int(i) for i in state.alpha.active],
        "W": state.w,
        "V": state.v,
        "Omega": state.omega,
        "support": {
            "W": support(state.w, W_SUPPORT_TOL),
            "W_tol": W_SUPPORT_TOL,
            "Omega": support(state.omega, 0.0, precision=True),
        },
        "trace": [r.to_dict() for r in state.trace],
        "manifest": manifest.to_dict() if isinstance(manifest, RunManifest) else manifest,
    }
    return _jsonable(doc)


def save_model(state: ArdState, path, manifest=None):
    """Write the fitted model as JSON.

    Pruned alpha entries are the string ``"inf"``; floats use the shortest
    round-trip representation so finite values survive a save/load cycle
    exactly. ``manifest`` may be a :class:`RunManifest` or its dict form
    (as returned by :func:`load_model`). ``sigma`` is not stored.
    """
    _write_json(path, model_document(state, manifest))


def load_model(path):
    """Inverse of :func:`save_model`: returns ``(ArdState, manifest dict or None)``."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    try:
        w = np.array(doc["W"], dtype=float)
        state = ArdState(
            alpha=AlphaVector.from_list(doc["alpha"]),
            v=np.array(doc["V"], dtype=float),
            omega=np.array(doc["Omega"], dtype=float),
            w=w,
            mu=w.copy(),
            sigma=None,
            iter=int(doc["iter"]),
            trace=[TraceRecord.from_dict(r) for r in doc["trace"]],
            converged=bool(doc["converged"]),
            method=doc["method"],
            lam=float(doc["lambda"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: not a model document ({exc})") from exc
    return state, doc.get("manifest")
