"""JSON persistence for IC databanks, control limits and chart state.

Floats are written with ``repr`` (Python's shortest round-trip form), keys
are sorted and no timestamps are stored, so equal inputs give byte-identical
files. Each document carries a fingerprint of the content it depends on.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .curves import SampledCurve, TimeGrid
from .errors import IncompatibleError, ParseError
from .ewma import ControlLimits, EwmaState
from .frechet import FrechetMeanResult, ParamBank
from .sim import SimParams

DATABANK_FORMAT = "frechet-spc-databank"
LIMITS_FORMAT = "frechet-spc-limits"
STATE_FORMAT = "frechet-spc-state"
VERSION = 1


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=True) + "\n"


def write_json(doc, path) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", line=exc.lineno) from None


def fingerprint(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _floats(a) -> list:
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def _check_format(doc: dict, expected: str):
    if doc.get("format") != expected:
        raise ParseError(f"expected a {expected} document, got {doc.get('format')!r}")
    if doc.get("version") != VERSION:
        raise IncompatibleError(f"unsupported {expected} version {doc.get('version')!r}")


def databank_to_dict(result: FrechetMeanResult, meta: dict | None = None) -> dict:
    body = {
        "grid_points": result.f0.grid.m,
        "f0": _floats(result.f0.values),
        "bank": {"gamma": _floats(result.bank.gamma), "xi": _floats(result.bank.xi)},
        "frechet_variance": float(result.frechet_variance),
        "ic_params": [p.as_dict() for p in result.ic_params],
        "iterations": int(result.iterations),
        "converged": bool(result.converged),
        "objective_trace": _floats(result.objective_trace),
        "weights": _floats(result.weights),
        "curves": [_floats(c.values) for c in result.curves],
        "residual_norms": _floats(result.residual_norms),
        "meta": meta or {},
    }
    return {"format": DATABANK_FORMAT, "version": VERSION, "fingerprint": fingerprint(body), **body}


def databank_from_dict(doc: dict) -> tuple[FrechetMeanResult, dict]:
    _check_format(doc, DATABANK_FORMAT)
    try:
        grid = TimeGrid(doc["grid_points"])
        result = FrechetMeanResult(
            f0=SampledCurve(grid, doc["f0"]),
            bank=ParamBank(doc["bank"]["gamma"], doc["bank"]["xi"]),
            frechet_variance=float(doc["frechet_variance"]),
            ic_params=[SimParams(**p) for p in doc["ic_params"]],
            iterations=int(doc["iterations"]),
            objective_trace=list(doc["objective_trace"]),
            converged=bool(doc["converged"]),
            curves=[SampledCurve(grid, c) for c in doc["curves"]],
            weights=np.asarray(doc["weights"], dtype=float),
            residual_norms=list(doc["residual_norms"]),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"databank is missing or has a malformed field: {exc}") from None
    return result, doc.get("meta", {})


def limits_to_dict(limits: ControlLimits, databank_fingerprint: str, config: dict | None = None) -> dict:
    body = {
        "deviance_ucl": float(limits.deviance_ucl),
        "param_limits": {k: _floats(v) for k, v in limits.param_limits.items()},
        "level": float(limits.level),
        "databank": databank_fingerprint,
        "config": config or {},
    }
    return {"format": LIMITS_FORMAT, "version": VERSION, "fingerprint": fingerprint(body), **body}


def limits_from_dict(doc: dict, databank_fingerprint: str | None = None) -> ControlLimits:
    _check_format(doc, LIMITS_FORMAT)
    if databank_fingerprint is not None and doc.get("databank") != databank_fingerprint:
        raise IncompatibleError("control limits were computed from a different databank")
    try:
        return ControlLimits(
            float(doc["deviance_ucl"]),
            {k: (float(v[0]), float(v[1])) for k, v in doc["param_limits"].items()},
            float(doc["level"]),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError(f"limits document has a malformed field: {exc}") from None


def state_to_dict(state: EwmaState) -> dict:
    return {
        "format": STATE_FORMAT,
        "version": VERSION,
        "step": state.step,
        "theta_tilde": state.theta_tilde.as_dict(),
        "d_tilde": float(state.d_tilde),
        "param_ewma": _floats(state.param_ewma),
        "grid_points": state.f_tilde.grid.m,
    }


def state_from_dict(doc: dict, f0: SampledCurve) -> EwmaState:
    """Rebuild a state; ``f_tilde`` is recomputed from ``theta_tilde`` and ``f0``."""
    from .sim import apply_deformation

    _check_format(doc, STATE_FORMAT)
    if doc["grid_points"] != f0.grid.m:
        raise IncompatibleError(f"state grid has {doc['grid_points']} points, f0 has {f0.grid.m}")
    theta = SimParams(**doc["theta_tilde"])
    return EwmaState(int(doc["step"]), theta, apply_deformation(f0, theta), float(doc["d_tilde"]),
                     tuple(doc["param_ewma"]))
