"""JSON wire formats for matrices, systems, and decompositions.

Matrices serialize as {"rows": int, "cols": int, "re": [...], "im": [...]}
row-major; system files as {"dim": int, "spectrum": [int...],
"eigenbasis": <matrix JSON or "computational">}.  These formats are the
CLI's inputs for states and generators.
"""
from __future__ import annotations

from typing import Any

import numpy as np

from .errors import ParseError
from .ki import KIDecomposition
from .qtypes import DensityMatrix, SystemSpec

__all__ = [
    "matrix_to_json",
    "matrix_from_json",
    "system_to_json",
    "system_from_json",
    "ki_decomposition_to_json",
]


def matrix_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "re": [float(x) for x in m.real.ravel()],
        "im": [float(x) for x in m.imag.ravel()],
    }


def matrix_from_json(obj: Any) -> np.ndarray:
    if not isinstance(obj, dict):
        raise ParseError(f"matrix JSON must be an object, got {type(obj).__name__}")
    missing = {"rows", "cols", "re", "im"} - set(obj)
    if missing:
        raise ParseError(f"matrix JSON missing fields: {sorted(missing)}")
    unknown = set(obj) - {"rows", "cols", "re", "im"}
    if unknown:
        raise ParseError(f"matrix JSON has unknown fields: {sorted(unknown)}")
    rows, cols = int(obj["rows"]), int(obj["cols"])
    re, im = list(obj["re"]), list(obj["im"])
    if rows <= 0 or cols <= 0:
        raise ParseError("matrix dimensions must be positive")
    if len(re) != rows * cols or len(im) != rows * cols:
        raise ParseError(
            f"matrix entries ({len(re)} re, {len(im)} im) do not fill {rows}x{cols}"
        )
    m = np.array(re, dtype=np.float64) + 1j * np.array(im, dtype=np.float64)
    if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
        raise ParseError("matrix entries must be finite")
    return m.reshape(rows, cols)


def system_to_json(sys: SystemSpec) -> dict:
    basis: Any = "computational"
    if np.abs(sys.eigenbasis - np.eye(sys.dim)).max() > 0:
        basis = matrix_to_json(sys.eigenbasis)
    return {"dim": sys.dim, "spectrum": list(sys.spectrum), "eigenbasis": basis}


def system_from_json(obj: Any) -> SystemSpec:
    if not isinstance(obj, dict):
        raise ParseError(f"system JSON must be an object, got {type(obj).__name__}")
    missing = {"dim", "spectrum"} - set(obj)
    if missing:
        raise ParseError(f"system JSON missing fields: {sorted(missing)}")
    unknown = set(obj) - {"dim", "spectrum", "eigenbasis"}
    if unknown:
        raise ParseError(f"system JSON has unknown fields: {sorted(unknown)}")
    dim = int(obj["dim"])
    spectrum = obj["spectrum"]
    if len(spectrum) != dim:
        raise ParseError(f"spectrum has {len(spectrum)} entries for dim {dim}")
    for s in spectrum:
        if int(s) != s:
            raise ParseError(f"spectrum entry {s!r} is not an integer")
    spectrum = [int(s) for s in spectrum]
    basis_field = obj.get("eigenbasis", "computational")
    if basis_field == "computational":
        basis = np.eye(dim, dtype=np.complex128)
    else:
        basis = matrix_from_json(basis_field)
        if basis.shape != (dim, dim):
            raise ParseError(f"eigenbasis shape {basis.shape} != ({dim}, {dim})")
    h = (basis * np.array(spectrum, dtype=np.complex128)) @ np.conj(basis.T)
    try:
        return SystemSpec(dim, h, tuple(spectrum), basis)
    except Exception as exc:
        raise ParseError(f"invalid system definition: {exc}") from exc


def density_from_json(obj: Any) -> DensityMatrix:
    m = matrix_from_json(obj)
    try:
        return DensityMatrix(m)
    except Exception as exc:
        raise ParseError(f"matrix is not a valid state: {exc}") from exc


def ki_decomposition_to_json(dec: KIDecomposition) -> dict:
    return {
        "blocks": [
            {
                "dims": [blk.m, blk.k],
                "projector": matrix_to_json(blk.projector),
                "omega": matrix_to_json(blk.omega.mat),
            }
            for blk in dec.blocks
        ],
        "probs": {
            label: [float(p) for p in dec.probs[x]]
            for x, label in enumerate(dec.labels)
        },
    }
