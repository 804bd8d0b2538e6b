"""Binary on-disk container for feature matrices and descriptor sets.

Layout: one JSON header line (UTF-8, terminated by a newline), then the
matrix as little-endian 32-bit floats in row-major order. Containers of
kind "DESC" append a parallel per-row location array in the same float
format. The header always carries "rows", "cols", "kind" and "levels"
(one integer tag per column, or per row for "DESC"); writers may add
extra keys.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

KINDS = ("P", "F", "DESC")


def write_matrix(
    path,
    matrix: np.ndarray,
    kind: str,
    levels,
    extra: dict | None = None,
    locations: np.ndarray | None = None,
) -> None:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {matrix.shape}")
    levels = [int(v) for v in levels]
    expected = matrix.shape[0] if kind == "DESC" else matrix.shape[1]
    if len(levels) != expected:
        raise ValueError(f"need {expected} level tags, got {len(levels)}")
    if kind == "DESC":
        if locations is None:
            raise ValueError("DESC container requires a location array")
        locations = np.ascontiguousarray(locations, dtype="<f4")
        if locations.shape != (matrix.shape[0],):
            raise ValueError("locations must hold one value per descriptor row")
    elif locations is not None:
        raise ValueError("locations are only valid for DESC containers")

    header = {
        "rows": int(matrix.shape[0]),
        "cols": int(matrix.shape[1]),
        "kind": kind,
        "levels": levels,
    }
    if extra:
        header.update(extra)
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n").encode())
        fh.write(matrix.tobytes())
        if kind == "DESC":
            fh.write(locations.tobytes())


def read_matrix(path) -> tuple[dict, np.ndarray, np.ndarray | None]:
    """Returns (header, matrix, locations); locations is None unless kind DESC."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        rows, cols = header["rows"], header["cols"]
        body = fh.read(rows * cols * 4)
        if len(body) != rows * cols * 4:
            raise ValueError(f"truncated container: {Path(path).name}")
        matrix = np.frombuffer(body, dtype="<f4").reshape(rows, cols)
        locations = None
        if header["kind"] == "DESC":
            tail = fh.read(rows * 4)
            if len(tail) != rows * 4:
                raise ValueError(f"truncated location array: {Path(path).name}")
            locations = np.frombuffer(tail, dtype="<f4")
    return header, matrix, locations
