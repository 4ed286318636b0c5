"""Dense vector/matrix kernels and the plain-text matrix format.

Vectors and matrices are plain ``numpy`` float64 arrays. Matrices that hold
dictionary atoms are kept in column-major (Fortran) order so that atom
access is contiguous.
"""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "DimensionError",
    "SingularMatrixError",
    "MatrixFormatError",
    "as_vec",
    "as_mat",
    "dot",
    "norm2",
    "axpy",
    "least_squares",
    "read_matrix",
    "write_matrix",
    "format_matrix",
    "parse_matrix",
]

RANK_TOL = 1e-10


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class SingularMatrixError(np.linalg.LinAlgError):
    """A least-squares system is rank deficient.

    ``column`` is the index of the first column found to be linearly
    dependent on the ones before it.
    """

    def __init__(self, message, column):
        super().__init__(message)
        self.column = column


class MatrixFormatError(ValueError):
    """Malformed matrix text file. ``line`` is 1-based."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


def as_vec(a) -> np.ndarray:
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {v.shape}")
    return v


def as_mat(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"expected a non-empty matrix, got shape {m.shape}")
    return np.asfortranarray(m)


def _check_same_length(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def dot(a, b) -> float:
    a, b = as_vec(a), as_vec(b)
    _check_same_length(a, b)
    return float(a @ b)


def norm2(a) -> float:
    a = as_vec(a)
    return float(np.sqrt(a @ a))


def axpy(alpha, x, y) -> np.ndarray:
    """Return ``y + alpha * x`` as a new vector."""
    x, y = as_vec(x), as_vec(y)
    _check_same_length(x, y)
    return y + alpha * x


def least_squares(A, y) -> np.ndarray:
    """Solve ``min ||y - A x||_2`` through a Householder QR factorization.

    Raises SingularMatrixError when a diagonal entry of R falls below
    ``RANK_TOL`` times the norm of the corresponding column of A.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {A.shape}")
    y = as_vec(y)
    if A.shape[0] != y.shape[0]:
        raise DimensionError(f"A has {A.shape[0]} rows but y has length {y.shape[0]}")
    if A.shape[1] > A.shape[0]:
        raise SingularMatrixError(
            f"{A.shape[1]} columns exceed {A.shape[0]} rows", column=A.shape[0]
        )
    q, r = np.linalg.qr(A, mode="reduced")
    col_norms = np.linalg.norm(A, axis=0)
    diag = np.abs(np.diag(r))
    bad = np.flatnonzero(diag <= RANK_TOL * np.maximum(col_norms, np.finfo(float).tiny))
    if bad.size:
        j = int(bad[0])
        raise SingularMatrixError(f"column {j} is linearly dependent on earlier columns", column=j)
    return solve_triangular(r, q.T @ y, lower=False)


def format_matrix(a) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    buf = io.StringIO()
    buf.write(f"{a.shape[0]} {a.shape[1]}\n")
    for row in a:
        buf.write(" ".join(repr(float(v)) for v in row))
        buf.write("\n")
    return buf.getvalue()


def parse_matrix(text: str) -> np.ndarray:
    """Parse the ``rows cols`` header + row-major body text format."""
    lines = text.splitlines()
    if not lines:
        raise MatrixFormatError("empty file", 1)
    header = lines[0].split()
    try:
        rows, cols = (int(t) for t in header)
    except ValueError:
        raise MatrixFormatError(f"expected 'rows cols' header, got {lines[0]!r}", 1) from None
    if rows < 1 or cols < 1:
        raise MatrixFormatError("dimensions must be positive", 1)
    body = lines[1:]
    # trailing blank lines are tolerated
    while body and not body[-1].strip():
        body.pop()
    if len(body) != rows:
        raise MatrixFormatError(f"expected {rows} data rows, found {len(body)}", len(lines) + 1)
    out = np.empty((rows, cols), order="F")
    for i, line in enumerate(body):
        toks = line.split()
        if len(toks) != cols:
            raise MatrixFormatError(f"expected {cols} values, found {len(toks)}", i + 2)
        try:
            out[i] = [float(t) for t in toks]
        except ValueError:
            raise MatrixFormatError(f"non-numeric value in {line!r}", i + 2) from None
        if not np.all(np.isfinite(out[i])):
            raise MatrixFormatError("non-finite value", i + 2)
    return out


def read_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())


def write_matrix(path, a) -> None:
    Path(path).write_text(format_matrix(a))
