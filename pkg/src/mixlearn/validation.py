"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def as_float_array(a, name: str = "array", ndim: int | None = None) -> np.ndarray:
    """Convert to a C-contiguous float64 array and check finiteness."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    if ndim is not None and out.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite values")
    return out


def as_feature_matrix(X, name: str = "X") -> np.ndarray:
    """Accept (n,) or (n, d) input and return an (n, d) float matrix."""
    out = as_float_array(X, name)
    if out.ndim == 1:
        out = out[:, None]
    if out.ndim != 2:
        raise ValueError(f"{name} must be 1- or 2-dimensional, got shape {out.shape}")
    return out


def check_probability_vector(p, name: str = "p", tol: float = 1e-12) -> np.ndarray:
    p = as_float_array(p, name, ndim=1)
    if np.any(p < -tol):
        raise ValueError(f"{name} has negative entries")
    if abs(float(p.sum()) - 1.0) > tol:
        raise ValueError(f"{name} sums to {p.sum()!r}, expected 1 within {tol}")
    return p


def check_row_stochastic(P, name: str = "transition", tol: float = 1e-12) -> np.ndarray:
    P = as_float_array(P, name, ndim=2)
    if P.shape[0] != P.shape[1]:
        raise ValueError(f"{name} must be square, got shape {P.shape}")
    if np.any(P < -tol):
        raise ValueError(f"{name} has negative entries")
    rowsums = P.sum(axis=1)
    bad = np.abs(rowsums - 1.0) > tol
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(f"{name} row {i} sums to {rowsums[i]!r}, expected 1 within {tol}")
    return P
