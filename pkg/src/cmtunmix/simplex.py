"""Euclidean projection onto the probability simplex {s >= 0, sum(s) = 1}."""
import numpy as np

FEASIBLE_TOL = 1e-12


def project_simplex(v) -> np.ndarray:
    """Project a single vector onto the probability simplex (sort-based, O(c log c))."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    return project_simplex_columns(v[:, None])[:, 0]


def project_simplex_columns(V) -> np.ndarray:
    """Project every column of ``V`` (c x N) onto the probability simplex."""
    V = np.asarray(V, dtype=np.float64)
    if not np.all(np.isfinite(V)):
        raise FloatingPointError("simplex projection of non-finite values")
    c = V.shape[0]
    if c == 0:
        raise ValueError("cannot project onto an empty simplex")
    U = -np.sort(-V, axis=0)
    css = np.cumsum(U, axis=0) - 1.0
    ind = np.arange(1, c + 1, dtype=np.float64)[:, None]
    cond = U - css / ind > 0
    # cond holds on a prefix of the sorted order; its length is the support size
    r = c - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[r, np.arange(V.shape[1])] / (r + 1.0)
    out = np.maximum(V - theta, 0.0)
    # columns already on the simplex up to rounding pass through untouched,
    # which makes the projection exactly idempotent
    keep = np.all(V >= 0, axis=0) & (np.abs(V.sum(axis=0) - 1.0) <= FEASIBLE_TOL)
    out[:, keep] = V[:, keep]
    return np.asfortranarray(out)

