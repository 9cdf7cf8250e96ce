"""Unmixing quality measures: spectral/abundance angle distances,
reconstruction error, and endmember matching."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


class DegenerateVectorError(ValueError):
    pass


def _raw(x):
    if x is None:
        return None
    if not isinstance(x, np.ndarray) and hasattr(x, "data"):
        x = x.data
    return np.asarray(x, dtype=np.float64)


COS_SNAP = 1e-12


def _arccos(cos):
    """arccos with cosines within ``COS_SNAP`` of +-1 snapped to the endpoint."""
    cos = np.clip(cos, -1.0, 1.0)
    cos = np.where(cos > 1 - COS_SNAP, 1.0, np.where(cos < -1 + COS_SNAP, -1.0, cos))
    return np.arccos(cos)


def _angle(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateVectorError("angle with a zero vector is undefined")
    return float(_arccos(a @ b / (na * nb)))


def sad(a, a_hat) -> float:
    """Spectral angle (radians) between two spectra."""
    return _angle(a, a_hat)


def aad(s, s_hat) -> float:
    """Angle (radians) between two abundance vectors."""
    return _angle(s, s_hat)


def column_angles(X, X_hat) -> np.ndarray:
    """Angle between matching columns of two equally shaped matrices."""
    X = np.asarray(X, dtype=np.float64)
    X_hat = np.asarray(X_hat, dtype=np.float64)
    if X.shape != X_hat.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {X_hat.shape}")
    n1 = np.linalg.norm(X, axis=0)
    n2 = np.linalg.norm(X_hat, axis=0)
    if np.any(n1 == 0) or np.any(n2 == 0):
        raise DegenerateVectorError("angle with a zero column is undefined")
    cos = np.sum(X * X_hat, axis=0) / (n1 * n2)
    return _arccos(cos)


def sad_matrix(A_true, A_hat) -> np.ndarray:
    """``M[i, j]`` = SAD between true endmember ``i`` and estimate ``j``."""
    A_true = np.asarray(A_true, dtype=np.float64)
    A_hat = np.asarray(A_hat, dtype=np.float64)
    U = A_true / np.linalg.norm(A_true, axis=0)
    V = A_hat / np.linalg.norm(A_hat, axis=0)
    return _arccos(U.T @ V)


def reconstruction_error(Y, Y_hat) -> float:
    """Mean over pixels of the Euclidean norm of the residual ``y_i - y_hat_i``."""
    Y = Y.data if hasattr(Y, "bands") else np.asarray(Y, dtype=np.float64)
    Y_hat = np.asarray(Y_hat, dtype=np.float64)
    if Y.shape != Y_hat.shape:
        raise ValueError(f"shape mismatch {Y.shape} vs {Y_hat.shape}")
    return float(np.mean(np.linalg.norm(Y - Y_hat, axis=0)))


def rms_aggregate(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("rms of an empty sequence")
    return float(np.sqrt(np.mean(values ** 2)))


def match_endmembers(A_true, A_hat):
    """Assign estimated endmembers to true ones minimizing the summed SAD.

    Returns ``(matching, sads)`` where ``matching[j]`` is the true index of
    estimated column ``j`` and ``sads[i]`` is the SAD of true endmember ``i``
    against its match. Among optimal assignments the lexicographically
    smallest ``matching`` is returned.
    """
    A_true, A_hat = _raw(A_true), _raw(A_hat)
    if A_true.shape != A_hat.shape:
        raise ValueError(f"shape mismatch {A_true.shape} vs {A_hat.shape}")
    M = sad_matrix(A_true, A_hat).T       # rows: estimates, cols: truth
    c = M.shape[0]
    r, col = linear_sum_assignment(M)
    best = M[r, col].sum()
    tol = 1e-12 * max(1.0, best)

    # fix estimates in order, taking the smallest true index that keeps optimality
    matching = np.empty(c, dtype=np.intp)
    free_rows, free_cols = list(range(c)), list(range(c))
    fixed = 0.0
    for j in range(c):
        free_rows.remove(j)
        for i in sorted(free_cols):
            rest = [x for x in free_cols if x != i]
            sub = M[np.ix_(free_rows, rest)]
            cost = fixed + M[j, i]
            if sub.size:
                rr, cc = linear_sum_assignment(sub)
                cost += sub[rr, cc].sum()
            if cost <= best + tol:
                matching[j] = i
                fixed += M[j, i]
                free_cols.remove(i)
                break
    sads = np.empty(c)
    sads[matching] = M[np.arange(c), matching]
    return matching, sads


@dataclass
class EvalReport:
    per_endmember_sad: np.ndarray   # indexed by true endmember
    per_pixel_aad: np.ndarray
    aad_mean: float
    aad_rms: float
    re: float
    rms_sad: float
    matching: np.ndarray            # estimated index -> true index
    names: tuple = None

    def to_dict(self) -> dict:
        return {
            "per_endmember_sad": [float(x) for x in self.per_endmember_sad],
            "rms_sad": self.rms_sad,
            "aad_mean": self.aad_mean,
            "aad_rms": self.aad_rms,
            "re": self.re,
            "matching": [int(x) for x in self.matching],
            "names": list(self.names) if self.names is not None else None,
        }


def evaluate(A_true, S_true, A_hat, S_hat, Y=None, names=None) -> EvalReport:
    """Match endmembers and compute SAD, AAD and (when ``Y`` is given) RE.

    ``S_true`` may be None when only signatures are known; AAD is then NaN.
    """
    if names is None:
        names = getattr(A_true, "names", None)
    A_true, S_true, A_hat, S_hat = map(_raw, (A_true, S_true, A_hat, S_hat))
    matching, sads = match_endmembers(A_true, A_hat)
    if S_true is not None and S_hat is not None:
        S_aligned = np.empty_like(S_hat)
        S_aligned[matching] = S_hat
        aads = column_angles(S_true, S_aligned)
        aad_mean, aad_rms = float(np.mean(aads)), rms_aggregate(aads)
    else:
        aads = np.array([])
        aad_mean = aad_rms = float("nan")
    re = float("nan")
    if Y is not None and S_hat is not None:
        re = reconstruction_error(Y, A_hat @ S_hat)
    return EvalReport(per_endmember_sad=sads, per_pixel_aad=aads, aad_mean=aad_mean,
                      aad_rms=aad_rms, re=re, rms_sad=rms_aggregate(sads), matching=matching,
                      names=tuple(names) if names is not None else None)


def write_table_csv(path, results: dict, names=None) -> None:
    """Write a materials-by-methods SAD table with rmsSAD and RE rows.

    ``results`` maps a method name to a list of :class:`EvalReport` (one per
    run). Cells are means over runs; the ``<method> std%`` column holds the
    sample standard deviation times 100 (blank for a single run).
    """
    methods = list(results)
    first = results[methods[0]][0]
    c = len(first.per_endmember_sad)
    if names is None:
        names = first.names or tuple(f"endmember_{i}" for i in range(c))

    def stats(values):
        values = np.asarray(values, dtype=np.float64)
        std = float(np.std(values, ddof=1)) * 100 if values.size > 1 else None
        return float(np.mean(values)), std

    header = ["material"]
    for m in methods:
        header += [m, f"{m} std%"]
    rows = []
    for i in range(c):
        row = [names[i]]
        for m in methods:
            mean, std = stats([r.per_endmember_sad[i] for r in results[m]])
            row += [f"{mean:.4f}", "" if std is None else f"{std:.2f}"]
        rows.append(row)
    for label, attr in (("rmsSAD", "rms_sad"), ("RE", "re")):
        row = [label]
        for m in methods:
            mean, std = stats([getattr(r, attr) for r in results[m]])
            row += [f"{mean:.4f}", "" if std is None else f"{std:.2f}"]
        rows.append(row)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
