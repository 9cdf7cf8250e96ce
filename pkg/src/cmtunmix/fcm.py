"""Fuzzy c-means clustering of pixel spectra (Bezdek updates)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)


@dataclass
class FcmResult:
    membership: np.ndarray      # C x N
    centers: np.ndarray         # L x C
    labels: np.ndarray          # N
    iterations: int
    final_shift: float
    objective_history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return self.membership.shape[0]


def fcm_objective(X, centers, membership, m) -> float:
    """``sum_k sum_c u_ck^m ||x_k - v_c||^2`` with ``X`` as N x L, centers C x L."""
    d2 = cdist(centers, X, "sqeuclidean")
    return float(np.sum(membership ** m * d2))


def update_membership(d2, m) -> np.ndarray:
    """Memberships from squared distances ``d2`` (C x N).

    A pixel at zero distance from one or more centers belongs entirely to the
    lowest-indexed such center.
    """
    C, N = d2.shape
    u = np.empty_like(d2)
    zero = d2 <= 0.0
    hit = zero.any(axis=0)
    if np.any(~hit):
        d = d2[:, ~hit]
        # ratios against the column minimum keep the powers bounded
        w = (d.min(axis=0) / d) ** (1.0 / (m - 1.0))
        u[:, ~hit] = w / w.sum(axis=0)
    if np.any(hit):
        cols = np.flatnonzero(hit)
        u[:, cols] = 0.0
        u[np.argmax(zero[:, cols], axis=0), cols] = 1.0
    return u


def update_centers(X, u, m):
    """Weighted means; returns (centers C x L, per-cluster weight sums)."""
    um = u ** m
    weight = um.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        centers = (um @ X) / weight[:, None]
    return centers, weight


def _kmeanspp(X, C, rng) -> np.ndarray:
    N = X.shape[0]
    idx = [int(rng.integers(N))]
    d2 = cdist(X[idx], X, "sqeuclidean")[0]
    for _ in range(1, C):
        total = d2.sum()
        if total > 0:
            j = int(rng.choice(N, p=d2 / total))
        else:
            j = int(rng.integers(N))
        idx.append(j)
        d2 = np.minimum(d2, cdist(X[[j]], X, "sqeuclidean")[0])
    return X[idx].copy()


def harden(membership) -> np.ndarray:
    """Crisp labels: argmax per column, ties to the lowest cluster id."""
    return np.argmax(np.asarray(membership), axis=0).astype(np.intp)


def fcm_cluster(cube, C: int, m: float = 2.0, tol: float = 1e-5, max_iter: int = 300,
                seed=0, init_centers=None, callback=None) -> FcmResult:
    """Cluster pixel spectra into ``C`` fuzzy clusters.

    Args:
        cube: HsiCube or an ``L x N`` array; pixels are the columns.
        C: number of clusters, ``1 <= C <= N``.
        m: fuzzifier, ``> 1``.
        tol: stop when the largest center displacement drops below this.
        max_iter: iteration cap.
        seed: seed (or Generator) for k-means++ initialization.
        init_centers: optional ``L x C`` starting centers, overriding k-means++.
        callback: called as ``callback(it, membership, centers)`` after each
            iteration, with centers as ``L x C``.
    """
    Y = cube.data if hasattr(cube, "data") and not isinstance(cube, np.ndarray) else np.asarray(cube, float)
    X = np.ascontiguousarray(Y.T)
    N = X.shape[0]
    if not 1 <= C <= N:
        raise ValueError(f"cluster count must satisfy 1 <= C <= N={N}, got {C}")
    if not m > 1:
        raise ValueError(f"fuzzifier m must be > 1, got {m}")
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if init_centers is not None:
        V = np.array(np.asarray(init_centers, float).T, copy=True)
        if V.shape != (C, X.shape[1]):
            raise ValueError(f"init_centers must be L x C = {X.shape[1]} x {C}")
    else:
        V = _kmeanspp(X, C, rng)

    history, warnings = [], []
    shift = np.inf
    it = 0
    u = None
    while it < max_iter:
        it += 1
        d2 = cdist(V, X, "sqeuclidean")
        u = update_membership(d2, m)
        history.append(float(np.sum(u ** m * d2)))
        V_new, weight = update_centers(X, u, m)
        empty = np.flatnonzero(~(weight > 1e-12))
        for c in empty:
            # reseed from the pixel farthest from every live center
            live = np.setdiff1d(np.arange(C), empty)
            ref = V_new[live] if live.size else V
            far = int(np.argmax(cdist(ref, X, "sqeuclidean").min(axis=0)))
            V_new[c] = X[far]
            msg = f"iteration {it}: cluster {c} lost all mass; reseeded at pixel {far}"
            warnings.append(msg)
            logger.warning("fcm: %s", msg)
        history.append(fcm_objective(X, V_new, u, m))
        shift = float(np.max(np.linalg.norm(V_new - V, axis=1)))
        V = V_new
        if callback is not None:
            callback(it, u, V.T)
        if shift < tol:
            break

    d2 = cdist(V, X, "sqeuclidean")
    u = update_membership(d2, m)
    history.append(float(np.sum(u ** m * d2)))
    return FcmResult(membership=u, centers=V.T.copy(), labels=harden(u), iterations=it,
                     final_shift=shift, objective_history=history, warnings=warnings)


def load_labels(path, n_pixels=None) -> np.ndarray:
    """Read crisp labels from a text/CSV file (any whitespace or comma layout).

    Values are read in row-major order, so a label image saved as a grid works
    as well as a single column. Labels are remapped to ``0..C-1``.
    """
    with open(path) as fh:
        text = fh.read().replace(",", " ")
    try:
        raw = np.array([int(tok) for tok in text.split()], dtype=np.intp)
    except ValueError as exc:
        raise ValueError(f"{path}: labels must be integers ({exc})") from None
    if n_pixels is not None and raw.size != n_pixels:
        raise ValueError(f"{path}: {raw.size} labels for {n_pixels} pixels")
    _, labels = np.unique(raw, return_inverse=True)
    return labels.astype(np.intp)
