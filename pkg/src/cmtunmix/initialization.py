"""Starting points for the solver: VCA endmembers + FCLS abundances, or random."""
from __future__ import annotations

import numpy as np
from scipy.optimize import nnls

from .core import AbundanceMatrix, SignatureMatrix
from .simplex import project_simplex_columns


class InitializationError(ValueError):
    pass


def _data(x):
    return x.data if hasattr(x, "data") and not isinstance(x, np.ndarray) else np.asarray(x, float)


def estimate_snr(Y, y_mean, x_proj) -> float:
    """VCA's SNR estimate (dB) from data and its projection onto the signal subspace."""
    L, N = Y.shape
    p = x_proj.shape[0]
    p_y = np.sum(Y ** 2) / N
    p_x = np.sum(x_proj ** 2) / N + np.sum(y_mean ** 2)
    num, den = p_x - p / L * p_y, p_y - p_x
    if den <= 0 or num <= 0:
        return np.inf if den <= 0 else -np.inf
    return float(10 * np.log10(num / den))


def vca(cube, c: int, seed=0, snr_input=None) -> SignatureMatrix:
    """Vertex component analysis.

    Projects the data onto a ``c``-dimensional signal subspace (projective
    projection at high SNR, centered PCA at low SNR) and repeatedly picks the
    pixel with the largest projection onto a random direction orthogonal to
    the endmembers found so far.

    Returns the projected spectra of the selected pixels, clamped at zero.
    """
    Y = _data(cube)
    L, N = Y.shape
    if not 1 <= c <= min(L, N):
        raise InitializationError(f"need 1 <= c <= min(L, N) = {min(L, N)}, got c={c}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    corr = Y @ Y.T / N
    U, sv, _ = np.linalg.svd(corr)
    if sv[0] <= 0:
        raise InitializationError("data matrix is identically zero")
    if sv[c - 1] <= 1e-12 * sv[0]:
        rank = int(np.sum(sv > 1e-12 * sv[0]))
        raise InitializationError(
            f"data spans a {rank}-dimensional subspace; cannot extract c={c} endmembers, "
            f"use c <= {rank}")

    if c == 1:
        # single vertex: extreme pixel along the first principal direction
        proj = U[:, :1].T @ Y
        idx = int(np.argmax(np.abs(proj[0])))
        Yp = U[:, :1] @ proj
        return SignatureMatrix(np.maximum(Yp[:, [idx]], 0.0))

    y_m = Y.mean(axis=1, keepdims=True)
    Y_o = Y - y_m
    if snr_input is None:
        Ud = np.linalg.svd(Y_o @ Y_o.T / N)[0][:, :c]
        snr = estimate_snr(Y, y_m, Ud.T @ Y_o)
    else:
        snr = float(snr_input)
    snr_th = 15 + 10 * np.log10(c)

    if snr < snr_th:
        d = c - 1
        Ud = np.linalg.svd(Y_o @ Y_o.T / N)[0][:, :d]
        x_p = Ud.T @ Y_o
        Yp = Ud @ x_p + y_m
        scale = np.sqrt(np.max(np.sum(x_p ** 2, axis=0)))
        y = np.vstack([x_p, np.full((1, N), scale)])
    else:
        d = c
        Ud = U[:, :d]
        x_p = Ud.T @ Y
        Yp = Ud @ x_p
        u = x_p.mean(axis=1, keepdims=True)
        denom = u.T @ x_p
        denom[np.abs(denom) < 1e-300] = 1e-300
        y = x_p / denom

    indices = np.zeros(c, dtype=np.intp)
    E = np.zeros((c, c))
    E[c - 1, 0] = 1.0
    for i in range(c):
        w = rng.standard_normal((c, 1))
        f = w - E @ np.linalg.pinv(E) @ w
        f /= np.linalg.norm(f)
        v = f.T @ y
        indices[i] = int(np.argmax(np.abs(v[0])))
        E[:, i] = y[:, indices[i]]

    A = np.maximum(Yp[:, indices], 0.0)
    zero = ~A.any(axis=0)
    if np.any(zero):
        # a projected spectrum that is nonpositive everywhere; use the raw pixel
        A[:, zero] = np.maximum(Y[:, indices[zero]], 0.0)
    if np.any(~A.any(axis=0)):
        raise InitializationError("VCA selected an all-zero spectrum")
    return SignatureMatrix(A)


def fcls(cube, A, sum_weight: float = 1e3) -> AbundanceMatrix:
    """Fully constrained least squares abundances, one pixel at a time.

    Nonnegativity is exact (active-set NNLS); sum-to-one is imposed by
    appending a row of ``sum_weight`` to ``A`` and to each pixel, after which
    every column is projected onto the simplex so the result is exactly
    feasible.
    """
    Y = _data(cube)
    A = _data(A)
    if A.shape[0] != Y.shape[0]:
        raise ValueError(f"A has {A.shape[0]} bands, data has {Y.shape[0]}")
    c = A.shape[1]
    N = Y.shape[1]
    if c == 1:
        return AbundanceMatrix(np.ones((1, N)))
    A_aug = np.vstack([A, np.full((1, c), sum_weight)])
    S = np.empty((c, N))
    b = np.empty(A_aug.shape[0])
    b[-1] = sum_weight
    for k in range(N):
        b[:-1] = Y[:, k]
        S[:, k] = nnls(A_aug, b, maxiter=50 * c)[0]
    return AbundanceMatrix(project_simplex_columns(S))


def random_init(L: int, c: int, N: int, seed=0):
    """Uniform ``[0, 1)`` signatures and Dirichlet(1) abundances."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    A = rng.uniform(0.0, 1.0, size=(L, c))
    A[:, ~A.any(axis=0)] = 0.5
    S = rng.dirichlet(np.ones(c), size=N).T
    return SignatureMatrix(A), AbundanceMatrix(project_simplex_columns(S))
