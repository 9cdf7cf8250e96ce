"""Pixel network: grid neighborhoods, spectral-similarity weights and
cluster-restricted neighborhoods."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class DegeneratePixelError(ValueError):
    """A pixel spectrum has zero norm where a direction is required."""


@dataclass(frozen=True, eq=False)
class PixelGraph:
    """Neighbor lists (self excluded), aligned similarity weights and cluster labels."""

    neighbors: tuple
    rho: tuple
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        neighbors = tuple(np.asarray(n, dtype=np.intp) for n in self.neighbors)
        rho = tuple(np.asarray(r, dtype=np.float64) for r in self.rho)
        if len(neighbors) != len(rho):
            raise ValueError("neighbors and rho must have one entry per pixel")
        for k, (n, r) in enumerate(zip(neighbors, rho)):
            if n.shape != r.shape:
                raise ValueError(f"pixel {k}: {n.size} neighbors but {r.size} weights")
        for arr in neighbors + rho:
            arr.setflags(write=False)
        object.__setattr__(self, "neighbors", neighbors)
        object.__setattr__(self, "rho", rho)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.intp)
            if labels.shape != (len(neighbors),):
                raise ValueError(f"labels has shape {labels.shape}, expected ({len(neighbors)},)")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n_pixels(self) -> int:
        return len(self.neighbors)

    def with_labels(self, labels) -> "PixelGraph":
        return PixelGraph(self.neighbors, self.rho, labels)

    def weight_matrix(self, restrict_to_clusters: bool = True,
                      renormalize: bool = False) -> sp.csr_matrix:
        """Sparse ``N x N`` matrix with ``W[k, j] = rho_kj`` over the effective neighborhoods.

        With ``renormalize`` each nonempty row is rescaled to sum to one after the
        cluster restriction.
        """
        n = self.n_pixels
        rows, cols, vals = [], [], []
        for k in range(n):
            nb, w = self.neighbors[k], self.rho[k]
            if restrict_to_clusters and self.labels is not None:
                keep = self.labels[nb] == self.labels[k]
                nb, w = nb[keep], w[keep]
            if renormalize and w.size:
                total = w.sum()
                w = w / total if total > 0 else np.full(w.size, 1.0 / w.size)
            rows.append(np.full(nb.size, k, dtype=np.intp))
            cols.append(nb)
            vals.append(w)
        if n:
            rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
        W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        W.sort_indices()
        return W

    def to_csv(self, path) -> None:
        """Dump adjacency and weights as ``pixel,neighbor,rho`` rows."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pixel", "neighbor", "rho"])
            for k, (nb, w) in enumerate(zip(self.neighbors, self.rho)):
                for j, r in zip(nb, w):
                    writer.writerow([k, int(j), repr(float(r))])


def build_neighborhood(width: int, height: int, connectivity: int = 4) -> list:
    """Grid adjacency lists for a ``height x width`` image, pixels indexed row-major."""
    if width < 1 or height < 1:
        raise ValueError(f"grid must be at least 1x1, got {width}x{height}")
    if connectivity == 4:
        offsets = [(-1, 0), (0, -1), (0, 1), (1, 0)]
    elif connectivity == 8:
        offsets = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    else:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    neighbors = []
    for r in range(height):
        for c in range(width):
            nb = [(r + dr) * width + (c + dc) for dr, dc in offsets
                  if 0 <= r + dr < height and 0 <= c + dc < width]
            neighbors.append(np.array(nb, dtype=np.intp))
    return neighbors


def cosine_similarity(y_k, y_j) -> float:
    y_k = np.asarray(y_k, dtype=np.float64)
    y_j = np.asarray(y_j, dtype=np.float64)
    nk, nj = np.linalg.norm(y_k), np.linalg.norm(y_j)
    if nk == 0 or nj == 0:
        raise DegeneratePixelError("cosine similarity of a zero-norm spectrum")
    return float(np.clip(y_k @ y_j / (nk * nj), -1.0, 1.0))


def compute_rho(cube, neighbors) -> list:
    """Normalized spectral-similarity weights for every neighbor list.

    Each weight is the cosine between the two spectra divided by the sum of
    cosines over the pixel's neighborhood. A nonpositive sum falls back to
    uniform weights with a logged warning.
    """
    Y = cube.data if hasattr(cube, "data") else np.asarray(cube)
    norms = np.linalg.norm(Y, axis=0)
    if np.any(norms == 0):
        bad = np.flatnonzero(norms == 0)[:5].tolist()
        raise DegeneratePixelError(f"zero-norm pixel spectra at {bad}")
    if len(neighbors) != Y.shape[1]:
        raise ValueError(f"{len(neighbors)} neighbor lists for {Y.shape[1]} pixels")
    U = Y / norms
    rho = []
    fallbacks = 0
    for k, nb in enumerate(neighbors):
        nb = np.asarray(nb, dtype=np.intp)
        if nb.size == 0:
            rho.append(np.empty(0))
            continue
        theta = np.clip(U[:, nb].T @ U[:, k], -1.0, 1.0)
        total = theta.sum()
        if total > 0:
            rho.append(theta / total)
        else:
            fallbacks += 1
            rho.append(np.full(nb.size, 1.0 / nb.size))
    if fallbacks:
        logger.warning("compute_rho: %d pixel(s) with nonpositive similarity sum; "
                       "using uniform weights", fallbacks)
    return rho


def build_graph(cube, connectivity: int = 4, labels=None) -> PixelGraph:
    neighbors = build_neighborhood(cube.width, cube.height, connectivity)
    return PixelGraph(neighbors, compute_rho(cube, neighbors), labels)


def effective_neighbors(graph: PixelGraph, k: int) -> np.ndarray:
    """Neighbors of pixel ``k`` that share its cluster label."""
    nb = graph.neighbors[k]
    if graph.labels is None:
        return nb.copy()
    return nb[graph.labels[nb] == graph.labels[k]]
