"""Clustered multitask unmixing: projected diffusion-LMS abundance updates,
multiplicative signature updates, and the baseline variants that fall out of
zeroing individual terms.

The cost minimized over signatures ``A`` and abundances ``S`` is::

    ||Y - A S||_F^2
      + eta    * sum_k sum_{j in N_k, same cluster as k} rho_kj ||s_j - s_k||^2
      + lambda * sum_k ||s_k||_q

Each iteration runs one multiplicative step on ``A`` followed by one
projected gradient step on every abundance column (Jacobi sweep: all pixels
read the previous iterate).
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .core import AbundanceMatrix, HsiCube, SignatureMatrix, SolverConfig
from .fcm import fcm_cluster
from .graph import PixelGraph, build_graph, effective_neighbors
from .initialization import fcls, random_init, vca
from .simplex import project_simplex, project_simplex_columns

logger = logging.getLogger(__name__)

__all__ = [
    "VARIANTS", "VariantSpec", "SolverState", "RunReport", "SolverDivergence",
    "resolve_variant", "lambda_auto", "lq_norm", "sparsity_gradient", "project_simplex",
    "local_cost", "local_cost_gradient", "abundance_step", "abundance_sweep",
    "signature_step", "total_cost", "run",
]

MU_DELTA = 1e-12


class SolverDivergence(RuntimeError):
    """The cost grew without bound; usually the step size is too large."""


@dataclass(frozen=True)
class VariantSpec:
    """A baseline expressed as overrides of the solver configuration.

    ``None`` leaves the configured value untouched.
    """

    preset: str
    clusters: Optional[int] = None
    eta_zero: bool = False
    lambda_mode: object = None

    def apply(self, config: SolverConfig) -> SolverConfig:
        changes = {}
        if self.clusters is not None:
            changes["clusters"] = self.clusters
        if self.eta_zero:
            changes["eta"] = 0.0
        if self.lambda_mode is not None:
            changes["lambda_mode"] = self.lambda_mode
        return replace(config, **changes) if changes else config


VARIANTS = {
    "proposed": VariantSpec("proposed"),
    "distributed_sparse": VariantSpec("distributed_sparse", clusters=1, lambda_mode="auto"),
    "distributed": VariantSpec("distributed", clusters=1, lambda_mode=0.0),
    "lq_nmf": VariantSpec("lq_nmf", clusters=1, eta_zero=True, lambda_mode="auto"),
    "plain_nmf": VariantSpec("plain_nmf", clusters=1, eta_zero=True, lambda_mode=0.0),
}


def resolve_variant(config: SolverConfig, variant="proposed") -> SolverConfig:
    if isinstance(variant, VariantSpec):
        return variant.apply(config)
    key = str(variant).replace("-", "_")
    if key not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
    return VARIANTS[key].apply(config)


# ---------------------------------------------------------------------------
# cost terms

def lambda_auto(cube) -> float:
    """Sparsity weight estimated from how peaked each band image is.

    For every band (a length-N row of the cube) the Hoyer-style ratio
    ``(sqrt(N) - ||y||_1 / ||y||_2) / sqrt(N - 1)`` is summed, and the total is
    divided by ``sqrt(L)``.
    """
    Y = cube.data if isinstance(cube, HsiCube) else np.asarray(cube, dtype=np.float64)
    L, N = Y.shape
    if N < 2:
        logger.warning("lambda_auto: a single pixel carries no sparsity information; lambda=0")
        return 0.0
    total = 0.0
    skipped = 0
    for row in Y:
        n2 = np.linalg.norm(row)
        if n2 == 0:
            skipped += 1
            continue
        if np.ptp(row) == 0:
            continue  # constant band: ratio is sqrt(N) exactly
        ratio = np.sum(np.abs(row)) / n2
        total += max(math.sqrt(N) - ratio, 0.0) / math.sqrt(N - 1)
    if skipped:
        logger.warning("lambda_auto: skipped %d all-zero band(s)", skipped)
    return float(total / math.sqrt(L))


def lq_norm(s, q: float) -> np.ndarray:
    """``(sum |s|^q)^(1/q)`` along axis 0."""
    s = np.asarray(s, dtype=np.float64)
    return np.sum(np.abs(s) ** q, axis=0) ** (1.0 / q)


def sparsity_gradient(S, q: float, floor: float = 1e-8) -> np.ndarray:
    """Gradient of ``||s||_q`` for each column, ``s |s|^(q-2) / ||s||_q^(q-1)``.

    ``|s|`` is floored at ``floor`` where it appears in a denominator, and a
    column whose norm is below ``floor`` gets a zero gradient.
    """
    S = np.asarray(S, dtype=np.float64)
    a = np.abs(S)
    if q == 2:
        num = S
    else:
        num = S * np.maximum(a, floor) ** (q - 2.0)
    norm = lq_norm(S, q)
    ok = norm >= floor
    den = np.where(ok, norm, 1.0) ** (q - 1.0)
    return np.where(ok, num / den, 0.0)


def local_cost(y_k, A, s_k, neighbor_s, rho_k, eta, lam, q) -> float:
    """Per-pixel cost: squared residual + weighted neighbor distances + L_q penalty."""
    A = np.asarray(A, dtype=np.float64)
    s_k = np.asarray(s_k, dtype=np.float64)
    r = np.asarray(y_k, dtype=np.float64) - A @ s_k
    cost = float(r @ r)
    for s_l, w in zip(neighbor_s, rho_k):
        d = s_k - np.asarray(s_l, dtype=np.float64)
        cost += eta * w * float(d @ d)
    if lam:
        cost += lam * float(lq_norm(s_k, q))
    return cost


def local_cost_gradient(y_k, A, s_k, neighbor_s, rho_k, eta, lam, q, floor=1e-8) -> np.ndarray:
    """Exact gradient of :func:`local_cost` with respect to ``s_k``."""
    A = np.asarray(A, dtype=np.float64)
    s_k = np.asarray(s_k, dtype=np.float64)
    g = -2.0 * A.T @ (np.asarray(y_k, dtype=np.float64) - A @ s_k)
    for s_l, w in zip(neighbor_s, rho_k):
        g += 2.0 * eta * w * (s_k - np.asarray(s_l, dtype=np.float64))
    if lam:
        g += lam * sparsity_gradient(s_k[:, None], q, floor)[:, 0]
    return g


def total_cost(Y, A, S, W: Optional[sp.spmatrix], eta: float, lam: float, q: float) -> float:
    """Full cost over all pixels; ``W`` is the effective-neighborhood weight matrix."""
    R = Y - A @ S
    cost = float(np.sum(R * R))
    if eta and W is not None and W.nnz:
        Wc = W.tocoo()
        D = S[:, Wc.col] - S[:, Wc.row]
        cost += eta * float(np.sum(Wc.data * np.sum(D * D, axis=0)))
    if lam:
        cost += lam * float(np.sum(lq_norm(S, q)))
    return cost


# ---------------------------------------------------------------------------
# updates

def _neighbor_sign(config: SolverConfig) -> float:
    # the printed recursion subtracts the neighbor pull; the descent direction adds it
    return 1.0 if config.gradient_sign == "descent_consistent" else -1.0


def abundance_sweep(Y, A, S, W: Optional[sp.spmatrix], config: SolverConfig, lam: float) -> np.ndarray:
    """One Jacobi sweep of the projected abundance update over every pixel.

    ``s_k <- P+( s_k + mu A^T (y_k - A s_k)
                 +/- mu eta sum_l rho_kl (s_l - s_k)
                 - mu lambda grad||s_k||_q )``
    """
    mu = config.mu
    V = S + mu * (A.T @ (Y - A @ S))
    if config.eta and W is not None and W.nnz:
        pull = (W @ S.T).T - S * np.asarray(W.sum(axis=1)).ravel()
        V += _neighbor_sign(config) * mu * config.eta * pull
    if lam:
        V -= mu * lam * sparsity_gradient(S, config.q, config.sparsity_floor)
    return project_simplex_columns(V)


def _neighbor_view(graph: PixelGraph, k: int, renormalize: bool):
    nb = graph.neighbors[k]
    w = graph.rho[k]
    if graph.labels is not None:
        keep = graph.labels[nb] == graph.labels[k]
        nb, w = nb[keep], w[keep]
    if renormalize and w.size:
        total = w.sum()
        w = w / total if total > 0 else np.full(w.size, 1.0 / w.size)
    return nb, w


def abundance_step(k: int, state: "SolverState", cube, graph: Optional[PixelGraph],
                   config: SolverConfig) -> np.ndarray:
    """Updated abundance vector of pixel ``k``, reading the iterate in ``state``."""
    Y = cube.data if isinstance(cube, HsiCube) else np.asarray(cube, dtype=np.float64)
    A, S = _raw(state.A), _raw(state.S)
    s_k = S[:, k]
    mu = config.mu
    v = s_k + mu * (A.T @ (Y[:, k] - A @ s_k))
    if config.eta and graph is not None:
        nb, w = _neighbor_view(graph, k, config.renormalize_rho)
        if nb.size:
            pull = S[:, nb] @ w - s_k * w.sum()
            v = v + _neighbor_sign(config) * mu * config.eta * pull
    if state.lam:
        v = v - mu * state.lam * sparsity_gradient(s_k[:, None], config.q, config.sparsity_floor)[:, 0]
    return project_simplex(v)


def signature_step(A, S, Y, delta: float = MU_DELTA) -> np.ndarray:
    """Multiplicative update ``A * (Y S^T) / (A S S^T + delta)``."""
    A, S = _raw(A), _raw(S)
    Y = Y.data if isinstance(Y, HsiCube) else np.asarray(Y, dtype=np.float64)
    return A * (Y @ S.T) / (A @ (S @ S.T) + delta)


def _raw(x):
    return x.data if isinstance(x, (SignatureMatrix, AbundanceMatrix)) else np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# orchestration

@dataclass
class SolverState:
    A: object
    S: object
    iteration: int = 0
    cost_history: list = field(default_factory=list)
    lam: float = 0.0
    stopped_by: str = "max_iter"


@dataclass
class RunReport:
    variant: str
    config: dict
    lam: float
    iterations: int
    stopped_by: str
    cost_history: list
    initial_cost: float
    init: str
    n_endmembers: int
    wall_seconds: float = 0.0
    fcm_iterations: Optional[int] = None
    evaluation: Optional[dict] = None

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "variant": self.variant,
            "config": self.config,
            "lambda": self.lam,
            "iterations": self.iterations,
            "stopped_by": self.stopped_by,
            "initial_cost": self.initial_cost,
            "cost_history": list(self.cost_history),
            "init": self.init,
            "n_endmembers": self.n_endmembers,
            "fcm_iterations": self.fcm_iterations,
        }
        if include_timing:
            d["wall_seconds"] = self.wall_seconds
        if self.evaluation is not None:
            d["evaluation"] = self.evaluation
        return d

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)


def _seeds(seed):
    fcm_seq, init_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(fcm_seq), np.random.default_rng(init_seq)


def initialize(cube: HsiCube, c: int, method: str = "vca-fcls", seed=0):
    """Starting ``(A, S)`` for ``c`` endmembers by VCA+FCLS or at random."""
    _, rng = _seeds(seed)
    if method in ("vca-fcls", "vca_fcls"):
        A = vca(cube, c, seed=rng)
        return A, fcls(cube, A)
    if method == "random":
        return random_init(cube.bands, c, cube.n_pixels, seed=rng)
    raise ValueError(f"unknown init method {method!r}; choose 'vca-fcls' or 'random'")


def run(cube: HsiCube, config: SolverConfig = SolverConfig(), variant="proposed",
        init="vca-fcls", n_endmembers: Optional[int] = None, labels=None,
        initial=None, ground_truth=None,
        callback: Optional[Callable[[int, np.ndarray, np.ndarray], None]] = None):
    """Unmix ``cube``; returns ``(SolverState, RunReport)``.

    Args:
        cube: observed data.
        config: solver parameters; the variant preset overrides some of them.
        variant: name from :data:`VARIANTS` or a :class:`VariantSpec`.
        init: ``"vca-fcls"`` or ``"random"``; ignored when ``initial`` is given.
        n_endmembers: number of endmembers ``c`` (inferred from ``initial``).
        labels: precomputed crisp cluster labels; FCM runs when they are needed
            and absent.
        initial: optional ``(A0, S0)`` starting matrices.
        ground_truth: optional ``(A_true, S_true)``; adds an evaluation block.
        callback: called as ``callback(i, A, S)`` after every iteration.
    """
    t0 = time.perf_counter()
    variant_name = variant.preset if isinstance(variant, VariantSpec) else str(variant).replace("-", "_")
    cfg = resolve_variant(config, variant)
    Y = cube.data

    if initial is not None:
        A0, S0 = initial
        init_name = "given"
    else:
        if n_endmembers is None:
            raise ValueError("n_endmembers is required without an initial (A, S)")
        A0, S0 = initialize(cube, n_endmembers, init, cfg.seed)
        init_name = init
    A = np.array(_raw(A0), dtype=np.float64, order="F")
    S = np.array(_raw(S0), dtype=np.float64, order="F")
    if A.shape[0] != cube.bands or S.shape[1] != cube.n_pixels or A.shape[1] != S.shape[0]:
        raise ValueError(f"initial shapes A{A.shape}, S{S.shape} do not fit cube "
                         f"({cube.bands} bands, {cube.n_pixels} pixels)")
    c = A.shape[1]
    A = np.maximum(A, MU_DELTA)

    lam = lambda_auto(cube) if cfg.lambda_mode == "auto" else float(cfg.lambda_mode)

    fcm_iterations = None
    W = None
    if cfg.eta:
        if cfg.clusters > 1:
            if labels is None:
                fcm_rng, _ = _seeds(cfg.seed)
                res = fcm_cluster(cube, cfg.clusters, m=cfg.fcm_m, tol=cfg.fcm_tol,
                                  max_iter=cfg.fcm_max_iter, seed=fcm_rng)
                labels, fcm_iterations = res.labels, res.iterations
        else:
            labels = np.zeros(cube.n_pixels, dtype=np.intp)
        graph = build_graph(cube, cfg.connectivity, labels)
        W = graph.weight_matrix(restrict_to_clusters=True, renormalize=cfg.renormalize_rho)

    history = []
    J_old = total_cost(Y, A, S, W, cfg.eta, lam, cfg.q)
    initial_cost = J_old
    stopped_by = "max_iter"
    i = 0
    while i < cfg.max_iter:
        A = signature_step(A, S, Y)
        S = abundance_sweep(Y, A, S, W, cfg, lam)
        i += 1
        J = total_cost(Y, A, S, W, cfg.eta, lam, cfg.q)
        history.append(J)
        if callback is not None:
            callback(i, A, S)
        if not np.isfinite(J):
            raise SolverDivergence(f"cost became non-finite at iteration {i}; reduce mu (mu={cfg.mu})")
        if len(history) > 10:
            window = history[-11:]
            if all(b > a for a, b in zip(window, window[1:])) and window[-1] > 10 * window[0]:
                raise SolverDivergence(
                    f"cost grew from {window[0]:.4g} to {window[-1]:.4g} over 10 iterations; "
                    f"step size mu={cfg.mu} is too large")
        if abs(J - J_old) < cfg.epsilon:
            stopped_by = "tolerance"
            break
        J_old = J

    state = SolverState(A=SignatureMatrix(A), S=AbundanceMatrix(S), iteration=i,
                        cost_history=history, lam=lam, stopped_by=stopped_by)
    evaluation = None
    if ground_truth is not None:
        from .metrics import evaluate
        A_true, S_true = ground_truth
        evaluation = evaluate(A_true, S_true, state.A, state.S, cube).to_dict()
    report = RunReport(variant=variant_name, config=cfg.to_dict(), lam=lam, iterations=i,
                       stopped_by=stopped_by, cost_history=history, initial_cost=initial_cost,
                       init=init_name, n_endmembers=c, fcm_iterations=fcm_iterations,
                       wall_seconds=time.perf_counter() - t0, evaluation=evaluation)
    return state, report
