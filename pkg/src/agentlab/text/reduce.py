"""Dimensionality reduction: PCA and exact (O(n^2)) t-SNE."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

MACHINE_EPSILON = np.finfo(np.double).eps


class TooFewPoints(ValueError):
    pass


def _as_matrix(vectors) -> np.ndarray:
    return np.asarray(getattr(vectors, "matrix", vectors), dtype=float)


@dataclass(frozen=True)
class PCAResult:
    scores: np.ndarray  # n x k projections
    components: np.ndarray  # k x dim, orthonormal rows
    explained_variance_ratio: np.ndarray
    mean: np.ndarray
    rank_deficient: bool = False

    def reconstruct(self) -> np.ndarray:
        return self.scores @ self.components + self.mean


def pca(vectors, k: int) -> PCAResult:
    """Top-``k`` principal components of the mean-centred data (via SVD).

    Directions with no variance get a zero ratio and set ``rank_deficient``
    instead of raising.
    """
    X = _as_matrix(vectors)
    n, dim = X.shape
    if not 1 <= k <= min(n, dim):
        raise ValueError(f"k={k} must lie in 1..min(n_docs={n}, dim={dim})")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    # SVD sign is arbitrary; fix it so the largest loading of each component is positive.
    signs = np.sign(vt[np.arange(vt.shape[0]), np.argmax(np.abs(vt), axis=1)])
    signs[signs == 0] = 1.0
    vt = vt * signs[:, None]
    var = s**2
    total = var.sum()
    ratio = var / total if total > 0 else np.zeros_like(var)
    tol = max(n, dim) * MACHINE_EPSILON * (s[0] if s.size else 0.0)
    rank = int((s > tol).sum())
    deficient = rank < k
    if deficient:
        log.info("PCA: data rank %d is below k=%d; trailing components carry no variance", rank, k)
    components = vt[:k]
    return PCAResult(Xc @ components.T, components, ratio[:k], mean, deficient)


@dataclass(frozen=True)
class TSNEResult:
    embedding: np.ndarray
    kl_trace: np.ndarray  # KL(P||Q) of the layout each iteration starts from; index 0 = iteration 1
    entropies: np.ndarray  # per-point conditional entropy (nats) after bandwidth search
    betas: np.ndarray
    perplexity: float

    def kl_at(self, iteration: int) -> float:
        return float(self.kl_trace[iteration - 1])


def _squared_distances(X: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def conditional_probabilities(
    D: np.ndarray, perplexity: float, tol: float = 1e-5, max_steps: int = 200
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise Gaussian affinities whose entropy matches ``log(perplexity)``.

    Returns (P, betas, entropies); ``betas`` are the precisions 1 / (2 sigma^2).
    """
    n = D.shape[0]
    target = math.log(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    entropies = np.zeros(n)
    mask = ~np.eye(n, dtype=bool)
    for i in range(n):
        d = D[i, mask[i]]
        d = d - d.min()  # entropy is invariant to this shift; avoids underflow
        beta, lo, hi = 1.0, -math.inf, math.inf
        for _ in range(max_steps):
            p = np.exp(-d * beta)
            s = p.sum()
            h = math.log(s) + beta * float(d @ p) / s
            diff = h - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == math.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == -math.inf else (beta + lo) / 2.0
        P[i, mask[i]] = p / s
        betas[i] = beta
        entropies[i] = h
    return P, betas, entropies


def _kl(P: np.ndarray, Q: np.ndarray) -> float:
    return float(np.sum(P * np.log(np.maximum(P, MACHINE_EPSILON) / Q)))


def tsne(
    vectors,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float = 200.0,
    exaggeration: float = 12.0,
    exaggeration_iters: int = 250,
) -> TSNEResult:
    """Exact t-SNE to two dimensions.

    Early exaggeration and momentum 0.5 for the first ``exaggeration_iters``
    steps, momentum 0.8 afterwards, with per-parameter adaptive gains.
    """
    X = _as_matrix(vectors)
    n = X.shape[0]
    if n < 5:
        raise TooFewPoints(f"t-SNE needs at least 5 points, got {n}")
    if n < 3 * perplexity:
        perplexity = float(max(1, (n - 1) // 3))
        log.info("t-SNE: perplexity lowered to %g for %d points", perplexity, n)

    Pc, betas, entropies = conditional_probabilities(_squared_distances(X), perplexity)
    P = (Pc + Pc.T) / (2.0 * n)
    P = np.maximum(P, MACHINE_EPSILON)
    np.fill_diagonal(P, 0.0)

    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl_trace = np.zeros(iterations)

    for it in range(iterations):
        early = it < exaggeration_iters
        momentum = 0.5 if early else 0.8
        if it == exaggeration_iters:
            # second phase starts from rest, as in the reference optimizer
            update = np.zeros_like(Y)
            gains = np.ones_like(Y)
        num = 1.0 / (1.0 + _squared_distances(Y))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), MACHINE_EPSILON)
        W = ((exaggeration if early else 1.0) * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)

        flipped = update * grad < 0.0
        gains = np.where(flipped, gains + 0.2, gains * 0.8)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update

        np.fill_diagonal(Q, 1.0)
        kl_trace[it] = _kl(P, Q)

    return TSNEResult(Y, kl_trace, entropies, betas, float(perplexity))
