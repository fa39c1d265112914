"""k-means, per-cluster keywords and cluster-distribution shifts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .vectorize import Document, VectorSet, tfidf_matrix

CONDITIONS = ("Normal", "Blackout")


class MissingCondition(ValueError):
    pass


@dataclass
class ClusterReport:
    k: int
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_trace: list[float] = field(default_factory=list)
    n_iter: int = 0
    keywords: dict[int, list[tuple[str, float]]] = field(default_factory=dict)

    def to_dict(self, digits: int = 10) -> dict:
        return {
            "k": self.k,
            "labels": [int(x) for x in self.labels],
            "centroids": np.round(self.centroids, digits).tolist(),
            "inertia": round(float(self.inertia), digits),
            "n_iter": self.n_iter,
            "keywords": {
                str(c): [[t, round(float(s), digits)] for t, s in terms]
                for c, terms in sorted(self.keywords.items())
            },
        }


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] + (C * C).sum(1)[None, :] - 2.0 * X @ C.T
    return np.maximum(d, 0.0)


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a centre; pick any unused index
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(free))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(X, X[[idx]])[:, 0])
    return X[chosen].copy()


def kmeans(
    vectors: VectorSet | np.ndarray,
    k: int = 5,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> ClusterReport:
    """Lloyd's algorithm from a seeded k-means++ start.

    Stops once no centroid moves more than ``tol``. A cluster that empties is
    re-seeded at the point farthest from its own centroid.
    """
    X = np.asarray(getattr(vectors, "matrix", vectors), dtype=float)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in 1..n_docs={n}")
    rng = np.random.default_rng(seed)
    C = _kmeans_pp(X, k, rng)
    trace: list[float] = []
    labels = np.zeros(n, dtype=int)
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(X, C)
        labels = d2.argmin(axis=1)
        point_d2 = d2[np.arange(n), labels]
        trace.append(float(point_d2.sum()))

        counts = np.bincount(labels, minlength=k)
        taken: set[int] = set()
        for j in np.flatnonzero(counts == 0):
            order = np.argsort(-point_d2, kind="stable")
            far = next(int(i) for i in order if int(i) not in taken and counts[labels[i]] > 1)
            taken.add(far)
            counts[labels[far]] -= 1
            labels[far] = j
            counts[j] = 1
            point_d2[far] = 0.0

        new_C = np.zeros_like(C)
        np.add.at(new_C, labels, X)
        new_C /= np.bincount(labels, minlength=k)[:, None]
        shift = float(np.sqrt(((new_C - C) ** 2).sum(axis=1)).max())
        C = new_C
        if shift < tol:
            break

    d2 = _sq_dists(X, C)
    final = d2.argmin(axis=1)
    if np.bincount(final, minlength=k).min() > 0:
        labels = final
    inertia = float(((X - C[labels]) ** 2).sum())
    return ClusterReport(k, labels, C, inertia, trace, it)


def cluster_keywords(
    corpus: Sequence[Document] | VectorSet,
    labels: Sequence[int],
    top_m: int = 9,
) -> dict[int, list[tuple[str, float]]]:
    """Top terms per cluster by mean TF-IDF weight inside the cluster.

    Ties are broken alphabetically; terms with zero weight are never listed.
    """
    vs = corpus if isinstance(corpus, VectorSet) else tfidf_matrix(corpus)
    if vs.vocab is None:
        raise ValueError("keyword extraction needs a TF-IDF vector set")
    labels = np.asarray(labels)
    if len(labels) != vs.matrix.shape[0]:
        raise ValueError("labels and corpus differ in length")
    out: dict[int, list[tuple[str, float]]] = {}
    for c in sorted(set(int(x) for x in labels)):
        scores = vs.matrix[labels == c].mean(axis=0)
        ranked = sorted(
            ((float(s), term) for term, s in zip(vs.vocab, scores) if s > 0),
            key=lambda st: (-st[0], st[1]),
        )
        out[c] = [(term, s) for s, term in ranked[:top_m]]
    return out


@dataclass
class ShiftReport:
    k: int
    histograms: dict[tuple[str, str], list[float]]
    deltas: dict[str, list[float]]

    def dominant_delta(self, persona: str) -> tuple[int, float]:
        """(cluster, Blackout - Normal) for the cluster most frequent in the Blackout arm."""
        hist = self.histograms[(persona, "Blackout")]
        c = int(np.argmax(hist))
        return c, self.deltas[persona][c]

    def max_abs_delta(self, persona: str) -> float:
        return float(np.max(np.abs(self.deltas[persona])))

    def to_dict(self, digits: int = 10) -> dict:
        return {
            "k": self.k,
            "histograms": {
                f"{p}/{c}": [round(v, digits) for v in h] for (p, c), h in sorted(self.histograms.items())
            },
            "deltas": {p: [round(v, digits) for v in d] for p, d in sorted(self.deltas.items())},
        }


def cluster_shift(labels: Sequence[int], docs: Sequence[Document], k: int | None = None) -> ShiftReport:
    """Per persona, normalized cluster frequencies in each condition and Blackout - Normal."""
    labels = [int(x) for x in labels]
    if len(labels) != len(docs):
        raise ValueError("labels and docs differ in length")
    k = k if k is not None else max(labels) + 1
    counts: dict[tuple[str, str], np.ndarray] = {}
    for label, doc in zip(labels, docs):
        if doc.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {doc.condition!r}")
        counts.setdefault((doc.persona, doc.condition), np.zeros(k))[label] += 1
    personas = sorted({p for p, _ in counts})
    hists: dict[tuple[str, str], list[float]] = {}
    deltas: dict[str, list[float]] = {}
    for p in personas:
        for cond in CONDITIONS:
            if (p, cond) not in counts:
                raise MissingCondition(f"persona {p} has no {cond} documents")
            c = counts[(p, cond)]
            hists[(p, cond)] = (c / c.sum()).tolist()
        deltas[p] = (np.array(hists[(p, "Blackout")]) - np.array(hists[(p, "Normal")])).tolist()
    return ShiftReport(k, hists, deltas)
