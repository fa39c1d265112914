"""From run directories to cluster, keyword and shift reports."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..storage import DayRecord, RunManifest, load_run, write_csv
from .cluster import ClusterReport, ShiftReport, cluster_keywords, cluster_shift, kmeans
from .reduce import TSNEResult, pca, tsne
from .vectorize import Document, HttpEmbedder, VectorSet, embedding_matrix, tfidf_matrix

log = logging.getLogger(__name__)

DIGITS = 6  # rounding applied to every float written to disk


def documents_from_run(manifest: RunManifest, records: Sequence[DayRecord]) -> list[Document]:
    """One document per agent-day; the arm (treatment or control) sets the condition.

    Benchmark records carry no text and are skipped.
    """
    condition = "Blackout" if manifest.spec.get("blackout_days") else "Normal"
    docs = []
    for r in records:
        text = " ".join(t for t in (r.thoughts, r.reflection, r.journal) if t).strip()
        if not text:
            continue
        docs.append(Document(f"{r.run_id}/{r.repetition}/{r.day}", r.run_id, r.persona, r.day, condition, text))
    return docs


def load_documents(run_dirs: Sequence[Path]) -> list[Document]:
    docs: list[Document] = []
    for d in run_dirs:
        manifest, records = load_run(Path(d))
        docs.extend(documents_from_run(manifest, records))
    return docs


@dataclass
class Analysis:
    docs: list[Document]
    vectors: VectorSet
    clusters: ClusterReport
    layout: TSNEResult | None
    shift: ShiftReport | None


def analyze(
    docs: Sequence[Document],
    k: int = 5,
    seed: int = 0,
    embedder: HttpEmbedder | None = None,
    pca_dims: int = 50,
    perplexity: float = 30.0,
    iterations: int = 1000,
    cluster_space: str = "embedding",
    top_m: int = 9,
    run_tsne: bool = True,
) -> Analysis:
    """Vectorize, lay out with PCA + t-SNE, cluster, and measure shifts.

    Keywords always come from TF-IDF, whatever vectors were clustered. The
    shift report is ``None`` unless every persona appears in both conditions.
    """
    if not docs:
        raise ValueError("no documents to analyze")
    if cluster_space not in ("embedding", "tsne"):
        raise ValueError("cluster_space must be 'embedding' or 'tsne'")
    docs = list(docs)
    tfidf = tfidf_matrix(docs)
    vectors = embedding_matrix(docs, embedder) if embedder is not None else tfidf

    layout = None
    if run_tsne or cluster_space == "tsne":
        X = vectors.matrix
        dims = min(pca_dims, *X.shape)
        if dims < X.shape[1]:
            X = pca(X, dims).scores
        layout = tsne(X, perplexity=perplexity, iterations=iterations, seed=seed)

    space = layout.embedding if cluster_space == "tsne" else vectors.matrix
    report = kmeans(space, k=k, seed=seed)
    report.keywords = cluster_keywords(tfidf, report.labels, top_m)

    personas = {d.persona for d in docs}
    have = {(d.persona, d.condition) for d in docs}
    shift = None
    if all((p, c) in have for p in personas for c in ("Normal", "Blackout")):
        shift = cluster_shift(report.labels, docs, k)
    return Analysis(docs, vectors, report, layout, shift)


def write_analysis(result: Analysis, out_dir: Path) -> list[Path]:
    """cluster_report.json, shift_report.json (when defined), tsne.csv, keywords.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    cr = result.clusters.to_dict(DIGITS)
    cr["doc_ids"] = [d.doc_id for d in result.docs]
    cr["source"] = result.vectors.source
    path = out_dir / "cluster_report.json"
    path.write_text(json.dumps(cr, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)

    if result.shift is not None:
        path = out_dir / "shift_report.json"
        path.write_text(json.dumps(result.shift.to_dict(DIGITS), indent=1, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)

    rows = [[c, rank, term, f"{score:.{DIGITS}f}"]
            for c, terms in sorted(result.clusters.keywords.items())
            for rank, (term, score) in enumerate(terms, start=1)]
    written.append(write_csv(out_dir / "keywords.csv", ["cluster", "rank", "term", "score"], rows))

    if result.layout is not None:
        Y = np.round(result.layout.embedding, DIGITS)
        rows = [
            [d.doc_id, f"{x:.{DIGITS}f}", f"{y:.{DIGITS}f}", int(label), d.persona, d.condition, d.day]
            for d, (x, y), label in zip(result.docs, Y, result.clusters.labels)
        ]
        header = ["doc_id", "x", "y", "label", "persona", "condition", "day"]
        written.append(write_csv(out_dir / "tsne.csv", header, rows))
    return written
