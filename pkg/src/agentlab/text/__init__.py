"""Transcript analytics: vectorization, PCA, t-SNE, k-means, keywords, shifts."""

from .cluster import ClusterReport, MissingCondition, ShiftReport, cluster_keywords, cluster_shift, kmeans
from .pipeline import Analysis, analyze, documents_from_run, load_documents, write_analysis
from .reduce import PCAResult, TooFewPoints, TSNEResult, pca, tsne
from .vectorize import Document, EmptyVocabulary, HttpEmbedder, VectorSet, cosine, embedding_matrix, tfidf_matrix

__all__ = [
    "Analysis",
    "ClusterReport",
    "Document",
    "EmptyVocabulary",
    "HttpEmbedder",
    "MissingCondition",
    "PCAResult",
    "ShiftReport",
    "TSNEResult",
    "TooFewPoints",
    "VectorSet",
    "analyze",
    "cluster_keywords",
    "cluster_shift",
    "cosine",
    "documents_from_run",
    "embedding_matrix",
    "kmeans",
    "load_documents",
    "pca",
    "tfidf_matrix",
    "tsne",
    "write_analysis",
]
