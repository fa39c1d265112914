"""Documents and their vector representations (TF-IDF or external embeddings)."""

from __future__ import annotations

import os
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Sequence

import httpx
import numpy as np

from ..agent.backends import API_KEY_ENV, BASE_URL_ENV, BackendError, post_json_with_retry

_SPLIT = re.compile(r"[^0-9a-z]+")


class EmptyVocabulary(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    run_id: str
    persona: str
    day: int
    condition: str  # "Normal" or "Blackout"
    text: str


@dataclass(frozen=True)
class VectorSet:
    matrix: np.ndarray
    doc_ids: tuple[str, ...]
    vocab: tuple[str, ...] | None = None
    idf: np.ndarray | None = None
    source: str = "tfidf"


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    text = resources.files("agentlab.text").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def tokenize(text: str) -> list[str]:
    stop = stopwords()
    return [t for t in _SPLIT.split(text.lower()) if len(t) >= 2 and t not in stop]


def tfidf_matrix(corpus: Sequence[Document] | Sequence[str]) -> VectorSet:
    """Raw-count tf times smoothed idf ``ln((1+N)/(1+df)) + 1``, rows L2-normalized."""
    if not corpus:
        raise ValueError("corpus is empty")
    texts = [d if isinstance(d, str) else d.text for d in corpus]
    ids = tuple(str(i) if isinstance(d, str) else d.doc_id for i, d in enumerate(corpus))
    counts = [Counter(tokenize(t)) for t in texts]
    vocab = sorted(set().union(*counts))
    if not vocab:
        raise EmptyVocabulary("every document tokenized to nothing")
    index = {term: j for j, term in enumerate(vocab)}
    n = len(texts)
    tf = np.zeros((n, len(vocab)))
    for i, c in enumerate(counts):
        for term, k in c.items():
            tf[i, index[term]] = k
    df = (tf > 0).sum(axis=0)
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    weights = tf * idf
    norms = np.linalg.norm(weights, axis=1, keepdims=True)
    # documents made only of stopwords keep a zero row
    weights = np.divide(weights, norms, out=np.zeros_like(weights), where=norms > 0)
    return VectorSet(weights, ids, tuple(vocab), idf, "tfidf")


class HttpEmbedder:
    """Client for an OpenAI-style ``/embeddings`` endpoint."""

    def __init__(
        self,
        model_name: str,
        base_url: str | None = None,
        api_key: str | None = None,
        batch_size: int = 64,
        max_retries: int = 3,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 60.0,
        sleep: Callable[[float], None] | None = None,
    ):
        api_key = api_key or os.environ.get(API_KEY_ENV)
        if not api_key:
            raise BackendError(f"missing {API_KEY_ENV}", category="config")
        base_url = base_url or os.environ.get(BASE_URL_ENV)
        if not base_url:
            raise BackendError(f"no base URL given and {BASE_URL_ENV} is unset", category="config")
        self.model_name = model_name
        self.base_url = base_url.rstrip("/")
        self.batch_size = batch_size
        self.max_retries = max_retries
        self.backoff = backoff
        self._headers = {"Authorization": f"Bearer {api_key}"}
        self._client = httpx.Client(transport=transport, timeout=timeout)
        self._sleep = sleep

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows: list[list[float]] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            kwargs = {"sleep": self._sleep} if self._sleep else {}
            data = post_json_with_retry(
                self._client,
                f"{self.base_url}/embeddings",
                {"model": self.model_name, "input": batch},
                self._headers,
                self.max_retries,
                self.backoff,
                **kwargs,
            )
            try:
                got = [item["embedding"] for item in data["data"]]
            except (KeyError, TypeError):
                raise BackendError("unexpected embeddings response shape", category="protocol") from None
            if len(got) != len(batch):
                raise BackendError(f"asked for {len(batch)} embeddings, got {len(got)}", category="protocol")
            rows.extend(got)
        matrix = np.asarray(rows, dtype=float)
        if not np.all(np.isfinite(matrix)):
            raise BackendError("embeddings contain NaN or Inf", category="protocol")
        return matrix


def embedding_matrix(corpus: Sequence[Document], embedder: HttpEmbedder) -> VectorSet:
    matrix = embedder.embed([d.text for d in corpus])
    return VectorSet(matrix, tuple(d.doc_id for d in corpus), source=f"embedding:{embedder.model_name}")


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))

