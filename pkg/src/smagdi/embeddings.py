"""Text embedders for node features."""

from __future__ import annotations

import hashlib
import re
from typing import Protocol, Sequence

import numpy as np

from .errors import SmagdiError

_TOKEN = re.compile(r"[a-z0-9']+")


class TextEmbedder(Protocol):
    dim: int

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


class EmbeddingError(SmagdiError):
    def __init__(self, node_id: int, cause: BaseException):
        super().__init__(f"embedding failed for node {node_id}: {cause}")
        self.node_id = node_id
        self.cause = cause


class HashingEmbedder:
    """Signed feature hashing of unigrams and bigrams, L2-normalized.

    Deterministic across processes (blake2b, not ``hash()``). The empty string
    maps to the zero vector.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim

    def _bucket(self, token: str) -> tuple[int, float]:
        h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")
        return h % self.dim, 1.0 if (h >> 63) & 1 else -1.0

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            toks = _TOKEN.findall(text.lower())
            for tok in toks + [a + " " + b for a, b in zip(toks, toks[1:])]:
                j, sign = self._bucket(tok)
                out[i, j] += sign
            norm = np.linalg.norm(out[i])
            if norm > 0:
                out[i] /= norm
        return out


class SentenceTransformerEmbedder:
    """Adapter over ``sentence_transformers`` (default model all-mpnet-base-v2, width 768).

    The width is read from the loaded model rather than assumed.
    """

    def __init__(self, model_name: str = "sentence-transformers/all-mpnet-base-v2", device: str = "cpu"):
        from sentence_transformers import SentenceTransformer

        self.model = SentenceTransformer(model_name, device=device)
        self.dim = int(self.model.get_sentence_embedding_dimension())

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        return np.asarray(self.model.encode(list(texts), convert_to_numpy=True), dtype=np.float64)


def embed_nodes(texts: Sequence[str], embedder: TextEmbedder, node_ids: Sequence[int] | None = None) -> np.ndarray:
    """One row per text. Failures are re-raised naming the node they came from."""
    node_ids = list(range(len(texts))) if node_ids is None else list(node_ids)
    try:
        vecs = np.asarray(embedder.encode(list(texts)), dtype=np.float64)
    except Exception:
        # batch failed: find the culprit node
        for nid, text in zip(node_ids, texts):
            try:
                embedder.encode([text])
            except Exception as exc:
                raise EmbeddingError(nid, exc) from exc
        raise
    if vecs.shape != (len(texts), embedder.dim):
        raise SmagdiError(f"embedder returned shape {vecs.shape}, expected {(len(texts), embedder.dim)}")
    return vecs
