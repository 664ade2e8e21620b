"""Node features and padded, masked batches of interaction graphs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import TextEmbedder, embed_nodes
from .errors import ContractError, ValidationError
from .graph import RESPONSE, InteractionGraph
from .spectral import laplacian_pe

DEFAULT_PE_DIM = 8


def featurize(graph: InteractionGraph, embedder: TextEmbedder, pe_dim: int = DEFAULT_PE_DIM) -> InteractionGraph:
    """Attach semantic embeddings and positional encodings to every node.

    Graphs with fewer than ``pe_dim + 1`` nodes are encoded at ``|V| - 1``
    dimensions and zero-padded, so every graph ends up ``pe_dim`` wide.
    """
    sem = embed_nodes([n.text for n in graph.nodes], embedder, [n.node_id for n in graph.nodes])
    k = min(pe_dim, graph.num_nodes - 1)
    pe = np.zeros((graph.num_nodes, pe_dim))
    pe[:, :k] = laplacian_pe(graph, k)
    return graph.with_features(sem, pe)


def weighted_adjacency(graph: InteractionGraph) -> np.ndarray:
    """Directed edge weights symmetrized: ``A + A^T``."""
    a = np.zeros((graph.num_nodes, graph.num_nodes))
    for e in graph.edges:
        a[e.src, e.dst] += e.weight
    return a + a.T


def normalized_adjacency(graph: InteractionGraph) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` with the degree taken from ``A + I``."""
    a_hat = weighted_adjacency(graph) + np.eye(graph.num_nodes)
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return inv_sqrt[:, None] * a_hat * inv_sqrt[None, :]


@dataclass
class GraphBatch:
    node_features: np.ndarray  # [B, N_max, D_sem + k]
    adjacency: np.ndarray  # [B, N_max, N_max]
    node_mask: np.ndarray  # [B, N_max] real nodes
    labels: np.ndarray  # [B, N_max] correctness as 0/1
    label_mask: np.ndarray  # [B, N_max] nodes carrying a correctness label
    question_ids: list[str]

    @property
    def num_graphs(self) -> int:
        return self.node_features.shape[0]

    def num_nodes(self, i: int) -> int:
        return int(self.node_mask[i].sum())


def node_features(graph: InteractionGraph) -> np.ndarray:
    dims = {(len(n.semantic_embedding), len(n.positional_encoding)) for n in graph.nodes}
    if len(dims) != 1:
        raise ValidationError(f"{graph.question_id}: nodes have inconsistent feature widths {sorted(dims)}")
    (d_sem, k), = dims
    if d_sem == 0:
        raise ValidationError(f"{graph.question_id}: nodes have no semantic embedding; featurize first")
    return np.array([n.semantic_embedding + n.positional_encoding for n in graph.nodes], dtype=np.float64)


def tensorize(graphs: Sequence[InteractionGraph]) -> GraphBatch:
    if not graphs:
        raise ContractError("cannot tensorize an empty list of graphs")
    feats = [node_features(g) for g in graphs]
    widths = {f.shape[1] for f in feats}
    if len(widths) != 1:
        raise ValidationError(f"feature widths differ across graphs: {sorted(widths)}")
    width = widths.pop()
    b = len(graphs)
    n_max = max(g.num_nodes for g in graphs)
    x = np.zeros((b, n_max, width))
    adj = np.zeros((b, n_max, n_max))
    mask = np.zeros((b, n_max), dtype=bool)
    labels = np.zeros((b, n_max))
    label_mask = np.zeros((b, n_max), dtype=bool)
    for i, (g, f) in enumerate(zip(graphs, feats)):
        n = g.num_nodes
        x[i, :n] = f
        adj[i, :n, :n] = normalized_adjacency(g)
        mask[i, :n] = True
        for node in g.nodes:
            if node.kind == RESPONSE and node.correct is not None:
                labels[i, node.node_id] = float(node.correct)
                label_mask[i, node.node_id] = True
    return GraphBatch(x, adj, mask, labels, label_mask, [g.question_id for g in graphs])


def unpad(batch: GraphBatch, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Features and adjacency of graph ``i`` with padding stripped."""
    n = batch.num_nodes(i)
    return batch.node_features[i, :n], batch.adjacency[i, :n, :n]
