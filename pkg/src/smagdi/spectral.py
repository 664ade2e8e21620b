"""Laplacian positional encodings."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

ZERO_TOL = 1e-8
CLUSTER_TOL = 1e-6
BASIS_TOL = 1e-8


def skeleton_adjacency(num_nodes: int, edges) -> np.ndarray:
    """Unweighted, undirected 0/1 adjacency from ``(src, dst)`` pairs (self-loops dropped)."""
    a = np.zeros((num_nodes, num_nodes))
    for src, dst in edges:
        if src != dst:
            a[src, dst] = a[dst, src] = 1.0
    return a


def normalized_laplacian(adj: np.ndarray) -> np.ndarray:
    """``I - D^-1/2 A D^-1/2``; isolated nodes get ``D^-1/2 = 0``."""
    deg = adj.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    return np.eye(len(adj)) - inv_sqrt[:, None] * adj * inv_sqrt[None, :]


def canonical_basis(vecs: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(vecs).

    Gram-Schmidt over the projector's columns in node order. The result depends
    only on the subspace, so degenerate eigenvalues get a reproducible basis, and
    each vector's first nonzero component is positive (for a 1-D subspace this is
    exactly the sign flip to a positive leading entry).
    """
    n, m = vecs.shape
    proj = vecs @ vecs.T
    basis: list[np.ndarray] = []
    for i in range(n):
        u = proj[:, i].copy()
        for b in basis:
            u -= (b @ u) * b
        norm = np.linalg.norm(u)
        if norm > BASIS_TOL:
            basis.append(u / norm)
            if len(basis) == m:
                break
    return np.stack(basis, axis=1)


def laplacian_pe_from_adjacency(adj: np.ndarray, k: int) -> np.ndarray:
    n = adj.shape[0]
    if k < 0 or k >= n:
        raise ValidationError(f"k must satisfy 0 <= k <= |V| - 1 = {n - 1}, got {k}")
    vals, vecs = np.linalg.eigh(normalized_laplacian(adj))
    keep = np.flatnonzero(vals > ZERO_TOL)
    out = np.zeros((n, k))
    col = 0
    i = 0
    while col < k and i < len(keep):
        # group (numerically) equal eigenvalues and canonicalize the eigenspace
        j = i + 1
        while j < len(keep) and vals[keep[j]] - vals[keep[i]] <= CLUSTER_TOL:
            j += 1
        block = canonical_basis(vecs[:, keep[i:j]])
        take = min(block.shape[1], k - col)
        out[:, col : col + take] = block[:, :take]
        col += take
        i = j
    return out


def laplacian_pe(graph, k: int) -> np.ndarray:
    """``[|V|, k]`` encodings from the k smallest nonzero eigenvalues; zero columns pad the rest."""
    adj = skeleton_adjacency(graph.num_nodes, [(e.src, e.dst) for e in graph.edges])
    return laplacian_pe_from_adjacency(adj, k)
