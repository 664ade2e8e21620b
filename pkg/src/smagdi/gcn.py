"""Graph convolutional network over padded interaction-graph batches."""

from __future__ import annotations

from pathlib import Path

import torch
from torch import nn

from .batching import GraphBatch
from .errors import ValidationError

CHECKPOINT_FORMAT = "smagdi-gcn"
CHECKPOINT_VERSION = 1


class GCNParams(nn.Module):
    """Propagation weights ``W^(l)`` (no bias) plus an affine correctness classifier.

    Layer ``l`` computes ``A_norm @ H @ W^(l)``, with ReLU between layers and no
    activation after the last one.
    """

    def __init__(self, in_dim: int, hidden_dim: int = 256, num_layers: int = 2, dtype=torch.float32):
        super().__init__()
        if num_layers < 1:
            raise ValidationError("num_layers must be >= 1")
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        dims = [in_dim] + [hidden_dim] * num_layers
        self.layer_weights = nn.ParameterList(
            nn.Parameter(torch.empty(dims[i], dims[i + 1], dtype=dtype)) for i in range(num_layers)
        )
        self.classifier = nn.Linear(hidden_dim, 1, dtype=dtype)
        self.reset_parameters()

    def reset_parameters(self):
        for w in self.layer_weights:
            nn.init.xavier_uniform_(w)
        nn.init.normal_(self.classifier.weight, std=0.01)
        nn.init.zeros_(self.classifier.bias)

    def config(self) -> dict:
        return {"in_dim": self.in_dim, "hidden_dim": self.hidden_dim, "num_layers": self.num_layers}


def batch_tensors(batch: GraphBatch, dtype=torch.float32):
    x = torch.as_tensor(batch.node_features, dtype=dtype)
    adj = torch.as_tensor(batch.adjacency, dtype=dtype)
    mask = torch.as_tensor(batch.node_mask)
    return x, adj, mask


def gcn_forward(batch: GraphBatch | tuple, params: GCNParams) -> torch.Tensor:
    """Node embeddings ``[B, N_max, hidden_dim]``; padded rows come out zero."""
    dtype = params.layer_weights[0].dtype
    x, adj, mask = batch_tensors(batch, dtype) if isinstance(batch, GraphBatch) else batch
    if x.shape[-1] != params.in_dim:
        raise ValidationError(f"feature width {x.shape[-1]} does not match GCN input {params.in_dim}")
    if adj.shape[-1] != x.shape[-2] or adj.shape[-2] != x.shape[-2]:
        raise ValidationError(f"adjacency {tuple(adj.shape)} does not match features {tuple(x.shape)}")
    h = x
    for i, w in enumerate(params.layer_weights):
        h = adj @ (h @ w)
        if i < params.num_layers - 1:
            h = torch.relu(h)
    return h * mask.unsqueeze(-1).to(h.dtype)


def node_logits(embeddings: torch.Tensor, params: GCNParams) -> torch.Tensor:
    """Pre-sigmoid correctness scores ``[B, N_max]``."""
    return params.classifier(embeddings).squeeze(-1)


def save_gcn(params: GCNParams, path: str | Path) -> None:
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": params.config(),
            "shapes": {k: list(v.shape) for k, v in params.state_dict().items()},
            "state_dict": params.state_dict(),
        },
        path,
    )


def load_gcn(path: str | Path) -> GCNParams:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"{path} is not a version-{CHECKPOINT_VERSION} GCN checkpoint")
    state = payload["state_dict"]
    dtype = next(iter(state.values())).dtype
    params = GCNParams(**payload["config"], dtype=dtype)
    for name, shape in payload["shapes"].items():
        if list(state[name].shape) != shape:
            raise ValidationError(f"{path}: tensor {name} has shape {list(state[name].shape)}, manifest says {shape}")
    params.load_state_dict(state)
    return params
