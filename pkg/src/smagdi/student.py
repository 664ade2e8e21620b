"""Decomposer-solver student: a tiny reference causal LM, projection heads and a chain scorer."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ValidationError

CHECKPOINT_FORMAT = "smagdi-student"
CHECKPOINT_VERSION = 1


class ByteTokenizer:
    """UTF-8 bytes plus BOS/EOS/PAD."""

    BOS = 256
    EOS = 257
    PAD = 258
    vocab_size = 259

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def decode(self, ids: Sequence[int]) -> str:
        return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")


class CausalLM(Protocol):
    def forward(self, tokens: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]: ...

    def generate(self, prompt: str, max_tokens: int = 128, temperature: float = 0.0) -> str: ...


@dataclass(frozen=True)
class LMConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 256


def _sinusoid(max_len: int, dim: int) -> torch.Tensor:
    pos = torch.arange(max_len, dtype=torch.float64).unsqueeze(1)
    freq = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    table = torch.zeros(max_len, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(pos * freq)
    table[:, 1::2] = torch.cos(pos * freq)
    return table.float()


class _Block(nn.Module):
    def __init__(self, cfg: LMConfig):
        super().__init__()
        self.n_heads = cfg.n_heads
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.qkv = nn.Linear(cfg.d_model, 3 * cfg.d_model)
        self.out = nn.Linear(cfg.d_model, cfg.d_model)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ff = nn.Sequential(nn.Linear(cfg.d_model, cfg.d_ff), nn.GELU(), nn.Linear(cfg.d_ff, cfg.d_model))

    def forward(self, x):
        b, t, d = x.shape
        q, k, v = self.qkv(self.ln1(x)).split(d, dim=-1)
        shape = (b, t, self.n_heads, d // self.n_heads)
        q, k, v = (z.view(shape).transpose(1, 2) for z in (q, k, v))
        att = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        x = x + self.out(att.transpose(1, 2).reshape(b, t, d))
        return x + self.ff(self.ln2(x))


class TinyCausalLM(nn.Module):
    """Pre-LN decoder-only transformer over bytes with tied input/output embeddings.

    Right padding is safe without a key mask because attention is causal.
    """

    def __init__(self, cfg: LMConfig = LMConfig(), seed: int = 0):
        super().__init__()
        if cfg.d_model % cfg.n_heads:
            raise ValidationError("d_model must be divisible by n_heads")
        self.cfg = cfg
        self.seed = seed
        self.tokenizer = ByteTokenizer()
        self.embed = nn.Embedding(self.tokenizer.vocab_size, cfg.d_model)
        self.register_buffer("pos", _sinusoid(cfg.max_len, cfg.d_model), persistent=False)
        self.blocks = nn.ModuleList(_Block(cfg) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(cfg.d_model)
        nn.init.normal_(self.embed.weight, std=0.02)

    @property
    def hidden_size(self) -> int:
        return self.cfg.d_model

    def forward(self, tokens: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """``[B, T]`` or ``[T]`` ids -> (logits ``[..., T, V]``, hidden ``[..., T, H]``)."""
        squeeze = tokens.dim() == 1
        if squeeze:
            tokens = tokens.unsqueeze(0)
        t = tokens.shape[1]
        if t > self.cfg.max_len:
            raise ValidationError(f"sequence length {t} exceeds max_len {self.cfg.max_len}")
        x = self.embed(tokens) + self.pos[:t]
        for block in self.blocks:
            x = block(x)
        hidden = self.ln_f(x)
        logits = hidden @ self.embed.weight.T
        if squeeze:
            return logits[0], hidden[0]
        return logits, hidden

    @torch.no_grad()
    def generate(self, prompt: str, max_tokens: int = 128, temperature: float = 0.0) -> str:
        """Greedy at temperature 0; otherwise sampling seeded from (model seed, prompt)."""
        tok = self.tokenizer
        ids = [tok.BOS] + tok.encode(prompt)
        gen = None
        if temperature > 0:
            digest = hashlib.blake2b(f"{self.seed}|{prompt}".encode(), digest_size=8).digest()
            gen = torch.Generator().manual_seed(int.from_bytes(digest, "big") & (2**63 - 1))
        out: list[int] = []
        was_training = self.training
        self.eval()
        try:
            for _ in range(max_tokens):
                window = (ids + out)[-self.cfg.max_len :]
                logits, _ = self.forward(torch.tensor(window))
                last = logits[-1, : tok.EOS + 1]  # never emit BOS/PAD
                last = last.clone()
                last[tok.BOS] = -float("inf")
                if gen is None:
                    nxt = int(torch.argmax(last))
                else:
                    probs = torch.softmax(last / temperature, dim=-1)
                    nxt = int(torch.multinomial(probs, 1, generator=gen))
                if nxt == tok.EOS:
                    break
                out.append(nxt)
        finally:
            self.train(was_training)
        return tok.decode(out)


def encode_examples(
    tokenizer: ByteTokenizer, prompts: Sequence[str], completions: Sequence[str], max_len: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Right-padded ``[BOS] prompt completion [EOS]`` sequences.

    Returns (tokens ``[B, T]``, target mask ``[B, T-1]`` marking positions whose
    next token belongs to the completion, token mask ``[B, T]`` of non-pad ids).
    Over-long examples lose prompt bytes from the left first, then completion
    bytes from the right.
    """
    rows, masks = [], []
    for prompt, completion in zip(prompts, completions):
        p = tokenizer.encode(prompt)
        c = tokenizer.encode(completion) + [tokenizer.EOS]
        budget = max_len - 1
        if len(c) > budget - 1:
            c = c[: budget - 1]
        p = p[max(0, len(p) - (budget - len(c))) :]
        seq = [tokenizer.BOS] + p + c
        rows.append(seq)
        masks.append([False] * (1 + len(p) - 1) + [True] * len(c))
    t = max(len(r) for r in rows)
    tokens = torch.full((len(rows), t), tokenizer.PAD, dtype=torch.long)
    target_mask = torch.zeros((len(rows), t - 1), dtype=torch.bool)
    for i, (r, m) in enumerate(zip(rows, masks)):
        tokens[i, : len(r)] = torch.tensor(r)
        target_mask[i, : len(m)] = torch.tensor(m)
    return tokens, target_mask, tokens != tokenizer.PAD


def encode_texts(tokenizer: ByteTokenizer, texts: Sequence[str], max_len: int) -> tuple[torch.Tensor, torch.Tensor]:
    """``[BOS] text`` right-padded, keeping the first ``max_len`` ids."""
    rows = [([tokenizer.BOS] + tokenizer.encode(t))[:max_len] for t in texts]
    t = max(len(r) for r in rows)
    tokens = torch.full((len(rows), t), tokenizer.PAD, dtype=torch.long)
    for i, r in enumerate(rows):
        tokens[i, : len(r)] = torch.tensor(r)
    return tokens, tokens != tokenizer.PAD


def mean_pool(hidden: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    m = mask.to(hidden.dtype).unsqueeze(-1)
    return (hidden * m).sum(dim=-2) / m.sum(dim=-2).clamp(min=1.0)


class StudentUnit(nn.Module):
    """Decomposer and solver LMs trained jointly.

    ``proj_dec``/``proj_sol`` map pooled hidden states into a shared space of width
    ``proj_dim``; ``chain_scorer`` reads pooled solver states.
    """

    def __init__(self, lm_config: LMConfig = LMConfig(), proj_dim: int = 128, seed: int = 42):
        super().__init__()
        torch.manual_seed(seed)
        self.lm_config = lm_config
        self.proj_dim = proj_dim
        self.seed = seed
        self.decomposer = TinyCausalLM(lm_config, seed=seed)
        self.solver = TinyCausalLM(lm_config, seed=seed + 1)
        h = lm_config.d_model
        self.proj_dec = nn.Linear(h, proj_dim)
        self.proj_sol = nn.Linear(h, proj_dim)
        self.chain_scorer = nn.Linear(h, 1)
        self.tokenizer = ByteTokenizer()

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def config(self) -> dict:
        return {"lm_config": asdict(self.lm_config), "proj_dim": self.proj_dim, "seed": self.seed}

    @classmethod
    def from_config(cls, config: dict) -> "StudentUnit":
        return cls(LMConfig(**config["lm_config"]), config["proj_dim"], config["seed"])

    def pooled(self, lm: TinyCausalLM, texts: Sequence[str]) -> torch.Tensor:
        tokens, mask = encode_texts(self.tokenizer, texts, self.lm_config.max_len)
        _, hidden = lm(tokens)
        return mean_pool(hidden, mask)

    def score_chains(self, texts: Sequence[str]) -> torch.Tensor:
        return self.chain_scorer(self.pooled(self.solver, texts)).squeeze(-1)


def score_chain(student: StudentUnit, chain_text: str) -> torch.Tensor:
    """Scalar score of one reasoning chain from mean-pooled solver states."""
    if not student.tokenizer.encode(chain_text):
        raise ValidationError("cannot score an empty chain")
    return student.score_chains([chain_text])[0]


def save_student(student: StudentUnit, path: str | Path, extra: dict | None = None) -> None:
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": student.config(),
            "state_dict": student.state_dict(),
            **(extra or {}),
        },
        path,
    )


def load_student(path: str | Path) -> StudentUnit:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"{path} is not a version-{CHECKPOINT_VERSION} student checkpoint")
    student = StudentUnit.from_config(payload["config"])
    student.load_state_dict(payload["state_dict"])
    return student
