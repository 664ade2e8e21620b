"""Training-example extraction from interaction graphs and joint student/GCN training."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import torch

from . import scot
from .agents import extract_answer
from .backends import AgentBackend, MockBackend
from .batching import tensorize
from .data import QuestionRecord, same_label
from .errors import NonFiniteLossError, TrainingDivergedError, ValidationError
from .gcn import GCNParams, gcn_forward, node_logits
from .graph import QUESTION, RESPONSE, InteractionGraph
from .losses import (
    LossBundle,
    LossCoefficients,
    alignment_loss,
    contrastive_loss,
    lm_loss,
    node_loss,
    total_loss,
)
from .student import StudentUnit, encode_examples

logger = logging.getLogger(__name__)

POSITIVE = "POSITIVE"
NEGATIVE = "NEGATIVE"
DECOMPOSER = "DECOMPOSER"
SOLVER = "SOLVER"
ALL_KINDS = (POSITIVE, NEGATIVE, DECOMPOSER, SOLVER)

DECOMPOSE_SYNTHESIS = (
    "Decompose the following question into a sequence of simpler sub-questions that, when answered, "
    "would help solve the main question: {question}, based on the agent's responses"
)
SOLVE_SYNTHESIS = "Answer the decompositions similar to the agent's responses"

COMPONENTS = ("lm", "node", "contrast", "align", "total")


@dataclass(frozen=True)
class TrainingExample:
    kind: str
    prompt: str
    completion: str
    source_node_ids: tuple[int, ...]
    question_id: str


def enumerate_paths(graph: InteractionGraph) -> list[list[int]]:
    """All directed paths from the question node to a node with no successors."""
    succ = graph.successors()
    paths: list[list[int]] = []
    stack: list[list[int]] = [[0]]
    while stack:
        path = stack.pop()
        nxt = succ[path[-1]]
        if not nxt and len(path) > 1:
            paths.append(path)
        for m in reversed(sorted(nxt)):
            stack.append(path + [m])
    return paths


def _question_record(graph: InteractionGraph) -> QuestionRecord:
    return QuestionRecord(graph.question_id, graph.question_text, graph.answer_space or (True, False),
                          graph.gold_answer, graph.subject)


def chain_text(graph: InteractionGraph, path: Sequence[int]) -> str:
    """Responses along a path, terminated by an ``Answer:`` marker."""
    lines = []
    for nid in path:
        node = graph.nodes[nid]
        if node.kind == RESPONSE:
            lines.append(f"[{node.agent_id}, round {node.round}] {node.text.strip()}")
    text = "\n".join(lines)
    last = graph.nodes[path[-1]]
    space = graph.answer_space or (True, False)
    if not same_label(extract_answer(text, space), last.answer) or "answer" not in text.lower():
        text += f"\nAnswer: {last.answer}"
    return text


def extract_examples(graph: InteractionGraph, backend: AgentBackend | None = None) -> list[TrainingExample]:
    """POSITIVE: root-to-leaf paths whose every response is correct.
    NEGATIVE: root-to-leaf paths ending in an incorrect response; when no leaf is
    incorrect but some earlier node is, root-to-node prefixes ending at those nodes.
    DECOMPOSER/SOLVER: synthesized from the final-round responses through ``backend``.
    """
    nodes = graph.nodes
    if any(n.kind == RESPONSE and n.correct is None for n in nodes):
        raise ValidationError(f"{graph.question_id}: graph lacks correctness labels")
    backend = backend or MockBackend()
    question = _question_record(graph)
    chain_prompt = scot.composition_prompt(question, [])

    paths = enumerate_paths(graph)
    positives = [p for p in paths if all(nodes[i].correct for i in p[1:])]
    negatives = [p for p in paths if not nodes[p[-1]].correct]
    if not negatives and any(n.kind == RESPONSE and not n.correct for n in nodes):
        negatives = []
        for p in paths:
            for cut in range(len(p) - 1, 0, -1):
                if not nodes[p[cut]].correct:
                    prefix = p[: cut + 1]
                    if prefix not in negatives:
                        negatives.append(prefix)
                    break
    if not positives:
        logger.warning("%s: no fully correct reasoning chain", graph.question_id)

    examples = [
        TrainingExample(POSITIVE, chain_prompt, chain_text(graph, p), tuple(p), graph.question_id) for p in positives
    ]
    examples += [
        TrainingExample(NEGATIVE, chain_prompt, chain_text(graph, p), tuple(p), graph.question_id) for p in negatives
    ]

    last_round = graph.num_rounds
    final_nodes = [n for n in nodes if n.kind == RESPONSE and n.round == last_round]
    final_ids = tuple(n.node_id for n in final_nodes)
    responses = "\n".join(f"{n.agent_id}: {n.text.strip()}" for n in final_nodes)
    base_meta = {"question_id": graph.question_id, "question": graph.question_text}

    synth = DECOMPOSE_SYNTHESIS.format(question=graph.question_text) + "\nAgent responses:\n" + responses
    decomposition = backend.generate(synth, 0.7, 512, meta={**base_meta, "kind": "decompose", "agent_id": "decomposer", "round": 0})
    subs = scot.parse_decomposition(decomposition)
    if not subs:
        logger.warning("%s: synthesized decomposition had no numbered items", graph.question_id)
        return examples
    examples.append(
        TrainingExample(DECOMPOSER, scot.decomposer_prompt(graph.question_text), decomposition.strip(), final_ids,
                        graph.question_id)
    )
    context: list[tuple[str, str]] = []
    for i, sub in enumerate(subs, 1):
        synth = f"{SOLVE_SYNTHESIS}\nAgent responses:\n{responses}\nMain question: {graph.question_text}\nSub-question: {sub}"
        answer = backend.generate(
            synth, 0.7, 512, meta={**base_meta, "kind": "solve", "agent_id": "solver", "round": i, "sub_question": sub}
        ).strip()
        examples.append(
            TrainingExample(SOLVER, scot.solver_prompt(graph.question_text, context, sub), answer, final_ids,
                            graph.question_id)
        )
        context.append((sub, answer))
    return examples


@dataclass
class TrainConfig:
    learning_rate: float = 5e-5
    epochs: int = 7
    early_stopping_patience: int | None = 3
    batch_size: int = 8  # graphs per optimizer step
    checkpoint_dir: str | Path = "checkpoints"
    seed: int = 42
    val_fraction: float = 0.1
    max_pairs_per_graph: int = 4
    max_lm_chains_per_graph: int = 2
    kinds: tuple[str, ...] = ALL_KINDS

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")


@dataclass
class GraphItems:
    """Per-graph training material, fixed once before training."""

    graph: InteractionGraph
    dec_lm: list[tuple[str, str]]
    sol_lm: list[tuple[str, str]]
    pairs: list[tuple[str, str]]
    align: tuple[str, str] | None


def prepare_items(graph: InteractionGraph, examples: Sequence[TrainingExample], config: TrainConfig) -> GraphItems:
    rng = np.random.default_rng([config.seed, sum(graph.question_id.encode())])
    kinds = set(config.kinds)
    by_kind = {k: [e for e in examples if e.kind == k] for k in ALL_KINDS}
    pos, neg = by_kind[POSITIVE], by_kind[NEGATIVE]

    def sample(items, n):
        if len(items) <= n:
            return list(items)
        idx = sorted(rng.choice(len(items), size=n, replace=False))
        return [items[i] for i in idx]

    dec_lm = [(e.prompt, e.completion) for e in by_kind[DECOMPOSER]] if DECOMPOSER in kinds else []
    sol_lm = []
    if POSITIVE in kinds:
        sol_lm += [(e.prompt, e.completion) for e in sample(pos, config.max_lm_chains_per_graph)]
    if SOLVER in kinds:
        sol_lm += [(e.prompt, e.completion) for e in by_kind[SOLVER]]
    pairs = []
    if POSITIVE in kinds and NEGATIVE in kinds and pos and neg:
        chosen = sample(pos, config.max_pairs_per_graph)
        for i, p in enumerate(chosen):
            pairs.append((p.completion, neg[(i * 7919) % len(neg)].completion))
    align = None
    if DECOMPOSER in kinds and SOLVER in kinds and by_kind[DECOMPOSER] and by_kind[SOLVER]:
        d = by_kind[DECOMPOSER][0]
        align = (d.prompt + d.completion, "\n".join(e.completion for e in by_kind[SOLVER]))
    return GraphItems(graph, dec_lm, sol_lm, pairs, align)


def _lm_component(student: StudentUnit, lm, pairs):
    tokens, target_mask, _ = encode_examples(student.tokenizer, [p for p, _ in pairs], [c for _, c in pairs],
                                             student.lm_config.max_len)
    logits, _ = lm(tokens[:, :-1])
    return lm_loss(logits, tokens[:, 1:], target_mask)


def compute_losses(student: StudentUnit, gcn: GCNParams, items: Sequence[GraphItems],
                   coefficients: LossCoefficients) -> LossBundle:
    """Composite objective on one batch of graphs. Terms with a zero coefficient are
    skipped and reported as 0."""
    zero = torch.zeros(())
    c = coefficients

    lm = zero
    if c.alpha > 0:
        parts = []
        dec = [p for it in items for p in it.dec_lm]
        sol = [p for it in items for p in it.sol_lm]
        if dec:
            parts.append(_lm_component(student, student.decomposer, dec))
        if sol:
            parts.append(_lm_component(student, student.solver, sol))
        if parts:
            lm = sum(parts) / len(parts)

    node = zero
    if c.beta > 0:
        batch = tensorize([it.graph for it in items])
        dtype = gcn.layer_weights[0].dtype
        logits = node_logits(gcn_forward(batch, gcn), gcn)
        labels = torch.as_tensor(batch.labels, dtype=dtype)
        mask = torch.as_tensor(batch.label_mask)
        node = node_loss(logits, labels, mask).to(zero.dtype)

    contrast = zero
    pairs = [p for it in items for p in it.pairs]
    if c.gamma > 0 and pairs:
        scores = student.score_chains([p for p, _ in pairs] + [n for _, n in pairs])
        contrast = contrastive_loss(scores[: len(pairs)], scores[len(pairs):])

    align = zero
    aligned = [it.align for it in items if it.align is not None]
    if c.delta > 0 and aligned:
        z_dec = student.proj_dec(student.pooled(student.decomposer, [d for d, _ in aligned]))
        z_sol = student.proj_sol(student.pooled(student.solver, [s for _, s in aligned]))
        align = alignment_loss(z_dec, z_sol)

    return total_loss(lm, node, contrast, align, coefficients)


@dataclass
class TrainResult:
    student: StudentUnit
    gcn: GCNParams
    history: dict
    best_checkpoint: Path | None


def _batches(n: int, batch_size: int, seed: int, epoch: int) -> list[list[int]]:
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i : i + batch_size].tolist() for i in range(0, n, batch_size)]


def _mean_bundles(bundles: list[dict]) -> dict:
    return {k: math.fsum(b[k] for b in bundles) / len(bundles) for k in COMPONENTS}


def split_validation(graphs: Sequence[InteractionGraph], fraction: float, seed: int):
    n_val = int(round(len(graphs) * fraction))
    if len(graphs) < 2 or n_val == 0:
        return list(graphs), []
    order = np.random.default_rng(seed).permutation(len(graphs))
    val = set(order[:n_val].tolist())
    return [g for i, g in enumerate(graphs) if i not in val], [g for i, g in enumerate(graphs) if i in val]


def _save_state(path: Path, student, gcn, optimizer, epoch, history):
    torch.save(
        {
            "format": "smagdi-train-state",
            "version": 1,
            "epoch": epoch,
            "student_config": student.config(),
            "student": student.state_dict(),
            "gcn_config": gcn.config(),
            "gcn": gcn.state_dict(),
            "optimizer": optimizer.state_dict() if optimizer is not None else None,
            "history": history,
        },
        path,
    )


def load_train_state(path: str | Path) -> dict:
    return torch.load(path, map_location="cpu", weights_only=False)


def evaluate(student, gcn, items: Sequence[GraphItems], coefficients, batch_size: int) -> dict:
    with torch.no_grad():
        bundles = [
            compute_losses(student, gcn, items[i : i + batch_size], coefficients).as_floats()
            for i in range(0, len(items), batch_size)
        ]
    return _mean_bundles(bundles)


def train(
    graphs: Sequence[InteractionGraph],
    student: StudentUnit,
    gcn: GCNParams,
    coefficients: LossCoefficients = LossCoefficients(),
    config: TrainConfig = TrainConfig(),
    backend: AgentBackend | None = None,
    examples: dict[str, list[TrainingExample]] | None = None,
    resume_from: str | Path | None = None,
) -> TrainResult:
    """Joint training on the composite objective.

    Each epoch shuffles the training graphs with ``(seed, epoch)``; history keeps
    the pre-training loss, per-epoch train/val means and every step's loss. The
    best-validation state is written to ``checkpoint_dir/best.pt`` and loaded back
    before returning; ``last.pt`` holds the resumable end-of-epoch state.
    """
    if not graphs:
        raise ValidationError("no graphs to train on")
    ckpt_dir = Path(config.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)

    train_graphs, val_graphs = split_validation(graphs, config.val_fraction, config.seed)
    if examples is None:
        examples = {g.question_id: extract_examples(g, backend) for g in graphs}
    train_items = [prepare_items(g, examples[g.question_id], config) for g in train_graphs]
    val_items = [prepare_items(g, examples[g.question_id], config) for g in val_graphs]

    params = list(student.parameters()) + list(gcn.parameters())
    optimizer = torch.optim.Adam(params, lr=config.learning_rate)
    history: dict[str, Any] = {"initial": None, "train": [], "val": [], "steps": [], "best_epoch": None,
                               "stopped_early": False, "config": {k: str(v) for k, v in asdict(config).items()},
                               "coefficients": asdict(coefficients)}
    start_epoch = 1
    best_val = math.inf
    since_best = 0

    if resume_from is not None:
        state = load_train_state(resume_from)
        student.load_state_dict(state["student"])
        gcn.load_state_dict(state["gcn"])
        optimizer.load_state_dict(state["optimizer"])
        history = state["history"]
        start_epoch = state["epoch"] + 1
        vals = [v["total"] for v in history["val"]] or [t["total"] for t in history["train"]]
        if vals:
            best_val = min(vals)
            since_best = len(vals) - 1 - int(np.argmin(vals))
    else:
        history["initial"] = evaluate(student, gcn, train_items, coefficients, config.batch_size)
        logger.info("initial loss %s", history["initial"])
        _save_state(ckpt_dir / "last.pt", student, gcn, optimizer, 0, history)

    best_path = ckpt_dir / "best.pt"
    for epoch in range(start_epoch, config.epochs + 1):
        student.train()
        gcn.train()
        step_losses = []
        for step, idx in enumerate(_batches(len(train_items), config.batch_size, config.seed, epoch)):
            optimizer.zero_grad(set_to_none=True)
            try:
                bundle = compute_losses(student, gcn, [train_items[i] for i in idx], coefficients)
                if not math.isfinite(bundle.as_floats()["total"]):
                    raise NonFiniteLossError("total", bundle.as_floats()["total"])
            except NonFiniteLossError as exc:
                last = ckpt_dir / "last.pt"
                state = load_train_state(last)
                student.load_state_dict(state["student"])
                gcn.load_state_dict(state["gcn"])
                raise TrainingDivergedError(epoch, step, last, history) from exc
            if bundle.total.requires_grad:
                bundle.total.backward()
                optimizer.step()
            floats = bundle.as_floats()
            step_losses.append(floats)
            history["steps"].append({"epoch": epoch, "step": step, **floats})
        history["train"].append(_mean_bundles(step_losses))

        if val_items:
            student.eval()
            gcn.eval()
            val = evaluate(student, gcn, val_items, coefficients, config.batch_size)
            history["val"].append(val)
            score = val["total"]
        else:
            score = history["train"][-1]["total"]
        logger.info("epoch %d train %.4f select %.4f", epoch, history["train"][-1]["total"], score)

        if score < best_val:
            best_val = score
            since_best = 0
            history["best_epoch"] = epoch
            _save_state(best_path, student, gcn, None, epoch, history)
        else:
            since_best += 1
        _save_state(ckpt_dir / "last.pt", student, gcn, optimizer, epoch, history)
        if config.early_stopping_patience is not None and since_best >= config.early_stopping_patience:
            history["stopped_early"] = True
            logger.info("early stopping after epoch %d", epoch)
            break

    if best_path.exists():
        state = load_train_state(best_path)
        student.load_state_dict(state["student"])
        gcn.load_state_dict(state["gcn"])
    return TrainResult(student, gcn, history, best_path if best_path.exists() else None)


def write_history(history: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(history, indent=2), encoding="utf-8")
