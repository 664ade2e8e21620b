"""Multi-agent interaction graphs built from debate transcripts, with JSON(L) storage."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

import jsonschema

from .data import ABSTAIN, same_label
from .debate import AgentWeights, DebateTranscript
from .errors import SchemaError, ValidationError

MAG_VERSION = 1

QUESTION = "QUESTION"
RESPONSE = "RESPONSE"
ROOT = "ROOT"
CONTINUITY = "CONTINUITY"
INFLUENCE = "INFLUENCE"


@dataclass(frozen=True)
class MAGNode:
    node_id: int
    kind: str
    text: str
    agent_id: str | None = None
    round: int | None = None
    correct: bool | None = None
    answer: Any = None
    semantic_embedding: tuple[float, ...] = ()
    positional_encoding: tuple[float, ...] = ()

    @property
    def depth(self) -> int:
        """Round number, with the question at 0."""
        return 0 if self.kind == QUESTION else int(self.round)


@dataclass(frozen=True)
class MAGEdge:
    src: int
    dst: int
    kind: str
    weight: float = 1.0


@dataclass(frozen=True)
class InteractionGraph:
    question_id: str
    nodes: tuple[MAGNode, ...]
    edges: tuple[MAGEdge, ...]
    gold_answer: Any
    final_answer: Any
    answer_space: tuple = ()
    subject: str | None = None

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def question_text(self) -> str:
        return self.nodes[0].text

    @property
    def num_rounds(self) -> int:
        return max((n.depth for n in self.nodes), default=0)

    def edges_of(self, kind: str) -> list[MAGEdge]:
        return [e for e in self.edges if e.kind == kind]

    def successors(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {n.node_id: [] for n in self.nodes}
        for e in self.edges:
            out[e.src].append(e.dst)
        return out

    def with_features(self, semantic, positional) -> "InteractionGraph":
        nodes = tuple(
            replace(n, semantic_embedding=tuple(float(x) for x in s), positional_encoding=tuple(float(x) for x in p))
            for n, s, p in zip(self.nodes, semantic, positional)
        )
        return replace(self, nodes=nodes)


def _validate_transcript(transcript: DebateTranscript) -> list[str]:
    if not transcript.rounds:
        raise ValidationError("transcript has no rounds")
    agents = [r.agent_id for r in transcript.rounds[0]]
    if len(set(agents)) != len(agents):
        raise ValidationError("duplicate agents in round 1")
    for i, rnd in enumerate(transcript.rounds, 1):
        if sorted(r.agent_id for r in rnd) != sorted(agents):
            raise ValidationError(f"round {i} does not have one response per agent")
        if any(r.round != i for r in rnd):
            raise ValidationError(f"round {i} contains responses labelled with another round")
    return agents


def build_graph(transcript: DebateTranscript, weights: AgentWeights, gold: Any = None) -> InteractionGraph:
    """Nodes: the question, then one node per (round, agent) in round-major order.

    Edges: ROOT from the question to every round-1 node (weight 1), CONTINUITY
    from an agent's round-r node to its round-(r+1) node (weight 1), and
    INFLUENCE from every other agent's round-r node into each round-(r+1) node,
    weighted by the influencing agent's normalized weight.
    """
    agents = _validate_transcript(transcript)
    q = transcript.question
    gold = q.gold if gold is None else gold
    for a in agents:
        if a not in weights.normalized:
            raise ValidationError(f"no weight for agent {a}")

    nodes = [MAGNode(0, QUESTION, q.text)]
    index: dict[tuple[int, str], int] = {}
    for rnd_no, rnd in enumerate(transcript.rounds, 1):
        by_agent = {r.agent_id: r for r in rnd}
        for a in agents:
            r = by_agent[a]
            node_id = len(nodes)
            index[(rnd_no, a)] = node_id
            correct = r.extracted_answer != ABSTAIN and same_label(r.extracted_answer, gold)
            nodes.append(MAGNode(node_id, RESPONSE, r.raw_text, a, rnd_no, correct, r.extracted_answer))

    edges = [MAGEdge(0, index[(1, a)], ROOT, 1.0) for a in agents]
    for rnd_no in range(1, len(transcript.rounds)):
        for target in agents:
            dst = index[(rnd_no + 1, target)]
            edges.append(MAGEdge(index[(rnd_no, target)], dst, CONTINUITY, 1.0))
            for source in agents:
                if source != target:
                    edges.append(MAGEdge(index[(rnd_no, source)], dst, INFLUENCE, weights.normalized[source]))

    return InteractionGraph(
        q.question_id, tuple(nodes), tuple(edges), gold, transcript.final_answer, q.answer_space, q.subject
    )


def is_dag(graph: InteractionGraph) -> bool:
    """Kahn's algorithm over the directed edges."""
    indeg = {n.node_id: 0 for n in graph.nodes}
    for e in graph.edges:
        indeg[e.dst] += 1
    succ = graph.successors()
    frontier = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while frontier:
        n = frontier.pop()
        seen += 1
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                frontier.append(m)
    return seen == len(indeg)


# --- serialization ---------------------------------------------------------

_LABEL = {"type": ["boolean", "integer", "string"]}
_NUMS = {"type": "array", "items": {"type": "number"}}

GRAPH_SCHEMA = {
    "type": "object",
    "required": ["mag_version", "question_id", "nodes", "edges", "gold_answer", "final_answer"],
    "properties": {
        "mag_version": {"const": MAG_VERSION},
        "question_id": {"type": "string"},
        "gold_answer": _LABEL,
        "final_answer": _LABEL,
        "answer_space": {"type": "array", "items": _LABEL},
        "subject": {"type": ["string", "null"]},
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["node_id", "kind", "text"],
                "properties": {
                    "node_id": {"type": "integer", "minimum": 0},
                    "kind": {"enum": [QUESTION, RESPONSE]},
                    "text": {"type": "string"},
                    "agent_id": {"type": ["string", "null"]},
                    "round": {"type": ["integer", "null"], "minimum": 1},
                    "correct": {"type": ["boolean", "null"]},
                    "answer": {"type": ["boolean", "integer", "string", "null"]},
                    "semantic_embedding": _NUMS,
                    "positional_encoding": _NUMS,
                },
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["src", "dst", "kind", "weight"],
                "properties": {
                    "src": {"type": "integer", "minimum": 0},
                    "dst": {"type": "integer", "minimum": 0},
                    "kind": {"enum": [ROOT, CONTINUITY, INFLUENCE]},
                    "weight": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                },
            },
        },
    },
}

_validator = jsonschema.Draft202012Validator(GRAPH_SCHEMA)


def _json_path(parts: Iterable[Any]) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def graph_to_dict(graph: InteractionGraph) -> dict:
    return {
        "mag_version": MAG_VERSION,
        "question_id": graph.question_id,
        "gold_answer": graph.gold_answer,
        "final_answer": graph.final_answer,
        "answer_space": list(graph.answer_space),
        "subject": graph.subject,
        "nodes": [
            {
                "node_id": n.node_id,
                "kind": n.kind,
                "text": n.text,
                "agent_id": n.agent_id,
                "round": n.round,
                "correct": n.correct,
                "answer": n.answer,
                "semantic_embedding": list(n.semantic_embedding),
                "positional_encoding": list(n.positional_encoding),
            }
            for n in graph.nodes
        ],
        "edges": [{"src": e.src, "dst": e.dst, "kind": e.kind, "weight": e.weight} for e in graph.edges],
    }


def graph_from_dict(payload: Any) -> InteractionGraph:
    errors = sorted(_validator.iter_errors(payload), key=lambda e: (len(e.path), list(map(str, e.path))))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        if err.validator == "required" and isinstance(err.instance, dict):
            missing = [k for k in err.validator_value if k not in err.instance]
            path.append(missing[0])
        raise SchemaError(_json_path(path), err.message)

    nodes = []
    for i, n in enumerate(payload["nodes"]):
        if n["node_id"] != i:
            raise SchemaError(f"$.nodes[{i}].node_id", f"expected {i}, got {n['node_id']}")
        nodes.append(
            MAGNode(
                n["node_id"],
                n["kind"],
                n["text"],
                n.get("agent_id"),
                n.get("round"),
                n.get("correct"),
                n.get("answer"),
                tuple(float(x) for x in n.get("semantic_embedding", [])),
                tuple(float(x) for x in n.get("positional_encoding", [])),
            )
        )
    n_nodes = len(nodes)
    edges = []
    for i, e in enumerate(payload["edges"]):
        for end in ("src", "dst"):
            if e[end] >= n_nodes:
                raise SchemaError(f"$.edges[{i}].{end}", f"node {e[end]} does not exist")
        edges.append(MAGEdge(e["src"], e["dst"], e["kind"], float(e["weight"])))
    return InteractionGraph(
        payload["question_id"],
        tuple(nodes),
        tuple(edges),
        payload["gold_answer"],
        payload["final_answer"],
        tuple(payload.get("answer_space", ())),
        payload.get("subject"),
    )


def serialize(graph: InteractionGraph) -> str:
    return json.dumps(graph_to_dict(graph))


def deserialize(text: str) -> InteractionGraph:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc.msg}") from exc
    return graph_from_dict(payload)


def write_graphs(graphs: Iterable[InteractionGraph], path: str | Path) -> int:
    count = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(serialize(g) + "\n")
            count += 1
    return count


def iter_graphs(path: str | Path) -> Iterator[InteractionGraph]:
    """Stream graphs from a JSONL store one line at a time."""
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield deserialize(line)
            except SchemaError as exc:
                raise SchemaError(exc.path, f"line {lineno}: {exc}") from exc


def read_graphs(path: str | Path) -> list[InteractionGraph]:
    return list(iter_graphs(path))
