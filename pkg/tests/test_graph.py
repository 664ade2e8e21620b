import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smagdi.batching import featurize
from smagdi.data import ABSTAIN, QuestionRecord
from smagdi.debate import optimize_weights
from smagdi.embeddings import EmbeddingError, HashingEmbedder, embed_nodes
from smagdi.errors import SchemaError, ValidationError
from smagdi.graph import (
    CONTINUITY,
    INFLUENCE,
    QUESTION,
    RESPONSE,
    ROOT,
    build_graph,
    deserialize,
    graph_to_dict,
    is_dag,
    iter_graphs,
    serialize,
    write_graphs,
)

from conftest import NAMES, make_transcript


def _graph(question, weights, rounds, pattern=(True, True, False, True, False)):
    return build_graph(make_transcript(question, [pattern] * rounds), weights)


@pytest.mark.parametrize("rounds", [1, 2, 3])
def test_counts_follow_round_formula(question, worked_weights, rounds):
    g = _graph(question, worked_weights, rounds)
    counts = (g.num_nodes, len(g.edges_of(ROOT)), len(g.edges_of(CONTINUITY)), len(g.edges_of(INFLUENCE)))
    assert counts == (1 + 5 * rounds, 5, 5 * (rounds - 1), 20 * (rounds - 1))
    assert is_dag(g)
    assert all(g.nodes[e.dst].depth == g.nodes[e.src].depth + 1 for e in g.edges)


def test_node_layout_and_labels(question, worked_weights):
    g = _graph(question, worked_weights, 2, (True, False, ABSTAIN, True, 1))
    assert [n.kind for n in g.nodes].count(QUESTION) == 1
    q = g.nodes[0]
    assert (q.agent_id, q.round, q.correct) == (None, None, None)
    assert [(n.agent_id, n.round) for n in g.nodes[1:6]] == [(a, 1) for a in NAMES]
    # integer 1 is not the boolean True; ABSTAIN is never correct
    assert [n.correct for n in g.nodes[1:6]] == [True, False, False, True, False]
    assert all(n.kind == RESPONSE for n in g.nodes[1:])


def test_influence_weights_are_the_source_share(question, worked_weights):
    g = _graph(question, worked_weights, 3)
    for e in g.edges_of(INFLUENCE):
        src = g.nodes[e.src]
        assert e.weight == worked_weights.normalized[src.agent_id]
        assert src.agent_id != g.nodes[e.dst].agent_id
    lawyer = [e for e in g.edges_of(INFLUENCE) if g.nodes[e.src].agent_id == "Lawyer"]
    assert len(lawyer) == 8 and all(e.weight == pytest.approx(0.4167, abs=1e-4) for e in lawyer)
    assert all(e.weight == 1.0 for e in g.edges_of(ROOT) + g.edges_of(CONTINUITY))


def test_gold_override(question, worked_weights):
    g = build_graph(make_transcript(question, [(True,) * 5]), worked_weights, gold=False)
    assert g.gold_answer is False and not any(n.correct for n in g.nodes[1:])


def test_malformed_transcript(question, worked_weights):
    t = make_transcript(question, [(True,) * 5, (True,) * 5])
    t.rounds[1].pop()
    with pytest.raises(ValidationError):
        build_graph(t, worked_weights)


def test_round_trip_with_features(question, worked_weights):
    g = featurize(_graph(question, worked_weights, 3), HashingEmbedder(16), 4)
    back = deserialize(serialize(g))
    assert back == g


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from([True, False, ABSTAIN]), min_size=5, max_size=5), st.integers(1, 3))
def test_round_trip_property(pattern, rounds):
    q = QuestionRecord("p", "Could a llama outrun a tortoise?", (True, False), True)
    w = optimize_weights(dict(zip(NAMES, (0.9, 0.2, 0.6, 0.0, 0.4))))
    g = _graph(q, w, rounds, tuple(pattern))
    assert deserialize(serialize(g)) == g


def test_missing_edges_names_path(question, worked_weights):
    payload = graph_to_dict(_graph(question, worked_weights, 1))
    del payload["edges"]
    with pytest.raises(SchemaError) as info:
        deserialize(json.dumps(payload))
    assert info.value.path == "$.edges"


def test_nested_schema_errors_have_paths(question, worked_weights):
    payload = graph_to_dict(_graph(question, worked_weights, 1))
    payload["nodes"][2]["kind"] = "OPINION"
    with pytest.raises(SchemaError) as info:
        deserialize(json.dumps(payload))
    assert info.value.path == "$.nodes[2].kind"
    payload = graph_to_dict(_graph(question, worked_weights, 1))
    payload["mag_version"] = 2
    with pytest.raises(SchemaError):
        deserialize(json.dumps(payload))
    with pytest.raises(SchemaError):
        deserialize("{not json")


def test_jsonl_store_streams(tmp_path, question, worked_weights):
    graphs = [_graph(question, worked_weights, 1 + i % 3) for i in range(100)]
    path = tmp_path / "graphs.jsonl"
    assert write_graphs(graphs, path) == 100
    stream = iter_graphs(path)
    first = next(stream)
    # a generator, not a list: the rest of the file is still unread
    assert first == graphs[0] and not isinstance(stream, list)
    assert [first, *stream] == graphs


def test_hashing_embedder_determinism_and_empty():
    emb = HashingEmbedder(32)
    a, b, empty = emb.encode(["same text here", "same text here", ""])
    assert np.array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    assert np.array_equal(empty, np.zeros(32))


def test_embed_nodes_names_failing_node():
    class Picky:
        dim = 4

        def encode(self, texts):
            if any("bad" in t for t in texts):
                raise RuntimeError("nope")
            return np.ones((len(texts), 4))

    with pytest.raises(EmbeddingError) as info:
        embed_nodes(["fine", "bad one", "fine"], Picky(), [10, 11, 12])
    assert info.value.node_id == 11
