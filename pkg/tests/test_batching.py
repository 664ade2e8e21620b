import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smagdi.batching import featurize, normalized_adjacency, tensorize, unpad, weighted_adjacency
from smagdi.data import QuestionRecord
from smagdi.debate import optimize_weights
from smagdi.embeddings import HashingEmbedder
from smagdi.errors import ContractError, ValidationError
from smagdi.graph import build_graph

from conftest import NAMES, make_transcript
from oracles import dense_normalized_adjacency


def _q():
    return QuestionRecord("z", "Is ice less dense than water?", (True, False), True)


@pytest.fixture
def emb():
    return HashingEmbedder(16)


def _g(question, weights, rounds, emb, pe_dim=4):
    return featurize(build_graph(make_transcript(question, [(True, False, True, False, True)] * rounds), weights),
                     emb, pe_dim)


def test_adjacency_matches_dense_oracle(question, worked_weights, emb):
    for rounds in (1, 2, 3, 4):
        g = build_graph(make_transcript(question, [(True,) * 5] * rounds), worked_weights)
        oracle = dense_normalized_adjacency(g.num_nodes, [(e.src, e.dst, e.weight) for e in g.edges])
        assert np.abs(normalized_adjacency(g) - oracle).max() <= 1e-6
        assert np.allclose(weighted_adjacency(g), weighted_adjacency(g).T)


def test_padding_and_masks(question, worked_weights, emb):
    small, big = _g(question, worked_weights, 1, emb), _g(question, worked_weights, 3, emb)
    batch = tensorize([small, big])
    assert batch.adjacency.shape == (2, 16, 16)
    assert batch.node_features.shape == (2, 16, 16 + 4)
    assert batch.node_mask[0].sum() == 6 and batch.node_mask[1].all()
    assert not batch.node_features[0, 6:].any() and not batch.adjacency[0, 6:].any()
    assert not batch.adjacency[0, :, 6:].any()
    # labels live on response nodes only
    assert not batch.label_mask[:, 0].any()
    assert batch.label_mask[0].sum() == 5 and batch.label_mask[1].sum() == 15
    assert list(batch.labels[0, 1:6]) == [1.0, 0.0, 1.0, 0.0, 1.0]


def test_masked_reduction_ignores_padding(question, worked_weights, emb):
    batch = tensorize([_g(question, worked_weights, 1, emb), _g(question, worked_weights, 2, emb)])
    junk = batch.node_features.copy()
    junk[0, 6:] = 1e9
    masked = (junk * batch.node_mask[..., None]).sum(axis=1)
    assert np.array_equal(masked, (batch.node_features * batch.node_mask[..., None]).sum(axis=1))


def test_single_graph_unpad_round_trip(question, worked_weights, emb):
    g = _g(question, worked_weights, 2, emb)
    x, adj = unpad(tensorize([g]), 0)
    assert np.array_equal(adj, normalized_adjacency(g))
    assert np.array_equal(x[:, :16], np.array([n.semantic_embedding for n in g.nodes]))


def test_dimension_mismatch(question, worked_weights):
    a = _g(question, worked_weights, 1, HashingEmbedder(16))
    b = _g(question, worked_weights, 1, HashingEmbedder(8))
    with pytest.raises(ValidationError):
        tensorize([a, b])
    with pytest.raises(ContractError):
        tensorize([])
    with pytest.raises(ValidationError):
        # not featurized yet
        tensorize([build_graph(make_transcript(_q(), [(True,) * 5]), worked_weights)])


def test_small_graph_pe_is_padded(question, worked_weights, emb):
    g = _g(question, worked_weights, 1, emb, pe_dim=8)
    assert all(len(n.positional_encoding) == 8 for n in g.nodes)
    # 6 nodes leave at most 5 informative columns
    pe = np.array([n.positional_encoding for n in g.nodes])
    assert not pe[:, 5:].any()


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5), st.integers(1, 3))
def test_normalized_adjacency_symmetric_and_bounded(accs, rounds):
    w = optimize_weights(dict(zip(NAMES, accs)))
    g = build_graph(make_transcript(_q(), [(True,) * 5] * rounds), w)
    a = normalized_adjacency(g)
    assert np.allclose(a, a.T)
    assert np.abs(np.linalg.eigvalsh(a)).max() <= 1 + 1e-9
