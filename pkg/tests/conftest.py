import pytest
import torch

from smagdi.agents import DEFAULT_ROSTER, AgentResponse
from smagdi.data import QuestionRecord
from smagdi.debate import DebateTranscript, optimize_weights

NAMES = [p.name for p in DEFAULT_ROSTER]


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def question():
    return QuestionRecord("q1", "Is a tomato botanically a fruit?", (True, False), True)


@pytest.fixture
def worked_weights():
    return optimize_weights(dict(zip(NAMES, (0.5, 0.25, 0.25, 0.0, 0.0))), 0.1)


class ScriptBackend:
    """Backend answering from a function of the call metadata."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = []

    def generate(self, prompt, temperature, max_tokens, meta=None):
        self.calls.append((prompt, temperature, dict(meta or {})))
        return self.fn(prompt, temperature, meta or {})


def make_transcript(question, answers_by_round, gold=None):
    """``answers_by_round``: list of 5-tuples of labels (or ABSTAIN)."""
    rounds = []
    for r, answers in enumerate(answers_by_round, 1):
        rounds.append(
            [
                AgentResponse(name, r, f"{name} round {r} reasoning. Answer: {a}", a, 0.7 + 0.1 * (r - 1))
                for name, a in zip(NAMES, answers)
            ]
        )
    final = answers_by_round[-1][0]
    return DebateTranscript(question, rounds, final, len(answers_by_round) == 1, "CONSENSUS")


def synthetic_graphs(n, embed_dim=16, pe_dim=4, seed=0):
    """Featurized interaction graphs from mock debates over synthetic questions."""
    from smagdi.backends import MockBackend
    from smagdi.batching import featurize
    from smagdi.data import synthetic_strategyqa
    from smagdi.debate import calibrate, run_debate
    from smagdi.embeddings import HashingEmbedder
    from smagdi.graph import build_graph

    records = [QuestionRecord(r["qid"], r["question"], (True, False), r["answer"]) for r in synthetic_strategyqa(n, 42)]
    backend = MockBackend(seed=seed)
    weights = calibrate(DEFAULT_ROSTER, backend, records[:10])
    emb = HashingEmbedder(embed_dim)
    return [featurize(build_graph(run_debate(q, DEFAULT_ROSTER, backend, weights), weights), emb, pe_dim)
            for q in records]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        item.rep_call = report
