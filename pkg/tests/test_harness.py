import pytest
from hypothesis import given
from hypothesis import strategies as st

from smagdi.agents import DEFAULT_ROSTER
from smagdi.data import ABSTAIN, MMLU_SPACE, QuestionRecord
from smagdi.debate import optimize_weights
from smagdi.errors import ValidationError
from smagdi.harness import SAS_AGENT, accuracy, compare_mas_sas, exact_match, metrics_report

from conftest import NAMES, ScriptBackend

label = st.sampled_from([True, False, ABSTAIN])


def test_exact_match():
    assert exact_match(True, True)
    assert not exact_match(ABSTAIN, False)
    assert not exact_match(1, True)
    assert accuracy([(True, True), (False, False), (True, True), (True, False)]) == 0.75
    with pytest.raises(ValidationError):
        accuracy([])


@given(st.lists(st.tuples(label, st.booleans()), min_size=1), st.randoms())
def test_accuracy_bounded_and_order_free(pairs, rnd):
    a = accuracy(pairs)
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert 0.0 <= a <= 1.0 and accuracy(shuffled) == a


def test_metrics_report_per_subject():
    recs = [QuestionRecord(f"m{i}", "q", MMLU_SPACE, i % 4, "law" if i < 2 else "math") for i in range(4)]
    report = metrics_report({"m0": 0, "m1": 3, "m2": 2, "m3": ABSTAIN}, recs)
    assert report["accuracy"] == 0.5 and report["n"] == 4
    assert report["per_subject"] == {"law": {"accuracy": 0.5, "n": 2}, "math": {"accuracy": 0.5, "n": 2}}
    with pytest.raises(ValidationError):
        metrics_report({"nope": 1}, recs)


def _weights():
    return optimize_weights(dict(zip(NAMES, (0.9, 0.8, 0.7, 0.6, 0.2))))


def test_debate_beats_a_wrong_single_agent():
    qs = [QuestionRecord(f"h{i}", f"q{i}?", (True, False), True) for i in range(3)]

    def answer(prompt, t, meta):
        if meta["agent_id"] == SAS_AGENT:
            # the lone agent slips on the first question
            return f"Answer: {meta['question_id'] != 'h0'}"
        return f"Answer: {meta['agent_id'] != 'Historian'}"

    report = compare_mas_sas(qs, DEFAULT_ROSTER, ScriptBackend(answer), _weights())
    assert report["mas"]["accuracy"] == 1.0 and report["sas"]["accuracy"] == pytest.approx(2 / 3)
    assert report["mas"]["accuracy"] > report["sas"]["accuracy"]
    assert {d["mas_decided_by"] for d in report["decisions"]} == {"WEIGHTED_VOTE"}


def test_single_question_report():
    q = [QuestionRecord("one", "q?", (True, False), False)]
    report = compare_mas_sas(q, DEFAULT_ROSTER, ScriptBackend(lambda p, t, m: "Answer: False"), _weights())
    assert len(report["decisions"]) == 1 and report["mas"]["n"] == report["sas"]["n"] == 1


def test_identical_answers_give_equal_accuracy():
    qs = [QuestionRecord(f"s{i}", "q?", (True, False), i % 2 == 0) for i in range(4)]
    report = compare_mas_sas(qs, DEFAULT_ROSTER, ScriptBackend(lambda p, t, m: "Answer: True"), _weights())
    assert report["mas"]["accuracy"] == report["sas"]["accuracy"] == 0.5


def test_sas_prompt_is_chain_of_thought():
    backend = ScriptBackend(lambda p, t, m: "Answer: True")
    compare_mas_sas([QuestionRecord("c", "q?", (True, False), True)], DEFAULT_ROSTER, backend, _weights())
    sas_calls = [c for c in backend.calls if c[2]["agent_id"] == SAS_AGENT]
    assert len(sas_calls) == 1 and "step by step" in sas_calls[0][0]


def test_empty_dataset():
    with pytest.raises(ValidationError):
        compare_mas_sas([], DEFAULT_ROSTER, ScriptBackend(lambda p, t, m: ""), _weights())
