"""Exact-match scoring and the multi-agent vs single-agent comparison."""

from __future__ import annotations

import logging
from collections import defaultdict
from typing import Any, Iterable, Sequence

from .agents import AgentResponse, Persona, extract_answer, format_options
from .backends import AgentBackend
from .data import ABSTAIN, QuestionRecord, same_label
from .debate import AgentWeights, DebateConfig, run_debate
from .errors import AgentCallError, ValidationError

logger = logging.getLogger(__name__)

SAS_AGENT = "SAS"


def exact_match(predicted: Any, gold: Any) -> bool:
    """Verbatim label equality; ABSTAIN never matches."""
    if predicted == ABSTAIN:
        return False
    return same_label(predicted, gold)


def accuracy(pairs: Iterable[tuple[Any, Any]]) -> float:
    pairs = list(pairs)
    if not pairs:
        raise ValidationError("accuracy of an empty prediction set is undefined")
    return sum(exact_match(p, g) for p, g in pairs) / len(pairs)


def metrics_report(predictions: dict[str, Any], records: Sequence[QuestionRecord]) -> dict:
    """``{accuracy, n, per_subject}`` over records that have a prediction.

    ``per_subject`` is filled only when records carry a subject (MMLU).
    """
    scored = [(predictions[r.question_id], r) for r in records if r.question_id in predictions]
    missing = len(predictions) - len(scored)
    if missing:
        raise ValidationError(f"{missing} predictions do not match any dataset record")
    report = {"accuracy": accuracy((p, r.gold) for p, r in scored), "n": len(scored), "per_subject": {}}
    groups: dict[str, list] = defaultdict(list)
    for p, r in scored:
        if r.subject:
            groups[r.subject].append((p, r.gold))
    report["per_subject"] = {s: {"accuracy": accuracy(v), "n": len(v)} for s, v in sorted(groups.items())}
    return report


def sas_prompt(question: QuestionRecord) -> str:
    """Single-agent chain-of-thought prompt."""
    kind = "True/False" if all(isinstance(a, bool) for a in question.answer_space) else "multiple-choice"
    return (
        f"You are an expert reasoning assistant. Your task is to answer {kind} questions with careful analysis. "
        f"Question: {question.text}\n\n"
        "Instructions:\n"
        "1. Let's think step by step about this question\n"
        "2. Break down the key components and requirements\n"
        "3. Consider what knowledge is needed to answer this\n"
        "4. Apply logical reasoning to reach a conclusion\n"
        f'5. State your final answer as "Answer: X" where X is {format_options(question.answer_space)}\n\n'
        "Analysis and Answer:"
    )


def single_agent_answer(backend: AgentBackend, question: QuestionRecord, temperature: float = 0.7,
                        max_tokens: int = 512) -> AgentResponse:
    meta = {
        "kind": "sas",
        "question_id": question.question_id,
        "agent_id": SAS_AGENT,
        "round": 1,
        "answer_space": list(question.answer_space),
        "gold": question.gold,
    }
    try:
        text = backend.generate(sas_prompt(question), temperature, max_tokens, meta=meta)
    except Exception as exc:
        raise AgentCallError(SAS_AGENT, 1, exc) from exc
    return AgentResponse(SAS_AGENT, 1, text, extract_answer(text, question.answer_space), temperature)


def compare_mas_sas(
    dataset: Sequence[QuestionRecord],
    roster: Sequence[Persona],
    backend: AgentBackend,
    weights: AgentWeights,
    config: DebateConfig = DebateConfig(),
) -> dict:
    """Debate every question (MAS arm) and ask one zero-shot agent (SAS arm)."""
    if not dataset:
        raise ValidationError("empty dataset")
    decisions = []
    for q in dataset:
        transcript = run_debate(q, roster, backend, weights, config)
        sas = single_agent_answer(backend, q, config.base_temperature, config.max_tokens)
        decisions.append(
            {
                "question_id": q.question_id,
                "gold": q.gold,
                "mas": transcript.final_answer,
                "mas_decided_by": transcript.decided_by,
                "mas_rounds": len(transcript.rounds),
                "sas": sas.extracted_answer,
            }
        )
    arms = {}
    for arm in ("mas", "sas"):
        arms[arm] = {"accuracy": accuracy((d[arm], d["gold"]) for d in decisions), "n": len(decisions)}
    return {**arms, "weights": weights.normalized, "decisions": decisions}
