"""Socratic zero-shot inference: decompose, solve sub-questions in order, compose."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .agents import answer_instruction, extract_answer, format_options
from .data import ABSTAIN, QuestionRecord

logger = logging.getLogger(__name__)

DECOMPOSER_INSTRUCTION = "Break this down into sub-questions that will help determine the answer"
SOLVER_INSTRUCTION = "Provide a clear answer that aids in determining the answer to the main question."
# Solver outputs containing this phrase get decomposed one level further.
INSUFFICIENT_MARKER = "cannot be answered directly"

_NUMBERED = re.compile(
    r"^\s*(?:[-*]\s*)?(?:decomposition\s*:?\s*)?(\d+)\s*[.):]\s*(.+?)\s*$", re.IGNORECASE
)


def decomposer_prompt(question: str) -> str:
    return f"{DECOMPOSER_INSTRUCTION}.\nQuestion: {question}\nSub-questions:\n"


def solver_prompt(main_question: str, context: Sequence[tuple[str, str]], sub_question: str) -> str:
    lines = [SOLVER_INSTRUCTION, f"Main question: {main_question}"]
    for i, (q, a) in enumerate(context, 1):
        lines += [f"Sub-question {i}: {q}", f"Sub-answer {i}: {a}"]
    lines += [f"Sub-question: {sub_question}", "Sub-answer:"]
    return "\n".join(lines) + " "


def composition_prompt(question: QuestionRecord, context: Sequence[tuple[str, str]]) -> str:
    lines = [f"Main question: {question.text}", f"Options: {format_options(question.answer_space)}"]
    for i, (q, a) in enumerate(context, 1):
        lines += [f"Sub-question {i}: {q}", f"Sub-answer {i}: {a}"]
    lines += ["Using the sub-answers above, decide the main question.", answer_instruction(question.answer_space)]
    return "\n".join(lines) + "\n"


def parse_decomposition(text: str) -> list[str]:
    """Numbered items ("1. ...", "2) ...", "Decomposition 3: ...") in order."""
    items = []
    for line in text.splitlines():
        m = _NUMBERED.match(line)
        if m and m.group(2).strip():
            items.append(m.group(2).strip())
    return items


@dataclass
class ScotConfig:
    max_depth: int = 2
    temperature: float = 0.0
    max_tokens: int = 128


@dataclass
class InferenceTrace:
    question_id: str
    decomposition: list[str]
    sub_answers: list[str]
    final_answer: Any
    depth_used: int
    final_text: str = ""

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "decomposition": self.decomposition,
            "sub_answers": self.sub_answers,
            "final_answer": self.final_answer,
            "depth_used": self.depth_used,
            "final_text": self.final_text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InferenceTrace":
        return cls(
            d["question_id"], list(d["decomposition"]), list(d["sub_answers"]), d["final_answer"],
            int(d["depth_used"]), d.get("final_text", ""),
        )


class ScriptedLM:
    """Generation from a function of the prompt; records every prompt it sees."""

    def __init__(self, responder: Callable[[str], str] | Sequence[str]):
        if callable(responder):
            self._fn = responder
        else:
            queue = list(responder)
            self._fn = lambda prompt: queue.pop(0)
        self.prompts: list[str] = []

    def generate(self, prompt: str, max_tokens: int = 128, temperature: float = 0.0) -> str:
        self.prompts.append(prompt)
        return self._fn(prompt)


@dataclass
class ScriptedStudent:
    decomposer: Any
    solver: Any


def decompose(student, question: str, depth: int, config: ScotConfig = ScotConfig()) -> list[str]:
    """Sub-questions for ``question``; ``[]`` means atomic (or the depth cap was hit).

    A non-empty generation without numbered items falls back to ``[question]``.
    """
    if depth >= config.max_depth:
        return []
    text = student.decomposer.generate(decomposer_prompt(question), config.max_tokens, config.temperature)
    if not text.strip():
        return []
    items = parse_decomposition(text)
    if not items:
        logger.warning("unparseable decomposition for %r; solving it whole", question[:60])
        return [question]
    return items


def solve_sub(student, main_question: str, context: Sequence[tuple[str, str]], sub_question: str,
              config: ScotConfig = ScotConfig()) -> str:
    """Solver answer to one sub-question given earlier (sub-question, answer) pairs."""
    prompt = solver_prompt(main_question, context, sub_question)
    for attempt in (1, 2):
        try:
            return student.solver.generate(prompt, config.max_tokens, config.temperature).strip()
        except Exception as exc:
            logger.warning("solver failed on attempt %d: %s", attempt, exc)
    return ABSTAIN


def _solve_chain(student, main_question: str, subs: Sequence[str], level: int, config: ScotConfig):
    """Answer ``subs`` (which live at ``level``) in order; returns (pairs, deepest level)."""
    context: list[tuple[str, str]] = []
    deepest = level
    for sub in subs:
        answer = solve_sub(student, main_question, context, sub, config)
        if INSUFFICIENT_MARKER in answer.lower():
            nested = decompose(student, sub, level, config)
            if nested:
                nested_pairs, nested_depth = _solve_chain(student, sub, nested, level + 1, config)
                deepest = max(deepest, nested_depth)
                answer = solve_sub(student, sub, nested_pairs, sub, config)
        context.append((sub, answer))
    return context, deepest


def infer(student, question: QuestionRecord, config: ScotConfig = ScotConfig()) -> InferenceTrace:
    """Zero-shot: no prompt carries exemplars, only the question and the student's own outputs."""
    subs = decompose(student, question.text, 0, config)
    context, depth = _solve_chain(student, question.text, subs, 1, config) if subs else ([], 0)
    prompt = composition_prompt(question, context)
    try:
        final_text = student.solver.generate(prompt, config.max_tokens, config.temperature)
    except Exception as exc:
        logger.warning("%s: composition failed: %s", question.question_id, exc)
        final_text = ""
    return InferenceTrace(
        question.question_id,
        [q for q, _ in context],
        [a for _, a in context],
        extract_answer(final_text, question.answer_space),
        depth,
        final_text,
    )


def write_traces(traces: Iterable[InferenceTrace], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in traces:
            fh.write(json.dumps(t.to_dict()) + "\n")


def read_traces(path: str | Path) -> list[InferenceTrace]:
    with Path(path).open(encoding="utf-8") as fh:
        return [InferenceTrace.from_dict(json.loads(line)) for line in fh if line.strip()]
