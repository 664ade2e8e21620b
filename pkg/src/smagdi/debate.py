"""Credibility weighting and the layered-consensus debate loop."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .agents import AgentResponse, Persona, respond
from .backends import AgentBackend
from .data import ABSTAIN, QuestionRecord, same_label
from .errors import AgentCallError, ContractError, DebateError, UnresolvableVoteError, ValidationError

logger = logging.getLogger(__name__)

CONSENSUS = "CONSENSUS"
WEIGHTED_VOTE = "WEIGHTED_VOTE"


@dataclass(frozen=True)
class AgentWeights:
    raw: dict[str, float]
    normalized: dict[str, float]
    epsilon: float = 0.1

    def to_dict(self) -> dict:
        return {"raw": self.raw, "normalized": self.normalized, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "AgentWeights":
        return cls(dict(d["raw"]), dict(d["normalized"]), float(d["epsilon"]))


@dataclass(frozen=True)
class DebateConfig:
    max_rounds: int = 3
    base_temperature: float = 0.7
    temperature_increment: float = 0.1
    epsilon: float = 0.1
    calibration_size: int = 20
    max_tokens: int = 512
    parallel: bool = True

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValidationError("max_rounds must be >= 1")
        if self.temperature_increment < 0:
            raise ValidationError("temperature_increment must be >= 0")
        if self.base_temperature <= 0:
            raise ValidationError("base_temperature must be positive")

    def temperature(self, round: int) -> float:
        return self.base_temperature + self.temperature_increment * (round - 1)


@dataclass
class DebateTranscript:
    question: QuestionRecord
    rounds: list[list[AgentResponse]]
    final_answer: Any
    consensus_reached: bool
    decided_by: str

    def to_dict(self) -> dict:
        return {
            "question": self.question.to_dict(),
            "rounds": [[r.to_dict() for r in rnd] for rnd in self.rounds],
            "final_answer": self.final_answer,
            "consensus_reached": self.consensus_reached,
            "decided_by": self.decided_by,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DebateTranscript":
        return cls(
            QuestionRecord.from_dict(d["question"]),
            [[AgentResponse.from_dict(r) for r in rnd] for rnd in d["rounds"]],
            d["final_answer"],
            bool(d["consensus_reached"]),
            d["decided_by"],
        )


def optimize_weights(accuracies: Mapping[str, float], epsilon: float = 0.1) -> AgentWeights:
    """Clamp each accuracy from below at ``epsilon`` and normalize to sum 1."""
    if not accuracies:
        raise ValidationError("accuracy map is empty")
    if not 0.0 < epsilon < 1.0:
        raise ValidationError(f"epsilon must be in (0, 1), got {epsilon}")
    for name, acc in accuracies.items():
        if not (0.0 <= acc <= 1.0):
            raise ValidationError(f"accuracy for {name} outside [0, 1]: {acc}")
    raw = {name: max(epsilon, float(acc)) for name, acc in accuracies.items()}
    total = math.fsum(raw.values())
    normalized = {name: w / total for name, w in raw.items()}
    return AgentWeights(raw, normalized, epsilon)


def calibrate(
    roster: Sequence[Persona],
    backend: AgentBackend,
    training_sample: Sequence[QuestionRecord],
    config: DebateConfig = DebateConfig(),
) -> AgentWeights:
    """Single-shot round-1 accuracy of each persona on ``training_sample``."""
    if not training_sample:
        raise ContractError("calibration sample is empty")
    hits = {p.name: 0 for p in roster}
    for q in training_sample:
        for p in roster:
            r = respond(p, backend, q, [], 1, config.base_temperature, max_tokens=config.max_tokens, kind="calibration")
            if same_label(r.extracted_answer, q.gold):
                hits[p.name] += 1
    accuracies = {name: h / len(training_sample) for name, h in hits.items()}
    logger.info("calibration accuracies: %s", accuracies)
    return optimize_weights(accuracies, config.epsilon)


def check_consensus(responses: Sequence[AgentResponse]) -> Any | None:
    """Common label when every non-abstaining agent agrees, else None."""
    votes = [r.extracted_answer for r in responses if r.extracted_answer != ABSTAIN]
    if not votes:
        return None
    first = votes[0]
    if all(same_label(v, first) for v in votes[1:]):
        return first
    return None


def vote_scores(responses: Sequence[AgentResponse], weights: AgentWeights) -> list[tuple[Any, float]]:
    """Summed normalized weight per voted label, in first-seen order."""
    scores: list[list] = []
    for r in responses:
        if r.extracted_answer == ABSTAIN:
            continue
        w = weights.normalized.get(r.agent_id, 0.0)
        for entry in scores:
            if same_label(entry[0], r.extracted_answer):
                entry[1] += w
                break
        else:
            scores.append([r.extracted_answer, w])
    return [(label, score) for label, score in scores]


def weighted_vote(
    responses: Sequence[AgentResponse],
    weights: AgentWeights,
    answer_space: Sequence[Any] | None = None,
) -> Any:
    """Label with the largest summed normalized weight.

    Ties go to the label listed first in ``answer_space`` (first-seen order when
    no answer space is given). Abstentions carry no weight.
    """
    scores = vote_scores(responses, weights)
    if not scores:
        raise UnresolvableVoteError("every agent abstained")
    if answer_space is not None:
        def rank(label):
            for i, a in enumerate(answer_space):
                if same_label(a, label):
                    return i
            return len(answer_space)

        scores.sort(key=lambda item: rank(item[0]))
    best_label, best = scores[0]
    for label, score in scores[1:]:
        if score > best:
            best_label, best = label, score
    return best_label


def _run_round(roster, backend, question, previous, rnd, temperature, weights, config):
    def call(p: Persona) -> AgentResponse:
        return respond(
            p, backend, question, previous, rnd, temperature, weights.normalized, max_tokens=config.max_tokens
        )

    if config.parallel and len(roster) > 1:
        with ThreadPoolExecutor(max_workers=len(roster)) as pool:
            # map preserves roster order regardless of completion order
            return list(pool.map(call, roster))
    return [call(p) for p in roster]


def run_debate(
    question: QuestionRecord,
    roster: Sequence[Persona],
    backend: AgentBackend,
    weights: AgentWeights,
    config: DebateConfig = DebateConfig(),
) -> DebateTranscript:
    if abs(math.fsum(weights.normalized.values()) - 1.0) > 1e-9:
        raise ContractError("weights are not normalized")
    rounds: list[list[AgentResponse]] = []
    previous: list[AgentResponse] = []
    for rnd in range(1, config.max_rounds + 1):
        temperature = config.temperature(rnd)
        try:
            responses = _run_round(roster, backend, question, previous, rnd, temperature, weights, config)
        except AgentCallError as exc:
            raise DebateError(question.question_id, rnd, exc) from exc
        rounds.append(responses)
        agreed = check_consensus(responses)
        if agreed is not None:
            return DebateTranscript(question, rounds, agreed, True, CONSENSUS)
        previous = responses
    try:
        final = weighted_vote(rounds[-1], weights, question.answer_space)
    except UnresolvableVoteError:
        logger.warning("%s: all agents abstained in the last round", question.question_id)
        final = ABSTAIN
    return DebateTranscript(question, rounds, final, False, WEIGHTED_VOTE)
