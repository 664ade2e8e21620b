"""Persona debaters: role prompts, answer extraction and backend calls."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .backends import AgentBackend
from .data import ABSTAIN, MMLU_LETTERS, QuestionRecord
from .errors import AgentCallError, ContractError

DECISION_DIRECTIVE = "Make Decision based on this"


@dataclass(frozen=True)
class Persona:
    name: str
    directives: tuple[str, ...]
    domain_tags: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.directives:
            raise ContractError(f"persona {self.name} has no directives")
        if self.directives[-1] != DECISION_DIRECTIVE:
            raise ContractError(f"persona {self.name} must end with the decision directive")


LAWYER = Persona(
    "Lawyer",
    (
        "Analyze under Common Law and Civil Law frameworks",
        "Simulate arguments from plaintiff/defendant perspectives simultaneously",
        "Identify conflicting precedents across federal circuits",
        "Apply game theory to predict settlement likelihoods using Nash equilibrium",
        "Check legality under local, national, and international law",
        "Identify who could sue whom if this decision is made",
        "Consider precedent this sets for future similar cases",
        "Evaluate enforceability and compliance mechanisms",
        "Assess constitutional and human rights implications",
        DECISION_DIRECTIVE,
    ),
    frozenset({"law", "policy", "rights"}),
)

SCIENTIST = Persona(
    "Scientist",
    (
        "Generate two conflicting hypotheses before selecting an option",
        "Conduct a Red Team analysis attacking your own conclusion",
        "Calculate Bayesian probabilities for competing explanations using Bayes' theorem: "
        "P(H | E) = P(E | H) * P(H) / P(E)",
        "Model system interactions using both linear and chaotic frameworks",
        "Compare findings against contradictory studies from adjacent fields",
        'Test your reasoning by asking "what could prove this wrong?"',
        "Consider environmental and health impacts spanning 50+ years",
        "Demand evidence with statistical significance before accepting claims",
        DECISION_DIRECTIVE,
    ),
    frozenset({"science", "biology", "physics", "chemistry", "medicine"}),
)

MATHEMATICIAN = Persona(
    "Mathematician",
    (
        "Solve using both frequentist and Bayesian approaches",
        "Model with Monte Carlo and deterministic simulations",
        "Calculate error propagation through all estimation steps",
        "Apply robust optimization against adversarial inputs",
        "Quantify all variables and assign numerical values",
        "Calculate expected outcomes using probability theory",
        "Model best-case, worst-case, and most-likely scenarios",
        "Identify optimization targets and constraints",
        "Express uncertainty using confidence intervals",
        DECISION_DIRECTIVE,
    ),
    frozenset({"mathematics", "statistics", "algebra", "computing"}),
)

ETHICIST = Persona(
    "Ethicist",
    (
        "Apply in sequence: Utilitarian, Deontological, Virtue Ethics lenses",
        "Calculate moral weightings using differentiable ethics equations",
        "Identify irreconcilable value conflicts through geometric mean analysis",
        'Apply multiple ethical tests: "Is this fair?", "Does this reduce suffering?", '
        '"Would I want this if roles were reversed?"',
        "Consider moral obligations to future generations",
        "Weigh individual rights against collective good",
        "Identify moral dilemmas and tragic trade-offs",
        "Question the moral legitimacy of the decision-makers",
        "Perform universalizability tests for proposed actions",
        DECISION_DIRECTIVE,
    ),
    frozenset({"ethics", "philosophy", "society"}),
)

HISTORIAN = Persona(
    "Historian",
    (
        "Contextualize the issue within relevant historical periods and events",
        "Identify historical precedents and analogues for each option",
        "Analyze the long-term consequences of similar decisions in the past",
        "Examine the roles of key actors, institutions, and social forces in shaping outcomes",
        "Assess the reliability and biases of historical sources and narratives",
        "Consider the impact of cultural, economic, and technological changes over time",
        "Highlight lessons learned from both successes and failures in history",
        "Address how collective memory and historiography influence present choices",
        DECISION_DIRECTIVE,
    ),
    frozenset({"history", "geography", "culture"}),
)

DEFAULT_ROSTER: tuple[Persona, ...] = (LAWYER, SCIENTIST, MATHEMATICIAN, ETHICIST, HISTORIAN)
PERSONAS = {p.name: p for p in DEFAULT_ROSTER}


@dataclass(frozen=True)
class AgentResponse:
    agent_id: str
    round: int
    raw_text: str
    extracted_answer: Any
    temperature: float

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "round": self.round,
            "raw_text": self.raw_text,
            "extracted_answer": self.extracted_answer,
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentResponse":
        return cls(d["agent_id"], int(d["round"]), d["raw_text"], d["extracted_answer"], float(d["temperature"]))

    @property
    def abstained(self) -> bool:
        return self.extracted_answer == ABSTAIN


def format_options(answer_space: Sequence[Any]) -> str:
    return " or ".join(str(a) for a in answer_space)


def answer_instruction(answer_space: Sequence[Any]) -> str:
    return f'End with your final answer on its own line as "Answer: X" where X is {format_options(answer_space)}.'


def build_prompt(
    persona: Persona,
    question: QuestionRecord,
    peer_context: Sequence[AgentResponse],
    round: int,
    weights: Mapping[str, float] | None = None,
) -> str:
    """Compose the persona prompt for one round.

    ``peer_context`` is the previous round's responses. The persona's own earlier
    response is shown separately; the others are listed by descending weight
    (ties keep their given order). ``weights`` defaults to uniform.
    """
    if round < 1:
        raise ContractError(f"round must be >= 1, got {round}")
    if (round == 1) != (len(peer_context) == 0):
        raise ContractError("peer context must be empty exactly in round 1")

    lines = [f"You are the {persona.name} on a panel of experts. Follow these directives:"]
    lines += [f"- {d}" for d in persona.directives]
    lines += ["", f"Question: {question.text}", f"Options: {format_options(question.answer_space)}", ""]

    if round == 1:
        lines.append("Provide an analysis of your reasoning that other panelists can review.")
    else:
        own = [r for r in peer_context if r.agent_id == persona.name]
        peers = [r for r in peer_context if r.agent_id != persona.name]
        if own:
            lines += ["Your previous response:", own[-1].raw_text.strip(), ""]
        if weights is None:
            weights = {r.agent_id: 1.0 / max(1, len(peers)) for r in peers}
        ranked = sorted(peers, key=lambda r: -weights.get(r.agent_id, 0.0))
        lines.append(
            f"Responses from the other panelists in round {round - 1}, most credible first "
            "(give more influence to higher weights):"
        )
        for r in ranked:
            lines.append(f"[{r.agent_id} | weight {weights.get(r.agent_id, 0.0):.4f}] {r.raw_text.strip()}")
        lines += ["", f"Round {round}: refine your analysis in light of the other panelists."]
    lines.append(answer_instruction(question.answer_space))
    return "\n".join(lines)


_ANSWER_RE = re.compile(r"answer\s*:\s*\**\s*([A-Za-z0-9]+)", re.IGNORECASE)


def _match_label(token: str, answer_space: Sequence[Any]) -> Any:
    low = token.lower()
    for label in answer_space:
        if str(label).lower() == low:
            return label
    if all(isinstance(a, bool) for a in answer_space):
        if low in ("yes", "no"):
            want = low == "yes"
            return next((a for a in answer_space if a is want), ABSTAIN)
    elif all(isinstance(a, int) and not isinstance(a, bool) for a in answer_space):
        if len(token) == 1 and token.upper() in MMLU_LETTERS:
            idx = MMLU_LETTERS.index(token.upper())
            return next((a for a in answer_space if a == idx), ABSTAIN)
    return ABSTAIN


def extract_answer(raw_text: str, answer_space: Sequence[Any]) -> Any:
    """Label after the last ``Answer:`` marker, or ABSTAIN when it does not parse."""
    if not answer_space:
        raise ContractError("answer space must be non-empty")
    matches = _ANSWER_RE.findall(raw_text or "")
    if not matches:
        return ABSTAIN
    return _match_label(matches[-1], answer_space)


def split_analysis(raw_text: str) -> str:
    """Text before the final answer marker."""
    last = None
    for last in _ANSWER_RE.finditer(raw_text):
        pass
    return raw_text if last is None else raw_text[: last.start()].rstrip()


def respond(
    persona: Persona,
    backend: AgentBackend,
    question: QuestionRecord,
    peer_context: Sequence[AgentResponse],
    round: int,
    temperature: float,
    weights: Mapping[str, float] | None = None,
    max_tokens: int = 512,
    kind: str = "debate",
) -> AgentResponse:
    if temperature <= 0:
        raise ContractError(f"temperature must be positive, got {temperature}")
    prompt = build_prompt(persona, question, peer_context, round, weights)
    # meta is routing info for MockBackend (gold drives its synthetic agents);
    # HttpBackend never sends it over the wire.
    meta = {
        "kind": kind,
        "question_id": question.question_id,
        "agent_id": persona.name,
        "round": round,
        "answer_space": list(question.answer_space),
        "gold": question.gold,
    }
    try:
        text = backend.generate(prompt, temperature, max_tokens, meta=meta)
    except Exception as exc:
        raise AgentCallError(persona.name, round, exc) from exc
    return AgentResponse(persona.name, round, text, extract_answer(text, question.answer_space), temperature)
