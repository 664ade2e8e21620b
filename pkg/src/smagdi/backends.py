"""Response backends: a deterministic scripted mock and a remote HTTP client."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from pathlib import Path
from typing import Any, Mapping, Protocol

import httpx

from .errors import BackendError

logger = logging.getLogger(__name__)

BACKEND_URL_ENV = "SMAGDI_BACKEND_URL"


class AgentBackend(Protocol):
    def generate(
        self, prompt: str, temperature: float, max_tokens: int, meta: Mapping[str, Any] | None = None
    ) -> str: ...


# Phrase banks for synthetic debates. Correct and incorrect agents draw from
# different banks so node text carries a learnable correctness signal.
_SOUND = [
    "the documented evidence is consistent and the premises check out",
    "cross-checking the facts confirms the chain of reasoning",
    "the strongest sources agree and no counterexample survives scrutiny",
    "weighing the verified record supports this conclusion",
]
_FLAWED = [
    "a hasty assumption drives this guess despite missing evidence",
    "an unverified anecdote suggests this, though the logic is shaky",
    "the argument leans on a misremembered detail",
    "intuition alone points this way without a clear source",
]


def _digest(*parts: Any) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return h.digest()


def _unit(*parts: Any) -> float:
    """Deterministic pseudo-uniform number in [0, 1)."""
    return int.from_bytes(_digest(*parts)[:8], "big") / 2**64


class MockBackend:
    """Pure, scripted backend.

    Lookups go to ``script`` keyed by ``(question_id, agent_id, round)`` first.
    Unscripted debate calls fall back to a synthetic agent that answers correctly
    with probability ``competence[agent] + round_bonus * (round - 1)``, where the
    coin flip is a hash of ``(seed, prompt, temperature)``.
    """

    def __init__(
        self,
        script: Mapping[tuple[str, str, int], str] | None = None,
        competence: Mapping[str, float] | None = None,
        default_competence: float = 0.6,
        round_bonus: float = 0.15,
        seed: int = 0,
    ):
        self.script = dict(script or {})
        self.competence = dict(competence or {})
        self.default_competence = default_competence
        self.round_bonus = round_bonus
        self.seed = seed

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "MockBackend":
        """Load ``{"responses": [{question_id, agent_id, round, text}], "competence": {...}, "seed": n}``."""
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        script = {
            (str(r["question_id"]), str(r["agent_id"]), int(r["round"])): r["text"]
            for r in payload.get("responses", [])
        }
        kwargs = {
            "competence": payload.get("competence"),
            "seed": payload.get("seed", 0),
        }
        for key in ("default_competence", "round_bonus"):
            if key in payload:
                kwargs[key] = payload[key]
        kwargs.update(overrides)
        return cls(script=script, **kwargs)

    def generate(self, prompt, temperature, max_tokens, meta=None):
        meta = meta or {}
        key = (str(meta.get("question_id")), str(meta.get("agent_id")), int(meta.get("round", 0)))
        if key in self.script:
            return self.script[key]
        kind = meta.get("kind")
        if kind in ("debate", "calibration", "sas") and "answer_space" in meta:
            return self._synthetic_answer(prompt, temperature, meta)
        if kind == "decompose":
            return self._synthetic_decomposition(meta.get("question", prompt))
        if kind == "solve":
            return self._synthetic_solution(prompt, meta.get("sub_question", ""))
        return f"Mock response {_digest(self.seed, prompt, temperature).hex()[:8]}."

    def _synthetic_answer(self, prompt, temperature, meta):
        agent = str(meta.get("agent_id", "agent"))
        rnd = int(meta.get("round", 1))
        space = list(meta["answer_space"])
        gold = meta.get("gold", space[0])
        p = min(0.97, self.competence.get(agent, self.default_competence) + self.round_bonus * (rnd - 1))
        u = _unit(self.seed, prompt, temperature)
        if u < p or len(space) == 1:
            label, bank = gold, _SOUND
        else:
            wrong = [a for a in space if not (type(a) is type(gold) and a == gold)]
            label = wrong[int(_unit(self.seed, "wrong", prompt) * len(wrong))]
            bank = _FLAWED
        phrase = bank[int(_unit(self.seed, "phrase", prompt, temperature) * len(bank))]
        return f"As the {agent}, {phrase}. Answer: {label}"

    @staticmethod
    def _synthetic_decomposition(question: str) -> str:
        q = question.strip().rstrip("?")
        return "\n".join(
            [
                f"1. What are the key facts about {q}?",
                "2. Which evidence do the strongest arguments rely on?",
                "3. Does that evidence settle the main question?",
            ]
        )

    def _synthetic_solution(self, prompt, sub_question):
        phrase = _SOUND[int(_unit(self.seed, "solve", prompt) * len(_SOUND))]
        return f"For '{sub_question.strip()}': {phrase}."


class _Rejected(BackendError):
    pass


class HttpBackend:
    """POSTs ``{prompt, temperature, max_tokens}`` and expects ``{text}`` back.

    Transport errors and 5xx responses are retried ``retries`` times with a
    linear backoff; 4xx responses fail immediately.
    """

    def __init__(
        self,
        url: str | None = None,
        timeout: float = 60.0,
        retries: int = 2,
        backoff: float = 0.5,
        client: httpx.Client | None = None,
    ):
        url = url or os.environ.get(BACKEND_URL_ENV)
        if not url:
            raise BackendError(f"no backend URL given and ${BACKEND_URL_ENV} is unset")
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        # httpx.Client is safe to share across threads
        self._client = client or httpx.Client(timeout=timeout)

    def generate(self, prompt, temperature, max_tokens, meta=None):
        body = {"prompt": prompt, "temperature": temperature, "max_tokens": max_tokens}
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._client.post(self.url, json=body, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise BackendError(f"server error {resp.status_code}")
                if resp.status_code >= 400:
                    raise _Rejected(f"request rejected with {resp.status_code}: {resp.text[:200]}")
                payload = resp.json()
                text = payload["text"]
                if not isinstance(text, str):
                    raise BackendError("response field 'text' is not a string")
                return text
            except (httpx.TransportError, BackendError, ValueError, KeyError) as exc:
                last_exc = exc
                if isinstance(exc, _Rejected) or attempt == self.retries:
                    break
                logger.warning("backend call failed (attempt %d): %s", attempt + 1, exc)
                time.sleep(self.backoff * (attempt + 1))
        raise BackendError(f"backend at {self.url} failed: {last_exc}") from last_exc

    def close(self):
        self._client.close()


def make_backend(kind: str, *, script: str | Path | None = None, url: str | None = None, **kwargs):
    if kind == "mock":
        if script:
            return MockBackend.from_file(script, **kwargs)
        return MockBackend(**kwargs)
    if kind == "http":
        return HttpBackend(url=url, **kwargs)
    raise ValueError(f"unknown backend kind {kind!r}")
