import json

import httpx
import pytest

from smagdi.backends import BACKEND_URL_ENV, HttpBackend, MockBackend, make_backend
from smagdi.errors import BackendError


def _client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_http_posts_the_documented_body():
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        return httpx.Response(200, json={"text": "Answer: True"})

    backend = HttpBackend("http://llm.test/generate", client=_client(handler))
    assert backend.generate("hello", 0.8, 64, meta={"gold": True}) == "Answer: True"
    assert seen == {"prompt": "hello", "temperature": 0.8, "max_tokens": 64}


def test_http_retries_server_errors_then_succeeds():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503)
        return httpx.Response(200, json={"text": "ok"})

    backend = HttpBackend("http://llm.test", retries=2, backoff=0.0, client=_client(handler))
    assert backend.generate("p", 0.7, 8) == "ok"
    assert len(calls) == 3


def test_http_gives_up_after_retries():
    def handler(request):
        raise httpx.ConnectError("down", request=request)

    backend = HttpBackend("http://llm.test", retries=1, backoff=0.0, client=_client(handler))
    with pytest.raises(BackendError):
        backend.generate("p", 0.7, 8)


def test_http_client_errors_are_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400, text="bad")

    backend = HttpBackend("http://llm.test", retries=3, backoff=0.0, client=_client(handler))
    with pytest.raises(BackendError):
        backend.generate("p", 0.7, 8)
    assert len(calls) == 1


def test_http_rejects_malformed_payload():
    backend = HttpBackend("http://llm.test", retries=0, client=_client(lambda r: httpx.Response(200, json={"t": 1})))
    with pytest.raises(BackendError):
        backend.generate("p", 0.7, 8)


def test_http_url_from_environment(monkeypatch):
    monkeypatch.setenv(BACKEND_URL_ENV, "http://env.test/x")
    assert HttpBackend(client=_client(lambda r: httpx.Response(200, json={"text": ""}))).url == "http://env.test/x"
    monkeypatch.delenv(BACKEND_URL_ENV)
    with pytest.raises(BackendError):
        HttpBackend()


def test_mock_script_file(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps({"responses": [{"question_id": "q", "agent_id": "Lawyer", "round": 2, "text": "T"}],
                                "seed": 5}))
    backend = make_backend("mock", script=path)
    assert backend.seed == 5
    assert backend.generate("anything", 0.9, 10, meta={"question_id": "q", "agent_id": "Lawyer", "round": 2}) == "T"


def test_mock_is_pure_and_seed_sensitive():
    meta = {"kind": "debate", "agent_id": "Lawyer", "round": 1, "answer_space": [True, False], "gold": True}
    a = MockBackend(seed=1)
    texts = {a.generate(f"prompt {i}", 0.7, 10, meta=meta) for i in range(20)}
    again = {MockBackend(seed=1).generate(f"prompt {i}", 0.7, 10, meta=meta) for i in range(20)}
    other = {MockBackend(seed=2).generate(f"prompt {i}", 0.7, 10, meta=meta) for i in range(20)}
    assert texts == again
    assert texts != other


def test_mock_competence_controls_correctness():
    meta = {"kind": "debate", "agent_id": "A", "round": 1, "answer_space": [True, False], "gold": False}
    always = MockBackend(competence={"A": 1.0})
    never = MockBackend(competence={"A": 0.0}, round_bonus=0.0)
    # competence is capped below 1 so even strong agents occasionally err
    hits = sum(always.generate(f"p{i}", 0.7, 5, meta=meta).endswith("Answer: False") for i in range(200))
    assert 180 <= hits < 200
    assert all(never.generate(f"p{i}", 0.7, 5, meta=meta).endswith("Answer: True") for i in range(30))


def test_unknown_backend_kind():
    with pytest.raises(ValueError):
        make_backend("carrier-pigeon")
