import json
import logging

import pytest

from histcondense.backend import BackendError
from histcondense.client import (
    AuthError,
    ChatClient,
    ChatRequest,
    ClientConfig,
    MalformedResponse,
    ProviderProfile,
    RateLimited,
    TransportError,
    chat_complete,
)
from histcondense.condenser import Condenser, CondenserParams, ParseFailedAfterRetries
from histcondense.session import ExchangePair, Role, Turn
from histcondense.stub_server import StubReply, StubServer

REQ = ChatRequest(model_id="m", messages=(("user", "hello there"),))


def config(server, **kw):
    kw.setdefault("backoff_base", 0.0)
    return ClientConfig(base_url=server.base_url, api_key="sk-test-secret", **kw)


def test_stub_echo_with_usage():
    with StubServer([StubReply("fixed", usage={"prompt_tokens": 11, "completion_tokens": 1})]) as srv:
        out = chat_complete(REQ, config(srv))
    assert (out.text, out.prompt_tokens, out.completion_tokens) == ("fixed", 11, 1)
    assert srv.requests[0]["messages"] == [{"role": "user", "content": "hello there"}]
    assert srv.headers[0]["Authorization"] == "Bearer sk-test-secret"


def test_usage_falls_back_to_local_count():
    with StubServer(["one two three"]) as srv:
        out = chat_complete(REQ, config(srv))
    assert (out.prompt_tokens, out.completion_tokens) == (2, 3)


def test_retry_after_429s():
    sleeps = []
    with StubServer([StubReply(status=429), StubReply(status=429), "ok"]) as srv:
        out = chat_complete(REQ, config(srv, backoff_base=0.5), sleep=sleeps.append)
    assert out.text == "ok" and len(srv.requests) == 3
    assert sleeps == [0.5, 1.0]


def test_rate_limited_after_retries():
    with StubServer([StubReply(status=429)] * 3) as srv:
        with pytest.raises(RateLimited):
            chat_complete(REQ, config(srv, max_retries=2), sleep=lambda s: None)
    assert len(srv.requests) == 3


@pytest.mark.parametrize("status", [401, 403])
def test_auth_not_retried(status):
    with StubServer([StubReply(status=status), "ok"]) as srv:
        with pytest.raises(AuthError):
            chat_complete(REQ, config(srv), sleep=lambda s: None)
    assert len(srv.requests) == 1


def test_server_errors_retried_then_transport_error():
    with StubServer([StubReply(status=503)] * 4) as srv:
        with pytest.raises(TransportError):
            chat_complete(REQ, config(srv), sleep=lambda s: None)
    assert len(srv.requests) == 4


def test_script_exhausted_is_500():
    with StubServer(["only"]) as srv:
        chat_complete(REQ, config(srv))
        with pytest.raises(TransportError):
            chat_complete(REQ, config(srv, max_retries=0))


def test_malformed_body():
    with StubServer([StubReply(raw_body="{not json")]) as srv:
        with pytest.raises(MalformedResponse):
            chat_complete(REQ, config(srv))
    with StubServer([StubReply(raw_body='{"choices": []}')]) as srv:
        with pytest.raises(MalformedResponse):
            chat_complete(REQ, config(srv))


def test_connection_refused_is_transport_error():
    cfg = ClientConfig(base_url="http://127.0.0.1:9", max_retries=1, backoff_base=0.0, timeout=2)
    with pytest.raises(TransportError):
        chat_complete(REQ, cfg, sleep=lambda s: None)


def test_frequency_penalty_respects_profile():
    body = REQ.to_body(ProviderProfile(supports_frequency_penalty=True))
    assert body["frequency_penalty"] == 1.0
    body = REQ.to_body(ProviderProfile(supports_frequency_penalty=False))
    assert "frequency_penalty" not in body
    with StubServer(["a", "b"]) as srv:
        chat_complete(REQ, config(srv, profile=ProviderProfile(supports_frequency_penalty=False)))
        chat_complete(REQ, config(srv))
    assert "frequency_penalty" not in srv.requests[0]
    assert srv.requests[1]["frequency_penalty"] == 1.0


def test_serialization_stable():
    a = ChatRequest("m", (("system", "s"), ("user", "u")), temperature=0.01)
    b = ChatRequest("m", (("system", "s"), ("user", "u")), temperature=0.01)
    assert a.serialize() == b.serialize()
    assert json.loads(a.serialize())["max_completion_tokens"] == 10000


def test_request_validation():
    with pytest.raises(ValueError):
        ChatRequest("m", ())
    with pytest.raises(ValueError):
        ChatRequest("m", (("tool", "x"),))
    with pytest.raises(ValueError):
        ClientConfig(base_url="http://x", timeout=0)


def test_profile_file(tmp_path):
    f = tmp_path / "profiles.toml"
    f.write_text('[openai]\nsupports_frequency_penalty = true\n[bedrock]\nsupports_frequency_penalty = false\n'
                 'max_tokens_field = "max_tokens"\n')
    p = ProviderProfile.load(f, "bedrock")
    assert p.name == "bedrock" and not p.supports_frequency_penalty
    assert "max_tokens" in REQ.to_body(p)
    j = tmp_path / "p.json"
    j.write_text(json.dumps({"name": "x", "supports_frequency_penalty": False}))
    assert ProviderProfile.load(j).name == "x"


def test_endpoint_normalization():
    assert ClientConfig("http://h:1").endpoint == "http://h:1/v1/chat/completions"
    assert ClientConfig("http://h:1/v1/").endpoint == "http://h:1/v1/chat/completions"


def test_from_env(monkeypatch):
    monkeypatch.setenv("HISTCONDENSE_BASE_URL", "http://env:1")
    monkeypatch.setenv("HISTCONDENSE_API_KEY", "sk-env")
    cfg = ClientConfig.from_env()
    assert cfg.base_url == "http://env:1" and cfg.api_key == "sk-env"
    assert "sk-env" not in repr(cfg)


def test_secret_never_logged(caplog):
    caplog.set_level(logging.DEBUG)
    with StubServer([StubReply(status=500), "ok"]) as srv:
        chat_complete(REQ, config(srv), sleep=lambda s: None)
    assert "sk-test-secret" not in caplog.text


def _window():
    return [ExchangePair(Turn.make(Role.USER, f"u{i}"), Turn.make(Role.ASSISTANT, f"a{i}"), i) for i in range(1, 5)]


def test_condense_end_to_end_offline():
    reply = json.dumps({"HumanInput": "hi", "Assistant": "summary", "Reasoning": "why"})
    with StubServer([StubReply(reply, usage={"prompt_tokens": 900, "completion_tokens": 12})]) as srv:
        with ChatClient(config(srv), "cond-model") as client:
            out = Condenser(client, CondenserParams(model_id="cond-model")).condense(_window())
    assert out.parsed.assistant_summary == "summary"
    assert (out.input_tokens, out.output_tokens) == (900, 12)
    body = srv.requests[0]
    assert body["model"] == "cond-model" and body["temperature"] == 0.01
    assert body["frequency_penalty"] == 1 and body["max_completion_tokens"] == 10000 and body["top_p"] == 1
    assert body["messages"][0]["content"].startswith("Condense the information from HumanInput")


def test_condense_malformed_via_stub():
    with StubServer(["not json"] * 3) as srv:
        with ChatClient(config(srv), "m") as client:
            with pytest.raises(ParseFailedAfterRetries):
                Condenser(client).condense(_window())
    assert len(srv.requests) == 3


def test_client_errors_are_backend_errors():
    assert issubclass(TransportError, BackendError) and issubclass(AuthError, BackendError)
