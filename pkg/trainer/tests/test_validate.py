import json

import pytest
import requests

from factpipe.gateway import EndpointConfig, chat

from factpipe_trainer.errors import EmptyFixture, EndpointUnavailable
from factpipe_trainer.sft_data import load_sft
from factpipe_trainer.validate import http_transport, validate_outputs


def test_echoing_the_gold_answers_parses_perfectly(sft_fixture):
    gold = {ex.user: ex.assistant for ex in load_sft(sft_fixture)}
    report = validate_outputs(sft_fixture, transport=gold.__getitem__)
    assert report.n_prompts == 50
    assert report.parse_rate == 1.0
    assert report.failures == ()


def test_prose_answers_parse_nowhere(sft_fixture):
    report = validate_outputs(
        sft_fixture, transport=lambda prompt: "The summary looks broadly fine to me."
    )
    assert report.parse_rate == 0.0
    assert len(report.failures) == 50
    index, message = report.failures[0]
    assert index == 0
    assert "NoJsonFound" in message


def test_mock_endpoint_round_trip(sft_fixture):
    config = EndpointConfig(name="v", base_url="mock://verifier", model="mock-verifier")
    report = validate_outputs(
        sft_fixture,
        transport=lambda prompt: chat(config, [{"role": "user", "content": prompt}]).text,
    )
    assert report.parse_rate == 1.0


def test_empty_fixture_is_an_error(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(EmptyFixture):
        validate_outputs(empty, transport=lambda prompt: "[]")


class _FakeResponse:
    def __init__(self, status_code=200, body=None):
        self.status_code = status_code
        self._body = body if body is not None else {}

    def json(self):
        if isinstance(self._body, Exception):
            raise self._body
        return self._body


def test_http_transport_happy_path(monkeypatch):
    seen = {}

    def fake_post(url, json=None, timeout=None):
        seen.update(url=url, payload=json, timeout=timeout)
        return _FakeResponse(body={"choices": [{"message": {"content": "[]"}}]})

    monkeypatch.setattr(requests, "post", fake_post)
    send = http_transport("http://host:8000/v1", "served-model", timeout_s=9.0)
    assert send("hello") == "[]"
    assert seen["url"] == "http://host:8000/v1/chat/completions"
    assert seen["payload"]["model"] == "served-model"
    assert seen["payload"]["messages"] == [{"role": "user", "content": "hello"}]
    assert seen["timeout"] == 9.0


@pytest.mark.parametrize("failure", ["connection", "status", "body"])
def test_http_transport_maps_failures(monkeypatch, failure):
    def fake_post(url, json=None, timeout=None):
        if failure == "connection":
            raise requests.ConnectionError("refused")
        if failure == "status":
            return _FakeResponse(status_code=503)
        return _FakeResponse(body={"unexpected": True})

    monkeypatch.setattr(requests, "post", fake_post)
    send = http_transport("http://host:8000/v1", "served-model")
    with pytest.raises(EndpointUnavailable):
        send("hello")
