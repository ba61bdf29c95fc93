import json

import pytest

from cui_gateway.audio import AudioFormat
from cui_gateway.config import ProviderSelector, SessionConfig, parse_session_config, redact
from cui_gateway.errors import CFG_INVALID, ConfigError
from cui_gateway.providers.base import Role
from cui_gateway.providers.mock import make_mock_stt
from cui_gateway.providers.registry import ProviderRegistry
from conftest import mock_config


def parse(doc, registry=None):
    return parse_session_config(json.dumps(doc).encode(), registry)


def test_minimal_document_takes_defaults(registry):
    cfg = parse(mock_config(), registry)
    assert cfg.history_enabled and cfg.streaming_enabled
    assert cfg.audio_in == cfg.audio_out == AudioFormat(16000, 1, "pcm_s16le")
    assert cfg.llm == ProviderSelector("mock")
    assert cfg.max_history_turns == 64
    assert cfg.system_prompt == ""
    assert cfg.session_label


def test_history_can_be_disabled(registry):
    assert parse(mock_config(history=False), registry).history_enabled is False


def test_unknown_provider(registry):
    with pytest.raises(ConfigError, match="unknown provider") as info:
        parse(mock_config(llm={"provider": "nonexistent"}), registry)
    assert info.value.code == CFG_INVALID


def test_unknown_keys_are_ignored(registry):
    cfg = parse(mock_config(version=1, colour="green"), registry)
    assert isinstance(cfg, SessionConfig)


@pytest.mark.parametrize(
    "payload, reason",
    [
        (b"{not json", "malformed JSON"),
        (b"[1, 2]", "object"),
        (json.dumps({"llm": "mock", "tts": "mock"}).encode(), "stt"),
        (json.dumps(mock_config(audio_in={"sample_rate": 11025})).encode(), "sample_rate"),
        (json.dumps(mock_config(audio_out={"channels": 2})).encode(), "channels"),
        (json.dumps(mock_config(history="yes")).encode(), "history"),
        (json.dumps(mock_config(max_history_turns=0)).encode(), "max_history_turns"),
        (b"\xff\xfe", "JSON"),
    ],
)
def test_invalid_documents(payload, reason, registry):
    with pytest.raises(ConfigError, match=reason):
        parse_session_config(payload, registry)


def test_role_mismatch_is_rejected():
    reg = ProviderRegistry()
    reg.register(Role.STT, "whisper-only", make_mock_stt, supports_streaming=False, is_local=True)
    with pytest.raises(ConfigError, match="cannot serve the llm role"):
        parse({"stt": "whisper-only", "llm": "whisper-only", "tts": "whisper-only"}, reg)


def test_api_keys_are_redacted_in_json_view(registry):
    cfg = parse(mock_config(api_keys={"openai-compatible": "sk-supersecret"}), registry)
    view = json.dumps(cfg.to_json(), ensure_ascii=False)
    assert "sk-supersecret" not in view
    assert "sk-s…" in view
    assert "sk-supersecret" not in repr(cfg)
    assert cfg.to_json(include_secrets=True)["api_keys"]["openai-compatible"] == "sk-supersecret"


def test_redact():
    assert redact("abcdefgh") == "abcd…"
    assert redact("") == ""
