"""Per-connection session configuration carried by SESSION_CONFIG.

Example document::

    {
      "stt": {"provider": "mock"},
      "llm": {"provider": "openai-compatible", "model": "gpt-4o-mini",
              "endpoint": "https://api.example.com/v1"},
      "tts": "mock",
      "voice": "low",
      "system_prompt": "You are a museum guide.",
      "history": true,
      "streaming": true,
      "audio_in": {"sample_rate": 16000, "channels": 1, "encoding": "pcm_s16le"},
      "api_keys": {"openai-compatible": "sk-..."},
      "provider_params": {"llm_initial_ms": 100}
    }

A bare string is shorthand for ``{"provider": <string>}``. Unknown keys are
ignored; ``version`` is reserved.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field

from .audio import AudioFormat
from .errors import ConfigError
from .providers.base import Role

DEFAULT_MAX_TURNS = 64
DEFAULT_VOICE = "default"
DEFAULT_MODEL = "default"


@dataclass(frozen=True)
class ProviderSelector:
    provider: str
    model: str = DEFAULT_MODEL
    endpoint: str | None = None

    @classmethod
    def from_json(cls, role: Role, obj) -> ProviderSelector:
        if isinstance(obj, str):
            obj = {"provider": obj}
        if not isinstance(obj, dict):
            raise ConfigError(f"'{role.value}' must be an object with a 'provider' key")
        provider = obj.get("provider")
        if not isinstance(provider, str) or not provider:
            raise ConfigError(f"'{role.value}.provider' must be a non-empty string")
        model = obj.get("model", DEFAULT_MODEL)
        endpoint = obj.get("endpoint")
        if not isinstance(model, str):
            raise ConfigError(f"'{role.value}.model' must be a string")
        if endpoint is not None and not isinstance(endpoint, str):
            raise ConfigError(f"'{role.value}.endpoint' must be a string")
        return cls(provider, model, endpoint)

    def to_json(self) -> dict:
        out = {"provider": self.provider, "model": self.model}
        if self.endpoint:
            out["endpoint"] = self.endpoint
        return out


def redact(secret: str) -> str:
    """First four characters plus an ellipsis; never log more of a key than this."""
    return secret[:4] + "…" if secret else ""


def _auto_label() -> str:
    return "npc-" + uuid.uuid4().hex[:8]


@dataclass(frozen=True)
class SessionConfig:
    stt: ProviderSelector
    llm: ProviderSelector
    tts: ProviderSelector
    session_label: str = field(default_factory=_auto_label)
    voice: str = DEFAULT_VOICE
    system_prompt: str = ""
    history_enabled: bool = True
    streaming_enabled: bool = True
    audio_in: AudioFormat = field(default_factory=AudioFormat)
    audio_out: AudioFormat = field(default_factory=AudioFormat)
    api_keys: dict = field(default_factory=dict, repr=False)
    provider_params: dict = field(default_factory=dict)
    max_history_turns: int = DEFAULT_MAX_TURNS

    def selector(self, role: Role) -> ProviderSelector:
        return {Role.STT: self.stt, Role.LLM: self.llm, Role.TTS: self.tts}[role]

    def to_json(self, include_secrets: bool = False) -> dict:
        keys = self.api_keys if include_secrets else {k: redact(v) for k, v in self.api_keys.items()}
        return {
            "session_label": self.session_label,
            "stt": self.stt.to_json(),
            "llm": self.llm.to_json(),
            "tts": self.tts.to_json(),
            "voice": self.voice,
            "system_prompt": self.system_prompt,
            "history": self.history_enabled,
            "streaming": self.streaming_enabled,
            "audio_in": self.audio_in.to_dict(),
            "audio_out": self.audio_out.to_dict(),
            "api_keys": keys,
            "provider_params": dict(self.provider_params),
            "max_history_turns": self.max_history_turns,
        }


def _typed(doc: dict, key: str, kind, default):
    value = doc.get(key, default)
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"'{key}' must be an integer")
    if not isinstance(value, kind):
        raise ConfigError(f"'{key}' must be of type {kind.__name__}")
    return value


def session_config_from_dict(doc: dict, registry=None) -> SessionConfig:
    if not isinstance(doc, dict):
        raise ConfigError("session config must be a JSON object")
    selectors = {}
    for role in Role:
        if role.value not in doc:
            raise ConfigError(f"missing required key '{role.value}'")
        selectors[role] = ProviderSelector.from_json(role, doc[role.value])

    if registry is None:
        from .providers.registry import default_registry

        registry = default_registry()
    for role, sel in selectors.items():
        registry.get(role, sel.provider)

    label = doc.get("session_label")
    if label is None:
        label = _auto_label()
    elif not isinstance(label, str) or not label:
        raise ConfigError("'session_label' must be a non-empty string")

    api_keys = _typed(doc, "api_keys", dict, {})
    if not all(isinstance(k, str) and isinstance(v, str) for k, v in api_keys.items()):
        raise ConfigError("'api_keys' must map provider names to strings")
    max_turns = _typed(doc, "max_history_turns", int, DEFAULT_MAX_TURNS)
    if max_turns < 1:
        raise ConfigError("'max_history_turns' must be >= 1")

    return SessionConfig(
        stt=selectors[Role.STT],
        llm=selectors[Role.LLM],
        tts=selectors[Role.TTS],
        session_label=label,
        voice=_typed(doc, "voice", str, DEFAULT_VOICE),
        system_prompt=_typed(doc, "system_prompt", str, ""),
        history_enabled=_typed(doc, "history", bool, True),
        streaming_enabled=_typed(doc, "streaming", bool, True),
        audio_in=AudioFormat.from_dict(doc.get("audio_in")),
        audio_out=AudioFormat.from_dict(doc.get("audio_out")),
        api_keys=dict(api_keys),
        provider_params=dict(_typed(doc, "provider_params", dict, {})),
        max_history_turns=max_turns,
    )


def parse_session_config(payload: bytes | str, registry=None) -> SessionConfig:
    """Decode and validate a SESSION_CONFIG payload (UTF-8 JSON)."""
    try:
        if isinstance(payload, (bytes, bytearray)):
            payload = bytes(payload).decode("utf-8")
        doc = json.loads(payload)
    except (UnicodeDecodeError, ValueError) as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return session_config_from_dict(doc, registry)
