from __future__ import annotations

import threading
from collections.abc import Callable
from dataclasses import dataclass

from ..errors import ConfigError
from .base import Role

Factory = Callable[..., object]


@dataclass(frozen=True)
class RegistryEntry:
    role: Role
    name: str
    factory: Factory
    supports_streaming: bool
    is_local: bool
    description: str = ""


@dataclass(frozen=True)
class CatalogRow:
    """One vendor row of the supported-models overview.

    An empty tuple for a role means the vendor offers nothing for it;
    ``("any",)`` means any model served through that vendor's pipeline.
    """

    vendor: str
    stt: tuple[str, ...]
    llm: tuple[str, ...]
    tts: tuple[str, ...]
    streaming: bool
    local: bool


# Informational only: these vendors are reachable through an adapter family
# (e.g. "openai-compatible") or by writing a new provider; see docs/providers.md.
MODEL_CATALOG = (
    CatalogRow(
        "OpenAI",
        stt=("Whisper", "Whisper-tiny (local)"),
        llm=("GPT 3.5", "GPT 4", "GPT 4o", "GPT 4o-mini"),
        tts=("TTS",),
        streaming=True,
        local=False,
    ),
    CatalogRow("Amazon", stt=("Transcribe",), llm=(), tts=("Polly",), streaming=True, local=False),
    CatalogRow(
        "Google",
        stt=(),
        llm=("Gemini 1.0 Pro", "Gemini 1.5 Pro", "Gemini 1.5 Flash"),
        tts=(),
        streaming=True,
        local=False,
    ),
    CatalogRow("Meta", stt=("MMS-ASR",), llm=("LLaMa (local)",), tts=("MMS-TTS",), streaming=True, local=True),
    CatalogRow("Hugging Face", stt=("any",), llm=("any",), tts=("any",), streaming=True, local=True),
)


class ProviderRegistry:
    """Maps ``(role, name)`` to a provider factory.

    A factory is called as ``factory(selector, api_keys, params)`` and must
    raise :class:`ConfigError` when the arguments cannot produce a working
    provider. Registration normally happens at startup; lookups are safe from
    any thread.
    """

    def __init__(self):
        self._entries: dict[tuple[Role, str], RegistryEntry] = {}
        self._lock = threading.Lock()

    def register(
        self,
        role: Role | str,
        name: str,
        factory: Factory,
        *,
        supports_streaming: bool,
        is_local: bool,
        description: str = "",
    ) -> None:
        role = Role(role)
        with self._lock:
            if (role, name) in self._entries:
                raise ValueError(f"{role.value} provider {name!r} already registered")
            self._entries[(role, name)] = RegistryEntry(role, name, factory, supports_streaming, is_local, description)

    def get(self, role: Role | str, name: str) -> RegistryEntry:
        role = Role(role)
        entry = self._entries.get((role, name))
        if entry is None:
            if any(n == name for _, n in self._entries):
                raise ConfigError(f"provider {name!r} cannot serve the {role.value} role")
            raise ConfigError(f"unknown provider {name!r} for {role.value}")
        return entry

    def entries(self) -> list[RegistryEntry]:
        order = list(Role)
        return sorted(self._entries.values(), key=lambda e: (order.index(e.role), e.name))

    def names(self, role: Role | str) -> list[str]:
        role = Role(role)
        return sorted(name for r, name in self._entries if r is role)

    def resolve(self, role: Role | str, selector, api_keys: dict | None = None, params: dict | None = None):
        entry = self.get(role, selector.provider)
        return entry.factory(selector, dict(api_keys or {}), dict(params or {}))


def registry_resolve(registry: ProviderRegistry, role, selector, api_keys=None, params=None):
    return registry.resolve(role, selector, api_keys, params)


def default_registry() -> ProviderRegistry:
    from . import mock, remote

    reg = ProviderRegistry()
    mock_factories = {Role.STT: mock.make_mock_stt, Role.LLM: mock.make_mock_llm, Role.TTS: mock.make_mock_tts}
    remote_factories = {Role.STT: remote.make_remote_stt, Role.LLM: remote.make_remote_llm, Role.TTS: remote.make_remote_tts}
    for role in Role:
        reg.register(
            role, "mock", mock_factories[role],
            supports_streaming=True, is_local=True, description="deterministic offline test double",
        )
        reg.register(
            role, "openai-compatible", remote_factories[role],
            supports_streaming=True, is_local=False, description="HTTP adapter for OpenAI-style REST APIs",
        )
    return reg


def format_registry(registry: ProviderRegistry) -> str:
    lines = [f"{'role':<5} {'provider':<20} {'streaming':<10} {'local':<6} description"]
    for e in registry.entries():
        lines.append(
            f"{e.role.value:<5} {e.name:<20} {'yes' if e.supports_streaming else 'no':<10} "
            f"{'yes' if e.is_local else 'no':<6} {e.description}"
        )
    lines.append("")
    lines.append("Known vendor models (reachable via an adapter family or a custom provider):")
    for row in MODEL_CATALOG:
        lines.append(
            f"  {row.vendor}: stt={', '.join(row.stt) or '-'}; llm={', '.join(row.llm) or '-'}; "
            f"tts={', '.join(row.tts) or '-'}; streaming={'yes' if row.streaming else 'no'}; "
            f"local={'yes' if row.local else 'no'}"
        )
    return "\n".join(lines)
