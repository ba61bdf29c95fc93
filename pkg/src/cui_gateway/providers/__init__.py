"""Provider interfaces, the registry, and the built-in implementations."""

from .base import (
    LanguageModel,
    LlmMessage,
    Role,
    SpeechToText,
    TextToSpeech,
    llm_generate,
    stt_transcribe,
    tts_synthesize,
)
from .mock import MockDelays, MockLLM, MockSTT, MockTTS
from .registry import MODEL_CATALOG, ProviderRegistry, default_registry, registry_resolve

__all__ = [
    "LanguageModel",
    "LlmMessage",
    "MODEL_CATALOG",
    "MockDelays",
    "MockLLM",
    "MockSTT",
    "MockTTS",
    "ProviderRegistry",
    "Role",
    "SpeechToText",
    "TextToSpeech",
    "default_registry",
    "llm_generate",
    "registry_resolve",
    "stt_transcribe",
    "tts_synthesize",
]
