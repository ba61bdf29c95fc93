"""Deterministic offline providers.

* STT reads the audio bytes as UTF-8 text.
* LLM answers with a fixed template, one sentence per delta.
* TTS renders a sine tone whose length depends on the text length.

All delays come from ``provider_params`` and default to zero. Two further
params inject failures for tests: ``llm_fail_after`` (raise after that many
deltas) and ``tts_fail_on`` (0-based TTS call index that raises).
"""

from __future__ import annotations

import math
import struct
import time
from collections.abc import Iterator
from dataclasses import dataclass

from ..audio import AudioFormat
from ..errors import ConfigError, ProviderError, SynthesisError, TranscriptionError
from .base import LanguageModel, LlmMessage, SpeechToText, TextToSpeech

AMPLITUDE = 16383
BASE_FREQUENCY = 440.0
LOW_FREQUENCY = 220.0
MS_PER_CHAR = 25
MIN_DURATION_MS = 100
CHUNK_BYTES = 4096
SYSTEM_ECHO_CHARS = 10

_ORDINALS = ("two", "three", "four", "five", "six", "seven", "eight", "nine", "ten")


@dataclass(frozen=True)
class MockDelays:
    llm_initial_ms: float = 0
    llm_inter_sentence_ms: float = 0
    tts_per_call_ms: float = 0
    stt_ms: float = 0

    def __post_init__(self):
        for name in ("llm_initial_ms", "llm_inter_sentence_ms", "tts_per_call_ms", "stt_ms"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
                raise ConfigError(f"{name} must be a non-negative number, got {value!r}")

    @classmethod
    def from_params(cls, params: dict | None) -> MockDelays:
        params = params or {}
        return cls(**{k: params[k] for k in cls.__dataclass_fields__ if k in params})


def _sleep_ms(ms: float) -> None:
    if ms > 0:
        time.sleep(ms / 1000.0)


def _int_param(params: dict | None, name: str, default: int | None, minimum: int) -> int | None:
    value = (params or {}).get(name, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def template_sentences(user_text: str, system_prompt: str = "", sentence_count: int = 3) -> list[str]:
    """The mock LLM's reply, one string per delta (with trailing separator)."""
    first = f"You said: {user_text}."
    if system_prompt:
        first = f"[sys:{system_prompt[:SYSTEM_ECHO_CHARS]}] {first}"
    parts = [first]
    for i in range(2, sentence_count + 1):
        word = _ORDINALS[i - 2] if i - 2 < len(_ORDINALS) else str(i)
        parts.append(f"This is sentence {word}.")
    return [p + " " for p in parts[:-1]] + [parts[-1]]


class MockSTT(SpeechToText):
    def __init__(self, delays: MockDelays | None = None):
        self.delays = delays or MockDelays()

    def transcribe(self, audio: bytes, fmt: AudioFormat) -> str:
        if not audio:
            raise TranscriptionError("empty audio")
        _sleep_ms(self.delays.stt_ms)
        try:
            return bytes(audio).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TranscriptionError(f"mock STT expects UTF-8 pseudo-audio: {exc}") from None


class MockLLM(LanguageModel):
    def __init__(self, delays: MockDelays | None = None, sentence_count: int = 3, fail_after: int | None = None):
        self.delays = delays or MockDelays()
        self.sentence_count = sentence_count
        self.fail_after = fail_after

    def generate(self, messages: list[LlmMessage], model: str | None = None) -> Iterator[str]:
        if not messages or messages[-1].role != "user":
            raise ValueError("messages must end with a user message")
        system = messages[0].content if messages[0].role == "system" else ""
        deltas = template_sentences(messages[-1].content, system, self.sentence_count)
        _sleep_ms(self.delays.llm_initial_ms)
        for i, delta in enumerate(deltas):
            if i == self.fail_after:
                raise ProviderError(f"mock LLM failure after {i} deltas")
            if i:
                _sleep_ms(self.delays.llm_inter_sentence_ms)
            yield delta
        if self.fail_after is not None and self.fail_after >= len(deltas):
            raise ProviderError(f"mock LLM failure after {len(deltas)} deltas")


def tone_duration_ms(text: str) -> int:
    return max(MIN_DURATION_MS, MS_PER_CHAR * len(text))


def tone_sample_count(text: str, sample_rate: int) -> int:
    return sample_rate * tone_duration_ms(text) // 1000


def render_tone(text: str, voice: str, sample_rate: int) -> bytes:
    freq = LOW_FREQUENCY if voice == "low" else BASE_FREQUENCY
    step = 2 * math.pi * freq / sample_rate
    n = tone_sample_count(text, sample_rate)
    samples = [round(AMPLITUDE * math.sin(step * k)) for k in range(n)]
    return struct.pack(f"<{n}h", *samples)


class MockTTS(TextToSpeech):
    def __init__(self, delays: MockDelays | None = None, fail_on: int | None = None):
        self.delays = delays or MockDelays()
        self.fail_on = fail_on
        self.calls = 0

    def synthesize(self, text: str, voice: str, fmt: AudioFormat) -> Iterator[bytes]:
        if not text or not text.strip():
            raise SynthesisError("cannot synthesize blank text")
        call = self.calls
        self.calls += 1
        _sleep_ms(self.delays.tts_per_call_ms)
        if call == self.fail_on:
            raise SynthesisError(f"mock TTS failure on call {call}")
        pcm = render_tone(text, voice, fmt.sample_rate)
        for start in range(0, len(pcm), CHUNK_BYTES):
            yield pcm[start : start + CHUNK_BYTES]


def make_mock_stt(selector, api_keys, params) -> MockSTT:
    return MockSTT(MockDelays.from_params(params))


def make_mock_llm(selector, api_keys, params) -> MockLLM:
    return MockLLM(
        MockDelays.from_params(params),
        sentence_count=_int_param(params, "sentence_count", 3, 1),
        fail_after=_int_param(params, "llm_fail_after", None, 0),
    )


def make_mock_tts(selector, api_keys, params) -> MockTTS:
    return MockTTS(MockDelays.from_params(params), fail_on=_int_param(params, "tts_fail_on", None, 0))
