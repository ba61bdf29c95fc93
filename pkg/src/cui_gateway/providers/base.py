from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Iterator
from dataclasses import dataclass
from enum import Enum

from ..audio import AudioFormat


class Role(str, Enum):
    STT = "stt"
    LLM = "llm"
    TTS = "tts"


@dataclass(frozen=True)
class LlmMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"invalid message role {self.role!r}")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


class SpeechToText(ABC):
    role = Role.STT

    @abstractmethod
    def transcribe(self, audio: bytes, fmt: AudioFormat) -> str:
        """Transcribe one complete utterance."""


class LanguageModel(ABC):
    role = Role.LLM

    @abstractmethod
    def generate(self, messages: list[LlmMessage], model: str | None = None) -> Iterator[str]:
        """Yield response text deltas in order; exhaustion means the response is complete."""


class TextToSpeech(ABC):
    role = Role.TTS

    @abstractmethod
    def synthesize(self, text: str, voice: str, fmt: AudioFormat) -> Iterator[bytes]:
        """Yield PCM s16le mono chunks at ``fmt.sample_rate``."""


def stt_transcribe(provider: SpeechToText, audio: bytes, fmt: AudioFormat) -> str:
    return provider.transcribe(audio, fmt)


def llm_generate(provider: LanguageModel, messages: list[LlmMessage], model: str | None = None) -> Iterator[str]:
    return provider.generate(messages, model)


def tts_synthesize(provider: TextToSpeech, text: str, voice: str, fmt: AudioFormat) -> Iterator[bytes]:
    return provider.synthesize(text, voice, fmt)
