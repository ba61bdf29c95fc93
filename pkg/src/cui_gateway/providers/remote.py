"""Adapters for OpenAI-compatible REST endpoints.

Routes used, relative to the configured base URL (usually ending in ``/v1``):

* ``POST chat/completions`` with ``"stream": true`` (SSE response)
* ``POST audio/transcriptions`` (multipart upload of a WAV file)
* ``POST audio/speech`` with ``"response_format": "pcm"``

All failures surface as :class:`ProviderError` with ``kind`` set to
``http_status``, ``timeout``, ``transport`` or ``protocol``.
"""

from __future__ import annotations

import json
import logging
import threading
from collections.abc import Iterator
from dataclasses import dataclass, field
from urllib.parse import urlsplit

import httpx

from ..audio import AudioFormat, build_wav
from ..config import redact
from ..errors import ConfigError, ProviderError, SynthesisError, TranscriptionError
from .base import LanguageModel, LlmMessage, SpeechToText, TextToSpeech
from .sse import DONE, SseParser

logger = logging.getLogger(__name__)

BODY_EXCERPT_CHARS = 200

_shared_client: httpx.Client | None = None
_shared_lock = threading.Lock()


def shared_client() -> httpx.Client:
    """Process-wide HTTP client; httpx clients are safe to share across threads."""
    global _shared_client
    with _shared_lock:
        if _shared_client is None:
            _shared_client = httpx.Client()
        return _shared_client


@dataclass(frozen=True)
class RemoteEndpoint:
    base_url: str
    api_key: str = field(repr=False)
    timeout_ms: int = 30000
    max_retries: int = 2

    def __post_init__(self):
        parts = urlsplit(self.base_url)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise ConfigError(f"invalid endpoint URL {self.base_url!r}")
        if not self.api_key:
            raise ConfigError("remote provider requires an API key")
        if self.timeout_ms <= 0:
            raise ConfigError("timeout_ms must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")

    def __repr__(self) -> str:
        return (
            f"RemoteEndpoint(base_url={self.base_url!r}, api_key={redact(self.api_key)!r}, "
            f"timeout_ms={self.timeout_ms}, max_retries={self.max_retries})"
        )

    def url(self, path: str) -> str:
        return self.base_url.rstrip("/") + "/" + path

    @property
    def headers(self) -> dict[str, str]:
        return {"Authorization": f"Bearer {self.api_key}"}


class _RemoteBase:
    error_cls = ProviderError

    def __init__(self, endpoint: RemoteEndpoint, model: str, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.model = model
        self._client = client

    @property
    def client(self) -> httpx.Client:
        return self._client or shared_client()

    def _scrub(self, text: str) -> str:
        key = self.endpoint.api_key
        return text.replace(key, redact(key)) if key else text

    def _fail(self, message: str, *, kind: str, status: int | None = None) -> ProviderError:
        return self.error_cls(self._scrub(message), kind=kind, status=status)

    def _open(self, path: str, **kwargs) -> httpx.Response:
        """Send a request and return the streaming response, retrying transport failures.

        Caller must close the response. Non-2xx responses are read, closed and
        raised as ``http_status`` errors without retry.
        """
        url = self.endpoint.url(path)
        timeout = httpx.Timeout(self.endpoint.timeout_ms / 1000.0)
        attempts = self.endpoint.max_retries + 1
        for attempt in range(1, attempts + 1):
            logger.debug(
                "POST %s model=%s key=%s attempt=%d/%d",
                url, self.model, redact(self.endpoint.api_key), attempt, attempts,
            )
            try:
                request = self.client.build_request(
                    "POST", url, headers=self.endpoint.headers, timeout=timeout, **kwargs
                )
                response = self.client.send(request, stream=True)
            except httpx.TransportError as exc:
                kind = "timeout" if isinstance(exc, httpx.TimeoutException) else "transport"
                logger.warning("%s %s on attempt %d/%d: %s", kind, url, attempt, attempts, self._scrub(str(exc)))
                if attempt == attempts:
                    raise self._fail(f"{kind} talking to {url}: {exc}", kind=kind) from None
                continue
            if response.is_success:
                return response
            try:
                body = response.read().decode("utf-8", "replace")
            except httpx.HTTPError:
                body = ""
            finally:
                response.close()
            excerpt = body[:BODY_EXCERPT_CHARS]
            logger.warning("HTTP %d from %s: %s", response.status_code, url, self._scrub(excerpt))
            raise self._fail(f"HTTP {response.status_code} from {url}: {excerpt}", kind="http_status", status=response.status_code)
        raise AssertionError("unreachable")


class RemoteLLM(_RemoteBase, LanguageModel):
    def generate(self, messages: list[LlmMessage], model: str | None = None) -> Iterator[str]:
        body = {"model": model or self.model, "messages": [m.to_dict() for m in messages], "stream": True}
        response = self._open("chat/completions", json=body)
        parser = SseParser()
        try:
            for chunk in response.iter_raw():
                for data in parser.feed(chunk):
                    if data.strip() == DONE:
                        return
                    delta = self._content(data)
                    if delta:
                        yield delta
        except httpx.TimeoutException as exc:
            raise self._fail(f"timeout while streaming: {exc}", kind="timeout") from None
        except httpx.TransportError as exc:
            raise self._fail(f"stream interrupted: {exc}", kind="transport") from None
        except UnicodeDecodeError as exc:
            raise self._fail(f"event stream is not UTF-8: {exc}", kind="protocol") from None
        finally:
            response.close()

    def _content(self, data: str) -> str:
        try:
            event = json.loads(data)
            choices = event.get("choices") or []
            if not choices:
                return ""
            delta = choices[0].get("delta") or {}
            content = delta.get("content")
        except (ValueError, AttributeError) as exc:
            raise self._fail(f"malformed stream event: {exc}", kind="protocol") from None
        if content is not None and not isinstance(content, str):
            raise self._fail("malformed stream event: content is not a string", kind="protocol")
        return content or ""


class RemoteSTT(_RemoteBase, SpeechToText):
    error_cls = TranscriptionError

    def transcribe(self, audio: bytes, fmt: AudioFormat) -> str:
        if not audio:
            raise TranscriptionError("empty audio")
        files = {"file": ("utterance.wav", build_wav(fmt, audio), "audio/wav")}
        response = self._open("audio/transcriptions", data={"model": self.model}, files=files)
        try:
            payload = response.read()
        except httpx.TimeoutException as exc:
            raise self._fail(f"timeout reading transcription: {exc}", kind="timeout") from None
        except httpx.TransportError as exc:
            raise self._fail(f"transcription response interrupted: {exc}", kind="transport") from None
        finally:
            response.close()
        try:
            text = json.loads(payload)["text"]
        except (ValueError, KeyError, TypeError):
            raise self._fail("transcription response has no 'text' field", kind="protocol") from None
        if not isinstance(text, str):
            raise self._fail("transcription 'text' is not a string", kind="protocol")
        return text


class RemoteTTS(_RemoteBase, TextToSpeech):
    error_cls = SynthesisError

    def synthesize(self, text: str, voice: str, fmt: AudioFormat) -> Iterator[bytes]:
        if not text or not text.strip():
            raise SynthesisError("cannot synthesize blank text")
        body = {"model": self.model, "input": text, "voice": voice, "response_format": "pcm"}
        response = self._open("audio/speech", json=body)
        total = 0
        try:
            for chunk in response.iter_bytes():
                if chunk:
                    total += len(chunk)
                    yield chunk
        except httpx.TimeoutException as exc:
            raise self._fail(f"timeout while receiving audio: {exc}", kind="timeout") from None
        except httpx.TransportError as exc:
            raise self._fail(f"audio stream interrupted: {exc}", kind="transport") from None
        finally:
            response.close()
        if total == 0:
            raise SynthesisError("empty audio", kind="protocol")


def endpoint_from_selector(selector, api_keys: dict, params: dict) -> RemoteEndpoint:
    if not selector.endpoint:
        raise ConfigError(f"provider {selector.provider!r} requires an endpoint URL")
    key = api_keys.get(selector.provider)
    if not key:
        raise ConfigError(f"provider {selector.provider!r} requires an api key")
    kwargs = {}
    for name in ("timeout_ms", "max_retries"):
        if name in params:
            value = params[name]
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name} must be an integer")
            kwargs[name] = value
    return RemoteEndpoint(selector.endpoint, key, **kwargs)


def make_remote_llm(selector, api_keys, params) -> RemoteLLM:
    return RemoteLLM(endpoint_from_selector(selector, api_keys, params), selector.model)


def make_remote_stt(selector, api_keys, params) -> RemoteSTT:
    return RemoteSTT(endpoint_from_selector(selector, api_keys, params), selector.model)


def make_remote_tts(selector, api_keys, params) -> RemoteTTS:
    return RemoteTTS(endpoint_from_selector(selector, api_keys, params), selector.model)


def remote_llm_stream(endpoint: RemoteEndpoint, model: str, messages: list[LlmMessage]) -> Iterator[str]:
    return RemoteLLM(endpoint, model).generate(messages)


def remote_stt_transcribe(endpoint: RemoteEndpoint, model: str, audio: bytes, fmt: AudioFormat) -> str:
    return RemoteSTT(endpoint, model).transcribe(audio, fmt)


def remote_tts_synthesize(endpoint: RemoteEndpoint, model: str, text: str, voice: str, fmt: AudioFormat) -> Iterator[bytes]:
    return RemoteTTS(endpoint, model).synthesize(text, voice, fmt)
