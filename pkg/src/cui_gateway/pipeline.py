"""STT -> LLM -> TTS execution for one utterance.

Streaming mode synthesizes each sentence as soon as the segmenter releases
it, while a producer thread keeps pulling LLM deltas (at most
``MAX_QUEUED_SENTENCES`` waiting for synthesis). Batch mode collects the whole
reply and synthesizes it once.

Events reach ``emit`` from the calling thread only, in this order per turn::

    Transcript
    SentenceText(i), SentenceAudioChunk(i)*, SentenceAudioEnd(i)   for i = 0, 1, ...
    [PipelineError]
    ResponseEnd
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from collections.abc import Callable
from dataclasses import dataclass

from .audio import AudioFormat
from .errors import PAYLOAD_LIMIT, ProtocolError
from .segmenter import SentenceSegmenter
from .session import Session, TurnRecord

logger = logging.getLogger(__name__)

DEFAULT_UTTERANCE_CAP = 10 * 1024 * 1024
MAX_QUEUED_SENTENCES = 2


@dataclass(frozen=True)
class Transcript:
    text: str


@dataclass(frozen=True)
class SentenceText:
    index: int
    text: str


@dataclass(frozen=True)
class SentenceAudioChunk:
    index: int
    data: bytes


@dataclass(frozen=True)
class SentenceAudioEnd:
    index: int


@dataclass(frozen=True)
class ResponseEnd:
    pass


@dataclass(frozen=True)
class PipelineError:
    stage: str
    reason: str


OutputEvent = Transcript | SentenceText | SentenceAudioChunk | SentenceAudioEnd | ResponseEnd | PipelineError
Emit = Callable[[OutputEvent], None]


class PipelineAborted(Exception):
    """Raised by an ``emit`` callback when the client is gone."""


class UtteranceBuffer:
    def __init__(self, fmt: AudioFormat | None = None, cap: int = DEFAULT_UTTERANCE_CAP):
        self.format = fmt or AudioFormat()
        self.cap = cap
        self.chunks: list[bytes] = []
        self.total_bytes = 0
        self.closed = False
        self.closed_at: float | None = None
        self.text: str | None = None

    @classmethod
    def from_text(cls, text: str, fmt: AudioFormat | None = None, clock=time.monotonic) -> UtteranceBuffer:
        """A closed utterance whose transcript is already known (STT is skipped)."""
        buf = cls(fmt)
        buf.text = text
        buf.close(clock)
        return buf

    def append(self, chunk: bytes) -> None:
        if self.closed:
            raise ProtocolError("audio chunk after end of utterance")
        if self.total_bytes + len(chunk) > self.cap:
            raise ProtocolError(f"utterance exceeds {self.cap} bytes", PAYLOAD_LIMIT)
        self.chunks.append(bytes(chunk))
        self.total_bytes += len(chunk)

    def close(self, clock=time.monotonic) -> None:
        self.closed = True
        self.closed_at = clock()

    @property
    def audio(self) -> bytes:
        return b"".join(self.chunks)


def measure_metrics(marks: dict[str, float]) -> tuple[dict[str, float], list[str]]:
    """Turn a run's timestamps (seconds) into millisecond metrics.

    Expected marks: ``closed``, ``transcript``, ``prompt_sent``,
    ``first_delta``, ``first_audio`` and ``response_end``. Metrics whose
    marks are missing are left out and their names returned as the second
    element.
    """
    spans = {
        "stt_ms": ("closed", "transcript"),
        "llm_first_delta_ms": ("prompt_sent", "first_delta"),
        "ttfa_ms": ("closed", "first_audio"),
        "total_ms": ("closed", "response_end"),
    }
    metrics, missing = {}, []
    for name, (start, end) in spans.items():
        if start in marks and end in marks:
            metrics[name] = round(max(0.0, marks[end] - marks[start]) * 1000.0, 3)
        else:
            missing.append(name)
    return metrics, missing


class _Run:
    def __init__(self, session: Session, utterance: UtteranceBuffer, emit: Emit, clock):
        if not utterance.closed:
            raise ValueError("utterance must be closed before running the pipeline")
        self.session = session
        self.utterance = utterance
        self._emit = emit
        self.clock = clock
        self.marks: dict[str, float] = {"closed": utterance.closed_at if utterance.closed_at is not None else clock()}
        self.transcript = ""
        self.sentences: list[str] = []
        self.error: PipelineError | None = None

    def mark(self, name: str) -> None:
        if name not in self.marks:
            self.marks[name] = self.clock()

    def emit(self, event: OutputEvent) -> None:
        if isinstance(event, SentenceAudioChunk):
            self.mark("first_audio")
        elif isinstance(event, ResponseEnd):
            self.mark("response_end")
        elif isinstance(event, Transcript):
            self.mark("transcript")
        self._emit(event)

    def transcribe(self) -> bool:
        """Emit the transcript; on STT failure emit the error and finish the response."""
        utt = self.utterance
        if utt.text is not None:
            self.transcript = utt.text
        else:
            try:
                self.transcript = self.session.stt.transcribe(utt.audio, utt.format)
            except Exception as exc:
                logger.info("session %s: STT failed: %s", self.session.label, exc)
                self.fail("stt", exc)
                self.emit(ResponseEnd())
                return False
        self.emit(Transcript(self.transcript))
        return True

    def fail(self, stage: str, exc: Exception) -> None:
        self.error = PipelineError(stage, str(exc) or type(exc).__name__)
        self.emit(self.error)

    def speak(self, index: int, text: str) -> bool:
        """Emit one sentence's text and audio; False if synthesis failed."""
        cfg = self.session.config
        self.emit(SentenceText(index, text))
        self.sentences.append(text)
        stream = None
        try:
            stream = self.session.tts.synthesize(text, cfg.voice, cfg.audio_out)
            for chunk in stream:
                if chunk:
                    self.emit(SentenceAudioChunk(index, chunk))
        except PipelineAborted:
            raise
        except Exception as exc:
            logger.info("session %s: TTS failed on sentence %d: %s", self.session.label, index, exc)
            self.fail("tts", exc)
            return False
        finally:
            _close(stream)
        self.emit(SentenceAudioEnd(index))
        return True

    def commit(self, aborted: bool = False) -> TurnRecord:
        metrics, missing = measure_metrics(self.marks)
        return self.session.commit_turn(
            self.transcript,
            " ".join(self.sentences),
            metrics,
            error=f"{self.error.stage}: {self.error.reason}" if self.error else None,
            aborted=aborted,
            missing_metrics=missing,
        )


def _close(stream) -> None:
    close = getattr(stream, "close", None)
    if close is not None:
        close()


class _Stopped(Exception):
    pass


def run_streaming(session: Session, utterance: UtteranceBuffer, emit: Emit, clock=time.monotonic) -> TurnRecord | None:
    """Stream the reply sentence by sentence.

    Returns the committed record, or ``None`` when STT failed or the client
    vanished before a transcript existed.
    """
    run = _Run(session, utterance, emit, clock)
    try:
        if not run.transcribe():
            return None
    except PipelineAborted:
        return None

    sentences: queue.Queue = queue.Queue(maxsize=MAX_QUEUED_SENTENCES)
    stop = threading.Event()

    def put(item) -> None:
        while not stop.is_set():
            try:
                sentences.put(item, timeout=0.05)
                return
            except queue.Full:
                continue
        raise _Stopped

    def produce(messages) -> None:
        seg = SentenceSegmenter()
        deltas = None
        try:
            deltas = session.llm.generate(messages, session.config.llm.model)
            for delta in deltas:
                run.mark("first_delta")
                for sentence in seg.feed(delta):
                    put(("sentence", sentence))
                if stop.is_set():
                    return
            tail = seg.flush()
            if tail:
                put(("sentence", tail))
            put(("end", None))
        except _Stopped:
            pass
        except Exception as exc:
            try:
                put(("error", exc))
            except _Stopped:
                pass
        finally:
            _close(deltas)

    messages = session.render_prompt(run.transcript)
    run.mark("prompt_sent")
    producer = threading.Thread(target=produce, args=(messages,), name=f"llm-{session.label}", daemon=True)
    producer.start()
    try:
        index = 0
        while True:
            kind, value = sentences.get()
            if kind == "end":
                break
            if kind == "error":
                logger.info("session %s: LLM failed: %s", session.label, value)
                run.fail("llm", value)
                break
            if not run.speak(index, value):
                break
            index += 1
        run.emit(ResponseEnd())
    except PipelineAborted:
        stop.set()
        return run.commit(aborted=True)
    finally:
        stop.set()
    return run.commit()


def run_batch(session: Session, utterance: UtteranceBuffer, emit: Emit, clock=time.monotonic) -> TurnRecord | None:
    """Collect the whole reply, then synthesize it in one TTS call.

    An LLM failure delivers nothing, so the committed response text is empty.
    """
    run = _Run(session, utterance, emit, clock)
    try:
        if not run.transcribe():
            return None
        messages = session.render_prompt(run.transcript)
        run.mark("prompt_sent")
        parts = []
        deltas = None
        try:
            deltas = session.llm.generate(messages, session.config.llm.model)
            for delta in deltas:
                run.mark("first_delta")
                parts.append(delta)
            llm_error = None
        except Exception as exc:
            llm_error = exc
        finally:
            _close(deltas)
        if llm_error is not None:
            logger.info("session %s: LLM failed: %s", session.label, llm_error)
            run.fail("llm", llm_error)
        else:
            seg = SentenceSegmenter()
            found = seg.feed("".join(parts))
            tail = seg.flush()
            full = " ".join(found + ([tail] if tail else []))
            if full:
                run.speak(0, full)
        run.emit(ResponseEnd())
    except PipelineAborted:
        return run.commit(aborted=True) if "transcript" in run.marks else None
    return run.commit()


def run_turn(session: Session, utterance: UtteranceBuffer, emit: Emit, clock=time.monotonic) -> TurnRecord | None:
    runner = run_streaming if session.config.streaming_enabled else run_batch
    return runner(session, utterance, emit, clock)
