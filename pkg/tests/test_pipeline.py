import math
import threading
import time

import pytest

from cui_gateway.config import session_config_from_dict
from cui_gateway.errors import PAYLOAD_LIMIT, ProtocolError
from cui_gateway.pipeline import (
    PipelineAborted,
    PipelineError,
    ResponseEnd,
    SentenceAudioChunk,
    SentenceAudioEnd,
    SentenceText,
    Transcript,
    UtteranceBuffer,
    measure_metrics,
    run_batch,
    run_streaming,
    run_turn,
)
from cui_gateway.providers.base import LanguageModel
from cui_gateway.session import create_session
from conftest import mock_config


def make(registry, **extra):
    return create_session(session_config_from_dict(mock_config(**extra), registry), registry)


def audio_utterance(text="Hi"):
    buf = UtteranceBuffer()
    buf.append(text.encode())
    buf.close()
    return buf


def collect(runner, session, utterance):
    events = []
    record = runner(session, utterance, events.append)
    return events, record


def expected_audio_bytes(text: str, rate: int = 16000) -> int:
    return 2 * rate * max(100, 25 * len(text)) // 1000


def expected_stream_events(user_text: str) -> list:
    """Derived from the mock definitions: template reply, 4096-byte tone chunks."""
    sentences = [f"You said: {user_text}.", "This is sentence two.", "This is sentence three."]
    events = [Transcript(user_text)]
    for i, s in enumerate(sentences):
        events.append(SentenceText(i, s))
        events += [("chunk", i)] * math.ceil(expected_audio_bytes(s) / 4096)
        events.append(SentenceAudioEnd(i))
    return events + [ResponseEnd()]


def shape(events):
    return [("chunk", e.index) if isinstance(e, SentenceAudioChunk) else e for e in events]


def check_ordering_law(events):
    assert isinstance(events[0], Transcript)
    assert isinstance(events[-1], ResponseEnd)
    current, state = -1, "end"
    for e in events[1:-1]:
        if isinstance(e, SentenceText):
            assert state == "end" and e.index == current + 1
            current, state = e.index, "text"
        elif isinstance(e, SentenceAudioChunk):
            assert e.index == current and state in ("text", "audio")
            state = "audio"
        elif isinstance(e, SentenceAudioEnd):
            assert e.index == current and state in ("text", "audio")
            state = "end"
        else:
            assert isinstance(e, PipelineError)
            state = "error"


def test_streaming_trace(registry):
    events, record = collect(run_streaming, make(registry), audio_utterance("Hi"))
    assert shape(events) == expected_stream_events("Hi")
    check_ordering_law(events)
    for i, s in enumerate(["You said: Hi.", "This is sentence two.", "This is sentence three."]):
        pcm = b"".join(e.data for e in events if isinstance(e, SentenceAudioChunk) and e.index == i)
        assert len(pcm) == expected_audio_bytes(s)
    assert record.response_text == "You said: Hi. This is sentence two. This is sentence three."
    assert record.error is None and not record.aborted
    assert set(record.metrics) == {"stt_ms", "llm_first_delta_ms", "ttfa_ms", "total_ms"}
    assert record.metrics["ttfa_ms"] <= record.metrics["total_ms"]


def test_batch_trace(registry):
    events, record = collect(run_batch, make(registry, streaming=False), audio_utterance("Hi"))
    texts = [e for e in events if isinstance(e, SentenceText)]
    assert texts == [SentenceText(0, "You said: Hi. This is sentence two. This is sentence three.")]
    assert isinstance(events[0], Transcript) and events[-2:] == [SentenceAudioEnd(0), ResponseEnd()]
    check_ordering_law(events)


def test_modes_agree_on_text(registry):
    _, streamed = collect(run_turn, make(registry), audio_utterance("Same"))
    _, batched = collect(run_turn, make(registry, streaming=False), audio_utterance("Same"))
    assert streamed.transcript == batched.transcript == "Same"
    assert streamed.response_text == batched.response_text


def test_text_utterance_skips_stt(registry):
    events, record = collect(run_streaming, make(registry), UtteranceBuffer.from_text("typed"))
    assert events[0] == Transcript("typed")
    assert "stt_ms" in record.metrics


class SilentLLM(LanguageModel):
    def generate(self, messages, model=None):
        return iter(())


@pytest.mark.parametrize("runner", [run_streaming, run_batch])
def test_empty_llm_stream(registry, runner):
    session = make(registry)
    session.llm = SilentLLM()
    events, record = collect(runner, session, audio_utterance())
    assert events == [Transcript("Hi"), ResponseEnd()]
    assert record.response_text == ""
    assert "ttfa_ms" not in record.metrics and "ttfa_ms" in record.missing_metrics


def test_tts_failure_on_second_sentence(registry):
    events, record = collect(run_streaming, make(registry, provider_params={"tts_fail_on": 1}), audio_utterance())
    kinds = [type(e).__name__ for e in events if not isinstance(e, SentenceAudioChunk)]
    assert kinds == ["Transcript", "SentenceText", "SentenceAudioEnd", "SentenceText", "PipelineError", "ResponseEnd"]
    err = next(e for e in events if isinstance(e, PipelineError))
    assert err.stage == "tts"
    assert record.error.startswith("tts:")
    assert record.response_text == "You said: Hi. This is sentence two."


@pytest.mark.parametrize("runner", [run_streaming, run_batch])
def test_llm_failure_mid_stream(registry, runner):
    session = make(registry, provider_params={"llm_fail_after": 1})
    events, record = collect(runner, session, audio_utterance())
    assert isinstance(events[-2], PipelineError) and events[-2].stage == "llm"
    assert isinstance(events[-1], ResponseEnd)
    expected = "You said: Hi." if runner is run_streaming else ""
    assert record.response_text == expected
    check_ordering_law(events)


def test_stt_failure_commits_nothing(registry):
    session = make(registry)
    buf = UtteranceBuffer()
    buf.append(b"\xff\xfe")
    buf.close()
    events, record = collect(run_streaming, session, buf)
    assert record is None and session.turn_index == 0
    assert [type(e) for e in events] == [PipelineError, ResponseEnd]
    assert events[0].stage == "stt"


def test_abort_commits_partial_record(registry):
    session = make(registry)
    seen = []

    def emit(event):
        seen.append(event)
        if isinstance(event, SentenceAudioEnd):
            raise PipelineAborted

    record = run_streaming(session, audio_utterance(), emit)
    assert record.aborted and record.response_text == "You said: Hi."
    assert session.turn_index == 1


def test_history_flows_between_turns(registry):
    session = make(registry, system_prompt="sys")
    run_turn(session, UtteranceBuffer.from_text("one"), lambda e: None)
    assert session.history.turns[0][0] == "one"
    assert len(session.render_prompt("two")) == 4


def test_utterance_buffer_rules():
    buf = UtteranceBuffer(cap=4)
    buf.append(b"ab")
    with pytest.raises(ProtocolError) as info:
        buf.append(b"abc")
    assert info.value.code == PAYLOAD_LIMIT
    buf.close()
    with pytest.raises(ProtocolError):
        buf.append(b"a")


def test_unclosed_utterance_is_rejected(registry):
    with pytest.raises(ValueError):
        run_streaming(make(registry), UtteranceBuffer(), lambda e: None)


def test_measure_metrics():
    marks = {"closed": 1.0, "transcript": 1.01, "prompt_sent": 1.02, "first_delta": 1.1,
             "first_audio": 1.15, "response_end": 1.5}
    metrics, missing = measure_metrics(marks)
    assert metrics == pytest.approx({"stt_ms": 10, "llm_first_delta_ms": 80, "ttfa_ms": 150, "total_ms": 500})
    assert missing == []
    metrics, missing = measure_metrics({k: v for k, v in marks.items() if k != "first_audio"})
    assert "ttfa_ms" not in metrics and missing == ["ttfa_ms"]


@pytest.mark.slow
def test_streaming_ttfa_follows_delay_model(registry):
    params = {"llm_initial_ms": 100, "llm_inter_sentence_ms": 200, "tts_per_call_ms": 50}
    session = make(registry, provider_params=params)
    _, record = collect(run_streaming, session, audio_utterance())
    assert 150 <= record.metrics["ttfa_ms"] <= 150 + 60


@pytest.mark.slow
def test_tts_overlaps_llm_generation(registry):
    # 3 sentences, 100 ms apart, each taking 100 ms to synthesize: overlapped
    # total is about 100 + 2*100 + 100, serial would be 100 + 2*100 + 3*100.
    params = {"llm_inter_sentence_ms": 100, "tts_per_call_ms": 100, "llm_initial_ms": 0}
    t0 = time.monotonic()
    collect(run_streaming, make(registry, provider_params=params), audio_utterance())
    assert (time.monotonic() - t0) * 1000 < 480


def test_producer_thread_stops_after_abort(registry):
    session = make(registry, provider_params={"llm_inter_sentence_ms": 20})
    before = threading.active_count()

    def emit(event):
        if isinstance(event, SentenceText):
            raise PipelineAborted

    run_streaming(session, audio_utterance(), emit)
    deadline = time.monotonic() + 2
    while threading.active_count() > before and time.monotonic() < deadline:
        time.sleep(0.01)
    assert threading.active_count() <= before
