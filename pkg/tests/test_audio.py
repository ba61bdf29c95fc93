import io
import struct
import wave

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cui_gateway.audio import ALLOWED_SAMPLE_RATES, AudioFormat, build_wav, parse_wav, wav_header, write_wav
from cui_gateway.errors import ConfigError, InputError


def stdlib_wav(pcm: bytes, rate: int = 16000, width: int = 2) -> bytes:
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(pcm)
    return buf.getvalue()


def test_header_matches_stdlib_writer():
    pcm = bytes(range(200)) * 16
    assert len(pcm) == 3200
    ours = build_wav(AudioFormat(), pcm)
    assert len(ours) == 3244
    assert ours == stdlib_wav(pcm)
    assert wav_header(AudioFormat(), 3200) == ours[:44]


def test_parse_canonical():
    pcm = bytes(3200)
    fmt, data = parse_wav(stdlib_wav(pcm))
    assert fmt == AudioFormat(16000, 1)
    assert data == pcm


def test_parse_skips_unknown_chunks():
    pcm = b"\x01\x02" * 10
    raw = stdlib_wav(pcm)
    extra = b"LIST" + struct.pack("<I", 4) + b"INFO"
    patched = raw[:12] + extra + raw[12:]
    patched = patched[:4] + struct.pack("<I", len(patched) - 8) + patched[8:]
    assert parse_wav(patched)[1] == pcm


def test_eight_bit_is_rejected():
    with pytest.raises(InputError, match="16"):
        parse_wav(stdlib_wav(bytes(100), width=1))


def test_truncated_data_chunk():
    raw = stdlib_wav(bytes(3200))
    with pytest.raises(InputError, match="truncated"):
        parse_wav(raw[:-100])


@pytest.mark.parametrize("blob", [b"", b"RIFX" + bytes(40), b"RIFF\x00\x00\x00\x00WAVE"])
def test_garbage_is_rejected(blob):
    with pytest.raises(InputError):
        parse_wav(blob)


def test_format_validation():
    with pytest.raises(ConfigError):
        AudioFormat(sample_rate=12345)
    with pytest.raises(ConfigError):
        AudioFormat(channels=2)
    with pytest.raises(ConfigError):
        AudioFormat(encoding="mulaw")
    assert AudioFormat(48000).bytes_per_second == 96000


@given(st.sampled_from(ALLOWED_SAMPLE_RATES), st.binary(max_size=4000).map(lambda b: b[: len(b) // 2 * 2]))
def test_round_trip(rate, pcm):
    fmt = AudioFormat(rate)
    assert parse_wav(build_wav(fmt, pcm)) == (fmt, pcm)


def test_write_wav(tmp_path):
    path = tmp_path / "x.wav"
    write_wav(path, AudioFormat(), b"\x00\x01" * 5)
    with wave.open(str(path)) as w:
        assert (w.getframerate(), w.getnframes()) == (16000, 5)
