"""PCM format descriptor and a minimal RIFF/WAVE reader and writer."""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import ConfigError, InputError

ALLOWED_SAMPLE_RATES = (8000, 16000, 22050, 24000, 44100, 48000)
PCM_S16LE = "pcm_s16le"
WAV_HEADER_SIZE = 44

_WAVE_FORMAT_PCM = 1


@dataclass(frozen=True)
class AudioFormat:
    sample_rate: int = 16000
    channels: int = 1
    encoding: str = PCM_S16LE

    def __post_init__(self):
        if isinstance(self.sample_rate, bool) or self.sample_rate not in ALLOWED_SAMPLE_RATES:
            raise ConfigError(
                f"sample_rate {self.sample_rate!r} not one of {', '.join(map(str, ALLOWED_SAMPLE_RATES))}"
            )
        if isinstance(self.channels, bool) or self.channels != 1:
            raise ConfigError(f"channels must be 1, got {self.channels!r}")
        if self.encoding != PCM_S16LE:
            raise ConfigError(f"encoding must be {PCM_S16LE!r}, got {self.encoding!r}")

    @property
    def bytes_per_second(self) -> int:
        return self.sample_rate * self.channels * 2

    @classmethod
    def from_dict(cls, obj: dict | None) -> AudioFormat:
        if obj is None:
            return cls()
        if not isinstance(obj, dict):
            raise ConfigError("audio format must be a JSON object")
        return cls(
            sample_rate=obj.get("sample_rate", 16000),
            channels=obj.get("channels", 1),
            encoding=obj.get("encoding", PCM_S16LE),
        )

    def to_dict(self) -> dict:
        return {"sample_rate": self.sample_rate, "channels": self.channels, "encoding": self.encoding}


def wav_header(fmt: AudioFormat, data_size: int) -> bytes:
    """Canonical 44-byte header for 16-bit PCM."""
    block_align = fmt.channels * 2
    return struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + data_size,
        b"WAVE",
        b"fmt ",
        16,
        _WAVE_FORMAT_PCM,
        fmt.channels,
        fmt.sample_rate,
        fmt.sample_rate * block_align,
        block_align,
        16,
        b"data",
        data_size,
    )


def build_wav(fmt: AudioFormat, pcm: bytes) -> bytes:
    return wav_header(fmt, len(pcm)) + pcm


def write_wav(path, fmt: AudioFormat, pcm: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(build_wav(fmt, pcm))


def parse_wav(data: bytes) -> tuple[AudioFormat, bytes]:
    """Return ``(format, sample_bytes)`` for a 16-bit PCM mono WAV.

    Chunks other than ``fmt `` and ``data`` are skipped. Raises
    :class:`InputError` for anything that is not 16-bit PCM, for formats
    outside :data:`ALLOWED_SAMPLE_RATES`, and when the data chunk declares
    more bytes than are present.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise InputError("not a RIFF/WAVE file")
    pos = 12
    fmt_fields = None
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = pos + 8
        if chunk_id == b"fmt ":
            if size < 16 or body + size > len(data):
                raise InputError("malformed fmt chunk")
            fmt_fields = struct.unpack_from("<HHIIHH", data, body)
        elif chunk_id == b"data":
            if fmt_fields is None:
                raise InputError("data chunk before fmt chunk")
            if body + size > len(data):
                raise InputError(f"truncated: data chunk declares {size} bytes, {len(data) - body} present")
            return _check_format(fmt_fields), bytes(data[body : body + size])
        pos = body + size + (size & 1)
    if fmt_fields is None:
        raise InputError("missing fmt chunk")
    raise InputError("missing data chunk")


def _check_format(fields) -> AudioFormat:
    codec, channels, rate, _byte_rate, _block_align, bits = fields
    if codec != _WAVE_FORMAT_PCM:
        raise InputError(f"unsupported codec {codec} (only PCM is accepted)")
    if bits != 16:
        raise InputError(f"unsupported bit depth {bits} (only 16-bit is accepted)")
    try:
        return AudioFormat(sample_rate=rate, channels=channels)
    except ConfigError as exc:
        raise InputError(str(exc)) from None
