"""Command-line client for the gateway.

    cui-client --server 127.0.0.1:7061 --raw "Hi" --out reply
    cui-client --config npc.json --wav question.wav --metrics
    cui-client --interactive

Each reply sentence's audio is written to ``<out>-s<i>.wav``. Exit codes:
0 success, 2 bad usage or input, 3 the server sent an ERROR frame,
4 the server could not be reached or dropped the connection.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .audio import AudioFormat, parse_wav, write_wav
from .errors import ConfigError, InputError
from .protocol import Frame, FrameDecoder, MessageType, encode_frame

AUDIO_CHUNK_BYTES = 3200
DEFAULT_SERVER = "127.0.0.1:7061"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SERVER_ERROR = 3
EXIT_UNREACHABLE = 4

DEFAULT_CONFIG = {"stt": {"provider": "mock"}, "llm": {"provider": "mock"}, "tts": {"provider": "mock"}}


class ServerError(Exception):
    def __init__(self, code: str, message: str, report: TurnReport | None = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.report = report


@dataclass
class TurnReport:
    transcript: str = ""
    sentences: list[str] = field(default_factory=list)
    audio: list[bytearray] = field(default_factory=list)
    ttfa_ms: float | None = None
    total_ms: float | None = None
    errors: list[dict] = field(default_factory=list)
    wav_paths: list[Path] = field(default_factory=list)

    @property
    def response_text(self) -> str:
        return " ".join(self.sentences)


class GatewayClient:
    def __init__(self, host: str, port: int, timeout: float = 60.0):
        self.host = host
        self.port = port
        self.timeout = timeout
        self.sock: socket.socket | None = None
        self.session_id: str | None = None
        self._decoder = FrameDecoder()
        self._frames: deque[Frame] = deque()

    def connect(self) -> None:
        self.sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def close(self) -> None:
        if self.sock is not None:
            self.sock.close()
            self.sock = None

    def __enter__(self) -> GatewayClient:
        if self.sock is None:
            self.connect()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def send(self, msg_type: MessageType, payload: bytes = b"") -> None:
        self.sock.sendall(encode_frame(msg_type, payload))

    def recv_frame(self) -> Frame:
        while not self._frames:
            data = self.sock.recv(65536)
            if not data:
                raise ConnectionError("server closed the connection")
            self._frames.extend(self._decoder.feed(data))
        return self._frames.popleft()

    def configure(self, config: dict) -> str:
        self.send(MessageType.SESSION_CONFIG, json.dumps(config).encode("utf-8"))
        frame = self.recv_frame()
        if frame.msg_type is MessageType.ERROR:
            err = frame.json()
            raise ServerError(err.get("code", "?"), err.get("message", ""))
        if frame.msg_type is not MessageType.CONFIG_ACK:
            raise ConnectionError(f"expected CONFIG_ACK, got {frame.msg_type.name}")
        self.session_id = frame.json()["session_id"]
        return self.session_id

    def send_audio(self, audio: bytes, chunk_size: int = AUDIO_CHUNK_BYTES) -> float:
        """Stream an utterance; returns the monotonic time AUDIO_IN_END was sent."""
        for start in range(0, len(audio), chunk_size):
            self.send(MessageType.AUDIO_IN_CHUNK, audio[start : start + chunk_size])
        sent = time.monotonic()
        self.send(MessageType.AUDIO_IN_END)
        return sent

    def send_text(self, text: str) -> float:
        sent = time.monotonic()
        self.send(MessageType.TEXT_IN, text.encode("utf-8"))
        return sent

    def reset_history(self) -> None:
        self.send(MessageType.RESET_HISTORY)

    def read_response(self, started: float) -> TurnReport:
        """Collect frames up to AUDIO_OUT_END.

        Provider failures (ERROR with PROVIDER_FAILURE) are followed by
        AUDIO_OUT_END, so they are collected and raised once the turn ends.
        Any other ERROR ends the connection and is raised immediately.
        """
        report = TurnReport()
        while True:
            frame = self.recv_frame()
            now = time.monotonic()
            t = frame.msg_type
            if t is MessageType.TRANSCRIPT:
                report.transcript = frame.text()
            elif t is MessageType.RESPONSE_TEXT:
                report.sentences.append(frame.text())
                report.audio.append(bytearray())
            elif t is MessageType.AUDIO_OUT_CHUNK:
                if report.ttfa_ms is None:
                    report.ttfa_ms = (now - started) * 1000.0
                if not report.audio:
                    report.audio.append(bytearray())
                report.audio[-1] += frame.payload
            elif t is MessageType.AUDIO_OUT_END:
                report.total_ms = (now - started) * 1000.0
                break
            elif t is MessageType.ERROR:
                err = frame.json()
                if err.get("code") != "PROVIDER_FAILURE":
                    raise ServerError(err.get("code", "?"), err.get("message", ""), report)
                report.errors.append(err)
            else:
                raise ConnectionError(f"unexpected {t.name} frame")
        if report.errors:
            first = report.errors[0]
            raise ServerError(first["code"], first.get("message", ""), report)
        return report

    def text_turn(self, text: str) -> TurnReport:
        return self.read_response(self.send_text(text))

    def audio_turn(self, audio: bytes) -> TurnReport:
        return self.read_response(self.send_audio(audio))


def save_sentence_wavs(report: TurnReport, prefix: str, fmt: AudioFormat) -> list[Path]:
    paths = []
    for i, pcm in enumerate(report.audio):
        path = Path(f"{prefix}-s{i}.wav")
        path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(path, fmt, bytes(pcm))
        paths.append(path)
    report.wav_paths = paths
    return paths


def _print_report(report: TurnReport, metrics: bool, out=None) -> None:
    out = out or sys.stdout
    print(f"transcript: {report.transcript}", file=out)
    for i, sentence in enumerate(report.sentences):
        size = len(report.audio[i]) if i < len(report.audio) else 0
        print(f"[{i}] {sentence} ({size} audio bytes)", file=out)
    for path in report.wav_paths:
        print(f"wrote {path}", file=out)
    ttfa = "n/a" if report.ttfa_ms is None else f"{report.ttfa_ms:.1f} ms"
    total = "n/a" if report.total_ms is None else f"{report.total_ms:.1f} ms"
    print(f"ttfa: {ttfa}  total: {total}", file=out)
    if metrics:
        print(json.dumps({"ttfa_ms": report.ttfa_ms, "total_ms": report.total_ms}), file=out)


def load_config(args) -> dict:
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(config, dict):
            raise InputError("config file must hold a JSON object")
    else:
        config = json.loads(json.dumps(DEFAULT_CONFIG))
    if args.system_prompt is not None:
        config["system_prompt"] = args.system_prompt
    if args.voice is not None:
        config["voice"] = args.voice
    if args.no_history:
        config["history"] = False
    if args.batch:
        config["streaming"] = False
    return config


def _format(config: dict, key: str) -> AudioFormat:
    try:
        return AudioFormat.from_dict(config.get(key))
    except ConfigError as exc:
        raise InputError(f"{key}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cui-client", description="Talk to a speech gateway.")
    p.add_argument("--server", default=DEFAULT_SERVER, help="HOST:PORT (default %(default)s)")
    p.add_argument("--config", help="JSON session config file (default: all-mock providers)")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--wav", help="16-bit PCM mono WAV file to send as the utterance")
    mode.add_argument("--raw", help="send this text's UTF-8 bytes as pseudo-audio")
    mode.add_argument("--text", help="send this text directly (no speech-to-text)")
    mode.add_argument("--interactive", action="store_true", help="read text turns from stdin")
    p.add_argument("--out", default="reply", help="prefix for per-sentence WAV files (default %(default)s)")
    p.add_argument("--no-save", action="store_true", help="discard reply audio")
    p.add_argument("--metrics", action="store_true", help="also print metrics as a JSON line")
    p.add_argument("--system-prompt", help="override the config's system prompt")
    p.add_argument("--voice", help="override the config's voice")
    p.add_argument("--no-history", action="store_true", help="disable conversation history")
    p.add_argument("--batch", action="store_true", help="disable sentence streaming")
    p.add_argument("--timeout", type=float, default=60.0, help="socket timeout in seconds")
    return p


def _turn(client: GatewayClient, args, config: dict, audio: bytes | None, text: str | None, prefix: str) -> TurnReport:
    report = client.audio_turn(audio) if audio is not None else client.text_turn(text)
    if not args.no_save:
        save_sentence_wavs(report, prefix, _format(config, "audio_out"))
    return report


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        host, _, port = args.server.rpartition(":")
        server = (host.strip("[]"), int(port))
        config = load_config(args)
        audio = None
        if args.wav:
            fmt, audio = parse_wav(Path(args.wav).read_bytes())
            expected = _format(config, "audio_in")
            if fmt != expected:
                raise InputError(f"WAV is {fmt.sample_rate} Hz but the session expects {expected.sample_rate} Hz")
        elif args.raw is not None:
            audio = args.raw.encode("utf-8")
    except (InputError, OSError, ValueError) as exc:
        print(f"cui-client: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        with GatewayClient(*server, timeout=args.timeout) as client:
            client.configure(config)
            if args.interactive:
                return _interactive(client, args, config)
            report = _turn(client, args, config, audio, args.text, args.out)
            _print_report(report, args.metrics)
    except ServerError as exc:
        if exc.report is not None:
            _print_report(exc.report, args.metrics)
        print(f"server error {exc.code}: {exc.message}", file=sys.stderr)
        return EXIT_SERVER_ERROR
    except OSError as exc:
        print(f"cui-client: cannot talk to {args.server}: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    return EXIT_OK


def _interactive(client: GatewayClient, args, config: dict) -> int:
    """Typed turns until EOF or an empty line; ``/reset`` clears history."""
    print(f"session {client.session_id}; empty line to quit, /reset to clear history", file=sys.stderr)
    turn = 0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            break
        if line == "/reset":
            client.reset_history()
            continue
        try:
            report = _turn(client, args, config, None, line, f"{args.out}-t{turn}")
        except ServerError as exc:
            if exc.code != "PROVIDER_FAILURE":
                raise
            print(f"provider error: {exc.message}", file=sys.stderr)
            continue
        _print_report(report, args.metrics)
        turn += 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
