"""TCP gateway: one thread per connection, one session per connection.

Connection phases::

    AWAITING_CONFIG --SESSION_CONFIG--> IDLE
    IDLE --AUDIO_IN_CHUNK--> RECEIVING --AUDIO_IN_END--> RESPONDING
    IDLE --TEXT_IN--> RESPONDING
    RESPONDING --(AUDIO_OUT_END sent)--> IDLE
    any --(error / disconnect / shutdown)--> CLOSED

A protocol violation produces exactly one ERROR frame and then the socket is
closed; nothing is written after that frame. Provider failures during a turn
are reported with an ERROR frame (code PROVIDER_FAILURE) followed by
AUDIO_OUT_END, and the connection stays usable.
"""

from __future__ import annotations

import argparse
import enum
import ipaddress
import json
import logging
import os
import selectors
import signal
import socket
import sys
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone

from . import errors
from .config import parse_session_config
from .errors import ConfigError, FrameError, ProtocolError
from .pipeline import (
    DEFAULT_UTTERANCE_CAP,
    PipelineAborted,
    PipelineError,
    ResponseEnd,
    SentenceAudioChunk,
    SentenceAudioEnd,
    SentenceText,
    Transcript,
    UtteranceBuffer,
    run_turn,
)
from .protocol import DEFAULT_FRAME_LIMIT, Frame, FrameDecoder, MessageType, encode_frame
from .providers.registry import ProviderRegistry, default_registry, format_registry
from .session import TurnLogWriter, create_session

logger = logging.getLogger(__name__)

DEFAULT_BIND = "127.0.0.1:7061"
RECV_SIZE = 65536


def parse_bind(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not host:
        raise ValueError(f"bind address must be HOST:PORT, got {address!r}")
    host = host.strip("[]")
    try:
        port_num = int(port)
    except ValueError:
        raise ValueError(f"invalid port in {address!r}") from None
    if not 0 <= port_num <= 65535:
        raise ValueError(f"port out of range in {address!r}")
    return host, port_num


def is_loopback(host: str) -> bool:
    if host == "localhost":
        return True
    try:
        return ipaddress.ip_address(host).is_loopback
    except ValueError:
        return False


@dataclass
class ServerConfig:
    bind_address: str = DEFAULT_BIND
    max_connections: int = 64
    log_path: str | None = None
    frame_limit: int = DEFAULT_FRAME_LIMIT
    utterance_cap: int = DEFAULT_UTTERANCE_CAP
    shutdown_grace_ms: int = 3000

    def __post_init__(self):
        parse_bind(self.bind_address)
        for name in ("max_connections", "frame_limit", "utterance_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.shutdown_grace_ms < 0:
            raise ValueError("shutdown_grace_ms must be >= 0")


class Phase(enum.Enum):
    AWAITING_CONFIG = "AwaitingConfig"
    IDLE = "Idle"
    RECEIVING = "ReceivingUtterance"
    RESPONDING = "Responding"
    CLOSED = "Closed"


def error_frame(code: str, message: str) -> Frame:
    return Frame(MessageType.ERROR, json.dumps({"code": code, "message": message}).encode("utf-8"))


def emit_event_as_frames(event) -> list[Frame]:
    if isinstance(event, Transcript):
        return [Frame(MessageType.TRANSCRIPT, event.text.encode("utf-8"))]
    if isinstance(event, SentenceText):
        return [Frame(MessageType.RESPONSE_TEXT, event.text.encode("utf-8"))]
    if isinstance(event, SentenceAudioChunk):
        return [Frame(MessageType.AUDIO_OUT_CHUNK, event.data)]
    if isinstance(event, SentenceAudioEnd):
        return []
    if isinstance(event, ResponseEnd):
        return [Frame(MessageType.AUDIO_OUT_END)]
    if isinstance(event, PipelineError):
        return [error_frame(errors.PROVIDER_FAILURE, f"{event.stage}: {event.reason}")]
    raise TypeError(f"not an output event: {event!r}")


class Connection:
    def __init__(self, server: GatewayServer, sock: socket.socket, peer):
        self.server = server
        self.sock = sock
        self.peer = peer
        self.phase = Phase.AWAITING_CONFIG
        self.decoder = FrameDecoder(server.config.frame_limit)
        self.session = None
        self.utterance: UtteranceBuffer | None = None
        self.worker: threading.Thread | None = None
        self._state_lock = threading.Lock()
        self._send_lock = threading.Lock()
        self._closed = False
        self._gone = threading.Event()

    @property
    def closed(self) -> bool:
        return self._closed

    # transport ---------------------------------------------------------------

    def _send(self, frame: Frame) -> None:
        data = encode_frame(frame.msg_type, frame.payload)
        with self._send_lock:
            if self._closed:
                raise PipelineAborted("connection closed")
            try:
                self.sock.sendall(data)
            except OSError as exc:
                self._gone.set()
                raise PipelineAborted(str(exc)) from None

    def fail(self, code: str, message: str) -> None:
        """Send one ERROR frame and close; later writes are suppressed."""
        logger.info("connection %s: %s %s", self.peer, code, message)
        frame = error_frame(code, message)
        with self._send_lock:
            if self._closed:
                return
            try:
                self.sock.sendall(encode_frame(frame.msg_type, frame.payload))
            except OSError:
                pass
            self._close_locked()

    def close(self) -> None:
        with self._send_lock:
            self._close_locked()

    def _close_locked(self) -> None:
        if self._closed:
            return
        self._closed = True
        with self._state_lock:
            self.phase = Phase.CLOSED
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

    # reader loop -------------------------------------------------------------

    def run(self) -> None:
        try:
            while not self._closed:
                try:
                    data = self.sock.recv(RECV_SIZE)
                except OSError:
                    break
                if not data:
                    break
                try:
                    frames = self.decoder.feed(data)
                except FrameError as exc:
                    self.fail(exc.code, exc.message)
                    break
                for frame in frames:
                    self.handle_frame(frame)
                    if self._closed:
                        break
        except Exception:
            logger.exception("connection %s: unexpected failure", self.peer)
            self.fail(errors.INTERNAL, "internal server error")
        finally:
            self._gone.set()
            worker = self.worker
            if worker is not None:
                worker.join(timeout=self.server.config.shutdown_grace_ms / 1000.0)
            self.close()
            self.server._forget(self)

    def wait_idle(self, deadline: float) -> None:
        worker = self.worker
        if worker is not None:
            worker.join(timeout=max(0.0, deadline - time.monotonic()))

    # state machine -----------------------------------------------------------

    def handle_frame(self, frame: Frame) -> None:
        mtype = frame.msg_type
        if not mtype.client_to_server:
            self.fail(errors.PHASE_VIOLATION, f"{mtype.name} is a server-to-client message")
            return
        with self._state_lock:
            phase = self.phase

        if mtype is MessageType.SESSION_CONFIG:
            if phase is not Phase.AWAITING_CONFIG:
                self.fail(errors.CFG_DUPLICATE, "session already configured")
            else:
                self._configure(frame.payload)
            return
        if phase is Phase.AWAITING_CONFIG:
            self.fail(errors.PHASE_VIOLATION, f"expected SESSION_CONFIG, got {mtype.name}")
            return
        if phase is Phase.RESPONDING:
            if mtype is MessageType.AUDIO_IN_CHUNK:
                self.fail(errors.PHASE_VIOLATION, "barge-in unsupported")
            else:
                self.fail(errors.PHASE_VIOLATION, f"{mtype.name} not allowed while responding")
            return

        if mtype is MessageType.AUDIO_IN_CHUNK:
            if phase is Phase.IDLE:
                if not self._turn_boundary():
                    return
                self.utterance = UtteranceBuffer(self.session.config.audio_in, self.server.config.utterance_cap)
                self._set_phase(Phase.RECEIVING)
            try:
                self.utterance.append(frame.payload)
            except ProtocolError as exc:
                self.fail(exc.code, exc.message)
        elif mtype is MessageType.AUDIO_IN_END:
            if phase is not Phase.RECEIVING:
                self.fail(errors.PHASE_VIOLATION, "AUDIO_IN_END without a preceding AUDIO_IN_CHUNK")
                return
            self.utterance.close()
            self._respond(self.utterance)
        elif mtype is MessageType.TEXT_IN:
            if phase is not Phase.IDLE:
                self.fail(errors.PHASE_VIOLATION, "TEXT_IN during an audio utterance")
                return
            try:
                text = frame.payload.decode("utf-8")
            except UnicodeDecodeError:
                self.fail(errors.PHASE_VIOLATION, "TEXT_IN payload is not UTF-8")
                return
            if not text.strip():
                self.fail(errors.PHASE_VIOLATION, "TEXT_IN payload is empty")
                return
            if not self._turn_boundary():
                return
            self._respond(UtteranceBuffer.from_text(text, self.session.config.audio_in))
        elif mtype is MessageType.RESET_HISTORY:
            if phase is not Phase.IDLE:
                self.fail(errors.PHASE_VIOLATION, "RESET_HISTORY only allowed between turns")
                return
            if self._turn_boundary():
                self.session.reset_history()

    def _set_phase(self, phase: Phase) -> None:
        with self._state_lock:
            if self.phase is not Phase.CLOSED:
                self.phase = phase

    def _turn_boundary(self) -> bool:
        """Finish the previous turn's bookkeeping; refuse new work while stopping."""
        if self.worker is not None:
            self.worker.join()
            self.worker = None
        if self.server.stopping:
            self.fail(errors.INTERNAL, "server shutting down")
            return False
        return True

    def _configure(self, payload: bytes) -> None:
        try:
            config = parse_session_config(payload, self.server.registry)
            self.session = create_session(config, self.server.registry, self.server.turn_log)
        except ConfigError as exc:
            self.fail(errors.CFG_INVALID, exc.message)
            return
        logger.info(
            "connection %s: session %s (%s) configured: %s",
            self.peer, self.session.session_id, config.session_label, json.dumps(config.to_json()),
        )
        self._set_phase(Phase.IDLE)
        try:
            self._send(Frame(MessageType.CONFIG_ACK, json.dumps(
                {"status": "ok", "session_id": self.session.session_id}
            ).encode("utf-8")))
        except PipelineAborted:
            pass

    def _respond(self, utterance: UtteranceBuffer) -> None:
        self._set_phase(Phase.RESPONDING)
        self.worker = threading.Thread(
            target=self._run_pipeline, args=(utterance,), name=f"turn-{self.session.label}", daemon=True
        )
        self.worker.start()

    def _emit(self, event) -> None:
        if self._gone.is_set():
            raise PipelineAborted("client disconnected")
        frames = emit_event_as_frames(event)
        if isinstance(event, ResponseEnd):
            # Flip before the bytes leave so the client's next frame sees IDLE.
            self._set_phase(Phase.IDLE)
        for frame in frames:
            self._send(frame)

    def _run_pipeline(self, utterance: UtteranceBuffer) -> None:
        try:
            record = run_turn(self.session, utterance, self._emit)
        except Exception:
            logger.exception("session %s: pipeline crashed", self.session.session_id)
            self.fail(errors.INTERNAL, "internal pipeline error")
            return
        if record is not None and record.aborted:
            logger.info("session %s: turn %d aborted", record.session_id, record.turn_index)


class GatewayServer:
    def __init__(
        self,
        config: ServerConfig | None = None,
        registry: ProviderRegistry | None = None,
        turn_log: TurnLogWriter | None = None,
    ):
        self.config = config or ServerConfig()
        self.registry = registry or default_registry()
        self._owns_log = turn_log is None and self.config.log_path is not None
        self.turn_log = turn_log or (TurnLogWriter(self.config.log_path) if self.config.log_path else None)
        self._listener: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._connections: dict[Connection, threading.Thread] = {}
        self._lock = threading.Lock()
        self._stopping = threading.Event()
        self._stopped = threading.Event()
        self.address: tuple[str, int] | None = None

    @property
    def stopping(self) -> bool:
        return self._stopping.is_set()

    def start(self) -> tuple[str, int]:
        host, port = parse_bind(self.config.bind_address)
        family = socket.AF_INET6 if ":" in host else socket.AF_INET
        listener = socket.socket(family, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            listener.bind((host, port))
        except OSError:
            listener.close()
            raise
        listener.listen(128)
        self._listener = listener
        self.address = listener.getsockname()[:2]
        self._accept_thread = threading.Thread(target=self._accept_loop, name="gateway-accept", daemon=True)
        self._accept_thread.start()
        logger.info("listening on %s:%d", *self.address)
        return self.address

    def _accept_loop(self) -> None:
        sel = selectors.DefaultSelector()
        sel.register(self._listener, selectors.EVENT_READ)
        try:
            while not self._stopping.is_set():
                if not sel.select(timeout=0.1):
                    continue
                try:
                    sock, peer = self._listener.accept()
                except OSError:
                    continue
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._admit(sock, peer)
        finally:
            sel.close()

    def _admit(self, sock: socket.socket, peer) -> None:
        conn = Connection(self, sock, peer)
        with self._lock:
            full = len(self._connections) >= self.config.max_connections
            if not full:
                thread = threading.Thread(target=conn.run, name=f"conn-{peer[1]}", daemon=True)
                self._connections[conn] = thread
        if full:
            logger.warning("rejecting %s: server full", peer)
            conn.fail(errors.INTERNAL, "server full")
            return
        thread.start()

    def _forget(self, conn: Connection) -> None:
        with self._lock:
            self._connections.pop(conn, None)

    @property
    def connection_count(self) -> int:
        with self._lock:
            return len(self._connections)

    def shutdown(self) -> None:
        """Stop accepting, let in-flight turns finish within the grace period, close everything."""
        if self._stopping.is_set():
            self._stopped.wait()
            return
        self._stopping.set()
        if self._accept_thread is not None:
            self._accept_thread.join()
        if self._listener is not None:
            self._listener.close()
        deadline = time.monotonic() + self.config.shutdown_grace_ms / 1000.0
        with self._lock:
            conns = dict(self._connections)
        for conn in conns:
            conn.wait_idle(deadline)
        for conn in conns:
            conn.close()
        for thread in conns.values():
            thread.join(timeout=1.0)
        if self._owns_log and self.turn_log is not None:
            self.turn_log.close()
        self._stopped.set()
        logger.info("gateway stopped")

    def serve_forever(self, stop: threading.Event) -> None:
        if self._listener is None:
            self.start()
        while not stop.wait(0.2):
            pass
        self.shutdown()

    def __enter__(self) -> GatewayServer:
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def serve(config: ServerConfig, registry: ProviderRegistry | None = None, stop: threading.Event | None = None) -> None:
    GatewayServer(config, registry).serve_forever(stop or threading.Event())


def _default_log_path() -> str:
    env = os.environ.get("CUI_GATEWAY_LOG")
    if env:
        return env
    return datetime.now(timezone.utc).strftime("turns-%Y%m%dT%H%M%SZ.jsonl")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cui-gateway", description="Speech gateway: STT -> LLM -> TTS per connection.")
    p.add_argument("--bind", default=DEFAULT_BIND, help="HOST:PORT to listen on (default %(default)s)")
    p.add_argument("--log", help="turn log path (JSON lines); falls back to $CUI_GATEWAY_LOG")
    p.add_argument("--max-connections", type=int, default=64)
    p.add_argument("--allow-remote", action="store_true", help="permit binding to a non-loopback address")
    p.add_argument("--list-providers", action="store_true", help="print the provider registry and exit")
    p.add_argument("--frame-limit", type=int, default=DEFAULT_FRAME_LIMIT, help="max frame payload bytes")
    p.add_argument("--utterance-cap", type=int, default=DEFAULT_UTTERANCE_CAP, help="max bytes per utterance")
    p.add_argument("--shutdown-grace-ms", type=int, default=3000)
    p.add_argument("--verbose", "-v", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    registry = default_registry()
    if args.list_providers:
        print(format_registry(registry))
        return 0
    try:
        config = ServerConfig(
            bind_address=args.bind,
            max_connections=args.max_connections,
            log_path=args.log or _default_log_path(),
            frame_limit=args.frame_limit,
            utterance_cap=args.utterance_cap,
            shutdown_grace_ms=args.shutdown_grace_ms,
        )
    except ValueError as exc:
        parser.error(str(exc))
    host, _ = parse_bind(config.bind_address)
    if not is_loopback(host):
        if not args.allow_remote:
            parser.error(f"refusing to bind non-loopback address {host}; pass --allow-remote to override")
        logger.warning(
            "binding to %s: session configs (including API keys) travel in cleartext; "
            "put this behind a trusted network or TLS proxy", host,
        )

    server = GatewayServer(config, registry)
    try:
        host, port = server.start()
    except OSError as exc:
        print(f"cui-gateway: cannot bind {config.bind_address}: {exc}", file=sys.stderr)
        return 1
    print(f"listening on {host}:{port} (turn log: {config.log_path})", flush=True)

    stop = threading.Event()

    def on_signal(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, on_signal)
    signal.signal(signal.SIGTERM, on_signal)
    server.serve_forever(stop)
    return 0


if __name__ == "__main__":
    sys.exit(main())
