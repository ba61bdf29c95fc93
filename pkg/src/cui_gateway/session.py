"""Per-connection session state: providers, history, turn counter and turn log."""

from __future__ import annotations

import io
import json
import logging
import threading
import uuid
from collections import deque
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .config import DEFAULT_MAX_TURNS, SessionConfig, redact
from .errors import ConfigError
from .providers.base import LlmMessage, Role

logger = logging.getLogger(__name__)

METRIC_FIELDS = ("stt_ms", "llm_first_delta_ms", "ttfa_ms", "total_ms")


class ConversationHistory:
    """Completed (user, assistant) pairs, oldest evicted past ``max_turns``."""

    def __init__(self, system_prompt: str = "", max_turns: int = DEFAULT_MAX_TURNS):
        if max_turns < 1:
            raise ValueError("max_turns must be >= 1")
        self.system_prompt = system_prompt
        self.max_turns = max_turns
        self.turns: deque[tuple[str, str]] = deque(maxlen=max_turns)

    def append(self, user_text: str, assistant_text: str) -> None:
        self.turns.append((user_text, assistant_text))

    def clear(self) -> None:
        self.turns.clear()

    def __len__(self) -> int:
        return len(self.turns)


@dataclass
class TurnRecord:
    timestamp: str
    session_id: str
    turn_index: int
    transcript: str
    response_text: str
    metrics: dict = field(default_factory=dict)
    session_label: str = ""
    error: str | None = None
    aborted: bool = False
    missing_metrics: list = field(default_factory=list)

    def __post_init__(self):
        for name, value in self.metrics.items():
            if name not in METRIC_FIELDS:
                raise ValueError(f"unknown metric {name!r}")
            if value < 0:
                raise ValueError(f"metric {name} is negative: {value}")
        ttfa, total = self.metrics.get("ttfa_ms"), self.metrics.get("total_ms")
        if ttfa is not None and total is not None and ttfa > total:
            raise ValueError(f"ttfa_ms {ttfa} exceeds total_ms {total}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> TurnRecord:
        return cls(**obj)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class TurnLogWriter:
    """Append-only JSON-lines sink shared by all sessions of a server.

    Writes are serialized and flushed per line. Registered secrets are
    replaced by their redacted form before anything hits the file. I/O
    failures are logged and swallowed.
    """

    def __init__(self, target: str | Path | io.TextIOBase):
        self._lock = threading.Lock()
        self._secrets: set[str] = set()
        if isinstance(target, (str, Path)):
            path = Path(target)
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "a", encoding="utf-8")
            self._owned = True
            self.path: Path | None = path
        else:
            self._fh = target
            self._owned = False
            self.path = None

    def add_secrets(self, secrets) -> None:
        with self._lock:
            self._secrets.update(s for s in secrets if s)

    def write(self, record: TurnRecord) -> None:
        line = record.to_json()
        with self._lock:
            for secret in self._secrets:
                line = line.replace(secret, redact(secret))
            try:
                self._fh.write(line + "\n")
                self._fh.flush()
            except (OSError, ValueError) as exc:
                logger.warning("turn log write failed for session %s: %s", record.session_id, exc)

    def close(self) -> None:
        with self._lock:
            if self._owned:
                self._fh.close()


def write_turn_log(sink: TurnLogWriter, record: TurnRecord) -> None:
    sink.write(record)


def read_turn_log(path: str | Path) -> list[TurnRecord]:
    with open(path, encoding="utf-8") as fh:
        return [TurnRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


class Session:
    def __init__(self, config: SessionConfig, stt, llm, tts, turn_log: TurnLogWriter | None = None):
        self.session_id = uuid.uuid4().hex
        self.config = config
        self.stt = stt
        self.llm = llm
        self.tts = tts
        self.history = ConversationHistory(config.system_prompt, config.max_history_turns)
        self.turn_index = 0
        self.turn_log = turn_log
        if turn_log is not None:
            turn_log.add_secrets(config.api_keys.values())

    @property
    def label(self) -> str:
        return self.config.session_label

    def render_prompt(self, user_text: str) -> list[LlmMessage]:
        if not user_text:
            raise ValueError("user_text must be non-empty")
        messages = []
        if self.history.system_prompt:
            messages.append(LlmMessage("system", self.history.system_prompt))
        if self.config.history_enabled:
            for user, assistant in self.history.turns:
                messages.append(LlmMessage("user", user))
                messages.append(LlmMessage("assistant", assistant))
        messages.append(LlmMessage("user", user_text))
        return messages

    def commit_turn(
        self,
        transcript: str,
        response_text: str,
        metrics: dict | None = None,
        *,
        error: str | None = None,
        aborted: bool = False,
        missing_metrics=(),
    ) -> TurnRecord:
        record = TurnRecord(
            timestamp=utc_now_iso(),
            session_id=self.session_id,
            turn_index=self.turn_index,
            transcript=transcript,
            response_text=response_text,
            metrics=dict(metrics or {}),
            session_label=self.label,
            error=error,
            aborted=aborted,
            missing_metrics=list(missing_metrics),
        )
        if self.config.history_enabled:
            self.history.append(transcript, response_text)
        self.turn_index += 1
        if self.turn_log is not None:
            self.turn_log.write(record)
        return record

    def reset_history(self) -> None:
        self.history.clear()


def create_session(config: SessionConfig, registry, turn_log: TurnLogWriter | None = None) -> Session:
    providers = {}
    for role in Role:
        try:
            providers[role] = registry.resolve(role, config.selector(role), config.api_keys, config.provider_params)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"cannot create {role.value} provider: {exc}") from None
    return Session(config, providers[Role.STT], providers[Role.LLM], providers[Role.TTS], turn_log)


def render_prompt(session: Session, user_text: str) -> list[LlmMessage]:
    return session.render_prompt(user_text)


def commit_turn(session: Session, transcript: str, response_text: str, metrics: dict | None = None, **kwargs) -> TurnRecord:
    return session.commit_turn(transcript, response_text, metrics, **kwargs)


def reset_history(session: Session) -> None:
    session.reset_history()
