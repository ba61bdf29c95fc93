"""Speech gateway: per-connection STT -> LLM -> TTS with sentence-level streaming."""

from .audio import AudioFormat
from .config import ProviderSelector, SessionConfig, parse_session_config
from .pipeline import UtteranceBuffer, run_batch, run_streaming, run_turn
from .protocol import Frame, FrameDecoder, MessageType, encode_frame
from .providers import ProviderRegistry, default_registry
from .server import GatewayServer, ServerConfig
from .session import Session, TurnLogWriter, TurnRecord, create_session

__version__ = "0.1.0"

__all__ = [
    "AudioFormat",
    "Frame",
    "FrameDecoder",
    "GatewayServer",
    "MessageType",
    "ProviderRegistry",
    "ProviderSelector",
    "ServerConfig",
    "Session",
    "SessionConfig",
    "TurnLogWriter",
    "TurnRecord",
    "UtteranceBuffer",
    "create_session",
    "default_registry",
    "encode_frame",
    "parse_session_config",
    "run_batch",
    "run_streaming",
    "run_turn",
]
