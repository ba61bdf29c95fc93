"""Exception hierarchy shared across the gateway.

Every exception that can reach a client carries a ``code`` drawn from the
fixed error vocabulary sent inside ERROR frames.
"""

from __future__ import annotations

CFG_INVALID = "CFG_INVALID"
CFG_DUPLICATE = "CFG_DUPLICATE"
PHASE_VIOLATION = "PHASE_VIOLATION"
PAYLOAD_LIMIT = "PAYLOAD_LIMIT"
PROVIDER_FAILURE = "PROVIDER_FAILURE"
INTERNAL = "INTERNAL"

ERROR_CODES = (
    CFG_INVALID,
    CFG_DUPLICATE,
    PHASE_VIOLATION,
    PAYLOAD_LIMIT,
    PROVIDER_FAILURE,
    INTERNAL,
)


class GatewayError(Exception):
    code = INTERNAL

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        self.message = message
        if code is not None:
            self.code = code


class ProtocolError(GatewayError):
    """Malformed or out-of-order traffic on the wire."""

    code = PHASE_VIOLATION


class FrameError(ProtocolError):
    """Encoding or decoding of a single frame failed."""


class ConfigError(GatewayError):
    """A session configuration could not be validated or resolved."""

    code = CFG_INVALID


class ProviderError(GatewayError):
    """An STT, LLM or TTS provider failed.

    ``kind`` is one of ``"http_status"``, ``"timeout"``, ``"transport"``,
    ``"protocol"`` or ``"provider"``; ``status`` carries the HTTP status when
    the failure came from a non-2xx response.
    """

    code = PROVIDER_FAILURE

    def __init__(self, message: str, *, kind: str = "provider", status: int | None = None):
        super().__init__(message)
        self.kind = kind
        self.status = status


class TranscriptionError(ProviderError):
    pass


class SynthesisError(ProviderError):
    pass


class InputError(GatewayError):
    """Bad local input to the reference client (e.g. an unsupported WAV)."""
