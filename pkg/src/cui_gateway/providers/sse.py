"""Incremental server-sent-events parser.

Only ``data`` fields matter for chat deltas; ``event``/``id``/``retry``
fields and ``:`` comment lines are accepted and ignored.
"""

from __future__ import annotations

DONE = "[DONE]"


class SseParser:
    def __init__(self):
        self._buffer = bytearray()
        self._data: list[str] = []
        self._skip_lf = False

    def feed(self, chunk: bytes) -> list[str]:
        """Consume bytes; return the data payloads of every event completed so far."""
        self._buffer += chunk
        events: list[str] = []
        buf = self._buffer
        pos = 0
        if self._skip_lf and buf[:1] == b"\n":
            pos = 1
        if buf:
            self._skip_lf = False
        while True:
            nl = buf.find(b"\n", pos)
            cr = buf.find(b"\r", pos)
            if nl == -1 and cr == -1:
                break
            if cr != -1 and (nl == -1 or cr < nl):
                if cr + 1 == len(buf):
                    # The line ends here; a LF opening the next chunk completes the CRLF.
                    end, nxt = cr, cr + 1
                    self._skip_lf = True
                else:
                    end, nxt = cr, cr + 2 if buf[cr + 1] == 0x0A else cr + 1
            else:
                end, nxt = nl, nl + 1
            line = bytes(buf[pos:end]).decode("utf-8")
            pos = nxt
            event = self._line(line)
            if event is not None:
                events.append(event)
        del buf[:pos]
        return events

    def _line(self, line: str) -> str | None:
        if line == "":
            if not self._data:
                return None
            data = "\n".join(self._data)
            self._data = []
            return data
        if line.startswith(":"):
            return None
        field, _, value = line.partition(":")
        if value.startswith(" "):
            value = value[1:]
        if field == "data":
            self._data.append(value)
        return None
