"""Incremental sentence segmentation of an LLM delta stream.

A sentence ends at a terminator (``.``, ``!``, ``?``, ``…``) only once a
whitespace character follows it in the buffered text, so ``"Hello."`` at the
end of the buffer is held until more input or :meth:`flush`. Abbreviations
such as ``"Dr. "`` split too; this rule is intentionally naive.
"""

from __future__ import annotations

TERMINATORS = frozenset(".!?…")


class SentenceSegmenter:
    def __init__(self):
        self.pending = ""

    def feed(self, delta: str) -> list[str]:
        # Earlier text holds no boundary, so only pairs touching the delta can fire.
        scan_from = max(1, len(self.pending))
        text = self.pending + delta
        sentences = []
        start = 0
        for i in range(scan_from, len(text)):
            if text[i].isspace() and text[i - 1] in TERMINATORS:
                sentences.append(text[start:i].lstrip())
                start = i
        self.pending = text[start:]
        return sentences

    def flush(self) -> str | None:
        rest, self.pending = self.pending.strip(), ""
        return rest or None


def segmenter_feed(state: SentenceSegmenter, delta: str) -> list[str]:
    return state.feed(delta)


def segmenter_flush(state: SentenceSegmenter) -> str | None:
    return state.flush()
