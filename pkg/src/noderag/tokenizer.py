"""Pluggable tokenization used for chunking and budget accounting.

Token counts throughout the package are defined by whichever tokenizer the
config selects; the default is a regex word/punctuation splitter that needs
no external vocabulary and is fully deterministic offline.
"""
from __future__ import annotations

import re
from typing import Protocol


class Tokenizer(Protocol):
    name: str

    def count(self, text: str) -> int:
        ...

    def spans(self, text: str) -> list[tuple[int, int]]:
        """Character (start, end) span of every token, in order."""
        ...


_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class SimpleTokenizer:
    """Splits on word characters and individual punctuation marks."""

    name = "simple-regex"

    def count(self, text: str) -> int:
        return sum(1 for _ in _TOKEN_RE.finditer(text))

    def spans(self, text: str) -> list[tuple[int, int]]:
        return [m.span() for m in _TOKEN_RE.finditer(text)]


def window_text(text: str, spans: list[tuple[int, int]], start: int, end: int) -> str:
    """Slice of the original text covering tokens [start, end)."""
    if start >= len(spans) or start >= end:
        return ""
    end = min(end, len(spans))
    return text[spans[start][0] : spans[end - 1][1]]


def get_tokenizer(name: str = "simple-regex") -> Tokenizer:
    if name == "simple-regex":
        return SimpleTokenizer()
    raise ValueError(f"unknown tokenizer: {name!r}")
