"""Token tapes: the chain-of-thought sequences the compiled programs read and write.

A tape is a flat sequence of tokens. Each token is either a non-negative
integer word or the separator ``ARROW`` (written ``=>`` in text files).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Union

from .errors import DecodeError


class _Arrow:
    __slots__ = ()

    def __repr__(self) -> str:
        return "ARROW"

    def __reduce__(self):
        return "ARROW"


ARROW = _Arrow()
ARROW_TEXT = "=>"

Token = Union[int, _Arrow]


def is_arrow(token: Token) -> bool:
    return token is ARROW


@dataclass(frozen=True)
class Tape:
    tokens: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        for pos, tok in enumerate(self.tokens, start=1):
            if tok is ARROW:
                continue
            if isinstance(tok, bool) or not isinstance(tok, int) or tok < 0:
                raise DecodeError(f"token {tok!r} is neither a non-negative integer nor ARROW", pos)

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    def __getitem__(self, item):
        return self.tokens[item]

    def extend(self, tokens: Iterable[Token]) -> "Tape":
        return Tape(self.tokens + tuple(tokens))


def tape_to_text(tape: Tape) -> str:
    return "".join((ARROW_TEXT if t is ARROW else str(t)) + "\n" for t in tape)


def tape_from_text(text: str) -> Tape:
    tokens = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == ARROW_TEXT:
            tokens.append(ARROW)
            continue
        try:
            value = int(line, 10)
        except ValueError:
            raise DecodeError(f"line {lineno}: expected a decimal integer or '{ARROW_TEXT}', got {line!r}", lineno) from None
        if value < 0:
            raise DecodeError(f"line {lineno}: negative token {value}", lineno)
        tokens.append(value)
    return Tape(tokens)


def read_tape(path) -> Tape:
    return tape_from_text(Path(path).read_text())
