"""Tokenizer for the Church subset."""

from __future__ import annotations

from typing import NamedTuple


class LexError(SyntaxError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class Token(NamedTuple):
    text: str
    line: int
    column: int

    @property
    def is_string(self) -> bool:
        return self.text.startswith('"')


_DELIMITERS = set("()'\";") | set(" \t\r\n\f\v")


def tokenize(text: str) -> list[Token]:
    """Split program text into tokens.

    Parentheses, square brackets and the quote mark are single-character
    tokens; string literals keep their quotes; `;` comments run to end of
    line and are dropped. Line and column numbers are 1-based.
    """
    tokens: list[Token] = []
    depth = 0
    i = 0
    line, col = 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line, col = line + 1, 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in "([":
            tokens.append(Token("(", line, col))
            depth += 1
            i += 1
            col += 1
            continue
        if ch in ")]":
            if depth == 0:
                raise LexError("stray closing delimiter", line, col)
            tokens.append(Token(")", line, col))
            depth -= 1
            i += 1
            col += 1
            continue
        if ch == "'":
            tokens.append(Token("'", line, col))
            i += 1
            col += 1
            continue
        if ch == '"':
            start_line, start_col = line, col
            j = i + 1
            buf = ['"']
            while True:
                if j >= n:
                    raise LexError("unterminated string", start_line, start_col)
                c = text[j]
                if c == "\\" and j + 1 < n:
                    buf.append(c + text[j + 1])
                    j += 2
                    continue
                buf.append(c)
                j += 1
                if c == '"':
                    break
            raw = text[i:j]
            tokens.append(Token("".join(buf), start_line, start_col))
            newlines = raw.count("\n")
            if newlines:
                line += newlines
                col = len(raw) - raw.rfind("\n")
            else:
                col += len(raw)
            i = j
            continue
        j = i
        while j < n and text[j] not in _DELIMITERS and text[j] not in "[]":
            j += 1
        tokens.append(Token(text[i:j], line, col))
        col += j - i
        i = j
    return tokens
