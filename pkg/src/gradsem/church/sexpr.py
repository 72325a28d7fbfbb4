"""S-expression syntax tree, parser and printer.

Atoms map onto Python values: symbols are :class:`Symbol` (an interned
``str`` subclass), numbers are ``float``, booleans are ``bool`` and string
literals are :class:`String`. A quoted datum is a :class:`Quote` and a
parenthesised form is a plain ``list``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .lexer import Token, tokenize


class ParseError(SyntaxError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class Symbol(str):
    __slots__ = ()

    def __repr__(self) -> str:
        return f"Symbol({str(self)!r})"


class String(str):
    __slots__ = ()

    def __repr__(self) -> str:
        return f"String({str(self)!r})"


@dataclass(frozen=True)
class Quote:
    inner: "SExpr"


SExpr = Union[Symbol, float, bool, String, Quote, list]

_symbol_table: dict[str, Symbol] = {}


def sym(name: str) -> Symbol:
    """Return the interned symbol for `name`."""
    s = _symbol_table.get(name)
    if s is None:
        s = _symbol_table[name] = Symbol(name)
    return s


_BOOLEANS = {"#t": True, "#true": True, "true": True,
             "#f": False, "#false": False, "false": False}


_ESCAPES_IN = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}
_ESCAPES_OUT = {v: "\\" + k for k, v in _ESCAPES_IN.items()}


def _unescape(body: str) -> str:
    out = []
    chars = iter(body)
    for c in chars:
        if c == "\\":
            nxt = next(chars, "")
            out.append(_ESCAPES_IN.get(nxt, nxt))
        else:
            out.append(c)
    return "".join(out)


def _atom(tok: Token) -> SExpr:
    text = tok.text
    if tok.is_string:
        return String(_unescape(text[1:-1]))
    if text in _BOOLEANS:
        return _BOOLEANS[text]
    try:
        value = float(text)
    except ValueError:
        return sym(text)
    # "nan"/"inf" spell symbols, not numbers
    if not math.isfinite(value) or text.lower().lstrip("+-").startswith(("nan", "inf")):
        return sym(text)
    return value


def parse(tokens: list[Token]) -> list[SExpr]:
    """Build one SExpr per top-level form."""
    forms: list[SExpr] = []
    pos = 0
    n = len(tokens)

    def read(pos: int) -> tuple[SExpr, int]:
        tok = tokens[pos]
        if tok.text == "(":
            items: list[SExpr] = []
            pos += 1
            while True:
                if pos >= n:
                    raise ParseError("unbalanced parentheses: '(' never closed",
                                     tok.line, tok.column)
                if tokens[pos].text == ")":
                    return items, pos + 1
                item, pos = read(pos)
                items.append(item)
        if tok.text == ")":
            raise ParseError("unexpected ')'", tok.line, tok.column)
        if tok.text == "'":
            if pos + 1 >= n or tokens[pos + 1].text == ")":
                raise ParseError("quote with nothing to quote", tok.line, tok.column)
            inner, pos = read(pos + 1)
            return Quote(inner), pos
        return _atom(tok), pos + 1

    while pos < n:
        form, pos = read(pos)
        forms.append(form)
    return forms


def parse_text(text: str) -> list[SExpr]:
    return parse(tokenize(text))


def parse_one(text: str) -> SExpr:
    forms = parse_text(text)
    if len(forms) != 1:
        raise ParseError(f"expected exactly one form, found {len(forms)}")
    return forms[0]


def format_number(x: float) -> str:
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def to_source(expr: SExpr) -> str:
    """Print an SExpr so that ``parse_one(to_source(e)) == e``."""
    if isinstance(expr, bool):
        return "#t" if expr else "#f"
    if isinstance(expr, float):
        return format_number(expr)
    if isinstance(expr, String):
        return '"' + "".join(_ESCAPES_OUT.get(c, c) for c in expr) + '"'
    if isinstance(expr, Symbol):
        return str(expr)
    if isinstance(expr, Quote):
        return "'" + to_source(expr.inner)
    if isinstance(expr, list):
        return "(" + " ".join(to_source(e) for e in expr) + ")"
    raise TypeError(f"not an SExpr: {expr!r}")


def sexpr_equal(a: SExpr, b: SExpr) -> bool:
    """Structural equality that does not conflate booleans with numbers."""
    if type(a) is not type(b):
        return False
    if isinstance(a, list):
        return len(a) == len(b) and all(sexpr_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, Quote):
        return sexpr_equal(a.inner, b.inner)
    return a == b


def depth(expr: SExpr) -> int:
    if isinstance(expr, list):
        return 1 + max((depth(e) for e in expr), default=0)
    if isinstance(expr, Quote):
        return depth(expr.inner)
    return 0
