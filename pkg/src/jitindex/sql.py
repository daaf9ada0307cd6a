"""Parser and renderer for the SELECT subset the engine understands.

Grammar::

    SELECT * FROM t [INNER JOIN t2 ON a.c = b.c] [WHERE pred (AND pred)*] [;]
    pred := column op (literal | column)
    op   := = | < | <= | > | >=

Identifiers are case-insensitive and stored uppercase. Literals are integers
(optionally negative) or single-quoted strings with '' as the quote escape.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

from .errors import SqlSyntaxError, UnsupportedConstructError

COMPARISON_OPS = ("=", "<", "<=", ">", ">=")
RANGE_OPS = ("<", "<=", ">", ">=")

_KEYWORDS = {"SELECT", "FROM", "WHERE", "AND", "INNER", "JOIN", "ON"}
# Recognised SQL that lies outside the grammar: reported as unsupported
# rather than as a plain syntax error.
_UNSUPPORTED_WORDS = {
    "OR", "NOT", "ORDER", "GROUP", "BY", "HAVING", "LIMIT", "OFFSET", "UNION",
    "DISTINCT", "LEFT", "RIGHT", "FULL", "OUTER", "CROSS", "IN", "EXISTS",
    "BETWEEN", "LIKE", "IS", "NULL", "AS", "INSERT", "UPDATE", "DELETE",
    "CREATE", "DROP", "INTERSECT", "EXCEPT",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>'(?:[^']|'')*')
  | (?P<number>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<>|!=|=|<|>)
  | (?P<punct>[*.,;()])
    """,
    re.VERBOSE | re.ASCII,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos] == "'":
                raise SqlSyntaxError("unterminated string literal", pos)
            raise SqlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(text)))
    return tokens


@dataclass(frozen=True)
class ColumnRef:
    name: str
    table: str | None = None

    def __str__(self) -> str:
        if self.table:
            return f"{self.table.lower()}.{self.name.lower()}"
        return self.name.lower()


Literal = Union[int, str]


@dataclass(frozen=True)
class Predicate:
    lhs: ColumnRef
    op: str
    rhs: Union[ColumnRef, int, str]

    @property
    def sargable(self) -> bool:
        return not isinstance(self.rhs, ColumnRef)

    def columns(self) -> list[ColumnRef]:
        cols = [self.lhs]
        if isinstance(self.rhs, ColumnRef):
            cols.append(self.rhs)
        return cols


@dataclass(frozen=True)
class JoinSpec:
    right_table: str
    left_col: ColumnRef
    right_col: ColumnRef


@dataclass(frozen=True)
class QueryAst:
    base_table: str
    join: JoinSpec | None = None
    where: tuple[Predicate, ...] = field(default_factory=tuple)

    def predicate_columns(self) -> list[ColumnRef]:
        """Column references of the join condition and WHERE, in source order."""
        refs: list[ColumnRef] = []
        if self.join is not None:
            refs.extend([self.join.left_col, self.join.right_col])
        for p in self.where:
            refs.extend(p.columns())
        return refs

    @property
    def n_columns(self) -> int:
        """Distinct columns referenced by the join condition and the WHERE clause."""
        return len(set(self.predicate_columns()))

    @property
    def tables(self) -> list[str]:
        if self.join is None:
            return [self.base_table]
        return [self.base_table, self.join.right_table]


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def word(self, tok: Token) -> str | None:
        return tok.text.upper() if tok.kind == "ident" else None

    def unsupported_check(self, tok: Token) -> None:
        w = self.word(tok)
        if w in _UNSUPPORTED_WORDS:
            raise UnsupportedConstructError(f"unsupported construct {w}", tok.offset)
        if tok.kind == "op" and tok.text in ("<>", "!="):
            raise UnsupportedConstructError(f"unsupported operator {tok.text}", tok.offset)
        if tok.kind == "punct" and tok.text == "(":
            raise UnsupportedConstructError("subqueries and parentheses are not supported", tok.offset)

    def expect_keyword(self, kw: str) -> Token:
        tok = self.advance()
        if self.word(tok) != kw:
            self.unsupported_check(tok)
            raise SqlSyntaxError(f"expected {kw}, found {tok.text or 'end of input'!r}", tok.offset)
        return tok

    def accept_keyword(self, kw: str) -> bool:
        if self.word(self.peek()) == kw:
            self.advance()
            return True
        return False

    def identifier(self) -> str:
        tok = self.advance()
        w = self.word(tok)
        if w is None or w in _KEYWORDS:
            self.unsupported_check(tok)
            raise SqlSyntaxError(f"expected identifier, found {tok.text or 'end of input'!r}", tok.offset)
        if w in _UNSUPPORTED_WORDS:
            self.unsupported_check(tok)
        return w

    def column_ref(self) -> ColumnRef:
        first = self.identifier()
        if self.peek().kind == "punct" and self.peek().text == ".":
            self.advance()
            return ColumnRef(self.identifier(), first)
        return ColumnRef(first)

    def operand(self) -> Union[ColumnRef, int, str]:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return int(tok.text)
        if tok.kind == "string":
            self.advance()
            return tok.text[1:-1].replace("''", "'")
        return self.column_ref()

    def predicate(self) -> Predicate:
        lhs = self.column_ref()
        tok = self.advance()
        if tok.kind != "op":
            self.unsupported_check(tok)
            raise SqlSyntaxError(f"expected comparison operator, found {tok.text or 'end of input'!r}", tok.offset)
        if tok.text not in COMPARISON_OPS:
            raise UnsupportedConstructError(f"unsupported operator {tok.text}", tok.offset)
        return Predicate(lhs, tok.text, self.operand())

    def parse(self) -> QueryAst:
        self.expect_keyword("SELECT")
        tok = self.advance()
        if not (tok.kind == "punct" and tok.text == "*"):
            if tok.kind in ("ident", "number", "string"):
                self.unsupported_check(tok)
                raise UnsupportedConstructError("only SELECT * is supported", tok.offset)
            raise SqlSyntaxError(f"expected '*', found {tok.text or 'end of input'!r}", tok.offset)
        self.expect_keyword("FROM")
        base = self.identifier()
        join = None
        if self.accept_keyword("INNER"):
            self.expect_keyword("JOIN")
            right = self.identifier()
            on_tok = self.expect_keyword("ON")
            cond = self.predicate()
            if cond.op != "=" or not isinstance(cond.rhs, ColumnRef):
                raise UnsupportedConstructError("join condition must be column = column", on_tok.offset)
            join = JoinSpec(right, cond.lhs, cond.rhs)
        elif self.word(self.peek()) == "JOIN":
            raise UnsupportedConstructError("write INNER JOIN explicitly", self.peek().offset)
        where: list[Predicate] = []
        if self.accept_keyword("WHERE"):
            where.append(self.predicate())
            while self.accept_keyword("AND"):
                where.append(self.predicate())
        tok = self.peek()
        if tok.kind == "punct" and tok.text == ";":
            self.advance()
            tok = self.peek()
        if tok.kind != "eof":
            self.unsupported_check(tok)
            if tok.kind == "punct" and tok.text == ",":
                raise UnsupportedConstructError("multiple FROM items are not supported", tok.offset)
            raise SqlSyntaxError(f"unexpected {tok.text!r}", tok.offset)
        return QueryAst(base, join, tuple(where))


def parse(text: str | bytes) -> QueryAst:
    """Parse *text* into a :class:`QueryAst`.

    Raises :class:`SqlSyntaxError` or :class:`UnsupportedConstructError`, both
    carrying the offset of the offending token.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SqlSyntaxError("query is not valid UTF-8", exc.start) from None
    try:
        return _Parser(text).parse()
    except (SqlSyntaxError, UnsupportedConstructError) as exc:
        # Token offsets are character positions; report bytes.
        byte_offset = len(text[: exc.offset].encode("utf-8", "surrogatepass"))
        if byte_offset == exc.offset:
            raise
        message = str(exc).rsplit(" (at offset", 1)[0]
        raise type(exc)(message, byte_offset) from None


def _render_operand(v: Union[ColumnRef, int, str]) -> str:
    if isinstance(v, ColumnRef):
        return str(v)
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    return str(v)


def render_predicate(p: Predicate) -> str:
    return f"{p.lhs} {p.op} {_render_operand(p.rhs)}"


def render(q: QueryAst) -> str:
    parts = [f"SELECT * FROM {q.base_table.lower()}"]
    if q.join is not None:
        j = q.join
        parts.append(f"INNER JOIN {j.right_table.lower()} ON {j.left_col} = {j.right_col}")
    if q.where:
        parts.append("WHERE " + " AND ".join(render_predicate(p) for p in q.where))
    return " ".join(parts)
