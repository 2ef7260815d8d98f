"""The routing/rule script language: a small, side-effect-free boolean
expression grammar.

    expr  := or
    or    := and ("or" and)*
    and   := cmp ("and" cmp)*
    cmp   := term (("=" | "!=" | "<" | "<=" | ">" | ">=") term)?
    term  := literal | fieldpath | "not" term | "(" expr ")"
    fieldpath := "prop:"Name | "outcome/"path
    literals  := single-quoted strings, decimal numbers, true, false

Comparison is numeric when both sides parse as decimal, otherwise exact
string. A bare boolean term is its own result. Unknown field paths raise
EvaluationError — never silently false. Evaluation does not short-circuit,
so an unknown path is reported regardless of surrounding truth values.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Optional, Union

from ..errors import EvaluationError, ParseError

# -- tokens --------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<string>'[^']*')
      | (?P<prop>prop:[^\s=!<>()]+)
      | (?P<outcome>outcome/[^\s=!<>()]+)
      | (?P<number>-?[0-9]+(?:\.[0-9]+)?)
      | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<op><=|>=|!=|=|<|>)
      | (?P<lparen>\()
      | (?P<rparen>\))
    )""",
    re.VERBOSE,
)

_KEYWORDS = {"and", "or", "not", "true", "false"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int  # 1-based


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            rest = source[pos:].strip()
            if not rest:
                break
            raise ParseError(f"unexpected character {rest[0]!r}", position=len(tokens) + 1)
        pos = m.end()
        if not m.group().strip():
            continue
        kind = m.lastgroup or ""
        text = m.group(kind)
        if kind == "word":
            if text not in _KEYWORDS:
                raise ParseError(f"unknown word {text!r}", position=len(tokens) + 1)
            kind = text if text in ("and", "or", "not") else "bool"
        tokens.append(Token(kind, text, len(tokens) + 1))
    return tokens


# -- syntax tree -----------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    value: Union[bool, Decimal, str]
    lexeme: str


@dataclass(frozen=True)
class FieldPath:
    source: str  # "prop" or "outcome"
    path: str


@dataclass(frozen=True)
class Not:
    term: "Node"


@dataclass(frozen=True)
class Comparison:
    left: "Node"
    op: str
    right: "Node"


@dataclass(frozen=True)
class And:
    parts: tuple


@dataclass(frozen=True)
class Or:
    parts: tuple


Node = Union[Literal, FieldPath, Not, Comparison, And, Or]


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def _peek(self) -> Optional[Token]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def _fail(self, expected: str):
        pos = self.i + 1 if self.i < len(self.tokens) else len(self.tokens) + 1
        got = self.tokens[self.i].text if self.i < len(self.tokens) else "end of input"
        raise ParseError(f"expected {expected}, got {got!r}", position=pos)

    def parse(self) -> Node:
        node = self.expr()
        if self.i != len(self.tokens):
            self._fail("end of input")
        return node

    def expr(self) -> Node:
        return self.or_expr()

    def or_expr(self) -> Node:
        parts = [self.and_expr()]
        while (t := self._peek()) and t.kind == "or":
            self.i += 1
            parts.append(self.and_expr())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def and_expr(self) -> Node:
        parts = [self.cmp()]
        while (t := self._peek()) and t.kind == "and":
            self.i += 1
            parts.append(self.cmp())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def cmp(self) -> Node:
        left = self.term()
        t = self._peek()
        if t and t.kind == "op":
            self.i += 1
            right = self.term()
            return Comparison(left, t.text, right)
        return left

    def term(self) -> Node:
        t = self._peek()
        if t is None:
            self._fail("a term")
        if t.kind == "not":
            self.i += 1
            return Not(self.term())
        if t.kind == "lparen":
            self.i += 1
            inner = self.expr()
            closing = self._peek()
            if closing is None or closing.kind != "rparen":
                self._fail("')'")
            self.i += 1
            return inner  # parens fold away; serialization re-inserts them
        if t.kind == "string":
            self.i += 1
            return Literal(t.text[1:-1], t.text)
        if t.kind == "number":
            self.i += 1
            return Literal(Decimal(t.text), t.text)
        if t.kind == "bool":
            self.i += 1
            return Literal(t.text == "true", t.text)
        if t.kind == "prop":
            self.i += 1
            return FieldPath("prop", t.text[len("prop:") :])
        if t.kind == "outcome":
            self.i += 1
            return FieldPath("outcome", t.text[len("outcome/") :])
        self._fail("a term")


def parse_script(source: str) -> Node:
    return _Parser(tokenize(source)).parse()


# -- serialization ----------------------------------------------------------------

_LEVEL = {Or: 3, And: 2, Comparison: 1}


def _level(node: Node) -> int:
    return _LEVEL.get(type(node), 0)


def _ser(node: Node, max_level: int) -> str:
    if _level(node) > max_level:
        return "(" + serialize_script(node) + ")"
    if isinstance(node, Or):
        return " or ".join(_ser(p, 2) for p in node.parts)
    if isinstance(node, And):
        return " and ".join(_ser(p, 1) for p in node.parts)
    if isinstance(node, Comparison):
        return f"{_ser(node.left, 0)} {node.op} {_ser(node.right, 0)}"
    if isinstance(node, Not):
        return "not " + _ser(node.term, 0)
    if isinstance(node, FieldPath):
        return ("prop:" if node.source == "prop" else "outcome/") + node.path
    if isinstance(node, Literal):
        return node.lexeme
    raise TypeError(f"unknown node {node!r}")


def serialize_script(node: Node) -> str:
    return _ser(node, 3)


# -- evaluation --------------------------------------------------------------------


@dataclass
class ScriptContext:
    """The data a script may read: the current activity's outcome document
    (or none) and the item's properties."""

    properties: dict[str, str] = field(default_factory=dict)
    outcome: Optional[ET.Element] = None

    @classmethod
    def from_xml(cls, properties: dict[str, str], outcome_xml: Optional[str]) -> "ScriptContext":
        outcome = ET.fromstring(outcome_xml) if outcome_xml else None
        return cls(properties=properties, outcome=outcome)


def _as_decimal(value) -> Optional[Decimal]:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, bool):
        return None
    if isinstance(value, str):
        try:
            if re.fullmatch(r"-?[0-9]+(\.[0-9]+)?", value.strip()):
                return Decimal(value.strip())
        except InvalidOperation:
            return None
    return None


def _as_string(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Decimal):
        return format(value, "f")
    return value


def _as_bool(value, origin: str):
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        if value == "true":
            return True
        if value == "false":
            return False
    raise EvaluationError(f"{origin} is not a boolean: {value!r}")


def _resolve(path: FieldPath, ctx: ScriptContext):
    if path.source == "prop":
        if path.path not in ctx.properties:
            raise EvaluationError(f"unknown property {path.path!r}")
        return ctx.properties[path.path]
    if ctx.outcome is None:
        raise EvaluationError(f"no outcome in context for outcome/{path.path}")
    segments = path.path.split("/")
    node = ctx.outcome
    if node.tag != segments[0]:
        raise EvaluationError(
            f"outcome root is '{node.tag}', path starts at '{segments[0]}'"
        )
    for seg in segments[1:]:
        node = node.find(seg)
        if node is None:
            raise EvaluationError(f"outcome path not found: outcome/{path.path}")
    return (node.text or "").strip()


_ORDER_OPS = {"<", "<=", ">", ">="}


def _compare(left, right, op: str) -> bool:
    ld, rd = _as_decimal(left), _as_decimal(right)
    if ld is not None and rd is not None:
        a, b = ld, rd
    else:
        a, b = _as_string(left), _as_string(right)
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def _eval(node: Node, ctx: ScriptContext):
    if isinstance(node, Literal):
        return node.value
    if isinstance(node, FieldPath):
        return _resolve(node, ctx)
    if isinstance(node, Not):
        return not _as_bool(_eval(node.term, ctx), "operand of 'not'")
    if isinstance(node, Comparison):
        return _compare(_eval(node.left, ctx), _eval(node.right, ctx), node.op)
    if isinstance(node, And):
        values = [_as_bool(_eval(p, ctx), "conjunct") for p in node.parts]
        return all(values)
    if isinstance(node, Or):
        values = [_as_bool(_eval(p, ctx), "disjunct") for p in node.parts]
        return any(values)
    raise TypeError(f"unknown node {node!r}")


def evaluate_script(script: Union[str, Node], ctx: ScriptContext) -> bool:
    node = parse_script(script) if isinstance(script, str) else script
    return _as_bool(_eval(node, ctx), "script result")
