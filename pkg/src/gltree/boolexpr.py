"""Minimal fully-parenthesized boolean expression language.

Grammar (no precedence — mixed operators must be parenthesized)::

    expr    := operand (OP operand)*     # all OPs in one chain identical
    operand := IDENT | NOT operand | '(' expr ')'

Accepted operator spellings: ``and``/``&``/``&&``/``∧``, ``or``/``|`` /
``||``/``∨``, ``not``/``!``/``~``/``¬`` (keywords case-insensitive).
Same-operator chains like ``(A and B and C)`` are unambiguous and allowed.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

from .errors import ParseError


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "Node"


@dataclass(frozen=True)
class And:
    args: tuple["Node", ...]


@dataclass(frozen=True)
class Or:
    args: tuple["Node", ...]


Node = Var | Not | And | Or

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<lparen>\()|(?P<rparen>\))"
    r"|(?P<and>&&|&|∧)|(?P<or>\|\||\||∨)|(?P<not>!|~|¬)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*))"
)

_KEYWORDS = {"and": "and", "or": "or", "not": "not"}


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].strip()
            if not rest:
                break
            raise ParseError(f"unexpected character near {rest[:10]!r}")
        pos = m.end()
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "ident":
            lowered = value.lower()
            if lowered in _KEYWORDS:
                kind = _KEYWORDS[lowered]
        tokens.append((kind, value))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos][0] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def parse_expr(self) -> Node:
        first = self.parse_operand()
        op = self.peek()
        if op not in ("and", "or"):
            return first
        args = [first]
        while self.peek() in ("and", "or"):
            next_op, _ = self.take()
            if next_op != op:
                raise ParseError(
                    "mixed 'and'/'or' in one chain is ambiguous; add parentheses"
                )
            args.append(self.parse_operand())
        return And(tuple(args)) if op == "and" else Or(tuple(args))

    def parse_operand(self) -> Node:
        kind = self.peek()
        if kind is None:
            raise ParseError("unexpected end of expression")
        if kind == "not":
            self.take()
            return Not(self.parse_operand())
        if kind == "lparen":
            self.take()
            inner = self.parse_expr()
            if self.peek() != "rparen":
                raise ParseError("missing closing parenthesis")
            self.take()
            return inner
        if kind == "ident":
            _, name = self.take()
            return Var(name)
        raise ParseError(f"unexpected token {self.tokens[self.pos][1]!r}")


def parse(text: str) -> Node:
    """Parse an expression string into an AST; raises ParseError."""
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty expression")
    parser = _Parser(tokens)
    node = parser.parse_expr()
    if parser.pos != len(tokens):
        raise ParseError(f"trailing input starting at {tokens[parser.pos][1]!r}")
    return node


def variables(node: Node) -> list[str]:
    """Variable names in order of first appearance."""
    seen: list[str] = []

    def walk(n: Node) -> None:
        if isinstance(n, Var):
            if n.name not in seen:
                seen.append(n.name)
        elif isinstance(n, Not):
            walk(n.arg)
        else:
            for a in n.args:
                walk(a)

    walk(node)
    return seen


def evaluate(node: Node, assignment: dict[str, bool]) -> bool:
    if isinstance(node, Var):
        try:
            return bool(assignment[node.name])
        except KeyError:
            raise ParseError(f"no value supplied for variable {node.name!r}") from None
    if isinstance(node, Not):
        return not evaluate(node.arg, assignment)
    if isinstance(node, And):
        return all(evaluate(a, assignment) for a in node.args)
    return any(evaluate(a, assignment) for a in node.args)


def assignments(names: list[str]):
    """All 0/1 assignments in binary counting order (first name slowest)."""
    for bits in itertools.product((0, 1), repeat=len(names)):
        yield dict(zip(names, bits))


def truth_table(node: Node) -> list[tuple[tuple[int, ...], int]]:
    names = variables(node)
    table = []
    for assignment in assignments(names):
        row = tuple(assignment[n] for n in names)
        table.append((row, int(evaluate(node, assignment))))
    return table


def format_expression(node: Node) -> str:
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Not):
        return f"not {format_expression(node.arg)}"
    joiner = " and " if isinstance(node, And) else " or "
    return "(" + joiner.join(format_expression(a) for a in node.args) + ")"
