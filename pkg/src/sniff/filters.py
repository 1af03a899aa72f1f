"""Display/capture filter expressions over decoded packet fields.

Grammar (lowest to highest precedence, keywords case-insensitive)::

    expr       := or
    or         := and ("or" and)*
    and        := unary ("and" unary)*
    unary      := "not" unary | "(" expr ")" | comparison
    comparison := field ("==" | "!=") value

Fields: ip.src, ip.dst, ip.addr, mac.src, mac.dst, mac.addr, proto,
port, port.src, port.dst. Empty text compiles to a match-all filter.

``!=`` follows field-existence semantics: it is true only when the field's
layer is present and some field instance differs, so on a packet with no
IPv4 layer both ``ip.src == X`` and ``ip.src != X`` are false.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass

from .decode import PacketRecord

FIELDS = (
    "ip.src",
    "ip.dst",
    "ip.addr",
    "mac.src",
    "mac.dst",
    "mac.addr",
    "proto",
    "port",
    "port.src",
    "port.dst",
)

PROTO_NAMES = ("ethernet", "arp", "ipv4", "icmp", "udp", "tcp", "http")

MODE_IP = "ip-based"
MODE_MAC = "mac-based"
MODE_ARP = "arp-based"
MODE_MIXED = "mixed"
MODE_NONE = "none"


class FilterError(ValueError):
    """Problem in a filter expression; carries the byte offset of the bad token."""

    def __init__(self, message: str, offset: int, expected: tuple = ()):
        super().__init__(message)
        self.offset = offset
        self.expected = expected

    def __str__(self) -> str:
        base = super().__str__()
        if self.expected:
            return f"{base} at offset {self.offset} (expected {', '.join(self.expected)})"
        return f"{base} at offset {self.offset}"


class ParseError(FilterError):
    """Expression text does not follow the grammar."""


class FilterTypeError(FilterError):
    """A comparison value does not fit its field's type."""


class FilterExpr:
    """Base class for compiled filter nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class MatchAll(FilterExpr):
    pass


@dataclass(frozen=True)
class Compare(FilterExpr):
    field: str
    op: str  # "==" or "!="
    value: object


@dataclass(frozen=True)
class Not(FilterExpr):
    expr: FilterExpr


@dataclass(frozen=True)
class And(FilterExpr):
    left: FilterExpr
    right: FilterExpr


@dataclass(frozen=True)
class Or(FilterExpr):
    left: FilterExpr
    right: FilterExpr


@dataclass(frozen=True)
class Token:
    kind: str  # "lparen", "rparen", "op", "word"
    text: str
    offset: int


@dataclass(frozen=True)
class FilterSource:
    """Original expression text plus the byte offset of every token."""

    text: str
    token_offsets: tuple


_WORD_RE = re.compile(r"[A-Za-z0-9_.:/\-]+")


def tokenize(text: str) -> tuple[FilterSource, list[Token]]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        ch = text[pos]
        if ch.isspace():
            pos += 1
            continue
        if ch == "(":
            tokens.append(Token("lparen", "(", pos))
            pos += 1
        elif ch == ")":
            tokens.append(Token("rparen", ")", pos))
            pos += 1
        elif text.startswith("==", pos) or text.startswith("!=", pos):
            tokens.append(Token("op", text[pos : pos + 2], pos))
            pos += 2
        else:
            match = _WORD_RE.match(text, pos)
            if not match:
                raise ParseError(f"unexpected character {ch!r}", pos)
            tokens.append(Token("word", match.group(), pos))
            pos = match.end()
    source = FilterSource(text, tuple(t.offset for t in tokens))
    return source, tokens


class _Parser:
    def __init__(self, text: str, tokens: list[Token]):
        self.text = text
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "word" and tok.text.lower() == word

    def end_offset(self) -> int:
        return len(self.text)

    def parse(self) -> FilterExpr:
        expr = self.parse_or()
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected token {tok.text!r}", tok.offset, ("and", "or", "end of input"))
        return expr

    def parse_or(self) -> FilterExpr:
        expr = self.parse_and()
        while self.at_keyword("or"):
            self.advance()
            expr = Or(expr, self.parse_and())
        return expr

    def parse_and(self) -> FilterExpr:
        expr = self.parse_unary()
        while self.at_keyword("and"):
            self.advance()
            expr = And(expr, self.parse_unary())
        return expr

    def parse_unary(self) -> FilterExpr:
        tok = self.peek()
        if tok is None:
            raise ParseError("expression ended early", self.end_offset(), ("not", "(", "field name"))
        if tok.kind == "word" and tok.text.lower() == "not":
            self.advance()
            return Not(self.parse_unary())
        if tok.kind == "lparen":
            self.advance()
            expr = self.parse_or()
            closing = self.peek()
            if closing is None or closing.kind != "rparen":
                offset = closing.offset if closing else self.end_offset()
                raise ParseError("missing closing parenthesis", offset, (")",))
            self.advance()
            return expr
        return self.parse_comparison()

    def parse_comparison(self) -> Compare:
        tok = self.advance()
        fieldname = tok.text.lower()
        if tok.kind != "word" or fieldname not in FIELDS:
            raise ParseError(f"expected a field name, got {tok.text!r}", tok.offset, FIELDS)
        op_tok = self.peek()
        if op_tok is None or op_tok.kind != "op":
            offset = op_tok.offset if op_tok else self.end_offset()
            raise ParseError("expected a comparison operator", offset, ("==", "!="))
        self.advance()
        val_tok = self.peek()
        if val_tok is None or val_tok.kind != "word":
            offset = val_tok.offset if val_tok else self.end_offset()
            raise ParseError("expected a value", offset, ("value",))
        self.advance()
        return Compare(fieldname, op_tok.text, _parse_value(fieldname, val_tok))


_MAC_RE = re.compile(r"^[0-9a-fA-F]{2}(:[0-9a-fA-F]{2}){5}$")


def _parse_value(fieldname: str, tok: Token) -> object:
    text = tok.text
    if fieldname.startswith("ip."):
        try:
            return ipaddress.IPv4Network(text, strict=False)
        except ValueError:
            raise FilterTypeError(f"{text!r} is not an IPv4 address or CIDR prefix", tok.offset) from None
    if fieldname.startswith("mac."):
        if not _MAC_RE.match(text):
            raise FilterTypeError(f"{text!r} is not a MAC address", tok.offset)
        return text.lower()
    if fieldname == "proto":
        name = text.lower()
        if name not in PROTO_NAMES:
            raise FilterTypeError(f"unknown protocol {text!r}", tok.offset, PROTO_NAMES)
        return name
    # port fields
    try:
        port = int(text, 10)
    except ValueError:
        raise FilterTypeError(f"{text!r} is not a port number", tok.offset) from None
    if not 0 <= port <= 65535:
        raise FilterTypeError(f"port {port} out of range 0..65535", tok.offset)
    return port


def compile_filter(text: str) -> FilterExpr:
    """Compile expression text; empty or whitespace-only text matches everything."""
    _, tokens = tokenize(text)
    if not tokens:
        return MatchAll()
    return _Parser(text, tokens).parse()


def _field_values(fieldname: str, record: PacketRecord) -> list:
    if fieldname.startswith("ip."):
        ip = record.layer("ipv4")
        if ip is None:
            return []
        if fieldname == "ip.src":
            return [ip.src]
        if fieldname == "ip.dst":
            return [ip.dst]
        return [ip.src, ip.dst]
    if fieldname.startswith("mac."):
        eth = record.layer("ethernet")
        if eth is None:
            return []
        if fieldname == "mac.src":
            return [eth.src]
        if fieldname == "mac.dst":
            return [eth.dst]
        return [eth.src, eth.dst]
    if fieldname == "proto":
        return [layer.name for layer in record.layers]
    transport = record.layer("udp") or record.layer("tcp")
    if transport is None:
        return []
    if fieldname == "port.src":
        return [transport.src_port]
    if fieldname == "port.dst":
        return [transport.dst_port]
    return [transport.src_port, transport.dst_port]


def _value_matches(fieldname: str, actual, wanted) -> bool:
    if fieldname.startswith("ip."):
        return ipaddress.IPv4Address(actual) in wanted
    return actual == wanted


def eval_filter(expr: FilterExpr, record: PacketRecord) -> bool:
    if isinstance(expr, MatchAll):
        return True
    if isinstance(expr, Compare):
        values = _field_values(expr.field, record)
        if expr.op == "==":
            return any(_value_matches(expr.field, v, expr.value) for v in values)
        return any(not _value_matches(expr.field, v, expr.value) for v in values)
    if isinstance(expr, Not):
        return not eval_filter(expr.expr, record)
    if isinstance(expr, And):
        return eval_filter(expr.left, record) and eval_filter(expr.right, record)
    if isinstance(expr, Or):
        return eval_filter(expr.left, record) or eval_filter(expr.right, record)
    raise TypeError(f"not a filter node: {expr!r}")


_PRECEDENCE = {Or: 1, And: 2, Not: 3, Compare: 4, MatchAll: 4}


def _format_value(fieldname: str, value) -> str:
    if fieldname.startswith("ip."):
        if value.prefixlen == 32:
            return str(value.network_address)
        return str(value)
    return str(value)


def print_filter(expr: FilterExpr) -> str:
    """Canonical text form; ``compile_filter(print_filter(e)) == e``."""

    def wrap(child: FilterExpr, parent_prec: int, right_assoc_guard: bool = False) -> str:
        text = render(child)
        child_prec = _PRECEDENCE[type(child)]
        if child_prec < parent_prec or (right_assoc_guard and child_prec == parent_prec):
            return f"({text})"
        return text

    def render(node: FilterExpr) -> str:
        if isinstance(node, MatchAll):
            return ""
        if isinstance(node, Compare):
            return f"{node.field} {node.op} {_format_value(node.field, node.value)}"
        if isinstance(node, Not):
            return f"not {wrap(node.expr, _PRECEDENCE[Not])}"
        if isinstance(node, And):
            return f"{wrap(node.left, _PRECEDENCE[And])} and {wrap(node.right, _PRECEDENCE[And], True)}"
        if isinstance(node, Or):
            return f"{wrap(node.left, _PRECEDENCE[Or])} or {wrap(node.right, _PRECEDENCE[Or], True)}"
        raise TypeError(f"not a filter node: {node!r}")

    return render(expr)


def filter_mode(expr: FilterExpr) -> str:
    """Classify which sniffing method the expression embodies."""
    families: set[str] = set()

    def walk(node: FilterExpr):
        if isinstance(node, Compare):
            if node.field.startswith("ip."):
                families.add("ip")
            elif node.field.startswith("mac."):
                families.add("mac")
            elif node.field == "proto" and node.op == "==" and node.value == "arp":
                families.add("arp")
        elif isinstance(node, Not):
            walk(node.expr)
        elif isinstance(node, (And, Or)):
            walk(node.left)
            walk(node.right)

    walk(expr)
    if not families:
        return MODE_NONE
    if len(families) > 1:
        return MODE_MIXED
    return {"ip": MODE_IP, "mac": MODE_MAC, "arp": MODE_ARP}[families.pop()]
