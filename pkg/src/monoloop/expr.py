"""Expression language for model right-hand sides.

Grammar (lowest to highest precedence)::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          # right associative
    primary := NUMBER | IDENT | IDENT '(' args ')' | '(' sum ')'

Expressions are kept as immutable :class:`Expr` trees. :func:`eval_ast`
walks the tree directly; :func:`compile_program` flattens a list of trees
into the postfix form consumed by the integration kernels.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    EvalDomainError,
    IllegalCharacter,
    UnbalancedParen,
    UnboundVariable,
    UnexpectedToken,
    UnknownFunction,
    WrongArity,
)

FUNCTIONS = {"exp": 1, "ln": 1, "sqrt": 1, "abs": 1, "min": 2, "max": 2}

BINARY_OPS = {"+": "add", "-": "sub", "*": "mul", "/": "div", "^": "pow"}
_SYMBOL = {v: k for k, v in BINARY_OPS.items()}
_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


# --- tokens ------------------------------------------------------------------

class Token(NamedTuple):
    kind: str  # "num" | "ident" | "op" | "end"
    text: str
    offset: int


_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
)


def tokenize(src: str) -> list[Token]:
    """Split ``src`` into tokens, each carrying its byte offset.

    The returned list always ends with an ``end`` token.
    """
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        offset = len(src[:pos].encode("utf-8"))
        if m is None:
            raise IllegalCharacter(f"illegal character {src[pos]!r}", offset)
        if m.lastgroup != "ws":
            tokens.append(Token(m.lastgroup, m.group(), offset))
        pos = m.end()
    tokens.append(Token("end", "", len(src.encode("utf-8"))))
    return tokens


# --- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Expr:
    """Expression node.

    ``kind`` is one of ``const``, ``var``, ``neg``, ``add``, ``sub``, ``mul``,
    ``div``, ``pow`` or ``call``. ``value`` holds the number for constants,
    the name for variables and function calls. ``offset`` is diagnostic only
    and does not take part in equality.
    """

    kind: str
    value: object = None
    children: tuple["Expr", ...] = ()
    offset: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind in _PREC and self.kind != "neg" and len(self.children) != 2:
            raise ValueError(f"{self.kind} node needs 2 children")
        if self.kind == "neg" and len(self.children) != 1:
            raise ValueError("neg node needs 1 child")
        if self.kind == "call" and FUNCTIONS.get(self.value) != len(self.children):
            raise ValueError(f"bad call node {self.value}/{len(self.children)}")

    def __str__(self):
        return to_text(self)


def const(value: float) -> Expr:
    """Constant node; negative numbers become ``neg`` of a positive literal."""
    value = float(value)
    if value < 0 or (value == 0 and math.copysign(1.0, value) < 0):
        return Expr("neg", children=(Expr("const", -value),))
    return Expr("const", value)


def var(name: str) -> Expr:
    return Expr("var", name)


def binary(op: str, a: Expr, b: Expr) -> Expr:
    return Expr(op, children=(a, b))


def neg(a: Expr) -> Expr:
    return Expr("neg", children=(a,))


# --- parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: Sequence[Token]):
        self.toks = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at_op(self, *ops) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def unexpected(self):
        t = self.tok
        if t.kind == "op" and t.text == ")":
            raise UnbalancedParen("unmatched ')'", t.offset)
        what = "end of input" if t.kind == "end" else repr(t.text)
        raise UnexpectedToken(f"unexpected {what}", t.offset)

    def parse(self) -> Expr:
        node = self.sum()
        if self.tok.kind != "end":
            self.unexpected()
        return node

    def sum(self) -> Expr:
        node = self.product()
        while self.at_op("+", "-"):
            t = self.advance()
            node = Expr(BINARY_OPS[t.text], children=(node, self.product()), offset=t.offset)
        return node

    def product(self) -> Expr:
        node = self.unary()
        while self.at_op("*", "/"):
            t = self.advance()
            node = Expr(BINARY_OPS[t.text], children=(node, self.unary()), offset=t.offset)
        return node

    def unary(self) -> Expr:
        if self.at_op("-"):
            t = self.advance()
            return Expr("neg", children=(self.unary(),), offset=t.offset)
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.at_op("^"):
            t = self.advance()
            return Expr("pow", children=(base, self.unary()), offset=t.offset)
        return base

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Expr("const", float(t.text), offset=t.offset)
        if t.kind == "ident":
            self.advance()
            if self.at_op("("):
                return self.call(t)
            return Expr("var", t.text, offset=t.offset)
        if self.at_op("("):
            self.advance()
            node = self.sum()
            if not self.at_op(")"):
                if self.tok.kind == "end":
                    raise UnbalancedParen("missing ')'", t.offset)
                self.unexpected()
            self.advance()
            return node
        self.unexpected()

    def call(self, name_tok: Token) -> Expr:
        name = name_tok.text
        if name not in FUNCTIONS:
            raise UnknownFunction(name, name_tok.offset)
        open_tok = self.advance()
        args = []
        if not self.at_op(")"):
            args.append(self.sum())
            while self.at_op(","):
                self.advance()
                args.append(self.sum())
        if not self.at_op(")"):
            if self.tok.kind == "end":
                raise UnbalancedParen("missing ')'", open_tok.offset)
            self.unexpected()
        self.advance()
        if len(args) != FUNCTIONS[name]:
            raise WrongArity(name, len(args), FUNCTIONS[name], name_tok.offset)
        return Expr("call", name, tuple(args), offset=name_tok.offset)


def parse_expression(tokens: Sequence[Token] | str) -> Expr:
    """Parse a token sequence (or raw text) into an :class:`Expr`."""
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    return _Parser(tokens).parse()


# --- printing ----------------------------------------------------------------

def _fmt_number(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def to_text(node: Expr) -> str:
    """Render ``node`` with the minimum parentheses needed to re-parse it."""
    k = node.kind
    if k == "const":
        return _fmt_number(node.value)
    if k == "var":
        return node.value
    if k == "call":
        return f"{node.value}({', '.join(to_text(c) for c in node.children)})"
    if k == "neg":
        child = node.children[0]
        inner = to_text(child)
        if child.kind in _PREC and _PREC[child.kind] < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    a, b = node.children
    p = _PREC[k]
    left, right = to_text(a), to_text(b)
    if k == "pow":
        # base must be atomic; exponent may be unary or power
        if a.kind in _PREC:
            left = f"({left})"
        if b.kind in _PREC and _PREC[b.kind] < _PREC["neg"]:
            right = f"({right})"
    else:
        if a.kind in _PREC and _PREC[a.kind] < p:
            left = f"({left})"
        if b.kind in _PREC and _PREC[b.kind] <= p:
            right = f"({right})"
    return f"{left} {_SYMBOL[k]} {right}"


# --- tree utilities ----------------------------------------------------------

def variables(node: Expr) -> set[str]:
    if node.kind == "var":
        return {node.value}
    out = set()
    for c in node.children:
        out |= variables(c)
    return out


def substitute(node: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneous substitution)."""
    if node.kind == "var":
        return mapping.get(node.value, node)
    if not node.children:
        return node
    return Expr(node.kind, node.value,
                tuple(substitute(c, mapping) for c in node.children), node.offset)


def rename(node: Expr, names: Mapping[str, str]) -> Expr:
    return substitute(node, {old: var(new) for old, new in names.items()})


def linear_form(coeffs: Sequence[float], names: Sequence[str]) -> Expr:
    """``sum_j coeffs[j] * names[j]`` with zero terms dropped."""
    terms = []
    for c, name in zip(coeffs, names):
        c = float(c)
        if c == 0.0:
            continue
        if c == 1.0:
            t = var(name)
        elif c == -1.0:
            t = neg(var(name))
        else:
            t = binary("mul", const(c), var(name))
        terms.append(t)
    if not terms:
        return const(0.0)
    node = terms[0]
    for t in terms[1:]:
        if t.kind == "neg":
            node = binary("sub", node, t.children[0])
        else:
            node = binary("add", node, t)
    return node


# --- evaluation --------------------------------------------------------------

def _pow(a: float, b: float, offset) -> float:
    if a == 0.0 and b < 0.0:
        raise EvalDomainError("zero to a negative power", offset)
    if a < 0.0 and b != math.floor(b):
        raise EvalDomainError("negative base with non-integer exponent", offset)
    try:
        return a ** b
    except OverflowError:
        return math.inf if a > 0 or b % 2 == 0 else -math.inf


def _exp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError:
        return math.inf


def eval_ast(node: Expr, env: Mapping[str, float]) -> float:
    """Evaluate ``node`` by walking the tree.

    Division by zero, ``ln`` of a non-positive number, ``sqrt`` of a negative
    number and zero to a negative power raise :class:`EvalDomainError`.
    """
    k = node.kind
    if k == "const":
        return node.value
    if k == "var":
        try:
            return float(env[node.value])
        except KeyError:
            raise UnboundVariable(node.value) from None
    if k == "neg":
        return -eval_ast(node.children[0], env)
    if k == "call":
        args = [eval_ast(c, env) for c in node.children]
        name = node.value
        if name == "exp":
            return _exp(args[0])
        if name == "ln":
            if args[0] <= 0.0:
                raise EvalDomainError("ln of non-positive value", node.offset)
            return math.log(args[0])
        if name == "sqrt":
            if args[0] < 0.0:
                raise EvalDomainError("sqrt of negative value", node.offset)
            return math.sqrt(args[0])
        if name == "abs":
            return abs(args[0])
        if name == "min":
            return min(args)
        return max(args)
    a = eval_ast(node.children[0], env)
    b = eval_ast(node.children[1], env)
    if k == "add":
        return a + b
    if k == "sub":
        return a - b
    if k == "mul":
        return a * b
    if k == "div":
        if b == 0.0:
            raise EvalDomainError("division by zero", node.offset)
        return a / b
    return _pow(a, b, node.offset)


# --- postfix compilation -----------------------------------------------------

OP_CONST, OP_LOAD, OP_NEG, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = range(8)
OP_EXP, OP_LN, OP_SQRT, OP_ABS, OP_MIN, OP_MAX = range(8, 14)

_BIN_OPCODE = {"add": OP_ADD, "sub": OP_SUB, "mul": OP_MUL, "div": OP_DIV, "pow": OP_POW}
_CALL_OPCODE = {"exp": OP_EXP, "ln": OP_LN, "sqrt": OP_SQRT, "abs": OP_ABS,
                "min": OP_MIN, "max": OP_MAX}


@dataclass(frozen=True)
class Program:
    """Several expressions flattened into one postfix instruction stream.

    ``code`` is an ``(ninstr, 2)`` int array of ``(opcode, arg)`` pairs;
    expression ``i`` occupies ``code[offsets[i]:offsets[i+1]]``.
    ``srcmap`` gives the source offset of each instruction (or -1).
    """

    code: np.ndarray
    offsets: np.ndarray
    consts: np.ndarray
    srcmap: tuple
    stack_size: int

    @property
    def count(self) -> int:
        return len(self.offsets) - 1


def compile_program(exprs: Sequence[Expr], slots: Mapping[str, int]) -> Program:
    code: list[tuple[int, int]] = []
    srcmap: list[int] = []
    consts: list[float] = []
    const_index: dict[float, int] = {}
    offsets = [0]
    max_depth = 1

    def emit(op, arg, node):
        code.append((op, arg))
        srcmap.append(-1 if node.offset is None else node.offset)

    def walk(node: Expr, depth: int) -> None:
        nonlocal max_depth
        max_depth = max(max_depth, depth + 1)
        k = node.kind
        if k == "const":
            key = node.value
            if key not in const_index:
                const_index[key] = len(consts)
                consts.append(key)
            emit(OP_CONST, const_index[key], node)
        elif k == "var":
            if node.value not in slots:
                raise UnboundVariable(node.value)
            emit(OP_LOAD, slots[node.value], node)
        elif k == "neg":
            walk(node.children[0], depth)
            emit(OP_NEG, 0, node)
        elif k == "call":
            for i, c in enumerate(node.children):
                walk(c, depth + i)
            emit(_CALL_OPCODE[node.value], 0, node)
        else:
            walk(node.children[0], depth)
            walk(node.children[1], depth + 1)
            emit(_BIN_OPCODE[k], 0, node)

    for e in exprs:
        walk(e, 0)
        offsets.append(len(code))
    return Program(
        code=np.asarray(code, dtype=np.intc).reshape(-1, 2),
        offsets=np.asarray(offsets, dtype=np.intc),
        consts=np.asarray(consts, dtype=float),
        srcmap=tuple(srcmap),
        stack_size=max_depth,
    )
