"""System definitions ``x' = f(x, u), y = h(x)`` and the model file format.

A model file is line oriented, ``#`` starts a comment::

    model goodwin3
    states x1 x2 x3
    inputs u1
    param V 2.0
    param m 4.0
    order_states + + +
    order_inputs +
    dx1 = -x1 + u1
    dx2 = -x2 + x1
    dx3 = -x3 + x2
    y1 = V/(1 + x3^m)

Linear models give ``linear A = [[...]]``, ``linear B = ...`` and
``linear C = ...`` instead of ``d``/``y`` lines; the output is ``-C x``.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Mapping

import numpy as np

from . import _backend
from .errors import (
    DimensionMismatch,
    EvalDomainError,
    ParseError,
    UnboundVariable,
    ValidationError,
)
from .expr import Expr, compile_program, eval_ast, linear_form, parse_expression, to_text, variables
from .order import OrthantOrder

_IDENT_OK = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")


@dataclass(frozen=True)
class LinearTriple:
    """``f(x, u) = A x + B u``, ``h(x) = -C x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        n = A.shape[0]
        B = np.array(self.B, dtype=float)
        if B.size == 0:
            B = np.zeros((n, 0))
        if B.ndim != 2 or B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got {B.shape}")
        m = B.shape[1]
        C = np.array(self.C, dtype=float)
        if C.size == 0 and m == 0:
            C = np.zeros((0, n))
        if C.shape != (m, n):
            raise DimensionMismatch(f"C must be {m}x{n} to match A {A.shape} and B {B.shape}, got {C.shape}")
        for name, M in (("A", A), ("B", B), ("C", C)):
            if not np.all(np.isfinite(M)):
                raise ValidationError(f"{name} has non-finite entries")
            M.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class ModelDef:
    """Immutable system definition.

    ``dynamics`` holds one expression per state over states, inputs and
    params; ``outputs`` one expression per input over states and params.
    Linear models carry their matrices in ``linear`` as well; the
    expressions are then synthesized from them.
    """

    name: str
    states: tuple[str, ...]
    inputs: tuple[str, ...]
    params: Mapping[str, float]
    dynamics: tuple[Expr, ...]
    outputs: tuple[Expr, ...]
    order_states: OrthantOrder = None
    order_inputs: OrthantOrder = None
    linear: LinearTriple | None = None
    lines: Mapping[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "params", MappingProxyType(
            {k: float(v) for k, v in dict(self.params).items()}))
        object.__setattr__(self, "dynamics", tuple(self.dynamics))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.order_states is None:
            object.__setattr__(self, "order_states", OrthantOrder.positive(len(self.states)))
        if self.order_inputs is None:
            object.__setattr__(self, "order_inputs", OrthantOrder.positive(len(self.inputs)))
        self._validate()

    def _validate(self):
        names = list(self.states) + list(self.inputs) + list(self.params)
        seen = set()
        for nm in names:
            if nm in seen:
                raise ValidationError(f"name {nm!r} declared twice")
            seen.add(nm)
        for k, v in self.params.items():
            if not math.isfinite(v):
                raise ValidationError(f"parameter {k} is not finite", self.lines.get(f"param {k}"))
        n, m = len(self.states), len(self.inputs)
        if len(self.dynamics) != n:
            raise ValidationError(f"{len(self.dynamics)} right-hand sides for {n} states")
        if len(self.outputs) != m:
            raise ValidationError(f"{len(self.outputs)} outputs for {m} inputs")
        if self.order_states.dim != n:
            raise DimensionMismatch(f"order_states has {self.order_states.dim} signs for {n} states",
                                    self.lines.get("order_states"))
        if self.order_inputs.dim != m:
            raise DimensionMismatch(f"order_inputs has {self.order_inputs.dim} signs for {m} inputs",
                                    self.lines.get("order_inputs"))
        f_scope = set(self.states) | set(self.inputs) | set(self.params)
        h_scope = set(self.states) | set(self.params)
        for s, e in zip(self.states, self.dynamics):
            bad = variables(e) - f_scope
            if bad:
                raise UnboundVariable(sorted(bad)[0], self.lines.get(f"d{s}"))
        for i, e in enumerate(self.outputs):
            bad = variables(e) - h_scope
            if bad:
                raise UnboundVariable(sorted(bad)[0], self.lines.get(f"y{i + 1}"))
        if self.linear is not None and (self.linear.n, self.linear.m) != (n, m):
            raise DimensionMismatch("linear matrices disagree with declared dimensions")

    # --- dimensions / layout -----------------------------------------------

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def m(self) -> int:
        return len(self.inputs)

    @cached_property
    def slots(self) -> dict[str, int]:
        names = list(self.states) + list(self.inputs) + list(self.params)
        return {nm: i for i, nm in enumerate(names)}

    @cached_property
    def program(self):
        """Postfix program for ``f`` followed by ``h`` (n + m expressions)."""
        return compile_program(self.dynamics + self.outputs, self.slots)

    @cached_property
    def f_program(self):
        return compile_program(self.dynamics, self.slots)

    def env(self, u=None) -> np.ndarray:
        e = np.zeros(self.n + self.m + len(self.params))
        if self.m:
            e[self.n:self.n + self.m] = np.zeros(self.m) if u is None else np.asarray(u, dtype=float)
        e[self.n + self.m:] = list(self.params.values())
        return e

    def named_env(self, x, u=None) -> dict[str, float]:
        env = dict(self.params)
        env.update(zip(self.states, np.asarray(x, dtype=float).tolist()))
        if self.m:
            uu = np.zeros(self.m) if u is None else np.asarray(u, dtype=float)
            env.update(zip(self.inputs, uu.tolist()))
        return env

    # --- evaluation ------------------------------------------------------------

    def _raise_domain(self, pc: int):
        off = self.program.srcmap[pc] if pc < len(self.program.srcmap) else -1
        raise EvalDomainError("domain error while evaluating model", None if off < 0 else off)

    def evaluate(self, x, u=None) -> tuple[np.ndarray, np.ndarray]:
        """``(f(x, u), h(x))`` through the postfix kernel."""
        e = self.env(u)
        e[:self.n] = np.asarray(x, dtype=float)
        prog = self.program
        vals, pc = _backend.kernels.eval_program(prog.code, prog.offsets, prog.consts, e)
        if pc >= 0:
            self._raise_domain(pc)
        return vals[:self.n], vals[self.n:]

    def f(self, x, u=None) -> np.ndarray:
        return self.evaluate(x, u)[0]

    def h(self, x) -> np.ndarray:
        return self.evaluate(x)[1]

    def f_tree(self, x, u=None) -> np.ndarray:
        """``f`` by walking the expression trees (reference path)."""
        env = self.named_env(x, u)
        return np.array([eval_ast(e, env) for e in self.dynamics])

    def h_tree(self, x) -> np.ndarray:
        env = self.named_env(x)
        return np.array([eval_ast(e, env) for e in self.outputs])

    # --- derived models ---------------------------------------------------------

    def replace(self, **changes) -> "ModelDef":
        kw = dict(name=self.name, states=self.states, inputs=self.inputs, params=self.params,
                  dynamics=self.dynamics, outputs=self.outputs, order_states=self.order_states,
                  order_inputs=self.order_inputs, linear=self.linear)
        kw.update(changes)
        return ModelDef(**kw)

    def with_params(self, **params) -> "ModelDef":
        unknown = set(params) - set(self.params)
        if unknown:
            raise ValidationError(f"unknown parameters {sorted(unknown)}")
        p = dict(self.params)
        p.update(params)
        return self.replace(params=p)


def linear_model(A, B, C, name: str = "linear", states=None, inputs=None,
                 order_states=None, order_inputs=None) -> ModelDef:
    """Build a ModelDef from matrices, synthesizing the expression form."""
    lin = LinearTriple(A, B, C)
    n, m = lin.n, lin.m
    states = tuple(states) if states else tuple(f"x{i + 1}" for i in range(n))
    inputs = tuple(inputs) if inputs is not None and len(inputs) == m else tuple(
        f"u{k + 1}" for k in range(m))
    if len(states) != n:
        raise DimensionMismatch(f"{len(states)} state names for A of size {n}")
    names = states + inputs
    dyn = tuple(linear_form(np.concatenate([lin.A[i], lin.B[i]]), names) for i in range(n))
    outs = tuple(linear_form(-lin.C[k], states) for k in range(m))
    return ModelDef(name=name, states=states, inputs=inputs, params={}, dynamics=dyn,
                    outputs=outs, order_states=order_states, order_inputs=order_inputs,
                    linear=lin)


# --- file format -----------------------------------------------------------------

def _parse_matrix(text: str, line: int) -> np.ndarray:
    try:
        val = ast.literal_eval(text.strip())
        arr = np.array(val, dtype=float)
    except (ValueError, SyntaxError, TypeError):
        raise ParseError(f"cannot read matrix {text.strip()!r}", line=line) from None
    if arr.size == 0:
        return arr.reshape(0, 0) if arr.ndim < 2 else arr
    if arr.ndim != 2:
        raise ParseError("matrix must be a nested [[...]] list", line=line)
    return arr


def _expr(text: str, line: int) -> Expr:
    try:
        return parse_expression(text.strip())
    except ParseError as e:
        e.line = line
        raise


def load_model(document: str) -> ModelDef:
    """Parse and validate a model document."""
    name = None
    states: list[str] | None = None
    inputs: list[str] | None = None
    params: dict[str, float] = {}
    o_states = o_inputs = None
    rhs: dict[str, tuple[Expr, int]] = {}
    outs: dict[int, tuple[Expr, int]] = {}
    mats: dict[str, np.ndarray] = {}
    lines: dict[str, int] = {}

    for lineno, raw in enumerate(document.splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        head, _, rest = text.partition(" ")
        rest = rest.strip()
        if head == "model":
            if not rest or set(rest) - _IDENT_OK:
                raise ParseError(f"bad model name {rest!r}", line=lineno)
            name = rest
        elif head in ("states", "inputs"):
            names = rest.split()
            for nm in names:
                if not nm[0].isalpha() and nm[0] != "_" or set(nm) - _IDENT_OK:
                    raise ParseError(f"bad identifier {nm!r}", line=lineno)
            if head == "states":
                states = names
            else:
                inputs = names
            lines[head] = lineno
        elif head == "param":
            parts = rest.split()
            if len(parts) != 2:
                raise ParseError("expected 'param NAME VALUE'", line=lineno)
            try:
                value = float(parts[1])
            except ValueError:
                raise ParseError(f"bad parameter value {parts[1]!r}", line=lineno) from None
            if not math.isfinite(value):
                raise ValidationError(f"parameter {parts[0]} is not finite", lineno)
            if parts[0] in params:
                raise ValidationError(f"parameter {parts[0]} declared twice", lineno)
            params[parts[0]] = value
            lines[f"param {parts[0]}"] = lineno
        elif head in ("order_states", "order_inputs"):
            try:
                order = OrthantOrder.from_text(rest.split())
            except ValueError as e:
                raise ParseError(str(e), line=lineno) from None
            if head == "order_states":
                o_states = order
            else:
                o_inputs = order
            lines[head] = lineno
        elif head == "linear":
            key, eq, mat = rest.partition("=")
            key = key.strip()
            if not eq or key not in ("A", "B", "C"):
                raise ParseError("expected 'linear A|B|C = [[...]]'", line=lineno)
            mats[key] = _parse_matrix(mat, lineno)
            lines[f"linear {key}"] = lineno
        elif "=" in text:
            lhs, _, expr_text = text.partition("=")
            lhs = lhs.strip()
            if lhs.startswith("d") and len(lhs) > 1:
                if lhs[1:] in rhs:
                    raise ValidationError(f"{lhs} defined twice", lineno)
                rhs[lhs[1:]] = (_expr(expr_text, lineno), lineno)
                lines[lhs] = lineno
            elif lhs.startswith("y") and lhs[1:].isdigit():
                k = int(lhs[1:])
                if k in outs:
                    raise ValidationError(f"{lhs} defined twice", lineno)
                outs[k] = (_expr(expr_text, lineno), lineno)
                lines[lhs] = lineno
            else:
                raise ParseError(f"left-hand side must be dSTATE or yK, got {lhs!r}", line=lineno)
        else:
            raise ParseError(f"unknown directive {head!r}", line=lineno)

    if name is None:
        name = "model"
    if mats:
        if rhs or outs:
            raise ValidationError("linear matrices and expression dynamics are mutually exclusive")
        missing = {"A", "B", "C"} - set(mats)
        if missing:
            raise ValidationError(f"linear model is missing {sorted(missing)}")
        try:
            lin = LinearTriple(mats["A"], mats["B"], mats["C"])
        except DimensionMismatch as e:
            e.line = lines.get("linear C")
            raise
        if states is not None and len(states) != lin.n:
            raise DimensionMismatch(f"{len(states)} states declared, A is {lin.n}x{lin.n}",
                                    lines.get("states"))
        if inputs is not None and len(inputs) != lin.m:
            raise DimensionMismatch(f"{len(inputs)} inputs declared, B has {lin.m} columns",
                                    lines.get("inputs"))
        if params:
            raise ValidationError("linear models take no parameters")
        return linear_model(lin.A, lin.B, lin.C, name=name, states=states, inputs=inputs,
                            order_states=o_states, order_inputs=o_inputs)

    if states is None:
        raise ValidationError("missing 'states' declaration")
    inputs = inputs or []
    for s in rhs:
        if s not in states:
            raise ValidationError(f"d{s} given for undeclared state {s!r}", rhs[s][1])
    missing = [s for s in states if s not in rhs]
    if missing:
        raise ValidationError(f"no right-hand side for state(s) {missing}")
    bad_out = sorted(k for k in outs if not 1 <= k <= len(inputs))
    if bad_out:
        raise ValidationError(f"output y{bad_out[0]} has no matching input", outs[bad_out[0]][1])
    if len(outs) != len(inputs):
        raise ValidationError(f"{len(outs)} outputs for {len(inputs)} inputs")
    return ModelDef(
        name=name,
        states=states,
        inputs=inputs,
        params=params,
        dynamics=tuple(rhs[s][0] for s in states),
        outputs=tuple(outs[k + 1][0] for k in range(len(inputs))),
        order_states=o_states,
        order_inputs=o_inputs,
        lines=lines,
    )


def load_model_file(path) -> ModelDef:
    with open(path, encoding="utf-8") as fh:
        return load_model(fh.read())


def _fmt_matrix(M: np.ndarray) -> str:
    return "[" + ", ".join("[" + ", ".join(repr(float(v)) for v in row) + "]" for row in M) + "]"


def dumps_model(model: ModelDef) -> str:
    """Serialize ``model`` back into the text format."""
    out = [f"model {model.name}", f"states {' '.join(model.states)}"]
    if model.m:
        out.append(f"inputs {' '.join(model.inputs)}")
    for k, v in model.params.items():
        out.append(f"param {k} {v!r}")
    out.append(f"order_states {model.order_states.text()}")
    if model.m:
        out.append(f"order_inputs {model.order_inputs.text()}")
    if model.linear is not None:
        lin = model.linear
        out += [f"linear A = {_fmt_matrix(lin.A)}", f"linear B = {_fmt_matrix(lin.B)}",
                f"linear C = {_fmt_matrix(lin.C)}"]
    else:
        out += [f"d{s} = {to_text(e)}" for s, e in zip(model.states, model.dynamics)]
        out += [f"y{k + 1} = {to_text(e)}" for k, e in enumerate(model.outputs)]
    return "\n".join(out) + "\n"


def models_equal(a: ModelDef, b: ModelDef) -> bool:
    same = (a.name == b.name and a.states == b.states and a.inputs == b.inputs
            and dict(a.params) == dict(b.params) and a.dynamics == b.dynamics
            and a.outputs == b.outputs and a.order_states == b.order_states
            and a.order_inputs == b.order_inputs)
    if not same or (a.linear is None) != (b.linear is None):
        return False
    if a.linear is None:
        return True
    return all(np.array_equal(getattr(a.linear, k), getattr(b.linear, k)) for k in "ABC")


def goodwin_model(V: float = 1.0, m: float = 1.0, name: str = "goodwin3") -> ModelDef:
    """Three unit lags closed through a repressive Hill output ``V / (1 + x3^m)``."""
    return load_model(
        f"model {name}\nstates x1 x2 x3\ninputs u1\nparam V {V!r}\nparam m {m!r}\n"
        "order_states + + +\norder_inputs +\n"
        "dx1 = -x1 + u1\ndx2 = -x2 + x1\ndx3 = -x3 + x2\ny1 = V/(1 + x3^m)\n"
    )


def scalar_model(k: float) -> ModelDef:
    """``x' = -x + u`` with output ``-k x`` (linear form)."""
    return linear_model([[-1.0]], [[1.0]], [[k]], name="scalar")
