"""Minimal arithmetic expression grammar for system specification files.

Coefficients of user systems are written as strings and parsed here; nothing
is ever passed to the host language's eval.  Grammar (whitespace ignored):

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := '-' factor | power
    power   := atom ('^' factor)?            right-associative
    atom    := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')' | '|' expr '|'
    FUNC    := exp | log | sin | cos | sqrt | abs
    VAR     := x1 ... xd   (aliases: x, y, z for the first three components)

NUMBER is a decimal literal with optional fraction and exponent.  '|expr|' is
absolute value; nest with parentheses if needed.  Evaluation is numpy-based
and broadcasts over batched states.

A system specification is a JSON object:

    {"name": "...", "dim": 2, "noise_dim": 2,
     "diffusion": [["y", "0"], ["0", "x^2/2"]],     # dim rows, noise_dim cols
     "drift": ["0", "0"],
     "calculus": "ito",
     "model": {"kind": "flat"}}

diffusion[k][i] is component k of the column field X^i.  Jacobians are central
finite differences (relative step 1e-5).  Models: {"kind": "flat"} (default),
{"kind": "punctured_flat", "puncture": [..]}.
"""

from __future__ import annotations

import json
import re
from typing import Callable, List, Sequence

import numpy as np

from .errors import ContractError
from .geometry import FlatModel, PuncturedFlatModel
from .systems import ITO, STRATONOVICH, VectorFieldSystem, fd_directional

_TOKEN_RE = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
                       r"|([A-Za-z_][A-Za-z_0-9]*)|(\*|/|\+|-|\^|\(|\)|\|))")

_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


class ExpressionError(ContractError):
    """Raised on malformed coefficient expressions."""


def _tokenize(src: str):
    pos, out = 0, []
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            if src[pos:].strip() == "":
                break
            raise ExpressionError(f"cannot tokenize {src[pos:]!r} in {src!r}")
        num, ident, op = m.groups()
        if num is not None:
            out.append(("num", float(num)))
        elif ident is not None:
            out.append(("ident", ident))
        else:
            out.append(("op", op))
        pos = m.end()
    out.append(("end", None))
    return out


class _Parser:
    def __init__(self, tokens, dim):
        self.toks = tokens
        self.i = 0
        self.dim = dim

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val = self.take()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r}, got {val!r}")

    def parse(self):
        node = self.expr()
        kind, val = self.peek()
        if kind != "end":
            raise ExpressionError(f"trailing input near {val!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.take()
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            _, op = self.take()
            node = ("bin", op, node, self.factor())
        return node

    def factor(self):
        if self.peek() == ("op", "-"):
            self.take()
            return ("neg", self.factor())
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            node = ("bin", "^", node, self.factor())
        return node

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return ("num", val)
        if kind == "ident":
            if self.peek() == ("op", "("):
                if val not in _FUNCS:
                    raise ExpressionError(f"unknown function {val!r}")
                self.take()
                node = self.expr()
                self.expect_op(")")
                return ("call", val, node)
            return ("var", self._var_index(val))
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "op" and val == "|":
            node = self.expr()
            self.expect_op("|")
            return ("call", "abs", node)
        raise ExpressionError(f"unexpected token {val!r}")

    def _var_index(self, name):
        aliases = {"x": 0, "y": 1, "z": 2}
        if name in aliases and aliases[name] < self.dim:
            return aliases[name]
        m = re.fullmatch(r"x(\d+)", name)
        if m:
            idx = int(m.group(1)) - 1
            if 0 <= idx < self.dim:
                return idx
        raise ExpressionError(f"unknown variable {name!r} for dim {self.dim}")


def _evaluate(node, x):
    kind = node[0]
    if kind == "num":
        return np.broadcast_to(np.float64(node[1]), x.shape[:-1])
    if kind == "var":
        return x[..., node[1]]
    if kind == "neg":
        return -_evaluate(node[1], x)
    if kind == "call":
        return _FUNCS[node[1]](_evaluate(node[2], x))
    _, op, left, right = node
    a, b = _evaluate(left, x), _evaluate(right, x)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    if op == "^":
        return np.power(a, b)
    raise ExpressionError(f"unknown operator {op!r}")


def compile_expression(src: str, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """Parse src once and return a numpy-evaluating callable of the state."""
    node = _Parser(_tokenize(src), dim).parse()

    def fn(x):
        return _evaluate(node, np.asarray(x, dtype=float))

    return fn


def _compile_vector(exprs: Sequence[str], dim: int) -> Callable[[np.ndarray], np.ndarray]:
    fns = [compile_expression(e, dim) for e in exprs]

    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.asarray(f(x), dtype=float) for f in fns], axis=-1)

    return fn


def load_system(spec) -> VectorFieldSystem:
    """Build a VectorFieldSystem from a spec dict, JSON string or file path."""
    if isinstance(spec, str):
        if spec.strip().startswith("{"):
            spec = json.loads(spec)
        else:
            with open(spec, "r", encoding="utf-8") as fh:
                spec = json.load(fh)
    dim = int(spec["dim"])
    noise_dim = int(spec["noise_dim"])
    rows: List[List[str]] = spec["diffusion"]
    if len(rows) != dim or any(len(r) != noise_dim for r in rows):
        raise ContractError("diffusion must be a dim x noise_dim matrix of expressions")
    entry_fns = [[compile_expression(e, dim) for e in row] for row in rows]
    drift_fn = _compile_vector(spec.get("drift", ["0"] * dim), dim)

    def diffusion_matrix(x):
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        out = np.empty(batch + (dim, noise_dim))
        for k in range(dim):
            for i in range(noise_dim):
                out[..., k, i] = entry_fns[k][i](x)
        return out

    def diffusion(x, e):
        M = diffusion_matrix(x)
        e = np.asarray(e, dtype=float)
        return np.einsum("...ki,...i->...k", M, np.broadcast_to(e, M.shape[:-2] + (noise_dim,)))

    def diffusion_jacobian(x, e, v):
        return fd_directional(lambda y: diffusion(y, e), x, v)

    def drift_jacobian(x, v):
        return fd_directional(drift_fn, x, v)

    mspec = spec.get("model", {"kind": "flat"})
    kind = mspec.get("kind", "flat")
    if kind == "flat":
        model = FlatModel(dim)
    elif kind == "punctured_flat":
        model = PuncturedFlatModel(dim, mspec["puncture"])
    else:
        raise ContractError(f"unsupported model kind {kind!r} in system spec")

    calculus = spec.get("calculus", STRATONOVICH).lower()
    if calculus not in (ITO, STRATONOVICH):
        raise ContractError(f"calculus must be 'ito' or 'stratonovich', got {calculus!r}")

    return VectorFieldSystem(
        name=spec.get("name", "user_system"),
        dim=dim, noise_dim=noise_dim,
        diffusion=diffusion, drift=drift_fn,
        diffusion_jacobian=diffusion_jacobian, drift_jacobian=drift_jacobian,
        calculus=calculus, model=model,
    )
