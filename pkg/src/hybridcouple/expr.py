"""Small closed-form expression language for coupling terms.

Grammar is the arithmetic subset of Python expressions::

    mg.V_bus * H(dc.x_DC1)
    W_to_kW(COP * mg.D_load * mg.V_bus * mg.I_O)

``model.signal`` references a signal, bare names are constants, and calls
are limited to registered functions.  Parsing is done by :mod:`ast`; the tree
is whitelisted, its signal references collected, and then compiled to a
plain Python function reading from a ``{"model.signal": value}`` mapping.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .errors import ConfigError

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)

ENV_NAME = "_sig"


@dataclass(frozen=True)
class Expr:
    text: str
    refs: frozenset                     # {(model_id, signal)}
    fn: Callable[[Mapping[str, float]], float] = field(compare=False, repr=False)

    def __call__(self, env):
        return self.fn(env)

    @property
    def models(self):
        return frozenset(m for m, _ in self.refs)


def _err(msg, node, line_offset, col_offset):
    line = getattr(node, "lineno", 1) + line_offset
    col = getattr(node, "col_offset", 0) + 1 + (col_offset if getattr(node, "lineno", 1) == 1 else 0)
    return ConfigError(msg, line=line, column=col)


class _Rewriter(ast.NodeTransformer):
    def __init__(self, constants, functions, loc):
        self.constants = constants
        self.functions = functions
        self.loc = loc
        self.refs = set()

    def generic_visit(self, node):
        allowed = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name,
                   ast.Attribute, ast.Call, ast.Load) + _BINOPS + _UNARY
        if not isinstance(node, allowed):
            raise _err(f"unsupported syntax: {type(node).__name__}", node, *self.loc)
        return super().generic_visit(node)

    def visit_Constant(self, node):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise _err(f"only numeric literals are allowed, got {node.value!r}", node, *self.loc)
        return node

    def visit_Attribute(self, node):
        if not isinstance(node.value, ast.Name):
            raise _err("signal references must be of the form model.signal", node, *self.loc)
        key = f"{node.value.id}.{node.attr}"
        self.refs.add((node.value.id, node.attr))
        sub = ast.Subscript(value=ast.Name(id=ENV_NAME, ctx=ast.Load()),
                            slice=ast.Constant(value=key), ctx=ast.Load())
        return ast.copy_location(sub, node)

    def visit_Name(self, node):
        if node.id in self.constants:
            return ast.copy_location(ast.Constant(value=float(self.constants[node.id])), node)
        raise _err(f"unknown constant {node.id!r}", node, *self.loc)

    def visit_Call(self, node):
        if not isinstance(node.func, ast.Name) or node.func.id not in self.functions:
            name = getattr(node.func, "id", ast.unparse(node.func))
            raise _err(f"unknown function {name!r}", node, *self.loc)
        if node.keywords:
            raise _err("keyword arguments are not supported", node, *self.loc)
        node.args = [self.visit(a) for a in node.args]
        return node


def parse_expression(text: str, constants: Mapping[str, float] = None,
                     functions: Mapping[str, Callable] = None,
                     line: int = 1, column: int = 0) -> Expr:
    """Parse and compile ``text``.

    ``line``/``column`` locate the expression inside a larger file so parse
    errors point at the right place.
    """
    constants = dict(constants or {})
    functions = dict(functions or {})
    loc = (line - 1, column)
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}",
                          line=(exc.lineno or 1) + loc[0],
                          column=(exc.offset or 1) + column) from None
    rw = _Rewriter(constants, functions, loc)
    tree = ast.fix_missing_locations(rw.visit(tree))
    lam = ast.Expression(body=ast.Lambda(
        args=ast.arguments(posonlyargs=[], args=[ast.arg(arg=ENV_NAME)], kwonlyargs=[],
                           kw_defaults=[], defaults=[]),
        body=tree.body))
    ast.fix_missing_locations(lam)
    fn = eval(compile(lam, f"<coupling: {text}>", "eval"), {"__builtins__": {}, **functions})
    return Expr(text.strip(), frozenset(rw.refs), fn)
