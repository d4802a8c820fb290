"""Safe arithmetic-expression parsing for user-supplied fields.

Expressions are parsed with :mod:`ast` against a whitelist and converted
node by node into :mod:`sympy` trees; nothing is ever passed to ``eval``.
``^`` is accepted as a power operator.
"""

from __future__ import annotations

import ast

import numpy as np
import sympy as sp

from .errors import ValidationError

_FUNCTIONS = {
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sin": sp.sin,
    "cos": sp.cos,
    "tanh": sp.tanh,
}
_BUILTIN_CONSTANTS = {"pi": sp.pi, "e": sp.E}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def parse(text, variables, constants=None):
    """Parse ``text`` into a sympy expression over ``variables``.

    ``constants`` maps names to numeric values that are substituted
    immediately. Unknown names raise :class:`ValidationError`.
    """
    constants = dict(constants or {})
    symbols = {name: sp.Symbol(name, real=True) for name in variables}
    try:
        # ``^`` must bind like ``**``, not like Python's xor
        tree = ast.parse(str(text).strip().replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return sp.Integer(node.value) if isinstance(node.value, int) else sp.Float(node.value)
        if isinstance(node, ast.Name):
            if node.id in symbols:
                return symbols[node.id]
            if node.id in constants:
                return sp.Float(constants[node.id])
            if node.id in _BUILTIN_CONSTANTS:
                return _BUILTIN_CONSTANTS[node.id]
            raise ValidationError(f"unknown name {node.id!r} in expression {text!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](build(node.left), build(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            operand = build(node.operand)
            return -operand if isinstance(node.op, ast.USub) else operand
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCTIONS
            and len(node.args) == 1
            and not node.keywords
        ):
            return _FUNCTIONS[node.func.id](build(node.args[0]))
        raise ValidationError(
            f"unsupported syntax {type(node).__name__} in expression {text!r}"
        )

    return build(tree)


def compile_expr(expr, variables):
    """Vectorised numpy callable for ``expr`` taking one array per variable."""
    symbols = [sp.Symbol(name, real=True) for name in variables]
    fn = sp.lambdify(symbols, expr, modules="numpy")

    def evaluate(*args):
        out = fn(*args)
        shape = np.broadcast_shapes(*(np.shape(a) for a in args)) if args else ()
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    return evaluate
