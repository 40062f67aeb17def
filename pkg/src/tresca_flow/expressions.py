"""Tiny arithmetic expression grammar for spatial data in config files.

Grammar: numbers, + - * / ^ (also **), unary minus, sin, cos, exp, tanh, abs,
the constant pi and the coordinates x1..xd.  Expressions parse into both a
vectorized numpy callable and a sympy expression (the latter feeds exact
differentiation for data checks and manufactured forcings).
"""

import ast
from dataclasses import dataclass

import numpy as np
import sympy

_FUNCTIONS = {"sin": sympy.sin, "cos": sympy.cos, "exp": sympy.exp, "tanh": sympy.tanh, "abs": sympy.Abs}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
    ast.BitXor: lambda a, b: a**b,  # '^' means power in the config grammar
}


class ExpressionError(ValueError):
    pass


def _to_sympy(node, symbols):
    if isinstance(node, ast.Expression):
        return _to_sympy(node.body, symbols)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (int, float)):
            return sympy.Float(node.value) if isinstance(node.value, float) else sympy.Integer(node.value)
        raise ExpressionError(f"literal {node.value!r} is not a number")
    if isinstance(node, ast.Name):
        if node.id == "pi":
            return sympy.pi
        if node.id in symbols:
            return symbols[node.id]
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        val = _to_sympy(node.operand, symbols)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_to_sympy(node.left, symbols), _to_sympy(node.right, symbols))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise ExpressionError("only sin, cos, exp, tanh, abs calls are allowed")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        return _FUNCTIONS[node.func.id](_to_sympy(node.args[0], symbols))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)}")


@dataclass(frozen=True)
class Expression:
    """A parsed spatial expression over coordinates x1..x{num_vars}."""

    source: str
    num_vars: int
    sympy_expr: object
    _fn: object

    def __call__(self, *coords):
        """Evaluate on coordinate arrays (one per variable) or a single
        (..., num_vars) stacked array."""
        if len(coords) == 1 and np.asarray(coords[0]).ndim >= 2:
            stacked = np.asarray(coords[0], dtype=float)
            coords = tuple(stacked[..., k] for k in range(self.num_vars))
        if len(coords) != self.num_vars:
            raise ExpressionError(f"expected {self.num_vars} coordinate arrays, got {len(coords)}")
        coords = tuple(np.asarray(c, dtype=float) for c in coords)
        out = self._fn(*coords)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast_shapes(*[c.shape for c in coords])).copy()

    def derivative(self, var_index):
        sym = sympy.Symbol(f"x{var_index + 1}")
        dexpr = sympy.diff(self.sympy_expr, sym)
        return _from_sympy(dexpr, self.num_vars)


def _from_sympy(expr, num_vars):
    syms = [sympy.Symbol(f"x{k + 1}") for k in range(num_vars)]
    fn = sympy.lambdify(syms, expr, modules="numpy")
    return Expression(source=str(expr), num_vars=num_vars, sympy_expr=expr, _fn=fn)


def parse_expression(source, num_vars):
    """Parse a config expression in the coordinates x1..x{num_vars}."""
    if not isinstance(source, str):
        raise ExpressionError(f"expression must be a string, got {type(source).__name__}")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc}") from exc
    symbols = {f"x{k + 1}": sympy.Symbol(f"x{k + 1}") for k in range(num_vars)}
    expr = _to_sympy(tree, symbols)
    return _from_sympy(expr, num_vars)
