"""Whitelisted arithmetic expressions over numpy arrays.

Used for kernel expressions and for scalar fields in configuration files.
Only arithmetic, comparisons, conditional expressions and a fixed set of
numpy functions are accepted; comparisons yield 0/1 so indicators can be
written as ``(d <= delta)``.
"""

from __future__ import annotations

import ast

import numpy as np

FUNCTIONS = {"log": np.log, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs,
             "sin": np.sin, "cos": np.cos, "where": np.where,
             "minimum": np.minimum, "maximum": np.maximum}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Compare, ast.BoolOp, ast.Call,
          ast.Name, ast.Load, ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div,
          ast.Pow, ast.USub, ast.UAdd, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq,
          ast.NotEq, ast.BitAnd, ast.BitOr, ast.IfExp)


class SafeExpression:
    """Compiled expression restricted to ``variables`` and :data:`FUNCTIONS`."""

    def __init__(self, text: str, variables):
        tree = ast.parse(text, mode="eval")
        allowed = set(variables) | set(FUNCTIONS)
        for node in ast.walk(tree):
            if not isinstance(node, _NODES):
                raise ValueError(f"disallowed syntax in expression: {type(node).__name__}")
            if isinstance(node, ast.Name) and node.id not in allowed:
                raise ValueError(f"unknown name {node.id!r} in expression")
            if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name)
                                                   and node.func.id in FUNCTIONS):
                raise ValueError("only the listed functions may be called")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ValueError("only numeric constants are allowed")
        self.text = text
        self.names = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
        self._code = compile(tree, "<expression>", "eval")

    def __call__(self, **env) -> np.ndarray:
        scope = dict(FUNCTIONS, **env)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.asarray(eval(self._code, {"__builtins__": {}}, scope), dtype=float)
