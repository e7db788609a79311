"""Weight expression grammar.

A weight is a real expression in the real coordinates of ℂⁿ::

    expr   := expr ('+'|'-'|'*'|'/') expr | expr ('^'|'**') expr | '-' expr
            | number | x<j> | y<j> | |z<j>| | |w<j>|
            | exp(expr) | log(expr) | sqrt(expr) | abs(expr) | (expr)

``z_j = x_j + i y_j`` with ``1 <= j <= n``; ``|z1|^2`` is the squared modulus.
When the weight lives on a product ``ℂⁿ × ℂᵐ`` the fiber coordinates are written
``w<j>`` / ``u<j>`` / ``v<j>`` (``w_j = u_j + i v_j``) and occupy slots ``n+1..n+m``.
``log`` and ``sqrt`` arguments must be positive where the weight is evaluated; this
is checked at evaluation time.
"""

from __future__ import annotations

import ast
import re

import sympy as sp

from .errors import InputError

_FUNCS = {"exp": sp.exp, "log": sp.log, "sqrt": sp.sqrt}
_NAME = re.compile(r"^([xyzuvw])(\d+)$")
_BAR = re.compile(r"\|\s*([zw]\d+)\s*\|")


class _Builder:
    def __init__(self, n: int, m: int):
        self.n, self.m = n, m
        self.x = sp.symbols(f"x1:{n + m + 1}", real=True)
        self.y = sp.symbols(f"y1:{n + m + 1}", real=True)

    def slot(self, letter: str, j: int) -> int:
        if letter in "xyz":
            if not 1 <= j <= self.n:
                raise InputError(f"variable {letter}{j} outside 1..{self.n}")
            return j - 1
        if not 1 <= j <= self.m:
            raise InputError(f"fiber variable {letter}{j} outside 1..{self.m}")
        return self.n + j - 1

    def build(self, node):
        if isinstance(node, ast.Expression):
            return self.build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return sp.nsimplify(node.value) if isinstance(node.value, int) else sp.Float(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = self.build(node.operand)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.BinOp):
            a, b = self.build(node.left), self.build(node.right)
            ops = {ast.Add: lambda: a + b, ast.Sub: lambda: a - b, ast.Mult: lambda: a * b,
                   ast.Div: lambda: a / b, ast.Pow: lambda: a ** b}
            for kind, fn in ops.items():
                if isinstance(node.op, kind):
                    return fn()
            raise InputError(f"operator {type(node.op).__name__} not allowed")
        if isinstance(node, ast.Name):
            mt = _NAME.match(node.id)
            if not mt:
                raise InputError(f"unknown name {node.id!r}")
            letter, j = mt.group(1), int(mt.group(2))
            if letter in "zw":
                raise InputError(f"complex variable {node.id} must appear inside |...|")
            k = self.slot(letter, j)
            return self.x[k] if letter in "xu" else self.y[k]
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and len(node.args) == 1 and not node.keywords:
            name, arg = node.func.id, node.args[0]
            if name == "abs":
                if isinstance(arg, ast.Name) and arg.id[0] in "zw":
                    mt = _NAME.match(arg.id)
                    if not mt:
                        raise InputError(f"unknown name {arg.id!r}")
                    k = self.slot(mt.group(1), int(mt.group(2)))
                    return sp.sqrt(self.x[k] ** 2 + self.y[k] ** 2)
                return sp.Abs(self.build(arg))
            if name in _FUNCS:
                return _FUNCS[name](self.build(arg))
            raise InputError(f"function {name!r} not allowed")
        raise InputError(f"construct {ast.dump(node)[:40]!r} not allowed")


def parse_weight(text: str, n: int, m: int = 0):
    """Parse ``text`` into (sympy expression, x symbols, y symbols).

    Raises :class:`InputError` on anything outside the grammar.
    """
    if not isinstance(text, str) or not text.strip():
        raise InputError("weight expression must be a non-empty string")
    src = _BAR.sub(r"abs(\1)", text).replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise InputError(f"malformed weight expression {text!r}: {exc.msg}") from None
    b = _Builder(n, m)
    expr = b.build(tree)
    if expr.has(sp.I) or expr.has(sp.zoo) or expr.has(sp.nan):
        raise InputError(f"weight expression {text!r} is not real-valued")
    return expr, b.x, b.y
