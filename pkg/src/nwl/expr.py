"""Symbol expressions over the wavenumber ``xi``.

The grammar is deliberately tiny: numbers, ``xi``, ``pi``, the binary
operators ``+ - * / ^`` (``**`` also accepted), unary minus, and the
functions ``exp`` and ``sqrt``.  Expressions are parsed with :mod:`ast`
and evaluated by walking the tree, so nothing outside the whitelist can
execute.
"""
import ast
import math

import numpy as np

from .errors import ExpressionError

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_FUNCS = {"exp": np.exp, "sqrt": np.sqrt}
_CONSTS = {"pi": math.pi}


def parse_symbol(text):
    """Compile ``text`` into a vectorized function of ``xi``."""
    source = text.replace("^", "**").replace("ξ", "xi")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse symbol {text!r}: {exc.msg}",
                              expression=text) from None
    _check(tree.body, text)

    def symbol(xi):
        xi = np.asarray(xi, dtype=float)
        with np.errstate(all="ignore"):
            value = _eval(tree.body, xi)
        return np.broadcast_to(np.asarray(value, dtype=float), xi.shape).copy()

    return symbol


def _check(node, text):
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left, text)
        _check(node.right, text)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _check(node.operand, text)
    elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        pass
    elif isinstance(node, ast.Name) and (node.id in _CONSTS or node.id == "xi"):
        pass
    elif (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
          and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
        _check(node.args[0], text)
    else:
        raise ExpressionError(
            f"unsupported construct {ast.dump(node)[:40]!r} in symbol {text!r}",
            expression=text)


def _eval(node, xi):
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, xi), _eval(node.right, xi))
    if isinstance(node, ast.UnaryOp):
        operand = _eval(node.operand, xi)
        return -operand if isinstance(node.op, ast.USub) else operand
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return xi if node.id == "xi" else _CONSTS[node.id]
    return _FUNCS[node.func.id](_eval(node.args[0], xi))
