"""Arithmetic expressions for user-defined right-hand sides.

Grammar (whitespace is ignored)::

    expr    := term (("+" | "-") term)*
    term    := factor (("*" | "/") factor)*
    factor  := ("+" | "-") factor | power
    power   := atom ("^" factor)?          # right associative; -x^2 == -(x^2)
    atom    := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"
    FUNC    := "sin" | "cos" | "exp" | "log"
    NAME    := "x1" .. "xn" | a parameter name | "pi"

``**`` is accepted as a synonym for ``^``. ``^`` is rewritten to ``**``, the
text is parsed with the standard library :mod:`ast` module, and the tree is
checked node by node against the whitelist above. Anything outside the
grammar (attribute access, other calls, comparisons) raises
:class:`ExpressionError`.
Evaluation is vectorized: each ``xk`` is bound to ``x[..., k-1]``.
"""

import ast
import re

import numpy as np

from ..exceptions import ExpressionError

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log}
CONSTANTS = {"pi": np.pi}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_STATE_RE = re.compile(r"^x([1-9][0-9]*)$")


class Expression:
    """A compiled scalar expression over state components and parameters.

    Parameters
    ----------
    source : str
        Expression text.
    dim : int
        State dimension; ``x1`` .. ``x{dim}`` are valid names.
    params : mapping of str to float, optional
        Named parameters available to the expression.
    """

    def __init__(self, source, dim, params=None):
        self.source = source
        self.dim = int(dim)
        self.params = dict(params or {})
        for name in self.params:
            if _STATE_RE.match(name) or name in FUNCTIONS or name in CONSTANTS:
                raise ExpressionError(f"parameter name {name!r} shadows a reserved name")
        try:
            tree = ast.parse(source.strip().replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self._tree = tree.body
        self._check(self._tree)

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"operator not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ExpressionError(f"unary operator not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(f"literal {node.value!r} is not a real number")
        elif isinstance(node, ast.Name):
            self._resolve_name(node.id)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ExpressionError(f"unknown function in {self.source!r}")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{node.func.id} takes exactly one argument")
            self._check(node.args[0])
        else:
            raise ExpressionError(
                f"construct {type(node).__name__} not allowed in {self.source!r}"
            )

    def _resolve_name(self, name):
        m = _STATE_RE.match(name)
        if m:
            k = int(m.group(1))
            if k > self.dim:
                raise ExpressionError(f"{name} exceeds state dimension {self.dim}")
            return ("x", k - 1)
        if name in self.params:
            return ("p", name)
        if name in CONSTANTS:
            return ("c", name)
        raise ExpressionError(f"unknown name {name!r} in {self.source!r}")

    def _eval(self, node, x):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, x), self._eval(node.right, x))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, x)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            kind, key = self._resolve_name(node.id)
            if kind == "x":
                return x[..., key]
            if kind == "p":
                return float(self.params[key])
            return CONSTANTS[key]
        return FUNCTIONS[node.func.id](self._eval(node.args[0], x))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        value = self._eval(self._tree, x)
        return np.broadcast_to(value, x.shape[:-1]).astype(float, copy=True)

    def __repr__(self):
        return f"Expression({self.source!r})"


def compile_field(sources, params=None):
    """Compile per-component expressions into a vectorized vector field."""
    dim = len(sources)
    if dim == 0:
        raise ExpressionError("right-hand side must have at least one component")
    exprs = [Expression(s, dim, params) for s in sources]

    def field(x):
        x = np.asarray(x, dtype=float)
        return np.stack([e(x) for e in exprs], axis=-1)

    field.expressions = exprs
    return field
