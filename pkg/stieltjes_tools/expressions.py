"""
Integrand specifications for the command line: constants, piecewise-constant
tables and arithmetic expressions in one time variable.

Expressions are parsed with the ast module and only a small grammar is
accepted: numbers, the variable t (or s), + - * / **, unary minus, the
constants pi and e, and the functions exp, log, sqrt, sin, cos, abs, min, max.
"""

import ast
import logging
import math
from typing import Any, Callable, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from stieltjes_tools.errors import InputError
from stieltjes_tools.ls_measure import Integrand
from stieltjes_tools.utils import get_default_logger


_LOG = get_default_logger(__name__)
_LOG.setLevel(logging.INFO)

_VARIABLES = ("t", "s")

_CONSTANTS = {"pi": math.pi, "e": math.e}

_FUNCTIONS: Dict[str, Callable] = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
}

_BINARY = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _compile(node: ast.AST) -> Tuple[Callable[[np.ndarray], Any], Optional[int]]:
    """
    Turns an AST node into (evaluator, polynomial degree or None).
    """
    if isinstance(node, ast.Expression):
        return _compile(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        value = float(node.value)
        return (lambda t: value), 0
    if isinstance(node, ast.Name):
        if node.id in _VARIABLES:
            return (lambda t: t), 1
        if node.id in _CONSTANTS:
            value = _CONSTANTS[node.id]
            return (lambda t: value), 0
        raise InputError(f"Unknown name in expression: {node.id}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner, degree = _compile(node.operand)
        if isinstance(node.op, ast.UAdd):
            return inner, degree
        return (lambda t: -inner(t)), degree
    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
        op = _BINARY[type(node.op)]
        left, left_degree = _compile(node.left)
        right, right_degree = _compile(node.right)
        degree = _binary_degree(node, left_degree, right_degree)
        return (lambda t: op(left(t), right(t))), degree
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        if node.func.id not in _FUNCTIONS or node.keywords:
            raise InputError(f"Unsupported function in expression: {node.func.id}")
        func = _FUNCTIONS[node.func.id]
        args = [_compile(arg)[0] for arg in node.args]
        if func in (np.minimum, np.maximum):
            if len(args) != 2:
                raise InputError(f"{node.func.id} takes two arguments")
            return (lambda t: func(args[0](t), args[1](t))), None
        if len(args) != 1:
            raise InputError(f"{node.func.id} takes one argument")
        return (lambda t: func(args[0](t))), None
    raise InputError(f"Unsupported expression element: {ast.dump(node)}")


def _binary_degree(
    node: ast.BinOp, left: Optional[int], right: Optional[int]
) -> Optional[int]:
    if left is None or right is None:
        return None
    if isinstance(node.op, (ast.Add, ast.Sub)):
        return max(left, right)
    if isinstance(node.op, ast.Mult):
        return left + right
    if isinstance(node.op, ast.Div):
        return left if right == 0 else None
    # Power: polynomial only for a literal non-negative integer exponent.
    exponent = node.right
    if (
        right == 0
        and isinstance(exponent, ast.Constant)
        and isinstance(exponent.value, (int, float))
        and float(exponent.value).is_integer()
        and exponent.value >= 0
    ):
        return left * int(exponent.value)
    return None


def parse_expression(text: str) -> Integrand:
    """
    Parses an arithmetic expression in t into an Integrand.

    :param text: The expression, e.g. "1 + 2*t**2".
    :returns: A vectorized integrand with a degree hint when polynomial.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as e:
        raise InputError(f"Cannot parse expression {text!r}: {e.msg}") from e
    evaluator, degree = _compile(tree)
    _LOG.debug("Parsed expression %r with degree %s", text, degree)

    def func(t):
        t = np.asarray(t, dtype=float)
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(evaluator(t), dtype=float), t.shape)

    return Integrand(func, degree=degree, name=text.strip())


def parse_table(text: str) -> Integrand:
    """
    Parses "t0:v0,t1:v1,..." into a left-constant integrand.
    """
    try:
        pairs = [item.split(":") for item in text.split(",") if item.strip()]
        breaks = [float(t) for t, _ in pairs]
        values = [float(v) for _, v in pairs]
    except ValueError as e:
        raise InputError(f"Malformed piecewise-constant table {text!r}") from e
    return Integrand.left_constant(breaks, values)


IntegrandSpec = Union[str, float, int, Mapping[str, Any]]


def parse_integrand_spec(spec: IntegrandSpec) -> Integrand:
    """
    Builds an integrand from a command-line or JSON specification.

    Accepted forms: a number; "const:<c>"; "table:t0:v0,t1:v1,..."; "expr:<e>"
    or a bare expression; or a mapping with one of the keys "constant",
    "table" (list of [t, v] pairs) or "expr".

    :param spec: The specification.
    :returns: The integrand.
    """
    if isinstance(spec, (int, float)):
        return Integrand.constant(float(spec))
    if isinstance(spec, Mapping):
        if "constant" in spec:
            return Integrand.constant(float(spec["constant"]))
        if "table" in spec:
            table = [(float(t), float(v)) for t, v in spec["table"]]
            return Integrand.left_constant([t for t, _ in table], [v for _, v in table])
        if "expr" in spec:
            return parse_expression(str(spec["expr"]))
        raise InputError(f"Unknown integrand specification: {dict(spec)}")
    text = str(spec).strip()
    if text.startswith("const:"):
        text = text[len("const:") :]
    elif text.startswith("table:"):
        return parse_table(text[len("table:") :])
    elif text.startswith("expr:"):
        return parse_expression(text[len("expr:") :])
    try:
        return Integrand.constant(float(text))
    except ValueError:
        return parse_expression(text)
