"""Arithmetic expressions over x and t for config-supplied data functions.

Grammar, lowest precedence first::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?          # right associative
    atom   := NUMBER | "x" | "t" | FUNC "(" expr ")" | "(" expr ")"

FUNC is one of sin, cos, exp, abs. Error positions are 1-based character
offsets; the end of input is ``len(text) + 1``.
"""
import re

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}
VARIABLES = ("x", "t")

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


class ExpressionError(ValueError):
    pass


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, position, expected, found=None):
        self.position = position
        self.expected = tuple(expected)
        self.found = found
        what = "end of input" if found is None else repr(found)
        super().__init__(f"position {position}: expected {' or '.join(self.expected)}, found {what}")


class UnknownIdentifier(ExpressionError):
    def __init__(self, name, position):
        self.name = name
        self.position = position
        super().__init__(f"position {position}: unknown identifier {name!r}")


class EvaluationError(ArithmeticError):
    pass


class Num:
    def __init__(self, value):
        self.value = float(value)

    def eval(self, env):
        return self.value

    def __str__(self):
        return repr(self.value) if self.value >= 0 else f"({self.value!r})"

    def __eq__(self, other):
        return isinstance(other, Num) and self.value == other.value


class Var:
    def __init__(self, name):
        self.name = name

    def eval(self, env):
        return env[self.name]

    def __str__(self):
        return self.name

    def __eq__(self, other):
        return isinstance(other, Var) and self.name == other.name


class Neg:
    def __init__(self, arg):
        self.arg = arg

    def eval(self, env):
        return -self.arg.eval(env)

    def __str__(self):
        return f"(-{self.arg})"

    def __eq__(self, other):
        return isinstance(other, Neg) and self.arg == other.arg


class Bin:
    def __init__(self, op, left, right):
        self.op, self.left, self.right = op, left, right

    def eval(self, env):
        a, b = self.left.eval(env), self.right.eval(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            if np.any(np.asarray(b) == 0.0):
                raise EvaluationError(f"division by zero in {self}")
            return a / b
        with np.errstate(all="ignore"):
            return np.power(a, b)

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"

    def __eq__(self, other):
        return (
            isinstance(other, Bin)
            and self.op == other.op
            and self.left == other.left
            and self.right == other.right
        )


class Call:
    def __init__(self, name, arg):
        self.name, self.arg = name, arg

    def eval(self, env):
        with np.errstate(over="ignore"):
            return FUNCTIONS[self.name](self.arg.eval(env))

    def __str__(self):
        return f"{self.name}({self.arg})"

    def __eq__(self, other):
        return isinstance(other, Call) and self.name == other.name and self.arg == other.arg


def _tokenize(text):
    tokens, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionSyntaxError(start + 1, ["number", "name", "operator"], text[start])
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start + 1))
        pos = m.end()
    tokens.append(("end", None, len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ExpressionSyntaxError(pos, [repr(op)], val)
        self.take()

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(pos, ["operator", "end of input"], val)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in VARIABLES:
                return Var(val)
            if val in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            raise UnknownIdentifier(val, pos)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExpressionSyntaxError(pos, ["number", "x", "t", "function", "'('"], val)


class Expression:
    """Parsed expression; call it as ``expr(x, t=0.0)`` with scalars or arrays."""

    def __init__(self, text, tree):
        self.text = text
        self.tree = tree

    def __call__(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        value = self.tree.eval({"x": x, "t": np.asarray(t, dtype=float)})
        return np.broadcast_to(np.asarray(value, dtype=float), np.broadcast(x, np.asarray(t)).shape).copy()

    def uses(self, name):
        return re.search(rf"\b{name}\b", str(self.tree)) is not None

    def __str__(self):
        return str(self.tree)

    def __repr__(self):
        return f"Expression({self.text!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and self.tree == other.tree

    def __hash__(self):
        return hash(str(self.tree))


def parse_expression(text):
    if not isinstance(text, str) or text.strip() == "":
        raise ExpressionSyntaxError(1, ["expression"])
    return Expression(text, _Parser(text).parse())
