"""A small expression language for driver components g_k(t, y, z).

Grammar (EBNF, see docs/grammar.md for the commented version)::

    generator = expr { ";" expr } ;
    expr      = term { ("+" | "-") term } ;
    term      = unary { ("*" | "/") unary } ;
    unary     = "-" unary | atom ;
    atom      = NUMBER | "t" | yref | zref | call | "(" expr ")" ;
    yref      = "y" "[" INT "]" ;
    zref      = "z" "[" INT "]" "[" INT "]" ;
    call      = FUNC "(" expr { "," expr } ")" ;
    FUNC      = "abs" | "pos" | "neg" | "exp" | "sqrt" | "max" | "min" ;

Indices are 1-based as in the mathematical notation: y[1]..y[n],
z[j][l] for component row j and Brownian column l.  ``pos`` is the
positive part x+, ``neg`` the negative part x-.  The language is
total-function only — no conditionals, no loops — so occurrence
analysis and sampling-based falsification stay tractable.
"""

import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EvaluationError

_FUNCS = {"abs": 1, "pos": 1, "neg": 1, "exp": 1, "sqrt": 1, "max": 2, "min": 2}

_TOKEN_RE = re.compile(r"""
    (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[()\[\],;+\-*/])
  | (?P<ws>\s+)
""", re.VERBOSE)


class ParseError(ConfigError):
    def __init__(self, message, line, col):
        super().__init__("%s (line %d, column %d)" % (message, line, col))
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(source):
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError("unexpected character %r" % source[pos], line, col)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            tokens.append(Token(kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# AST nodes are plain tuples:
#   ("num", value)            ("t",)
#   ("y", j)                  ("z", j, l)        (1-based indices)
#   ("neg", a)                unary minus
#   ("add"|"sub"|"mul"|"div", a, b)
#   ("call", name, (args...))

class _Parser:
    def __init__(self, tokens, n, d):
        self.toks = tokens
        self.i = 0
        self.n = n
        self.d = d

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        tok = self.next()
        if tok.text != text:
            raise ParseError("expected %r, found %r" % (text, tok.text or "end"),
                             tok.line, tok.col)
        return tok

    def parse_expr(self):
        node = self.parse_term()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            rhs = self.parse_term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def parse_term(self):
        node = self.parse_unary()
        while self.peek().text in ("*", "/"):
            tok = self.next()
            rhs = self.parse_unary()
            if tok.text == "/" and rhs[0] == "num" and rhs[1] == 0.0:
                raise ParseError("division by literal zero", tok.line, tok.col)
            node = ("mul" if tok.text == "*" else "div", node, rhs)
        return node

    def parse_unary(self):
        if self.peek().text == "-":
            self.next()
            return ("neg", self.parse_unary())
        return self.parse_atom()

    def parse_atom(self):
        tok = self.next()
        if tok.kind == "num":
            return ("num", float(tok.text))
        if tok.text == "(":
            node = self.parse_expr()
            self.expect(")")
            return node
        if tok.kind == "name":
            return self.parse_name(tok)
        raise ParseError("unexpected token %r" % (tok.text or "end"),
                         tok.line, tok.col)

    def parse_name(self, tok):
        name = tok.text
        if name == "t":
            return ("t",)
        if name == "y":
            j = self.parse_index(tok, self.n, "y")
            return ("y", j)
        if name == "z":
            j = self.parse_index(tok, self.n, "z")
            l = self.parse_index(tok, self.d, "z")
            return ("z", j, l)
        if name in _FUNCS:
            self.expect("(")
            args = [self.parse_expr()]
            while self.peek().text == ",":
                self.next()
                args.append(self.parse_expr())
            self.expect(")")
            if len(args) != _FUNCS[name]:
                raise ParseError("%s expects %d argument(s), got %d"
                                 % (name, _FUNCS[name], len(args)),
                                 tok.line, tok.col)
            return ("call", name, tuple(args))
        raise ParseError("unknown identifier %r" % name, tok.line, tok.col)

    def parse_index(self, tok, bound, var):
        self.expect("[")
        idx = self.next()
        if idx.kind != "num" or "." in idx.text or "e" in idx.text.lower():
            raise ParseError("%s index must be an integer literal" % var,
                             idx.line, idx.col)
        j = int(idx.text)
        if not (1 <= j <= bound):
            raise ParseError("%s index %d out of range 1..%d" % (var, j, bound),
                             idx.line, idx.col)
        self.expect("]")
        return j


@dataclass(frozen=True)
class GeneratorAst:
    """Parsed driver: one expression tree per component."""
    n: int
    d: int
    components: tuple

    def evaluate(self, t, y, z):
        """Vectorized evaluation; y is (M, n), z is (M, n, d) -> (M, n)."""
        M = y.shape[0]
        out = np.empty((M, self.n))
        for k, tree in enumerate(self.components):
            vals = _eval_node(tree, t, y, z)
            vals = np.broadcast_to(vals, (M,))
            if not np.all(np.isfinite(vals)):
                raise EvaluationError(
                    "driver component %d evaluated to a non-finite value" % (k + 1),
                    component=k)
            out[:, k] = vals
        return out

    def sources(self):
        return [pretty_print(tree) for tree in self.components]


def parse_generator(source, n, d):
    """Parse ';'-separated component expressions into a GeneratorAst."""
    parts = source.split(";")
    if len(parts) != n:
        raise ConfigError("expected %d component expression(s), got %d"
                          % (n, len(parts)))
    comps = []
    for part in parts:
        parser = _Parser(_tokenize(part), n, d)
        tree = parser.parse_expr()
        tail = parser.peek()
        if tail.kind != "eof":
            raise ParseError("trailing input %r" % tail.text, tail.line, tail.col)
        comps.append(tree)
    return GeneratorAst(n=n, d=d, components=tuple(comps))


def _eval_node(node, t, y, z):
    op = node[0]
    if op == "num":
        return node[1]
    if op == "t":
        return t
    if op == "y":
        return y[:, node[1] - 1]
    if op == "z":
        return z[:, node[1] - 1, node[2] - 1]
    if op == "neg":
        return -_eval_node(node[1], t, y, z)
    if op in ("add", "sub", "mul", "div"):
        a = _eval_node(node[1], t, y, z)
        b = _eval_node(node[2], t, y, z)
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        with np.errstate(divide="ignore", invalid="ignore"):
            return a / b
    name, args = node[1], node[2]
    a = _eval_node(args[0], t, y, z)
    if name == "abs":
        return np.abs(a)
    if name == "pos":
        return np.maximum(a, 0.0)
    if name == "neg":
        return np.maximum(-a, 0.0)
    if name == "exp":
        return np.exp(a)
    if name == "sqrt":
        with np.errstate(invalid="ignore"):
            return np.sqrt(a)
    b = _eval_node(args[1], t, y, z)
    if name == "max":
        return np.maximum(a, b)
    return np.minimum(a, b)


_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3}


def pretty_print(node):
    """Render a tree back to source; re-parsing gives an identical tree."""
    return _pp(node, 0)


def _pp(node, parent_prec):
    op = node[0]
    if op == "num":
        return repr(node[1])
    if op == "t":
        return "t"
    if op == "y":
        return "y[%d]" % node[1]
    if op == "z":
        return "z[%d][%d]" % (node[1], node[2])
    if op == "call":
        return "%s(%s)" % (node[1], ", ".join(_pp(a, 0) for a in node[2]))
    if op == "neg":
        text = "-" + _pp(node[1], _PREC["neg"])
        return "(%s)" % text if parent_prec >= _PREC["neg"] else text
    sym = {"add": " + ", "sub": " - ", "mul": "*", "div": "/"}[op]
    prec = _PREC[op]
    # the right operand always gets the tighter context: the parser is
    # left-associative, so a right-nested tree must keep its parentheses
    left = _pp(node[1], prec - 1)
    right = _pp(node[2], prec)
    text = left + sym + right
    return "(%s)" % text if parent_prec >= prec else text


def eval_generator(ast, t, y, z):
    """Evaluate the parsed driver at a single point (y in R^n, z in R^{n x d})."""
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    z = np.asarray(z, dtype=np.float64).reshape(ast.n, ast.d)
    return ast.evaluate(float(t), y[None, :], z[None, :, :])[0]


@dataclass(frozen=True)
class StructureFlags:
    """Syntactic occurrence per component: conservative absence certificates.

    ``uses_y[k][j]`` / ``uses_z[k][j]`` say whether y[j+1] / row z[j+1][*]
    occurs in component k+1.  A variable not occurring is certainly absent;
    occurrence does not prove real dependence (e.g. "0*y[1]").
    """
    uses_t: tuple
    uses_y: tuple
    uses_z: tuple


def analyze_structure(ast):
    uses_t, uses_y, uses_z = [], [], []
    for tree in ast.components:
        t_flag = [False]
        y_flags = [False] * ast.n
        z_flags = [False] * ast.n
        _walk(tree, t_flag, y_flags, z_flags)
        uses_t.append(t_flag[0])
        uses_y.append(tuple(y_flags))
        uses_z.append(tuple(z_flags))
    return StructureFlags(uses_t=tuple(uses_t), uses_y=tuple(uses_y),
                          uses_z=tuple(uses_z))


def _walk(node, t_flag, y_flags, z_flags):
    op = node[0]
    if op == "t":
        t_flag[0] = True
    elif op == "y":
        y_flags[node[1] - 1] = True
    elif op == "z":
        z_flags[node[1] - 1] = True
    elif op == "neg":
        _walk(node[1], t_flag, y_flags, z_flags)
    elif op in ("add", "sub", "mul", "div"):
        _walk(node[1], t_flag, y_flags, z_flags)
        _walk(node[2], t_flag, y_flags, z_flags)
    elif op == "call":
        for a in node[2]:
            _walk(a, t_flag, y_flags, z_flags)


def dsl_generator(source, n, d, lipschitz_bound=None, domain_box=None):
    """GeneratorSpec wrapping a parsed DSL driver."""
    from .core import GeneratorSpec
    ast = parse_generator(source, n, d)
    return GeneratorSpec(n=n, d=d, kind="dsl", params={"ast": ast},
                         lipschitz_bound=lipschitz_bound, domain_box=domain_box)
