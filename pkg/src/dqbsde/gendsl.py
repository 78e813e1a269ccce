"""Expression language for generator and terminal-condition formulas.

Tokenizer + recursive-descent parser + evaluator for a small fixed
vocabulary: the time variable ``t``, solution components ``y1..yn``,
Brownian rows ``z1..zn`` (usable only inside ``norm``/``norm2``),
terminal inputs ``w1..wd``, elementary functions, and the norm
accessors ``norm(zi)``, ``norm2(zi)``, ``normz`` (Frobenius norm of the
full matrix) and ``normy`` (Euclidean norm of the y vector).

Grammar (standard precedence, ``pow``/``clamp``/``norm`` are calls)::

    expr  := term  (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | atom
    atom  := NUMBER | 't' | 'y'K | 'w'K | 'normz' | 'normy'
           | FUNC '(' expr ')'            FUNC in sin cos exp log abs sign sqrt
           | 'pow' '(' expr ',' expr ')'
           | 'clamp' '(' expr ',' expr ',' expr ')'
           | ('norm' | 'norm2') '(' 'z'K ')'
           | '(' expr ')'

``log`` is the natural logarithm.  Evaluation is elementwise over numpy
arrays, so one AST serves both scalar probing and whole-lattice-layer
batches.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

GENERATOR = "generator"
TERMINAL = "terminal"

UNARY_FUNCS = ("sin", "cos", "exp", "log", "abs", "sign", "sqrt")
_KEYWORDS = set(UNARY_FUNCS) | {"t", "normz", "normy", "pow", "clamp", "norm", "norm2"}

_NUM_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_VAR_RE = re.compile(r"^([yzw])([1-9][0-9]*)$")


class ParseError(Exception):
    """Syntax or vocabulary error, located by character offset."""

    def __init__(self, message: str, position: int, token: str = ""):
        super().__init__(f"{message} at position {position}" + (f" ({token!r})" if token else ""))
        self.message = message
        self.position = position
        self.token = token


class EvalError(Exception):
    """Domain or finiteness error during evaluation, located at an AST node."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.message = message
        self.position = position


# ---------------------------------------------------------------------------
# AST nodes.  ``pos`` is excluded from equality so that pretty-printed and
# reparsed trees compare structurally identical.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(compare=False, repr=False, default=0)


@dataclass(frozen=True)
class TVar:
    pos: int = field(compare=False, repr=False, default=0)


@dataclass(frozen=True)
class YVar:
    index: int  # 1-based
    pos: int = field(compare=False, repr=False, default=0)


@dataclass(frozen=True)
class WVar:
    index: int  # 1-based
    pos: int = field(compare=False, repr=False, default=0)


@dataclass(frozen=True)
class ZRow:
    index: int  # 1-based; only valid as the argument of norm/norm2
    pos: int = field(compare=False, repr=False, default=0)


@dataclass(frozen=True)
class Norm:
    row: ZRow
    squared: bool
    pos: int = field(compare=False, repr=False, default=0)


@dataclass(frozen=True)
class NormZ:
    pos: int = field(compare=False, repr=False, default=0)


@dataclass(frozen=True)
class NormY:
    pos: int = field(compare=False, repr=False, default=0)


@dataclass(frozen=True)
class Neg:
    arg: "Node"
    pos: int = field(compare=False, repr=False, default=0)


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Node"
    pos: int = field(compare=False, repr=False, default=0)


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"
    pos: int = field(compare=False, repr=False, default=0)


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: "Node"
    pos: int = field(compare=False, repr=False, default=0)


@dataclass(frozen=True)
class Clamp:
    arg: "Node"
    lo: "Node"
    hi: "Node"
    pos: int = field(compare=False, repr=False, default=0)


Node = Union[Num, TVar, YVar, WVar, ZRow, Norm, NormZ, NormY, Neg, Func, Bin, Pow, Clamp]


@dataclass(frozen=True)
class Expr:
    """A parsed expression together with its declared dimensions."""

    root: Node
    n: int
    d: int
    context: str
    source: str


def depth(node: Node) -> int:
    """Length of the longest root-to-leaf path, counting nodes."""
    kids = _children(node)
    return 1 + (max(depth(k) for k in kids) if kids else 0)


def _children(node: Node) -> tuple:
    if isinstance(node, Neg):
        return (node.arg,)
    if isinstance(node, Func):
        return (node.arg,)
    if isinstance(node, Bin):
        return (node.left, node.right)
    if isinstance(node, Pow):
        return (node.base, node.exponent)
    if isinstance(node, Clamp):
        return (node.arg, node.lo, node.hi)
    if isinstance(node, Norm):
        return (node.row,)
    return ()


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str  # NUM IDENT OP LPAREN RPAREN COMMA EOF
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i, L = 0, len(text)
    while i < L:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/":
            tokens.append(_Token("OP", c, i))
            i += 1
            continue
        if c == "(":
            tokens.append(_Token("LPAREN", c, i))
            i += 1
            continue
        if c == ")":
            tokens.append(_Token("RPAREN", c, i))
            i += 1
            continue
        if c == ",":
            tokens.append(_Token("COMMA", c, i))
            i += 1
            continue
        m = _NUM_RE.match(text, i)
        if m:
            tokens.append(_Token("NUM", m.group(), i))
            i = m.end()
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            tokens.append(_Token("IDENT", m.group(), i))
            i = m.end()
            continue
        raise ParseError("unexpected character", i, c)
    tokens.append(_Token("EOF", "", L))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str, n: int, d: int, context: str):
        self.text = text
        self.n = n
        self.d = d
        self.context = context
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"expected {what}", tok.pos, tok.text)
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "EOF":
            raise ParseError("unexpected trailing input", tok.pos, tok.text)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().kind == "OP" and self.peek().text in "+-":
            op = self.advance()
            rhs = self.term()
            node = Bin(op.text, node, rhs, pos=op.pos)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek().kind == "OP" and self.peek().text in "*/":
            op = self.advance()
            rhs = self.unary()
            node = Bin(op.text, node, rhs, pos=op.pos)
        return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok.kind == "OP" and tok.text == "-":
            self.advance()
            arg = self.unary()
            if isinstance(arg, Num):  # fold so literals round-trip through pretty()
                return Num(-arg.value, pos=tok.pos)
            return Neg(arg, pos=tok.pos)
        return self.atom()

    def atom(self) -> Node:
        tok = self.peek()
        if tok.kind == "NUM":
            self.advance()
            return Num(float(tok.text), pos=tok.pos)
        if tok.kind == "LPAREN":
            self.advance()
            node = self.expr()
            self.expect("RPAREN", "')'")
            return node
        if tok.kind == "IDENT":
            return self.ident()
        raise ParseError("expected expression", tok.pos, tok.text)

    def ident(self) -> Node:
        tok = self.advance()
        name = tok.text
        if name == "t":
            return TVar(pos=tok.pos)
        if name == "normz":
            self._require_generator(tok)
            return NormZ(pos=tok.pos)
        if name == "normy":
            self._require_generator(tok)
            return NormY(pos=tok.pos)
        if name in UNARY_FUNCS:
            self.expect("LPAREN", "'('")
            arg = self.expr()
            self.expect("RPAREN", "')'")
            return Func(name, arg, pos=tok.pos)
        if name == "pow":
            self.expect("LPAREN", "'('")
            base = self.expr()
            self.expect("COMMA", "','")
            exponent = self.expr()
            self.expect("RPAREN", "')'")
            return Pow(base, exponent, pos=tok.pos)
        if name == "clamp":
            self.expect("LPAREN", "'('")
            arg = self.expr()
            self.expect("COMMA", "','")
            lo = self.expr()
            self.expect("COMMA", "','")
            hi = self.expr()
            self.expect("RPAREN", "')'")
            return Clamp(arg, lo, hi, pos=tok.pos)
        if name in ("norm", "norm2"):
            self.expect("LPAREN", "'('")
            row = self.zrow()
            self.expect("RPAREN", "')'")
            return Norm(row, squared=(name == "norm2"), pos=tok.pos)
        m = _VAR_RE.match(name)
        if m:
            kind, idx = m.group(1), int(m.group(2))
            if kind == "y":
                self._require_generator(tok)
                if idx > self.n:
                    raise ParseError(f"y index out of range (n={self.n})", tok.pos, name)
                return YVar(idx, pos=tok.pos)
            if kind == "w":
                if self.context != TERMINAL:
                    raise ParseError("w variables are terminal-only", tok.pos, name)
                if idx > self.d:
                    raise ParseError(f"w index out of range (d={self.d})", tok.pos, name)
                return WVar(idx, pos=tok.pos)
            raise ParseError("z row reference outside norm()/norm2()", tok.pos, name)
        raise ParseError("unknown identifier", tok.pos, name)

    def zrow(self) -> ZRow:
        tok = self.expect("IDENT", "z row reference")
        m = _VAR_RE.match(tok.text)
        if not m or m.group(1) != "z":
            raise ParseError("expected z row reference", tok.pos, tok.text)
        self._require_generator(tok)
        idx = int(m.group(2))
        if idx > self.n:
            raise ParseError(f"z index out of range (n={self.n})", tok.pos, tok.text)
        return ZRow(idx, pos=tok.pos)

    def _require_generator(self, tok: _Token) -> None:
        if self.context != GENERATOR:
            raise ParseError("y/z variables are generator-only", tok.pos, tok.text)


def parse_expr(text: str, n: int, d: int, context: str = GENERATOR) -> Expr:
    """Parse ``text`` against dimensions (n, d); raises ParseError."""
    if context not in (GENERATOR, TERMINAL):
        raise ValueError(f"unknown context {context!r}")
    root = _Parser(text, n, d, context).parse()
    return Expr(root=root, n=n, d=d, context=context, source=text)


# ---------------------------------------------------------------------------
# Pretty printer.  Output reparses to a structurally identical tree.
# ---------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_ATOM = 1, 2, 3, 9


def pretty(expr: Union[Expr, Node]) -> str:
    node = expr.root if isinstance(expr, Expr) else expr
    return _pp(node, 0)


def _pp(node: Node, min_prec: int) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, TVar):
        return "t"
    if isinstance(node, YVar):
        return f"y{node.index}"
    if isinstance(node, WVar):
        return f"w{node.index}"
    if isinstance(node, NormZ):
        return "normz"
    if isinstance(node, NormY):
        return "normy"
    if isinstance(node, Norm):
        return f"{'norm2' if node.squared else 'norm'}(z{node.row.index})"
    if isinstance(node, Func):
        return f"{node.name}({_pp(node.arg, 0)})"
    if isinstance(node, Pow):
        return f"pow({_pp(node.base, 0)},{_pp(node.exponent, 0)})"
    if isinstance(node, Clamp):
        return f"clamp({_pp(node.arg, 0)},{_pp(node.lo, 0)},{_pp(node.hi, 0)})"
    if isinstance(node, Neg):
        s = "-" + _pp(node.arg, _PREC_NEG + 1)
        return f"({s})" if min_prec > _PREC_NEG else s
    if isinstance(node, Bin):
        if node.op in "+-":
            prec = _PREC_ADD
            s = _pp(node.left, prec) + node.op + _pp(node.right, prec + 1)
        else:
            prec = _PREC_MUL
            s = _pp(node.left, prec) + node.op + _pp(node.right, prec + 1)
        return f"({s})" if min_prec > prec else s
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# Evaluator
# ---------------------------------------------------------------------------

@dataclass
class EvalEnv:
    """Evaluation point(s).

    ``y``/``z``/``w`` may carry leading batch axes: y (..., n),
    z (..., n, d), w (..., d); ``t`` is a scalar or (...,) array.
    """

    t: Union[float, np.ndarray] = 0.0
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float)
        if self.z is not None:
            self.z = np.asarray(self.z, dtype=float)
        if self.w is not None:
            self.w = np.asarray(self.w, dtype=float)


def eval_expr(expr: Expr, env: EvalEnv):
    """Evaluate; returns a float for scalar input, ndarray for batched input.

    Pure function of (expr, env): no state, safe to call concurrently.
    """
    _check_dims(expr, env)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = _ev(expr.root, env)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _check_dims(expr: Expr, env: EvalEnv) -> None:
    if expr.context == GENERATOR:
        if env.y is not None and env.y.shape[-1:] != (expr.n,):
            raise ValueError(f"env.y last axis must have length n={expr.n}")
        if env.z is not None and env.z.shape[-2:] != (expr.n, expr.d):
            raise ValueError(f"env.z must end in shape (n,d)=({expr.n},{expr.d})")
    else:
        if env.w is not None and env.w.shape[-1:] != (expr.d,):
            raise ValueError(f"env.w last axis must have length d={expr.d}")


def _finite(value, node: Node):
    if not np.all(np.isfinite(value)):
        raise EvalError("non-finite result", node.pos)
    return value


def _ev(node: Node, env: EvalEnv):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Bin):
        a = _ev(node.left, env)
        b = _ev(node.right, env)
        if node.op == "+":
            return _finite(np.add(a, b), node)
        if node.op == "-":
            return _finite(np.subtract(a, b), node)
        if node.op == "*":
            return _finite(np.multiply(a, b), node)
        if np.any(np.equal(b, 0.0)):
            raise EvalError("division by zero", node.pos)
        return _finite(np.divide(a, b), node)
    if isinstance(node, Norm):
        z = _need(env.z, node, "z")
        row = z[..., node.row.index - 1, :]
        s = np.sum(row * row, axis=-1)
        return s if node.squared else np.sqrt(s)
    if isinstance(node, NormZ):
        z = _need(env.z, node, "z")
        return np.sqrt(np.sum(z * z, axis=(-2, -1)))
    if isinstance(node, NormY):
        y = _need(env.y, node, "y")
        return np.sqrt(np.sum(y * y, axis=-1))
    if isinstance(node, YVar):
        return _need(env.y, node, "y")[..., node.index - 1]
    if isinstance(node, WVar):
        return _need(env.w, node, "w")[..., node.index - 1]
    if isinstance(node, TVar):
        return env.t
    if isinstance(node, Neg):
        return np.negative(_ev(node.arg, env))
    if isinstance(node, Func):
        x = _ev(node.arg, env)
        name = node.name
        if name == "log":
            if np.any(np.less_equal(x, 0.0)):
                raise EvalError("log of nonpositive value", node.pos)
            return np.log(x)
        if name == "sqrt":
            if np.any(np.less(x, 0.0)):
                raise EvalError("sqrt of negative value", node.pos)
            return np.sqrt(x)
        if name == "exp":
            return _finite(np.exp(x), node)
        if name == "sin":
            return np.sin(x)
        if name == "cos":
            return np.cos(x)
        if name == "abs":
            return np.abs(x)
        return np.sign(x)
    if isinstance(node, Pow):
        base = _ev(node.base, env)
        expo = _ev(node.exponent, env)
        if np.any(np.less(base, 0.0)) and not np.all(np.equal(expo, np.floor(expo))):
            raise EvalError("pow of negative base with non-integer exponent", node.pos)
        return _finite(np.power(base, expo), node)
    if isinstance(node, Clamp):
        return np.clip(_ev(node.arg, env), _ev(node.lo, env), _ev(node.hi, env))
    raise TypeError(f"unknown node {node!r}")


def _need(value, node: Node, what: str):
    if value is None:
        raise EvalError(f"{what} not available in this context", node.pos)
    return value


# ---------------------------------------------------------------------------
# Reference scanning (used for the triangular dependency rule and for
# restricting the own-row part of structured generators)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RefSet:
    y_indices: frozenset
    z_indices: frozenset
    uses_normz: bool
    uses_normy: bool
    uses_w: bool
    uses_t: bool


def scan_refs(node: Node) -> RefSet:
    ys, zs = set(), set()
    flags = {"normz": False, "normy": False, "w": False, "t": False}

    def walk(nd: Node) -> None:
        if isinstance(nd, YVar):
            ys.add(nd.index)
        elif isinstance(nd, ZRow):
            zs.add(nd.index)
        elif isinstance(nd, NormZ):
            flags["normz"] = True
        elif isinstance(nd, NormY):
            flags["normy"] = True
        elif isinstance(nd, WVar):
            flags["w"] = True
        elif isinstance(nd, TVar):
            flags["t"] = True
        for kid in _children(nd):
            walk(kid)

    walk(node)
    return RefSet(frozenset(ys), frozenset(zs), flags["normz"], flags["normy"],
                  flags["w"], flags["t"])


# ---------------------------------------------------------------------------
# Generator models and the built-in catalog
# ---------------------------------------------------------------------------

STRUCTURED = "structured"
TRIANGULAR = "triangular"


@dataclass(frozen=True)
class GeneratorModel:
    """Parsed per-component drivers.

    ``structured`` components split into an own-row part ``g[i]`` and a
    coupling part ``h[i]``; ``triangular`` components carry a single
    expression ``k[i]``.
    """

    kind: str
    n: int
    d: int
    g: Optional[tuple] = None
    h: Optional[tuple] = None
    k: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == STRUCTURED:
            if self.g is None or self.h is None or len(self.g) != self.n or len(self.h) != self.n:
                raise ValueError("structured generator needs n g- and h-expressions")
        elif self.kind == TRIANGULAR:
            if self.k is None or len(self.k) != self.n:
                raise ValueError("triangular generator needs n k-expressions")
        else:
            raise ValueError(f"unknown generator kind {self.kind!r}")

    def y_dependent(self) -> bool:
        exprs = self.k if self.kind == TRIANGULAR else tuple(self.g) + tuple(self.h)
        for e in exprs:
            refs = scan_refs(e.root)
            if refs.y_indices or refs.uses_normy:
                return True
        return False


@dataclass(frozen=True)
class DepViolation:
    component: int  # 1-based
    name: str       # offending variable, e.g. "z3" or "normz"


def check_triangular_deps(gen: GeneratorModel) -> list[DepViolation]:
    """Scan a triangular generator for out-of-order references.

    Component i may reference only y1..yi and z rows 1..i; the
    whole-state accessors normy/normz count as referencing everything,
    so they are admissible only in the last component.
    """
    if gen.kind != TRIANGULAR:
        raise ValueError("not triangular")
    violations = []
    for i, expr in enumerate(gen.k, start=1):
        refs = scan_refs(expr.root)
        for j in sorted(refs.y_indices):
            if j > i:
                violations.append(DepViolation(i, f"y{j}"))
        for j in sorted(refs.z_indices):
            if j > i:
                violations.append(DepViolation(i, f"z{j}"))
        if i < gen.n:
            if refs.uses_normy:
                violations.append(DepViolation(i, "normy"))
            if refs.uses_normz:
                violations.append(DepViolation(i, "normz"))
    return violations


CATALOG_NAMES = ("pure_quadratic", "linear", "remark22", "triangular_demo")


def catalog_generator(name: str, params: Optional[dict] = None) -> GeneratorModel:
    """Build a named generator from the built-in catalog.

    params: ``n`` (required), ``d`` (default 1), plus per-entry constants:
    ``gamma`` (pure_quadratic), ``a``/``c`` (linear), ``delta`` (remark22).
    """
    params = dict(params or {})
    if name not in CATALOG_NAMES:
        raise ValueError(f"unknown catalog generator {name!r}")
    try:
        n = int(params.pop("n"))
    except KeyError:
        raise ValueError(f"catalog generator {name!r} needs parameter 'n'") from None
    d = int(params.pop("d", 1))

    def gexpr(text: str) -> Expr:
        return parse_expr(text, n, d, GENERATOR)

    if name == "pure_quadratic":
        if "gamma" not in params:
            raise ValueError("pure_quadratic needs parameter 'gamma'")
        gamma = float(params.pop("gamma"))
        _reject_extra(name, params)
        g = tuple(gexpr(f"{gamma / 2.0!r}*norm2(z{i})") for i in range(1, n + 1))
        h = tuple(gexpr("0") for _ in range(n))
        return GeneratorModel(STRUCTURED, n, d, g=g, h=h)
    if name == "linear":
        a = float(params.pop("a", 0.0))
        c = float(params.pop("c", 0.0))
        _reject_extra(name, params)
        g = tuple(gexpr("0") for _ in range(n))
        h = tuple(gexpr(f"{a!r}*y{i} + {c!r}") for i in range(1, n + 1))
        return GeneratorModel(STRUCTURED, n, d, g=g, h=h)
    if name == "remark22":
        if "delta" not in params:
            raise ValueError("remark22 needs parameter 'delta'")
        delta = float(params.pop("delta"))
        _reject_extra(name, params)
        g = tuple(gexpr(f"norm2(z{i})*sin(log(norm(z{i})+1))") for i in range(1, n + 1))
        h = tuple(gexpr(f"normy + sin(pow(normz,{1.0 + delta!r})) + log(normz+1)")
                  for _ in range(n))
        return GeneratorModel(STRUCTURED, n, d, g=g, h=h)
    # triangular_demo: own-row quadratic plus a feed from the previous component
    _reject_extra(name, params)
    k = [gexpr("0.5*norm2(z1)")]
    for i in range(2, n + 1):
        k.append(gexpr(f"y{i - 1} + 0.5*norm2(z{i})"))
    return GeneratorModel(TRIANGULAR, n, d, k=tuple(k))


def _reject_extra(name: str, params: dict) -> None:
    if params:
        raise ValueError(f"unknown parameter(s) for {name!r}: {sorted(params)}")
