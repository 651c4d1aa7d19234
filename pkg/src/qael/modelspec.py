"""Model files: a small operator-expression language plus a JSON container.

Grammar::

    expr    := term (("+" | "-") term)*
    term    := unary ("*" unary)*
    unary   := "-" unary | postfix
    postfix := atom ("'")*
    atom    := number | name "(" args ")" | name | "(" expr ")"

Numbers are decimal literals with an optional ``i`` suffix for imaginary
values. ``'`` is the Hermitian adjoint. Two-level builtins use the basis
order ``|g> = 0``, ``|e> = 1``; ``kron(A, B)`` puts ``A`` on the slow
(left) index.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
import scipy.linalg

from .config import DEFAULT, Tolerances
from .errors import DimensionError, ModelError, ParseError
from .operators import LindbladGenerator, hermiticity_defect, is_hermitian


# -- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: complex
    pos: tuple = field(default=(1, 1), compare=False, repr=False)


@dataclass(frozen=True)
class Sym:
    name: str
    pos: tuple = field(default=(1, 1), compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    pos: tuple = field(default=(1, 1), compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    pos: tuple = field(default=(1, 1), compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    operand: "Node"
    pos: tuple = field(default=(1, 1), compare=False, repr=False)


@dataclass(frozen=True)
class Dagger:
    operand: "Node"
    pos: tuple = field(default=(1, 1), compare=False, repr=False)


Node = Union[Num, Sym, Call, BinOp, Neg, Dagger]

# name -> (min args, max args); None means unbounded
BUILTINS = {
    "eye": (1, 1),
    "destroy": (1, 1),
    "create": (1, 1),
    "num": (1, 1),
    "basis": (3, 3),
    "sigmax": (0, 0),
    "sigmay": (0, 0),
    "sigmaz": (0, 0),
    "sigmap": (0, 0),
    "sigmam": (0, 0),
    "kron": (2, None),
    "displace": (2, 2),
}


# -- lexer -------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?i?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*'(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind == "ws":
            nl = text.count("\n")
            if nl:
                line += nl
                line_start = pos + text.rfind("\n") + 1
        else:
            tokens.append(Token(kind if kind != "op" else text, text, line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("end", "", line, pos - line_start + 1))
    return tokens


# -- parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, src):
        self.tokens = tokenize(src)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def error(self, expected, message=None):
        tok = self.tok
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        if message is None:
            message = "expected " + " or ".join(expected) + f", found {found}"
        raise ParseError(message, tok.line, tok.col, expected)

    def eat(self, kind):
        tok = self.tok
        if tok.kind != kind:
            self.error([repr(kind) if kind not in ("name", "number", "end") else kind])
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            self.error(["operator", "end of input"])
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind in ("+", "-"):
            tok = self.tok
            self.i += 1
            node = BinOp(tok.kind, node, self.term(), (tok.line, tok.col))
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "*":
            tok = self.tok
            self.i += 1
            node = BinOp("*", node, self.unary(), (tok.line, tok.col))
        return node

    def unary(self):
        if self.tok.kind == "-":
            tok = self.tok
            self.i += 1
            return Neg(self.unary(), (tok.line, tok.col))
        return self.postfix()

    def postfix(self):
        node = self.atom()
        while self.tok.kind == "'":
            tok = self.tok
            self.i += 1
            node = Dagger(node, (tok.line, tok.col))
        return node

    def atom(self):
        tok = self.tok
        pos = (tok.line, tok.col)
        if tok.kind == "number":
            self.i += 1
            text = tok.text
            if text.endswith("i"):
                return Num(complex(0.0, float(text[:-1])), pos)
            return Num(complex(float(text), 0.0), pos)
        if tok.kind == "name":
            self.i += 1
            if self.tok.kind != "(":
                return Sym(tok.text, pos)
            if tok.text not in BUILTINS:
                raise ParseError(f"unknown builtin {tok.text!r}", *pos)
            self.i += 1
            args = []
            if self.tok.kind != ")":
                args.append(self.expr())
                while self.tok.kind == ",":
                    self.i += 1
                    args.append(self.expr())
            if self.tok.kind != ")":
                self.error(["')'", "','"] if args else ["')'"])
            self.i += 1
            lo, hi = BUILTINS[tok.text]
            if len(args) < lo or (hi is not None and len(args) > hi):
                want = str(lo) if lo == hi else f"at least {lo}"
                raise ParseError(
                    f"{tok.text} takes {want} argument(s), got {len(args)}", *pos
                )
            return Call(tok.text, tuple(args), pos)
        if tok.kind == "(":
            self.i += 1
            node = self.expr()
            if self.tok.kind != ")":
                self.error(["')'"])
            self.i += 1
            return node
        self.error(["number", "name", "'('", "'-'"])


def parse_expression(src: str) -> Node:
    """Parse an operator expression into an AST.

    >>> parse_expression("0.5*(a + a')")  # doctest: +ELLIPSIS
    BinOp(op='*', left=Num(value=(0.5+0j)), right=BinOp(op='+', ...))
    """
    if not isinstance(src, str) or not src.strip():
        raise ParseError("empty expression", 1, 1, ["expression"])
    return _Parser(src).parse()


# -- printer -----------------------------------------------------------------

def _level(node):
    if isinstance(node, BinOp):
        return 1 if node.op in "+-" else 2
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Dagger):
        return 4
    return 5


def _fmt_real(x: float) -> str:
    if not math.isfinite(x) or x < 0:
        raise ValueError(f"literal {x!r} has no source form")
    return repr(float(x))


def to_source(node: Node, min_level: int = 1) -> str:
    """Render an AST so that :func:`parse_expression` reproduces it."""
    if isinstance(node, Num):
        v = complex(node.value)
        if v.imag == 0:
            s = _fmt_real(v.real)
        elif v.real == 0:
            s = _fmt_real(v.imag) + "i"
        else:
            raise ValueError("complex literal with both parts has no single-token form")
    elif isinstance(node, Sym):
        s = node.name
    elif isinstance(node, Call):
        s = f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    elif isinstance(node, BinOp):
        lvl = _level(node)
        s = f"{to_source(node.left, lvl)} {node.op} {to_source(node.right, lvl + 1)}"
    elif isinstance(node, Neg):
        s = "-" + to_source(node.operand, 3)
    elif isinstance(node, Dagger):
        s = to_source(node.operand, 4) + "'"
    else:
        raise TypeError(f"not an AST node: {node!r}")
    return f"({s})" if _level(node) < min_level else s


def format_complex(z: complex) -> str:
    """Source text for a complex constant (used by model builders)."""
    z = complex(z)
    re_, im = z.real, z.imag
    if im == 0:
        return repr(re_) if re_ >= 0 else f"(-{repr(-re_)})"
    if re_ == 0:
        return f"{repr(im)}i" if im >= 0 else f"(-{repr(-im)}i)"
    sign = "+" if im >= 0 else "-"
    head = repr(re_) if re_ >= 0 else f"-{repr(-re_)}"
    return f"({head} {sign} {repr(abs(im))}i)"


# -- evaluation --------------------------------------------------------------

def _sigma(name):
    return {
        "sigmax": np.array([[0, 1], [1, 0]], dtype=complex),
        "sigmay": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "sigmaz": np.array([[1, 0], [0, -1]], dtype=complex),
        # |e><g| and |g><e| with |g> = index 0
        "sigmap": np.array([[0, 0], [1, 0]], dtype=complex),
        "sigmam": np.array([[0, 1], [0, 0]], dtype=complex),
    }[name]


def destroy(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def displace(n: int, alpha: complex) -> np.ndarray:
    a = destroy(n)
    return scipy.linalg.expm(alpha * a.conj().T - np.conj(alpha) * a)


class _Evaluator:
    def __init__(self, symbols, factors):
        self.sources = dict(symbols or {})
        self.factors = list(factors or [])
        self.cache = {}
        self.stack = []

    def error(self, node, message, cls=ModelError):
        line, col = node.pos
        return cls(f"{message} (line {line}, column {col})")

    def int_arg(self, node, value, what):
        if isinstance(value, np.ndarray) or value.imag != 0 or value.real != round(value.real):
            raise self.error(node, f"{what} must be an integer")
        return int(round(value.real))

    def symbol(self, node):
        name = node.name
        if name in self.cache:
            return self.cache[name]
        if name in self.stack:
            cycle = " -> ".join(self.stack[self.stack.index(name):] + [name])
            raise self.error(node, f"cyclic symbol definition: {cycle}")
        if name not in self.sources:
            if name in BUILTINS and BUILTINS[name][0] == 0:
                return _sigma(name)
            raise self.error(node, f"unknown symbol {name!r}")
        src = self.sources[name]
        ast = src if not isinstance(src, str) else parse_expression(src)
        self.stack.append(name)
        try:
            value = self.eval(ast)
        finally:
            self.stack.pop()
        self.cache[name] = value
        return value

    def call(self, node):
        name = node.name
        args = [self.eval(a) for a in node.args]
        if name in ("eye", "destroy", "create", "num"):
            n = self.int_arg(node, args[0], f"{name} dimension")
            if n < 1:
                raise self.error(node, f"{name} dimension must be positive")
            if name == "eye":
                return np.eye(n, dtype=complex)
            a = destroy(n)
            if name == "destroy":
                return a
            if name == "create":
                return a.conj().T.copy()
            return np.diag(np.arange(n, dtype=float)).astype(complex)
        if name == "basis":
            n, i, j = (self.int_arg(node, v, "basis argument") for v in args)
            if not (0 <= i < n and 0 <= j < n):
                raise self.error(node, f"basis indices ({i}, {j}) out of range for dim {n}")
            out = np.zeros((n, n), dtype=complex)
            out[i, j] = 1.0
            return out
        if name in ("sigmax", "sigmay", "sigmaz", "sigmap", "sigmam"):
            return _sigma(name)
        if name == "kron":
            if any(not isinstance(v, np.ndarray) for v in args):
                raise self.error(node, "kron arguments must be operators", DimensionError)
            out = args[0]
            for v in args[1:]:
                out = np.kron(out, v)
            return out
        if name == "displace":
            n = self.int_arg(node, args[0], "displace dimension")
            if isinstance(args[1], np.ndarray):
                raise self.error(node, "displace amplitude must be a scalar")
            return displace(n, complex(args[1]))
        raise self.error(node, f"unknown builtin {name!r}")

    def eval(self, node):
        if isinstance(node, Num):
            return complex(node.value)
        if isinstance(node, Sym):
            return self.symbol(node)
        if isinstance(node, Call):
            return self.call(node)
        if isinstance(node, Neg):
            return -self.eval(node.operand)
        if isinstance(node, Dagger):
            v = self.eval(node.operand)
            return v.conj().T.copy() if isinstance(v, np.ndarray) else v.conjugate()
        if isinstance(node, BinOp):
            a, b = self.eval(node.left), self.eval(node.right)
            a_op, b_op = isinstance(a, np.ndarray), isinstance(b, np.ndarray)
            if node.op == "*":
                if a_op and b_op:
                    if a.shape[1] != b.shape[0]:
                        raise self.error(node, f"cannot multiply {a.shape} by {b.shape}",
                                         DimensionError)
                    return a @ b
                return a * b
            if a_op != b_op:
                raise self.error(node, f"cannot {'add' if node.op == '+' else 'subtract'}"
                                 " a scalar and an operator", DimensionError)
            if a_op and a.shape != b.shape:
                raise self.error(node, f"dimension mismatch: {a.shape} vs {b.shape}",
                                 DimensionError)
            return a + b if node.op == "+" else a - b
        raise TypeError(f"not an AST node: {node!r}")


def evaluate(ast: Node | str, symbols: dict | None = None, factors=None):
    """Evaluate an expression to an operator (ndarray) or a complex scalar."""
    if isinstance(ast, str):
        ast = parse_expression(ast)
    return _Evaluator(symbols, factors).eval(ast)


# -- model files -------------------------------------------------------------

MODEL_SCHEMA = {
    "type": "object",
    "required": ["factors", "fast", "slow", "epsilon"],
    "additionalProperties": False,
    "properties": {
        "factors": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "dim"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "dim": {"type": "integer", "minimum": 1},
                },
            },
        },
        "symbols": {"type": "object", "additionalProperties": {"type": "string"}},
        "fast": {"$ref": "#/$defs/generator"},
        "slow": {"$ref": "#/$defs/generator"},
        "epsilon": {"type": "number"},
        "options": {"type": "object"},
    },
    "$defs": {
        "generator": {
            "type": "object",
            "required": ["hamiltonian"],
            "additionalProperties": False,
            "properties": {
                "hamiltonian": {"type": "string"},
                "jumps": {"type": "array", "items": {"type": "string"}},
            },
        }
    },
}


@dataclass(frozen=True)
class ModelDefinition:
    fast: LindbladGenerator
    slow: LindbladGenerator
    epsilon: float
    factors: tuple
    tolerances: Tolerances = DEFAULT
    metadata: dict = field(default_factory=dict)
    document: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.fast.dim

    def __iter__(self):
        # (fast, slow, epsilon, options) unpacking
        return iter((self.fast, self.slow, self.epsilon, self.tolerances))


def _validate_schema(doc):
    import jsonschema

    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ModelError(f"schema violation at {where}: {exc.message}") from None


def _operator_for(where, src, ev, dim):
    try:
        value = ev.eval(parse_expression(src))
    except ParseError as exc:
        raise ModelError(f"{where}: {exc}") from None
    except ModelError as exc:
        raise type(exc)(f"{where}: {exc}") from None
    if not isinstance(value, np.ndarray):
        return complex(value) * np.eye(dim, dtype=complex)
    if value.shape != (dim, dim):
        raise DimensionError(f"{where} has shape {value.shape}, expected ({dim}, {dim})")
    return value


def _generator(where, spec, ev, dim):
    h = _operator_for(f"{where}.hamiltonian", spec["hamiltonian"], ev, dim)
    if not is_hermitian(h):
        raise ModelError(
            f"{where}.hamiltonian is not Hermitian (max|H-H^dag| = {hermiticity_defect(h):.3e})"
        )
    jumps = tuple(
        _operator_for(f"{where}.jumps[{k}]", src, ev, dim)
        for k, src in enumerate(spec.get("jumps", []))
    )
    return LindbladGenerator(h, jumps)


def model_from_dict(doc: dict, *, allow_zero_epsilon: bool = False) -> ModelDefinition:
    """Build generators from an already-decoded model document.

    Model files need ``epsilon > 0``; programmatic builders may pass
    ``allow_zero_epsilon`` to represent the decoupled limit.
    """
    _validate_schema(doc)
    factors = tuple((f["name"], int(f["dim"])) for f in doc["factors"])
    dim = int(np.prod([d for _, d in factors]))
    epsilon = float(doc["epsilon"])
    if not (epsilon > 0 or (allow_zero_epsilon and epsilon == 0)):
        raise ModelError(f"epsilon must be positive, got {epsilon}")
    options = dict(doc.get("options", {}))
    tol_keys = set(Tolerances.__dataclass_fields__)
    tolerances = Tolerances.from_env().with_overrides(
        {k: v for k, v in options.items() if k in tol_keys}
    )
    metadata = {k: v for k, v in options.items() if k not in tol_keys}
    ev = _Evaluator(doc.get("symbols", {}), factors)
    fast = _generator("fast", doc["fast"], ev, dim)
    slow = _generator("slow", doc["slow"], ev, dim)
    return ModelDefinition(fast, slow, epsilon, factors, tolerances, metadata, doc)


def load_model(path) -> ModelDefinition:
    """Read and evaluate a JSON model file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read model file {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno},"
                         f" column {exc.colno})") from None
    return model_from_dict(doc)
