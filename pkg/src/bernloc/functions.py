"""Piecewise function specifications on [0, 1].

Text form::

    <expr> on <interval> ; <expr> on <interval> ; ...

Intervals are written ``[a,b]``, ``(a,b)``, ``[a,b)``, ``(a,b]`` or ``{a}``.
Expressions use the variable ``t``, numeric literals, ``+ - * / ^``, unary
minus, ``abs exp log sqrt max min`` and two builtin families::

    power_plus(c, s)   = max(0, t - c) ^ s              (s > 0)
    exp_cusp(c, alpha) = exp(-|t - c| ^ -alpha), 0 at t = c

The pieces must partition [0, 1]: every point is covered by exactly one.
The DSL only produces bounded measurable functions, so boundedness is not
re-checked at evaluation time.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .numerics import LogValue

__all__ = [
    "Interval",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expr",
    "FunctionSpec",
    "SpecError",
    "SpecSyntaxError",
    "SpecSemanticError",
    "UnderflowUnsafe",
    "parse_expr",
    "parse_function_spec",
    "load_function_spec",
    "evaluate",
    "evaluate_array",
    "log_evaluate",
    "log_evaluate_array",
    "sup_norm_deviation",
    "sup_norm_details",
    "SupNorm",
    "SUP_GRID_STEP",
]

SUP_GRID_STEP = 1e-5


class SpecError(ValueError):
    def __init__(self, message: str, position: Optional[int] = None):
        self.position = position
        if position is not None:
            message = f"at position {position}: {message}"
        super().__init__(message)


class SpecSyntaxError(SpecError):
    pass


class SpecSemanticError(SpecError):
    pass


class UnderflowUnsafe(ArithmeticError):
    """Raised by strict log evaluation when it would fall back to linear space."""


# -- intervals ----------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise SpecSemanticError(f"empty interval: lo={self.lo} > hi={self.hi}")
        if self.lo == self.hi and not (self.lo_closed and self.hi_closed):
            raise SpecSemanticError(f"degenerate interval at {self.lo} must be a closed point")

    @classmethod
    def open(cls, lo: float, hi: float) -> "Interval":
        return cls(lo, hi, False, False)

    @classmethod
    def point(cls, a: float) -> "Interval":
        return cls(a, a, True, True)

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def contains(self, t):
        t = np.asarray(t, dtype=float)
        left = t >= self.lo if self.lo_closed else t > self.lo
        right = t <= self.hi if self.hi_closed else t < self.hi
        return left & right

    def __contains__(self, t: float) -> bool:
        return bool(self.contains(t))

    def to_text(self) -> str:
        if self.is_point:
            return "{" + _fmt(self.lo) + "}"
        return (
            ("[" if self.lo_closed else "(")
            + _fmt(self.lo) + "," + _fmt(self.hi)
            + ("]" if self.hi_closed else ")")
        )

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "lo_closed": self.lo_closed, "hi_closed": self.hi_closed}


def _fmt(v: float) -> str:
    return repr(float(v))


# -- expression AST -----------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]

_ARITY = {
    "abs": 1, "exp": 1, "log": 1, "sqrt": 1,
    "max": 2, "min": 2, "power_plus": 2, "exp_cusp": 2,
}
_FAMILIES = ("power_plus", "exp_cusp")
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _depends_on_t(node: Expr) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Num):
        return False
    if isinstance(node, Neg):
        return _depends_on_t(node.operand)
    if isinstance(node, BinOp):
        return _depends_on_t(node.left) or _depends_on_t(node.right)
    if node.name in _FAMILIES:
        return True
    return any(_depends_on_t(a) for a in node.args)


def _const(node: Expr) -> float:
    return float(_eval(node, np.float64(0.0)))


def to_text(node: Expr) -> str:
    """Pretty-print with the minimal parentheses that re-parse to ``node``."""
    return _to_text(node, 0)


def _to_text(node: Expr, outer: int) -> str:
    if isinstance(node, Num):
        text = _fmt(node.value)
        return f"({text})" if node.value < 0 else text
    if isinstance(node, Var):
        return "t"
    if isinstance(node, Neg):
        text = "-" + _to_text(node.operand, 3)
        return f"({text})" if outer > 3 else text
    if isinstance(node, Call):
        return node.name + "(" + ", ".join(_to_text(a, 0) for a in node.args) + ")"
    prec = _PREC[node.op]
    if node.op == "^":
        # right associative: the base needs a strictly tighter binding
        text = _to_text(node.left, prec + 1) + " ^ " + _to_text(node.right, 3)
    else:
        text = _to_text(node.left, prec) + f" {node.op} " + _to_text(node.right, prec + 1)
    return f"({text})" if prec < outer else text


# -- tokenizer / parser -------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),;\[\]{}]))"
)


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise SpecSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), start))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str, what: Optional[str] = None) -> _Tok:
        if self.tok.text != text or self.tok.kind == "num":
            found = self.tok.text or "end of input"
            raise SpecSyntaxError(f"expected {what or repr(text)}, found {found!r}", self.tok.pos)
        return self.advance()

    def at(self, *texts: str) -> bool:
        return self.tok.kind in ("op", "name") and self.tok.text in texts

    # expr := term (('+'|'-') term)*
    def expr(self) -> Expr:
        node = self.term()
        while self.at("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    # term := unary (('*'|'/') unary)*
    def term(self) -> Expr:
        node = self.unary()
        while self.at("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    # unary := '-' unary | power
    def unary(self) -> Expr:
        if self.at("-"):
            self.advance()
            operand = self.unary()
            return Neg(operand)
        if self.at("+"):
            self.advance()
            return self.unary()
        return self.power()

    # power := atom ('^' unary)?
    def power(self) -> Expr:
        base = self.atom()
        if self.at("^"):
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            if tok.text == "t":
                self.advance()
                return Var()
            if tok.text in _ARITY:
                self.advance()
                return self.call(tok)
            raise SpecSyntaxError(f"unknown name {tok.text!r}", tok.pos)
        if self.at("("):
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise SpecSyntaxError(f"expected a number, 't', a function or '(', found {found!r}", tok.pos)

    def call(self, name_tok: _Tok) -> Expr:
        self.expect("(", f"'(' after {name_tok.text}")
        args = [self.expr()]
        while self.at(","):
            self.advance()
            args.append(self.expr())
        self.expect(")")
        name = name_tok.text
        if len(args) != _ARITY[name]:
            raise SpecSyntaxError(f"{name} takes {_ARITY[name]} argument(s), got {len(args)}", name_tok.pos)
        if name in _FAMILIES:
            # nested families are not constants either
            for a in args:
                if _depends_on_t(a):
                    raise SpecSemanticError(f"{name} parameters must be constants", name_tok.pos)
            c, p = (_const(a) for a in args)
            if name == "power_plus" and not p > 0:
                raise SpecSemanticError(f"power_plus exponent must be positive, got {p}", name_tok.pos)
            if name == "exp_cusp" and not p > 0:
                raise SpecSemanticError(f"exp_cusp alpha must be positive, got {p}", name_tok.pos)
            args = [Num(c), Num(p)]
        return Call(name, tuple(args))

    def constant(self) -> float:
        start = self.tok.pos
        node = self.expr()
        if _depends_on_t(node):
            raise SpecSemanticError("interval endpoints must be constants", start)
        return _const(node)

    def interval(self) -> Interval:
        tok = self.tok
        if self.at("{"):
            self.advance()
            a = self.constant()
            self.expect("}")
            return self._checked(Interval.point(a), tok.pos)
        if not self.at("[", "("):
            raise SpecSyntaxError(f"expected an interval opener '[', '(' or '{{', found {tok.text or 'end of input'!r}", tok.pos)
        lo_closed = self.advance().text == "["
        lo = self.constant()
        self.expect(",")
        hi = self.constant()
        if not self.at("]", ")"):
            raise SpecSyntaxError(f"expected ']' or ')', found {self.tok.text or 'end of input'!r}", self.tok.pos)
        hi_closed = self.advance().text == "]"
        try:
            iv = Interval(lo, hi, lo_closed, hi_closed)
        except SpecSemanticError as exc:
            raise SpecSemanticError(str(exc), tok.pos) from None
        return self._checked(iv, tok.pos)

    @staticmethod
    def _checked(iv: Interval, pos: int) -> Interval:
        if not (0.0 <= iv.lo and iv.hi <= 1.0):
            raise SpecSemanticError(f"interval {iv.to_text()} lies outside [0,1]", pos)
        return iv

    def pieces(self) -> list:
        out = []
        while True:
            start = self.tok.pos
            expr = self.expr()
            if not (self.tok.kind == "name" and self.tok.text == "on"):
                raise SpecSyntaxError(f"expected 'on', found {self.tok.text or 'end of input'!r}", self.tok.pos)
            self.advance()
            out.append((self.interval(), expr, start))
            if self.at(";"):
                self.advance()
                if self.tok.kind == "end":
                    break
                continue
            if self.tok.kind != "end":
                raise SpecSyntaxError(f"expected ';' or end of input, found {self.tok.text!r}", self.tok.pos)
            break
        return out


def parse_expr(text: str) -> Expr:
    p = _Parser(text)
    node = p.expr()
    if p.tok.kind != "end":
        raise SpecSyntaxError(f"unexpected {p.tok.text!r}", p.tok.pos)
    return node


# -- function spec -------------------------------------------------------------

@dataclass(frozen=True)
class FunctionSpec:
    pieces: tuple  # of (Interval, Expr), sorted by position in [0, 1]
    name: Optional[str] = None

    def __post_init__(self):
        ordered = tuple(sorted(self.pieces, key=lambda p: (p[0].lo, not p[0].lo_closed)))
        object.__setattr__(self, "pieces", ordered)
        _check_partition([iv for iv, _ in ordered])

    def __eq__(self, other):
        return isinstance(other, FunctionSpec) and self.pieces == other.pieces

    def __hash__(self):
        return hash(self.pieces)

    def to_text(self) -> str:
        return "; ".join(f"{to_text(e)} on {iv.to_text()}" for iv, e in self.pieces)

    def to_json(self) -> dict:
        doc = {"pieces": [{"interval": iv.to_json(), "expr": to_text(e)} for iv, e in self.pieces]}
        if self.name is not None:
            doc["name"] = self.name
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "FunctionSpec":
        try:
            pieces = []
            for piece in doc["pieces"]:
                ivd = piece["interval"]
                iv = Interval(float(ivd["lo"]), float(ivd["hi"]),
                              bool(ivd.get("lo_closed", True)), bool(ivd.get("hi_closed", True)))
                _Parser._checked(iv, None)
                pieces.append((iv, parse_expr(piece["expr"])))
        except (KeyError, TypeError) as exc:
            raise SpecSemanticError(f"malformed JSON function spec: {exc}") from None
        spec = cls(tuple(pieces), doc.get("name"))
        _check_piece_values(spec)
        return spec

    @property
    def breakpoints(self) -> list:
        pts = sorted({iv.lo for iv, _ in self.pieces} | {iv.hi for iv, _ in self.pieces})
        return pts

    def is_piecewise_constant(self) -> bool:
        return all(not _depends_on_t(e) for _, e in self.pieces)

    def knots(self) -> list:
        """Interior points where some piece's expression has a cusp or kink."""
        out = set()
        for iv, e in self.pieces:
            for c in _family_knots(e):
                if iv.lo < c < iv.hi:
                    out.add(c)
        return sorted(out)


def _family_knots(node: Expr) -> list:
    if isinstance(node, Call):
        found = [k for a in node.args for k in _family_knots(a)]
        if node.name in _FAMILIES:
            found.append(node.args[0].value)
        return found
    if isinstance(node, Neg):
        return _family_knots(node.operand)
    if isinstance(node, BinOp):
        return _family_knots(node.left) + _family_knots(node.right)
    return []


def _check_partition(intervals: Sequence[Interval]) -> None:
    cursor, covered = 0.0, False
    for iv in intervals:
        if iv.lo < cursor or (iv.lo == cursor and covered and iv.lo_closed):
            raise SpecSemanticError(f"pieces overlap at t = {iv.lo!r} ({iv.to_text()})")
        if iv.lo > cursor:
            raise SpecSemanticError(f"t in {'[' if not covered else '('}{cursor!r},{iv.lo!r}) uncovered")
        if not covered and not iv.lo_closed:
            raise SpecSemanticError(f"t = {cursor!r} uncovered")
        cursor, covered = iv.hi, iv.hi_closed
    if cursor < 1.0:
        raise SpecSemanticError(f"t in ({cursor!r},1] uncovered")
    if not covered:
        raise SpecSemanticError("t = 1.0 uncovered")


def _check_piece_values(spec: FunctionSpec) -> None:
    for iv, e in spec.pieces:
        if iv.is_point:
            grid = np.array([iv.lo])
        else:
            grid = np.linspace(iv.lo, iv.hi, 257)
            grid = grid[iv.contains(grid)]
        with np.errstate(all="ignore"):
            vals = _eval(e, grid)
        if not np.all(np.isfinite(vals)):
            bad = grid[~np.isfinite(np.broadcast_to(vals, grid.shape))][0]
            raise SpecSemanticError(f"expression {to_text(e)!r} is not finite at t = {bad!r} in {iv.to_text()}")


def parse_function_spec(text: str, name: Optional[str] = None) -> FunctionSpec:
    """Parse the ``<expr> on <interval>; ...`` text form (or a JSON document)."""
    if text.lstrip().startswith("{") and '"pieces"' in text:
        return FunctionSpec.from_json(json.loads(text))
    parsed = _Parser(text).pieces()
    try:
        spec = FunctionSpec(tuple((iv, e) for iv, e, _ in parsed), name)
    except SpecSemanticError:
        raise
    _check_piece_values(spec)
    return spec


def load_function_spec(source: str) -> FunctionSpec:
    """Accept inline text, or a path to a text or JSON spec file."""
    import os

    if os.path.isfile(source):
        with open(source, encoding="utf-8") as fh:
            body = fh.read()
        if source.endswith(".json"):
            return FunctionSpec.from_json(json.loads(body))
        return parse_function_spec(body.strip())
    return parse_function_spec(source)


# -- evaluation ----------------------------------------------------------------

def _eval(node: Expr, t):
    if isinstance(node, Num):
        return np.float64(node.value) + 0 * t
    if isinstance(node, Var):
        return t
    if isinstance(node, Neg):
        return -_eval(node.operand, t)
    if isinstance(node, BinOp):
        a, b = _eval(node.left, t), _eval(node.right, t)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        return np.power(a, b)
    name = node.name
    if name in _FAMILIES:
        c, p = node.args[0].value, node.args[1].value
        if name == "power_plus":
            return np.power(np.maximum(t - c, 0.0), p)
        d = np.abs(t - c)
        with np.errstate(divide="ignore"):
            return np.where(d == 0.0, 0.0, np.exp(-np.power(d, -p)))
    args = [_eval(a, t) for a in node.args]
    if name == "abs":
        return np.abs(args[0])
    if name == "exp":
        return np.exp(args[0])
    if name == "log":
        return np.log(args[0])
    if name == "sqrt":
        return np.sqrt(args[0])
    if name == "max":
        return np.maximum(*args)
    return np.minimum(*args)


def _check_t(t) -> None:
    arr = np.asarray(t)
    if np.any(~((arr >= 0.0) & (arr <= 1.0))):
        raise ValueError(f"t must lie in [0, 1], got {t!r}")


def evaluate_array(f: FunctionSpec, t) -> np.ndarray:
    """Vectorized :func:`evaluate`."""
    t = np.asarray(t, dtype=float)
    _check_t(t)
    out = np.empty(t.shape)
    for iv, e in f.pieces:
        mask = iv.contains(t)
        if mask.any():
            # intermediate infinities (t / (1/t + 1) at 0) are legitimate
            with np.errstate(divide="ignore", over="ignore"):
                out[mask] = _eval(e, t[mask])
    return out


def evaluate(f: FunctionSpec, t: float) -> float:
    return float(evaluate_array(f, np.array([t]))[0])


def _log_eval(node: Expr, t: np.ndarray, strict: bool):
    """Return (signs, logs) arrays for ``node`` at ``t``."""
    if isinstance(node, Call) and node.name in _FAMILIES:
        c, p = node.args[0].value, node.args[1].value
        if node.name == "exp_cusp":
            d = np.abs(t - c)
            with np.errstate(divide="ignore"):
                logs = np.where(d == 0.0, -np.inf, -np.power(d, -p))
        else:
            d = t - c
            with np.errstate(divide="ignore", invalid="ignore"):
                logs = np.where(d > 0.0, p * np.log(np.where(d > 0.0, d, 1.0)), -np.inf)
        return np.where(np.isneginf(logs), 0.0, 1.0), logs
    if isinstance(node, Call) and node.name == "exp":
        vals = _eval(node.args[0], t)
        return np.ones_like(vals), vals
    if isinstance(node, Call) and node.name == "sqrt":
        s, lg = _log_eval(node.args[0], t, strict)
        return s, 0.5 * lg
    if isinstance(node, Call) and node.name == "abs":
        s, lg = _log_eval(node.args[0], t, strict)
        return np.abs(s), lg
    if isinstance(node, Neg):
        s, lg = _log_eval(node.operand, t, strict)
        return -s, lg
    if isinstance(node, BinOp) and node.op in "*/":
        s1, l1 = _log_eval(node.left, t, strict)
        s2, l2 = _log_eval(node.right, t, strict)
        s = s1 * s2
        with np.errstate(invalid="ignore"):
            lg = l1 + l2 if node.op == "*" else l1 - l2
        lg = np.where(s == 0.0, -np.inf, lg)
        return s, lg
    if isinstance(node, BinOp) and node.op == "^":
        s1, l1 = _log_eval(node.left, t, strict)
        expo = _eval(node.right, t)
        if np.any(s1 < 0):
            return _linear_fallback(node, t, strict)
        with np.errstate(invalid="ignore"):
            lg = np.where(s1 == 0.0, np.where(expo > 0, -np.inf, 0.0), expo * l1)
        return np.where(np.isneginf(lg), 0.0, 1.0), lg
    if isinstance(node, (Num, Var)):
        return _linear_fallback(node, t, False)
    return _linear_fallback(node, t, strict)


def _linear_fallback(node: Expr, t: np.ndarray, strict: bool):
    if strict:
        raise UnderflowUnsafe(f"{to_text(node)!r} has no symbolic log form")
    with np.errstate(divide="ignore", over="ignore"):
        vals = np.asarray(_eval(node, t), dtype=float) + 0 * t
        return np.sign(vals), np.log(np.abs(vals))


def log_evaluate_array(f: FunctionSpec, t, strict: bool = False):
    """Vectorized :func:`log_evaluate`; returns ``(signs, logs)`` arrays.

    Exponentials, products, quotients, powers of nonnegative factors and
    the builtin families stay symbolic in log space. Anything else falls
    back to ``log|f(t)|``, which underflows; ``strict=True`` raises
    :class:`UnderflowUnsafe` instead of falling back.
    """
    t = np.asarray(t, dtype=float)
    _check_t(t)
    signs = np.zeros(t.shape)
    logs = np.full(t.shape, -np.inf)
    for iv, e in f.pieces:
        mask = iv.contains(t)
        if mask.any():
            s, lg = _log_eval(e, t[mask], strict)
            signs[mask] = s
            logs[mask] = lg
    logs = np.where(signs == 0.0, -np.inf, logs)
    return signs, logs


def log_evaluate(f: FunctionSpec, t: float, strict: bool = False) -> LogValue:
    s, lg = log_evaluate_array(f, np.array([t]), strict)
    return LogValue.from_log(float(lg[0]), int(s[0]))


# -- sup norm ------------------------------------------------------------------

@dataclass(frozen=True)
class SupNorm:
    value: float
    exact: bool


def _piece_sup(iv: Interval, e: Expr, c: float) -> tuple[float, bool]:
    if iv.is_point or not _depends_on_t(e):
        return abs(float(_eval(e, np.array([iv.lo]))[0]) - c), True
    ends = np.array([iv.lo, iv.hi])
    if isinstance(e, Call) and e.name in _FAMILIES:
        # Both families are monotone in t on each side of their knot, so
        # the range over the piece is spanned by endpoint and knot values.
        knot = e.args[0].value
        pts = ends if not iv.lo < knot < iv.hi else np.array([iv.lo, knot, iv.hi])
        vals = _eval(e, pts)
        return float(np.max(np.abs(vals - c))), True
    grid = np.arange(iv.lo, iv.hi, SUP_GRID_STEP)
    grid = np.concatenate([grid, ends, np.array(_family_knots(e))])
    grid = grid[(grid >= iv.lo) & (grid <= iv.hi)]
    with np.errstate(all="ignore"):
        vals = _eval(e, grid) - c
    vals = np.abs(vals[np.isfinite(vals)])
    return float(vals.max()), False


def sup_norm_details(f: FunctionSpec, c: float) -> SupNorm:
    """``sup |f - c|`` over [0, 1] with a flag telling whether it is exact.

    Constant pieces and bare builtin-family pieces are exact; anything
    else is a grid scan with step ``SUP_GRID_STEP`` plus endpoints, and is
    flagged approximate. Open endpoints contribute their limits, so the
    value never undershoots the supremum of a monotone piece.
    """
    best, exact = 0.0, True
    for iv, e in f.pieces:
        v, ex = _piece_sup(iv, e, c)
        best = max(best, v)
        exact = exact and ex
    return SupNorm(best, exact)


def sup_norm_deviation(f: FunctionSpec, c: float) -> float:
    return sup_norm_details(f, c).value
