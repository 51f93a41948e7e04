"""LTL over ``(mode, label)`` atoms: AST, parser and trace semantics.

The kernel AST has only atoms, constants, ``!``, ``|``, ``U`` and ``X``.
``&``, ``->``, ``F`` and ``G`` are rewritten away while parsing:

    a & b   = !(!a | !b)        a -> b = !a | b
    F a     = true U a          G a    = !F !a

Evaluation and the BMC encoder work on the negation normal form (NNF),
which reintroduces ``&`` and the dual of ``U`` (release) internally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

__all__ = [
    "Atom", "Const", "Not", "Or", "Until", "Next", "Formula",
    "TRUE", "FALSE", "land", "implies", "eventually", "globally",
    "LtlSyntaxError", "parse_ltl", "format_ltl", "atoms", "temporal_depth",
    "Trace", "eval_trace",
    "NLit", "NConst", "NAnd", "NOr", "NNext", "NUntil", "NRelease", "to_nnf",
]


@dataclass(frozen=True)
class Atom:
    q: str
    k: str


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Next:
    arg: "Formula"


Formula = Union[Atom, Const, Not, Or, Until, Next]

TRUE = Const(True)
FALSE = Const(False)


def land(a: Formula, b: Formula) -> Formula:
    return Not(Or(Not(a), Not(b)))


def implies(a: Formula, b: Formula) -> Formula:
    return Or(Not(a), b)


def eventually(a: Formula) -> Formula:
    return Until(TRUE, a)


def globally(a: Formula) -> Formula:
    return Not(eventually(Not(a)))


def atoms(phi: Formula) -> set[Atom]:
    if isinstance(phi, Atom):
        return {phi}
    if isinstance(phi, Const):
        return set()
    if isinstance(phi, (Not, Next)):
        return atoms(phi.arg)
    return atoms(phi.left) | atoms(phi.right)


def temporal_depth(phi: Formula) -> int:
    if isinstance(phi, (Atom, Const)):
        return 0
    if isinstance(phi, Not):
        return temporal_depth(phi.arg)
    if isinstance(phi, Next):
        return 1 + temporal_depth(phi.arg)
    if isinstance(phi, Until):
        return 1 + max(temporal_depth(phi.left), temporal_depth(phi.right))
    return max(temporal_depth(phi.left), temporal_depth(phi.right))


def format_ltl(phi: Formula) -> str:
    """Fully parenthesised kernel syntax; re-parses to the same AST."""
    if isinstance(phi, Atom):
        return f"({phi.q},{phi.k})"
    if isinstance(phi, Const):
        return "true" if phi.value else "false"
    if isinstance(phi, Not):
        return f"!{format_ltl(phi.arg)}"
    if isinstance(phi, Next):
        return f"X {format_ltl(phi.arg)}"
    op = "|" if isinstance(phi, Or) else "U"
    return f"({format_ltl(phi.left)} {op} {format_ltl(phi.right)})"


# -- parser -----------------------------------------------------------------

class LtlSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


_PUNCT = [("->", "IMP"), ("&&", "AND"), ("||", "OR"), ("(", "LP"), (")", "RP"),
          (",", "COMMA"), ("!", "NOT"), ("~", "NOT"), ("&", "AND"), ("|", "OR"), ("*", "STAR")]


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if c.isspace():
            i, col = i + 1, col + 1
            continue
        for p, kind in _PUNCT:
            if text.startswith(p, i):
                toks.append(_Tok(kind, p, line, col))
                i, col = i + len(p), col + len(p)
                break
        else:
            if c.isalnum() or c == "_":
                j = i
                while j < n and (text[j].isalnum() or text[j] in "_.-") \
                        and not text.startswith("->", j):
                    j += 1
                toks.append(_Tok("IDENT", text[i:j], line, col))
                col += j - i
                i = j
            else:
                raise LtlSyntaxError(f"unexpected character {c!r}", line, col)
    toks.append(_Tok("EOF", "", line, col))
    return toks


class _Parser:
    def __init__(self, text, modes, labels):
        self.toks = _tokenize(text)
        self.pos = 0
        self.modes = None if modes is None else list(modes)
        self.labels = None if labels is None else list(labels)

    def peek(self, offset=0) -> _Tok:
        return self.toks[min(self.pos + offset, len(self.toks) - 1)]

    def take(self, kind=None) -> _Tok:
        tok = self.peek()
        if kind is not None and tok.kind != kind:
            want = {"RP": "')'", "COMMA": "','", "IDENT": "a name", "EOF": "end of input"}.get(
                kind, kind)
            if tok.kind == "EOF":
                raise LtlSyntaxError(f"unexpected end of input, expected {want}",
                                     tok.line, tok.col)
            raise LtlSyntaxError(f"expected {want}, found {tok.text!r}", tok.line, tok.col)
        self.pos += 1
        return tok

    def parse(self) -> Formula:
        if self.peek().kind == "EOF":
            tok = self.peek()
            raise LtlSyntaxError("empty formula", tok.line, tok.col)
        phi = self.implication()
        tok = self.peek()
        if tok.kind != "EOF":
            if tok.kind == "RP":
                raise LtlSyntaxError("unbalanced ')'", tok.line, tok.col)
            raise LtlSyntaxError(f"unexpected {tok.text!r}", tok.line, tok.col)
        return phi

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.peek().kind == "IMP":
            self.take()
            return implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        left = self.conjunction()
        while self.peek().kind == "OR":
            self.take()
            left = Or(left, self.conjunction())
        return left

    def conjunction(self) -> Formula:
        left = self.until()
        while self.peek().kind == "AND":
            self.take()
            left = land(left, self.until())
        return left

    def until(self) -> Formula:
        left = self.unary()
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text == "U":
            self.take()
            return Until(left, self.until())
        return left

    def unary(self) -> Formula:
        tok = self.peek()
        if tok.kind == "NOT":
            self.take()
            return Not(self.unary())
        if tok.kind == "IDENT" and tok.text in ("X", "F", "G"):
            self.take()
            arg = self.unary()
            return {"X": Next, "F": eventually, "G": globally}[tok.text](arg)
        return self.primary()

    def primary(self) -> Formula:
        tok = self.peek()
        if tok.kind == "IDENT":
            if tok.text in ("true", "false"):
                self.take()
                return Const(tok.text == "true")
            raise LtlSyntaxError(
                f"unexpected name {tok.text!r}; atoms are written (MODE,LABEL)",
                tok.line, tok.col)
        if tok.kind == "LP":
            if self.peek(1).kind == "IDENT" and self.peek(2).kind == "COMMA":
                return self.atom()
            self.take()
            inner = self.implication()
            self.take("RP")
            return inner
        if tok.kind == "EOF":
            raise LtlSyntaxError("dangling operator: missing operand", tok.line, tok.col)
        raise LtlSyntaxError(f"unexpected {tok.text!r}", tok.line, tok.col)

    def atom(self) -> Formula:
        self.take("LP")
        qtok = self.take("IDENT")
        self.take("COMMA")
        ktok = self.peek()
        if ktok.kind == "STAR":
            self.take()
        else:
            ktok = self.take("IDENT")
        self.take("RP")
        if self.modes is not None and qtok.text not in self.modes:
            raise LtlSyntaxError(f"unknown mode {qtok.text!r}", qtok.line, qtok.col)
        if ktok.kind == "STAR":
            if self.labels is None:
                raise LtlSyntaxError("'*' needs a declared label alphabet", ktok.line, ktok.col)
            out: Formula | None = None
            for lab in self.labels:
                a = Atom(qtok.text, lab)
                out = a if out is None else Or(out, a)
            return out if out is not None else FALSE
        if self.labels is not None and ktok.text not in self.labels:
            raise LtlSyntaxError(f"unknown label {ktok.text!r}", ktok.line, ktok.col)
        return Atom(qtok.text, ktok.text)


def parse_ltl(text: str, modes: Iterable[str] | None = None,
              labels: Iterable[str] | None = None) -> Formula:
    """Parse a formula string into the kernel AST.

    Precedence from tightest: ``! X F G``, ``U`` (right assoc), ``&``,
    ``|``, ``->`` (right assoc).  ``(q,*)`` expands to the disjunction of
    ``(q,k)`` over ``labels``.  When ``modes``/``labels`` are given, atoms
    naming anything else are rejected with a position.
    """
    return _Parser(text, modes, labels).parse()


# -- negation normal form ---------------------------------------------------

@dataclass(frozen=True)
class NLit:
    q: str
    k: str
    positive: bool = True


@dataclass(frozen=True)
class NConst:
    value: bool


@dataclass(frozen=True)
class NAnd:
    left: object
    right: object


@dataclass(frozen=True)
class NOr:
    left: object
    right: object


@dataclass(frozen=True)
class NNext:
    arg: object


@dataclass(frozen=True)
class NUntil:
    left: object
    right: object


@dataclass(frozen=True)
class NRelease:
    left: object
    right: object


def to_nnf(phi: Formula, negate: bool = False):
    if isinstance(phi, Atom):
        return NLit(phi.q, phi.k, not negate)
    if isinstance(phi, Const):
        return NConst(phi.value != negate)
    if isinstance(phi, Not):
        return to_nnf(phi.arg, not negate)
    if isinstance(phi, Next):
        return NNext(to_nnf(phi.arg, negate))
    left, right = to_nnf(phi.left, negate), to_nnf(phi.right, negate)
    if isinstance(phi, Or):
        return NAnd(left, right) if negate else NOr(left, right)
    if isinstance(phi, Until):
        return NRelease(left, right) if negate else NUntil(left, right)
    raise TypeError(f"not a formula: {phi!r}")


# -- traces -----------------------------------------------------------------

@dataclass(frozen=True)
class Trace:
    """Sequence of ``(mode, label)`` steps, optionally a lasso.

    With ``loop_back`` set, the step after the last one is ``loop_back``;
    ``states`` optionally records the abstract state id per step.
    """

    steps: tuple[tuple[str, str], ...]
    loop_back: int | None = None
    states: tuple[int, ...] | None = None

    def __post_init__(self):
        steps = tuple(tuple(s) for s in self.steps)
        if not steps:
            raise ValueError("trace must have at least one step")
        if self.loop_back is not None and not 0 <= self.loop_back < len(steps):
            raise ValueError("loop_back must index a step")
        if self.states is not None and len(self.states) != len(steps):
            raise ValueError("states must align with steps")
        object.__setattr__(self, "steps", steps)

    def __len__(self):
        return len(self.steps)


def _eval_nnf(f, trace: Trace, memo) -> list[bool]:
    key = f
    if key in memo:
        return memo[key]
    L = len(trace.steps)
    loop = trace.loop_back
    if isinstance(f, NConst):
        val = [f.value] * L
    elif isinstance(f, NLit):
        val = [(s == (f.q, f.k)) == f.positive for s in trace.steps]
    elif isinstance(f, (NAnd, NOr)):
        a, b = _eval_nnf(f.left, trace, memo), _eval_nnf(f.right, trace, memo)
        val = [x and y for x, y in zip(a, b)] if isinstance(f, NAnd) else \
            [x or y for x, y in zip(a, b)]
    elif isinstance(f, NNext):
        a = _eval_nnf(f.arg, trace, memo)
        val = a[1:] + [a[loop] if loop is not None else False]
    elif isinstance(f, NUntil):
        a, b = _eval_nnf(f.left, trace, memo), _eval_nnf(f.right, trace, memo)
        val = _fixpoint(a, b, loop, least=True)
    elif isinstance(f, NRelease):
        a, b = _eval_nnf(f.left, trace, memo), _eval_nnf(f.right, trace, memo)
        val = _fixpoint(a, b, loop, least=False)
    else:
        raise TypeError(f"not an NNF node: {f!r}")
    memo[key] = val
    return val


def _fixpoint(a, b, loop, least):
    """Until (least) or release (greatest) over a finite or lasso trace.

    until:   v = b | (a & X v)    release: v = b & (a | X v)
    On a finite trace X past the end is false, so release needs ``a``
    to occur within the trace.
    """
    L = len(a)
    if loop is None:
        nxt = False
    else:
        nxt = not least
    v = [False] * L
    # two backward sweeps reach the fixpoint on a lasso
    for _ in range(2 if loop is not None else 1):
        for i in range(L - 1, -1, -1):
            after = v[i + 1] if i + 1 < L else nxt
            v[i] = (b[i] or (a[i] and after)) if least else (b[i] and (a[i] or after))
        if loop is not None:
            nxt = v[loop]
    return v


def eval_trace(phi: Formula, trace: Trace) -> bool:
    """Truth of ``phi`` at position 0.

    Lassos get the usual infinite-word semantics.  Loop-free traces use
    bounded semantics on the NNF: ``X`` past the end is false, ``U`` must be
    fulfilled inside the trace, and release (hence ``G``) never holds
    without its left operand occurring.
    """
    return _eval_nnf(to_nnf(phi), trace, {})[0]
