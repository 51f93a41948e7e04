"""Bounded model checking: encode "some k-step path violates phi" as CNF.

Variable numbering (stable, 1-based), for ``N`` states and bound ``k``:

* ``x[i][s]`` -- the path is in state ``s`` at step ``i``:
  ``1 + i*N + s`` for ``i in 0..k``;
* ``l[j]`` -- the path loops from step ``k`` back to step ``j``:
  ``(k+1)*N + 1 + j`` for ``j in 0..k``;
* one variable fixed true, then at-most-one ladder variables, then Tseitin
  gate variables in creation order.

The formula translated is the NNF of ``!phi``: a loop-free translation
(bounded semantics, nothing assumed past step ``k``) when no loop variable
is set, and the lasso translation for the selected loop otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ltl import (
    Formula, NAnd, NConst, NLit, NNext, NOr, NRelease, NUntil, Not, Trace, atoms,
    eval_trace, to_nnf,
)
from .sat import CnfFormula, SatResult, sat_solve
from .ts import TransitionSystem

__all__ = ["BmcLayout", "AlphabetError", "WitnessError", "encode_bmc", "decode_witness",
           "check_bmc"]


class AlphabetError(ValueError):
    """The formula mentions an atom outside the system's output alphabet."""


class WitnessError(AssertionError):
    """A satisfying assignment did not decode to a valid violating trace."""


@dataclass(frozen=True)
class BmcLayout:
    n_states: int
    bound: int
    true_var: int
    phi: Formula

    def state_var(self, i: int, s: int) -> int:
        return 1 + i * self.n_states + s

    def loop_var(self, j: int) -> int:
        return (self.bound + 1) * self.n_states + 1 + j


class _Circuit:
    def __init__(self, first_free: int, true_var: int):
        self.next_var = first_free
        self.clauses: list[tuple[int, ...]] = [(true_var,)]
        self.T = true_var
        self.F = -true_var
        self.memo: dict[tuple, int] = {}

    def new_var(self) -> int:
        v = self.next_var
        self.next_var += 1
        return v

    def and_(self, lits) -> int:
        out = []
        seen = set()
        for lit in lits:
            if lit == self.F or -lit in seen:
                return self.F
            if lit == self.T or lit in seen:
                continue
            seen.add(lit)
            out.append(lit)
        if not out:
            return self.T
        if len(out) == 1:
            return out[0]
        key = ("and",) + tuple(sorted(out))
        g = self.memo.get(key)
        if g is None:
            g = self.new_var()
            for lit in out:
                self.clauses.append((-g, lit))
            self.clauses.append((g,) + tuple(-lit for lit in out))
            self.memo[key] = g
        return g

    def or_(self, lits) -> int:
        return -self.and_([-lit for lit in lits])


class _Encoder:
    def __init__(self, ts: TransitionSystem, k: int, circ: _Circuit, layout: BmcLayout):
        self.ts, self.k, self.c, self.layout = ts, k, circ, layout
        self.memo: dict = {}
        self.atom_memo: dict = {}
        by_label: dict = {}
        for s, y in enumerate(ts.output_map):
            by_label.setdefault(y, []).append(s)
        self.by_label = by_label

    def atom(self, q, lab, i) -> int:
        key = (q, lab, i)
        if key not in self.atom_memo:
            states = self.by_label.get((q, lab), [])
            self.atom_memo[key] = self.c.or_([self.layout.state_var(i, s) for s in states])
        return self.atom_memo[key]

    def enc(self, f, i: int, loop: int | None) -> int:
        key = (f, i, loop)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        c, k = self.c, self.k
        if isinstance(f, NConst):
            r = c.T if f.value else c.F
        elif isinstance(f, NLit):
            a = self.atom(f.q, f.k, i)
            r = a if f.positive else -a
        elif isinstance(f, NAnd):
            r = c.and_([self.enc(f.left, i, loop), self.enc(f.right, i, loop)])
        elif isinstance(f, NOr):
            r = c.or_([self.enc(f.left, i, loop), self.enc(f.right, i, loop)])
        elif isinstance(f, NNext):
            if i < k:
                r = self.enc(f.arg, i + 1, loop)
            else:
                r = c.F if loop is None else self.enc(f.arg, loop, loop)
        elif isinstance(f, NUntil):
            r = self._until(f, i, loop)
        elif isinstance(f, NRelease):
            r = self._release(f, i, loop)
        else:
            raise TypeError(f"not an NNF node: {f!r}")
        self.memo[key] = r
        return r

    def _until(self, f, i, loop):
        c, k = self.c, self.k
        psi = lambda n: self.enc(f.left, n, loop)
        theta = lambda n: self.enc(f.right, n, loop)
        terms = []
        prefix = c.T
        for j in range(i, k + 1):
            terms.append(c.and_([theta(j), prefix]))
            prefix = c.and_([prefix, psi(j)])
        if loop is not None and loop < i:
            # prefix now holds psi on i..k; wrap around to loop..i-1
            wrap = prefix
            for j in range(loop, i):
                terms.append(c.and_([theta(j), wrap]))
                wrap = c.and_([wrap, psi(j)])
        return c.or_(terms)

    def _release(self, f, i, loop):
        c, k = self.c, self.k
        psi = lambda n: self.enc(f.left, n, loop)
        theta = lambda n: self.enc(f.right, n, loop)
        terms = []
        if loop is not None:
            terms.append(c.and_([theta(j) for j in range(min(i, loop), k + 1)]))
        prefix = c.T
        for j in range(i, k + 1):
            prefix = c.and_([prefix, theta(j)])
            terms.append(c.and_([psi(j), prefix]))
        if loop is not None and loop < i:
            wrap = prefix
            for j in range(loop, i):
                wrap = c.and_([wrap, theta(j)])
                terms.append(c.and_([psi(j), wrap]))
        return c.or_(terms)


def _at_most_one(circ: _Circuit, lits: list[int]):
    if len(lits) <= 6:
        for a in range(len(lits)):
            for b in range(a + 1, len(lits)):
                circ.clauses.append((-lits[a], -lits[b]))
        return
    # sequential counter: r_i = some of lits[0..i] is true
    prev = None
    for idx, lit in enumerate(lits):
        if idx == len(lits) - 1:
            if prev is not None:
                circ.clauses.append((-lit, -prev))
            break
        r = circ.new_var()
        circ.clauses.append((-lit, r))
        if prev is not None:
            circ.clauses.append((-prev, r))
            circ.clauses.append((-lit, -prev))
        prev = r


def encode_bmc(ts: TransitionSystem, phi: Formula, k: int) -> CnfFormula:
    """CNF satisfiable iff some k-step path from an initial state violates ``phi``.

    Paths are exactly ``k`` transitions long and either loop-free or lassos
    closing from step ``k`` back to some step ``j <= k``.
    """
    if k < 0:
        raise ValueError("bound must be non-negative")
    outs = set(ts.outputs)
    unknown = sorted((a.q, a.k) for a in atoms(phi) if (a.q, a.k) not in outs)
    if unknown:
        raise AlphabetError(f"atoms {unknown} are not outputs of the system")
    N = ts.n_states
    true_var = (k + 1) * N + (k + 1) + 1
    layout = BmcLayout(N, k, true_var, phi)
    circ = _Circuit(true_var + 1, true_var)
    cl = circ.clauses
    x = layout.state_var
    cl.append(tuple(x(0, s) for s in sorted(ts.initial_states)))
    for i in range(k + 1):
        row = [x(i, s) for s in range(N)]
        cl.append(tuple(row))
        _at_most_one(circ, row)
    for i in range(k):
        for s in range(N):
            cl.append((-x(i, s),) + tuple(x(i + 1, t) for t in ts.successors(s)))
    loops = [layout.loop_var(j) for j in range(k + 1)]
    _at_most_one(circ, loops)
    for j, lv in enumerate(loops):
        for s in range(N):
            cl.append((-lv, -x(k, s)) + tuple(x(j, t) for t in ts.successors(s)))

    neg = to_nnf(Not(phi))
    enc = _Encoder(ts, k, circ, layout)
    no_loop = circ.and_([-lv for lv in loops] + [enc.enc(neg, 0, None)])
    cases = [no_loop] + [circ.and_([lv, enc.enc(neg, 0, j)]) for j, lv in enumerate(loops)]
    top = circ.or_(cases)
    cl.append((top,))
    var_map = (f"bmc states={N} bound={k} x(i,s)=1+i*{N}+s "
               f"l(j)={(k + 1) * N + 1}+j true={true_var} aux>={true_var + 1}")
    return CnfFormula(circ.next_var - 1, tuple(cl), var_map, layout)


def decode_witness(cnf: CnfFormula, assignment, ts: TransitionSystem, k: int) -> Trace:
    """Read the path out of a satisfying assignment and re-check it."""
    layout: BmcLayout = cnf.layout
    if layout is None or layout.bound != k or layout.n_states != ts.n_states:
        raise ValueError("formula was not produced by encode_bmc for this system and bound")
    states = []
    for i in range(k + 1):
        on = [s for s in range(ts.n_states) if assignment[layout.state_var(i, s)]]
        if len(on) != 1:
            raise WitnessError(f"step {i}: {len(on)} states selected")
        states.append(on[0])
    loops = [j for j in range(k + 1) if assignment[layout.loop_var(j)]]
    if len(loops) > 1:
        raise WitnessError(f"several loop points selected: {loops}")
    loop = loops[0] if loops else None
    if states[0] not in ts.initial_states:
        raise WitnessError("witness does not start in an initial state")
    for a, b in zip(states, states[1:]):
        if not ts.has_edge(a, b):
            raise WitnessError(f"witness uses missing transition {a} -> {b}")
    if loop is not None and not ts.has_edge(states[-1], states[loop]):
        raise WitnessError("witness loop-back is not a transition")
    trace = Trace(tuple(ts.output_map[s] for s in states), loop, tuple(states))
    if not eval_trace(Not(layout.phi), trace):
        raise WitnessError("decoded trace does not violate the formula")
    return trace


def check_bmc(ts: TransitionSystem, phi: Formula, k: int, *, seed: int = 0,
              max_conflicts: int | None = None) -> tuple[SatResult, Trace | None, CnfFormula]:
    """Encode, solve and decode in one go."""
    cnf = encode_bmc(ts, phi, k)
    res = sat_solve(cnf, seed=seed, max_conflicts=max_conflicts)
    trace = decode_witness(cnf, res.assignment, ts, k) if res.sat else None
    return res, trace, cnf
