"""CNF formulas, a CDCL SAT solver and DIMACS I/O.

The solver uses two watched literals, first-UIP clause learning,
VSIDS-style variable activity, phase saving, geometric restarts and
activity-based deletion of learnt clauses.  Runs are deterministic for a
given seed.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

__all__ = [
    "CnfFormula",
    "SatResult",
    "SAT",
    "UNSAT",
    "TIMEOUT",
    "sat_solve",
    "dimacs_export",
    "dimacs_parse",
]

SAT = "SAT"
UNSAT = "UNSAT"
TIMEOUT = "TIMEOUT"


@dataclass(frozen=True, eq=False)
class CnfFormula:
    """Clauses over variables ``1..num_vars`` as signed integer literals.

    ``var_map`` is a free-form description of what the variables mean; its
    digest heads the DIMACS export.  ``layout`` carries encoder metadata.
    """

    num_vars: int
    clauses: tuple[tuple[int, ...], ...]
    var_map: str = ""
    layout: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        clauses = tuple(tuple(int(l) for l in c) for c in self.clauses)
        for c in clauses:
            if not c:
                raise ValueError("empty clause at construction")
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"literal {lit} outside 1..{self.num_vars}")
        object.__setattr__(self, "clauses", clauses)

    def evaluate(self, assignment: Sequence[bool]) -> bool:
        """``assignment[v]`` is the value of variable ``v`` (index 0 unused)."""
        return all(any(assignment[abs(l)] == (l > 0) for l in c) for c in self.clauses)

    def digest(self) -> str:
        return hashlib.sha256(self.var_map.encode()).hexdigest()[:16]


@dataclass
class SatResult:
    status: str
    assignment: list[bool] | None = None
    conflicts: int = 0
    decisions: int = 0
    propagations: int = 0
    restarts: int = 0

    @property
    def sat(self) -> bool:
        return self.status == SAT


def dimacs_export(cnf: CnfFormula) -> bytes:
    lines = [f"c varmap sha256:{cnf.digest()}", f"p cnf {cnf.num_vars} {len(cnf.clauses)}"]
    lines.extend(" ".join(map(str, c)) + " 0" for c in cnf.clauses)
    return ("\n".join(lines) + "\n").encode("ascii")


def dimacs_parse(data: bytes | str) -> CnfFormula:
    text = data.decode("ascii") if isinstance(data, bytes) else data
    num_vars = None
    clauses, cur = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ValueError(f"bad problem line {line!r}")
            num_vars = int(parts[2])
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                clauses.append(tuple(cur))
                cur = []
            else:
                cur.append(lit)
    if cur:
        clauses.append(tuple(cur))
    if num_vars is None:
        raise ValueError("missing 'p cnf' header")
    return CnfFormula(num_vars, tuple(clauses))


class _Solver:
    # literal code: 2*v for +v, 2*v+1 for -v; value code: 1 true, 0 false, -1 unset

    def __init__(self, cnf: CnfFormula, seed: int):
        n = cnf.num_vars
        self.n = n
        self.assign = [-1] * (n + 1)
        self.level = [0] * (n + 1)
        self.reason: list[list[int] | None] = [None] * (n + 1)
        self.phase = [1] * (n + 1)
        self.watches: list[list[list[int]]] = [[] for _ in range(2 * n + 2)]
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        rng = random.Random(seed)
        self.activity = [rng.random() * 1e-5 for _ in range(n + 1)]
        self.var_inc = 1.0
        self.cla_inc = 1.0
        self.heap = [(-self.activity[v], v) for v in range(1, n + 1)]
        heapq.heapify(self.heap)
        self.learnts: list[list[int]] = []
        self.cla_act: dict[int, float] = {}
        self.ok = True
        self.stats = dict(conflicts=0, decisions=0, propagations=0, restarts=0)
        for clause in cnf.clauses:
            if not self.add_clause(clause):
                self.ok = False
                break

    @staticmethod
    def code(lit: int) -> int:
        return 2 * lit if lit > 0 else -2 * lit + 1

    def value(self, c: int) -> int:
        a = self.assign[c >> 1]
        return -1 if a < 0 else a ^ (c & 1)

    def add_clause(self, lits: Iterable[int]) -> bool:
        seen = set()
        codes = []
        for lit in lits:
            c = self.code(lit)
            if c ^ 1 in seen:
                return True  # tautology
            if c not in seen:
                seen.add(c)
                codes.append(c)
        # drop literals false at level 0, satisfied clauses vanish
        kept = []
        for c in codes:
            v = self.value(c)
            if v == 1:
                return True
            if v == -1:
                kept.append(c)
        if not kept:
            return False
        if len(kept) == 1:
            self.enqueue(kept[0], None)
            return self.propagate() is None
        self.watches[kept[0]].append(kept)
        self.watches[kept[1]].append(kept)
        return True

    def enqueue(self, c: int, reason):
        v = c >> 1
        self.assign[v] = 1 ^ (c & 1)
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(c)

    def propagate(self):
        """Unit propagation; returns a conflicting clause or None."""
        assign, watches, trail = self.assign, self.watches, self.trail
        while self.qhead < len(trail):
            p = trail[self.qhead]
            self.qhead += 1
            self.stats["propagations"] += 1
            false_lit = p ^ 1
            ws = watches[false_lit]
            i = j = 0
            n = len(ws)
            while i < n:
                clause = ws[i]
                i += 1
                if clause[0] == false_lit:
                    clause[0], clause[1] = clause[1], false_lit
                first = clause[0]
                a = assign[first >> 1]
                if a >= 0 and (a ^ (first & 1)) == 1:
                    ws[j] = clause
                    j += 1
                    continue
                found = False
                for k in range(2, len(clause)):
                    lit = clause[k]
                    a = assign[lit >> 1]
                    if a < 0 or (a ^ (lit & 1)) == 1:
                        clause[1], clause[k] = lit, false_lit
                        watches[lit].append(clause)
                        found = True
                        break
                if found:
                    continue
                ws[j] = clause
                j += 1
                a = assign[first >> 1]
                if a < 0:
                    self.enqueue(first, clause)
                else:
                    # conflict: keep remaining watchers
                    while i < n:
                        ws[j] = ws[i]
                        j += 1
                        i += 1
                    del ws[j:]
                    self.qhead = len(trail)
                    return clause
            del ws[j:]
        return None

    def bump_var(self, v: int):
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            for u in range(1, self.n + 1):
                self.activity[u] *= 1e-100
            self.var_inc *= 1e-100
            self.heap = [(-self.activity[u], u) for u in range(1, self.n + 1)
                         if self.assign[u] < 0]
            heapq.heapify(self.heap)
        elif self.assign[v] < 0:
            heapq.heappush(self.heap, (-self.activity[v], v))

    def bump_clause(self, clause):
        key = id(clause)
        if key in self.cla_act:
            self.cla_act[key] += self.cla_inc
            if self.cla_act[key] > 1e20:
                for k in self.cla_act:
                    self.cla_act[k] *= 1e-20
                self.cla_inc *= 1e-20

    def analyze(self, confl):
        """First-UIP learning; returns (learnt clause codes, backjump level)."""
        seen = [False] * (self.n + 1)
        learnt = [0]
        counter = 0
        p = None
        idx = len(self.trail) - 1
        cur_level = len(self.trail_lim)
        clause = confl
        while True:
            self.bump_clause(clause)
            for c in clause:
                if p is not None and c == p:
                    continue
                v = c >> 1
                if not seen[v] and self.level[v] > 0:
                    seen[v] = True
                    self.bump_var(v)
                    if self.level[v] >= cur_level:
                        counter += 1
                    else:
                        learnt.append(c)
            while not seen[self.trail[idx] >> 1]:
                idx -= 1
            p = self.trail[idx]
            idx -= 1
            v = p >> 1
            clause = self.reason[v]
            seen[v] = False
            counter -= 1
            if counter == 0:
                break
        learnt[0] = p ^ 1
        # drop literals implied by the rest of the clause
        marks = {c >> 1 for c in learnt}
        keep = [learnt[0]]
        for c in learnt[1:]:
            r = self.reason[c >> 1]
            if r is None or any((d >> 1) not in marks and self.level[d >> 1] > 0
                                for d in r if d != c ^ 1):
                keep.append(c)
        learnt = keep
        if len(learnt) == 1:
            return learnt, 0
        best = max(range(1, len(learnt)), key=lambda i: self.level[learnt[i] >> 1])
        learnt[1], learnt[best] = learnt[best], learnt[1]
        return learnt, self.level[learnt[1] >> 1]

    def cancel_until(self, lvl: int):
        if len(self.trail_lim) <= lvl:
            return
        stop = self.trail_lim[lvl]
        for c in self.trail[stop:]:
            v = c >> 1
            self.phase[v] = self.assign[v]
            self.assign[v] = -1
            self.reason[v] = None
            heapq.heappush(self.heap, (-self.activity[v], v))
        del self.trail[stop:]
        del self.trail_lim[lvl:]
        self.qhead = len(self.trail)

    def pick(self) -> int:
        heap = self.heap
        while heap:
            neg, v = heapq.heappop(heap)
            if self.assign[v] < 0 and -neg == self.activity[v]:
                return v
        for v in range(1, self.n + 1):
            if self.assign[v] < 0:
                return v
        return 0

    def reduce_db(self):
        locked = {id(self.reason[c >> 1]) for c in self.trail if self.reason[c >> 1] is not None}
        ranked = sorted(self.learnts, key=lambda cl: self.cla_act.get(id(cl), 0.0))
        half = len(ranked) // 2
        dead = set()
        for cl in ranked[:half]:
            if len(cl) > 2 and id(cl) not in locked:
                dead.add(id(cl))
        if not dead:
            return
        self.learnts = [cl for cl in self.learnts if id(cl) not in dead]
        for k in dead:
            self.cla_act.pop(k, None)
        for w in range(len(self.watches)):
            ws = self.watches[w]
            if ws:
                self.watches[w] = [cl for cl in ws if id(cl) not in dead]

    def solve(self, max_conflicts: int | None) -> str:
        if not self.ok:
            return UNSAT
        if self.propagate() is not None:
            return UNSAT
        restart_limit = 100.0
        conflicts_since = 0
        max_learnts = max(1000, len(self.watches) // 3)
        while True:
            confl = self.propagate()
            if confl is not None:
                self.stats["conflicts"] += 1
                conflicts_since += 1
                if not self.trail_lim:
                    return UNSAT
                learnt, back = self.analyze(confl)
                self.cancel_until(back)
                if len(learnt) == 1:
                    self.enqueue(learnt[0], None)
                else:
                    self.watches[learnt[0]].append(learnt)
                    self.watches[learnt[1]].append(learnt)
                    self.learnts.append(learnt)
                    self.cla_act[id(learnt)] = self.cla_inc
                    self.enqueue(learnt[0], learnt)
                self.var_inc /= 0.95
                self.cla_inc /= 0.999
                if max_conflicts is not None and self.stats["conflicts"] >= max_conflicts:
                    return TIMEOUT
                continue
            if conflicts_since >= restart_limit:
                self.stats["restarts"] += 1
                conflicts_since = 0
                restart_limit *= 1.5
                self.cancel_until(0)
                max_learnts = int(max_learnts * 1.1)
            if len(self.learnts) - len(self.trail) >= max_learnts:
                self.reduce_db()
            v = self.pick()
            if v == 0:
                return SAT
            self.stats["decisions"] += 1
            self.trail_lim.append(len(self.trail))
            self.enqueue(2 * v + (1 - self.phase[v]), None)


def sat_solve(cnf: CnfFormula, *, seed: int = 0, max_conflicts: int | None = None) -> SatResult:
    """Decide ``cnf``.  ``max_conflicts`` caps the search (result ``TIMEOUT``)."""
    solver = _Solver(cnf, seed)
    status = solver.solve(max_conflicts)
    result = SatResult(status, **solver.stats)
    if status == SAT:
        model = [False] * (cnf.num_vars + 1)
        for v in range(1, cnf.num_vars + 1):
            model[v] = solver.assign[v] == 1
        if not cnf.evaluate(model):
            raise AssertionError("solver produced a non-model")
        result.assignment = model
    return result
