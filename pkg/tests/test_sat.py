import random

import pytest
from hypothesis import given, settings, strategies as st

from flatbisim.sat import (
    SAT, TIMEOUT, UNSAT, CnfFormula, dimacs_export, dimacs_parse, sat_solve,
)

from oracles import brute_force_sat


def test_small_examples():
    r = sat_solve(CnfFormula(2, ((1, 2), (-1,))))
    assert r.status == SAT and r.assignment[1] is False and r.assignment[2] is True
    assert sat_solve(CnfFormula(1, ((1,), (-1,)))).status == UNSAT


def test_no_clauses_is_sat():
    assert sat_solve(CnfFormula(3, ())).sat


def test_literal_out_of_range_rejected():
    with pytest.raises(ValueError):
        CnfFormula(2, ((3,),))
    with pytest.raises(ValueError):
        CnfFormula(2, ((),))


def _pigeonhole(holes):
    pigeons = holes + 1
    var = lambda p, h: p * holes + h + 1
    cls = [tuple(var(p, h) for h in range(holes)) for p in range(pigeons)]
    for h in range(holes):
        for a in range(pigeons):
            for b in range(a + 1, pigeons):
                cls.append((-var(a, h), -var(b, h)))
    return CnfFormula(pigeons * holes, tuple(cls))


def test_pigeonhole_unsat():
    assert sat_solve(_pigeonhole(5)).status == UNSAT


def test_conflict_cap_times_out():
    r = sat_solve(_pigeonhole(8), max_conflicts=10)
    assert r.status == TIMEOUT and r.assignment is None


def test_dimacs_export_layout():
    cnf = CnfFormula(1, ((1,),), var_map="x")
    data = dimacs_export(cnf)
    lines = data.split(b"\n")
    assert lines[0].startswith(b"c varmap sha256:") and len(lines[0]) == len("c varmap sha256:") + 16
    assert b"\n".join(lines[1:]) == b"p cnf 1 1\n1 0\n"
    assert b"\r" not in data


def test_dimacs_round_trip():
    cnf = CnfFormula(4, ((1, -2), (3,), (-4, 2, 1)))
    back = dimacs_parse(dimacs_export(cnf))
    assert back.num_vars == 4 and back.clauses == cnf.clauses


def test_dimacs_parse_rejects_missing_header():
    with pytest.raises(ValueError):
        dimacs_parse("1 2 0\n")


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 8), st.data())
def test_matches_brute_force(num_vars, data):
    lit = st.integers(1, num_vars).flatmap(lambda v: st.sampled_from([v, -v]))
    clauses = data.draw(st.lists(st.lists(lit, min_size=1, max_size=3).map(tuple), max_size=30))
    seed = data.draw(st.integers(0, 5))
    r = sat_solve(CnfFormula(num_vars, tuple(clauses)), seed=seed)
    expected = brute_force_sat(num_vars, clauses)
    assert r.sat == (expected is not None)


def test_random_3cnf_against_brute_force():
    rng = random.Random(7)
    for _ in range(100):
        cls = tuple(tuple(rng.choice((-1, 1)) * v for v in rng.sample(range(1, 13), 3))
                    for _ in range(52))
        cnf = CnfFormula(12, cls)
        r = sat_solve(cnf, seed=rng.randrange(100))
        assert r.sat == (brute_force_sat(12, cls) is not None)
        if r.sat:
            assert cnf.evaluate(r.assignment)


def test_seed_changes_search_not_verdict():
    rng = random.Random(3)
    cls = tuple(tuple(rng.choice((-1, 1)) * v for v in rng.sample(range(1, 41), 3))
                for _ in range(170))
    cnf = CnfFormula(40, cls)
    verdicts = {sat_solve(cnf, seed=s).status for s in range(4)}
    assert len(verdicts) == 1
