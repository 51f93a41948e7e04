import itertools

import pytest

from flatbisim.bmc import check_bmc
from flatbisim.flat import BnfChain, FlatAlphabetSpec, SliceState, bnf_state_id
from flatbisim.hds import (
    GuardBox, HybridModel, LatticePlant, ModeSpec, ModelError, abstract_mode,
    compose_abstraction, discrete_transition_system, initial_from_points,
)
from flatbisim.lattice import LatticePartition, LinearSystem
from flatbisim.ltl import eval_trace, parse_ltl
from flatbisim.ts import BinaryRelation, TransitionSystem, check_bisimulation

INF = float("inf")


def _line(cells=3):
    return LatticePlant(LinearSystem.from_dense([[0.0]], [[1.0]]),
                        LatticePartition.uniform(1, 0.0, float(cells), 1.0))


def _model(modes, labels, h, specs, **kw):
    return HybridModel(tuple(modes), tuple(labels), h, specs, **kw)


def test_h_must_be_total():
    spec = ModeSpec(_line(), default_label="ok")
    with pytest.raises(ModelError):
        _model(["q0"], ["ok", "alarm"], {("q0", "ok"): "q0"}, {"q0": spec})


def test_discrete_system_self_loops_only():
    spec = ModeSpec(_line(), default_label="ok")
    m = _model(["a", "b"], ["ok"], {("a", "ok"): "a", ("b", "ok"): "b"}, {"a": spec, "b": spec})
    ts = discrete_transition_system(m)
    assert set(ts.transitions) == {(0, 0), (1, 1)}


def test_discrete_system_switch_edge():
    spec = ModeSpec(_line(), default_label="k0")
    h = {("q0", "k0"): "q0", ("q0", "k1"): "q1", ("q1", "k0"): "q1", ("q1", "k1"): "q1"}
    ts = discrete_transition_system(_model(["q0", "q1"], ["k0", "k1"], h,
                                           {"q0": spec, "q1": spec}))
    assert set(ts.transitions) == {(0, 0), (0, 1), (1, 1)}


def test_single_mode_is_relabelled_continuous_abstraction():
    spec = ModeSpec(_line(), boxes=(GuardBox("far", [2.0], [INF]),), default_label="near")
    m = _model(["q0"], ["near", "far"], {("q0", "near"): "q0", ("q0", "far"): "q0"},
               {"q0": spec})
    prod = compose_abstraction(m)
    cont = abstract_mode(spec).ts
    assert prod.transitions == cont.transitions
    assert prod.output_map == (("q0", "near"), ("q0", "near"), ("q0", "far"))
    assert set(prod.outputs) == {("q0", "near"), ("q0", "far")}


def _alarm_model(urgent_cells=3):
    plant = _line(urgent_cells)
    spec = ModeSpec(plant, boxes=(GuardBox("alarm", [2.0], [3.0]),), default_label="ok")
    h = {("q0", "ok"): "q0", ("q0", "alarm"): "q1", ("q1", "ok"): "q1", ("q1", "alarm"): "q1"}
    return _model(["q0", "q1"], ["ok", "alarm"], h, {"q0": spec, "q1": spec})


def test_switch_follows_every_entry_into_alarm():
    prod = compose_abstraction(_alarm_model())
    # q0 cells are 0..2, q1 cells 3..5; cell 2 is the alarm
    entries = [e for e in prod.transitions if e[1] == 2 and e[0] != 2]
    assert entries == [(1, 2)]
    assert prod.successors(2) == (5,)
    assert prod.output_map[2] == ("q0", "alarm") and prod.output_map[5] == ("q1", "alarm")
    assert prod.n_states == 6


def test_non_urgent_keeps_continuous_edges():
    prod = compose_abstraction(_alarm_model(), urgent=False)
    assert set(prod.successors(2)) == {1, 2, 5}


def test_unreachable_mode_present_but_unreached():
    spec = ModeSpec(_line(), default_label="ok")
    h = {("q0", "ok"): "q0", ("q1", "ok"): "q0"}
    m = _model(["q0", "q1"], ["ok"], h, {"q0": spec, "q1": spec}, initial=[("q0", 0)])
    prod = compose_abstraction(m)
    assert prod.n_states == 6
    assert prod.reachable() == frozenset({0, 1, 2})


def test_output_alphabet_is_all_mode_label_pairs():
    prod = compose_abstraction(_alarm_model())
    assert set(prod.outputs) == set(itertools.product(["q0", "q1"], ["ok", "alarm"]))


def test_projection_bisimilar_to_shared_plant():
    m = _alarm_model(4)
    prod = compose_abstraction(m, urgent=False)
    cont = abstract_mode(m.mode_specs["q0"]).ts
    n = cont.n_states
    relabeled = TransitionSystem.build(prod.n_states, prod.transitions,
                                       [s % n for s in prod.states], cont.outputs)
    rel = BinaryRelation.of((s, s % n) for s in prod.states)
    assert check_bisimulation(relabeled, cont, rel)


def test_guard_box_cutting_a_cell_rejected():
    spec = ModeSpec(_line(), boxes=(GuardBox("alarm", [1.5], [3.0]),), default_label="ok")
    with pytest.raises(ModelError, match="constant"):
        abstract_mode(spec)


def test_uncovered_cell_without_default_rejected():
    spec = ModeSpec(_line(), boxes=(GuardBox("alarm", [2.0], [3.0]),))
    with pytest.raises(ModelError):
        abstract_mode(spec)


def test_incompatible_partitions_need_rehoming():
    a = ModeSpec(_line(3), boxes=(GuardBox("alarm", [2.0], [3.0]),), default_label="ok")
    b = ModeSpec(_line(4), default_label="ok")
    h = {("q0", "ok"): "q0", ("q0", "alarm"): "q1", ("q1", "ok"): "q1", ("q1", "alarm"): "q1"}
    m = _model(["q0", "q1"], ["ok", "alarm"], h, {"q0": a, "q1": b})
    with pytest.raises(ModelError, match="re-homing"):
        compose_abstraction(m)
    fixed = _model(["q0", "q1"], ["ok", "alarm"], h, {"q0": a, "q1": b},
                   rehome={("q0", "q1"): [0, 1, 3]})
    prod = compose_abstraction(fixed)
    assert prod.successors(2) == (3 + 3,)


def test_same_partition_different_dynamics_share_states():
    part = LatticePartition.uniform(1, 0.0, 3.0, 1.0)
    up = LatticePlant(LinearSystem.from_dense([[0.0]], [[1.0]]), part)
    still = LatticePlant(LinearSystem.from_dense([[0.0]], [[0.0]]), part)
    h = {("q0", "ok"): "q0", ("q0", "alarm"): "q1", ("q1", "ok"): "q1", ("q1", "alarm"): "q1"}
    m = _model(["q0", "q1"], ["ok", "alarm"], h,
               {"q0": ModeSpec(up, boxes=(GuardBox("alarm", [2.0], [3.0]),), default_label="ok"),
                "q1": ModeSpec(still, default_label="ok")})
    prod = compose_abstraction(m)
    assert prod.successors(2) == (5,)
    assert prod.successors(5) == (5,)


def test_flat_alphabet_symbol_guards():
    spec = ModeSpec(FlatAlphabetSpec(("lo", "hi"), 2), symbols={"hi": "alarm"}, default_label="ok")
    ab = abstract_mode(spec)
    assert ab.labels == ("ok", "ok", "alarm", "alarm")
    with pytest.raises(ModelError):
        abstract_mode(ModeSpec(FlatAlphabetSpec(("a",), 1), boxes=(GuardBox("x", [0], [1]),)))


def _relay_demo():
    chain = BnfChain(2, 1.0, (0.0, 4.0), 1.0)
    boxes = (GuardBox("alarm", [2.0, -INF], [3.0, INF]),
             GuardBox("collapsed", [3.0, -INF], [4.0, INF]))
    spec = ModeSpec(chain, boxes=boxes, default_label="ok")
    labels = ("ok", "alarm", "collapsed")
    h = {(q, k): q for q in ("q0", "q1") for k in labels}
    h[("q0", "alarm")] = "q1"
    h[("q0", "collapsed")] = "q1"
    init = [("q0", y) for y in initial_from_points(spec, [[0.5, 0.5]])]
    return _model(["q0", "q1"], labels, h, {"q0": spec, "q1": spec}, initial=init)


def test_relay_demo_vulnerable_only_from_bound_four():
    m = _relay_demo()
    prod = compose_abstraction(m)
    assert prod.initial_states == {bnf_state_id(m.mode_specs["q0"].plant, SliceState(0, "+"))}
    labels = [k for k in m.labels]
    safety = parse_ltl("G !(q1,collapsed)", m.modes, labels)
    alert = parse_ltl("(!(q1,collapsed)) U (q0,alarm)", m.modes, labels)
    assert not check_bmc(prod, safety, 3)[0].sat
    res, trace, _ = check_bmc(prod, safety, 4)
    assert res.sat
    assert not eval_trace(safety, trace)
    assert eval_trace(alert, trace)
    assert ("q0", "alarm") in trace.steps
