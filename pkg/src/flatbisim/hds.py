"""Hybrid models: per-mode continuous abstractions glued by a discrete supervisor.

A product state is ``(q, y)``: a mode and an abstract continuous state of
that mode's plant.  Its output is ``(q, k)`` where ``k`` is the guard label
of ``y``, so LTL atoms address product outputs directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .flat import (
    BnfChain, FlatAlphabetSpec, bnf_quotient, bnf_slice_box, bnf_slice_partition, bnf_state_id,
    bnf_states, difference_flat_quotient, DEFAULT_WINDOW_BUDGET,
)
from .lattice import DEFAULT_CELL_BUDGET, LatticePartition, LinearSystem, build_lattice_abstraction
from .ts import TransitionSystem

__all__ = [
    "LatticePlant", "GuardBox", "ModeSpec", "HybridModel", "ModelError", "ModeAbstraction",
    "abstract_mode", "abstract_state_names", "discrete_transition_system", "compose_abstraction", "product_state",
    "initial_from_points", "split_product_state", "replay_product_path",
]


class ModelError(ValueError):
    """Inconsistent hybrid model (missing modes, guard boxes cutting cells, ...)."""


@dataclass(frozen=True)
class LatticePlant:
    system: LinearSystem
    partition: LatticePartition


Plant = Union[LatticePlant, BnfChain, FlatAlphabetSpec]


@dataclass(frozen=True)
class GuardBox:
    """Half-open axis-aligned box ``[lower, upper)``; infinite bounds allowed."""

    label: str
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ModelError(f"guard box {self.label!r}: bound lengths differ")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


@dataclass(frozen=True)
class ModeSpec:
    """Plant of one mode plus how its abstract states get guard labels.

    Geometric plants use ``boxes``; a flat alphabet plant uses ``symbols``,
    mapping the current (first) symbol of a window to a label.  States not
    covered get ``default_label``.  ``state_labels`` overrides all of that
    with one label per abstract state.
    """

    plant: Plant
    boxes: tuple[GuardBox, ...] = ()
    symbols: Mapping[str, str] = field(default_factory=dict)
    default_label: str | None = None
    state_labels: tuple[str, ...] | None = None


@dataclass(frozen=True)
class HybridModel:
    modes: tuple[str, ...]
    labels: tuple[str, ...]
    h: Mapping[tuple[str, str], str]
    mode_specs: Mapping[str, ModeSpec]
    rehome: Mapping[tuple[str, str], Sequence[int]] = field(default_factory=dict)
    initial: Sequence[tuple[str, int]] | None = None

    def __post_init__(self):
        if not self.modes or not self.labels:
            raise ModelError("a hybrid model needs at least one mode and one label")
        if len(set(self.modes)) != len(self.modes) or len(set(self.labels)) != len(self.labels):
            raise ModelError("duplicate mode or label names")
        for (q, k), q2 in self.h.items():
            if q not in self.modes or k not in self.labels or q2 not in self.modes:
                raise ModelError(f"h entry ({q}, {k}) -> {q2} names an undeclared mode or label")
        missing = [(q, k) for q in self.modes for k in self.labels if (q, k) not in self.h]
        if missing:
            raise ModelError(f"h is not total: missing {missing[:5]}")
        for q in self.modes:
            if q not in self.mode_specs:
                raise ModelError(f"mode {q!r} has no plant")

    def target(self, q: str, k: str) -> str:
        return self.h[(q, k)]


@dataclass(frozen=True)
class ModeAbstraction:
    ts: TransitionSystem
    labels: tuple[str, ...]


def _box_label(lower, upper, boxes, default, what):
    for box in boxes:
        if len(box.lower) != len(lower):
            raise ModelError(f"guard box {box.label!r} has {len(box.lower)} bounds, "
                             f"plant has dimension {len(lower)}")
        inside = np.all(lower >= box.lower) and np.all(upper <= box.upper)
        overlap = np.all(lower < box.upper) and np.all(upper > box.lower)
        if inside:
            return box.label
        if overlap:
            raise ModelError(f"guard box {box.label!r} cuts {what}; guard labels must be "
                             f"constant on abstract states")
    if default is None:
        raise ModelError(f"{what} is not covered by any guard box and there is no default label")
    return default


def abstract_mode(spec: ModeSpec, *, self_loops: bool = True,
                  cell_budget: int = DEFAULT_CELL_BUDGET,
                  window_budget: int = DEFAULT_WINDOW_BUDGET) -> ModeAbstraction:
    """Continuous abstraction of a mode's plant together with per-state guard labels."""
    plant = spec.plant
    if isinstance(plant, LatticePlant):
        ts = build_lattice_abstraction(plant.system, plant.partition,
                                       self_loops=self_loops, budget=cell_budget)
    elif isinstance(plant, BnfChain):
        ts = bnf_quotient(plant, self_loops=self_loops)
    elif isinstance(plant, FlatAlphabetSpec):
        if spec.boxes:
            raise ModelError("flat alphabet plants take symbol guards, not boxes")
        ts = difference_flat_quotient(plant, budget=window_budget)
    else:
        raise ModelError(f"unsupported plant type {type(plant).__name__}")
    if spec.state_labels is not None:
        if len(spec.state_labels) != ts.n_states:
            raise ModelError(f"{len(spec.state_labels)} state labels for {ts.n_states} states")
        return ModeAbstraction(ts, tuple(spec.state_labels))
    return ModeAbstraction(ts, _guard_labels(spec, ts))


def _guard_labels(spec: ModeSpec, ts: TransitionSystem) -> tuple[str, ...]:
    plant = spec.plant
    if isinstance(plant, LatticePlant):
        return tuple(_box_label(*plant.partition.cell_box(c), spec.boxes, spec.default_label,
                                f"cell {c}") for c in ts.states)
    if isinstance(plant, BnfChain):
        return tuple(_box_label(*bnf_slice_box(plant, s), spec.boxes, spec.default_label,
                                f"slice {s}") for s in bnf_states(plant))
    labs = []
    for y in ts.states:
        sym = ts.output_map[y]
        lab = spec.symbols.get(sym, spec.default_label)
        if lab is None:
            raise ModelError(f"symbol {sym!r} has no guard label and there is no default")
        labs.append(lab)
    return tuple(labs)


def abstract_state_names(plant: Plant) -> tuple[str, ...]:
    """Names the abstraction of ``plant`` gives its states, without building edges."""
    if isinstance(plant, LatticePlant):
        part = plant.partition
        if part.n <= 8:
            return tuple("c" + "_".join(map(str, part.cell_index(c)))
                         for c in range(part.cell_count))
        return tuple(str(c) for c in range(part.cell_count))
    if isinstance(plant, BnfChain):
        return tuple(str(s) for s in bnf_states(plant))
    raise ModelError(f"no geometric state names for {type(plant).__name__}")


def discrete_transition_system(model: HybridModel) -> TransitionSystem:
    """Supervisor alone: modes as states, ``q -> h(q, k)`` for every label ``k``."""
    idx = {q: i for i, q in enumerate(model.modes)}
    edges = {(idx[q], idx[model.target(q, k)]) for q in model.modes for k in model.labels}
    return TransitionSystem.build(len(model.modes), edges, list(model.modes),
                                  names=list(model.modes))


def product_state(model: HybridModel, abstractions: Mapping[str, ModeAbstraction],
                  q: str, y: int) -> int:
    off = 0
    for m in model.modes:
        if m == q:
            if not 0 <= y < abstractions[m].ts.n_states:
                raise ModelError(f"state {y} is not valid in mode {q!r}")
            return off + y
        off += abstractions[m].ts.n_states
    raise ModelError(f"unknown mode {q!r}")


def _geometry(plant):
    # abstract states coincide across modes iff the partitions do; dynamics may differ
    if isinstance(plant, LatticePlant):
        return ("lattice", plant.partition)
    return (type(plant).__name__, plant)


def _rehome_map(model, abstractions, q, q2):
    src, dst = abstractions[q].ts, abstractions[q2].ts
    table = model.rehome.get((q, q2))
    if table is not None:
        table = [int(v) for v in table]
        if len(table) != src.n_states or any(not 0 <= v < dst.n_states for v in table):
            raise ModelError(f"re-homing table {q} -> {q2} does not map every state validly")
        return table
    if _geometry(model.mode_specs[q].plant) != _geometry(model.mode_specs[q2].plant):
        raise ModelError(f"modes {q!r} and {q2!r} partition the continuous state differently "
                         f"and have no re-homing table; the switch has no defined target")
    return list(range(src.n_states))


def compose_abstraction(model: HybridModel, *, urgent: bool = True, self_loops: bool = True,
                        cell_budget: int = DEFAULT_CELL_BUDGET,
                        window_budget: int = DEFAULT_WINDOW_BUDGET,
                        abstractions: Mapping[str, ModeAbstraction] | None = None,
                        ) -> TransitionSystem:
    """Product of the supervisor with every mode's continuous abstraction.

    Product ids are ``offset(q) + y`` with modes in declaration order.  A
    state whose guard label switches the mode gets the switch edge to the
    same continuous state in the new mode; under ``urgent`` semantics that
    is its only edge.  Guards are read on the pre-transition state.
    """
    if abstractions is None:
        abstractions = {q: abstract_mode(model.mode_specs[q], self_loops=self_loops,
                                         cell_budget=cell_budget, window_budget=window_budget)
                        for q in model.modes}
    offsets, off = {}, 0
    for q in model.modes:
        offsets[q] = off
        off += abstractions[q].ts.n_states
    total = off
    edges = []
    output_map = []
    names = []
    for q in model.modes:
        ab = abstractions[q]
        o = offsets[q]
        rehomes = {}
        for y in ab.ts.states:
            k = ab.labels[y]
            if k not in model.labels:
                raise ModelError(f"mode {q!r} uses undeclared guard label {k!r}")
            output_map.append((q, k))
            names.append(f"{q}:{ab.ts.name(y)}")
            q2 = model.target(q, k)
            switching = q2 != q
            if switching:
                if q2 not in rehomes:
                    rehomes[q2] = _rehome_map(model, abstractions, q, q2)
                edges.append((o + y, offsets[q2] + rehomes[q2][y]))
            if not (switching and urgent):
                edges.extend((o + y, o + t) for t in ab.ts.successors(y))
    outputs = [(q, k) for q in model.modes for k in model.labels]
    initial = None
    if model.initial is not None:
        initial = [product_state(model, abstractions, q, y) for q, y in model.initial]
    return TransitionSystem.build(total, edges, output_map, outputs, names=names,
                                  initial=initial)


def initial_from_points(spec: ModeSpec, points: Sequence[Sequence[float]]) -> list[int]:
    """Abstract states of a mode's plant containing the given points."""
    plant = spec.plant
    if isinstance(plant, LatticePlant):
        return [plant.partition.cell_of_point(p) for p in points]
    if isinstance(plant, BnfChain):
        return [bnf_state_id(plant, bnf_slice_partition(plant, p)) for p in points]
    raise ModelError("initial points need a geometric plant")


def split_product_state(model: HybridModel, abstractions: Mapping[str, ModeAbstraction],
                        s: int) -> tuple[str, int]:
    """Inverse of :func:`product_state`."""
    off = 0
    for q in model.modes:
        n = abstractions[q].ts.n_states
        if s < off + n:
            return q, s - off
        off += n
    raise ModelError(f"product state {s} out of range")


def replay_product_path(model: HybridModel, abstractions: Mapping[str, ModeAbstraction],
                        path: Sequence[int], loop_back: int | None = None, *,
                        urgent: bool = True) -> None:
    """Re-check a product path step by step from the mode abstractions and ``h``.

    Independent of the composed graph; raises :class:`ModelError` at the
    first step that is neither a continuous move nor a legal switch.
    """
    steps = list(zip(path, path[1:]))
    if loop_back is not None:
        steps.append((path[-1], path[loop_back]))
    for i, (a, b) in enumerate(steps):
        qa, ya = split_product_state(model, abstractions, a)
        qb, yb = split_product_state(model, abstractions, b)
        k = abstractions[qa].labels[ya]
        q2 = model.target(qa, k)
        if qb != qa:
            if qb != q2:
                raise ModelError(f"step {i}: ({qa}, {k}) switches to {q2!r}, path goes to {qb!r}")
            if yb != _rehome_map(model, abstractions, qa, qb)[ya]:
                raise ModelError(f"step {i}: switch lands on the wrong continuous state")
        else:
            if q2 != qa and urgent:
                raise ModelError(f"step {i}: label {k!r} forces a switch in mode {qa!r}")
            if not abstractions[qa].ts.has_edge(ya, yb):
                raise ModelError(f"step {i}: no continuous edge {ya} -> {yb} in mode {qa!r}")
