"""Finite transition systems, quotients and bisimulation checks.

A :class:`TransitionSystem` holds dense integer states ``0..n-1``, a set of
directed transitions, an output alphabet and a total output map.  Every
abstraction in the package produces one and every checker consumes one.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

__all__ = [
    "TransitionSystem",
    "StatePartition",
    "BinaryRelation",
    "PartitionError",
    "quotient",
    "check_quotient_condition",
    "coarsest_bisimulation",
    "check_bisimulation",
    "partition_graph",
    "to_dot",
    "to_json",
    "from_json",
]


class PartitionError(ValueError):
    """Raised when a partition merges states with different outputs."""


def _label_key(label):
    # total order over mixed label types (str, int, tuples of those)
    if isinstance(label, tuple):
        return (2, tuple(_label_key(x) for x in label))
    if isinstance(label, (int, float)):
        return (0, label)
    return (1, str(label))


@dataclass(frozen=True, eq=False)
class TransitionSystem:
    """Finite labeled graph ``(S, ->, Y, h)``.

    States are the integers ``0..n_states-1``.  ``names`` optionally gives a
    display name per state.  ``initial`` restricts where paths may start;
    ``None`` means every state is initial.
    """

    n_states: int
    transitions: tuple[tuple[int, int], ...]
    outputs: tuple[Hashable, ...]
    output_map: tuple[Hashable, ...]
    names: tuple[str, ...] | None = None
    initial: frozenset[int] | None = None
    _succ: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    _pred: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n_states
        if n <= 0:
            raise ValueError("transition system needs at least one state")
        if len(self.output_map) != n:
            raise ValueError("output_map must be total over states")
        edges = sorted(set((int(a), int(b)) for a, b in self.transitions))
        for a, b in edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"transition ({a}, {b}) leaves the state set")
        outs = set(self.outputs)
        if not outs:
            raise ValueError("output set must be non-empty")
        missing = set(self.output_map) - outs
        if missing:
            raise ValueError(f"output_map uses undeclared labels {sorted(map(str, missing))}")
        if self.names is not None and len(self.names) != n:
            raise ValueError("names must have one entry per state")
        if self.initial is not None:
            init = frozenset(int(s) for s in self.initial)
            if not init or min(init) < 0 or max(init) >= n:
                raise ValueError("initial states must be a non-empty subset of states")
            object.__setattr__(self, "initial", init)
        object.__setattr__(self, "transitions", tuple(edges))
        object.__setattr__(self, "outputs", tuple(sorted(outs, key=_label_key)))
        object.__setattr__(self, "output_map", tuple(self.output_map))
        succ: list[list[int]] = [[] for _ in range(n)]
        pred: list[list[int]] = [[] for _ in range(n)]
        for a, b in edges:
            succ[a].append(b)
            pred[b].append(a)
        object.__setattr__(self, "_succ", tuple(tuple(s) for s in succ))
        object.__setattr__(self, "_pred", tuple(tuple(p) for p in pred))

    @classmethod
    def build(cls, n_states: int, transitions: Iterable[tuple[int, int]],
              output_map: Sequence[Hashable], outputs: Iterable[Hashable] | None = None,
              names: Sequence[str] | None = None,
              initial: Iterable[int] | None = None) -> "TransitionSystem":
        output_map = tuple(output_map)
        outs = tuple(set(output_map) if outputs is None else set(outputs))
        return cls(n_states, tuple(transitions), outs, output_map,
                   tuple(names) if names is not None else None,
                   frozenset(initial) if initial is not None else None)

    @property
    def states(self) -> range:
        return range(self.n_states)

    @property
    def initial_states(self) -> frozenset[int]:
        return self.initial if self.initial is not None else frozenset(range(self.n_states))

    def successors(self, s: int) -> tuple[int, ...]:
        return self._succ[s]

    def predecessors(self, s: int) -> tuple[int, ...]:
        return self._pred[s]

    def has_edge(self, a: int, b: int) -> bool:
        # successor tuples are sorted
        succ = self._succ[a]
        lo, hi = 0, len(succ)
        while lo < hi:
            mid = (lo + hi) // 2
            if succ[mid] < b:
                lo = mid + 1
            else:
                hi = mid
        return lo < len(succ) and succ[lo] == b

    def name(self, s: int) -> str:
        return self.names[s] if self.names is not None else str(s)

    def reachable(self, sources: Iterable[int] | None = None) -> frozenset[int]:
        seen = set(self.initial_states if sources is None else sources)
        queue = deque(seen)
        while queue:
            s = queue.popleft()
            for t in self._succ[s]:
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
        return frozenset(seen)

    def with_initial(self, initial: Iterable[int] | None) -> "TransitionSystem":
        return TransitionSystem(self.n_states, self.transitions, self.outputs,
                                self.output_map, self.names,
                                frozenset(initial) if initial is not None else None)

    def __eq__(self, other):
        if not isinstance(other, TransitionSystem):
            return NotImplemented
        return (self.n_states == other.n_states
                and self.transitions == other.transitions
                and self.outputs == other.outputs
                and self.output_map == other.output_map
                and self.initial_states == other.initial_states)

    def __hash__(self):
        return hash((self.n_states, self.transitions, self.output_map))

    def __repr__(self):
        return (f"TransitionSystem(n_states={self.n_states}, "
                f"n_transitions={len(self.transitions)}, n_outputs={len(self.outputs)})")


@dataclass(frozen=True)
class StatePartition:
    """Map from state to block id; block ids are ``0..block_count-1``."""

    blocks: tuple[int, ...]
    block_count: int

    def __post_init__(self):
        blocks = tuple(int(b) for b in self.blocks)
        used = set(blocks)
        if self.block_count <= 0 or used != set(range(self.block_count)):
            raise ValueError("block ids must be contiguous 0..block_count-1 and non-empty")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_labels(cls, labels: Sequence[Hashable]) -> "StatePartition":
        """Canonical partition from arbitrary per-state keys (first-seen numbering)."""
        ids: dict = {}
        blocks = []
        for lab in labels:
            if lab not in ids:
                ids[lab] = len(ids)
            blocks.append(ids[lab])
        return cls(tuple(blocks), len(ids))

    @classmethod
    def singletons(cls, n: int) -> "StatePartition":
        return cls(tuple(range(n)), n)

    def members(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.block_count)]
        for s, b in enumerate(self.blocks):
            out[b].append(s)
        return out

    def __len__(self):
        return len(self.blocks)


@dataclass(frozen=True)
class BinaryRelation:
    pairs: frozenset[tuple[int, int]]

    @classmethod
    def of(cls, pairs: Iterable[tuple[int, int]]) -> "BinaryRelation":
        return cls(frozenset((int(a), int(b)) for a, b in pairs))

    @classmethod
    def identity(cls, n: int) -> "BinaryRelation":
        return cls(frozenset((s, s) for s in range(n)))


def partition_graph(part: StatePartition) -> BinaryRelation:
    """Relation ``{(s, block(s))}`` linking a system to its quotient."""
    return BinaryRelation(frozenset((s, b) for s, b in enumerate(part.blocks)))


def _check_partition(ts: TransitionSystem, part: StatePartition) -> list:
    if len(part.blocks) != ts.n_states:
        raise PartitionError("partition must cover every state of the system")
    block_out: list = [None] * part.block_count
    for s, b in enumerate(part.blocks):
        y = ts.output_map[s]
        if block_out[b] is None:
            block_out[b] = (y,)
        elif block_out[b][0] != y:
            raise PartitionError(
                f"block {b} merges states with outputs {block_out[b][0]!r} and {y!r}")
    return [o[0] for o in block_out]


def quotient(ts: TransitionSystem, part: StatePartition) -> TransitionSystem:
    """Quotient system whose states are the blocks of ``part``.

    Block ``b -> b'`` iff some member of ``b`` steps to some member of ``b'``.
    """
    block_out = _check_partition(ts, part)
    blocks = part.blocks
    edges = {(blocks[a], blocks[b]) for a, b in ts.transitions}
    initial = None
    if ts.initial is not None:
        initial = frozenset(blocks[s] for s in ts.initial)
    return TransitionSystem(part.block_count, tuple(edges), ts.outputs,
                            tuple(block_out), None, initial)


def check_quotient_condition(ts: TransitionSystem, part: StatePartition) -> bool:
    """True iff every block edge ``b -> b'`` is enabled from every member of ``b``."""
    _check_partition(ts, part)
    blocks = part.blocks
    succ_blocks = [frozenset(blocks[t] for t in ts.successors(s)) for s in ts.states]
    members = part.members()
    for b, mem in enumerate(members):
        union = frozenset().union(*(succ_blocks[s] for s in mem))
        for s in mem:
            if succ_blocks[s] != union:
                return False
    return True


def coarsest_bisimulation(ts: TransitionSystem) -> StatePartition:
    """Coarsest output-respecting partition satisfying the quotient condition.

    Signature splitting: refine by ``(block, set of successor blocks)`` until
    the block count stops growing.
    """
    part = StatePartition.from_labels(ts.output_map)
    while True:
        blocks = part.blocks
        sigs = [(blocks[s], frozenset(blocks[t] for t in ts.successors(s)))
                for s in ts.states]
        new = StatePartition.from_labels(sigs)
        if new.block_count == part.block_count:
            return new
        part = new


def check_bisimulation(ts1: TransitionSystem, ts2: TransitionSystem,
                       rel: BinaryRelation) -> bool:
    """Check the three bisimulation clauses for ``rel`` between two systems.

    Beyond the clauses themselves the relation must be total on both state
    sets and relate every initial state to some initial state on the other
    side; without that, trace sets (and so LTL verdicts) can differ.
    """
    n1, n2 = ts1.n_states, ts2.n_states
    fwd: list[set[int]] = [set() for _ in range(n1)]
    bwd: list[set[int]] = [set() for _ in range(n2)]
    for s, p in rel.pairs:
        if not (0 <= s < n1 and 0 <= p < n2):
            return False
        if ts1.output_map[s] != ts2.output_map[p]:
            return False
        fwd[s].add(p)
        bwd[p].add(s)
    if not all(fwd) or not all(bwd):
        return False
    init1, init2 = ts1.initial_states, ts2.initial_states
    if any(not (fwd[s] & init2) for s in init1):
        return False
    if any(not (bwd[p] & init1) for p in init2):
        return False
    for s, p in rel.pairs:
        p_succ = ts2.successors(p)
        for s2 in ts1.successors(s):
            if not any(q in fwd[s2] for q in p_succ):
                return False
        s_succ = ts1.successors(s)
        for p2 in p_succ:
            if not any(r in bwd[p2] for r in s_succ):
                return False
    return True


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def _label_str(label) -> str:
    if isinstance(label, tuple):
        return "(" + ",".join(_label_str(x) for x in label) + ")"
    return str(label)


def to_dot(ts: TransitionSystem, name: str = "T") -> str:
    """Graphviz text; nodes and edges emitted in sorted order."""
    lines = [f'digraph "{_dot_escape(name)}" {{']
    init = ts.initial_states
    for s in ts.states:
        label = _dot_escape(f"{ts.name(s)}\\n{_label_str(ts.output_map[s])}")
        shape = "doublecircle" if ts.initial is not None and s in init else "circle"
        lines.append(f'  {s} [label="{label}", shape={shape}];')
    for a, b in ts.transitions:
        lines.append(f"  {a} -> {b};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _label_to_json(label):
    if isinstance(label, tuple):
        return [_label_to_json(x) for x in label]
    return label


def _label_from_json(label):
    if isinstance(label, list):
        return tuple(_label_from_json(x) for x in label)
    return label


def to_json(ts: TransitionSystem) -> dict:
    data = {
        "states": list(ts.states),
        "transitions": [list(e) for e in ts.transitions],
        "outputs": [_label_to_json(y) for y in ts.outputs],
        "output_map": [_label_to_json(y) for y in ts.output_map],
    }
    if ts.names is not None:
        data["names"] = list(ts.names)
    if ts.initial is not None:
        data["initial"] = sorted(ts.initial)
    return data


def from_json(data: Mapping | str) -> TransitionSystem:
    if isinstance(data, str):
        data = json.loads(data)
    states = list(data["states"])
    if states != list(range(len(states))):
        raise ValueError("states must be the dense ids 0..n-1")
    return TransitionSystem.build(
        len(states),
        [tuple(e) for e in data["transitions"]],
        [_label_from_json(y) for y in data["output_map"]],
        [_label_from_json(y) for y in data["outputs"]],
        data.get("names"),
        data.get("initial"),
    )
