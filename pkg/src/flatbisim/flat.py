"""Finite bisimilar quotients for flat systems.

* :func:`bnf_quotient` -- slice/orthant quotient of one Brunovsky chain
  ``x1' = x2, ..., xn' = u`` with unbounded input.
* :func:`difference_flat_quotient` -- window quotient of a memory-``k``
  difference-flat system: states are ``k``-symbol output windows and the
  symbol entering the window is free (a de Bruijn graph).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .lattice import BudgetExceeded
from .ts import StatePartition, TransitionSystem

__all__ = [
    "BnfChain",
    "SliceState",
    "FlatAlphabetSpec",
    "bnf_slice_partition",
    "bnf_state_id",
    "bnf_states",
    "bnf_quotient",
    "bnf_slice_box",
    "difference_flat_quotient",
    "delay_chain_system",
    "window_partition",
    "DEFAULT_WINDOW_BUDGET",
]

DEFAULT_WINDOW_BUDGET = 10 ** 6


@dataclass(frozen=True)
class BnfChain:
    n: int
    epsilon: float
    x1_range: tuple[float, float]
    orthant_bound: float = 1.0

    def __post_init__(self):
        lo, hi = (float(v) for v in self.x1_range)
        if self.n < 1:
            raise ValueError("chain length must be at least 1")
        if not (self.epsilon > 0 and lo < hi and self.orthant_bound > 0):
            raise ValueError("need epsilon > 0, lo < hi and a positive orthant bound")
        c = (hi - lo) / self.epsilon
        if abs(c - round(c)) > 1e-9 * max(1.0, c) or round(c) < 1:
            raise ValueError("x1 range is not a whole number of slices")
        object.__setattr__(self, "x1_range", (lo, hi))

    @property
    def slice_count(self) -> int:
        lo, hi = self.x1_range
        return int(round((hi - lo) / self.epsilon))

    @property
    def state_count(self) -> int:
        return self.slice_count * 2 ** (self.n - 1)


@dataclass(frozen=True)
class SliceState:
    """Slice index ``i`` plus the signs of ``x_2..x_n`` as a ``'+'``/``'-'`` string."""

    i: int
    s: str = ""

    def __post_init__(self):
        if any(c not in "+-" for c in self.s):
            raise ValueError(f"bad sign vector {self.s!r}")

    def __str__(self):
        return f"y{self.i}{self.s}"


@dataclass(frozen=True)
class FlatAlphabetSpec:
    symbols: tuple[Hashable, ...]
    memory: int

    def __post_init__(self):
        syms = tuple(self.symbols)
        if not syms or len(set(syms)) != len(syms):
            raise ValueError("alphabet must be non-empty with distinct symbols")
        if self.memory < 1:
            raise ValueError("memory must be at least 1")
        object.__setattr__(self, "symbols", syms)


def bnf_slice_partition(chain: BnfChain, x: Sequence[float]) -> SliceState:
    x = list(map(float, x))
    if len(x) != chain.n:
        raise ValueError(f"expected a {chain.n}-vector")
    lo, hi = chain.x1_range
    if not lo <= x[0] < hi:
        raise ValueError(f"x1={x[0]} outside [{lo}, {hi})")
    b = chain.orthant_bound
    if any(not -b <= v < b for v in x[1:]):
        raise ValueError("point outside the orthant bound")
    i = min(int(math.floor((x[0] - lo) / chain.epsilon)), chain.slice_count - 1)
    # sign(0) = +
    s = "".join("+" if v >= 0 else "-" for v in x[1:])
    return SliceState(i, s)


def bnf_states(chain: BnfChain) -> list[SliceState]:
    signs = ["".join(p) for p in itertools.product("+-", repeat=chain.n - 1)]
    return [SliceState(i, s) for i in range(chain.slice_count) for s in signs]


def bnf_state_id(chain: BnfChain, state: SliceState) -> int:
    if not 0 <= state.i < chain.slice_count or len(state.s) != chain.n - 1:
        raise ValueError(f"{state} is not a state of this chain")
    bits = 0
    for c in state.s:
        bits = 2 * bits + (c == "-")
    return state.i * 2 ** (chain.n - 1) + bits


def bnf_slice_box(chain: BnfChain, state: SliceState) -> tuple[np.ndarray, np.ndarray]:
    lo = chain.x1_range[0] + state.i * chain.epsilon
    b = chain.orthant_bound
    lower = [lo] + [0.0 if c == "+" else -b for c in state.s]
    upper = [lo + chain.epsilon] + [b if c == "+" else 0.0 for c in state.s]
    return np.array(lower), np.array(upper)


def _flip(s: str, j: int) -> str:
    return s[:j] + ("-" if s[j] == "+" else "+") + s[j + 1:]


def bnf_quotient(chain: BnfChain, *, self_loops: bool = True) -> TransitionSystem:
    """Slice quotient of one Brunovsky chain.

    Moves between face-adjacent states only:

    * along x1: up when ``x2 >= 0`` (first sign ``+``), down when ``-``;
      for ``n == 1`` the input drives x1 both ways;
    * sign flip of ``x_{j+1}``: the last coordinate is driven by ``u`` so
      it may always flip; otherwise its derivative ``x_{j+2}`` must already
      carry the target sign.
    """
    states = bnf_states(chain)
    count = chain.slice_count
    n = chain.n
    edges = []
    for st in states:
        src = bnf_state_id(chain, st)
        if self_loops:
            edges.append((src, src))
        up = n == 1 or st.s[0] == "+"
        down = n == 1 or st.s[0] == "-"
        if up and st.i + 1 < count:
            edges.append((src, bnf_state_id(chain, SliceState(st.i + 1, st.s))))
        if down and st.i > 0:
            edges.append((src, bnf_state_id(chain, SliceState(st.i - 1, st.s))))
        for j in range(n - 1):
            target = "-" if st.s[j] == "+" else "+"
            if j == n - 2 or st.s[j + 1] == target:
                edges.append((src, bnf_state_id(chain, SliceState(st.i, _flip(st.s, j)))))
    ids = tuple(range(len(states)))
    return TransitionSystem(len(states), tuple(edges), ids, ids, tuple(map(str, states)))


def _words(spec: FlatAlphabetSpec):
    return list(itertools.product(range(len(spec.symbols)), repeat=spec.memory))


def difference_flat_quotient(spec: FlatAlphabetSpec, *,
                             budget: int = DEFAULT_WINDOW_BUDGET) -> TransitionSystem:
    """Window quotient: states are k-words, ``w -> w[1:] + y`` for every symbol ``y``.

    The output of a window is its first symbol.
    """
    q = len(spec.symbols)
    size = q ** spec.memory
    if size > budget:
        raise BudgetExceeded(f"{q}^{spec.memory} = {size} windows exceed budget {budget}")
    words = _words(spec)
    edges = []
    for idx, w in enumerate(words):
        # lexicographic numbering: shift drops the leading digit
        base = (idx % (q ** (spec.memory - 1))) * q
        edges.extend((idx, base + y) for y in range(q))
    outmap = tuple(spec.symbols[w[0]] for w in words)
    names = tuple("".join(str(spec.symbols[c]) for c in w) for w in words)
    return TransitionSystem(size, tuple(edges), spec.symbols, outmap, names)


def delay_chain_system(spec: FlatAlphabetSpec, refinement: int = 1) -> TransitionSystem:
    """Explicit finite difference-flat system in delay-chain form.

    The flat output takes ``refinement`` distinct values per symbol; the
    state is the window ``(z(t), ..., z(t+k-1))`` of flat-output values,
    the input chooses ``z(t+k)`` freely, and the observation is the symbol
    of ``z(t)``.  With ``refinement == 1`` this is the window quotient itself.
    """
    q = len(spec.symbols)
    zq = q * refinement
    k = spec.memory
    states = list(itertools.product(range(zq), repeat=k))
    edges = []
    for idx, w in enumerate(states):
        base = (idx % (zq ** (k - 1))) * zq
        edges.extend((idx, base + z) for z in range(zq))
    outmap = tuple(spec.symbols[w[0] // refinement] for w in states)
    return TransitionSystem(len(states), tuple(edges), spec.symbols, outmap)


def window_partition(spec: FlatAlphabetSpec, refinement: int = 1) -> StatePartition:
    """Partition of :func:`delay_chain_system` states by their symbol window.

    Block ids coincide with the state ids of :func:`difference_flat_quotient`.
    """
    q = len(spec.symbols)
    zq = q * refinement
    blocks = []
    for w in itertools.product(range(zq), repeat=spec.memory):
        b = 0
        for z in w:
            b = b * q + z // refinement
        blocks.append(b)
    return StatePartition(tuple(blocks), q ** spec.memory)
