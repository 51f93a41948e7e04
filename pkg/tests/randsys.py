"""Random instance generators shared by the test modules."""

import random

from flatbisim.ts import TransitionSystem


def random_ts(rng: random.Random, n: int, n_labels: int = 2, density: float = 0.35,
              total: bool = False, mode: str = "q0") -> TransitionSystem:
    labels = [(mode, f"k{i}") for i in range(n_labels)]
    outmap = [rng.choice(labels) for _ in range(n)]
    edges = set()
    for a in range(n):
        for b in range(n):
            if rng.random() < density:
                edges.add((a, b))
        if total and not any(e[0] == a for e in edges):
            edges.add((a, rng.randrange(n)))
    return TransitionSystem.build(n, edges, outmap, labels)


def inflated_ts(rng: random.Random, n_blocks: int, max_states: int, n_labels: int = 2,
                density: float = 0.4) -> TransitionSystem:
    """Random system built by splitting states of a random base system.

    Copies of a base state share its output and each copy reaches at least
    one copy of every base successor, so the base is a quotient of the
    result and the coarsest bisimulation is usually non-trivial.
    """
    base = random_ts(rng, n_blocks, n_labels, density, total=True)
    copies = [[s] for s in range(n_blocks)]
    nxt = n_blocks
    while nxt < max_states:
        b = rng.randrange(n_blocks)
        copies[b].append(nxt)
        nxt += 1
    owner = {}
    for b, cs in enumerate(copies):
        for c in cs:
            owner[c] = b
    edges = set()
    for a, b in base.transitions:
        for c in copies[a]:
            targets = copies[b]
            chosen = [t for t in targets if rng.random() < 0.5] or [rng.choice(targets)]
            edges.update((c, t) for t in chosen)
    outmap = [base.output_map[owner[c]] for c in range(nxt)]
    return TransitionSystem.build(nxt, edges, outmap, base.outputs)
