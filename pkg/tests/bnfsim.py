"""Bang-bang simulation oracle for Brunovsky chain slice crossings."""

import math

import numpy as np

from flatbisim.flat import BnfChain, bnf_slice_box, bnf_state_id, bnf_states


def _exact_step(x, u, dt):
    # chain x_j' = x_{j+1}, x_n' = u, with u constant over the step
    n = x.shape[1]
    out = np.empty_like(x)
    for j in range(n):
        acc = np.zeros(len(x))
        for m in range(n - j):
            acc += x[:, j + m] * dt ** m / math.factorial(m)
        acc += u * dt ** (n - j) / math.factorial(n - j)
        out[:, j] = acc
    return out


def _labels(chain, x):
    lo = chain.x1_range[0]
    i = np.floor((x[:, 0] - lo) / chain.epsilon).astype(int)
    signs = (x[:, 1:] < 0).astype(int)
    b = chain.orthant_bound
    inside = (i >= 0) & (i < chain.slice_count)
    if x.shape[1] > 1:
        inside &= np.all((x[:, 1:] >= -b) & (x[:, 1:] < b), axis=1)
    return i, signs, inside


def observed_crossings(chain: BnfChain, trials: int, seed: int = 0, u_max: float = 50.0,
                       dt: float = 1e-3, max_steps: int = 3000):
    """Simulate ``trials`` random bang-bang runs from each slice state.

    Returns the set of ``(src_id, dst_id)`` first crossings into an adjacent
    state.  Steps that change more than one label coordinate at once are
    ambiguous and dropped, as are exits through the box boundary.
    """
    rng = np.random.default_rng(seed)
    states = bnf_states(chain)
    n = chain.n
    starts, src = [], []
    for st in states:
        lo, hi = bnf_slice_box(chain, st)
        pts = rng.uniform(lo, hi, size=(trials, n))
        starts.append(pts)
        src.append(np.full(trials, bnf_state_id(chain, st)))
    x = np.concatenate(starts)
    src = np.concatenate(src)
    total = len(x)
    i0, s0, _ = _labels(chain, x)
    active = np.ones(total, bool)
    sign = rng.choice([-1.0, 1.0], size=total)
    flip_p = rng.uniform(0.002, 0.05, size=total)
    seen = set()
    half = 2 ** (n - 1)
    weights = 2 ** np.arange(n - 2, -1, -1) if n > 1 else np.zeros(0, int)
    for _ in range(max_steps):
        flip = rng.random(total) < flip_p
        sign[flip] = -sign[flip]
        x = _exact_step(x, u_max * sign, dt)
        i, s, inside = _labels(chain, x)
        changed_i = i != i0
        changed_s = (s != s0).sum(axis=1) if n > 1 else np.zeros(total, int)
        moved = active & (changed_i | (changed_s > 0))
        clean = moved & inside & ((np.abs(i - i0) + changed_s) == 1)
        for r in np.nonzero(clean)[0]:
            dst = int(i[r]) * half + (int(s[r] @ weights) if n > 1 else 0)
            seen.add((int(src[r]), dst))
        active &= ~moved
        if not active.any():
            break
    return seen
