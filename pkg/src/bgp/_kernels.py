"""Compiled inner loops for the biased graph process.

All state lives in flat numpy arrays so that a single run can be advanced
by one call without crossing back into the interpreter:

* ``parent``/``size``: disjoint-set forest, union by size, path halving.
* ``perm``/``pos``: permutation of the vertices with the isolated ones packed
  in ``perm[:iso]``; ``pos`` is its inverse. A vertex ``v`` is isolated iff
  ``pos[v] < iso``.
* ``keys``: open-addressing hash set of packed edges ``u * n + v`` (u < v),
  ``EMPTY`` marks a free slot. Capacity is a power of two and callers keep
  the load factor at or below one half.
* ``counters``: the scalar part of the state, indexed by the constants below.
"""

import numpy as np
from numba import njit

EMPTY = -1

ISO = 0
SSUM = 1
EDGES = 2
LARGEST = 3
STEPS = 4
N_COUNTERS = 5

STATUS_OK = 0
STATUS_COMPLETE = 1
STATUS_THRESHOLD = 2

# below this acceptance rate the "other" category is enumerated explicitly
DENSE_ACCEPTANCE = 1e-3

_MIX = np.uint64(0x9E3779B97F4A7C15)
_SHIFT = np.uint64(32)


@njit(cache=True)
def _slot(key, mask):
    h = np.uint64(key) * _MIX
    h ^= h >> _SHIFT
    return np.int64(h & np.uint64(mask))


@njit(cache=True)
def reg_contains(keys, key):
    mask = keys.size - 1
    i = _slot(key, mask)
    while True:
        k = keys[i]
        if k == key:
            return True
        if k == EMPTY:
            return False
        i = (i + 1) & mask


@njit(cache=True)
def reg_insert(keys, key):
    mask = keys.size - 1
    i = _slot(key, mask)
    while keys[i] != EMPTY:
        i = (i + 1) & mask
    keys[i] = key


@njit(cache=True)
def reg_rehash(keys, capacity):
    out = np.full(capacity, EMPTY, dtype=np.int64)
    for k in keys:
        if k != EMPTY:
            reg_insert(out, k)
    return out


@njit(cache=True)
def find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def _deisolate(perm, pos, counters, v):
    m = counters[ISO]
    p = pos[v]
    if p < m:
        last = m - 1
        w = perm[last]
        perm[p] = w
        pos[w] = p
        perm[last] = v
        pos[v] = last
        counters[ISO] = m - 1


@njit(cache=True)
def apply_edge(parent, size, perm, pos, keys, counters, n, u, v):
    """Add the missing edge {u, v}; the caller has checked it is missing."""
    if u > v:
        u, v = v, u
    reg_insert(keys, u * n + v)
    counters[EDGES] += 1
    _deisolate(perm, pos, counters, u)
    _deisolate(perm, pos, counters, v)
    ru = find(parent, u)
    rv = find(parent, v)
    if ru != rv:
        su = size[ru]
        sv = size[rv]
        if su < sv:
            ru, rv = rv, ru
        parent[rv] = ru
        size[ru] = su + sv
        counters[SSUM] += 2 * su * sv
        if su + sv > counters[LARGEST]:
            counters[LARGEST] = su + sv


@njit(cache=True)
def sample_exact(pos, perm, keys, counters, n, K, rng):
    """Draw the next edge of the exact biased process; (-1, -1) if complete."""
    total = n * (n - 1) // 2
    T = counters[EDGES]
    if T >= total:
        return -1, -1
    m = counters[ISO]
    r = m * (m - 1) // 2
    s = total - T - r
    if r > 0:
        if s == 0 or K == 0.0:
            iso_pair = True
        else:
            iso_pair = rng.random() * (r + K * s) < r
    else:
        iso_pair = False

    if iso_pair:
        i = rng.integers(0, m)
        j = rng.integers(0, m - 1)
        if j >= i:
            j += 1
        a = perm[i]
        b = perm[j]
        if a < b:
            return a, b
        return b, a

    # uniform over missing edges that are not between two isolated vertices
    nn = n - m
    cross = m * nn
    candidates = cross + nn * (nn - 1) // 2
    if s < DENSE_ACCEPTANCE * candidates:
        k = rng.integers(0, s)
        for u in range(n):
            for v in range(u + 1, n):
                if pos[u] < m and pos[v] < m:
                    continue
                if reg_contains(keys, u * n + v):
                    continue
                if k == 0:
                    return u, v
                k -= 1
        return -1, -1  # unreachable when counters are consistent
    while True:
        idx = rng.integers(0, candidates)
        if idx < cross:
            a = perm[rng.integers(0, m)]
            b = perm[m + rng.integers(0, nn)]
        else:
            i = rng.integers(0, nn)
            j = rng.integers(0, nn - 1)
            if j >= i:
                j += 1
            a = perm[m + i]
            b = perm[m + j]
        if a > b:
            a, b = b, a
        if not reg_contains(keys, a * n + b):
            return a, b


@njit(cache=True)
def draw_ordered_pair(perm, counters, n, K, rng):
    """Ordered pair for one approximate step: weight 1 iso-iso, K otherwise."""
    m = counters[ISO]
    if m < 2:
        return rng.integers(0, n), rng.integers(0, n)
    if K == 0.0:
        iso_pair = True
    else:
        w_iso = float(m) * m
        w_other = K * (float(n) * n - w_iso)
        iso_pair = rng.random() * (w_iso + w_other) < w_iso
    if iso_pair:
        return perm[rng.integers(0, m)], perm[rng.integers(0, m)]
    nn = n - m
    idx = rng.integers(0, n * n - m * m)
    if idx < nn * n:
        return perm[m + rng.integers(0, nn)], rng.integers(0, n)
    return perm[rng.integers(0, m)], perm[m + rng.integers(0, nn)]


@njit(cache=True)
def step_approximate(parent, size, perm, pos, keys, counters, n, K, rng):
    """One approximate step; returns 1 if an edge was added, 0 if skipped."""
    counters[STEPS] += 1
    u, v = draw_ordered_pair(perm, counters, n, K, rng)
    if u == v:
        return 0
    if u > v:
        u, v = v, u
    if reg_contains(keys, u * n + v):
        return 0
    apply_edge(parent, size, perm, pos, keys, counters, n, u, v)
    return 1


@njit(cache=True)
def advance(parent, size, perm, pos, keys, counters, n, K, exact, rng,
            n_steps, stride, stop_largest,
            row_steps, row_iso, row_ssum, row_largest, row_edges, row):
    """Run up to ``n_steps`` steps, recording a row whenever steps % stride == 0.

    Returns ``(status, rows_written_up_to)``.
    """
    for _ in range(n_steps):
        if exact:
            u, v = sample_exact(pos, perm, keys, counters, n, K, rng)
            if u < 0:
                return STATUS_COMPLETE, row
            apply_edge(parent, size, perm, pos, keys, counters, n, u, v)
            counters[STEPS] += 1
        else:
            step_approximate(parent, size, perm, pos, keys, counters, n, K, rng)
        if stride > 0 and counters[STEPS] % stride == 0:
            row_steps[row] = counters[STEPS]
            row_iso[row] = counters[ISO]
            row_ssum[row] = counters[SSUM]
            row_largest[row] = counters[LARGEST]
            row_edges[row] = counters[EDGES]
            row += 1
        if stop_largest > 0 and counters[LARGEST] >= stop_largest:
            return STATUS_THRESHOLD, row
    return STATUS_OK, row


@njit(cache=True)
def sample_exact_many(pos, perm, keys, counters, n, K, rng, reps):
    """``reps`` independent next-edge draws from a frozen state."""
    us = np.empty(reps, dtype=np.int64)
    vs = np.empty(reps, dtype=np.int64)
    for i in range(reps):
        u, v = sample_exact(pos, perm, keys, counters, n, K, rng)
        us[i] = u
        vs[i] = v
    return us, vs


@njit(cache=True)
def approximate_deltas(parent, size, perm, pos, keys, counters, n, K, rng, reps):
    """One-step changes of (isolated count, sum of squared sizes) from a frozen state.

    The state is not modified apart from path halving in the forest.
    """
    d_iso = np.zeros(reps, dtype=np.int64)
    d_ssum = np.zeros(reps, dtype=np.int64)
    m = counters[ISO]
    for i in range(reps):
        u, v = draw_ordered_pair(perm, counters, n, K, rng)
        if u == v:
            continue
        a = min(u, v)
        b = max(u, v)
        if reg_contains(keys, a * n + b):
            continue
        d = 0
        if pos[u] < m:
            d -= 1
        if pos[v] < m:
            d -= 1
        d_iso[i] = d
        ru = find(parent, u)
        rv = find(parent, v)
        if ru != rv:
            d_ssum[i] = 2 * size[ru] * size[rv]
    return d_iso, d_ssum
