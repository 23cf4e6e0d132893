"""Exact couplings and stochastic domination on tiny instances.

Everything here uses :class:`fractions.Fraction`; nothing is compared with a
tolerance.

A coupling of two distributions mu on U and nu on V supported inside a
relation R exists iff mu(A) <= nu(N(A)) for every A in U. It is found as a
maximum flow in the network source -> U (capacity mu), U -> V along R
(unbounded), V -> sink (capacity nu); capacities are scaled to integers by
the common denominator so the flow is exact. When the flow falls short of
1 the source side of the minimum cut yields a set A violating the
inequality.

Graphs on n <= 6 vertices are encoded as bitmasks over the lexicographically
ordered vertex pairs.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Hashable, Iterable, Iterator, Optional, Sequence

Label = Hashable
Property = Callable[[int, int], bool]  # (mask, n) -> bool

MAX_ENUM_N = 6
MAX_DOMINATION_N = 5


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


# -- flow coupling ------------------------------------------------------------

@dataclass
class CouplingProblem:
    U: list
    V: list
    R: set
    mu: dict
    nu: dict

    def __post_init__(self):
        self.U = list(self.U)
        self.V = list(self.V)
        if len(set(self.U)) != len(self.U) or len(set(self.V)) != len(self.V):
            raise ValueError("labels in U and in V must be distinct")
        self.R = {tuple(p) for p in self.R}
        self.mu = {u: _frac(self.mu.get(u, 0)) for u in self.U}
        self.nu = {v: _frac(self.nu.get(v, 0)) for v in self.V}
        us, vs = set(self.U), set(self.V)
        if not all(a in us and b in vs for a, b in self.R):
            raise ValueError("R must be a subset of U x V")
        if any(p < 0 for p in self.mu.values()) or any(p < 0 for p in self.nu.values()):
            raise ValueError("probabilities must be non-negative")
        if sum(self.mu.values()) != 1 or sum(self.nu.values()) != 1:
            raise ValueError("mu and nu must each sum to exactly 1")

    def neighbours(self, A: Iterable) -> set:
        A = set(A)
        return {v for u, v in self.R if u in A}

    def hall_gap(self, A: Iterable) -> Fraction:
        """mu(A) - nu(N(A)); positive means the Hall-type inequality fails at A."""
        A = set(A)
        return sum((self.mu[u] for u in A), Fraction(0)) - sum(
            (self.nu[v] for v in self.neighbours(A)), Fraction(0))


@dataclass
class CouplingPlan:
    feasible: bool
    phi: dict = field(default_factory=dict)
    cut: Optional[frozenset] = None

    def marginals(self, problem: CouplingProblem) -> tuple[dict, dict]:
        rows = {u: Fraction(0) for u in problem.U}
        cols = {v: Fraction(0) for v in problem.V}
        for (u, v), p in self.phi.items():
            rows[u] += p
            cols[v] += p
        return rows, cols


def _max_flow(cap: list[dict[int, int]], s: int, t: int) -> tuple[int, list[dict[int, int]]]:
    """Edmonds-Karp on integer capacities; returns (value, residual graph)."""
    res = [dict(row) for row in cap]
    for a, row in enumerate(cap):
        for b in row:
            res[b].setdefault(a, 0)
    value = 0
    while True:
        prev = {s: None}
        queue = deque([s])
        while queue and t not in prev:
            a = queue.popleft()
            for b, c in res[a].items():
                if c > 0 and b not in prev:
                    prev[b] = a
                    queue.append(b)
        if t not in prev:
            return value, res
        push = None
        b = t
        while prev[b] is not None:
            a = prev[b]
            push = res[a][b] if push is None else min(push, res[a][b])
            b = a
        b = t
        while prev[b] is not None:
            a = prev[b]
            res[a][b] -= push
            res[b][a] += push
            b = a
        value += push


def build_coupling(p: CouplingProblem) -> CouplingPlan:
    """Joint distribution with marginals mu, nu and support inside R, if one exists."""
    probs = list(p.mu.values()) + list(p.nu.values())
    scale = math.lcm(*(q.denominator for q in probs))
    nu_, nv = len(p.U), len(p.V)
    s, t = nu_ + nv, nu_ + nv + 1
    unbounded = scale + 1
    cap: list[dict[int, int]] = [dict() for _ in range(nu_ + nv + 2)]
    ui = {u: i for i, u in enumerate(p.U)}
    vi = {v: nu_ + j for j, v in enumerate(p.V)}
    for u in p.U:
        cap[s][ui[u]] = int(p.mu[u] * scale)
    for v in p.V:
        cap[vi[v]][t] = int(p.nu[v] * scale)
    for u, v in p.R:
        cap[ui[u]][vi[v]] = unbounded

    value, res = _max_flow(cap, s, t)
    if value == scale:
        phi = {}
        for u, v in p.R:
            f = cap[ui[u]][vi[v]] - res[ui[u]][vi[v]]
            if f:
                phi[(u, v)] = Fraction(f, scale)
        return CouplingPlan(True, phi)

    seen = {s}
    queue = deque([s])
    while queue:
        a = queue.popleft()
        for b, c in res[a].items():
            if c > 0 and b not in seen:
                seen.add(b)
                queue.append(b)
    cut = frozenset(u for u in p.U if ui[u] in seen)
    return CouplingPlan(False, {}, cut)


def check_plan(problem: CouplingProblem, plan: CouplingPlan) -> bool:
    """Exact marginal and support check for a feasible plan."""
    if not plan.feasible:
        return False
    if any(pair not in problem.R or v < 0 for pair, v in plan.phi.items()):
        return False
    rows, cols = plan.marginals(problem)
    return rows == problem.mu and cols == problem.nu


# -- Hall-type inequalities ------------------------------------------------------

def hall_rhs(X_size: int, A_size: int, M: int) -> Fraction:
    """1 - C(|X|-|A|, M) / C(|X|, M): chance that M ordered draws from X hit A."""
    total = math.comb(X_size, M)
    if total == 0:
        return Fraction(1)
    return 1 - Fraction(math.comb(X_size - A_size, M), total)


def hall_lhs_bound(X_size: int, A_size: int, M: int) -> Fraction:
    """Largest Pr[e in A] for weights in [1, M]: |A| M / (|X| + (M - 1)|A|)."""
    if X_size == 0:
        return Fraction(0)
    return Fraction(A_size * M, X_size + (M - 1) * A_size)


def check_hall_inequality(X_size: int, A_size: int, M: int, pr_A) -> bool:
    if not 0 <= A_size <= X_size:
        raise ValueError("need 0 <= |A| <= |X|")
    if M < 1:
        raise ValueError("M must be at least 1")
    return _frac(pr_A) <= hall_rhs(X_size, A_size, M)


def hall_polynomial(x: float, M: int) -> float:
    """x^(1-M) - (1-M) x - M, non-negative on (0, 1] for M >= 1."""
    return x ** (1 - M) - (1 - M) * x - M


# -- graphs as bitmasks -----------------------------------------------------------

@lru_cache(maxsize=None)
def pairs(n: int) -> tuple[tuple[int, int], ...]:
    return tuple(itertools.combinations(range(n), 2))


@lru_cache(maxsize=None)
def _pair_index(n: int) -> dict:
    return {e: i for i, e in enumerate(pairs(n))}


def mask_of(n: int, edges: Iterable[tuple[int, int]]) -> int:
    idx = _pair_index(n)
    m = 0
    for a, b in edges:
        if a == b:
            raise ValueError(f"loop at {a}")
        m |= 1 << idx[(min(a, b), max(a, b))]
    return m


def edges_of(n: int, mask: int) -> list[tuple[int, int]]:
    return [e for i, e in enumerate(pairs(n)) if mask >> i & 1]


@lru_cache(maxsize=1 << 16)
def component_sizes(n: int, mask: int) -> tuple[int, ...]:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges_of(n, mask):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    counts: dict[int, int] = {}
    for v in range(n):
        r = find(v)
        counts[r] = counts.get(r, 0) + 1
    return tuple(sorted(counts.values(), reverse=True))


@lru_cache(maxsize=1 << 16)
def _isolated(n: int, mask: int) -> frozenset:
    touched = set()
    for a, b in edges_of(n, mask):
        touched.add(a)
        touched.add(b)
    return frozenset(set(range(n)) - touched)


def edge_weights(n: int, mask: int, K: Fraction, mode: str) -> list[tuple[int, Fraction]]:
    """(bit, weight) for every missing edge of the graph ``mask``."""
    missing = [i for i in range(len(pairs(n))) if not mask >> i & 1]
    if mode == "uniform":
        return [(i, Fraction(1)) for i in missing]
    if mode != "biased":
        raise ValueError(f"unknown mode {mode!r}")
    iso = _isolated(n, mask)
    if len(iso) < 2:
        return [(i, Fraction(1)) for i in missing]
    out = []
    for i in missing:
        a, b = pairs(n)[i]
        out.append((i, Fraction(1) if a in iso and b in iso else K))
    return out


def _step(dist: dict[int, Fraction], n: int, K: Fraction, mode: str) -> dict[int, Fraction]:
    out: dict[int, Fraction] = {}
    full = (1 << len(pairs(n))) - 1
    for mask, p in dist.items():
        if mask == full:
            out[mask] = out.get(mask, 0) + p
            continue
        weights = edge_weights(n, mask, K, mode)
        total = sum(w for _, w in weights)
        for i, w in weights:
            if w:
                nxt = mask | 1 << i
                out[nxt] = out.get(nxt, 0) + p * w / total
    return out


@dataclass
class ExactProcessDistribution:
    n: int
    mode: str
    K: Fraction
    T: int
    initial: int
    probs: dict[int, Fraction]

    def probability(self, prop: Property) -> Fraction:
        return sum((p for m, p in self.probs.items() if prop(m, self.n)), Fraction(0))

    def edge_marginal(self, u: int, v: int) -> Fraction:
        bit = 1 << _pair_index(self.n)[(min(u, v), max(u, v))]
        return sum((p for m, p in self.probs.items() if m & bit), Fraction(0))


def iter_process(n: int, K, mode: str = "biased",
                 initial: Iterable[tuple[int, int]] = ()) -> Iterator[ExactProcessDistribution]:
    """Exact distributions after 0, 1, 2, ... steps (the complete graph absorbs)."""
    if not 2 <= n <= MAX_ENUM_N:
        raise ValueError(f"exact enumeration supports 2 <= n <= {MAX_ENUM_N}, got {n}")
    K = _frac(K)
    if K < 0:
        raise ValueError("K must be non-negative")
    start = mask_of(n, initial)
    dist = {start: Fraction(1)}
    T = 0
    while True:
        yield ExactProcessDistribution(n, mode, K, T, start, dist)
        dist = _step(dist, n, K, mode)
        T += 1


def enumerate_process(n: int, K, T: int, mode: str = "biased",
                      initial: Iterable[tuple[int, int]] = ()) -> ExactProcessDistribution:
    if T < 0:
        raise ValueError("T must be non-negative")
    return next(itertools.islice(iter_process(n, K, mode, initial), T, None))


# -- monotone properties --------------------------------------------------------

class NonMonotoneProperty(ValueError):
    def __init__(self, smaller: int, larger: int, n: int):
        self.smaller, self.larger, self.n = smaller, larger, n
        super().__init__(f"property holds for {edges_of(n, smaller)} "
                         f"but not for its supergraph {edges_of(n, larger)}")


def contains_edge(u: int, v: int) -> Property:
    def prop(mask, n):
        return bool(mask >> _pair_index(n)[(min(u, v), max(u, v))] & 1)
    prop.__name__ = f"contains-edge:{u},{v}"
    return prop


def has_component_at_least(k: int) -> Property:
    def prop(mask, n):
        return component_sizes(n, mask)[0] >= k
    prop.__name__ = f"min-component-size:{k}"
    return prop


def edge_count_at_least(m: int) -> Property:
    def prop(mask, n):
        return mask.bit_count() >= m
    prop.__name__ = f"edge-count-at-least:{m}"
    return prop


def always_true(mask, n):
    return True


PROPERTY_BUILDERS = {
    "contains-edge": lambda args: contains_edge(*args),
    "min-component-size": lambda args: has_component_at_least(*args),
    "edge-count-at-least": lambda args: edge_count_at_least(*args),
    "always": lambda args: always_true,
}


def parse_property(text: str) -> Property:
    """``name:arg,arg`` with a name from PROPERTY_BUILDERS."""
    name, _, rest = text.partition(":")
    if name not in PROPERTY_BUILDERS:
        raise ValueError(f"unknown property {name!r}; choose from {sorted(PROPERTY_BUILDERS)}")
    args = [int(a) for a in rest.split(",") if a.strip()] if rest else []
    return PROPERTY_BUILDERS[name](args)


def check_monotone(prop: Property, n: int) -> None:
    """Raise NonMonotoneProperty unless ``prop`` is closed under adding edges."""
    m = len(pairs(n))
    values = [bool(prop(mask, n)) for mask in range(1 << m)]
    for mask, v in enumerate(values):
        if not v:
            continue
        for i in range(m):
            bigger = mask | 1 << i
            if not values[bigger]:
                raise NonMonotoneProperty(mask, bigger, n)


# -- domination -------------------------------------------------------------------

def bound_M(K) -> int:
    K = _frac(K)
    if K <= 0:
        raise ValueError("K must be positive")
    return math.ceil(max(K, 1 / K))


@dataclass
class DominationReport:
    n: int
    K: Fraction
    t: int
    M: int
    property_name: str
    biased_t: Fraction
    uniform_Mt: Fraction
    uniform_t: Fraction
    biased_Mt: Fraction

    @property
    def upper_holds(self) -> bool:
        return self.biased_t <= self.uniform_Mt

    @property
    def lower_holds(self) -> bool:
        return self.uniform_t <= self.biased_Mt

    @property
    def holds(self) -> bool:
        return self.upper_holds and self.lower_holds

    def to_dict(self) -> dict:
        return {"n": self.n, "K": str(self.K), "t": self.t, "M": self.M,
                "property": self.property_name,
                "Pr[biased^t]": str(self.biased_t), "Pr[uniform^Mt]": str(self.uniform_Mt),
                "Pr[uniform^t]": str(self.uniform_t), "Pr[biased^Mt]": str(self.biased_Mt),
                "upper_holds": self.upper_holds, "lower_holds": self.lower_holds,
                "holds": self.holds}


def domination_report(n: int, K, t: int, prop: Property,
                      initial: Iterable[tuple[int, int]] = ()) -> DominationReport:
    if not 2 <= n <= MAX_DOMINATION_N:
        raise ValueError(f"domination check supports 2 <= n <= {MAX_DOMINATION_N}")
    if t < 0:
        raise ValueError("t must be non-negative")
    K = _frac(K)
    M = bound_M(K)
    check_monotone(prop, n)
    initial = list(initial)

    def at(mode, steps):
        return enumerate_process(n, K, steps, mode, initial).probability(prop)

    return DominationReport(
        n, K, t, M, getattr(prop, "__name__", "property"),
        biased_t=at("biased", t), uniform_Mt=at("uniform", M * t),
        uniform_t=at("uniform", t), biased_Mt=at("biased", M * t))


def verify_domination(n: int, K, t: int, prop: Property,
                      initial: Iterable[tuple[int, int]] = ()) -> bool:
    """Both time-stretched domination inequalities, by exact enumeration."""
    return domination_report(n, K, t, prop, initial).holds


# -- single-step coupling problems ---------------------------------------------

def _edge_label(e) -> str:
    return f"{e[0]}-{e[1]}"


def step_coupling_problem(n: int, K, M: int, p_edges: Sequence[tuple[int, int]],
                          q_edges: Optional[Sequence[tuple[int, int]]] = None,
                          direction: str = "biased-by-uniform") -> CouplingProblem:
    """Coupling of one step of P against M steps of Q.

    U is the set Y of edges missing from P's graph; V is the set of ordered
    M-tuples of distinct edges missing from Q's graph (X, a subset of Y). An
    edge e is related to a tuple F when e lies outside X or inside F.

    ``direction="biased-by-uniform"``: P is the biased process, Q uniform.
    ``direction="uniform-by-biased"``: P is uniform, Q the biased process.
    """
    K = _frac(K)
    q_edges = list(p_edges) if q_edges is None else list(q_edges)
    p_mask, q_mask = mask_of(n, p_edges), mask_of(n, q_edges)
    if p_mask & ~q_mask:
        raise ValueError("Q's graph must contain P's graph")
    Y = [pairs(n)[i] for i in range(len(pairs(n))) if not p_mask >> i & 1]
    X = [pairs(n)[i] for i in range(len(pairs(n))) if not q_mask >> i & 1]
    if not 1 <= M <= len(X):
        raise ValueError(f"need 1 <= M <= |X| = {len(X)}")
    tuples = list(itertools.permutations(X, M))

    if direction == "biased-by-uniform":
        w = dict(edge_weights(n, p_mask, K, "biased"))
        total = sum(w.values())
        mu = {_edge_label(e): w[_pair_index(n)[e]] / total for e in Y}
        nu = {"|".join(map(_edge_label, F)): Fraction(1, len(tuples)) for F in tuples}
    elif direction == "uniform-by-biased":
        mu = {_edge_label(e): Fraction(1, len(Y)) for e in Y}
        nu = {}
        for F in tuples:
            prob, mask = Fraction(1), q_mask
            for e in F:
                w = dict(edge_weights(n, mask, K, "biased"))
                prob *= w[_pair_index(n)[e]] / sum(w.values())
                mask |= 1 << _pair_index(n)[e]
            nu["|".join(map(_edge_label, F))] = prob
    else:
        raise ValueError(f"unknown direction {direction!r}")

    Xs = set(X)
    R = {(_edge_label(e), "|".join(map(_edge_label, F)))
         for e in Y for F in tuples if e not in Xs or e in F}
    return CouplingProblem(list(mu), list(nu), R, mu, nu)


# -- JSON -------------------------------------------------------------------------

def problem_from_dict(d: dict) -> CouplingProblem:
    U, V = [str(u) for u in d["U"]], [str(v) for v in d["V"]]

    def probs(raw, labels):
        if isinstance(raw, dict):
            return {str(k): Fraction(v) for k, v in raw.items()}
        if len(raw) != len(labels):
            raise ValueError("probability list length must match its label set")
        return {k: Fraction(v) for k, v in zip(labels, raw)}

    return CouplingProblem(U, V, {(str(a), str(b)) for a, b in d["R"]},
                           probs(d["mu"], U), probs(d["nu"], V))


def problem_to_dict(p: CouplingProblem) -> dict:
    return {"U": list(p.U), "V": list(p.V), "R": sorted([list(r) for r in p.R]),
            "mu": [str(p.mu[u]) for u in p.U], "nu": [str(p.nu[v]) for v in p.V]}


def plan_to_dict(plan: CouplingPlan, problem: Optional[CouplingProblem] = None) -> dict:
    out = {"feasible": plan.feasible,
           "phi": [[u, v, str(q)] for (u, v), q in sorted(plan.phi.items())]}
    if plan.cut is not None:
        out["cut"] = sorted(plan.cut)
        if problem is not None:
            out["mu_A"] = str(sum((problem.mu[u] for u in plan.cut), Fraction(0)))
            out["nu_N_A"] = str(sum((problem.nu[v] for v in problem.neighbours(plan.cut)),
                                    Fraction(0)))
    return out


def load_problem(path) -> CouplingProblem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
