"""Monte Carlo simulation of the biased graph process.

Missing edges between two isolated vertices carry weight 1, every other
missing edge weight ``K``; once fewer than two isolated vertices remain the
choice is uniform. Time is measured in units of n/2 added edges.

Two stepping modes are provided:

``exact``
    every step adds one edge drawn from the weighted law above.
``approximate``
    every step draws an ordered pair out of all n^2 pairs (weight 1 for two
    isolated vertices, ``K`` otherwise) and skips loops and existing edges.

The state keeps I, S and the largest component up to date incrementally, so
a run of T steps costs O(T) expected time plus the union-find overhead.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import _kernels as _k
from .estimate import CriticalTimeEstimate

RNG_NAME = "numpy.PCG64"
MODES = ("exact", "approximate")


class GraphComplete(RuntimeError):
    """No missing edge is left to add."""


class ThresholdNotReached(RuntimeError):
    """The largest component never reached the requested size before t_max."""


@dataclass(frozen=True)
class ProcessConfig:
    n: int
    K: float
    mode: str = "exact"
    seed: int = 0
    t_max: float = 1.0
    stride: Optional[int] = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        if not self.K >= 0 or math.isinf(self.K):
            raise ValueError(f"K must be a finite non-negative number, got {self.K}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if not self.t_max >= 0:
            raise ValueError(f"t_max must be non-negative, got {self.t_max}")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be a positive integer")

    @property
    def resolved_stride(self) -> int:
        return self.stride if self.stride is not None else max(1, self.n // 200)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_max * self.n / 2))

    def make_rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


class GraphState:
    """Evolving graph: component forest, isolated set, edge registry, counters."""

    def __init__(self, n: int):
        if int(n) != n or n < 2:
            raise ValueError(f"n must be an integer >= 2, got {n}")
        n = int(n)
        self.n = n
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)
        self.perm = np.arange(n, dtype=np.int64)
        self.pos = np.arange(n, dtype=np.int64)
        self.keys = np.full(16, _k.EMPTY, dtype=np.int64)
        self.counters = np.zeros(_k.N_COUNTERS, dtype=np.int64)
        self.counters[_k.ISO] = n
        self.counters[_k.SSUM] = n
        self.counters[_k.LARGEST] = 1

    # -- counters ---------------------------------------------------------
    @property
    def isolated_count(self) -> int:
        return int(self.counters[_k.ISO])

    @property
    def susceptibility_sum(self) -> int:
        return int(self.counters[_k.SSUM])

    @property
    def edges_added(self) -> int:
        return int(self.counters[_k.EDGES])

    @property
    def largest_component(self) -> int:
        return int(self.counters[_k.LARGEST])

    @property
    def steps(self) -> int:
        """Steps taken; differs from ``edges_added`` only in approximate mode."""
        return int(self.counters[_k.STEPS])

    @property
    def I(self) -> float:  # noqa: E743
        return self.isolated_count / self.n

    @property
    def S(self) -> float:
        return self.susceptibility_sum / self.n

    @property
    def L_max(self) -> float:
        return self.largest_component / self.n

    @property
    def t(self) -> float:
        return 2.0 * self.steps / self.n

    @property
    def max_edges(self) -> int:
        return self.n * (self.n - 1) // 2

    @property
    def complete(self) -> bool:
        return self.edges_added >= self.max_edges

    # -- structure --------------------------------------------------------
    def reserve(self, extra: int) -> None:
        """Make room in the edge registry for ``extra`` more edges."""
        need = min(self.edges_added + max(0, extra), self.max_edges)
        cap = self.keys.size
        if 2 * need <= cap:
            return
        while 2 * need > cap:
            cap *= 2
        self.keys = _k.reg_rehash(self.keys, cap)

    def has_edge(self, u: int, v: int) -> bool:
        if u == v:
            return False
        a, b = min(u, v), max(u, v)
        return bool(_k.reg_contains(self.keys, a * self.n + b))

    def is_isolated(self, v: int) -> bool:
        return bool(self.pos[v] < self.isolated_count)

    def edges(self) -> set[tuple[int, int]]:
        packed = self.keys[self.keys != _k.EMPTY]
        return {(int(k // self.n), int(k % self.n)) for k in packed}

    def roots(self) -> np.ndarray:
        """Component representative of every vertex (pure, no path compression)."""
        r = self.parent.copy()
        while True:
            nxt = r[r]
            if np.array_equal(nxt, r):
                return r
            r = nxt

    def component_sizes(self) -> np.ndarray:
        counts = np.bincount(self.roots(), minlength=self.n)
        return counts[counts > 0]

    def recount(self) -> dict[str, int]:
        """Recompute every maintained observable from the forest and registry."""
        sizes = self.component_sizes()
        edges = self.edges()
        degree = np.zeros(self.n, dtype=np.int64)
        for a, b in edges:
            degree[a] += 1
            degree[b] += 1
        return {
            "isolated_count": int(np.count_nonzero(sizes == 1)),
            "isolated_by_degree": int(np.count_nonzero(degree == 0)),
            "susceptibility_sum": int(np.sum(sizes.astype(np.int64) ** 2)),
            "largest_component": int(sizes.max()),
            "edges": len(edges),
        }

    def check(self) -> None:
        """Raise AssertionError if an incremental counter disagrees with a recount."""
        rc = self.recount()
        assert rc["isolated_count"] == self.isolated_count, rc
        assert rc["isolated_by_degree"] == self.isolated_count, rc
        assert rc["susceptibility_sum"] == self.susceptibility_sum, rc
        assert rc["largest_component"] == self.largest_component, rc
        assert rc["edges"] == self.edges_added, rc
        assert np.array_equal(self.perm[self.pos], np.arange(self.n))
        iso = set(self.perm[: self.isolated_count].tolist())
        assert all(self.size[self.roots()[v]] == 1 for v in iso)

    def sum_fourth_powers(self) -> int:
        sizes = self.component_sizes().astype(object)
        return int(sum(s**4 for s in sizes))


def new_state(config: ProcessConfig | int) -> GraphState:
    n = config.n if isinstance(config, ProcessConfig) else config
    return GraphState(n)


def sample_next_edge_exact(state: GraphState, K: float, rng: np.random.Generator) -> tuple[int, int]:
    """Draw (without adding) the next edge of the exact process."""
    if state.complete:
        raise GraphComplete(f"all {state.max_edges} edges are present")
    u, v = _k.sample_exact(state.pos, state.perm, state.keys, state.counters,
                           state.n, float(K), rng)
    return int(u), int(v)


def sample_next_edges_exact(state: GraphState, K: float, rng: np.random.Generator,
                            reps: int) -> tuple[np.ndarray, np.ndarray]:
    """``reps`` independent draws of the next exact-mode edge from a frozen state."""
    if state.complete:
        raise GraphComplete(f"all {state.max_edges} edges are present")
    return _k.sample_exact_many(state.pos, state.perm, state.keys, state.counters,
                                state.n, float(K), rng, int(reps))


def apply_edge(state: GraphState, u: int, v: int) -> GraphState:
    if not (0 <= u < state.n and 0 <= v < state.n):
        raise ValueError(f"vertex out of range: ({u}, {v})")
    if u == v:
        raise ValueError(f"loop at vertex {u}")
    if state.has_edge(u, v):
        raise ValueError(f"duplicate edge ({u}, {v})")
    state.reserve(1)
    _k.apply_edge(state.parent, state.size, state.perm, state.pos, state.keys,
                  state.counters, state.n, int(u), int(v))
    state.counters[_k.STEPS] += 1
    return state


def step_exact(state: GraphState, K: float, rng: np.random.Generator) -> tuple[int, int]:
    u, v = sample_next_edge_exact(state, K, rng)
    apply_edge(state, u, v)
    return u, v


def step_approximate(state: GraphState, K: float, rng: np.random.Generator) -> str:
    """One approximate step; returns ``"added"`` or ``"skipped"``."""
    state.reserve(1)
    added = _k.step_approximate(state.parent, state.size, state.perm, state.pos,
                                state.keys, state.counters, state.n, float(K), rng)
    return "added" if added else "skipped"


def approximate_step_deltas(state: GraphState, K: float, rng: np.random.Generator,
                            reps: int) -> tuple[np.ndarray, np.ndarray]:
    """Replicated single approximate steps from ``state`` (not applied).

    Returns the per-replicate changes of the isolated count and of n*S.
    """
    return _k.approximate_deltas(state.parent, state.size, state.perm, state.pos,
                                 state.keys, state.counters, state.n, float(K), rng,
                                 int(reps))


def expected_isolation_drift(n: int, I: float, K: float) -> float:
    """E[I(G') - I(G)] for one approximate step from a graph with isolation ratio I."""
    d = I * I + K * (1 - I * I)
    return -2.0 / n * (1 - (1 - I) * K / d - (I / n) / d)


def expected_susceptibility_drift(n: int, I: float, S: float, K: float,
                                  sum_fourth: float) -> float:
    """E[S(G') - S(G)] for one approximate step.

    ``sum_fourth`` is the sum of |C|^4 over the components of G.
    """
    d = I * I + K * (1 - I * I)
    err = K / d * sum_fourth / n**2 + (1 - K) / d * I / n
    return 2.0 / n * ((1 - K) * I * I / d + K / d * S * S - err)


# -- runs and traces ------------------------------------------------------

@dataclass
class ProcessTrace:
    """Rows (t, I, S, L_max) sampled every ``stride`` steps of one run."""

    t: np.ndarray
    I: np.ndarray  # noqa: E741
    S: np.ndarray
    Lmax: np.ndarray
    edges: np.ndarray
    stride: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def at(self, t: float) -> tuple[float, float, float]:
        """Values at the last recorded row with time <= t."""
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        if i < 0:
            raise ValueError(f"no row at or before t={t}")
        return float(self.I[i]), float(self.S[i]), float(self.Lmax[i])

    def rows(self) -> Iterator[tuple[float, float, float, float]]:
        for row in zip(self.t, self.I, self.S, self.Lmax):
            yield tuple(float(x) for x in row)

    def csv_text(self) -> str:
        lines = ["t,I,S,Lmax"]
        for t, i, s, l in self.rows():
            lines.append(f"{t!r},{i!r},{s!r},{l!r}")
        return "\n".join(lines) + "\n"

    def write(self, csv_path: str | os.PathLike) -> tuple[str, str]:
        """Write the CSV and its JSON sidecar (``<csv>.json``); returns both paths."""
        csv_path = os.fspath(csv_path)
        json_path = csv_path + ".json"
        _atomic_write(csv_path, self.csv_text())
        _atomic_write(json_path, json.dumps(self.meta, indent=2, sort_keys=True) + "\n")
        return csv_path, json_path


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".part"
    try:
        with open(tmp, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _advance(state: GraphState, config: ProcessConfig, rng, n_steps: int,
             stride: int, stop_largest: int = 0):
    n_steps = int(n_steps)
    if config.mode == "exact":
        n_steps = min(n_steps, state.max_edges - state.edges_added)
    rows = n_steps // stride + 2 if stride > 0 else 1
    bufs = [np.empty(rows, dtype=np.int64) for _ in range(5)]
    state.reserve(n_steps)
    status, written = _k.advance(
        state.parent, state.size, state.perm, state.pos, state.keys, state.counters,
        state.n, float(config.K), config.mode == "exact", rng,
        n_steps, stride, stop_largest, *bufs, 0)
    return status, [b[:written] for b in bufs]


def run(config: ProcessConfig, state: Optional[GraphState] = None) -> ProcessTrace:
    """Simulate ``floor(t_max * n / 2)`` steps and return the sampled trace.

    In exact mode the run stops early once the graph is complete.
    """
    state = state if state is not None else new_state(config)
    rng = config.make_rng()
    stride = config.resolved_stride
    first = (state.steps, state.isolated_count, state.susceptibility_sum,
             state.largest_component, state.edges_added)
    _, cols = _advance(state, config, rng, config.n_steps, stride)
    steps, iso, ssum, largest, edges = (
        np.concatenate(([f], c)) for f, c in zip(first, cols))
    if steps[-1] != state.steps:
        last = (state.steps, state.isolated_count, state.susceptibility_sum,
                state.largest_component, state.edges_added)
        steps, iso, ssum, largest, edges = (
            np.append(c, x) for c, x in zip((steps, iso, ssum, largest, edges), last))
    n = config.n
    return ProcessTrace(
        t=2.0 * steps / n,
        I=iso / n,
        S=ssum / n,
        Lmax=largest / n,
        edges=edges,
        stride=stride,
        meta={"n": n, "K": config.K, "mode": config.mode, "seed": config.seed,
              "stride": stride, "rng": RNG_NAME},
    )


def _threshold_size(alpha: float, n: int) -> int:
    return max(1, math.ceil(alpha * n - 1e-9))


def first_threshold_time(config: ProcessConfig, alpha: float) -> float:
    """Scaled time at which one run first has a component of size >= alpha*n."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    target = _threshold_size(alpha, config.n)
    state = new_state(config)
    if state.largest_component >= target:
        return 0.0
    status, _ = _advance(state, config, config.make_rng(), config.n_steps, 0, target)
    if status != _k.STATUS_THRESHOLD:
        raise ThresholdNotReached(
            f"largest component {state.largest_component} < {target} at t={state.t:.4f} "
            f"(n={config.n}, K={config.K}, seed={config.seed})")
    return state.t


def estimate_tc_by_threshold(config: ProcessConfig, alpha: float = 0.01,
                             seeds: int = 10) -> CriticalTimeEstimate:
    """Mean first time the largest component reaches alpha*n, over ``seeds`` runs.

    Run i uses seed ``config.seed + i``.
    """
    times = []
    for i in range(seeds):
        cfg = ProcessConfig(config.n, config.K, config.mode, config.seed + i,
                            config.t_max, config.stride)
        times.append(first_threshold_time(cfg, alpha))
    times = np.asarray(times)
    se = float(times.std(ddof=1) / math.sqrt(seeds)) if seeds > 1 else 0.0
    return CriticalTimeEstimate(
        K=config.K, t_c=float(times.mean()), method="simulation", uncertainty=se,
        meta={"n": config.n, "alpha": alpha, "mode": config.mode,
              "seeds": [config.seed + i for i in range(seeds)],
              "times": times.tolist(), "rule": "threshold", "rng": RNG_NAME})


def estimate_tc_by_derivative(trace: ProcessTrace, factor: float = 5.0,
                              min_rate: float = 0.05, warmup: int = 5) -> float:
    """First row time where dL_max/dt exceeds ``factor`` times its running median.

    Rates are in vertices per unit of scaled time. The median is floored at
    ``min_rate * n`` so that isolated merges of O(log n)-sized components in
    the subcritical phase cannot trigger the rule. Row spacing sets the
    resolution; the default stride (n/200 steps, dt = 0.01) suits K up to
    about 10^3.
    """
    n = trace.meta["n"]
    L = trace.Lmax * n
    rate = np.diff(L) / np.diff(trace.t)
    history: list[float] = []
    for i, r in enumerate(rate):
        if i >= warmup and r > factor * max(float(np.median(history)), min_rate * n):
            return float(trace.t[i])
        history.append(float(r))
    raise ThresholdNotReached("no jump in dL_max/dt found in trace")
