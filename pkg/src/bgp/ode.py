"""Isolation ratio y(t) and susceptibility z(t) of the biased process.

    y' = (1 - y) K / (y^2 + (1 - y^2) K) - 1,           y(0) = 1
    z' = c (z^2 - 1) + 1,  c = K / (y^2 + (1 - y^2) K),  z(0) = 1

z blows up at a finite t_c. Integration runs on (y, z) until z reaches
``z_switch`` and then on (y, w) with w = 1/z, which obeys

    w' = -c (1 - w^2) - w^2

and is smooth through t_c. The blowup time is the root of w, located by
bisection on the dense interpolant of the step in which w changes sign.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import DOP853


class OdeError(RuntimeError):
    pass


class NoBlowupError(OdeError):
    """w never crossed zero before ``t_ceiling``."""


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    z_switch: float = 1e3
    t_ceiling: float = 5.0
    grid_step: float = 1e-3

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not self.z_switch > 1:
            raise ValueError("z_switch must exceed 1")
        if not self.t_ceiling > 0:
            raise ValueError("t_ceiling must be positive")
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")


def coefficient_c(y: float, K: float) -> float:
    """Rate coefficient c = K / (y^2 + (1 - y^2) K), between min(1,K) and max(1,K)."""
    return K / (y * y + (1.0 - y * y) * K)


def _y_rate(y, K):
    d = y * y + (1.0 - y * y) * K
    return (1.0 - y) * K / d - 1.0


def _rhs_y(K):
    def f(t, u):
        return np.array([_y_rate(u[0], K)])
    return f


def _rhs_yz(K):
    def f(t, u):
        y, z = u
        d = y * y + (1.0 - y * y) * K
        return np.array([(1.0 - y) * K / d - 1.0, K / d * (z * z - 1.0) + 1.0])
    return f


def _rhs_yw(K):
    def f(t, u):
        y, w = u
        d = y * y + (1.0 - y * y) * K
        c = K / d
        return np.array([(1.0 - y) * K / d - 1.0, -c * (1.0 - w * w) - w * w])
    return f


@dataclass
class _Segment:
    t0: float
    t1: float
    dense: Callable
    reciprocal: bool = False  # second component stores w = 1/z


def _march(fun, t0, u0, t_bound, cfg: SolverConfig, stop=None):
    """Step DOP853 until ``stop(u)`` holds or ``t_bound`` is reached."""
    solver = DOP853(fun, t0, np.asarray(u0, dtype=float), t_bound,
                    rtol=cfg.rtol, atol=cfg.atol)
    segments = []
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise OdeError(f"step failed at t={solver.t}: {msg}")
        segments.append((solver.t_old, solver.t, solver.dense_output()))
        if stop is not None and stop(solver.y):
            return solver, segments, True
    return solver, segments, False


class _Piecewise:
    """Dense evaluation over a list of step segments."""

    def __init__(self, segments: list[_Segment]):
        self.segments = segments
        self._ends = np.array([s.t1 for s in segments])

    @property
    def t_end(self) -> float:
        return self.segments[-1].t1

    def _locate(self, t):
        i = int(np.searchsorted(self._ends, t, side="left"))
        return min(i, len(self.segments) - 1)

    def raw(self, t: float) -> np.ndarray:
        return self.segments[self._locate(t)].dense(t)

    def evaluate(self, ts) -> np.ndarray:
        """Values at times ``ts`` with reciprocal components converted back."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        idx = np.minimum(np.searchsorted(self._ends, ts, side="left"),
                         len(self.segments) - 1)
        first = self.segments[0].dense(self.segments[0].t0)
        out = np.empty((len(first), ts.size))
        for i in np.unique(idx):
            seg = self.segments[i]
            sel = idx == i
            vals = np.atleast_2d(seg.dense(ts[sel]))
            if seg.reciprocal:
                vals = vals.copy()
                vals[1] = 1.0 / vals[1]
            out[:, sel] = vals
        return out


def _grid(step: float, t_end: float, extra) -> np.ndarray:
    count = int(math.floor(t_end / step + 1e-9)) + 1
    uniform = np.arange(count) * step
    g = np.unique(np.concatenate([uniform, np.asarray(extra, dtype=float), [0.0]]))
    return g[g <= t_end]


@dataclass
class YSolution:
    K: float
    t: np.ndarray
    y: np.ndarray
    _dense: _Piecewise = field(repr=False)

    def __call__(self, t):
        """y at arbitrary times in [0, t_end] (scalar in, scalar out)."""
        out = self._dense.evaluate(t)[0]
        return float(out[0]) if np.ndim(t) == 0 else out


def solve_y(K: float, t_end: float, cfg: SolverConfig = SolverConfig()) -> YSolution:
    """Isolation-ratio ODE on [0, t_end]."""
    if not K > 0:
        raise ValueError(f"solve_y needs K > 0, got {K} (K = 0 has y = 1 - t)")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    _, raw, _ = _march(_rhs_y(K), 0.0, [1.0], t_end, cfg)
    segs = [_Segment(a, b, d) for a, b, d in raw]
    dense = _Piecewise(segs)
    t = _grid(cfg.grid_step, t_end, [s.t1 for s in segs])
    return YSolution(K, t, dense.evaluate(t)[0], dense)


@dataclass
class OdeSolution:
    """Grid of (t, y, z) up to the blowup, plus the blowup bracket."""

    K: float
    t: np.ndarray
    y: np.ndarray
    z: np.ndarray
    t_c: Optional[float]
    blowup_bracket: tuple[float, float]
    cfg: SolverConfig
    method: str = "ode"
    _dense: Optional[_Piecewise] = field(default=None, repr=False)
    _closed: Optional[Callable] = field(default=None, repr=False)

    def __call__(self, t):
        """(y, z) at times before t_c."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if self.t_c is not None and np.any(ts >= self.t_c):
            raise ValueError("z is unbounded at and beyond t_c")
        if self._closed is not None:
            vals = np.array([self._closed(x) for x in ts]).T
        else:
            vals = self._dense.evaluate(ts)
        if np.ndim(t) == 0:
            return float(vals[0, 0]), float(vals[1, 0])
        return vals[0], vals[1]

    @property
    def bracket_width(self) -> float:
        return self.blowup_bracket[1] - self.blowup_bracket[0]

    def _w(self, s: float) -> float:
        if s >= self.blowup_bracket[1]:
            return -1.0
        if self._closed is not None:
            return 1.0 / self._closed(s)[1]
        seg = self._dense.segments[self._dense._locate(s)]
        v = seg.dense(s)[1]
        return v if seg.reciprocal else 1.0 / v

    def time_at_z(self, level: float) -> float:
        """First time at which z equals ``level`` (level > 1)."""
        if not level > 1:
            raise ValueError("level must exceed 1")
        target = 1.0 / level
        return _bisect(lambda s: self._w(s) - target, 0.0, self.blowup_bracket[1],
                       4 * np.finfo(float).eps)

    def csv_text(self) -> str:
        lines = ["t,y,z"]
        for a, b, c in zip(self.t, self.y, self.z):
            lines.append(f"{float(a)!r},{float(b)!r},{float(c)!r}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"K": self.K, "t_c": self.t_c,
                "bracket_lo": self.blowup_bracket[0], "bracket_hi": self.blowup_bracket[1],
                "rtol": self.cfg.rtol, "atol": self.cfg.atol, "method": self.method}

    def write(self, csv_path: str | os.PathLike) -> tuple[str, str]:
        from .process import _atomic_write
        csv_path = os.fspath(csv_path)
        json_path = csv_path + ".json"
        _atomic_write(csv_path, self.csv_text())
        _atomic_write(json_path, json.dumps(self.summary(), indent=2) + "\n")
        return csv_path, json_path


def _bisect(g, lo, hi, width):
    """Root of g on [lo, hi] with g(lo) > 0 >= g(hi)."""
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_coupled(K: float, cfg: SolverConfig = SolverConfig()) -> OdeSolution:
    """Integrate (y, z) from (1, 1) until z blows up."""
    if not K > 0:
        raise ValueError(f"solve_coupled needs K > 0, got {K}; use closed_form_k0")

    solver, raw, hit = _march(_rhs_yz(K), 0.0, [1.0, 1.0], cfg.t_ceiling, cfg,
                              stop=lambda u: u[1] >= cfg.z_switch)
    if not hit:
        raise NoBlowupError(f"K={K}: z stayed below {cfg.z_switch} up to t={cfg.t_ceiling}")
    segs = [_Segment(a, b, d) for a, b, d in raw]
    t1, (y1, z1) = solver.t, solver.y

    solver, raw, hit = _march(_rhs_yw(K), t1, [y1, 1.0 / z1], cfg.t_ceiling, cfg,
                              stop=lambda u: u[1] <= 0.0)
    if not hit:
        raise NoBlowupError(f"K={K}: w did not reach 0 before t_ceiling={cfg.t_ceiling}")
    segs += [_Segment(a, b, d, reciprocal=True) for a, b, d in raw]

    last = segs[-1]
    lo, hi = float(last.t0), float(last.t1)
    while hi - lo > cfg.rtol * lo:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if float(last.dense(mid)[1]) > 0:
            lo = mid
        else:
            hi = mid
    t_c = float(0.5 * (lo + hi))

    dense = _Piecewise(segs)
    step_times = [s.t1 for s in segs[:-1]]
    t = _grid(cfg.grid_step, lo, step_times)
    t = t[t < lo]
    y, z = dense.evaluate(t)
    return OdeSolution(K, t, y, z, t_c, (lo, hi), cfg, "ode", dense)


def closed_form_k0(t: float) -> tuple[float, float]:
    """(y, z) for K = 0: y = max(0, 1 - t); z = 1 + t up to t = 1, then 1/(3/2 - t)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t >= 1.5:
        raise ValueError("z is unbounded for t >= 3/2 when K = 0")
    if t <= 1.0:
        return 1.0 - t, 1.0 + t
    return 0.0, 1.0 / (1.5 - t)


def closed_form_solution_k0(cfg: SolverConfig = SolverConfig()) -> OdeSolution:
    t = _grid(cfg.grid_step, 1.5, [1.0])
    t = t[t < 1.5]
    vals = np.array([closed_form_k0(x) for x in t])
    return OdeSolution(0.0, t, vals[:, 0], vals[:, 1], 1.5, (1.5, 1.5), cfg,
                       "closed-form", _closed=closed_form_k0)


def solve(K: float, cfg: SolverConfig = SolverConfig()) -> OdeSolution:
    """``solve_coupled`` for K > 0, the closed form for K = 0."""
    if K == 0:
        return closed_form_solution_k0(cfg)
    return solve_coupled(K, cfg)
