"""Critical time t_c(K): single values, K sweeps, and simulation cross-checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from .estimate import CriticalTimeEstimate
from .ode import OdeError, SolverConfig, solve_coupled

# above this K the fixed alpha threshold tends to fire late; use the derivative rule
DERIVATIVE_RULE_K = 50.0


def asymptotic_tc(K: float) -> float:
    """Leading-order large-K law 4 / sqrt(3K)."""
    if not K > 0:
        raise ValueError("K must be positive")
    return 4.0 / math.sqrt(3.0 * K)


def critical_time(K: float, cfg: SolverConfig = SolverConfig()) -> CriticalTimeEstimate:
    if K < 0:
        raise ValueError(f"K must be non-negative, got {K}")
    if K == 0:
        return CriticalTimeEstimate(0.0, 1.5, "closed-form", 0.0)
    sol = solve_coupled(K, cfg)
    half = 0.5 * sol.bracket_width
    if K == 1:
        if abs(sol.t_c - 1.0) > max(1e-6, 10 * cfg.rtol):
            raise OdeError(f"solver gives t_c(1) = {sol.t_c!r}, closed form is 1")
        return CriticalTimeEstimate(1.0, 1.0, "closed-form", 0.0, {"ode_t_c": sol.t_c})
    return CriticalTimeEstimate(float(K), float(sol.t_c), "ode", float(half),
                                {"bracket": list(sol.blowup_bracket), "rtol": cfg.rtol,
                                 "atol": cfg.atol})


@dataclass
class SweepRow:
    K: float
    estimate: Optional[CriticalTimeEstimate]
    status: str = "ok"

    @property
    def asymptotic(self) -> float:
        return asymptotic_tc(self.K) if self.K > 0 else math.nan

    @property
    def ratio(self) -> float:
        if self.estimate is None or self.K == 0:
            return math.nan
        return self.estimate.t_c * math.sqrt(3.0 * self.K) / 4.0


@dataclass
class SweepReport:
    rows: list[SweepRow] = field(default_factory=list)

    @property
    def K(self) -> list[float]:
        return [r.K for r in self.rows]

    @property
    def t_c(self) -> list[float]:
        return [r.estimate.t_c if r.estimate else math.nan for r in self.rows]

    @property
    def ratios(self) -> list[float]:
        return [r.ratio for r in self.rows]

    @property
    def failed(self) -> list[SweepRow]:
        return [r for r in self.rows if r.estimate is None]

    def strictly_decreasing(self) -> bool:
        """t_c drops between successive solved rows by more than both uncertainties."""
        ok = [r.estimate for r in self.rows if r.estimate is not None]
        return all(a.t_c - b.t_c > a.uncertainty + b.uncertainty
                   for a, b in zip(ok, ok[1:]))

    def csv_text(self) -> str:
        lines = ["K,tc,method,uncertainty,asymptotic,ratio,status"]
        for r in self.rows:
            e = r.estimate
            cells = [repr(float(r.K)),
                     repr(float(e.t_c)) if e else "",
                     e.method if e else "",
                     repr(float(e.uncertainty)) if e else "",
                     "" if math.isnan(r.asymptotic) else repr(float(r.asymptotic)),
                     "" if math.isnan(r.ratio) else repr(float(r.ratio)),
                     r.status]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def k_grid(k_min: float, k_max: float, k_step: float) -> list[float]:
    """Inclusive arithmetic grid, rounded to suppress accumulated float error."""
    if k_step <= 0 or k_max < k_min:
        raise ValueError("need k_step > 0 and k_max >= k_min")
    count = int(round((k_max - k_min) / k_step)) + 1
    return [round(k_min + i * k_step, 12) for i in range(count)]


def sweep(K_grid: Sequence[float], cfg: SolverConfig = SolverConfig(),
          require_monotone: bool = True, jobs: int = 1) -> SweepReport:
    """One critical-time estimate per K; failures are kept as flagged rows."""
    K_grid = [float(k) for k in K_grid]
    if any(b <= a for a, b in zip(K_grid, K_grid[1:])):
        raise ValueError("K grid must be strictly increasing")
    if any(k < 0 for k in K_grid):
        raise ValueError("K grid must be non-negative")

    if jobs > 1 and len(K_grid) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_sweep_row, K_grid, [cfg] * len(K_grid)))
    else:
        rows = [_sweep_row(k, cfg) for k in K_grid]

    report = SweepReport(rows)
    if require_monotone and not report.strictly_decreasing():
        raise OdeError("t_c is not strictly decreasing along the grid")
    return report


def _sweep_row(K: float, cfg: SolverConfig) -> SweepRow:
    try:
        return SweepRow(K, critical_time(K, cfg))
    except (OdeError, ValueError, FloatingPointError) as exc:
        return SweepRow(K, None, f"error: {exc}")


@dataclass
class ComparisonRecord:
    K: float
    n: int
    seeds: int
    alpha: float
    simulated: float
    simulated_se: float
    ode: float
    difference: float
    rule: str
    derivative_rule_used: bool
    per_seed: list[float]
    mode: str = "exact"

    def to_dict(self) -> dict:
        return asdict(self)


def compare_simulation_vs_ode(K: float, n: int, seeds: int = 10, alpha: float = 0.01,
                              seed: int = 0, rule: str = "auto", mode: str = "exact",
                              t_max: Optional[float] = None,
                              cfg: SolverConfig = SolverConfig()) -> ComparisonRecord:
    """Simulated critical time (mean over seeds) against the ODE blowup time.

    ``rule`` is ``"threshold"`` (largest component >= alpha n), ``"derivative"``
    (jump in dL_max/dt) or ``"auto"`` (derivative only for K above 50).
    """
    from .process import ProcessConfig, estimate_tc_by_derivative, estimate_tc_by_threshold, run

    if K < 0:
        raise ValueError("K must be non-negative")
    if n < 1000:
        raise ValueError("n must be at least 1000 for a meaningful comparison")
    if rule not in ("auto", "threshold", "derivative"):
        raise ValueError(f"unknown rule {rule!r}")
    ode_tc = critical_time(K, cfg).t_c
    if t_max is None:
        t_max = 2.0 * ode_tc + 0.5
    use_derivative = rule == "derivative" or (rule == "auto" and K > DERIVATIVE_RULE_K)

    if use_derivative:
        times = []
        for i in range(seeds):
            trace = run(ProcessConfig(n, K, mode, seed + i, t_max))
            times.append(estimate_tc_by_derivative(trace))
        mean = sum(times) / seeds
        se = (math.sqrt(sum((x - mean) ** 2 for x in times) / (seeds - 1) / seeds)
              if seeds > 1 else 0.0)
    else:
        est = estimate_tc_by_threshold(ProcessConfig(n, K, mode, seed, t_max), alpha, seeds)
        times, mean, se = est.meta["times"], est.t_c, est.uncertainty

    return ComparisonRecord(
        K=float(K), n=n, seeds=seeds, alpha=alpha, simulated=mean, simulated_se=se,
        ode=ode_tc, difference=mean - ode_tc,
        rule="derivative" if use_derivative else "threshold",
        derivative_rule_used=use_derivative, per_seed=list(times), mode=mode)
