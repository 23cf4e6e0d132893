"""Acceptance criteria, one test each, at their stated tolerances.

Every test prints a single ``criterion k: PASS|FAIL`` line and registers it
for the end-of-session summary.
"""

import json
import os
import random
import subprocess
import sys
import time
from fractions import Fraction as F

import numpy as np
import pytest

from bgp import coupling as cp
from bgp import process as pr
from bgp.critical import compare_simulation_vs_ode, critical_time, k_grid, sweep
from bgp.ode import solve_coupled, solve_y
from bgp.process import ProcessConfig, apply_edge, new_state, run

import oracles
from conftest import ACCEPTANCE
from test_coupling import random_problem


def record(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def cli(out, *args):
    start = time.perf_counter()
    r = subprocess.run([sys.executable, "-m", "bgp", *args, "--out", str(out)],
                       capture_output=True, text=True)
    return r, time.perf_counter() - start


def test_criterion_01_closed_form_anchors(tmp_path):
    r1, dt1 = cli(tmp_path / "k1", "ode", "--K", "1")
    r0, dt0 = cli(tmp_path / "k0", "ode", "--K", "0")
    tc1 = json.load(open(tmp_path / "k1" / "manifest.json"))["result"]["t_c"]
    tc0 = json.load(open(tmp_path / "k0" / "manifest.json"))["result"]["t_c"]
    ok = (r1.returncode == r0.returncode == 0 and abs(tc1 - 1) <= 1e-6 and tc0 == 1.5
          and dt1 < 1 and dt0 < 1)
    record(1, ok, f"t_c(1)={tc1!r} ({dt1:.2f}s), t_c(0)={tc0!r} ({dt0:.2f}s)")


def test_criterion_02_rk4_oracle():
    start = time.perf_counter()
    worst, details = 0.0, []
    for K in (0.5, 2.0, 4.0):
        sol = solve_coupled(K)
        t = 0.8 * sol.t_c
        ref, err = oracles.rk4_richardson(K, t, 1e-6)
        rel_err = err / np.abs(ref)
        assert np.all(rel_err < 1e-9), f"oracle not converged at K={K}: {rel_err}"
        y, z = sol(t)
        rel = max(abs(y - ref[0]) / abs(ref[0]), abs(z - ref[1]) / abs(ref[1]))
        worst = max(worst, rel)
        details.append(f"K={K}: {rel:.1e}")
    dt = time.perf_counter() - start
    record(2, worst <= 1e-6 and dt < 30,
           f"max rel err {worst:.1e} ({', '.join(details)}); {dt:.1f}s")


def test_criterion_03_asymptotic_law():
    start = time.perf_counter()
    Ks = [1e2, 1e3, 1e4, 1e5]
    ratios = [critical_time(K).t_c * np.sqrt(3 * K) / 4 for K in Ks]
    dt = time.perf_counter() - start
    band = 0.95 <= ratios[2] <= 1.05
    decreasing = all(b < a for a, b in zip(ratios, ratios[1:]))
    record(3, band and decreasing and dt < 60,
           f"ratios {', '.join(f'{r:.4f}' for r in ratios)}; band at 1e4: {band}; "
           f"decreasing: {decreasing}; {dt:.1f}s")


def test_criterion_04_strict_monotone_grid():
    start = time.perf_counter()
    rep = sweep(k_grid(0.1, 10, 0.1), require_monotone=False)
    dt = time.perf_counter() - start
    est = [r.estimate for r in rep.rows]
    gaps = [a.t_c - b.t_c - 2 * max(a.uncertainty, b.uncertainty) for a, b in zip(est, est[1:])]
    ok = len(est) == 100 and not rep.failed and rep.strictly_decreasing() and dt < 120
    record(4, ok, f"{len(est)} solves, min gap beyond bracket widths {min(gaps):.3e}; {dt:.1f}s")


def test_criterion_05_simulation_vs_ode():
    start = time.perf_counter()
    diffs = {}
    for K in (0.5, 1.0, 2.0, 5.0):
        rec = compare_simulation_vs_ode(K, 100_000, seeds=10, alpha=0.01, rule="threshold")
        diffs[K] = rec.difference
    dt_small = time.perf_counter() - start
    start = time.perf_counter()
    big = compare_simulation_vs_ode(1.0, 1_000_000, seeds=10, alpha=0.01, rule="threshold")
    dt_big = time.perf_counter() - start
    ok = (all(abs(d) < 0.1 for d in diffs.values()) and dt_small < 600
          and abs(big.difference) < 0.05 and dt_big < 900)
    record(5, ok, "n=1e5: " + ", ".join(f"K={k}: {d:+.4f}" for k, d in diffs.items())
           + f" ({dt_small:.0f}s); n=1e6 K=1: {big.difference:+.4f} ({dt_big:.0f}s)")


def test_criterion_06_trajectory_k1():
    n, seeds = 100_000, 5
    traces = [run(ProcessConfig(n, 1.0, seed=s, t_max=0.9, stride=50)) for s in range(seeds)]
    t = traces[0].t
    I = np.mean([tr.I for tr in traces], axis=0)
    S = np.mean([tr.S for tr in traces], axis=0)
    keep = t <= 0.9 + 1e-12
    dS = np.max(np.abs(S[keep] - 1 / (1 - t[keep])))
    dI = np.max(np.abs(I[keep] - np.exp(-t[keep])))
    record(6, dS <= 0.1 and dI <= 0.01,
           f"sup|S-1/(1-t)|={dS:.3f} (tol 0.1), sup|I-e^-t|={dI:.5f} (tol 0.01)")


def test_criterion_07_k0_exact():
    n = 10_000
    tr = run(ProcessConfig(n, 0.0, t_max=1.0, stride=1))
    keep = tr.t <= 1.0
    dI = np.max(np.abs(tr.I[keep] - (1 - tr.t[keep])))
    dS = np.max(np.abs(tr.S[keep] - (1 + tr.t[keep])))
    record(7, dI <= 2 / n and dS <= 2 / n and tr.t[keep][-1] == 1.0,
           f"max|I-(1-t)|={dI:.2e}, max|S-(1+t)|={dS:.2e}, bound {2 / n:.0e}")


def _pinned_states():
    n = 1000
    yield "empty, K=2", new_state(n), 2.0
    rng = np.random.Generator(np.random.PCG64(2024))
    s = new_state(n)
    for _ in range(400):
        pr.step_exact(s, 0.5, rng)
    yield "t=0.8, K=0.5", s, 0.5
    s = new_state(n)
    for _ in range(200):
        pr.step_exact(s, 5.0, rng)
    big = list(range(500, 700))
    for a, b in zip(big, big[1:]):
        if not s.has_edge(a, b):
            apply_edge(s, a, b)
    yield "giant chain + t=0.4, K=5", s, 5.0


def test_criterion_08_drift():
    start = time.perf_counter()
    reps = 1_000_000
    rng = np.random.Generator(np.random.PCG64(8))
    worst, details = 0.0, []
    for name, s, K in _pinned_states():
        n = s.n
        d_iso, d_ssum = pr.approximate_step_deltas(s, K, rng, reps)
        for label, sample, expected in (
                ("dI", d_iso / n, pr.expected_isolation_drift(n, s.I, K)),
                ("dS", d_ssum / n, pr.expected_susceptibility_drift(
                    n, s.I, s.S, K, s.sum_fourth_powers()))):
            se = sample.std(ddof=1) / np.sqrt(reps)
            z = abs(sample.mean() - expected) / se
            worst = max(worst, z)
            details.append(f"{name} {label}: {z:.2f} SE")
    dt = time.perf_counter() - start
    record(8, worst <= 3 and dt < 300, f"worst {worst:.2f} SE; " + "; ".join(details)
           + f"; {dt:.1f}s")


def test_criterion_09_envelope():
    ts = np.round(np.arange(1, 201) * 0.01, 10)
    bad = 0
    for K in (0.25, 4.0):
        y = solve_y(K, 2.0)(ts)
        lo, hi = np.exp(-ts / min(1, K)), np.exp(-ts / max(1, K))
        bad += int(np.sum(~((lo < y) & (y < hi))))
    record(9, bad == 0, f"{bad} violations on 2 x {ts.size} grid points")


def test_criterion_10_coupling_exactness():
    ok_feasible = 0
    for seed in range(50):
        p = random_problem(random.Random(seed))
        plan = cp.build_coupling(p)
        ok_feasible += plan.feasible and cp.check_plan(p, plan)
    ok_cut = 0
    trials = 20
    for seed in range(trials):
        p = random_problem(random.Random(500 + seed))
        u = max(p.U, key=lambda x: p.mu[x])  # strip all of u's relations: N({u}) is empty
        q = cp.CouplingProblem(p.U, p.V, {r for r in p.R if r[0] != u}, p.mu, p.nu)
        plan = cp.build_coupling(q)
        ok_cut += (not plan.feasible and plan.cut is not None and q.hall_gap(plan.cut) > 0)
    record(10, ok_feasible == 50 and ok_cut == trials,
           f"{ok_feasible}/50 exact plans, {ok_cut}/{trials} valid violating cuts")


def test_criterion_11_domination():
    start = time.perf_counter()
    failures, count = [], 0
    for n in (3, 4, 5):
        props = [cp.contains_edge(0, 1), cp.has_component_at_least(3), cp.edge_count_at_least(2)]
        for K in (F(1, 3), F(1, 2), F(2), F(3)):
            for t in (1, 2, 3):
                for prop in props:
                    count += 1
                    if not cp.verify_domination(n, K, t, prop):
                        failures.append((n, str(K), t, prop.__name__))
    dt = time.perf_counter() - start
    record(11, not failures and dt < 300,
           f"{count - len(failures)}/{count} combinations hold; {dt:.1f}s"
           + (f"; failures {failures}" if failures else ""))


def test_criterion_12_performance(tmp_path):
    script = (
        "import resource, sys, time\n"
        "from bgp.cli import main\n"
        "t = time.perf_counter()\n"
        "code = main(sys.argv[1:])\n"
        "dt = time.perf_counter() - t\n"
        "print(code, dt, resource.getrusage(resource.RUSAGE_SELF).ru_maxrss)\n")
    start = time.perf_counter()
    r = subprocess.run([sys.executable, "-c", script, "simulate", "--n", "1000000", "--K", "1",
                        "--t-max", "2", "--out", str(tmp_path)], capture_output=True, text=True)
    wall = time.perf_counter() - start
    code, _, rss_kb = r.stdout.split()[-3:]
    peak_mb = int(rss_kb) / 1024
    record(12, r.returncode == 0 and code == "0" and wall <= 60 and peak_mb <= 512,
           f"wall {wall:.1f}s (incl. interpreter start), peak RSS {peak_mb:.0f} MB, "
           f"{os.cpu_count()} core(s)")
