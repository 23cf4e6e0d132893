import json
import math

import numpy as np
import pytest

from bgp.ode import (NoBlowupError, SolverConfig, closed_form_k0, coefficient_c, solve,
                     solve_coupled, solve_y)

import oracles

# blowup times from oracles.rk4_blowup at h = 1e-5 (agrees with h = 2e-5 to ~1e-12)
ORACLE_TC = {
    0.25: 1.2601111183078395,
    0.5: 1.1415875611230932,
    2.0: 0.8460947287725452,
    3.0: 0.7554677204122887,
    4.0: 0.6925778646165104,
    5.0: 0.6451446695689049,
    10.0: 0.5083325951539233,
    100.0: 0.19916852513542727,
}


@pytest.mark.parametrize("K", sorted(ORACLE_TC))
def test_blowup_matches_frozen_oracle(K):
    assert solve_coupled(K).t_c == pytest.approx(ORACLE_TC[K], rel=1e-8)


def test_frozen_oracle_is_reproducible():
    assert oracles.rk4_blowup(3.0, 1e-5, 10.0) == pytest.approx(ORACLE_TC[3.0], abs=1e-12)


def test_k1_matches_closed_form():
    sol = solve_coupled(1.0)
    assert abs(sol.t_c - 1.0) < 1e-9
    t = sol.t[sol.t < 0.999]
    assert np.max(np.abs(sol.z[: t.size] - 1 / (1 - t)) * (1 - t) ** 2) < 1e-9
    y = solve_y(1.0, 5.0)
    assert np.max(np.abs(y.y / np.exp(-y.t) - 1)) < 1e-9


def test_k0_closed_form():
    sol = solve(0.0)
    assert sol.t_c == 1.5 and sol.method == "closed-form"
    assert closed_form_k0(0.4) == (0.6, 1.4)
    assert closed_form_k0(1.25) == (0.0, 4.0)
    with pytest.raises(ValueError):
        closed_form_k0(1.5)
    assert sol(1.25) == (0.0, 4.0)


@pytest.mark.parametrize("K", [0.5, 2.0, 4.0])
def test_matches_rk4_oracle(K):
    t = 0.8 * ORACLE_TC[K]
    ref, err = oracles.rk4_richardson(K, t, 1e-4)
    assert np.all(err < 1e-10)
    y, z = solve_coupled(K)(t)
    assert y == pytest.approx(ref[0], rel=1e-8)
    assert z == pytest.approx(ref[1], rel=1e-8)


@pytest.mark.parametrize("K", [0.25, 0.5, 2.0, 4.0, 20.0])
def test_envelope(K):
    sol = solve_y(K, 3.0)
    t, y = sol.t[1:], sol.y[1:]
    assert np.all(np.exp(-t / min(1, K)) < y)
    assert np.all(y < np.exp(-t / max(1, K)))
    assert np.all(np.diff(sol.y) < 0)


def test_y_increases_with_k():
    ts = np.linspace(0.01, 3, 200)
    ys = [solve_y(K, 3.0)(ts) for K in (0.1, 0.5, 1, 2, 10)]
    assert all(np.all(b > a) for a, b in zip(ys, ys[1:]))


def test_coefficient_bounds():
    for K in (0.2, 3.0):
        for y in np.linspace(0, 1, 11):
            c = coefficient_c(y, K)
            assert min(1, K) - 1e-15 <= c <= max(1, K) + 1e-15


@pytest.mark.parametrize("K", [0.5, 3.0, 50.0])
def test_transform_switch_point_is_irrelevant(K):
    a = solve_coupled(K, SolverConfig(z_switch=10.0))
    b = solve_coupled(K, SolverConfig(z_switch=1e3))
    assert abs(a.t_c - b.t_c) <= 100 * 1e-10 * a.t_c


def test_tolerance_convergence():
    a = solve_coupled(2.0, SolverConfig(rtol=1e-8, atol=1e-10))
    b = solve_coupled(2.0, SolverConfig(rtol=1e-10, atol=1e-12))
    assert abs(a.t_c - b.t_c) < 1e-7


def test_time_at_z_inverts_z():
    sol = solve_coupled(2.0)
    for level in (2.0, 50.0, 1e4):
        s = sol.time_at_z(level)
        assert s < sol.t_c
        if level < 1e3:
            assert sol(s)[1] == pytest.approx(level, rel=1e-8)
    assert sol.t_c - sol.time_at_z(1e6) < 1e-5


def test_solution_interface(tmp_path):
    sol = solve_coupled(2.0)
    lo, hi = sol.blowup_bracket
    assert lo < sol.t_c < hi and sol.bracket_width <= 1e-10 * lo * 1.01
    assert np.all(np.diff(sol.t) > 0) and sol.t[-1] < lo
    assert np.all(np.diff(sol.z) > 0)
    with pytest.raises(ValueError):
        sol(sol.t_c)
    csv, js = sol.write(tmp_path / "k2.csv")
    assert open(csv).readline().strip() == "t,y,z"
    meta = json.load(open(js))
    assert meta["t_c"] == sol.t_c and meta["method"] == "ode"


def test_no_blowup_before_ceiling():
    with pytest.raises(NoBlowupError):
        solve_coupled(0.5, SolverConfig(t_ceiling=0.5))


@pytest.mark.parametrize("bad", [dict(rtol=0), dict(atol=-1), dict(z_switch=1.0),
                                 dict(t_ceiling=0), dict(grid_step=0)])
def test_solver_config_validation(bad):
    with pytest.raises(ValueError):
        SolverConfig(**bad)


def test_solvers_reject_nonpositive_k():
    with pytest.raises(ValueError):
        solve_coupled(0.0)
    with pytest.raises(ValueError):
        solve_y(-1.0, 1.0)
    assert math.isclose(solve(0.0).t_c, 1.5)
