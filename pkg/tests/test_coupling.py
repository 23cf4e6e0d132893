import json
import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bgp import coupling as cp

import oracles


def random_problem(rnd, feasible=True):
    """Masses pushed through a random joint law, so a coupling exists by construction.

    With ``feasible=False`` one support pair of the joint law is removed from R,
    which may or may not break feasibility.
    """
    nu_, nv = rnd.randint(1, 8), rnd.randint(1, 8)
    U = [f"u{i}" for i in range(nu_)]
    V = [f"v{j}" for j in range(nv)]
    pairs = [(u, v) for u in U for v in V]
    support = rnd.sample(pairs, rnd.randint(1, len(pairs)))
    weights = [rnd.randint(1, 9) for _ in support]
    total = sum(weights)
    phi = {p: F(w, total) for p, w in zip(support, weights)}
    mu = {u: sum((q for (a, _), q in phi.items() if a == u), F(0)) for u in U}
    nu = {v: sum((q for (_, b), q in phi.items() if b == v), F(0)) for v in V}
    extra = rnd.sample(pairs, rnd.randint(0, len(pairs) // 3))
    R = set(support) | set(extra)
    if not feasible:
        R.discard(rnd.choice(support))
    return cp.CouplingProblem(U, V, R, mu, nu)


def test_toy_infeasible():
    p = cp.CouplingProblem(["u1", "u2"], ["v1", "v2"], {("u1", "v1")},
                           {"u1": 1, "u2": 0}, {"v1": 0, "v2": 1})
    plan = cp.build_coupling(p)
    assert not plan.feasible and plan.cut == {"u1"}
    assert p.hall_gap(plan.cut) == 1


def test_toy_feasible():
    p = cp.CouplingProblem(["a", "b"], ["x", "y"], {("a", "x"), ("a", "y"), ("b", "y")},
                           {"a": F(1, 2), "b": F(1, 2)}, {"x": F(1, 3), "y": F(2, 3)})
    plan = cp.build_coupling(p)
    assert cp.check_plan(p, plan)
    assert plan.phi[("b", "y")] == F(1, 2)


@pytest.mark.parametrize("bad", [
    dict(R={("u", "z")}),
    dict(mu={"u": F(1, 2)}),
    dict(nu={"v": -1}),
])
def test_problem_validation(bad):
    kw = dict(U=["u"], V=["v"], R={("u", "v")}, mu={"u": 1}, nu={"v": 1})
    kw.update(bad)
    with pytest.raises(ValueError):
        cp.CouplingProblem(**kw)


@pytest.mark.parametrize("seed", range(50))
def test_random_feasible_problems(seed):
    p = random_problem(random.Random(seed))
    plan = cp.build_coupling(p)
    assert plan.feasible and cp.check_plan(p, plan)


@pytest.mark.parametrize("seed", range(40))
def test_random_perturbed_problems_agree_with_hall(seed):
    p = random_problem(random.Random(1000 + seed), feasible=False)
    plan = cp.build_coupling(p)
    assert plan.feasible == oracles.brute_force_hall(p.U, p.R, p.mu, p.nu)
    if plan.feasible:
        assert cp.check_plan(p, plan)
    else:
        assert p.hall_gap(plan.cut) > 0


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 14).flatmap(lambda X: st.tuples(
    st.just(X), st.integers(0, X), st.integers(1, X))))
def test_hall_bound_below_rhs(case):
    X, A, M = case
    assert cp.hall_lhs_bound(X, A, M) <= cp.hall_rhs(X, A, M)
    assert cp.check_hall_inequality(X, A, M, cp.hall_lhs_bound(X, A, M))


def test_hall_edge_cases():
    assert cp.hall_rhs(3, 1, 5) == 1
    assert cp.hall_rhs(4, 0, 2) == 0
    assert cp.hall_rhs(4, 1, 1) == F(1, 4)
    assert not cp.check_hall_inequality(4, 1, 1, F(1, 3))
    with pytest.raises(ValueError):
        cp.check_hall_inequality(3, 4, 1, 0)


@pytest.mark.parametrize("M", [1, 2, 3, 7])
def test_hall_polynomial_nonnegative(M):
    xs = [i / 200 for i in range(1, 201)]
    assert all(cp.hall_polynomial(x, M) >= -1e-12 for x in xs)


# -- exact enumeration -----------------------------------------------------------

@pytest.mark.parametrize("n,edges,K", [(5, [], F(3)), (5, [(0, 1)], F(1, 2)),
                                       (6, [(0, 1), (2, 3), (4, 5)], F(2)),
                                       (5, [(0, 1), (1, 2)], F(0))])
def test_one_step_matches_definition(n, edges, K):
    d = cp.enumerate_process(n, K, 1, "biased", edges)
    expected = oracles.edge_probabilities(n, edges, K)
    base = cp.mask_of(n, edges)
    got = {tuple(set(cp.edges_of(n, m)) - set(edges))[0]: p for m, p in d.probs.items()}
    assert all(m & base == base for m in d.probs)
    assert got == {e: p for e, p in expected.items() if p}


def test_distribution_sums_to_one_and_absorbs():
    for T in (0, 3, 10, 14):
        d = cp.enumerate_process(5, F(1, 3), T)
        assert sum(d.probs.values()) == 1
        assert all(m.bit_count() == min(T, 10) for m in d.probs)


def test_k1_biased_is_uniform():
    for T in (1, 2, 4):
        assert cp.enumerate_process(5, 1, T).probs == cp.enumerate_process(5, 1, T, "uniform").probs


def test_uniform_edge_marginal():
    assert cp.enumerate_process(5, 1, 3, "uniform").edge_marginal(0, 1) == F(3, 10)


def test_enumeration_limits():
    with pytest.raises(ValueError):
        cp.enumerate_process(7, 1, 1)
    with pytest.raises(ValueError):
        cp.enumerate_process(4, -1, 1)
    with pytest.raises(ValueError):
        cp.enumerate_process(4, 1, 1, "lazy")


# -- properties and domination ------------------------------------------------------

def test_property_parsing():
    m = cp.mask_of(5, [(0, 1), (1, 2)])
    assert cp.parse_property("contains-edge:1,0")(m, 5)
    assert cp.parse_property("min-component-size:3")(m, 5)
    assert not cp.parse_property("edge-count-at-least:3")(m, 5)
    with pytest.raises(ValueError):
        cp.parse_property("planar")


def test_non_monotone_property_rejected():
    def exactly_one_edge(mask, n):
        return mask.bit_count() == 1
    with pytest.raises(cp.NonMonotoneProperty) as info:
        cp.verify_domination(4, 2, 1, exactly_one_edge)
    e = info.value
    assert e.smaller & e.larger == e.smaller and exactly_one_edge(e.smaller, 4)


def test_domination_examples():
    r = cp.domination_report(4, 2, 2, cp.contains_edge(0, 1))
    assert r.holds and r.M == 2
    r = cp.domination_report(3, 1, 1, cp.edge_count_at_least(1))
    assert r.holds and r.biased_t == r.uniform_Mt == 1


def test_bound_m():
    assert cp.bound_M(F(1, 3)) == 3 and cp.bound_M(F(5, 2)) == 3 and cp.bound_M(1) == 1
    with pytest.raises(ValueError):
        cp.bound_M(0)


def test_domination_limits():
    with pytest.raises(ValueError):
        cp.verify_domination(6, 2, 1, cp.always_true)


@pytest.mark.parametrize("K", [F(1, 4), F(2, 3), F(3), F(7, 2)])
@pytest.mark.parametrize("direction", ["biased-by-uniform", "uniform-by-biased"])
def test_single_step_coupling_exists(K, direction):
    M = cp.bound_M(K)
    cases = [([], []), ([(0, 1)], [(0, 1), (2, 3)]), ([(0, 1), (1, 2)], [(0, 1), (1, 2), (3, 4)])]
    for p_edges, q_edges in cases:
        prob = cp.step_coupling_problem(5, K, M, p_edges, q_edges, direction)
        plan = cp.build_coupling(prob)
        assert plan.feasible and cp.check_plan(prob, plan)


def test_step_problem_requires_containment():
    with pytest.raises(ValueError):
        cp.step_coupling_problem(4, 2, 2, [(0, 1)], [(2, 3)])


def test_json_roundtrip():
    p = random_problem(random.Random(3))
    d = json.loads(json.dumps(cp.problem_to_dict(p)))
    q = cp.problem_from_dict(d)
    assert (q.U, q.V, q.R, q.mu, q.nu) == (p.U, p.V, p.R, p.mu, p.nu)
    plan = cp.plan_to_dict(cp.build_coupling(q), q)
    assert plan["feasible"] and all("/" in x[2] or x[2].isdigit() for x in plan["phi"])
