import warnings

import numpy as np
import pytest

from translot.core import Action, Instance, transship_order, transship_range
from translot.demand import DemandSpec
from translot.errors import BoundsWarning, ConfigurationError, DomainError, PolicyLookupError, RegimeWarning
from translot.sdp import (evaluate_policy, immediate_cost, no_action_cost, solve_sdp1,
                          solve_sdp2)

from oracles import brute_force_value


def det(*means):
    return DemandSpec("deterministic", tuple(means))


def emp(*pmfs):
    """Each pmf is a dict {demand: prob}."""
    out = []
    for p in pmfs:
        lo, hi = min(p), max(p)
        out.append((lo, tuple(p.get(k, 0.0) for k in range(lo, hi + 1))))
    return DemandSpec("empirical", (), pmfs=tuple(out))


def make(T, demand, bounds=((-6, 10), (-6, 10)), q_max=5, **costs):
    base = dict(K=2.0, z=1.0, R=1.0, v=0.5, h=1.0, b=4.0)
    base.update(costs)
    return Instance(T=T, demand=demand, bounds=bounds, q_max=q_max, **base)


# -- immediate cost ---------------------------------------------------------------------------

def test_immediate_cost_zero():
    inst = make(1, (det(0), det(0)), h=1, b=5)
    assert immediate_cost((0, 0), 1, inst) == 0.0


def test_immediate_cost_two_outcomes():
    inst = make(1, (emp({1: 0.5, 3: 0.5}), det(0)), h=1, b=5)
    assert immediate_cost((2, 0), 1, inst) == pytest.approx(3.0, abs=1e-12)


def test_immediate_cost_is_separable():
    d = DemandSpec("poisson", (3.0,))
    inst = make(1, (d, d))
    one = make(1, (d, det(0)))
    for x in (-2, 0, 4):
        both = immediate_cost((x, x), 1, inst)
        assert both == pytest.approx(2 * (immediate_cost((x, 0), 1, one) - 0.0), abs=1e-12)


# -- hand examples ------------------------------------------------------------------------------

def test_free_ordering_covers_demand_exactly():
    inst = make(1, (det(3), det(2)), K=0, R=0, z=0, v=0)
    for solver in (solve_sdp1, solve_sdp2):
        table = solver(inst)
        assert table.action(1, 0, 0) == Action(0, 3, 2)
        assert table.value(1, (0, 0)) == 0.0


def test_transship_clears_back_order():
    inst = make(1, (det(0), det(0)), K=100, R=1, v=0.1, b=5, h=1)
    for solver in (solve_sdp1, solve_sdp2):
        table = solver(inst)
        assert table.action(1, 5, -2) == Action(2, 0, 0)
        assert table.value(1, (5, -2)) == pytest.approx(4.2, abs=1e-12)


def test_prohibitive_transshipment_is_never_used():
    d = DemandSpec("poisson", (2.0, 1.0))
    inst = make(2, (d, d), R=1e6)
    table = solve_sdp2(inst)
    for t in (1, 2):
        assert not table.W[t].any()


# -- oracle equivalence -------------------------------------------------------------------------

def _pmf_dicts(inst):
    return [[dict(zip(inst.dists[t][j].support.tolist(), inst.dists[t][j].pmf.tolist()))
             for j in range(2)] for t in range(inst.T)]


def _costs(inst):
    return dict(K=inst.K, z=inst.z, R=inst.R, v=inst.v, h=inst.h, b=inst.b)


def test_two_period_poisson_matches_enumeration():
    d = DemandSpec("poisson", (1.0, 1.0))
    inst = Instance(T=2, K=3, z=1, R=2, v=0.5, h=1, b=4, demand=(d, d),
                    bounds=((-4, 6), (-4, 6)), q_max=3, truncation_eps=1e-3)
    table = solve_sdp1(inst)
    for s in [(0, 0), (3, -2), (-4, 6), (1, 1)]:
        ref = brute_force_value(2, _costs(inst), _pmf_dicts(inst), inst.lattice, 3, s)
        assert table.value(1, s) == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_random_small_instances_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    pm = []
    for _ in range(2):
        per = []
        for _ in range(2):
            lo = int(rng.integers(0, 3))
            p = rng.random(int(rng.integers(1, 4))) + 0.05
            per.append({lo + k: float(x) for k, x in enumerate(p / p.sum())})
        pm.append(per)
    demand = tuple(emp(pm[0][j], pm[1][j]) for j in range(2))
    inst = Instance(T=2, K=float(rng.uniform(0, 5)), z=float(rng.uniform(0, 2)),
                    R=float(rng.uniform(0, 5)), v=float(rng.uniform(0, 1)), h=1.0,
                    b=float(rng.uniform(1, 6)), demand=demand, bounds=((-4, 5), (-3, 6)),
                    q_max=3)
    t1, t2 = solve_sdp1(inst), solve_sdp2(inst)
    for s in [(0, 0), (5, -3), (-4, 6), (2, 2)]:
        ref = brute_force_value(2, _costs(inst), _pmf_dicts(inst), inst.lattice, 3, s)
        assert t1.value(1, s) == pytest.approx(ref, abs=1e-9)
        assert t2.value(1, s) == pytest.approx(ref, abs=1e-9)


def test_single_period_decoupling_is_exact():
    d = DemandSpec("poisson", (2.5,))
    inst = make(1, (d, DemandSpec("poisson", (1.5,))), K=4, R=3)
    a, b = solve_sdp1(inst), solve_sdp2(inst)
    np.testing.assert_allclose(a.cost[1], b.cost[1], atol=1e-9)


# -- properties ----------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def poisson3():
    d1 = DemandSpec("poisson", (2.0, 3.0, 1.5))
    d2 = DemandSpec("poisson", (1.0, 2.5, 2.0))
    inst = Instance(T=3, K=6, z=1, R=4, v=0.5, h=1, b=5, demand=(d1, d2),
                    bounds=((-10, 16), (-10, 16)), q_max=12)
    return inst, solve_sdp1(inst), solve_sdp2(inst)


def test_tables_are_consistent_with_forward_evaluation(poisson3):
    inst, t1, t2 = poisson3
    for s in [(0, 0), (4, -3), (-2, 5)]:
        assert evaluate_policy(inst, t1.action, s) == pytest.approx(t1.value(1, s), abs=1e-9)
        assert evaluate_policy(inst, t2.action, s) == pytest.approx(t2.value(1, s), abs=1e-9)
        assert t1.value(1, s) <= t2.value(1, s) + 1e-9


def test_actions_respect_transshipment_bounds(poisson3):
    inst, t1, t2 = poisson3
    (lo1, hi1), (lo2, hi2) = inst.lattice
    I1, I2 = np.meshgrid(np.arange(lo1, hi1 + 1), np.arange(lo2, hi2 + 1), indexing="ij")
    for table in (t1, t2):
        for t in range(1, inst.T + 1):
            W = table.W[t]
            assert np.all(W <= np.maximum(0, I1)) and np.all(W >= np.minimum(0, -I2))
            assert np.all(table.Q1[t] >= 0) and np.all(table.Q1[t] <= inst.q_max)
        assert np.all(table.cost[inst.T + 1] == 0)
        assert all(np.all(table.cost[t] >= 0) for t in table.cost)


def test_cost_is_monotone_in_penalty(poisson3):
    inst, t1, _ = poisson3
    higher = solve_sdp1(inst.with_(b=7.0))
    assert np.all(higher.cost[1] >= t1.cost[1] - 1e-9)


def test_zero_policy_pays_penalty_on_all_demand():
    d = DemandSpec("poisson", (1.0,))
    inst = make(1, (d, d), b=5)
    cost = evaluate_policy(inst, lambda t, i1, i2: Action(0, 0, 0), (0, 0))
    expect = 5 * (inst.dists[0][0].mean() + inst.dists[0][1].mean())
    assert cost == pytest.approx(expect, abs=1e-12)
    assert cost == pytest.approx(10.0, abs=1e-3)


def test_infeasible_policy_is_reported():
    inst = make(1, (det(1), det(1)))
    with pytest.raises(PolicyLookupError):
        evaluate_policy(inst, lambda t, i1, i2: Action(3, 0, 0), (0, 0))


def test_lookup_outside_lattice():
    inst = make(1, (det(1), det(1)))
    table = solve_sdp2(inst)
    with pytest.raises(PolicyLookupError):
        table.value(1, (50, 0))
    with pytest.raises(PolicyLookupError):
        table.action(2, 0, 0)


def test_no_action_diagnostic_never_beats_the_optimum(poisson3):
    inst, _, t2 = poisson3
    for t in (1, 2):
        for s in [(0, 0), (3, 3)]:
            assert no_action_cost(inst, t2, t, s) >= t2.value(t, s) - 1e-9


def test_tight_lattice_warns():
    d = DemandSpec("poisson", (4.0, 4.0))
    inst = Instance(T=2, K=1, z=1, R=1, v=0.5, h=1, b=5, demand=(d, d),
                    bounds=((-2, 3), (-2, 3)), q_max=3)
    with pytest.warns(BoundsWarning):
        solve_sdp2(inst, initial_states=[(0, 0)])


def test_generous_lattice_is_quiet(poisson3):
    inst, _, _ = poisson3
    with warnings.catch_warnings():
        warnings.simplefilter("error", BoundsWarning)
        table = solve_sdp2(inst, initial_states=[(0, 0)])
    assert table.diagnostics["clamped_mass"] <= 1e-4


def test_value_table_csv(poisson3):
    inst, _, t2 = poisson3
    text = t2.to_csv().splitlines()
    assert text[0] == "stage,i1,i2,cost,W,Q1,Q2"
    assert len(text) == 1 + inst.T * 27 * 27


# -- core types ---------------------------------------------------------------------------------

def test_transship_range_and_order():
    assert transship_range(5, -3) == (0, 5)
    assert transship_range(-1, 4) == (-4, 0)
    assert transship_range(0, 0) == (0, 0)
    assert transship_order(-2, 3) == [0, -1, 1, -2, 2, 3]


def test_instance_validation():
    d = det(1)
    with pytest.raises(ConfigurationError):
        Instance(T=2, K=1, z=1, R=1, v=1, h=1, b=1, demand=(d, d))
    with pytest.raises(DomainError):
        Instance(T=1, K=-1, z=1, R=1, v=1, h=1, b=1, demand=(d, d))
    with pytest.raises(DomainError):
        Instance(T=1, K=1, z=1, R=1, v=1, h=0, b=1, demand=(d, d))
    with pytest.raises(ConfigurationError):
        Instance(T=1, K=1, z=1, R=1, v=1, h=1, b=1, demand=(d, d), bounds=((3, 1), (0, 1)))


def test_regime_checks_warn_only():
    d = det(1)
    inst = Instance(T=1, K=1, z=1, R=5, v=9, h=1, b=2, demand=(d, d))
    assert len(inst.regime_issues()) == 2
    with pytest.warns(RegimeWarning):
        inst.warn_regime()


def test_default_lattice_rule():
    d = DemandSpec("poisson", (2.0, 2.0))
    inst = Instance(T=2, K=1, z=1, R=1, v=1, h=1, b=1, demand=(d, d))
    dm = inst.demand_max()
    assert inst.lattice == ((-dm[0], dm[0] + inst.order_cap), (-dm[1], dm[1] + inst.order_cap))
