import sys
import textwrap

import numpy as np
import pytest

from translot.errors import ConfigurationError
from translot.mip import (BuiltinBackend, ExternalBackend, HighsBackend, ModelBuilder,
                          branch_and_bound, make_backend, read_lp, read_solution, write_lp)
from translot.simplex import linprog

from oracles import enumerate_binaries, scipy_lp


def random_lp(rng):
    n, m_ub, m_eq = int(rng.integers(2, 7)), int(rng.integers(1, 6)), int(rng.integers(0, 3))
    c = rng.normal(size=n)
    A_ub = rng.normal(size=(m_ub, n))
    b_ub = rng.normal(size=m_ub) + 1.0
    A_eq = rng.normal(size=(m_eq, n))
    b_eq = rng.normal(size=m_eq)
    lb = np.where(rng.random(n) < 0.2, -np.inf, rng.uniform(-3, 0, n))
    ub = np.where(rng.random(n) < 0.3, np.inf, rng.uniform(0.5, 4, n))
    return c, A_ub, b_ub, A_eq, b_eq, lb, ub


@pytest.mark.parametrize("seed", range(100))
def test_simplex_agrees_with_scipy(seed):
    c, A_ub, b_ub, A_eq, b_eq, lb, ub = random_lp(np.random.default_rng(seed))
    ours = linprog(c, A_ub, b_ub, A_eq, b_eq, lb, ub)
    status, fun = scipy_lp(c, A_ub, b_ub, A_eq if A_eq.size else None,
                           b_eq if A_eq.size else None, lb, ub)
    expect = {0: "optimal", 2: "infeasible", 3: "unbounded"}[status]
    assert ours.status == expect
    if expect == "optimal":
        assert ours.fun == pytest.approx(fun, abs=1e-7 * max(1, abs(fun)))
        x = ours.x
        assert np.all(A_ub @ x <= b_ub + 1e-7)
        np.testing.assert_allclose(A_eq @ x, b_eq, atol=1e-7)
        assert np.all(x >= lb - 1e-9) and np.all(x <= ub + 1e-9)


def test_simplex_statuses():
    # x >= 0, x <= -1
    assert linprog([1.0], A_ub=[[1.0]], b_ub=[-1.0]).status == "infeasible"
    # min -x, x >= 0
    assert linprog([-1.0]).status == "unbounded"
    # inconsistent bounds
    assert linprog([1.0], lb=[2.0], ub=[1.0]).status == "infeasible"


def test_simplex_survives_degenerate_cycling_example():
    # a classic cycling instance under the textbook largest-coefficient rule
    c = [-0.75, 150, -0.02, 6]
    A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
    res = linprog(c, A, [0, 0, 1])
    assert res.status == "optimal"
    assert res.fun == pytest.approx(-0.05)


# -- branch and bound ---------------------------------------------------------------------

def fixed_charge_model(rng, n_items=4):
    """Random fixed-charge covering problem with n binaries."""
    b = ModelBuilder()
    demand = float(rng.uniform(3, 10))
    cover = {}
    for k in range(n_items):
        x, y = b.var(f"x{k}", 0.0, float(rng.uniform(2, 8))), b.var(f"y{k}", binary=True)
        b.cost(x, float(rng.uniform(0.5, 2)))
        b.cost(y, float(rng.uniform(0, 6)))
        b.le(f"on{k}", {x: 1.0, y: -10.0}, 0.0)
        cover[x] = -1.0
    b.le("cover", cover, -demand)
    if rng.random() < 0.5:
        b.le("pick", {f"y{k}": 1.0 for k in range(n_items)}, 3.0)
    return b.build()


@pytest.mark.parametrize("seed", range(20))
def test_branch_and_bound_matches_enumeration(seed):
    m = fixed_charge_model(np.random.default_rng(seed), 5)
    res = branch_and_bound(m, rel_gap=1e-12)
    ref, _ = enumerate_binaries(m.c, m.A_ub, m.b_ub, m.A_eq, m.b_eq, m.lb, m.ub, m.integer)
    if np.isinf(ref):
        assert res.status == "infeasible"
    else:
        assert res.status == "optimal"
        assert res.objective == pytest.approx(ref, abs=1e-7)
        assert np.all(np.isin(res.x[m.integer], (0.0, 1.0)))


def test_zero_fixed_charges_need_no_branching():
    rng = np.random.default_rng(0)
    m = fixed_charge_model(rng)
    m.c[m.integer] = 0.0
    res = branch_and_bound(m)
    assert res.status == "optimal" and res.nodes == 0


def test_builtin_and_highs_agree():
    for seed in range(5):
        m = fixed_charge_model(np.random.default_rng(100 + seed), 6)
        a, b = BuiltinBackend().solve(m), HighsBackend().solve(m)
        assert a.objective == pytest.approx(b.objective, rel=1e-6)


def test_infeasible_and_unbounded_models():
    b = ModelBuilder()
    b.var("x", 0.0, 1.0)
    b.var("y", binary=True)
    b.le("r", {"x": -1.0, "y": -1.0}, -3.0)
    m = b.build()
    assert branch_and_bound(m).status == "infeasible"
    assert HighsBackend().solve(m).status == "infeasible"

    b = ModelBuilder()
    b.var("x", -np.inf, np.inf)
    b.var("y", binary=True)
    b.cost("x", 1.0)
    b.le("r", {"x": 1.0, "y": 1.0}, 0.0)
    assert branch_and_bound(b.build()).status == "unbounded"


# -- LP text format and external programs -------------------------------------------------

def test_lp_roundtrip_preserves_the_model():
    m = fixed_charge_model(np.random.default_rng(7))
    m.lb[0], m.ub[0] = -np.inf, np.inf
    back = read_lp(write_lp(m, comment="roundtrip"))
    order = [back.names.index(nm) for nm in m.names]
    np.testing.assert_allclose(back.c[order], m.c)
    np.testing.assert_allclose(back.A_ub[:, order], m.A_ub)
    np.testing.assert_allclose(back.b_ub, m.b_ub)
    np.testing.assert_array_equal(back.integer[order], m.integer)
    np.testing.assert_allclose(back.lb[order], m.lb)
    np.testing.assert_allclose(back.ub[order], m.ub)
    assert back.row_names_ub == m.row_names_ub


def test_lp_text_layout():
    b = ModelBuilder()
    b.var("x", -1.0, 2.0)
    b.var("y", binary=True)
    b.cost("x", 1.5)
    b.cost("y", -2.0)
    b.eq("e", {"x": 1.0, "y": 1.0}, 1.0)
    text = write_lp(b.build())
    assert text.splitlines()[:2] == ["Minimize", " obj: + 1.5 x - 2 y"]
    assert " e: + 1 x + 1 y = 1" in text
    assert " -1 <= x <= 2" in text and "Binaries\n y\nEnd" in text


def test_read_lp_rejects_garbage():
    with pytest.raises(ConfigurationError):
        read_lp("x + y <= 1\n")


def test_read_solution():
    b = ModelBuilder()
    b.var("x")
    b.var("y")
    b.cost("x", 2.0)
    m = b.build()
    res = read_solution("status optimal\nx 1.5\n", m)
    assert res.status == "optimal" and res.objective == 3.0 and res.x.tolist() == [1.5, 0.0]
    assert read_solution("status infeasible\n", m).status == "infeasible"


def test_external_backend_exchanges_files(tmp_path):
    script = tmp_path / "fake_solver.py"
    script.write_text(textwrap.dedent("""
        import sys
        from translot.mip import HighsBackend, read_lp
        lp, sol = sys.argv[1], sys.argv[2]
        m = read_lp(open(lp).read())
        r = HighsBackend().solve(m)
        with open(sol, "w") as fh:
            fh.write(f"status {r.status}\\nobjective {r.objective!r}\\n")
            for nm, v in zip(m.names, r.x):
                fh.write(f"{nm} {float(v)!r}\\n")
    """))
    m = fixed_charge_model(np.random.default_rng(3))
    backend = make_backend(f"external:{sys.executable} {script} {{lp}} {{sol}}")
    assert isinstance(backend, ExternalBackend)
    res = backend.solve(m)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(HighsBackend().solve(m).objective, rel=1e-9)


def test_external_backend_failure_is_an_error(tmp_path):
    m = fixed_charge_model(np.random.default_rng(3))
    res = ExternalBackend(f"{sys.executable} -c 'raise SystemExit(3)'").solve(m)
    assert res.status == "error"


def test_make_backend():
    assert isinstance(make_backend(None), BuiltinBackend)
    assert isinstance(make_backend("highs"), HighsBackend)
    with pytest.raises(ConfigurationError):
        make_backend("cplex")
    b = ModelBuilder()
    b.var("x")
    with pytest.raises(ConfigurationError):
        b.var("x")
