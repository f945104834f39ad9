import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from osposg import lp as lpmod
from osposg.lp import LinearProgram, solve, solve_matrix_game

BACKENDS = ["highs", "simplex"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_bounded(backend):
    p = LinearProgram("max")
    x = p.add_variables(1)
    p.add_constraint(x, [1.0], "<=", 3.0)
    p.add_objective(x, [1.0])
    sol = solve(p, backend)
    assert sol.optimal and sol.x[0] == pytest.approx(3.0) and sol.objective == pytest.approx(3.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible(backend):
    p = LinearProgram("max")
    x = p.add_variables(1)
    p.add_constraint(x, [1.0], "<=", -1.0)
    p.add_objective(x, [1.0])
    assert solve(p, backend).status == "infeasible"


@pytest.mark.parametrize("backend", BACKENDS)
def test_unbounded(backend):
    p = LinearProgram("max")
    x = p.add_variables(1)
    p.add_objective(x, [1.0])
    assert solve(p, backend).status == "unbounded"


@pytest.mark.parametrize("backend", BACKENDS)
def test_matching_pennies(backend):
    v, p = solve_matrix_game(np.array([[1.0, -1.0], [-1.0, 1.0]]), backend)
    assert v == pytest.approx(0.0, abs=1e-9)
    assert p == pytest.approx([0.5, 0.5])


def _random_lp(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(2, 6), rng.integers(2, 6)
    a = rng.uniform(-1, 2, size=(m, n))
    b = rng.uniform(0.5, 3, size=m)
    c = rng.uniform(-1, 2, size=n)
    return a, b, c


def _primal(a, b, c, backend):
    # max c x, a x <= b, x >= 0, x <= 10
    p = LinearProgram("max")
    x = p.add_variables(len(c), ub=10.0)
    for i in range(len(b)):
        p.add_constraint(x, a[i], "<=", b[i])
    p.add_objective(x, c)
    return solve(p, backend)


def _dual(a, b, c, backend):
    # min b y + 10 sum z, a^T y + z >= c, y, z >= 0
    p = LinearProgram("min")
    y = p.add_variables(len(b))
    z = p.add_variables(len(c))
    for j in range(len(c)):
        p.add_constraint(np.concatenate([y, [z[j]]]), np.concatenate([a[:, j], [1.0]]), ">=", c[j])
    p.add_objective(y, b)
    p.add_objective(z, np.full(len(c), 10.0))
    return solve(p, backend)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(BACKENDS))
def test_duality_spot_check(seed, backend):
    a, b, c = _random_lp(seed)
    primal, dual = _primal(a, b, c, backend), _dual(a, b, c, backend)
    assert primal.optimal and dual.optimal
    assert primal.objective == pytest.approx(dual.objective, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_backends_agree_on_matrix_games(seed):
    rng = np.random.default_rng(seed)
    m = rng.uniform(-1, 1, size=(rng.integers(2, 5), rng.integers(2, 5)))
    v1, _ = solve_matrix_game(m, "highs")
    v2, _ = solve_matrix_game(m, "simplex")
    assert v1 == pytest.approx(v2, abs=1e-7)


def test_matrix_game_dual_value():
    rng = np.random.default_rng(4)
    m = rng.uniform(-1, 1, size=(4, 5))
    v, _ = solve_matrix_game(m)
    # column player's game on -M^T has value -v
    w, _ = solve_matrix_game(-m.T)
    assert v == pytest.approx(-w, abs=1e-7)


def test_determinism():
    a, b, c = _random_lp(7)
    s1, s2 = _primal(a, b, c, "highs"), _primal(a, b, c, "highs")
    assert np.array_equal(s1.x, s2.x)


def test_free_and_shifted_variables():
    p = LinearProgram("min")
    x = p.add_variables(1, lb=-np.inf)
    y = p.add_variables(1, lb=2.0, ub=5.0)
    p.add_constraint(np.array([x[0], y[0]]), [1.0, 1.0], ">=", -3.0)
    p.add_objective(np.array([x[0], y[0]]), [1.0, 2.0])
    for backend in BACKENDS:
        sol = solve(p, backend)
        assert sol.objective == pytest.approx(-5.0 + 4.0)


def test_lp_dump(tmp_path, monkeypatch):
    monkeypatch.setenv("OSPOSG_LP_DUMP", str(tmp_path))
    solve_matrix_game(np.eye(2))
    dumps = list(tmp_path.glob("*.lp"))
    assert dumps and "max" in dumps[0].read_text().lower()


def test_unknown_backend():
    with pytest.raises(KeyError):
        solve(LinearProgram(), "nope")


def test_register_backend():
    calls = []

    def fake(c, a_ub, b_ub, a_eq, b_eq, lb, ub):
        calls.append(1)
        return lpmod._BACKENDS["highs"](c, a_ub, b_ub, a_eq, b_eq, lb, ub)

    lpmod.register_backend("fake", fake)
    v, _ = solve_matrix_game(np.eye(2), "fake")
    assert calls and v == pytest.approx(0.5)


@pytest.mark.parametrize("backend", BACKENDS)
def test_duals_of_active_rows(backend):
    p = LinearProgram("min")
    x = p.add_variables(2)
    ge = p.add_constraint(x, [1.0, 1.0], ">=", 2.0)
    le = p.add_constraint(x, [1.0, 0.0], "<=", 5.0)
    p.add_objective(x, [1.0, 3.0])
    sol = solve(p, backend)
    assert sol.duals[">="][ge] == pytest.approx(1.0)
    assert sol.duals["<="][le] == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(BACKENDS))
def test_matrix_game_duals_are_the_column_strategy(seed, backend):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, size=(rng.integers(2, 5), rng.integers(2, 5)))
    m, n = a.shape
    p = LinearProgram("max")
    v = p.add_variables(1, lb=-np.inf)
    x = p.add_variables(m)
    rows = [p.add_constraint(np.concatenate([v, x]), np.concatenate([[1.0], -a[:, j]]), "<=", 0.0)
            for j in range(n)]
    p.add_constraint(x, np.ones(m), "=", 1.0)
    p.add_objective(v, [1.0])
    sol = solve(p, backend)
    q = sol.duals["<="][rows]
    assert np.all(q >= -1e-9) and q.sum() == pytest.approx(1.0)
    assert (a @ q).max() == pytest.approx(sol.objective, abs=1e-7)


def test_highs_failure_falls_back_to_simplex(monkeypatch, caplog):
    def broken(*args):
        raise lpmod.LpNumericalError("stalled")

    monkeypatch.setitem(lpmod._BACKENDS, "highs", broken)
    v, p = solve_matrix_game(np.array([[1.0, -1.0], [-1.0, 1.0]]), "highs")
    assert v == pytest.approx(0.0, abs=1e-9) and "dense simplex" in caplog.text


def test_simplex_failure_is_not_retried(monkeypatch):
    def broken(*args):
        raise lpmod.LpNumericalError("stalled")

    monkeypatch.setitem(lpmod._BACKENDS, "simplex", broken)
    with pytest.raises(lpmod.LpNumericalError):
        solve_matrix_game(np.eye(2), "simplex")
