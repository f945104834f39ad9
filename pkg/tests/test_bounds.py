import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from osposg.belief import WeightedBelief
from osposg.bounds import (AlphaSet, UpsilonSet, eval_lower, eval_upper, gamma_from_json,
                           gamma_to_json, init_bounds, k_ub, upsilon_from_json, upsilon_to_json)
from osposg.games import hide_game, random_partial_game


def belief(points, weights, s1=0):
    return WeightedBelief(s1, np.array(points), np.array(weights, dtype=float))


@pytest.fixture(scope="module")
def g3():
    return hide_game(0.5, "loop")  # one agent state, three points, three regions


def test_init_single(g_single):
    gamma, ups, L, U = init_bounds(g_single)
    assert L == U == 2.0
    assert len(gamma) == 1 and np.all(gamma[0] == 2.0)
    assert eval_upper(ups, g_single.init_belief)[0] == 2.0


def test_init_mp(g_mp):
    _, ups, L, U = init_bounds(g_mp)
    assert (L, U) == (-2.0, 2.0)
    assert ups.lipschitz == 2.0


def test_init_pe3(g_pe3):
    _, ups, L, U = init_bounds(g_pe3)
    assert L == 0.0 and U == pytest.approx(1000 / 3)
    assert len(ups) == 1 and ups.pairs[0].belief == g_pe3.init_belief


def test_init_with_point_values(g3):
    _, ups, _, U = init_bounds(g3, {(0, 0): 0.5, (0, 1): 99.0})
    assert [p.y for p in ups.pairs] == [U, 0.5, U]


def test_eval_lower_constant(g3):
    gamma = AlphaSet(g3, -1.5)
    assert eval_lower(gamma, belief([0, 1], [0.3, 0.7])) == (-1.5, 0)


def test_eval_lower_dominance(g3):
    gamma = AlphaSet(g3, 0.0)
    gamma.append(np.full((g3.n_s1, g3.n_regions), 5.0))
    assert eval_lower(gamma, belief([0, 1], [0.5, 0.5])) == (5.0, 1)


def test_eval_lower_two_term_dot(g3):
    gamma = AlphaSet(g3, 0.0)
    gamma.append(np.array([[1.0, 0.0, 0.0]]))
    gamma.append(np.full((1, 3), 0.5))
    v, k = eval_lower(gamma, belief([0, 1], [0.9, 0.1]))
    assert v == pytest.approx(0.9) and k == 1


def test_eval_lower_tie_goes_to_lowest(g3):
    gamma = AlphaSet(g3, 0.0)
    gamma.append(np.array([[1.0, 0.0, 0.0]]))
    gamma.append(np.array([[0.0, 1.0, 0.0]]))
    assert eval_lower(gamma, belief([0, 1], [0.5, 0.5]))[1] == 1


def test_alpha_append_deduplicates(g3):
    gamma = AlphaSet(g3, 0.0)
    a = gamma.append(np.array([[1.0, 2.0, 3.0]]))
    assert gamma.append(np.array([[1.0, 2.0, 3.0]])) == a and len(gamma) == 2


def test_eval_upper_exact_match(g3):
    ups = UpsilonSet(g3, 10.0, 20.0)
    b = belief([0, 1], [0.9, 0.1])
    ups.append(b, 7.0)
    v, lam = eval_upper(ups, b)
    assert v == pytest.approx(7.0, abs=1e-9)
    assert lam == pytest.approx({0: 1.0})


def _split_oracle(y, bj, bq, lipschitz, U, cells=2_000_000):
    """Brute force over the mass charged at U for a single stored pair."""
    grid = int(cells ** (1.0 / np.count_nonzero(bq)))
    axes = np.meshgrid(*[np.linspace(0.0, w, grid if w > 0 else 1) for w in bq], indexing="ij")
    tau0 = np.stack([a.ravel() for a in axes], axis=1)
    tau1 = bq - tau0
    mass = tau1.sum(axis=1)
    cost = U * tau0.sum(axis=1) + y * mass + lipschitz * np.abs(tau1 - mass[:, None] * bj).sum(axis=1)
    return min(cost.min(), U)


@pytest.mark.parametrize("bq", [[0.8, 0.2, 0.0], [0.6, 0.4, 0.0], [0.7, 0.1, 0.2]])
def test_eval_upper_single_pair_against_oracle(g3, bq):
    ups = UpsilonSet(g3, 10.0, 20.0)
    bj = np.array([1.0, 0.0, 0.0])
    ups.append(belief([0], [1.0]), 7.0)
    bq = np.array(bq)
    pts = np.flatnonzero(bq)
    v, _ = eval_upper(ups, belief(pts, bq[pts]))
    dist = np.abs(bq - bj).sum()
    assert v <= min(20.0, 7.0 + 10.0 * dist) + 1e-9
    assert v == pytest.approx(_split_oracle(7.0, bj, bq, 10.0, 20.0), abs=1e-6)


def test_eval_upper_closed_form_when_u_is_tight(g3):
    # with U equal to the closed form the split cannot improve on it
    ups = UpsilonSet(g3, 10.0, 11.0)
    ups.append(belief([0], [1.0]), 7.0)
    v, _ = eval_upper(ups, belief([0, 1], [0.8, 0.2]))
    assert v == pytest.approx(min(11.0, _split_oracle(7.0, np.array([1.0, 0, 0]),
                                                       np.array([0.8, 0.2, 0]), 10.0, 11.0)))


def test_eval_upper_mixture(g3):
    ups = UpsilonSet(g3, 10.0, 20.0)
    ups.append(belief([0], [1.0]), 4.0)
    ups.append(belief([1], [1.0]), 8.0)
    v, lam = eval_upper(ups, belief([0, 1], [0.5, 0.5]))
    assert v <= 6.0 + 1e-9
    assert sum(lam.values()) == pytest.approx(1.0)


def test_eval_upper_missing_state_falls_back_to_u():
    m = hide_game(0.5, "split")
    ups = UpsilonSet(m, 1.0, 3.0)
    ups.append(m.init_belief, 2.0)
    assert eval_upper(ups, belief([3], [1.0], s1=m.s1_index(("l", "A")))) == (3.0, {})


def test_upsilon_append_is_idempotent(g3):
    ups = UpsilonSet(g3, 1.0, 2.0)
    b = belief([0, 1], [0.4, 0.6])
    ups.append(b, 1.5)
    n = len(ups)
    probes = [belief([0, 1, 2], w) for w in ([0.2, 0.3, 0.5], [1 / 3] * 3, [0.9, 0.05, 0.05])]
    before = [eval_upper(ups, p)[0] for p in probes]
    ups.append(b, 1.5)
    assert len(ups) <= n + 1
    assert [eval_upper(ups, p)[0] for p in probes] == pytest.approx(before)


@pytest.mark.parametrize("b1,b2,expected", [
    (([0, 1], [0.5, 0.5]), ([0, 1], [0.5, 0.5]), 0.0),
    (([0], [1.0]), ([1], [1.0]), 2.0),
    (([0, 1], [0.9, 0.1]), ([0, 1], [0.5, 0.5]), 0.8),
])
def test_k_ub(b1, b2, expected):
    assert k_ub(belief(*b1), belief(*b2), 3.0) == pytest.approx(3.0 * expected)


def _random_belief(rng, n, s1=0):
    k = int(rng.integers(1, n + 1))
    pts = np.sort(rng.choice(n, size=k, replace=False))
    return belief(pts, rng.dirichlet(np.ones(k)), s1)


def _random_upsilon(rng, model, U=5.0, L=-5.0, n_pairs=4):
    ups = UpsilonSet(model, (U - L) / 2.0, U)
    for _ in range(n_pairs):
        ups.append(_random_belief(rng, model.n_points), float(rng.uniform(L, U)))
    return ups


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_eval_upper_lipschitz(seed):
    rng = np.random.default_rng(seed)
    m = random_partial_game(rng, n_points=5, n_loc=1, n_percepts=1)
    ups = _random_upsilon(rng, m)
    b, bp = _random_belief(rng, 5), _random_belief(rng, 5)
    gap = abs(eval_upper(ups, b)[0] - eval_upper(ups, bp)[0])
    assert gap <= k_ub(b, bp, ups.lipschitz) + 1e-7


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_monotone_refinement(seed):
    rng = np.random.default_rng(seed)
    m = random_partial_game(rng, n_points=5, n_loc=1, n_percepts=1)
    ups = _random_upsilon(rng, m)
    gamma = AlphaSet(m, -5.0)
    probes = [_random_belief(rng, 5) for _ in range(5)]
    up_before = [eval_upper(ups, p)[0] for p in probes]
    lo_before = [eval_lower(gamma, p)[0] for p in probes]
    ups.append(_random_belief(rng, 5), float(rng.uniform(-5, 5)))
    gamma.append(rng.uniform(-5, 5, size=(m.n_s1, m.n_regions)))
    for p, u, lo in zip(probes, up_before, lo_before):
        assert eval_upper(ups, p)[0] <= u + 1e-9
        assert eval_lower(gamma, p)[0] >= lo - 1e-12


def test_json_round_trip(g3):
    rng = np.random.default_rng(0)
    ups = _random_upsilon(rng, g3)
    gamma = AlphaSet(g3, -5.0)
    gamma.append(rng.uniform(-5, 5, size=(1, 3)))
    g2 = gamma_from_json(g3, -5.0, gamma_to_json(gamma))
    u2 = upsilon_from_json(g3, ups.lipschitz, ups.U, upsilon_to_json(ups))
    assert np.array_equal(g2.values, gamma.values)
    for _ in range(5):
        b = _random_belief(rng, 3)
        assert eval_upper(u2, b)[0] == eval_upper(ups, b)[0]
