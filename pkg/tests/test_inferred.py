import dataclasses
import logging

import numpy as np
import pytest

from osposg import inferred
from osposg.belief import update_belief
from osposg.bounds import eval_upper
from osposg.games import hide_game
from osposg.hsvi import solve_hsvi, stage_lp_upper


@pytest.fixture(scope="module")
def fb_single(g_single):
    return solve_hsvi(g_single, 0.01)


@pytest.fixture(scope="module")
def fb_mp(g_mp):
    return solve_hsvi(g_mp, 0.01)


@pytest.fixture(scope="module")
def fb_hide(g_hide):
    return solve_hsvi(g_hide, 0.01)


def test_init_is_b_init(fb_mp, g_mp):
    assert inferred.init_inferred(fb_mp).inferred_belief == g_mp.init_belief


def test_init_pe3_support(g_pe3):
    fb = solve_hsvi(g_pe3, 1e6, probes=0)
    st = inferred.init_inferred(fb)
    assert len(st.inferred_belief) == 9


def test_init_hash_mismatch(fb_mp):
    with pytest.raises(ValueError):
        inferred.init_inferred(dataclasses.replace(fb_mp, model_hash="x"))


def test_act_single(fb_single):
    st = inferred.init_inferred(fb_single, rng=np.random.default_rng(0))
    assert inferred.act2(st, 0, 0) == 0


def test_act_mp_uniform(fb_mp):
    st = inferred.init_inferred(fb_mp, rng=np.random.default_rng(0))
    assert inferred.stage_strategy(st).row(0) == pytest.approx([0.5, 0.5], abs=1e-6)
    draws = [inferred.act2(st, 0, 0) for _ in range(4000)]
    assert abs(np.mean(draws) - 0.5) < 4 * np.sqrt(0.25 / 4000)


def test_act_hide_single_action(fb_hide):
    st = inferred.init_inferred(fb_hide, rng=np.random.default_rng(0))
    assert {inferred.act2(st, 0, e) for e in (0, 1)} == {0}


def test_act_state_mismatch(fb_mp):
    with pytest.raises(RuntimeError):
        inferred.act2(inferred.init_inferred(fb_mp), 3, 0)


def test_off_support_uses_default_row(fb_hide, caplog):
    st = inferred.init_inferred(fb_hide, rng=np.random.default_rng(0))
    with caplog.at_level(logging.WARNING):
        inferred.act2(st, 0, 2)
    assert st.off_support == 1 and "outside" in caplog.text


def test_advance_single(fb_single):
    st = inferred.init_inferred(fb_single)
    assert inferred.advance2(st, 0, 0).inferred_belief == st.inferred_belief


def test_advance_split_collapses():
    m = hide_game(0.5, "split")
    fb = solve_hsvi(m, 0.01)
    st = inferred.init_inferred(fb)
    nxt = inferred.advance2(st, 0, m.s1_index(("l", "B")))
    assert list(nxt.inferred_belief.points) == [m.point_index("eB")]


def test_advance_uses_the_acting_strategy(fb_mp, g_mp):
    st = inferred.init_inferred(fb_mp, rng=np.random.default_rng(0))
    inferred.act2(st, 0, 0)
    u2 = st.u2_star
    nxt = inferred.advance2(st, 1, 0)
    assert st.u2_star is u2
    assert nxt.inferred_belief == update_belief(g_mp, st.inferred_belief, 1, u2, 0)
    assert nxt.u2_star is None


def test_monotone_bound_use(fb_hide):
    st = inferred.init_inferred(fb_hide)
    inferred.stage_strategy(st)
    assert st.stage_value <= eval_upper(fb_hide.upsilon, st.inferred_belief)[0] + 1e-6


def test_strategy_cached_across_states(fb_mp, g_mp):
    a = inferred.init_inferred(fb_mp)
    b = inferred.init_inferred(fb_mp)
    assert inferred.stage_strategy(a) is inferred.stage_strategy(b)
    y, _ = stage_lp_upper(g_mp, fb_mp.upsilon, g_mp.init_belief)
    assert a.stage_value == pytest.approx(y)
