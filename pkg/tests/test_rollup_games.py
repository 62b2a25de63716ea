import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rollup_incentives.game_engine import expected_utilities
from rollup_incentives.rollup_games import (
    MixPoint,
    ParamsError,
    ProtocolParams,
    aggregator_utility,
    build_game1,
    build_game2,
    build_game2_easter,
    build_game3,
    game2_profile,
    game3_profile,
    load_params,
    load_params_text,
    transactor_utility,
    validator_utility,
)


def payoffs(tree):
    return [leaf.payoffs for _, leaf in tree.leaves()]


def leaf(tree, *path):
    return tree.nodes[tree.follow(path)].payoffs


# --- params --------------------------------------------------------------


def test_params_reject_negative_and_nonfinite():
    with pytest.raises(ParamsError):
        ProtocolParams(s_A=-1, s_V=1, x=0, z=1)
    with pytest.raises(ParamsError):
        ProtocolParams(s_A=1, s_V=float("inf"), x=0, z=1)
    with pytest.raises(ParamsError):
        ProtocolParams(s_A=1, s_V=1, x=0, z=1, p=1.5)


def test_ordinal_check_warns_but_accepts():
    ok = ProtocolParams(s_A=1, s_V=1, x=Fraction(1, 24), z=24).ordinal_check()
    assert ok.ok and ok.strictness_ratio == 24
    loose = ProtocolParams(s_A=1, s_V=2, x=3, z=5).ordinal_check()
    assert not loose.ok
    assert len(loose.problems) == 3  # x < s_V, s_V <= s_A, and the ratio 5 < 10


def test_load_key_value_and_json(tmp_path):
    kv = tmp_path / "p.txt"
    kv.write_text("# reference scenario\ns_A = 1\ns_V=1\nx = 1/24\nz=24\n")
    assert load_params(kv, exact=True) == ProtocolParams(s_A=1, s_V=1, x=Fraction(1, 24), z=24)
    assert load_params(kv).x == pytest.approx(1 / 24, abs=1e-15)

    js = tmp_path / "p.json"
    js.write_text(json.dumps({"s_A": 1, "s_V": 1, "x": 0.5, "z": 24, "u_T": 2, "p": 0.9}))
    params = load_params(js)
    assert params.u_T == 2 and params.p == 0.9


@pytest.mark.parametrize("text", ["s_A=1\nbogus=2\n", '{"s_A": 1, "sA": 2}'])
def test_unknown_keys_rejected(text):
    with pytest.raises(ParamsError, match="unknown"):
        load_params_text(text)


def test_mixpoint_bounds():
    with pytest.raises(ParamsError):
        MixPoint(0.5, 1.2, 0.5)


# --- Game 1 --------------------------------------------------------------


def test_game1_leaves_by_substitution():
    tree = build_game1(ProtocolParams(f=2, w=1, s_A=10, s_V=5, z=100, x=0))
    assert payoffs(tree) == [(1, -5), (1, 0), (-11, 5), (101, 0)]
    assert sum(1 for n in tree.nodes if hasattr(n, "infoset")) == 3
    assert tree.is_perfect_information()


def test_game1_normalized_honest_leaves():
    tree = build_game1(ProtocolParams(f=3, w=3, s_A=10, s_V=5, z=100, x=0))
    assert leaf(tree, "Honest", "Challenge")[0] == 0
    assert leaf(tree, "Honest", "No")[0] == 0


# --- Game 2 --------------------------------------------------------------


def test_game2_informed_catch_leaf(reference):
    assert leaf(build_game2(reference), "Search", "Dishonest", "Challenge") == (-1, Fraction(1, 2) - Fraction(1, 24))


def test_game2_free_search_mirrors_blind_side():
    tree = build_game2(ProtocolParams(s_A=3, s_V=2, x=0, z=50))
    leaves = payoffs(tree)
    assert leaves[:4] == leaves[4:]


def test_game2_shape(reference):
    tree = build_game2(reference)
    assert len(payoffs(tree)) == 8
    a_sets = tree.player_infosets("A")
    assert len(a_sets) == 1 and len(a_sets[0].nodes) == 2
    assert len(tree.player_infosets("V")) == 4


def test_game2_ignores_fee_and_work(reference):
    assert build_game2(reference.replace(f=5, w=2)) == build_game2(reference)


# --- Game 2 with Easter eggs -------------------------------------------


def test_easter_reward_equal_to_cost_zeroes_honest_search():
    params = ProtocolParams(s_A=1, s_V=1, x=Fraction(1, 24), z=24, y=Fraction(1, 24))
    assert leaf(build_game2_easter(params), "Search", "Honest", "No")[1] == 0


def test_easter_zero_reward_is_game2(reference):
    assert build_game2_easter(reference).to_json() == build_game2(reference).to_json()


def test_easter_adds_reward_on_search_leaves_only():
    params = ProtocolParams(s_A=1, s_V=1, x=Fraction(1, 24), z=24, y=Fraction(1, 12))
    tree = build_game2_easter(params)
    assert leaf(tree, "Search", "Dishonest", "Challenge")[1] == Fraction(1, 2) - Fraction(1, 24) + Fraction(1, 12)
    assert payoffs(tree)[:4] == payoffs(build_game2(params))[:4]


# --- Game 3 --------------------------------------------------------------


def test_game3_dishonest_expectation():
    params = ProtocolParams(s_A=1, s_V=1, x=0, z=24, p=0.5)
    assert expected_utilities(build_game3(params), game3_profile(0))[0] == 11.5


def test_game3_near_certain_check_approaches_stake_loss():
    values = [
        expected_utilities(build_game3(ProtocolParams(s_A=1, s_V=1, x=0, z=24, p=1 - eps)), game3_profile(0))[0]
        for eps in (1e-2, 1e-4, 1e-8)
    ]
    assert values == sorted(values, reverse=True)
    assert values[-1] == pytest.approx(-1, abs=1e-6)


@pytest.mark.parametrize("p", [0.01, 0.5, 0.99])
def test_game3_honest_branch_pays_zero(p):
    assert expected_utilities(build_game3(ProtocolParams(s_A=1, s_V=1, x=0, z=24, p=p)), game3_profile(1))[0] == 0


@pytest.mark.parametrize("p", [None, 0, 1])
def test_game3_requires_interior_p(p):
    with pytest.raises(ParamsError):
        build_game3(ProtocolParams(s_A=1, s_V=1, x=0, z=24, p=p))


# --- closed-form utilities ---------------------------------------------


@pytest.mark.parametrize("b,g", [(0, 0), (0.3, 0.9), (1, 1)])
def test_honest_aggregator_earns_zero(reference_float, b, g):
    assert aggregator_utility(reference_float, MixPoint(b, g, 1)) == 0


def test_uncaught_attack_earns_z(reference):
    assert aggregator_utility(reference, MixPoint(1, 0, 0)) == 24


@pytest.mark.parametrize("s", [Fraction(1), Fraction(7, 3), Fraction(50)])
@pytest.mark.parametrize("h", [Fraction(0), Fraction(1, 3), Fraction(67, 96), Fraction(1)])
def test_aggregator_indifferent_at_indifference_point(s, h):
    params = ProtocolParams(s_A=s, s_V=s, x=s / 24, z=24 * s)
    assert aggregator_utility(params, MixPoint(Fraction(1, 5), Fraction(4, 5), h)) == 0


def test_validator_utility_examples(reference, reference_mix):
    assert validator_utility(reference, MixPoint(1, 0, Fraction(1, 2))) == 0
    assert validator_utility(reference, MixPoint(0, Fraction(1, 2), 1)) == -Fraction(1, 24)
    assert validator_utility(reference, reference_mix) == 0


def test_transactor_utility_examples():
    params = ProtocolParams(s_A=1, s_V=1, x=0, z=24, f=1, u_T=2)
    assert transactor_utility(params, MixPoint(0.3, 0.3, 1)) == 1
    assert transactor_utility(params, MixPoint(1, 0, 0)) == -1
    value = transactor_utility(params, MixPoint(Fraction(1, 5), Fraction(4, 5), Fraction(67, 96)))
    assert value == Fraction(67, 96) - Fraction(1, 5) * Fraction(29, 96) * Fraction(1, 5)
    assert float(value) == pytest.approx(0.6858, abs=1e-4)


def test_transactor_utility_needs_u_T(reference):
    with pytest.raises(ParamsError):
        transactor_utility(reference, MixPoint(0.5, 0.5, 0.5))


# --- central property: tree == closed form -----------------------------


def test_tree_matches_closed_forms_1000_draws():
    rng = np.random.default_rng(20240601)
    for _ in range(1000):
        s_A, s_V, x, z = (float(v) for v in rng.uniform(0, 1, 4) * (20, 20, 5, 1000))
        params = ProtocolParams(s_A=s_A, s_V=s_V, x=x, z=z)
        m = MixPoint(*(float(v) for v in rng.uniform(0, 1, 3)))
        a, v = expected_utilities(build_game2(params), game2_profile(m))
        assert abs(a - aggregator_utility(params, m)) <= 1e-9
        assert abs(v - validator_utility(params, m)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(
    s_A=st.fractions(0, 100), s_V=st.fractions(0, 100), x=st.fractions(0, 10), z=st.fractions(0, 1000),
    b=st.fractions(0, 1), g=st.fractions(0, 1), h=st.fractions(0, 1),
)
def test_tree_matches_closed_forms_exactly(s_A, s_V, x, z, b, g, h):
    params = ProtocolParams(s_A=s_A, s_V=s_V, x=x, z=z)
    m = MixPoint(b, g, h)
    assert expected_utilities(build_game2(params), game2_profile(m)) == (
        aggregator_utility(params, m),
        validator_utility(params, m),
    )


@settings(max_examples=100, deadline=None)
@given(
    f=st.floats(0.01, 10), gap=st.floats(0.01, 10),
    s_A=st.floats(0.01, 100), s_V=st.floats(0.01, 100), z=st.floats(0.01, 1000),
)
def test_game1_backward_induction_matches_closed_rule(f, gap, s_A, s_V, z):
    from rollup_incentives.game_engine import backward_induction
    from rollup_incentives.rollup_games import game1_profile

    params = ProtocolParams(f=f + gap, w=f, s_A=s_A, s_V=s_V, z=z, x=0)
    assert backward_induction(build_game1(params)).profile == game1_profile()
