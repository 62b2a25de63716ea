import io
import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from rollup_incentives import equilibria as eq
from rollup_incentives.game_engine import expected_utilities
from rollup_incentives.rollup_games import (
    MixPoint,
    ParamsError,
    ProtocolParams,
    aggregator_utility,
    build_game2_easter,
    build_game3,
    game2_profile,
    game3_profile,
    transactor_utility,
    validator_utility,
)


def test_combined_h_is_the_composition_symbolically():
    """Independent check of the omitted algebra: substitute g(b) into h(b, g)."""
    b, s_A, s_V, x, z = sp.symbols("b s_A s_V x z", positive=True)
    g = 1 - s_A / (b * s_A + b * z)
    half = s_A / 2
    h_two = (b * g * half + (1 - b) * half - (1 - b) * x) / (b * g * s_V + b * g * half + (1 - b) * half)
    h_combined = (half * z - (1 - b) * (z * x + s_A * x)) / (half * z - s_A * s_V + (z + s_A) * s_V * b)
    assert sp.simplify(h_two - h_combined) == 0


def test_combined_h_reproduces_validator_indifference_symbolically():
    b, g, h, s_A, s_V, x = sp.symbols("b g h s_A s_V x")
    u_v = b * g * (h * (-s_V) + (1 - h) * s_A / 2) + (1 - b) * ((1 - h) * s_A / 2 - x)
    (root,) = sp.solve(sp.Eq(u_v, 0), h)
    num = b * g * s_A / 2 + (1 - b) * s_A / 2 - (1 - b) * x
    den = b * g * s_V + b * g * s_A / 2 + (1 - b) * s_A / 2
    assert sp.simplify(root - num / den) == 0


# --- indifference_g ------------------------------------------------------


def test_g_at_reference(reference):
    r = eq.indifference_g(reference, Fraction(1, 5))
    assert r.value == Fraction(4, 5) and r.viable


def test_g_boundary_is_not_viable(reference):
    r = eq.indifference_g(reference, Fraction(1, 25))
    assert r.value == 0 and not r.viable


def test_g_at_b_one(reference):
    assert eq.indifference_g(reference, 1).value == Fraction(24, 25)


def test_g_at_b_zero_reported(reference):
    r = eq.indifference_g(reference, 0)
    assert r.value is None and not r.viable and "positive" in r.reason


def test_g_below_bound_names_bound(reference_float):
    r = eq.indifference_g(reference_float, 0.01)
    assert not r.viable and "1/25" in r.reason


def test_g_makes_aggregator_indifferent_for_any_h(reference_float):
    rng = np.random.default_rng(5)
    lo = 1 / 25
    for b in np.linspace(lo, 1, 1002)[1:-1]:
        g = eq.indifference_g(reference_float, b).value
        for h in rng.uniform(0, 1, 10):
            assert abs(aggregator_utility(reference_float, MixPoint(b, g, h))) <= 1e-9


# --- indifference_h / combined_h -----------------------------------------


def test_h_at_reference(reference):
    assert eq.indifference_h(reference, Fraction(1, 5), Fraction(4, 5)).value == Fraction(67, 96)


def test_h_free_search_full_blind_challenge():
    params = ProtocolParams(s_A=1, s_V=1, x=0, z=24)
    assert eq.indifference_h(params, 1, 1).value == Fraction(1, 3)


@pytest.mark.parametrize("g", [0, Fraction(1, 2), 1])
def test_h_always_search_free(g):
    r = eq.indifference_h(ProtocolParams(s_A=1, s_V=1, x=0, z=24), 0, g)
    assert r.value == 1 and not r.viable


def test_h_zero_denominator(reference):
    r = eq.indifference_h(reference, 1, 0)
    assert r.value is None and not r.viable


def test_combined_h_examples(reference):
    assert eq.combined_h(reference, Fraction(1, 5)).value == Fraction(67, 96)
    assert eq.combined_h(reference, 1).value == Fraction(1, 3)
    assert eq.combined_h(reference.replace(x=0), 1).value == Fraction(12, 36)


def test_combined_h_matches_two_step_on_grid(reference_float):
    for b in np.linspace(1 / 25, 1, 1002)[1:-1]:
        g = eq.indifference_g(reference_float, b).value
        two = eq.indifference_h(reference_float, b, g).value
        assert abs(eq.combined_h(reference_float, b).value - two) <= 1e-9


# --- viability bounds ----------------------------------------------------


def test_b_bounds_reference(reference):
    bounds = eq.viability_b_lower(reference)
    assert bounds.b_min_from_g == Fraction(1, 25)
    assert bounds.b_min_from_h_window == Fraction(-1, 24) / Fraction(575, 24)
    assert bounds.h_bound_always_satisfied and not bounds.g_bound_always_satisfied
    assert bounds.lower() == Fraction(1, 25)


def test_b_bound_free_search():
    s, z = Fraction(3), Fraction(40)
    bounds = eq.viability_b_lower(ProtocolParams(s_A=s, s_V=s, x=0, z=z))
    assert bounds.b_min_from_h_window == s / (s + z)


def test_h_window_bound_is_where_h_drops_below_one():
    # modest z relative to the stakes makes the window bound positive
    params = ProtocolParams(s_A=Fraction(10), s_V=Fraction(10), x=Fraction(1), z=Fraction(12))
    bound = eq.viability_b_lower(params).b_min_from_h_window
    assert bound == Fraction(13, 33)
    assert eq.combined_h(params, bound + Fraction(1, 1000)).value < 1
    assert eq.combined_h(params, bound - Fraction(1, 1000)).value > 1


# --- thresholds ---------------------------------------------------------


def test_random_check_threshold_examples():
    assert eq.random_check_threshold(ProtocolParams(s_A=1, s_V=1, x=0, z=24)) == 0.96
    assert eq.random_check_threshold(ProtocolParams(s_A=5, s_V=1, x=0, z=5)) == 0.5
    assert eq.random_check_threshold(ProtocolParams(s_A=5, s_V=1, x=0, z=0)) == 0


def test_random_check_threshold_rejects_degenerate():
    with pytest.raises(ParamsError):
        eq.random_check_threshold(ProtocolParams(s_A=0, s_V=1, x=0, z=0))


@pytest.mark.parametrize("s_A,z", [(1, 24), (3, 7), (10, 1000)])
def test_random_check_sign_flip_on_grid(s_A, z):
    params = ProtocolParams(s_A=Fraction(s_A), s_V=1, x=0, z=Fraction(z))
    p_star = eq.random_check_threshold(params)
    for k in range(1, 101):
        p = Fraction(k, 101)
        value = expected_utilities(build_game3(params.replace(p=p)), game3_profile(0))[0]
        assert (value < 0) == (p > p_star)


def test_easter_egg_min_reward(reference):
    assert eq.easter_egg_min_reward(reference) == Fraction(1, 24)
    assert eq.easter_egg_min_reward(reference.replace(x=0)) == 0


def test_easter_egg_equality_case(reference):
    assert eq.search_side_utility(reference, 0, reference.x) == eq.blind_side_utility(reference, 1, 0) == Fraction(1, 2)


def test_easter_egg_dominance_via_tree():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        s_V = float(rng.uniform(0.1, 10))
        params = ProtocolParams(
            s_A=s_V + float(rng.uniform(0, 10)), s_V=s_V, x=float(rng.uniform(0, s_V)), z=float(rng.uniform(0, 500))
        )
        params = params.replace(y=eq.easter_egg_min_reward(params))
        g, h = (float(v) for v in rng.uniform(0, 1, 2))
        tree = build_game2_easter(params)
        always_search = expected_utilities(tree, game2_profile(MixPoint(0, g, h)))[1]
        never_search = expected_utilities(tree, game2_profile(MixPoint(1, g, h)))[1]
        assert always_search >= never_search - 1e-12


def test_transactor_min_utility_examples():
    params = ProtocolParams(s_A=1, s_V=1, x=0, z=24, f=1)
    assert eq.transactor_min_utility(params, MixPoint(Fraction(1, 2), Fraction(1, 3), 1)) == 1
    bound = eq.transactor_min_utility(params, MixPoint(Fraction(1, 5), Fraction(4, 5), Fraction(67, 96)))
    assert bound == 1 + Fraction(29, 1675)
    assert float(bound) == pytest.approx(1.01731, abs=1e-5)
    for b, h in [(0.1, 0.2), (0.9, 0.9)]:
        assert eq.transactor_min_utility(params, MixPoint(b, 1, h)) == 1
    assert eq.transactor_min_utility(params, MixPoint(0.5, 0.5, 0)) == math.inf


def test_transactor_bound_is_zero_crossing():
    m = MixPoint(Fraction(1, 5), Fraction(4, 5), Fraction(67, 96))
    params = ProtocolParams(s_A=1, s_V=1, x=0, z=24, f=3)
    bound = eq.transactor_min_utility(params, m)
    assert transactor_utility(params.replace(u_T=bound), m) == 0
    assert transactor_utility(params.replace(u_T=bound + Fraction(1, 10**6)), m) > 0
    assert transactor_utility(params.replace(u_T=bound - Fraction(1, 10**6)), m) < 0


# --- solve_point ---------------------------------------------------------


def test_solve_point_reference(reference, reference_float):
    pt = eq.solve_point(reference, Fraction(1, 5))
    assert pt.mix == MixPoint(Fraction(1, 5), Fraction(4, 5), Fraction(67, 96))
    assert pt.residual_A == 0 and pt.residual_V == 0 and pt.viable
    pf = eq.solve_point(reference_float, 0.2)
    assert pf.residuals_ok(1e-12)
    assert pf.regrets["V"] == pytest.approx(21 / 192, abs=1e-12)


def test_solve_point_below_bound_is_structured(reference_float):
    pt = eq.solve_point(reference_float, 0.03)
    assert not pt.viable and pt.mix is None and pt.g < 0
    assert not pt.flags["g_viable"] and not pt.flags["b_above_g_bound"]


def test_solve_point_just_above_bound(reference_float):
    pt = eq.solve_point(reference_float, 1 / 25 + 1e-6)
    assert pt.viable and 0 < pt.g < 1e-4
    assert pt.residuals_ok(1e-9)


def test_solve_point_rejects_b_outside_unit_interval(reference):
    with pytest.raises(ParamsError):
        eq.solve_point(reference, Fraction(3, 2))


def test_validator_zero_along_curve(reference_float):
    for b in np.linspace(1 / 25, 1, 202)[1:-1]:
        pt = eq.solve_point(reference_float, b)
        assert abs(validator_utility(reference_float, pt.mix)) <= 1e-9
        assert pt.regrets["A"] <= 1e-9


# --- numeric cross-check -------------------------------------------------


def test_cross_check_reference(reference):
    report = eq.numeric_cross_check(reference, Fraction(1, 5))
    assert report.agree
    assert report.g_numeric == pytest.approx(0.8, abs=1e-9)
    assert report.h_numeric == pytest.approx(67 / 96, abs=1e-9)


def test_cross_check_reports_h_leaving_unit_interval():
    # x above s_A/2 with little blind play: searching never pays, no h in (0, 1)
    params = ProtocolParams(s_A=1, s_V=1, x=0.9, z=24)
    report = eq.numeric_cross_check(params, 0.05)
    assert not report.agree
    assert any("no sign change for h" in p for p in report.problems)
    assert not eq.combined_h(params, 0.05).viable


def test_cross_check_below_g_bound_reports_no_root(reference):
    report = eq.numeric_cross_check(reference, 0.02)
    assert any("no sign change for g" in p for p in report.problems)


def test_aggregator_utility_strictly_decreasing_in_g(reference_float):
    gs = np.linspace(0, 1, 50)
    for b, h in [(0.1, 0.0), (0.5, 0.5), (1.0, 0.99)]:
        values = [aggregator_utility(reference_float, MixPoint(b, float(g), h)) for g in gs]
        assert all(x > y for x, y in zip(values, values[1:]))


# --- sweep / CSV ---------------------------------------------------------


def test_sweep_csv_round_trip(reference_float):
    import csv

    points = eq.sweep(reference_float, [0.02, 0.2, 0.5, 0.9])
    text = eq.points_to_csv(points)
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == list(eq.CSV_COLUMNS)
    assert rows[0]["viable"] == "false" and rows[0]["residual_A"] == ""
    for row, pt in zip(rows[1:], points[1:]):
        assert float(row["h"]) == pt.h
        assert float(row["regret_V"]) == pt.regrets["V"]
        assert row["viable"] == "true"
