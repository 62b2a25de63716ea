"""Self-check suite behind ``rollup-game verify``.

Each check returns a :class:`CheckResult`; the suite never raises on a
failed check so the CLI can print the whole table.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .equilibria import (
    blind_side_utility,
    combined_h,
    indifference_g,
    indifference_h,
    numeric_cross_check,
    random_check_threshold,
    search_side_utility,
    solve_point,
    transactor_min_utility,
    viability_b_lower,
)
from .game_engine import GameTree, Leaf, backward_induction, expected_utilities, regret_audit
from .montecarlo import convergence_check, game2_leaf_probabilities, simulate_game2
from .rollup_games import (
    DISHONEST,
    MixPoint,
    ProtocolParams,
    aggregator_utility,
    build_game1,
    build_game2,
    build_game3,
    game1_profile,
    game2_profile,
    game3_profile,
    transactor_utility,
    validator_utility,
)

REFERENCE = ProtocolParams(s_A=Fraction(1), s_V=Fraction(1), x=Fraction(1, 24), z=Fraction(24))
REFERENCE_MIX = MixPoint(Fraction(1, 5), Fraction(4, 5), Fraction(67, 96))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, object]:
        return {
            "name": self.name,
            "passed": self.passed,
            "detail": self.detail,
            "seconds": round(self.seconds, 4),
            "failures": self.failures,
        }


def _random_params(rng: np.random.Generator) -> ProtocolParams:
    s_V = float(rng.uniform(0.1, 10))
    s_A = s_V + float(rng.uniform(0, 10))
    x, dz, f, w = (float(v) for v in rng.uniform(0, 1, 4) * (s_V, 500, 5, 5))
    return ProtocolParams(s_A=s_A, s_V=s_V, x=x, z=s_A + dz, f=f, w=w)


def check_perfect_info_backward_induction(seed: int = 1, n: int = 100) -> CheckResult:
    rng = np.random.default_rng(seed)
    expected = game1_profile().strategies
    failures = []
    for _ in range(n):
        w = rng.uniform(0.01, 10)
        params = ProtocolParams(
            f=w + rng.uniform(0.01, 10), w=w, s_A=rng.uniform(0.01, 100), s_V=rng.uniform(0.01, 100),
            z=rng.uniform(0.01, 1000), x=0.0,
        )
        result = backward_induction(build_game1(params))
        if result.profile.strategies != expected or result.payoffs != (params.f - params.w, 0):
            failures.append(f"{params}: {result.profile.strategies}")
    return CheckResult("perfect_info_backward_induction", not failures, f"{n} random parameter sets", failures=failures)


def check_reference_point() -> CheckResult:
    failures = []
    exact = solve_point(REFERENCE, Fraction(1, 5))
    if (exact.g, exact.h) != (Fraction(4, 5), Fraction(67, 96)):
        failures.append(f"rational mode gave g={exact.g}, h={exact.h}")
    if exact.residual_A != 0 or exact.residual_V != 0:
        failures.append("rational residuals are not zero")
    floated = ProtocolParams(s_A=1.0, s_V=1.0, x=1 / 24, z=24.0)
    pt = solve_point(floated, 0.2)
    if abs(pt.g - 0.8) > 1e-12 or abs(pt.h - 67 / 96) > 1e-12:
        failures.append(f"float mode gave g={pt.g!r}, h={pt.h!r}")
    if not pt.residuals_ok(1e-12):
        failures.append(f"float residuals {pt.residual_A!r}, {pt.residual_V!r}")
    return CheckResult("reference_point", not failures, "g = 4/5, h = 67/96 at b = 1/5", failures=failures)


def check_tree_consistency(
    seed: int = 2, n: int = 1000, builder: Callable[[ProtocolParams], GameTree] = build_game2
) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = []
    for _ in range(n):
        params = _random_params(rng)
        m = MixPoint(*(float(v) for v in rng.uniform(0, 1, 3)))
        tree_a, tree_v = expected_utilities(builder(params), game2_profile(m))
        err = max(abs(tree_a - aggregator_utility(params, m)), abs(tree_v - validator_utility(params, m)))
        worst = max(worst, err)
        if err > 1e-9:
            failures.append(f"{params} {m}: error {err:.3g}")
    return CheckResult("closed_form_tree_consistency", not failures, f"{n} draws, max error {worst:.3g}",
                       failures=failures[:10])


def check_combined_closed_form(params: ProtocolParams = REFERENCE, n: int = 1000) -> CheckResult:
    fp = ProtocolParams(**{k: float(v) for k, v in params.to_dict().items()})
    lo = float(viability_b_lower(fp).lower())
    grid = np.linspace(lo, 1.0, n + 2)[1:-1]
    failures = []
    worst = 0.0
    for b in grid:
        g = indifference_g(fp, b).value
        two_step = indifference_h(fp, b, g).value
        closed = combined_h(fp, b).value
        report = numeric_cross_check(fp, b)
        worst = max(worst, abs(closed - two_step))
        if abs(closed - two_step) > 1e-9 or not report.agree:
            failures.append(f"b={b!r}: {report.problems or (closed, two_step)}")
    return CheckResult("combined_closed_form_consistency", not failures, f"{n}-point b grid, max combined-form gap {worst:.3g}",
                       failures=failures[:10])


def check_g_viability(params: ProtocolParams = REFERENCE, resolution: int = 10_000) -> CheckResult:
    bound = params.s_A / (params.s_A + params.z)
    failures = []
    first = None
    for k in range(1, resolution + 1):
        b = Fraction(k, resolution)
        viable = indifference_g(params, b).viable
        if viable != (b > bound):
            failures.append(f"b={b}: viable={viable}")
        if viable and first is None:
            first = b
    if first is None or not 0 <= first - bound <= Fraction(1, resolution):
        failures.append(f"first viable b {first} is not within 1/{resolution} above {bound}")
    return CheckResult("g_viability_flip", not failures, f"flip at b = {first} (bound {bound})", failures=failures)


def check_random_check(params: ProtocolParams = ProtocolParams(s_A=Fraction(1), s_V=Fraction(1), x=0, z=Fraction(24))
                       ) -> CheckResult:
    p_star = random_check_threshold(params)
    grid = [Fraction(2 * k + 1, 200) for k in range(100)]
    failures = []
    last_nonneg, first_neg = None, None
    for p in grid:
        value = expected_utilities(build_game3(params.replace(p=p)), game3_profile(0))[0]
        if (value < 0) != (p > p_star):
            failures.append(f"p={p}: dishonest value {value}")
        if value < 0 and first_neg is None:
            first_neg = p
        if value >= 0:
            last_nonneg = p
    if first_neg is None or last_nonneg is None or not last_nonneg <= p_star < first_neg:
        failures.append(f"flip between {last_nonneg} and {first_neg} misses p* = {p_star}")
    return CheckResult("random_check_flip", not failures, f"p* = {p_star}, flip in ({last_nonneg}, {first_neg}]",
                       failures=failures)


def check_easter_egg(seed: int = 3, n: int = 1000) -> CheckResult:
    rng = np.random.default_rng(seed)
    failures = []
    for _ in range(n):
        params = _random_params(rng)
        g, h = (float(v) for v in rng.uniform(0, 1, 2))
        gap = search_side_utility(params, h, params.x) - blind_side_utility(params, g, h)
        if gap < -1e-12:
            failures.append(f"{params} g={g} h={h}: gap {gap}")
    witness = ProtocolParams(s_A=Fraction(1), s_V=Fraction(1), x=Fraction(1, 24), z=Fraction(24))
    eq = search_side_utility(witness, 0, witness.x) - blind_side_utility(witness, 1, 0)
    if eq != 0:
        failures.append(f"equality case gap {eq}")
    return CheckResult("easter_egg_dominance", not failures, f"{n} draws, equality at g=1, h=0", failures=failures)


def check_monte_carlo(rounds: int = 10**6, seed: int = 7, k_sigma: float = 4.0) -> CheckResult:
    fp = ProtocolParams(s_A=1.0, s_V=1.0, x=1 / 24, z=24.0)
    m = MixPoint(0.2, 0.8, 67 / 96)
    report = simulate_game2(fp, m, rounds, seed)
    failures = []
    for c in convergence_check(report, (0.0, 0.0), k_sigma):
        if not c.passed:
            failures.append(f"{c.player}: |mean| = {c.deviation:.3g} > {k_sigma} x {c.stderr:.3g}")
    for label, count, q in zip(report.leaf_labels, report.leaf_counts, game2_leaf_probabilities(m)):
        sigma = math.sqrt(q * (1 - q) / rounds)
        freq = count / rounds
        if abs(freq - q) > k_sigma * sigma:
            failures.append(f"leaf {label}: frequency {freq:.6g} vs {q:.6g}")
    if simulate_game2(fp, m, rounds, seed) != report:
        failures.append("rerun with the same seed differs")
    detail = f"{rounds} rounds, means A={report.means[0]:.3g}, V={report.means[1]:.3g}"
    return CheckResult("monte_carlo_convergence", not failures, detail, failures=failures)


def check_regret_audit() -> CheckResult:
    audit = regret_audit(build_game2(REFERENCE), game2_profile(REFERENCE_MIX))
    failures = []
    if audit.regrets["A"] != 0:
        failures.append(f"aggregator regret {audit.regrets['A']}")
    if audit.best_values["V"] != Fraction(21, 192):
        failures.append(f"validator best-response value {audit.best_values['V']}")
    detail = f"regret A = {audit.regrets['A']}, regret V = {audit.regrets['V']}"
    return CheckResult("reference_regret_audit", not failures, detail, failures=failures)


def check_transactor(step: float = 1e-5) -> CheckResult:
    params = ProtocolParams(s_A=1.0, s_V=1.0, x=1 / 24, z=24.0, f=1.0)
    m = MixPoint(0.2, 0.8, 67 / 96)
    bound = transactor_min_utility(params, m)
    grid = 1.0 + step * np.arange(int(round(0.1 / step)) + 1)
    failures = []
    signs = [transactor_utility(params.replace(u_T=float(u)), m) > 0 for u in grid]
    for u, positive in zip(grid, signs):
        if positive != (u > bound):
            failures.append(f"u_T={u!r}: sign mismatch")
    flip = next((float(u) for u, s in zip(grid, signs) if s), None)
    if flip is None or not 0 < flip - bound <= step:
        failures.append(f"crossing {flip} not within {step} of {bound}")
    return CheckResult("transactor_bound", not failures, f"bound {bound:.7g}, first positive grid u_T {flip}",
                       failures=failures)


def perturbed_game2(params: ProtocolParams, delta: float = 0.1) -> GameTree:
    """Game 2 with one leaf payoff nudged; used to prove the suite catches table errors."""
    tree = build_game2(params)
    nodes = list(tree.nodes)
    i = tree.follow(("Search", DISHONEST, "Challenge"))
    a, v = nodes[i].payoffs
    nodes[i] = Leaf((a, v + delta), nodes[i].label)
    return GameTree(tree.players, tuple(nodes))


def run_suite(rounds: int = 10**6, seed: int = 7, inject_fault: bool = False) -> list[CheckResult]:
    builder = perturbed_game2 if inject_fault else build_game2
    checks: list[Callable[[], CheckResult]] = [
        check_perfect_info_backward_induction,
        check_reference_point,
        lambda: check_tree_consistency(builder=builder),
        check_combined_closed_form,
        check_g_viability,
        check_random_check,
        check_easter_egg,
        lambda: check_monte_carlo(rounds=rounds, seed=seed),
        check_regret_audit,
        check_transactor,
    ]
    results = []
    for fn in checks:
        t0 = time.perf_counter()
        try:
            res = fn()
        except Exception as exc:  # a crashing check is a failed check
            res = CheckResult(getattr(fn, "__name__", "check"), False, f"{type(exc).__name__}: {exc}")
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return results

