"""Indifference curves, viability bounds and mechanism thresholds.

The system for (b, g, h) has two indifference equations and three unknowns,
so points are parameterized by the validator's no-search probability ``b``.
Closed forms accept floats or Fractions; the numeric cross-check is float
only and uses bisection as an independent route to the same roots.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence, TextIO

from scipy.optimize import bisect

from .game_engine import Number, regret_audit
from .rollup_games import (
    MixPoint,
    ParamsError,
    ProtocolParams,
    aggregator_utility,
    half,
    build_game2,
    game2_profile,
    validator_utility,
)

RESIDUAL_TOL = 1e-9
BISECT_BRACKET = (1e-12, 1 - 1e-12)
BISECT_XTOL = 1e-12
BISECT_MAXITER = 200
AGREEMENT_TOL = 1e-9

CSV_COLUMNS = ("b", "g", "h", "residual_A", "residual_V", "regret_A", "regret_V", "viable")


@dataclass(frozen=True)
class Bounded:
    """A solved quantity plus whether it lands strictly inside (0, 1)."""

    value: Number | None
    viable: bool
    reason: str = ""


def _unit_interval(value: Number, name: str) -> Bounded:
    if value <= 0:
        return Bounded(value, False, f"{name} = {float(value):.6g} <= 0")
    if value >= 1:
        return Bounded(value, False, f"{name} = {float(value):.6g} >= 1")
    return Bounded(value, True)


def _display(v: Number) -> str:
    q = v if isinstance(v, Fraction) else Fraction(v).limit_denominator(10**6)
    if isinstance(v, float) and abs(float(q) - v) > 1e-12:
        return f"{v:.6g}"
    return str(q)


def indifference_g(params: ProtocolParams, b: Number) -> Bounded:
    """Blind-challenge probability making the aggregator indifferent to honesty."""
    s_A, z = params.s_A, params.z
    if b <= 0:
        return Bounded(None, False, "b must be positive")
    denom = b * s_A + b * z
    if denom == 0:
        return Bounded(None, False, "s_A + z is zero")
    g = 1 - s_A / denom
    if g <= 0:
        bound = _display(s_A / (s_A + z))
        return Bounded(g, False, f"b below {bound} bound (b must exceed s_A/(s_A+z)); g = {float(g):.6g}")
    return _unit_interval(g, "g")


def indifference_h(params: ProtocolParams, b: Number, g: Number) -> Bounded:
    """Aggregator honesty making the validator's expected utility zero."""
    bounty = half(params.s_A)
    num = b * g * bounty + (1 - b) * bounty - (1 - b) * params.x
    denom = b * g * params.s_V + b * g * bounty + (1 - b) * bounty
    if denom == 0:
        return Bounded(None, False, "zero denominator (validator payoff does not depend on h)")
    return _unit_interval(num / denom, "h")


def combined_h(params: ProtocolParams, b: Number) -> Bounded:
    """Validator-indifference h after substituting the aggregator-indifference g."""
    s_A, s_V, x, z = params.s_A, params.s_V, params.x, params.z
    half_sz = half(s_A) * z
    num = half_sz - (1 - b) * (z * x + s_A * x)
    denom = half_sz - s_A * s_V + (z + s_A) * s_V * b
    if denom == 0:
        return Bounded(None, False, "zero denominator")
    return _unit_interval(num / denom, "h")


@dataclass(frozen=True)
class ViabilityBounds:
    b_min_from_g: Number
    b_min_from_h_window: Number | None

    @property
    def g_bound_always_satisfied(self) -> bool:
        return self.b_min_from_g <= 0

    @property
    def h_bound_always_satisfied(self) -> bool:
        return self.b_min_from_h_window is not None and self.b_min_from_h_window <= 0

    def lower(self) -> Number:
        """Tightest lower bound on b, clamped at 0."""
        candidates = [self.b_min_from_g]
        if self.b_min_from_h_window is not None:
            candidates.append(self.b_min_from_h_window)
        return max(0, *candidates)


def viability_b_lower(params: ProtocolParams) -> ViabilityBounds:
    s_A, s_V, x, z = params.s_A, params.s_V, params.x, params.z
    from_g = s_A / (s_A + z) if s_A + z else 0
    base = s_A * s_V - s_A * x - z * x
    denom = base + z * s_V
    # the h < 1 condition only rearranges to a lower bound when this is positive
    from_h = base / denom if denom > 0 else None
    return ViabilityBounds(from_g, from_h)


def random_check_threshold(params: ProtocolParams) -> Number:
    """Check probability above which a dishonest commit loses money in expectation."""
    if params.z + params.s_A <= 0:
        raise ParamsError("random-check threshold needs z + s_A > 0")
    return params.z / (params.z + params.s_A)


def dishonest_check_value(params: ProtocolParams, p: Number) -> Number:
    return p * (-params.s_A) + (1 - p) * params.z


def easter_egg_min_reward(params: ProtocolParams) -> Number:
    return params.x


def search_side_utility(params: ProtocolParams, h: Number, y: Number = 0) -> Number:
    """Validator utility when always searching (b = 0), plus reward ``y``."""
    return validator_utility(params, MixPoint(0, 0, h)) + y


def blind_side_utility(params: ProtocolParams, g: Number, h: Number) -> Number:
    """Validator utility when never searching (b = 1)."""
    return validator_utility(params, MixPoint(1, g, h))


def transactor_min_utility(params: ProtocolParams, m: MixPoint) -> Number:
    """Gross utility the transactor needs to prefer participating; inf when h = 0."""
    if m.h == 0:
        return math.inf
    return params.f * (1 + m.b * (1 - m.g) * (1 - m.h) / m.h)


@dataclass(frozen=True)
class EquilibriumPoint:
    b: Number
    g: Number | None
    h: Number | None
    mix: MixPoint | None
    residual_A: Number | None
    residual_V: Number | None
    regrets: dict[str, Number] | None
    best_values: dict[str, Number] | None
    flags: dict[str, bool] = field(default_factory=dict)
    violations: tuple[str, ...] = ()

    @property
    def viable(self) -> bool:
        return not self.violations

    def residuals_ok(self, tol: float = RESIDUAL_TOL) -> bool:
        return (
            self.residual_A is not None
            and self.residual_V is not None
            and self.residual_A <= tol
            and self.residual_V <= tol
        )

    def csv_row(self) -> dict[str, object]:
        def fmt(v: Number | None) -> str:
            return "" if v is None else f"{float(v):.17g}"

        regrets = self.regrets or {}
        return {
            "b": fmt(self.b),
            "g": fmt(self.g),
            "h": fmt(self.h),
            "residual_A": fmt(self.residual_A),
            "residual_V": fmt(self.residual_V),
            "regret_A": fmt(regrets.get("A")),
            "regret_V": fmt(regrets.get("V")),
            "viable": str(self.viable).lower(),
        }

    def to_dict(self) -> dict[str, object]:
        def num(v: Number | None) -> float | None:
            return None if v is None else float(v)

        return {
            "b": num(self.b),
            "g": num(self.g),
            "h": num(self.h),
            "residual_A": num(self.residual_A),
            "residual_V": num(self.residual_V),
            "regrets": None if self.regrets is None else {k: float(v) for k, v in self.regrets.items()},
            "best_response_values": None
            if self.best_values is None
            else {k: float(v) for k, v in self.best_values.items()},
            "flags": dict(self.flags),
            "viable": self.viable,
            "violations": list(self.violations),
        }


def solve_point(params: ProtocolParams, b: Number) -> EquilibriumPoint:
    """Mixed point on both indifference curves at a given ``b``.

    Non-viable inputs come back as a point with ``violations`` set rather
    than as an exception; only a ``b`` outside [0, 1] raises.
    """
    if not 0 <= b <= 1:
        raise ParamsError(f"b must lie in [0, 1], got {b}")
    bounds = viability_b_lower(params)
    g_res = indifference_g(params, b)
    h_res = combined_h(params, b) if g_res.value is not None else Bounded(None, False, "g undefined")

    violations = []
    if not 0 < b < 1:
        violations.append(f"b = {_display(b)} is not strictly inside (0, 1)")
    if not g_res.viable:
        violations.append(g_res.reason)
    if not h_res.viable:
        violations.append(h_res.reason)
    flags = {
        "b_above_g_bound": b > bounds.b_min_from_g,
        "b_above_h_window_bound": bounds.b_min_from_h_window is None or b > bounds.b_min_from_h_window,
        "g_viable": g_res.viable,
        "h_viable": h_res.viable,
    }

    g, h = g_res.value, h_res.value
    mix = None
    if g is not None and h is not None and 0 <= g <= 1 and 0 <= h <= 1:
        mix = MixPoint(b, g, h)
    if mix is None:
        return EquilibriumPoint(b, g, h, None, None, None, None, None, flags, tuple(violations))

    audit = regret_audit(build_game2(params), game2_profile(mix))
    return EquilibriumPoint(
        b,
        g,
        h,
        mix,
        abs(aggregator_utility(params, mix)),
        abs(validator_utility(params, mix)),
        audit.regrets,
        audit.best_values,
        flags,
        tuple(violations),
    )


def _floated(params: ProtocolParams) -> ProtocolParams:
    return ProtocolParams(**{k: float(v) for k, v in params.to_dict().items()})


@dataclass(frozen=True)
class CrossCheckReport:
    b: float
    g_closed: float | None
    g_numeric: float | None
    h_closed: float | None
    h_two_step: float | None
    h_numeric: float | None
    problems: tuple[str, ...] = ()

    @property
    def agree(self) -> bool:
        return not self.problems


def _root(fn, what: str) -> tuple[float | None, str | None]:
    lo, hi = BISECT_BRACKET
    flo, fhi = fn(lo), fn(hi)
    if flo == 0:
        return lo, None
    if fhi == 0:
        return hi, None
    if (flo > 0) == (fhi > 0):
        return None, f"no sign change for {what} in [{lo:g}, {hi:g}]"
    return bisect(fn, lo, hi, xtol=BISECT_XTOL, maxiter=BISECT_MAXITER), None


def numeric_cross_check(params: ProtocolParams, b: Number, tol: float = AGREEMENT_TOL) -> CrossCheckReport:
    """Recover g and h by bisection and compare with the closed forms."""
    fp = _floated(params)
    b = float(b)
    problems = []

    g_closed = indifference_g(fp, b).value
    # aggregator utility is (1-h) times a function of g, so any h < 1 gives the same root
    g_num, err = _root(lambda g: aggregator_utility(fp, MixPoint(b, g, 0.0)), "g")
    if err:
        problems.append(err)

    h_closed = combined_h(fp, b).value
    h_two = indifference_h(fp, b, g_closed).value if g_closed is not None else None
    h_num = None
    if g_num is not None:
        h_num, err = _root(lambda h: validator_utility(fp, MixPoint(b, g_num, h)), "h")
        if err:
            problems.append(err)

    pairs = [("g closed vs bisection", g_closed, g_num), ("h combined vs two-step", h_closed, h_two)]
    pairs += [("h combined vs bisection", h_closed, h_num), ("h two-step vs bisection", h_two, h_num)]
    for label, left, right in pairs:
        if left is None or right is None:
            continue
        if abs(left - right) > tol:
            problems.append(f"{label}: {left:.17g} != {right:.17g}")
    return CrossCheckReport(b, g_closed, g_num, h_closed, h_two, h_num, tuple(problems))


def sweep(params: ProtocolParams, b_values: Iterable[Number]) -> list[EquilibriumPoint]:
    return [solve_point(params, b) for b in b_values]


def write_csv(points: Sequence[EquilibriumPoint], out: TextIO) -> None:
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for pt in points:
        writer.writerow(pt.csv_row())


def points_to_csv(points: Sequence[EquilibriumPoint]) -> str:
    buf = io.StringIO()
    write_csv(points, buf)
    return buf.getvalue()
