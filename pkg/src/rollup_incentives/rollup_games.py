"""Aggregator/validator games of an optimistic rollup and their utilities."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

from .game_engine import GameTree, Number, StrategyProfile, TreeBuilder

HONEST, DISHONEST = "Honest", "Dishonest"
CHALLENGE, NO = "Challenge", "No"
NO_SEARCH, SEARCH = "NoSearch", "Search"
CHECK = "Check"

# Game 2 information-set ids
SEARCH_SET = "V:search"
AGGREGATOR_SET = "A"
BLIND_SET = "V:blind"
INFORMED_HONEST_SET = "V:informed|Honest"
INFORMED_DISHONEST_SET = "V:informed|Dishonest"

DEFAULT_MUCH_LARGER = 10.0


class ParamsError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolParams:
    """Economic parameters of one rollup scenario.

    ``f`` fee, ``w`` aggregator work cost, ``s_A``/``s_V`` stakes, ``x``
    validator search cost, ``z`` value extractable by a dishonest commit.
    ``y`` (Easter-egg reward), ``u_T`` (transactor gross utility) and ``p``
    (random-check probability) are only needed by the mechanisms using them.
    """

    s_A: Number
    s_V: Number
    x: Number
    z: Number
    f: Number = 0
    w: Number = 0
    y: Number = 0
    u_T: Number | None = None
    p: Number | None = None

    def __post_init__(self) -> None:
        for fld in dataclasses.fields(self):
            v = getattr(self, fld.name)
            if v is None:
                continue
            if isinstance(v, bool) or not isinstance(v, (int, float, Fraction)):
                raise ParamsError(f"{fld.name} must be a number, got {v!r}")
            if not math.isfinite(v) or v < 0:
                raise ParamsError(f"{fld.name} must be finite and nonnegative, got {v}")
        if self.p is not None and self.p > 1:
            raise ParamsError(f"p must lie in [0, 1], got {self.p}")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> ProtocolParams:
        unknown = set(data) - set(cls.field_names())
        if unknown:
            raise ParamsError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        return cls(**{k: parse_number(v) if isinstance(v, str) else v for k, v in data.items()})

    def replace(self, **changes: Any) -> ProtocolParams:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}

    def ordinal_check(self, much_larger: float = DEFAULT_MUCH_LARGER) -> OrdinalCheck:
        """Check ``x < s_V <= s_A << z`` without rejecting anything."""
        problems = []
        if not self.x < self.s_V:
            problems.append(f"x < s_V fails ({self.x} >= {self.s_V})")
        if not self.s_V <= self.s_A:
            problems.append(f"s_V <= s_A fails ({self.s_V} > {self.s_A})")
        if not self.s_A < self.z:
            problems.append(f"s_A < z fails ({self.s_A} >= {self.z})")
        ratio = self.z / self.s_A if self.s_A else math.inf
        if ratio < much_larger:
            problems.append(f"z/s_A = {float(ratio):.4g} is below the 'much larger' threshold {much_larger}")
        return OrdinalCheck(not problems, ratio, tuple(problems))


@dataclass(frozen=True)
class OrdinalCheck:
    ok: bool
    strictness_ratio: Number
    problems: tuple[str, ...]


def parse_number(text: str, exact: bool = False) -> Number:
    """Parse ``"0.2"``, ``"1/24"`` or ``"3"``; ``exact`` keeps a Fraction."""
    text = text.strip()
    try:
        q = Fraction(text)
    except (ValueError, ZeroDivisionError):
        try:
            v = float(text)  # inf/nan spellings; rejected later by validation
        except ValueError:
            raise ParamsError(f"not a number: {text!r}") from None
        return v
    return q if exact else float(q)


def load_params_text(text: str, exact: bool = False) -> dict[str, Number]:
    """Parse a JSON object or ``key=value`` lines into raw parameter values.

    Keys are checked against :class:`ProtocolParams`; unknown keys raise.
    """
    stripped = text.strip()
    raw: dict[str, Any]
    if stripped.startswith("{"):
        raw = json.loads(stripped)
        if not isinstance(raw, dict):
            raise ParamsError("parameter JSON must be an object")
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParamsError(f"line {lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in raw:
                raise ParamsError(f"line {lineno}: duplicate key {key!r}")
            raw[key] = value
    unknown = set(raw) - set(ProtocolParams.field_names())
    if unknown:
        raise ParamsError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    out = {}
    for k, v in raw.items():
        if isinstance(v, str):
            out[k] = parse_number(v, exact)
        elif v is None or isinstance(v, (int, float)) and not isinstance(v, bool):
            out[k] = Fraction(str(v)) if exact and v is not None else v
        else:
            raise ParamsError(f"{k} must be a number, got {v!r}")
    return out


def load_params(path: str | Path, exact: bool = False) -> ProtocolParams:
    return ProtocolParams(**load_params_text(Path(path).read_text(encoding="utf-8"), exact))


@dataclass(frozen=True)
class MixPoint:
    """b: validator skips the search; g: blind validator challenges; h: aggregator honest."""

    b: Number
    g: Number
    h: Number

    def __post_init__(self) -> None:
        for name in ("b", "g", "h"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ParamsError(f"{name} must lie in [0, 1], got {v}")


def half(v: Number) -> Number:
    return v / 2 if isinstance(v, (Fraction, float)) else Fraction(v, 2)


def build_game1(params: ProtocolParams) -> GameTree:
    """Perfect-information game: aggregator commits, validator sees it and may challenge."""
    f, w, s_A, s_V, z = params.f, params.w, params.s_A, params.s_V, params.z
    t = TreeBuilder(("A", "V"))
    root = t.decision("A", "A", {
        HONEST: t.decision("V", "V|Honest", {
            CHALLENGE: t.leaf((f - w, -s_V), "Honest/Challenge"),
            NO: t.leaf((f - w, 0), "Honest/No"),
        }),
        DISHONEST: t.decision("V", "V|Dishonest", {
            CHALLENGE: t.leaf((-s_A - w, half(s_A)), "Dishonest/Challenge"),
            NO: t.leaf((f + z - w, 0), "Dishonest/No"),
        }),
    })
    return t.build(root)


def _game2(params: ProtocolParams, bonus: Number) -> GameTree:
    s_A, s_V, x, z = params.s_A, params.s_V, params.x, params.z
    t = TreeBuilder(("A", "V"))

    def side(tag: str, cost: Number, blind: bool) -> tuple:
        def challenge_set(a_move: str) -> str:
            return BLIND_SET if blind else f"V:informed|{a_move}"

        return t.decision("A", AGGREGATOR_SET, {
            HONEST: t.decision("V", challenge_set(HONEST), {
                CHALLENGE: t.leaf((0, -s_V - cost), f"{tag}/Honest/Challenge"),
                NO: t.leaf((0, -cost), f"{tag}/Honest/No"),
            }),
            DISHONEST: t.decision("V", challenge_set(DISHONEST), {
                CHALLENGE: t.leaf((-s_A, half(s_A) - cost), f"{tag}/Dishonest/Challenge"),
                NO: t.leaf((z, -cost), f"{tag}/Dishonest/No"),
            }),
        })

    # A search that costs x but may also find a reward y nets y - x on every leaf
    root = t.decision("V", SEARCH_SET, {
        NO_SEARCH: side(NO_SEARCH, 0, blind=True),
        SEARCH: side(SEARCH, x - bonus, blind=False),
    })
    return t.build(root)


def build_game2(params: ProtocolParams) -> GameTree:
    """Game with a costly search; honest pay and the w term are normalized to 0.

    The aggregator cannot see whether the validator searched, and a validator
    that skipped the search cannot see the aggregator's move.
    """
    return _game2(params, 0)


def build_game2_easter(params: ProtocolParams) -> GameTree:
    """Game 2 with an expected reward ``params.y`` added to every Search leaf."""
    return _game2(params, params.y)


def _game3(params: ProtocolParams, p: Number) -> GameTree:
    t = TreeBuilder(("A", "C"))

    def check(tag: str, caught: Number, missed: Number) -> tuple:
        return t.chance({
            CHECK: (p, t.leaf((caught, 0), f"{tag}/Check")),
            NO: (1 - p, t.leaf((missed, 0), f"{tag}/No")),
        })

    root = t.decision("A", "A", {
        HONEST: check(HONEST, 0, 0),
        DISHONEST: check(DISHONEST, -params.s_A, params.z),
    })
    return t.build(root)


def build_game3(params: ProtocolParams) -> GameTree:
    """Aggregator against a contract that checks at random with probability ``params.p``."""
    p = params.p
    if p is None or not 0 < p < 1:
        raise ParamsError(f"random-check game needs 0 < p < 1, got p={p}")
    return _game3(params, p)


def game2_profile(m: MixPoint) -> StrategyProfile:
    """Full Game 2 profile for a mix; an informed validator challenges iff A was dishonest."""
    b, g, h = m.b, m.g, m.h
    return StrategyProfile({
        "A": {AGGREGATOR_SET: {HONEST: h, DISHONEST: 1 - h}},
        "V": {
            SEARCH_SET: {NO_SEARCH: b, SEARCH: 1 - b},
            BLIND_SET: {CHALLENGE: g, NO: 1 - g},
            INFORMED_HONEST_SET: {CHALLENGE: 0, NO: 1},
            INFORMED_DISHONEST_SET: {CHALLENGE: 1, NO: 0},
        },
    })


def game1_profile(honest: Number = 1) -> StrategyProfile:
    """Aggregator honest w.p. ``honest``; validator challenges iff A was dishonest."""
    return StrategyProfile({
        "A": {"A": {HONEST: honest, DISHONEST: 1 - honest}},
        "V": {
            "V|Honest": {CHALLENGE: 0, NO: 1},
            "V|Dishonest": {CHALLENGE: 1, NO: 0},
        },
    })


def game3_profile(honest: Number) -> StrategyProfile:
    return StrategyProfile({"A": {"A": {HONEST: honest, DISHONEST: 1 - honest}}, "C": {}})


def aggregator_utility(params: ProtocolParams, m: MixPoint) -> Number:
    s_A, z = params.s_A, params.z
    b, g, h = m.b, m.g, m.h
    return (1 - h) * (b * (g * (-s_A) + (1 - g) * z) + (1 - b) * (-s_A))


def validator_utility(params: ProtocolParams, m: MixPoint) -> Number:
    bounty = half(params.s_A)
    b, g, h = m.b, m.g, m.h
    return b * g * (h * (-params.s_V) + (1 - h) * bounty) + (1 - b) * ((1 - h) * bounty - params.x)


def transactor_utility(params: ProtocolParams, m: MixPoint) -> Number:
    """Transactor's expected gain: fee lost only when a dishonest commit slips through."""
    if params.u_T is None:
        raise ParamsError("transactor utility needs u_T")
    f = params.f
    return m.h * (params.u_T - f) - m.b * (1 - m.h) * (1 - m.g) * f
