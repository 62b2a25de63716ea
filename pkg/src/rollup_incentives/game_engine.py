"""Finite two-player extensive-form games with information sets.

Trees are immutable value objects stored as a flat node array (root at
index 0, children in pre-order).  Strategies are behavior strategies keyed by
information-set id.  All evaluation is exact arithmetic over whatever number
type the payoffs and probabilities use, so ``fractions.Fraction`` inputs give
rational results and floats give floats.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterator, Mapping, Sequence, Union

Number = Union[float, int, Fraction]

PROB_TOL = 1e-12


class GameError(ValueError):
    """Malformed tree or strategy."""


class CoverageError(GameError):
    """A strategy profile is missing an information set."""


class StrategyValidationError(GameError):
    """A distribution is not a probability vector over the set's actions."""


class PerfectInformationError(GameError):
    """Backward induction was asked to solve an imperfect-information tree."""


@dataclass(frozen=True)
class Decision:
    player: str
    infoset: str
    actions: tuple[str, ...]
    children: tuple[int, ...]


@dataclass(frozen=True)
class Chance:
    actions: tuple[str, ...]
    probs: tuple[Number, ...]
    children: tuple[int, ...]


@dataclass(frozen=True)
class Leaf:
    payoffs: tuple[Number, ...]
    label: str = ""


Node = Union[Decision, Chance, Leaf]


@dataclass(frozen=True)
class InfoSet:
    id: str
    player: str
    actions: tuple[str, ...]
    nodes: tuple[int, ...]


@dataclass(frozen=True)
class GameTree:
    players: tuple[str, ...]
    nodes: tuple[Node, ...]
    infosets: Mapping[str, InfoSet] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.nodes:
            raise GameError("tree has no nodes")
        parents = [0] * len(self.nodes)
        grouped: dict[str, list[int]] = {}
        for i, node in enumerate(self.nodes):
            if isinstance(node, Leaf):
                if len(node.payoffs) != len(self.players):
                    raise GameError(f"leaf {i} has {len(node.payoffs)} payoffs, expected {len(self.players)}")
                continue
            if not node.children or len(node.children) != len(node.actions):
                raise GameError(f"node {i} needs one child per action")
            if len(set(node.actions)) != len(node.actions):
                raise GameError(f"node {i} repeats an action label")
            for c in node.children:
                # pre-order numbering makes "child index > parent index" equivalent to acyclicity
                if not i < c < len(self.nodes):
                    raise GameError(f"node {i} has invalid child index {c}")
                parents[c] += 1
            if isinstance(node, Chance):
                if len(node.probs) != len(node.actions) or any(q < 0 or q > 1 for q in node.probs):
                    raise GameError(f"chance node {i} has invalid probabilities")
                if abs(sum(node.probs) - 1) > PROB_TOL:
                    raise GameError(f"chance node {i} probabilities sum to {sum(node.probs)}")
            else:
                if node.player not in self.players:
                    raise GameError(f"node {i} owned by unknown player {node.player!r}")
                grouped.setdefault(node.infoset, []).append(i)
        if parents[0] != 0 or any(n != 1 for n in parents[1:]):
            raise GameError("every non-root node must have exactly one parent")

        infosets = {}
        for name, members in grouped.items():
            first = self.nodes[members[0]]
            for j in members[1:]:
                other = self.nodes[j]
                if other.player != first.player:
                    raise GameError(f"information set {name!r} spans players")
                if other.actions != first.actions:
                    raise GameError(f"information set {name!r} has inconsistent actions")
            infosets[name] = InfoSet(name, first.player, first.actions, tuple(members))
        object.__setattr__(self, "infosets", infosets)

    def player_infosets(self, player: str) -> list[InfoSet]:
        if player not in self.players:
            raise GameError(f"unknown player {player!r}")
        return [s for s in self.infosets.values() if s.player == player]

    def leaves(self) -> Iterator[tuple[int, Leaf]]:
        for i, node in enumerate(self.nodes):
            if isinstance(node, Leaf):
                yield i, node

    def is_perfect_information(self) -> bool:
        return all(len(s.nodes) == 1 for s in self.infosets.values())

    def follow(self, path: Sequence[str]) -> int:
        """Index of the node reached from the root by the given action labels."""
        i = 0
        for action in path:
            node = self.nodes[i]
            if isinstance(node, Leaf):
                raise GameError(f"path {tuple(path)} runs past a leaf")
            i = node.children[node.actions.index(action)]
        return i

    def to_dict(self) -> dict[str, Any]:
        nodes = []
        for node in self.nodes:
            if isinstance(node, Leaf):
                nodes.append({"kind": "leaf", "label": node.label, "payoffs": [_num_out(v) for v in node.payoffs]})
            elif isinstance(node, Chance):
                nodes.append({
                    "kind": "chance",
                    "actions": list(node.actions),
                    "probs": [_num_out(q) for q in node.probs],
                    "children": list(node.children),
                })
            else:
                nodes.append({
                    "kind": "decision",
                    "player": node.player,
                    "infoset": node.infoset,
                    "actions": list(node.actions),
                    "children": list(node.children),
                })
        return {
            "players": list(self.players),
            "root": 0,
            "nodes": nodes,
            "information_sets": [
                {"id": s.id, "player": s.player, "nodes": list(s.nodes)} for s in self.infosets.values()
            ],
        }

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> GameTree:
        nodes: list[Node] = []
        for raw in data["nodes"]:
            kind = raw["kind"]
            if kind == "leaf":
                nodes.append(Leaf(tuple(_num_in(v) for v in raw["payoffs"]), raw.get("label", "")))
            elif kind == "chance":
                nodes.append(Chance(tuple(raw["actions"]), tuple(_num_in(q) for q in raw["probs"]), tuple(raw["children"])))
            elif kind == "decision":
                nodes.append(Decision(raw["player"], raw["infoset"], tuple(raw["actions"]), tuple(raw["children"])))
            else:
                raise GameError(f"unknown node kind {kind!r}")
        tree = cls(tuple(data["players"]), tuple(nodes))
        for entry in data.get("information_sets", []):
            if tuple(entry["nodes"]) != tree.infosets[entry["id"]].nodes:
                raise GameError(f"information set {entry['id']!r} does not match node labels")
        return tree

    @classmethod
    def from_json(cls, text: str) -> GameTree:
        return cls.from_dict(json.loads(text))


def _num_out(v: Number) -> float | int | str:
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else int(v)
    return v


def _num_in(v: Any) -> Number:
    return Fraction(v) if isinstance(v, str) else v


class TreeBuilder:
    """Assemble a tree top-down with nested calls.

    >>> b = TreeBuilder(("A", "B"))
    >>> tree = b.build(b.decision("A", "A0", {"L": b.leaf((1, 0)), "R": b.leaf((0, 1))}))
    """

    def __init__(self, players: Sequence[str]):
        self.players = tuple(players)

    def leaf(self, payoffs: Sequence[Number], label: str = "") -> tuple:
        return ("leaf", tuple(payoffs), label)

    def decision(self, player: str, infoset: str, branches: Mapping[str, tuple]) -> tuple:
        return ("decision", player, infoset, tuple(branches.items()))

    def chance(self, branches: Mapping[str, tuple[Number, tuple]]) -> tuple:
        return ("chance", tuple((a, q, sub) for a, (q, sub) in branches.items()))

    def build(self, root: tuple) -> GameTree:
        nodes: list[Node | None] = []

        def emit(spec: tuple) -> int:
            idx = len(nodes)
            nodes.append(None)
            kind = spec[0]
            if kind == "leaf":
                nodes[idx] = Leaf(spec[1], spec[2])
            elif kind == "decision":
                _, player, infoset, items = spec
                children = tuple(emit(sub) for _, sub in items)
                nodes[idx] = Decision(player, infoset, tuple(a for a, _ in items), children)
            else:
                items = spec[1]
                children = tuple(emit(sub) for _, _, sub in items)
                nodes[idx] = Chance(tuple(a for a, _, _ in items), tuple(q for _, q, _ in items), children)
            return idx

        emit(root)
        return GameTree(self.players, tuple(nodes))


# A behavior strategy maps information-set id -> action -> probability.
BehaviorStrategy = Mapping[str, Mapping[str, Number]]


@dataclass(frozen=True)
class StrategyProfile:
    """One behavior strategy per player."""

    strategies: Mapping[str, BehaviorStrategy]

    def with_strategy(self, player: str, strategy: BehaviorStrategy) -> StrategyProfile:
        merged = dict(self.strategies)
        merged[player] = strategy
        return StrategyProfile(merged)

    def distribution(self, tree: GameTree, infoset: str) -> Mapping[str, Number]:
        owner = tree.infosets[infoset].player
        try:
            return self.strategies[owner][infoset]
        except KeyError:
            raise CoverageError(f"profile does not cover information set {infoset!r} of player {owner!r}") from None


def validate_profile(tree: GameTree, profile: StrategyProfile, players: Sequence[str] | None = None) -> None:
    """Raise unless ``profile`` gives a valid distribution at every relevant set."""
    for s in tree.infosets.values():
        if players is not None and s.player not in players:
            continue
        dist = profile.distribution(tree, s.id)
        if set(dist) != set(s.actions):
            raise StrategyValidationError(
                f"information set {s.id!r}: actions {sorted(dist)} do not match {sorted(s.actions)}"
            )
        if any(q < 0 for q in dist.values()):
            raise StrategyValidationError(f"information set {s.id!r} has a negative probability")
        total = sum(dist.values())
        if abs(total - 1) > PROB_TOL:
            raise StrategyValidationError(f"information set {s.id!r} probabilities sum to {total}")


def leaf_probabilities(tree: GameTree, profile: StrategyProfile) -> dict[int, Number]:
    """Probability of reaching each leaf under ``profile``."""
    validate_profile(tree, profile)
    out: dict[int, Number] = {}
    stack: list[tuple[int, Number]] = [(0, 1)]
    while stack:
        i, reach = stack.pop()
        node = tree.nodes[i]
        if isinstance(node, Leaf):
            out[i] = reach
            continue
        if isinstance(node, Chance):
            probs = node.probs
        else:
            dist = profile.distribution(tree, node.infoset)
            probs = tuple(dist[a] for a in node.actions)
        for child, q in zip(node.children, probs):
            stack.append((child, reach * q))
    return dict(sorted(out.items()))


def expected_utilities(tree: GameTree, profile: StrategyProfile) -> tuple[Number, ...]:
    """Expected payoff of every player, in ``tree.players`` order."""
    totals: list[Number] = [0] * len(tree.players)
    for i, reach in leaf_probabilities(tree, profile).items():
        payoffs = tree.nodes[i].payoffs
        for k, v in enumerate(payoffs):
            totals[k] += reach * v
    return tuple(totals)


@dataclass(frozen=True)
class BackwardInductionResult:
    profile: StrategyProfile
    payoffs: tuple[Number, ...]
    ties: tuple[tuple[str, tuple[str, ...]], ...] = ()


def backward_induction(tree: GameTree) -> BackwardInductionResult:
    """Subgame-perfect pure profile of a perfect-information tree.

    Chance nodes are averaged.  On exact ties the first-listed action is kept
    and the tie is recorded as ``(infoset, tied_actions)``.
    """
    if not tree.is_perfect_information():
        bad = [s.id for s in tree.infosets.values() if len(s.nodes) > 1]
        raise PerfectInformationError(f"non-singleton information sets: {bad}")

    choice: dict[str, dict[str, dict[str, int]]] = {p: {} for p in tree.players}
    ties: list[tuple[str, tuple[str, ...]]] = []

    def solve(i: int) -> tuple[Number, ...]:
        node = tree.nodes[i]
        if isinstance(node, Leaf):
            return node.payoffs
        values = [solve(c) for c in node.children]
        if isinstance(node, Chance):
            return tuple(sum(q * v[k] for q, v in zip(node.probs, values)) for k in range(len(tree.players)))
        k = tree.players.index(node.player)
        best = max(v[k] for v in values)
        tied = [a for a, v in zip(node.actions, values) if v[k] == best]
        if len(tied) > 1:
            ties.append((node.infoset, tuple(tied)))
        pick = node.actions.index(tied[0])
        choice[node.player][node.infoset] = {a: int(j == pick) for j, a in enumerate(node.actions)}
        return values[pick]

    payoffs = solve(0)
    return BackwardInductionResult(StrategyProfile(choice), tuple(payoffs), tuple(ties))


def enumerate_pure_strategies(tree: GameTree, player: str) -> list[dict[str, dict[str, int]]]:
    """All pure strategies of ``player``; the last information set varies fastest."""
    sets = tree.player_infosets(player)
    out = []
    for picks in itertools.product(*(s.actions for s in sets)):
        out.append({s.id: {a: int(a == pick) for a in s.actions} for s, pick in zip(sets, picks)})
    return out


@dataclass(frozen=True)
class BestResponse:
    strategy: dict[str, dict[str, int]]
    value: Number
    tied: int = 0  # how many other pure strategies reach the same value


def best_response(tree: GameTree, profile: StrategyProfile, player: str, tol: float = PROB_TOL) -> BestResponse:
    """Exhaustive pure best response of ``player`` against the rest of ``profile``."""
    k = tree.players.index(player)
    others = [p for p in tree.players if p != player]
    validate_profile(tree, profile, others)
    scored = []
    for pure in enumerate_pure_strategies(tree, player):
        value = expected_utilities(tree, profile.with_strategy(player, pure))[k]
        scored.append((pure, value))
    best_value = max(v for _, v in scored)
    winners = [(s, v) for s, v in scored if best_value - v <= tol]
    strategy, value = winners[0]
    return BestResponse(strategy, value, len(winners) - 1)


@dataclass(frozen=True)
class RegretAudit:
    values: dict[str, Number]
    best_values: dict[str, Number]
    best_responses: dict[str, BestResponse]

    @property
    def regrets(self) -> dict[str, Number]:
        return {p: self.best_values[p] - self.values[p] for p in self.values}

    @property
    def max_regret(self) -> Number:
        return max(self.regrets.values(), default=0)

    def is_epsilon_nash(self, eps: float) -> bool:
        return self.max_regret <= eps


def regret_audit(tree: GameTree, profile: StrategyProfile) -> RegretAudit:
    """Per-player gain from deviating to a best response."""
    current = expected_utilities(tree, profile)
    values, best, responses = {}, {}, {}
    for k, player in enumerate(tree.players):
        br = best_response(tree, profile, player)
        values[player] = current[k]
        best[player] = br.value
        responses[player] = br
    return RegretAudit(values, best, responses)
