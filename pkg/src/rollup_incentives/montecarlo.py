"""Seeded simulation of independent protocol rounds.

Rounds are processed in fixed-size blocks.  Block ``k`` draws from a Philox
generator keyed by ``SeedSequence(seed, spawn_key=(k,))``, so the draws of a
round depend only on the seed and the round index, and results are identical
for any number of workers.  Each round consumes the same number of uniforms
whatever its outcome.

Payoff statistics are computed from the leaf histogram and the leaf payoff
table, which keeps means exact for degenerate mixes (a single reached leaf
gives that leaf's payoff and a zero standard error).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .game_engine import GameTree, Number
from .rollup_games import (
    CHALLENGE,
    CHECK,
    DISHONEST,
    HONEST,
    NO,
    NO_SEARCH,
    SEARCH,
    MixPoint,
    ParamsError,
    ProtocolParams,
    _game3,
    build_game2,
)

BLOCK_ROUNDS = 1 << 16
GENERATOR_ID = f"numpy.Philox/SeedSequence(seed, spawn_key=(block,))/block={BLOCK_ROUNDS}"
DEFAULT_K_SIGMA = 4.0


@dataclass(frozen=True)
class SimulationReport:
    game: str
    players: tuple[str, ...]
    rounds: int
    seed: int
    generator: str
    leaf_labels: tuple[str, ...]
    leaf_payoffs: tuple[tuple[float, ...], ...]
    leaf_counts: tuple[int, ...]
    means: tuple[float, ...]
    stderrs: tuple[float, ...]
    burned_stake: float

    def mean(self, player: str) -> float:
        return self.means[self.players.index(player)]

    def stderr(self, player: str) -> float:
        return self.stderrs[self.players.index(player)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "game": self.game,
            "players": list(self.players),
            "rounds": self.rounds,
            "seed": self.seed,
            "generator": self.generator,
            "leaves": [
                {"label": lab, "payoffs": list(pay), "count": n}
                for lab, pay, n in zip(self.leaf_labels, self.leaf_payoffs, self.leaf_counts)
            ],
            "means": dict(zip(self.players, self.means)),
            "stderrs": dict(zip(self.players, self.stderrs)),
            "burned_stake": self.burned_stake,
        }

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SimulationReport:
        players = tuple(d["players"])
        return cls(
            game=d["game"],
            players=players,
            rounds=d["rounds"],
            seed=d["seed"],
            generator=d["generator"],
            leaf_labels=tuple(leaf["label"] for leaf in d["leaves"]),
            leaf_payoffs=tuple(tuple(leaf["payoffs"]) for leaf in d["leaves"]),
            leaf_counts=tuple(leaf["count"] for leaf in d["leaves"]),
            means=tuple(d["means"][p] for p in players),
            stderrs=tuple(d["stderrs"][p] for p in players),
            burned_stake=d["burned_stake"],
        )


def _block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _run_blocks(
    rounds: int,
    seed: int,
    n_leaves: int,
    draws_per_round: int,
    classify: Callable[[np.ndarray], np.ndarray],
    workers: int,
) -> np.ndarray:
    n_blocks = -(-rounds // BLOCK_ROUNDS)

    def run(block: int) -> np.ndarray:
        size = min(BLOCK_ROUNDS, rounds - block * BLOCK_ROUNDS)
        u = _block_generator(seed, block).random((size, draws_per_round))
        return np.bincount(classify(u), minlength=n_leaves)

    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(k) for k in range(n_blocks)]
    # integer counts: summation order cannot matter
    return np.sum(parts, axis=0)


def _summarize(
    game: str,
    tree: GameTree,
    leaf_nodes: Sequence[int],
    counts: np.ndarray,
    rounds: int,
    seed: int,
    burned: float,
) -> SimulationReport:
    labels = tuple(tree.nodes[i].label for i in leaf_nodes)
    payoffs = tuple(tuple(float(v) for v in tree.nodes[i].payoffs) for i in leaf_nodes)
    counts_t = tuple(int(c) for c in counts)
    means, stderrs = [], []
    for k in range(len(tree.players)):
        mean = math.fsum((n / rounds) * pay[k] for n, pay in zip(counts_t, payoffs) if n)
        if rounds > 1:
            ss = math.fsum(n * (pay[k] - mean) ** 2 for n, pay in zip(counts_t, payoffs) if n)
            se = math.sqrt(ss / (rounds - 1)) / math.sqrt(rounds)
        else:
            se = 0.0
        means.append(mean)
        stderrs.append(se)
    return SimulationReport(
        game, tree.players, rounds, seed, GENERATOR_ID, labels, payoffs, counts_t, tuple(means), tuple(stderrs), burned
    )


def _check_rounds(rounds: int, seed: int) -> None:
    if rounds < 1:
        raise ParamsError(f"rounds must be >= 1, got {rounds}")
    if not 0 <= seed < 2**64:
        raise ParamsError("seed must be a 64-bit unsigned integer")


GAME2_PATHS = tuple(
    (side, a, v) for side in (NO_SEARCH, SEARCH) for a in (HONEST, DISHONEST) for v in (CHALLENGE, NO)
)


def simulate_game2(params: ProtocolParams, m: MixPoint, rounds: int, seed: int, workers: int = 1) -> SimulationReport:
    """Play ``rounds`` independent rounds of the search game under mix ``m``."""
    _check_rounds(rounds, seed)
    tree = build_game2(params)
    leaf_nodes = [tree.follow(path) for path in GAME2_PATHS]
    b, g, h = float(m.b), float(m.g), float(m.h)

    def classify(u: np.ndarray) -> np.ndarray:
        blind = u[:, 0] < b
        honest = u[:, 1] < h
        challenge = np.where(blind, u[:, 2] < g, ~honest)
        # index into GAME2_PATHS: side*4 + dishonest*2 + no_challenge
        return (~blind).astype(np.intp) * 4 + (~honest) * 2 + (~challenge)

    counts = _run_blocks(rounds, seed, len(GAME2_PATHS), 3, classify, workers)
    caught = sum(int(counts[GAME2_PATHS.index((side, DISHONEST, CHALLENGE))]) for side in (NO_SEARCH, SEARCH))
    burned = caught * (float(params.s_A) / 2)
    return _summarize("game2", tree, leaf_nodes, counts, rounds, seed, burned)


GAME3_PATHS = tuple((a, c) for a in (HONEST, DISHONEST) for c in (CHECK, NO))


def simulate_game3(
    params: ProtocolParams, honest_prob: Number, rounds: int, seed: int, workers: int = 1
) -> SimulationReport:
    """Aggregator against a contract checking with probability ``params.p``."""
    _check_rounds(rounds, seed)
    if params.p is None:
        raise ParamsError("random-check simulation needs p")
    if not 0 <= honest_prob <= 1:
        raise ParamsError(f"honest_prob must lie in [0, 1], got {honest_prob}")
    tree = _game3(params, params.p)
    leaf_nodes = [tree.follow(path) for path in GAME3_PATHS]
    h, p = float(honest_prob), float(params.p)

    def classify(u: np.ndarray) -> np.ndarray:
        honest = u[:, 0] < h
        check = u[:, 1] < p
        return (~honest).astype(np.intp) * 2 + (~check)

    counts = _run_blocks(rounds, seed, len(GAME3_PATHS), 2, classify, workers)
    # the contract slashes the whole stake; none of it reaches a player
    burned = int(counts[GAME3_PATHS.index((DISHONEST, CHECK))]) * float(params.s_A)
    return _summarize("game3", tree, leaf_nodes, counts, rounds, seed, burned)


def game2_leaf_probabilities(m: MixPoint) -> tuple[float, ...]:
    """Analytic reach probability of each leaf, in ``GAME2_PATHS`` order."""
    b, g, h = float(m.b), float(m.g), float(m.h)
    out = []
    for side, a, v in GAME2_PATHS:
        q = b if side == NO_SEARCH else 1 - b
        q *= h if a == HONEST else 1 - h
        if side == NO_SEARCH:
            q *= g if v == CHALLENGE else 1 - g
        else:
            q *= float((v == CHALLENGE) == (a == DISHONEST))
        out.append(q)
    return tuple(out)


@dataclass(frozen=True)
class Convergence:
    player: str
    passed: bool
    deviation: float
    stderr: float
    exact_mismatch: bool = False


def convergence_check(
    report: SimulationReport, analytic: Sequence[Number], k_sigma: float = DEFAULT_K_SIGMA
) -> list[Convergence]:
    """Per-player test of ``|mean - analytic| <= k_sigma * stderr``."""
    if report.rounds < 100:
        raise ParamsError(f"convergence check needs at least 100 rounds, got {report.rounds}")
    if len(analytic) != len(report.players):
        raise ParamsError("analytic payoff vector length does not match players")
    out = []
    for player, mean, se, target in zip(report.players, report.means, report.stderrs, analytic):
        dev = abs(mean - float(target))
        if se == 0:
            ok = dev <= 1e-12 * max(1.0, abs(float(target)))
            out.append(Convergence(player, ok, dev, se, exact_mismatch=not ok))
        else:
            out.append(Convergence(player, dev <= k_sigma * se, dev, se))
    return out
