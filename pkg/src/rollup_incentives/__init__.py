"""Incentive analysis of the optimistic-rollup aggregator/validator game."""

from .equilibria import (
    EquilibriumPoint,
    combined_h,
    indifference_g,
    indifference_h,
    numeric_cross_check,
    random_check_threshold,
    solve_point,
    transactor_min_utility,
    viability_b_lower,
)
from .game_engine import (
    GameTree,
    StrategyProfile,
    backward_induction,
    best_response,
    enumerate_pure_strategies,
    expected_utilities,
    regret_audit,
)
from .montecarlo import SimulationReport, convergence_check, simulate_game2, simulate_game3
from .rollup_games import (
    MixPoint,
    ProtocolParams,
    aggregator_utility,
    build_game1,
    build_game2,
    build_game2_easter,
    build_game3,
    transactor_utility,
    validator_utility,
)

__version__ = "0.1.0"
