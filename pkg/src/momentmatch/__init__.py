"""Tabular imitation-learning games, solvers, and bound verification."""

from .mdp import (
    OccupancyMeasure,
    TabularMdp,
    TimedPolicy,
    Trajectory,
    ValueTables,
    occupancy,
    pdl_residual,
    policy_value,
    q_values,
    rollout,
)
from .moments import (
    Discriminator,
    FunctionClass,
    GameSpec,
    PayoffKind,
    best_response_discriminator,
    induce_expert_q_class,
    induce_q_class,
    make_game,
    make_reward_class,
    payoff,
    recoverability_H,
)
from .equilibrium import (
    EquilibriumResult,
    SolverConfig,
    SolverMode,
    best_response_policy,
    check_equilibrium,
    entropy_lemma_check,
    soft_value_iteration,
    solve_dual,
    solve_primal,
)

__version__ = "0.1.0"
