"""Practical learners: cloning, adversarial trainers, interactive baselines."""

import numpy as np
import pytest

from momentmatch import algorithms as alg
from momentmatch.mdp import (
    Trajectory,
    policy_value,
    random_mdp,
    random_policy,
)
from momentmatch.moments import PayoffKind
from momentmatch.bounds import build_game
from momentmatch.worlds import (
    build_cliff,
    build_forest_grid,
    build_loop,
    forest_swerve_class,
    mean_action_policy,
)


def test_dataset_validation():
    mdp, expert = build_loop(4)
    data = alg.expert_dataset(mdp, expert, 0, 5)
    assert len(data.trajectories) == 5
    assert data.counts().sum() == pytest.approx(5 * 4)
    with pytest.raises(ValueError):
        alg.ExpertDataset((), mdp)
    with pytest.raises(ValueError):
        alg.ExpertDataset((Trajectory(((0, 0),)),), mdp)  # wrong length
    with pytest.raises(ValueError):
        alg.ExpertDataset((Trajectory(((9, 0), (0, 0), (0, 0), (0, 0))),), mdp)


def test_behavioral_cloning_recovers_deterministic_expert():
    mdp, expert = build_cliff(6)
    data = alg.expert_dataset(mdp, expert, 0, 10)
    pi = alg.behavioral_cloning(data)
    # visited (t, s): exact expert action; unvisited: uniform
    counts = data.counts()
    visited = counts.sum(axis=2) > 0
    np.testing.assert_allclose(pi.probs[visited], expert.probs[visited], atol=1e-12)
    np.testing.assert_allclose(pi.probs[~visited], 0.5, atol=1e-12)
    # smoothing keeps a floor on every action at visited states
    smoothed = alg.behavioral_cloning(data, pseudo_count=1.0)
    assert np.min(smoothed.probs[visited]) > 0.0


def test_advil_closes_most_of_the_gap():
    mdp, expert = build_loop(5)
    data = alg.expert_dataset(mdp, expert, 0, 20)
    pi, trace = alg.advil_train(data, alg.AdvilConfig())
    j_e = policy_value(mdp, expert)
    assert j_e - policy_value(mdp, pi) <= 0.1 * j_e
    assert trace[0]["objective"] == pytest.approx(0.0)  # f starts at zero
    with pytest.raises(ValueError):
        alg.AdvilConfig(eta_f=0.1, eta_pi=0.5)


def test_advil_telescoping_identity():
    rng = np.random.default_rng(5)
    for _ in range(5):
        mdp = random_mdp(4, 3, 6, int(rng.integers(2**31)))
        pi = random_policy(mdp, int(rng.integers(2**31)))
        ex = random_policy(mdp, int(rng.integers(2**31)))
        v = rng.normal(size=(4, 3))
        a = alg.advil_ipm_objective(mdp, pi, ex, v)
        b = alg.advil_offpolicy_objective(mdp, pi, ex, v)
        assert abs(a - b) <= 1e-10


def test_bellman_substituted_table_shape_check():
    mdp, expert = build_loop(4)
    with pytest.raises(ValueError):
        alg.bellman_substituted_table(mdp, expert, np.zeros((2, 2)))


def test_adril_cost_counts():
    mdp, expert = build_cliff(3)
    e_trajs = (Trajectory(((0, 0), (1, 0), (2, 0))),)
    l_trajs = [Trajectory(((0, 1), (3, 0), (3, 0)))]
    data = alg.ExpertDataset(e_trajs, mdp)
    cost = alg.adril_cost(mdp, l_trajs, data)
    assert cost[0, 0, 1] == pytest.approx(1.0)   # learner-only visit
    assert cost[0, 0, 0] == pytest.approx(-1.0)  # expert-only visit
    assert cost[1, 3, 0] == pytest.approx(1.0)
    balanced = alg.adril_cost(mdp, l_trajs, data, balanced=True)
    np.testing.assert_allclose(balanced, 0.5 * cost, atol=1e-15)


def test_adril_matches_expert_on_cliff():
    mdp, expert = build_cliff(8)
    data = alg.expert_dataset(mdp, expert, 0, 10)
    pi, trace, state = alg.adril_train(data, alg.AdrilConfig(seed=0))
    assert trace[-1]["objective"] <= 0.05
    assert policy_value(mdp, pi) >= policy_value(mdp, expert) - 0.1
    assert state.round == len(trace)
    with pytest.raises(ValueError):
        alg.AdrilConfig(alpha=0.0)


def test_adril_frozen_keeps_first_cost():
    mdp, expert = build_cliff(6)
    data = alg.expert_dataset(mdp, expert, 0, 10)
    cfg = alg.AdrilConfig(seed=0, delta=1e-12, max_rounds=4, f_update_freq=10**9)
    _, _, state = alg.adril_train(data, cfg)
    first = alg.adril_cost(mdp, state.aggregated_learner_data[:cfg.rollouts_per_round],
                           data)
    np.testing.assert_allclose(state.cost_table, first, atol=1e-15)


def test_dagger_learns_the_forest():
    mdp, expert = build_forest_grid(5, 12, [(4, 2), (8, 2)])
    qe = alg.QueryableExpert(expert)
    pi, trace = alg.dagger_train(mdp, qe, alg.DaggerConfig(seed=0))
    assert policy_value(mdp, pi) >= 11.0
    assert [row["round"] for row in trace] == list(range(5))
    assert trace[-1]["dataset_size"] == 50
    with pytest.raises(ValueError):
        alg.DaggerConfig(fit_mode="nearest")


def test_daequil_round_payoff_matches_manual_max():
    mdp, expert = build_forest_grid(5, 12, [(4, 2), (8, 2)])
    fc = forest_swerve_class(mdp)
    rng = np.random.default_rng(3)
    nl = rng.integers(0, 4, fc.basis.shape[1:]).astype(float) + 0.1
    ne = rng.integers(0, 4, fc.basis.shape[1:]).astype(float) + 0.1
    idx, val = alg.daequil_round_payoff(fc, nl, ne)
    diff = nl / nl.sum() - ne / ne.sum()
    manual = np.einsum("tsa,itsa->i", diff, fc.basis)
    manual = np.concatenate([manual, -manual])
    assert val == pytest.approx(float(manual.max()), abs=1e-12)
    assert idx == int(np.argmax(manual))


def test_daequil_reaches_full_forest_length():
    mdp, expert = build_forest_grid(5, 12, [(4, 2), (8, 2)])
    fc = forest_swerve_class(mdp)
    pi, trace = alg.daequil_train(mdp, alg.QueryableExpert(expert), fc,
                                  alg.DaequilConfig(seed=0))
    assert policy_value(mdp, pi) >= 12.0 - 1e-3
    assert {"round", "objective", "round_payoff", "moment_term", "value"} <= set(trace[0])
    with pytest.raises(ValueError):
        alg.DaequilConfig(bc_weight=-1.0)
