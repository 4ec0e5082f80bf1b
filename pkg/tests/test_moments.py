"""Discriminator classes and exact payoff arithmetic."""

import numpy as np
import pytest

from momentmatch.mdp import random_mdp, random_policy, uniform_policy
from momentmatch.moments import (
    ClassKind,
    Discriminator,
    FunctionClass,
    GameSpec,
    PayoffKind,
    best_response_discriminator,
    causal_entropy,
    induce_expert_q_class,
    induce_q_class,
    make_game,
    make_mixed_class,
    make_reward_class,
    payoff,
    recoverability_H,
    vertex_discriminator,
    vertex_payoffs,
)
from momentmatch.worlds import (
    build_cliff,
    build_unicycle,
    cliff_cost,
    cliff_drop_policy,
)


def _reward_game(seed=0, kind=PayoffKind.U1_REWARD):
    mdp = random_mdp(4, 3, 5, seed)
    expert = random_policy(mdp, seed + 1)
    fc = make_reward_class(mdp, [mdp.reward, np.ones((4, 3)) * 0.5])
    return make_game(kind, mdp, expert, fc), mdp


def test_function_class_validation():
    basis = np.ones((1, 3, 2, 2))
    FunctionClass(basis, 1.0, ClassKind.REWARD, 2.0)
    with pytest.raises(ValueError):
        FunctionClass(basis[0], 1.0, ClassKind.REWARD, 2.0)  # not 4-d
    with pytest.raises(ValueError):
        FunctionClass(basis, 0.5, ClassKind.REWARD, 2.0)  # exceeds bound
    with pytest.raises(ValueError):
        FunctionClass(basis, 1.0, ClassKind.REWARD, -1.0)  # bad scale


def test_vertices_and_combination():
    basis = np.stack([np.full((3, 2, 2), 1.0), np.full((3, 2, 2), -0.5)])
    fc = FunctionClass(basis, 1.0, ClassKind.REWARD, 2.0)
    assert fc.n_vertices == 4
    np.testing.assert_allclose(fc.vertex_table(0), basis[0])
    np.testing.assert_allclose(fc.vertex_table(3), -basis[1])
    # combining the two signs of the same element cancels exactly
    np.testing.assert_allclose(
        fc.combine(np.array([0.5, 0.0, 0.5, 0.0])), 0.0, atol=1e-15)
    with pytest.raises(ValueError):
        fc.vertex_table(4)


def test_discriminator_must_be_distribution():
    with pytest.raises(ValueError):
        Discriminator(np.array([0.5, 0.4]))
    with pytest.raises(ValueError):
        Discriminator(np.array([1.5, -0.5]))


def test_payoff_affine_in_weights():
    game, mdp = _reward_game(3)
    pi = random_policy(mdp, 7)
    rng = np.random.default_rng(0)
    w1 = rng.dirichlet(np.ones(game.function_class.n_vertices))
    w2 = rng.dirichlet(np.ones(game.function_class.n_vertices))
    lam = 0.3
    mix = Discriminator(lam * w1 + (1 - lam) * w2)
    expect = (lam * payoff(game, pi, Discriminator(w1))
              + (1 - lam) * payoff(game, pi, Discriminator(w2)))
    assert payoff(game, pi, mix) == pytest.approx(expect, abs=1e-12)


def test_vertex_payoffs_negation_symmetry_and_argmax():
    game, mdp = _reward_game(4)
    pi = random_policy(mdp, 9)
    vals = vertex_payoffs(game, pi)
    m = game.function_class.n_basis
    np.testing.assert_allclose(vals[m:], -vals[:m], atol=1e-15)
    f_hat, sup = best_response_discriminator(game, pi)
    assert sup == pytest.approx(float(vals.max()), abs=1e-15)
    assert payoff(game, pi, f_hat) == pytest.approx(sup, abs=1e-12)
    assert sup >= 0.0  # symmetric classes make the sup nonnegative


def test_payoff_respects_scale_bound():
    for kind in (PayoffKind.U1_REWARD, PayoffKind.U2_OFFQ):
        game, mdp = _reward_game(5, kind)
        for s in range(5):
            pi = random_policy(mdp, 20 + s)
            sup = float(vertex_payoffs(game, pi).max())
            assert sup <= game.payoff_scale_k + 1e-12


def test_payoff_zero_at_expert():
    # every payoff kind vanishes when the learner equals the expert
    mdp = random_mdp(4, 3, 5, 11)
    expert = random_policy(mdp, 12)
    rc = make_reward_class(mdp)
    for kind, fc in [
        (PayoffKind.U1_REWARD, rc),
        (PayoffKind.U2_OFFQ, induce_q_class(mdp, rc, [expert, uniform_policy(mdp)])),
        (PayoffKind.U3_ONQ, induce_expert_q_class(mdp, expert, rc)),
        (PayoffKind.U4_MIXED, make_mixed_class(mdp, rc, [expert])),
    ]:
        game = make_game(kind, mdp, expert, fc)
        assert float(np.abs(vertex_payoffs(game, expert)).max()) <= 1e-12


def test_expert_state_payoff_hand_example():
    # drop policy on the cliff: the expert only sees state s0 at t=0, where
    # the action conditionals differ by p on the drop action (cost 1)
    T, p = 6, 0.25
    mdp, expert = build_cliff(T)
    cost = cliff_cost(T)
    fc = FunctionClass(np.broadcast_to(cost, (T,) + cost.shape)[None].copy(),
                       2.0, ClassKind.REWARD, 1.0, "raw")
    game = make_game(PayoffKind.U2_OFFQ, mdp, expert, fc)
    learner = cliff_drop_policy(mdp, p)
    _, sup = best_response_discriminator(game, learner)
    assert sup * T == pytest.approx(p, abs=1e-12)


def test_recoverability_hand_example():
    # two-state fall world: the expert needs T-1-t steps to absorb a fall,
    # so the worst expert-Q advantage at t=0 is T-1
    T = 5
    mdp, expert = build_unicycle(T)
    rc = make_reward_class(mdp)
    eq = induce_expert_q_class(mdp, expert, rc)
    assert recoverability_H(expert, eq) == pytest.approx(T - 1.0, abs=1e-12)
    with pytest.raises(ValueError):
        recoverability_H(expert, rc)  # wrong class kind


def test_u3_payoff_scale_uses_recoverability():
    mdp, expert = build_unicycle(5)
    eq = induce_expert_q_class(mdp, expert, make_reward_class(mdp))
    game = make_game(PayoffKind.U3_ONQ, mdp, expert, eq)
    h = recoverability_H(expert, eq)
    assert game.payoff_scale_k == pytest.approx(h / (2.0 * mdp.horizon))


def test_game_spec_validation():
    mdp = random_mdp(3, 2, 4, 30)
    expert = random_policy(mdp, 31)
    fc = make_reward_class(mdp)
    with pytest.raises(ValueError):
        GameSpec(PayoffKind.U1_REWARD, mdp, expert, fc, 0.0)
    other = random_policy(random_mdp(3, 2, 5, 30), 0)
    with pytest.raises(ValueError):
        GameSpec(PayoffKind.U1_REWARD, mdp, other, fc, 1.0)


def test_causal_entropy_uniform():
    mdp = random_mdp(4, 3, 6, 40)
    assert causal_entropy(mdp, uniform_policy(mdp)) == pytest.approx(
        6 * np.log(3), abs=1e-12)


def test_class_round_trip():
    game, _ = _reward_game(50)
    fc = game.function_class
    back = FunctionClass.from_dict(fc.to_dict())
    np.testing.assert_allclose(back.basis, fc.basis)
    assert back.kind == fc.kind and back.scale == fc.scale
    d = vertex_discriminator(fc, 1)
    back_d = Discriminator.from_dict(d.to_dict())
    np.testing.assert_allclose(back_d.weights, d.weights)
