"""Equilibrium solvers for the moment-matching games.

Two routes to a certified policy: a primal loop (no-regret policy player
vs. exact best-response discriminator) and a dual loop (Hedge over the
discriminator vertices vs. entropy-regularized best-response policies).
Certificates are always established by an exact final best-response
evaluation, never trusted from the optimization trace.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .mdp import TabularMdp, TimedPolicy, per_step_table, uniform_policy
from .moments import (
    Discriminator,
    GameSpec,
    PayoffKind,
    best_response_discriminator,
    causal_entropy,
    payoff,
    vertex_payoffs,
)


class SolverMode(enum.Enum):
    PRIMAL = "primal"
    DUAL = "dual"


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for both solver modes; None rates resolve to schedule defaults."""

    mode: SolverMode
    target_delta: float
    max_outer_iters: int = 2000
    alpha: float | None = None
    hedge_rate: float | None = None
    pmd_rate: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.target_delta <= 0:
            raise ValueError("target_delta must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.hedge_rate is not None and self.hedge_rate <= 0:
            raise ValueError("hedge_rate must be positive")
        if self.pmd_rate <= 0:
            raise ValueError("pmd_rate must be positive")


@dataclass(frozen=True)
class EquilibriumResult:
    policy: TimedPolicy
    discriminator: Discriminator
    certified_sup: float
    trace: tuple
    certified: bool
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "certified_sup": self.certified_sup,
            "certified": self.certified,
            "info": self.info,
            "trace": list(self.trace),
        }


def default_alpha(game: GameSpec, delta: float) -> float:
    """Entropy weight schedule delta / (2T (ln|A| + ln|S|))."""
    mdp = game.mdp
    return delta / (2.0 * mdp.horizon * (np.log(mdp.n_actions) + np.log(mdp.n_states)))


def q_magnitude(game: GameSpec) -> float:
    """Spread bound on the scaled class values: 2 * range_bound / scale."""
    fc = game.function_class
    return 2.0 * fc.range_bound / fc.scale


def _soft_tables(mdp: TabularMdp, cost_table, alpha: float):
    """Backward log-sum-exp recursion; returns (policy probs, q, v)."""
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    g = per_step_table(mdp, cost_table)
    q = np.zeros((T, S, A))
    v = np.zeros((T, S))
    probs = np.zeros((T, S, A))
    v_next = np.zeros(S)
    for t in range(T - 1, -1, -1):
        q[t] = -g[t] + mdp.transition @ v_next
        m = q[t].max(axis=1, keepdims=True)
        v[t] = (m + alpha * np.log(
            np.exp((q[t] - m) / alpha).sum(axis=1, keepdims=True)
        )).ravel()
        probs[t] = np.exp((q[t] - v[t][:, None]) / alpha)
        probs[t] /= probs[t].sum(axis=1, keepdims=True)
        v_next = v[t]
    return probs, q, v


def soft_value_iteration(mdp: TabularMdp, cost_table, alpha: float) -> TimedPolicy:
    """Entropy-regularized control: maximizes E[-cost] + alpha * H(pi).

    v[t][s] = alpha * logsumexp((-cost + P v[t+1]) / alpha), policy
    proportional to exp(advantage / alpha); log-sum-exp is max-guarded.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    probs, _, _ = _soft_tables(mdp, cost_table, alpha)
    return TimedPolicy(probs)


def soft_value_tables(mdp: TabularMdp, cost_table, alpha: float):
    """Soft (q, v) tables alongside the policy, for consistency checks."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    probs, q, v = _soft_tables(mdp, cost_table, alpha)
    return TimedPolicy(probs), q, v


def _effective_cost(game: GameSpec, discriminator: Discriminator) -> np.ndarray:
    """Per-step cost whose occupancy average reproduces the payoff (x 1/T).

    For the expert-advantage payoffs the expert-conditional mean is
    subtracted so the cost is exactly the advantage term being matched.
    """
    fc = game.function_class
    f_eff = fc.combine(discriminator.weights) / fc.scale
    if game.payoff_kind in (PayoffKind.U1_REWARD, PayoffKind.U4_MIXED):
        return f_eff
    mean = np.einsum("tsa,tsa->ts", f_eff, game.expert.probs)
    return f_eff - mean[:, :, None]


def best_response_policy(game: GameSpec, discriminator: Discriminator,
                         alpha: float) -> TimedPolicy:
    """argmin over policies of payoff(pi, f) - alpha * H(pi).

    The trajectory-coupled payoffs reduce to soft value iteration on the
    effective cost with entropy weight alpha * T (the payoff carries a
    1/T normalization); the expert-state payoff decouples per (t, s) into
    a closed-form softmin with the same temperature.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if game.payoff_kind == PayoffKind.U4_MIXED:
        raise ValueError("mixed payoff is evaluation-only; no best response")
    cost = _effective_cost(game, discriminator)
    temp = alpha * game.mdp.horizon
    if game.payoff_kind == PayoffKind.U2_OFFQ:
        logits = -cost / temp
        logits -= logits.max(axis=2, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=2, keepdims=True)
        return TimedPolicy(probs)
    return soft_value_iteration(game.mdp, cost, temp)


def _result(game, cfg, policy, trace, info) -> EquilibriumResult:
    f_hat, sup = best_response_discriminator(game, policy)
    threshold = cfg.target_delta * game.payoff_scale_k
    return EquilibriumResult(
        policy=policy,
        discriminator=f_hat,
        certified_sup=sup,
        trace=tuple(trace),
        certified=bool(sup <= threshold),
        info=dict(info, threshold=threshold),
    )


def solve_primal(game: GameSpec, config: SolverConfig) -> EquilibriumResult:
    """Entropic mirror descent on the policy vs. exact vertex best responses.

    Returns the iterate with the smallest exact sup-payoff; the returned
    certificate is re-established by a final best-response evaluation.
    """
    if config.mode != SolverMode.PRIMAL:
        raise ValueError("config.mode must be PRIMAL")
    mdp = game.mdp
    threshold = config.target_delta * game.payoff_scale_k
    pi = uniform_policy(mdp)
    best_sup, best_pi = np.inf, pi
    trace = []
    from .mdp import q_values

    for it in range(config.max_outer_iters):
        f_t, sup = best_response_discriminator(game, pi)
        if sup < best_sup:
            best_sup, best_pi = sup, pi
        trace.append({
            "iter": it,
            "payoff": sup,
            "sup_payoff": sup,
            "entropy": causal_entropy(mdp, pi),
            "regret_avg": best_sup,
        })
        if best_sup <= threshold:
            break
        cost = _effective_cost(game, f_t)
        if game.payoff_kind == PayoffKind.U2_OFFQ:
            grad = cost
        else:
            grad = q_values(mdp, pi, cost).q
        logits = np.log(np.clip(pi.probs, 1e-300, None)) - config.pmd_rate * grad
        logits -= logits.max(axis=2, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=2, keepdims=True)
        pi = TimedPolicy(probs)
    return _result(game, config, best_pi, trace,
                   {"mode": "primal", "iters": len(trace)})


def solve_dual(game: GameSpec, config: SolverConfig) -> EquilibriumResult:
    """Hedge over discriminator vertices vs. entropy-regularized responses.

    The candidate policy is the regularized best response to the averaged
    discriminator; the best single-round response is kept as a fallback
    when it certifies earlier.
    """
    if config.mode != SolverMode.DUAL:
        raise ValueError("config.mode must be DUAL")
    mdp, fc = game.mdp, game.function_class
    threshold = config.target_delta * game.payoff_scale_k
    alpha = config.alpha if config.alpha is not None else default_alpha(game, config.target_delta)
    n_v = fc.n_vertices
    q_m = q_magnitude(game)
    rate = config.hedge_rate
    if rate is None:
        rate = np.sqrt(8.0 * np.log(n_v) / config.max_outer_iters) / max(
            2.0 * game.payoff_scale_k, 1e-12)
    w = np.full(n_v, 1.0 / n_v)
    w_sum = np.zeros(n_v)
    cum_played = 0.0
    cum_vertex = np.zeros(n_v)
    best_sup, best_pi = np.inf, None
    trace = []
    for it in range(config.max_outer_iters):
        f_t = Discriminator(w, fc.name)
        pi_t = best_response_policy(game, f_t, alpha)
        u = vertex_payoffs(game, pi_t)
        w_sum += w
        cum_played += float(w @ u)
        cum_vertex += u
        sup = float(u.max())
        if sup < best_sup:
            best_sup, best_pi = sup, pi_t
        trace.append({
            "iter": it,
            "payoff": float(w @ u),
            "sup_payoff": sup,
            "entropy": causal_entropy(mdp, pi_t),
            "regret_avg": float((cum_vertex.max() - cum_played) / (it + 1)),
        })
        if best_sup <= threshold:
            break
        logw = np.log(w) + rate * u
        logw -= logw.max()
        w = np.exp(logw)
        w /= w.sum()
    f_bar = Discriminator(w_sum / w_sum.sum(), fc.name)
    pi_hat = best_response_policy(game, f_bar, alpha)
    _, sup_hat = best_response_discriminator(game, pi_hat)
    if best_sup < sup_hat:
        pi_hat = best_pi
    delta_prime = config.target_delta**2 * alpha / (32.0 * q_m**2)
    info = {
        "mode": "dual",
        "iters": len(trace),
        "alpha": alpha,
        "hedge_rate": rate,
        "q_magnitude": q_m,
        "delta_prime": delta_prime,
        "f_bar_weights": f_bar.weights.tolist(),
    }
    return _result(game, config, pi_hat, trace, info)


def solve(game: GameSpec, config: SolverConfig) -> EquilibriumResult:
    if config.mode == SolverMode.PRIMAL:
        return solve_primal(game, config)
    return solve_dual(game, config)


def check_equilibrium(game: GameSpec, policy: TimedPolicy,
                      discriminator: Discriminator, delta: float) -> dict:
    """Both approximate-equilibrium inequalities, with slacks.

    The discriminator side (sup over f) is exact; the policy side (inf
    over pi) is approximated by a nearly-unregularized best response and
    labeled accordingly.
    """
    _, sup = best_response_discriminator(game, policy)
    val = payoff(game, policy, discriminator)
    pi_inf = best_response_policy(game, discriminator, 1e-6)
    inf_val = payoff(game, pi_inf, discriminator)
    f_slack = val - (sup - delta / 2.0)
    pi_slack = (inf_val + delta / 2.0) - val
    return {
        "sup_payoff": sup,
        "payoff": val,
        "inf_payoff_approx": inf_val,
        "f_side_slack": f_slack,
        "policy_side_slack": pi_slack,
        "is_delta_equilibrium": bool(f_slack >= -1e-9 and pi_slack >= -1e-9),
        "inf_is_approximate": True,
    }


def _regularized_objective(game: GameSpec, policy: TimedPolicy, alpha: float) -> float:
    """M(pi) = sup_f payoff - alpha * H(pi), up to the constant offset."""
    sup = float(vertex_payoffs(game, policy).max())
    return sup - alpha * causal_entropy(game.mdp, policy)


def _grid_search_regularized(game: GameSpec, alpha: float,
                             resolution: float = 1e-2,
                             points: int = 9, stages: int = 4) -> TimedPolicy:
    """Coarse-to-fine grid search for the regularized-game minimizer.

    Only feasible for 2-action games with horizon * states <= 6 free
    parameters; each parameter is the probability of action 0 at (t, s).
    """
    mdp = game.mdp
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    if A != 2 or T * S > 6:
        raise ResourceWarning("grid search supports only tiny 2-action games")
    n = T * S

    def to_policy(p):
        probs = np.stack([p.reshape(T, S), 1.0 - p.reshape(T, S)], axis=2)
        return TimedPolicy(np.clip(probs, 0.0, 1.0) /
                           np.clip(probs, 0.0, 1.0).sum(axis=2, keepdims=True))

    center = np.full(n, 0.5)
    half = 0.5
    best_p, best_val = center, np.inf
    while True:
        axes = [np.clip(np.linspace(c - half, c + half, points), 1e-9, 1 - 1e-9)
                for c in center]
        for combo in itertools.product(*axes):
            p = np.array(combo)
            val = _regularized_objective(game, to_policy(p), alpha)
            # ties (flat, e.g. unvisited coordinates) break toward uniform,
            # the limit of the regularized optimum under any perturbation
            if val < best_val - 1e-12 or (
                val <= best_val + 1e-12
                and np.abs(p - 0.5).sum() < np.abs(best_p - 0.5).sum() - 1e-15
            ):
                best_val, best_p = val, p
        step = 2 * half / (points - 1)
        if step <= resolution and stages <= 0:
            break
        stages -= 1
        if stages < 0:
            break
        center = best_p
        half = step
    return to_policy(best_p)


def entropy_lemma_check(game: GameSpec, alpha: float, delta_prime: float,
                        max_iters: int = 4000) -> dict:
    """Compare the solver's policy to the brute-forced regularized optimum.

    Checks the L1-distance bound sqrt(2 delta'/alpha) and the payoff bound
    Q_M sqrt(2 delta'/alpha) + alpha T (ln|A| + ln|S|) on a tiny game.
    """
    if alpha <= 0 or delta_prime <= 0:
        raise ValueError("alpha and delta_prime must be positive")
    mdp = game.mdp
    pi_r = _grid_search_regularized(game, alpha)
    cfg = SolverConfig(mode=SolverMode.DUAL, target_delta=delta_prime,
                       max_outer_iters=max_iters, alpha=alpha)
    res = solve_dual(game, cfg)
    pi_hat = res.policy
    reg_gap = (_regularized_objective(game, pi_hat, alpha)
               - _regularized_objective(game, pi_r, alpha))
    l1 = float(np.abs(pi_r.probs - pi_hat.probs).sum())
    radius = float(np.sqrt(2.0 * delta_prime / alpha))
    q_m = q_magnitude(game)
    log_term = alpha * mdp.horizon * (np.log(mdp.n_actions) + np.log(mdp.n_states))
    sup_hat = float(vertex_payoffs(game, pi_hat).max())
    payoff_bound = q_m * radius + log_term
    return {
        "alpha": alpha,
        "delta_prime": delta_prime,
        "regularized_gap": float(reg_gap),
        "l1_distance": l1,
        "l1_bound": radius,
        "l1_ok": bool(l1 <= radius + 1e-9),
        "sup_payoff": sup_hat,
        "payoff_bound": float(payoff_bound),
        "payoff_ok": bool(sup_hat <= payoff_bound + 1e-9),
    }
