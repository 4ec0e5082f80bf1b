"""Practical imitation learners: adversarial trainers and baselines.

All inner optimizations are exact tabular computations -- closed-form
gradients over empirical datasets, soft value iteration for max-entropy
inner loops -- so every trace number can be checked against the exact
evaluators in the other modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import (
    TabularMdp,
    TimedPolicy,
    Trajectory,
    occupancy,
    policy_value,
    rollout,
    uniform_policy,
)
from .equilibrium import soft_value_iteration
from .moments import FunctionClass


@dataclass(frozen=True)
class ExpertDataset:
    """Demonstration trajectories plus the MDP they came from."""

    trajectories: tuple
    source_mdp: TabularMdp

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        object.__setattr__(self, "trajectories", trajs)
        if not trajs:
            raise ValueError("dataset must be nonempty")
        T, S, A = self.source_mdp.horizon, self.source_mdp.n_states, self.source_mdp.n_actions
        for tr in trajs:
            if len(tr.steps) != T:
                raise ValueError("trajectory length must equal the horizon")
            for s, a in tr.steps:
                if not (0 <= s < S and 0 <= a < A):
                    raise ValueError("state/action index out of bounds")

    def counts(self) -> np.ndarray:
        """Visit counts n[t, s, a] over all trajectories."""
        T, S, A = (self.source_mdp.horizon, self.source_mdp.n_states,
                   self.source_mdp.n_actions)
        n = np.zeros((T, S, A))
        for tr in self.trajectories:
            for t, (s, a) in enumerate(tr.steps):
                n[t, s, a] += 1.0
        return n


@dataclass(frozen=True)
class QueryableExpert:
    """Expert that labels any (t, s) with its action distribution."""

    policy: TimedPolicy

    def sample_action(self, t: int, s: int, rng) -> int:
        return int(rng.choice(self.policy.probs.shape[2], p=self.policy.probs[t, s]))


def expert_dataset(mdp: TabularMdp, expert: TimedPolicy, seed: int, n: int) -> ExpertDataset:
    return ExpertDataset(tuple(rollout(mdp, expert, seed, n)), mdp)


def behavioral_cloning(expert_data: ExpertDataset, pseudo_count: float = 0.0) -> TimedPolicy:
    """Per-(t, s) empirical action frequencies; unvisited states go uniform.

    pseudo_count > 0 adds Laplace smoothing mass to every action at
    visited states as well (used by the on-policy baselines to model
    imperfect fits).
    """
    counts = expert_data.counts() + pseudo_count
    totals = counts.sum(axis=2, keepdims=True)
    A = counts.shape[2]
    probs = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / A)
    return TimedPolicy(probs)


# ---------------------------------------------------------------------------
# AdVIL: primal off-Q adversarial training on expert data only.


@dataclass(frozen=True)
class AdvilConfig:
    eta_f: float = 0.5
    eta_pi: float = 0.1
    delta: float = 0.01
    max_steps: int = 2000
    range_bound: float | None = None  # discriminator clip; default horizon
    exact_inner: bool = False

    def __post_init__(self):
        if self.eta_f <= self.eta_pi:
            raise ValueError("eta_f must exceed eta_pi")
        if self.delta <= 0 or self.max_steps < 1:
            raise ValueError("delta must be positive and max_steps >= 1")


def _expert_weights(data: ExpertDataset, exact: bool,
                    expert: TimedPolicy | None) -> np.ndarray:
    """Weight w[t, s, a] over expert (t, s, a) tuples, normalized to sum T.

    Empirical counts by default; the exact expert occupancy in test mode.
    """
    if exact:
        if expert is None:
            raise ValueError("exact_inner requires the expert policy")
        return occupancy(data.source_mdp, expert).d * data.source_mdp.horizon
    n = data.counts()
    return n * (data.source_mdp.horizon / n.sum())


def advil_train(expert_data: ExpertDataset, config: AdvilConfig,
                expert: TimedPolicy | None = None):
    """Alternating ascent on a state-action critic, descent on the policy.

    The saddle objective is the expert-data surrogate
    L(pi, f) = E_{(s,a)~D_E}[E_{x~pi(s)}[f(s,x)] - f(s,a)]; both gradients
    are closed-form over the empirical expert distribution. Returns
    (policy, trace).
    """
    mdp = expert_data.source_mdp
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    R = config.range_bound if config.range_bound is not None else float(T)
    w = _expert_weights(expert_data, config.exact_inner, expert)  # (T,S,A), sums to T
    w_state = w.sum(axis=2)  # (T,S)
    f = np.zeros((S, A))
    logits = np.zeros((T, S, A))
    trace = []
    for step in range(config.max_steps):
        m = logits.max(axis=2, keepdims=True)
        pi = np.exp(logits - m)
        pi /= pi.sum(axis=2, keepdims=True)
        # L = sum_{t,s} w_state * <pi, f> - sum_{t,s,a} w * f, averaged per pair
        loss = float((np.einsum("ts,tsa,sa->", w_state, pi, f)
                      - np.einsum("tsa,sa->", w, f)) / T)
        trace.append({"step": step, "objective": loss})
        if loss <= config.delta and step > 0:
            break
        grad_f = (np.einsum("ts,tsa->sa", w_state, pi) - w.sum(axis=0)) / T
        f = np.clip(f + config.eta_f * grad_f, -R, R)
        inner = np.einsum("tsa,sa->ts", pi, f)
        grad_logits = w_state[:, :, None] * pi * (f[None] - inner[:, :, None]) / T
        logits = logits - config.eta_pi * grad_logits
    m = logits.max(axis=2, keepdims=True)
    pi = np.exp(logits - m)
    pi /= pi.sum(axis=2, keepdims=True)
    return TimedPolicy(pi), trace


def bellman_substituted_table(mdp: TabularMdp, policy: TimedPolicy,
                              v_table: np.ndarray) -> np.ndarray:
    """Per-step table f_t = v - (B^pi v)_t from a stationary critic v(s, a).

    (B^pi v)_t(s,a) = E_{s'~T(s,a), a'~pi_{t+1}(s')}[v(s', a')], with the
    final step's backup defined as zero so the telescoped sum closes.
    """
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    v = np.asarray(v_table, dtype=float)
    if v.shape != (S, A):
        raise ValueError(f"v_table must be (S, A) = {(S, A)}")
    f = np.empty((T, S, A))
    for t in range(T - 1):
        vbar_next = np.einsum("pa,pa->p", policy.probs[t + 1], np.broadcast_to(v, (S, A)))
        f[t] = v - mdp.transition @ vbar_next
    f[T - 1] = v
    return f


def advil_ipm_objective(mdp: TabularMdp, policy: TimedPolicy, expert: TimedPolicy,
                        v_table: np.ndarray) -> float:
    """Learner-minus-expert moment sum of the Bellman-substituted critic."""
    f = bellman_substituted_table(mdp, policy, v_table)
    d_pi = occupancy(mdp, policy).d
    d_e = occupancy(mdp, expert).d
    return float(np.einsum("tsa,tsa->", d_pi - d_e, f))


def advil_offpolicy_objective(mdp: TabularMdp, policy: TimedPolicy,
                              expert: TimedPolicy, v_table: np.ndarray) -> float:
    """Expert-side surrogate: sum_t E_{expert}[E_{a~pi}[v] - v(s_t, a_t)]."""
    v = np.asarray(v_table, dtype=float)
    d_e = occupancy(mdp, expert).d
    inner = np.einsum("tsa,sa->ts", policy.probs, np.broadcast_to(v, d_e.shape[1:]))
    on_pi = np.einsum("ts,ts->", d_e.sum(axis=2), inner)
    on_e = np.einsum("tsa,sa->", d_e, v)
    return float(on_pi - on_e)


# ---------------------------------------------------------------------------
# AdRIL: dual reward-moment matching with a counting discriminator.


@dataclass(frozen=True)
class AdrilConfig:
    alpha: float = 0.01
    delta: float = 0.05
    max_rounds: int = 50
    rollouts_per_round: int = 10
    f_update_freq: int = 1
    balanced_sampling: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.delta <= 0 or self.max_rounds < 1 or self.rollouts_per_round < 1:
            raise ValueError("invalid AdRIL budget parameters")
        if self.f_update_freq < 1:
            raise ValueError("f_update_freq must be >= 1")


@dataclass
class AdrilState:
    """Aggregated rollout data and the counting cost derived from it."""

    aggregated_learner_data: list
    expert_data: ExpertDataset
    round: int
    cost_table: np.ndarray


def adril_cost(mdp: TabularMdp, learner_trajs, expert_data: ExpertDataset,
               balanced: bool = False) -> np.ndarray:
    """Counting cost: learner visit frequency minus expert visit frequency.

    C[t, s, a] = n_learner/|D_learner| - n_expert/|D_E| with trajectory
    counts as the normalizers; the balanced variant halves both sides
    (equal-probability sampling of the two datasets).
    """
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    nl = np.zeros((T, S, A))
    for tr in learner_trajs:
        for t, (s, a) in enumerate(tr.steps):
            nl[t, s, a] += 1.0
    ne = expert_data.counts()
    cost = nl / max(len(learner_trajs), 1) - ne / len(expert_data.trajectories)
    return 0.5 * cost if balanced else cost


def adril_ipm(mdp: TabularMdp, policy: TimedPolicy, expert_data: ExpertDataset,
              cost_table: np.ndarray) -> float:
    """Exact learner expectation minus empirical expert sum of the cost."""
    d = occupancy(mdp, policy).d
    learner_side = float(np.einsum("tsa,tsa->", d, cost_table))
    ne = expert_data.counts() / len(expert_data.trajectories)
    expert_side = float(np.einsum("tsa,tsa->", ne, cost_table))
    return learner_side - expert_side


def adril_train(expert_data: ExpertDataset, config: AdrilConfig):
    """Dual loop: counting cost, max-entropy inner solve, rollout, repeat.

    Returns (policy, trace, AdrilState). f_update_freq = 1 is the adaptive
    algorithm; a large value freezes the round-1 discriminator (the
    fixed-reward ablation).
    """
    mdp = expert_data.source_mdp
    pi = uniform_policy(mdp)
    state = AdrilState([], expert_data, 0, np.zeros_like(expert_data.counts()))
    trace = []
    f_rounds = 1
    for k in range(config.max_rounds):
        new = rollout(mdp, pi, int(np.random.default_rng([config.seed, k]).integers(2**31)),
                      config.rollouts_per_round)
        state.aggregated_learner_data.extend(new)
        if k % config.f_update_freq == 0 or k == 0:
            state.cost_table = adril_cost(mdp, state.aggregated_learner_data,
                                          expert_data, config.balanced_sampling)
            f_rounds = k + 1
        state.round = k + 1
        # The averaged cost shrinks like 1/rounds as matched data accumulates;
        # dividing the entropy weight by the number of rounds folded into the
        # current cost keeps the inner solve at the sharpness of a constant
        # unit learning rate on the functional gradients (a frozen cost keeps
        # its original scale, so its weight stays fixed).
        pi = soft_value_iteration(mdp, state.cost_table, config.alpha / f_rounds)
        ipm = adril_ipm(mdp, pi, expert_data, state.cost_table)
        trace.append({"round": k, "objective": ipm, "value": policy_value(mdp, pi)})
        if ipm <= config.delta:
            break
    return pi, trace, state


# ---------------------------------------------------------------------------
# DAgger baseline: dataset aggregation with relabeled expert actions.


@dataclass(frozen=True)
class DaggerConfig:
    rounds: int = 5
    rollouts_per_round: int = 10
    pseudo_count: float = 0.0
    fit_mode: str = "frequency"  # or "mean": round the mean action index
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1 or self.rollouts_per_round < 1:
            raise ValueError("rounds and rollouts_per_round must be >= 1")
        if self.fit_mode not in ("frequency", "mean"):
            raise ValueError("fit_mode must be 'frequency' or 'mean'")
        if self.pseudo_count < 0:
            raise ValueError("pseudo_count must be nonnegative")


def _fit(mdp: TabularMdp, data: list, config) -> TimedPolicy:
    pi = behavioral_cloning(ExpertDataset(tuple(data), mdp), config.pseudo_count)
    if config.fit_mode == "mean":
        from .worlds import mean_action_policy

        pi = mean_action_policy(pi)
    return pi


def _relabel(trajs, expert: QueryableExpert, rng) -> list:
    """Replace each visited (t, s)'s action with a sampled expert action."""
    out = []
    for tr in trajs:
        steps = tuple((s, expert.sample_action(t, s, rng))
                      for t, (s, _) in enumerate(tr.steps))
        out.append(Trajectory(steps))
    return out


def dagger_train(mdp: TabularMdp, expert: QueryableExpert, config: DaggerConfig):
    """Aggregate relabeled on-policy data and refit each round.

    Round 0 uses expert rollouts (the usual fully-mixed first iteration);
    later rounds roll out the current learner. Returns (policy, trace).
    """
    rng = np.random.default_rng([config.seed, 10**6])
    data = list(rollout(mdp, expert.policy, config.seed, config.rollouts_per_round))
    pi = _fit(mdp, data, config)
    trace = [{"round": 0, "dataset_size": len(data), "value": policy_value(mdp, pi)}]
    for k in range(1, config.rounds):
        new = rollout(mdp, pi, int(np.random.default_rng([config.seed, k]).integers(2**31)),
                      config.rollouts_per_round)
        data.extend(_relabel(new, expert, rng))
        pi = _fit(mdp, data, config)
        trace.append({"round": k, "dataset_size": len(data),
                      "value": policy_value(mdp, pi)})
    return pi, trace


# ---------------------------------------------------------------------------
# DAeQuIL: follow-the-regularized-leader over adversarial per-round moments.


@dataclass(frozen=True)
class DaequilConfig:
    delta: float = 0.01
    max_rounds: int = 8
    bc_weight: float = 1.0
    reg_weight: float = 1e-5
    rollouts_per_round: int = 10
    gd_steps: int = 300
    gd_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.delta <= 0 or self.max_rounds < 1 or self.rollouts_per_round < 1:
            raise ValueError("invalid DAeQuIL budget parameters")
        if self.bc_weight < 0 or self.reg_weight < 0:
            raise ValueError("weights must be nonnegative")
        if self.gd_steps < 1 or self.gd_rate <= 0:
            raise ValueError("invalid gradient-descent parameters")


def daequil_round_payoff(fclass: FunctionClass, learner_counts: np.ndarray,
                         relabel_counts: np.ndarray) -> tuple[int, float]:
    """Vertex argmax of E_learner[f] - E_relabeled[f]; lowest index wins."""
    nl = learner_counts / learner_counts.sum()
    ne = relabel_counts / relabel_counts.sum()
    diff = nl - ne
    pos = np.einsum("tsa,itsa->i", diff, fclass.basis)
    vals = np.concatenate([pos, -pos])
    idx = int(np.argmax(vals))
    return idx, float(vals[idx])


def _softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=2, keepdims=True)
    p = np.exp(logits - m)
    return p / p.sum(axis=2, keepdims=True)


def daequil_train(mdp: TabularMdp, expert: QueryableExpert, fclass: FunctionClass,
                  config: DaequilConfig):
    """FTRL: per-round adversarial moments plus a cloning and L2 regularizer.

    Each round rolls out the learner, relabels visited states with sampled
    expert actions, picks the vertex discriminator maximizing the
    learner-minus-expert moment gap, and re-minimizes the aggregate loss
    (all stored round moments + bc_weight * cross-entropy on relabeled
    actions + reg_weight * squared logits) by exact gradient descent.
    Returns (policy, trace).
    """
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    rng = np.random.default_rng([config.seed, 10**6])
    # warm start: clone sampled expert behavior
    warm = expert_dataset(mdp, expert.policy, config.seed, config.rollouts_per_round)
    bc = behavioral_cloning(warm)
    logits = np.log(np.clip(bc.probs, 1e-8, None))
    relabel_counts = warm.counts()
    moment_acc = np.zeros((T, S, A))  # sum over rounds of per-round mean f_k
    n_entries = 0
    trace = []
    for k in range(config.max_rounds):
        pi = TimedPolicy(_softmax(logits))
        trajs = rollout(mdp, pi, int(np.random.default_rng([config.seed, k + 1]).integers(2**31)),
                        config.rollouts_per_round)
        counts = ExpertDataset(tuple(trajs), mdp).counts()
        rel = _relabel(trajs, expert, rng)
        rel_counts = ExpertDataset(tuple(rel), mdp).counts()
        relabel_counts = relabel_counts + rel_counts
        idx, round_payoff = daequil_round_payoff(fclass, counts, rel_counts)
        f_k = fclass.vertex_table(idx)
        state_counts = counts.sum(axis=2)
        moment_acc += state_counts[:, :, None] * f_k
        n_entries += int(state_counts.sum())
        # minimize aggregate: moments + BC cross-entropy + L2 on logits
        ce_total = relabel_counts.sum()
        for _ in range(config.gd_steps):
            pi_probs = _softmax(logits)
            inner = np.einsum("tsa,tsa->ts", pi_probs, moment_acc)
            g_mom = pi_probs * (moment_acc - inner[:, :, None]) / n_entries
            row = relabel_counts.sum(axis=2, keepdims=True)
            g_ce = (pi_probs * row - relabel_counts) / ce_total
            grad = g_mom + config.bc_weight * g_ce + 2.0 * config.reg_weight * logits
            logits = logits - config.gd_rate * grad
        pi_probs = _softmax(logits)
        moment_term = float(np.einsum("tsa,tsa->", pi_probs, moment_acc) / n_entries)
        ce_term = float(-np.sum(relabel_counts * np.log(np.clip(pi_probs, 1e-12, None)))
                        / ce_total)
        l2_term = float(config.reg_weight * np.mean(logits**2))
        total = moment_term + config.bc_weight * ce_term + l2_term
        trace.append({
            "round": k,
            "objective": total,
            "round_payoff": round_payoff,
            "moment_term": moment_term,
            "value": policy_value(mdp, TimedPolicy(pi_probs)),
        })
        if total <= config.delta:
            break
    return TimedPolicy(_softmax(logits)), trace
