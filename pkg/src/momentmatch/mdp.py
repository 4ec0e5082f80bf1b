"""Finite-horizon tabular MDPs and exact dynamic programming.

States and actions are integer indices. Policies are time-indexed
(nonstationary): probs[t, s, a] for t = 0..T-1. Absorbing states are
explicit self-loops, so every trajectory has length exactly T and all
expectations are finite sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIMPLEX_TOL = 1e-12
FLOW_TOL = 1e-10


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP <S, A, transition, reward, horizon, initial_dist>.

    transition[s, a, s'] is P(s'|s, a); reward[s, a] lies in [-1, 1].
    """

    transition: np.ndarray
    reward: np.ndarray
    horizon: int
    initial_dist: np.ndarray
    state_labels: tuple[str, ...] | None = None
    action_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        R = np.asarray(self.reward, dtype=float)
        p0 = np.asarray(self.initial_dist, dtype=float)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "initial_dist", p0)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must be (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if R.shape != (S, A):
            raise ValueError(f"reward must be (S, A) = {(S, A)}, got {R.shape}")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if p0.shape != (S,):
            raise ValueError(f"initial_dist must have shape ({S},)")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > SIMPLEX_TOL:
            raise ValueError("transition rows must be distributions")
        if np.any(np.abs(R) > 1.0 + SIMPLEX_TOL):
            raise ValueError("rewards must lie in [-1, 1]")
        if np.any(p0 < 0) or abs(p0.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError("initial_dist must be a distribution")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def to_dict(self) -> dict:
        d = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
            "horizon": self.horizon,
            "initial_dist": self.initial_dist.tolist(),
        }
        if self.state_labels is not None:
            d["state_labels"] = list(self.state_labels)
        if self.action_labels is not None:
            d["action_labels"] = list(self.action_labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TabularMdp":
        return cls(
            transition=np.asarray(d["transition"], dtype=float),
            reward=np.asarray(d["reward"], dtype=float),
            horizon=int(d["horizon"]),
            initial_dist=np.asarray(d["initial_dist"], dtype=float),
            state_labels=tuple(d["state_labels"]) if "state_labels" in d else None,
            action_labels=tuple(d["action_labels"]) if "action_labels" in d else None,
        )


@dataclass(frozen=True)
class TimedPolicy:
    """Time-indexed stochastic policy probs[t, s, a], t = 0..T-1."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        if p.ndim != 3:
            raise ValueError("policy must be (T, S, A)")
        if np.any(p < 0) or np.max(np.abs(p.sum(axis=2) - 1.0)) > SIMPLEX_TOL:
            raise ValueError("policy rows must be distributions")

    @property
    def horizon(self) -> int:
        return self.probs.shape[0]

    def to_dict(self) -> dict:
        return {"probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TimedPolicy":
        return cls(np.asarray(d["probs"], dtype=float))


@dataclass(frozen=True)
class Trajectory:
    """Sequence of (state, action) pairs of length exactly T."""

    steps: tuple[tuple[int, int], ...]

    def states(self) -> list[int]:
        return [s for s, _ in self.steps]

    def actions(self) -> list[int]:
        return [a for _, a in self.steps]


@dataclass(frozen=True)
class OccupancyMeasure:
    """Exact per-timestep state-action visitation d[t, s, a]."""

    d: np.ndarray

    def state_occupancy(self) -> np.ndarray:
        return self.d.sum(axis=2)


@dataclass(frozen=True)
class ValueTables:
    """Backward-recursion tables q[t, s, a] and v[t, s]."""

    q: np.ndarray
    v: np.ndarray


def uniform_policy(mdp: TabularMdp) -> TimedPolicy:
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    return TimedPolicy(np.full((T, S, A), 1.0 / A))


def deterministic_policy(mdp: TabularMdp, action_of_state) -> TimedPolicy:
    """Stationary deterministic policy from a state -> action map."""
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    probs = np.zeros((T, S, A))
    for s in range(S):
        probs[:, s, int(action_of_state(s))] = 1.0
    return TimedPolicy(probs)


def random_policy(mdp: TabularMdp, seed: int) -> TimedPolicy:
    rng = np.random.default_rng(seed)
    raw = rng.random((mdp.horizon, mdp.n_states, mdp.n_actions)) + 1e-3
    return TimedPolicy(raw / raw.sum(axis=2, keepdims=True))


def random_mdp(n_states: int, n_actions: int, horizon: int, seed: int) -> TabularMdp:
    """Seeded random dense MDP with rewards in [-1, 1]."""
    rng = np.random.default_rng(seed)
    P = rng.random((n_states, n_actions, n_states)) + 1e-3
    P /= P.sum(axis=2, keepdims=True)
    R = rng.uniform(-1.0, 1.0, (n_states, n_actions))
    p0 = rng.random(n_states) + 1e-3
    p0 /= p0.sum()
    return TabularMdp(P, R, horizon, p0)


def _check_shapes(mdp: TabularMdp, policy: TimedPolicy):
    if policy.probs.shape != (mdp.horizon, mdp.n_states, mdp.n_actions):
        raise ValueError(
            f"policy shape {policy.probs.shape} does not match MDP "
            f"{(mdp.horizon, mdp.n_states, mdp.n_actions)}"
        )


def occupancy(mdp: TabularMdp, policy: TimedPolicy) -> OccupancyMeasure:
    """Forward Chapman-Kolmogorov recursion for d[t, s, a]."""
    _check_shapes(mdp, policy)
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    d = np.zeros((T, S, A))
    state_dist = mdp.initial_dist.copy()
    for t in range(T):
        d[t] = state_dist[:, None] * policy.probs[t]
        if t + 1 < T:
            state_dist = np.einsum("sa,sap->p", d[t], mdp.transition)
    return OccupancyMeasure(d)


def policy_value(mdp: TabularMdp, policy: TimedPolicy) -> float:
    """Exact J(pi) = sum_t E[r(s_t, a_t)] via occupancy measures."""
    d = occupancy(mdp, policy).d
    return float(np.einsum("tsa,sa->", d, mdp.reward))


def q_values(mdp: TabularMdp, policy: TimedPolicy, table: np.ndarray | None = None) -> ValueTables:
    """Backward recursion for Q and V under an arbitrary per-step table.

    table may be stationary (S, A) or time-indexed (T, S, A); defaults to
    the MDP reward.
    """
    _check_shapes(mdp, policy)
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    g = per_step_table(mdp, table)
    q = np.zeros((T, S, A))
    v = np.zeros((T, S))
    for t in range(T - 1, -1, -1):
        future = mdp.transition @ v[t + 1] if t + 1 < T else 0.0
        q[t] = g[t] + future
        v[t] = np.einsum("sa,sa->s", policy.probs[t], q[t])
    return ValueTables(q=q, v=v)


def per_step_table(mdp: TabularMdp, table: np.ndarray | None) -> np.ndarray:
    """Broadcast a stationary or time-indexed per-step table to (T, S, A)."""
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    if table is None:
        table = mdp.reward
    g = np.asarray(table, dtype=float)
    if g.shape == (S, A):
        g = np.broadcast_to(g, (T, S, A))
    elif g.shape != (T, S, A):
        raise ValueError(f"table must be (S, A) or (T, S, A), got {g.shape}")
    return np.asarray(g)


def rollout(mdp: TabularMdp, policy: TimedPolicy, seed: int, n: int) -> list[Trajectory]:
    """n i.i.d. trajectories; RNG split deterministically per trajectory."""
    _check_shapes(mdp, policy)
    if n < 1:
        raise ValueError("n must be >= 1")
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    out = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        s = int(rng.choice(S, p=mdp.initial_dist))
        steps = []
        for t in range(T):
            a = int(rng.choice(A, p=policy.probs[t, s]))
            steps.append((s, a))
            if t + 1 < T:
                s = int(rng.choice(S, p=mdp.transition[s, a]))
        out.append(Trajectory(tuple(steps)))
    return out


def trajectory_return(mdp: TabularMdp, traj: Trajectory) -> float:
    return float(sum(mdp.reward[s, a] for s, a in traj.steps))


def pdl_residual(mdp: TabularMdp, policy_a: TimedPolicy, policy_b: TimedPolicy) -> float:
    """Max residual of both performance-difference expansions of J(a) - J(b).

    Expansion 1 evaluates b's Q-advantages on a's visitation; expansion 2
    evaluates a's Q-advantages on b's visitation (negated). Both are exact
    identities, so the residual is numerical noise (contract: <= 1e-8).
    """
    gap = policy_value(mdp, policy_a) - policy_value(mdp, policy_b)

    def expansion(occ_policy, q_policy, sign):
        d = occupancy(mdp, occ_policy).d
        vt = q_values(mdp, q_policy)
        # sum_t E_{s~occ}[ Q(s, a~occ) - Q(s, a~q_policy) ]
        ds = d.sum(axis=2)
        on_occ = np.einsum("tsa,tsa->", d, vt.q)
        on_q = np.einsum("ts,ts->", ds, vt.v)
        return sign * (on_occ - on_q)

    e1 = expansion(policy_a, policy_b, 1.0)
    e2 = expansion(policy_b, policy_a, -1.0)
    return float(max(abs(gap - e1), abs(gap - e2)))
