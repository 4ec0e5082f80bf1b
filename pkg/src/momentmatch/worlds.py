"""Constructors for the benchmark MDPs and their expert policies.

Each builder returns (TabularMdp, expert TimedPolicy). Conventions:
rewards are stored in [-1, 1]; where the natural cost has a larger range
(Cliff's two-indicator cost) the stored reward is rescaled and the raw
cost table is exposed separately for bound arithmetic.
"""

from __future__ import annotations

import numpy as np

from .mdp import TabularMdp, TimedPolicy, deterministic_policy

TREE_STATE_CAP = 10**6


def build_loop(T: int) -> tuple[TabularMdp, TimedPolicy]:
    """3-state loop: the expert heads to s1 and stays there.

    s0 -a0-> s1, s0 -a1-> s2; s1 -a0-> s2, s1 -a1-> s1 (stay);
    s2 -a0-> s1, s2 -a1-> s2. Reward 1 in s1, else 0.
    """
    if T < 2:
        raise ValueError("Loop requires T >= 2")
    P = np.zeros((3, 2, 3))
    P[0, 0, 1] = 1.0
    P[0, 1, 2] = 1.0
    P[1, 0, 2] = 1.0
    P[1, 1, 1] = 1.0
    P[2, 0, 1] = 1.0
    P[2, 1, 2] = 1.0
    R = np.zeros((3, 2))
    R[1, :] = 1.0
    p0 = np.array([1.0, 0.0, 0.0])
    mdp = TabularMdp(P, R, T, p0, state_labels=("s0", "s1", "s2"), action_labels=("a1", "a2"))
    expert = deterministic_policy(mdp, lambda s: {0: 0, 1: 1, 2: 0}[s])
    return mdp, expert


def build_cliff(T: int) -> tuple[TabularMdp, TimedPolicy]:
    """Chain of T states plus an absorbing cliff state s_x.

    Action a0 advances along the chain (last chain state self-loops);
    a1 drops to s_x; both actions self-loop in s_x. The natural cost is
    c(s, a) = 1[s = s_x] + 1[a = a1] with range [0, 2]; the stored reward
    is -c/2 so it fits [-1, 1]. Use cliff_cost() for unscaled arithmetic.
    """
    if T < 2:
        raise ValueError("Cliff requires T >= 2")
    S = T + 1  # chain states 0..T-1, cliff state index T
    x = T
    P = np.zeros((S, 2, S))
    for s in range(T):
        P[s, 0, min(s + 1, T - 1)] = 1.0
        P[s, 1, x] = 1.0
    P[x, :, x] = 1.0
    R = -cliff_cost(T) / 2.0
    p0 = np.zeros(S)
    p0[0] = 1.0
    labels = tuple(f"s{i}" for i in range(T)) + ("s_x",)
    mdp = TabularMdp(P, R, T, p0, state_labels=labels, action_labels=("a1", "a2"))
    expert = deterministic_policy(mdp, lambda s: 0)
    return mdp, expert


def cliff_cost(T: int) -> np.ndarray:
    """Unscaled two-indicator Cliff cost c(s, a) = 1[s_x] + 1[a2]."""
    S = T + 1
    c = np.zeros((S, 2))
    c[:, 1] += 1.0
    c[T, :] += 1.0
    return c


def cliff_drop_policy(mdp: TabularMdp, drop_prob: float, at_state: int = 0) -> TimedPolicy:
    """Expert-like policy that takes the drop action w.p. drop_prob in one state."""
    if not 0.0 <= drop_prob <= 1.0:
        raise ValueError("drop_prob must lie in [0, 1]")
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    probs = np.zeros((T, S, A))
    probs[:, :, 0] = 1.0
    probs[:, at_state, 0] = 1.0 - drop_prob
    probs[:, at_state, 1] = drop_prob
    return TimedPolicy(probs)


def build_unicycle(T: int) -> tuple[TabularMdp, TimedPolicy]:
    """2-state MDP: stay in s1 (a0) or fall to absorbing s2 (a1).

    Cost is 1[s2]; stored as reward -1[s2]. The expert always stays.
    """
    if T < 1:
        raise ValueError("Unicycle requires T >= 1")
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = 1.0
    P[0, 1, 1] = 1.0
    P[1, :, 1] = 1.0
    R = np.zeros((2, 2))
    R[1, :] = -1.0
    p0 = np.array([1.0, 0.0])
    mdp = TabularMdp(P, R, T, p0, state_labels=("s1", "s2"), action_labels=("a1", "a2"))
    expert = deterministic_policy(mdp, lambda s: 0)
    return mdp, expert


def unicycle_flip_policy(mdp: TabularMdp, eps: float) -> TimedPolicy:
    """Learner that takes the falling action w.p. eps in s1."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    T = mdp.horizon
    probs = np.zeros((T, 2, 2))
    probs[:, 0, 0] = 1.0 - eps
    probs[:, 0, 1] = eps
    probs[:, 1, 0] = 1.0
    return TimedPolicy(probs)


def unicycle_gap_closed_form(T: int, eps: float) -> float:
    """sum_{t=1}^{T} eps (1-eps)^(t-1) (T-t): expected steps spent fallen."""
    t = np.arange(1, T + 1)
    return float(np.sum(eps * (1.0 - eps) ** (t - 1) * (T - t)))


def build_tree(branching: int, T: int, reward_on_expert_path: float = 1.0,
               state_cap: int = TREE_STATE_CAP) -> tuple[TabularMdp, TimedPolicy]:
    """Complete branching^T tree; the expert always takes the last action.

    One state per node, levels 0..T; leaves self-loop. Reward is
    reward_on_expert_path on the rightmost-path states, 0 elsewhere.
    """
    if branching < 2:
        raise ValueError("branching must be >= 2")
    n_states = (branching ** (T + 1) - 1) // (branching - 1)
    if n_states > state_cap:
        raise ResourceWarning(f"tree would need {n_states} states (cap {state_cap})")
    A = branching
    P = np.zeros((n_states, A, n_states))
    first_leaf = (branching**T - 1) // (branching - 1)
    for s in range(n_states):
        if s >= first_leaf:
            P[s, :, s] = 1.0
        else:
            for a in range(A):
                P[s, a, s * branching + 1 + a] = 1.0
    # rightmost path: node 0, then repeatedly child index branching-1
    path = [0]
    while path[-1] < first_leaf:
        path.append(path[-1] * branching + branching)
    R = np.zeros((n_states, A))
    R[path, :] = reward_on_expert_path
    p0 = np.zeros(n_states)
    p0[0] = 1.0
    mdp = TabularMdp(P, R, T, p0)
    expert = deterministic_policy(mdp, lambda s: A - 1)
    return mdp, expert


def build_forest_grid(width: int, length: int, tree_positions, mode_count: int = 2
                      ) -> tuple[TabularMdp, TimedPolicy]:
    """Gridworld forest with a multimodal swerving expert.

    States are (row, col) cells plus an absorbing crash state; actions are
    lateral moves {left, straight, right} that always advance one row
    (the last row self-loops). Entering a tree cell crashes. Reward is 1
    per step in a live cell (longitudinal progress), 0 after crashing.

    The expert goes straight when safe and splits its mass evenly over the
    feasible swerve directions when a tree blocks the way (mode_count
    caps the number of swerve modes used; with 2 feasible swerves and
    mode_count >= 2 the split is 1/2-1/2).
    """
    if width < 2 or length < 2:
        raise ValueError("grid dimensions must be >= 2")
    trees = {(int(r), int(c)) for r, c in tree_positions}
    for r in range(length):
        if all((r, c) in trees for c in range(width)):
            raise ValueError(f"trees cover entire row {r}")
    S = width * length + 1
    crash = S - 1
    A = 3  # 0=left, 1=straight, 2=right

    def sid(r, c):
        return r * width + c

    def move(r, c, a):
        """Next cell; lateral moves clamp at the walls."""
        nr = min(r + 1, length - 1)
        nc = min(max(c + (a - 1), 0), width - 1)
        return nr, nc

    P = np.zeros((S, A, S))
    R = np.ones((S, A))
    R[crash, :] = 0.0
    for r in range(length):
        for c in range(width):
            s = sid(r, c)
            if (r, c) in trees:
                P[s, :, crash] = 1.0  # unreachable; kept well-formed
                R[s, :] = 0.0
                continue
            for a in range(A):
                nr, nc = move(r, c, a)
                if (nr, nc) in trees:
                    P[s, a, crash] = 1.0
                else:
                    P[s, a, sid(nr, nc)] = 1.0
    P[crash, :, crash] = 1.0

    # viable[r][c]: the cell is tree-free and can reach the last row safely
    viable = np.zeros((length, width), dtype=bool)
    for c in range(width):
        viable[length - 1, c] = (length - 1, c) not in trees
    for r in range(length - 2, -1, -1):
        for c in range(width):
            if (r, c) in trees:
                continue
            viable[r, c] = any(
                viable[move(r, c, a)] and move(r, c, a) not in trees for a in range(A)
            )
    start = (0, width // 2)
    if not viable[start]:
        raise ValueError("no feasible path through the forest")

    probs = np.zeros((length, S, A))
    for r in range(length):
        for c in range(width):
            s = sid(r, c)
            safe = [a for a in range(A)
                    if move(r, c, a) not in trees and viable[move(r, c, a)]]
            if not safe:
                probs[:, s, 1] = 1.0  # doomed cell; go straight
                continue
            if 1 in safe:
                probs[:, s, 1] = 1.0  # straight when possible
            else:
                swerves = safe[: max(1, mode_count)]
                for a in swerves:
                    probs[:, s, a] = 1.0 / len(swerves)
    probs[:, crash, 1] = 1.0
    expert = TimedPolicy(probs)

    p0 = np.zeros(S)
    p0[sid(*start)] = 1.0
    mdp = TabularMdp(P, R, length, p0)
    return mdp, expert


def forest_start_state(mdp: TabularMdp, width: int) -> int:
    return int(np.argmax(mdp.initial_dist))


def forest_swerve_class(mdp: TabularMdp):
    """Swerve-focused discriminator basis for the forest task.

    Two moments: the probability of steering into a crash next step, and
    the heading-change magnitude |a - 1| gated by whether going straight
    would crash (direction-agnostic, so the learner is pushed to swerve
    at danger states without committing to one side).
    """
    from .moments import ClassKind, FunctionClass

    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    crash = S - 1
    f_crash = np.broadcast_to(
        np.where(np.arange(S)[:, None] == crash, 0.0, mdp.transition[:, :, crash]),
        (T, S, A)).copy()
    danger = mdp.transition[:, 1, crash].copy()
    danger[crash] = 0.0
    f_swerve = np.broadcast_to(danger[:, None] * np.abs(np.arange(A) - 1.0),
                               (T, S, A)).copy()
    return FunctionClass(np.stack([f_crash, f_swerve]), max(1.0, A / 2.0),
                         ClassKind.ON_POLICY_Q, 2.0, "forest_swerve")


def mean_action_policy(policy: TimedPolicy) -> TimedPolicy:
    """Deterministic policy taking the rounded mean action index per (t, s).

    This is the mode-averaging ("match the mean action") reading of a
    stochastic policy; on the forest task it drives straight into trees.
    """
    T, S, A = policy.probs.shape
    idx = np.arange(A)
    mean = np.einsum("tsa,a->ts", policy.probs, idx)
    chosen = np.clip(np.rint(mean).astype(int), 0, A - 1)
    probs = np.zeros((T, S, A))
    t_idx, s_idx = np.meshgrid(np.arange(T), np.arange(S), indexing="ij")
    probs[t_idx, s_idx, chosen] = 1.0
    return TimedPolicy(probs)
