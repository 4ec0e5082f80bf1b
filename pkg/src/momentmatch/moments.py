"""Finite discriminator classes and exact moment-matching payoffs.

A FunctionClass is a finite symmetric basis of (optionally time-indexed)
state-action tables; discriminators are convex combinations over the
signed vertex set {+f_i, -f_i}. The four payoffs compare learner and
expert moments exactly via occupancy measures -- no sampling anywhere.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .mdp import (
    SIMPLEX_TOL,
    TabularMdp,
    TimedPolicy,
    occupancy,
    per_step_table,
    q_values,
)


class ClassKind(enum.Enum):
    REWARD = "reward"
    OFF_POLICY_Q = "off_policy_q"
    ON_POLICY_Q = "on_policy_q"
    GAME_CLASS = "game_class"


class PayoffKind(enum.Enum):
    U1_REWARD = "u1"
    U2_OFFQ = "u2"
    U3_ONQ = "u3"
    U4_MIXED = "u4"


@dataclass(frozen=True)
class FunctionClass:
    """Symmetric basis of per-step tables with a range bound and game scale.

    basis has shape (m, T, S, A); negation of every element is implied
    (the vertex set has size 2m). scale is the divisor applied when the
    class is embedded into the unit game class (2 for reward classes,
    2T for Q-classes).
    """

    basis: np.ndarray
    range_bound: float
    kind: ClassKind
    scale: float
    name: str = "class"

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        object.__setattr__(self, "basis", b)
        if b.ndim != 4 or b.shape[0] < 1:
            raise ValueError("basis must be (m, T, S, A) with m >= 1")
        if self.range_bound <= 0 or self.scale <= 0:
            raise ValueError("range_bound and scale must be positive")
        if np.max(np.abs(b)) > self.range_bound + 1e-9:
            raise ValueError("basis entries exceed range_bound")

    @property
    def n_basis(self) -> int:
        return self.basis.shape[0]

    @property
    def n_vertices(self) -> int:
        return 2 * self.n_basis

    def vertex_table(self, index: int) -> np.ndarray:
        """Signed basis element for vertex index (0..2m-1; +f_i then -f_i)."""
        m = self.n_basis
        if not 0 <= index < 2 * m:
            raise ValueError(f"vertex index out of range: {index}")
        sign = 1.0 if index < m else -1.0
        return sign * self.basis[index % m]

    def combine(self, weights: np.ndarray) -> np.ndarray:
        """Raw (unscaled) table of the convex combination over vertices."""
        w = np.asarray(weights, dtype=float)
        m = self.n_basis
        if w.shape != (2 * m,):
            raise ValueError(f"weights must have length {2 * m}")
        signed = w[:m] - w[m:]
        return np.einsum("i,itsa->tsa", signed, self.basis)

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.tolist(),
            "range_bound": self.range_bound,
            "kind": self.kind.value,
            "scale": self.scale,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FunctionClass":
        return cls(
            basis=np.asarray(d["basis"], dtype=float),
            range_bound=float(d["range_bound"]),
            kind=ClassKind(d["kind"]),
            scale=float(d["scale"]),
            name=d.get("name", "class"),
        )


@dataclass(frozen=True)
class Discriminator:
    """Convex-combination weights over the signed vertex set of a class."""

    weights: np.ndarray
    class_ref: str = "class"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1:
            raise ValueError("weights must be a vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError("weights must be a distribution")

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "class_ref": self.class_ref}

    @classmethod
    def from_dict(cls, d: dict) -> "Discriminator":
        return cls(np.asarray(d["weights"], dtype=float), d.get("class_ref", "class"))


def vertex_discriminator(fclass: FunctionClass, index: int) -> Discriminator:
    w = np.zeros(fclass.n_vertices)
    w[index] = 1.0
    return Discriminator(w, fclass.name)


@dataclass(frozen=True)
class GameSpec:
    """A payoff kind plus the MDP, expert, and discriminator class it runs on.

    payoff_scale_k bounds |payoff|; certification thresholds are delta * k.
    """

    payoff_kind: PayoffKind
    mdp: TabularMdp
    expert: TimedPolicy
    function_class: FunctionClass
    payoff_scale_k: float

    def __post_init__(self):
        if self.payoff_scale_k <= 0:
            raise ValueError("payoff_scale_k must be positive")
        T, S, A = self.mdp.horizon, self.mdp.n_states, self.mdp.n_actions
        if self.function_class.basis.shape[1:] != (T, S, A):
            raise ValueError("function class shape does not match MDP")
        if self.expert.probs.shape != (T, S, A):
            raise ValueError("expert policy shape does not match MDP")


def make_reward_class(mdp: TabularMdp, tables=None, name: str = "reward") -> FunctionClass:
    """Reward-moment class from per-step tables (default: the MDP reward).

    Tables may be (S, A) or (T, S, A); range bound 1, game-class scale 2.
    """
    if tables is None:
        tables = [mdp.reward]
    basis = np.stack([per_step_table(mdp, t) for t in tables])
    return FunctionClass(basis, 1.0, ClassKind.REWARD, 2.0, name)


def induce_q_class(mdp: TabularMdp, reward_basis: FunctionClass,
                   anchor_policies, name: str = "q_class") -> FunctionClass:
    """Q-tables of each reward-basis element under each anchor policy.

    The negated reward elements contribute the negated Q-tables, which the
    implied symmetric closure already covers, so only the positive
    generators are materialized. Range bound T, scale 2T.
    """
    if reward_basis.kind != ClassKind.REWARD:
        raise ValueError("reward_basis must have kind REWARD")
    anchors = list(anchor_policies)
    if not anchors:
        raise ValueError("anchor set must be nonempty")
    T = mdp.horizon
    elems = np.stack([q_values(mdp, pi, g).q for pi in anchors
                      for g in reward_basis.basis])
    bound = float(max(T, np.max(np.abs(elems))))
    return FunctionClass(elems, bound, ClassKind.OFF_POLICY_Q, 2.0 * T, name)


def induce_expert_q_class(mdp: TabularMdp, expert: TimedPolicy,
                          reward_basis: FunctionClass,
                          name: str = "expert_q_class") -> FunctionClass:
    """Expert-anchored Q-class; range bound is the realized max |entry|."""
    base = induce_q_class(mdp, reward_basis, [expert], name)
    q_bar = float(np.max(np.abs(base.basis)))
    if q_bar == 0.0:
        q_bar = 1.0
    return FunctionClass(base.basis, q_bar, ClassKind.ON_POLICY_Q,
                         2.0 * mdp.horizon, name)


def induce_value_class(mdp: TabularMdp, reward_basis: FunctionClass,
                       anchor_policies, name: str = "v_class") -> FunctionClass:
    """State-value tables broadcast over actions (the action is ignored)."""
    if reward_basis.kind != ClassKind.REWARD:
        raise ValueError("reward_basis must have kind REWARD")
    anchors = list(anchor_policies)
    if not anchors:
        raise ValueError("anchor set must be nonempty")
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    elems = []
    for pi in anchors:
        for g in reward_basis.basis:
            v = q_values(mdp, pi, g).v
            elems.append(np.broadcast_to(v[:, :, None], (T, S, A)).copy())
    return FunctionClass(np.stack(elems), float(T), ClassKind.GAME_CLASS,
                         2.0 * T, name)


def make_mixed_class(mdp: TabularMdp, reward_basis: FunctionClass,
                     anchor_policies, name: str = "mixed_class") -> FunctionClass:
    """Union of the Q-class and the value class at the shared 2T scale."""
    qc = induce_q_class(mdp, reward_basis, anchor_policies)
    vc = induce_value_class(mdp, reward_basis, anchor_policies)
    basis = np.concatenate([qc.basis, vc.basis])
    return FunctionClass(basis, float(mdp.horizon), ClassKind.GAME_CLASS,
                         2.0 * mdp.horizon, name)


def default_anchor_policies(mdp: TabularMdp, expert: TimedPolicy,
                            n_random: int = 8, seed: int = 0) -> list[TimedPolicy]:
    """Expert, uniform, and n_random seeded random anchors."""
    from .mdp import random_policy, uniform_policy

    anchors = [expert, uniform_policy(mdp)]
    anchors += [random_policy(mdp, int(np.random.default_rng([seed, i]).integers(2**31)))
                for i in range(n_random)]
    return anchors


def recoverability_H(expert: TimedPolicy, expert_q_class: FunctionClass) -> float:
    """Max advantage magnitude of any class element under the expert.

    H = max over t, s, a, basis f of |f(t,s,a) - E_{a'~pi_E}[f(t,s,a')]|.
    """
    if expert_q_class.kind != ClassKind.ON_POLICY_Q:
        raise ValueError("recoverability is defined for ON_POLICY_Q classes")
    b = expert_q_class.basis  # (m, T, S, A)
    means = np.einsum("mtsa,tsa->mts", b, expert.probs)
    return float(np.max(np.abs(b - means[:, :, :, None])))


def make_game(payoff_kind: PayoffKind, mdp: TabularMdp, expert: TimedPolicy,
              function_class: FunctionClass,
              recoverability: float | None = None) -> GameSpec:
    """GameSpec with the payoff range k implied by the kind and class.

    U1/U2/U4 payoffs land in [-1, 1]; the expert-advantage payoff U3 lands
    in [-H/2T, H/2T] where H is the recoverability constant (computed from
    the class if not supplied).
    """
    if payoff_kind == PayoffKind.U3_ONQ:
        if recoverability is None:
            recoverability = recoverability_H(expert, function_class)
        k = max(recoverability, 1e-12) / (2.0 * mdp.horizon)
    else:
        k = 1.0
    return GameSpec(payoff_kind, mdp, expert, function_class, k)


def _payoff_weight_tensor(game: GameSpec, policy: TimedPolicy) -> np.ndarray:
    """Linear functional g with payoff(f_raw) = <g, f_raw> / (T * scale)."""
    mdp, expert = game.mdp, game.expert
    kind = game.payoff_kind
    if kind in (PayoffKind.U1_REWARD, PayoffKind.U4_MIXED):
        return occupancy(mdp, policy).d - occupancy(mdp, expert).d
    diff = policy.probs - expert.probs
    if kind == PayoffKind.U2_OFFQ:
        ds = occupancy(mdp, expert).state_occupancy()
    else:  # U3: learner visitation, learner-vs-expert action conditionals
        ds = occupancy(mdp, policy).state_occupancy()
    return ds[:, :, None] * diff


def payoff(game: GameSpec, policy: TimedPolicy, discriminator: Discriminator) -> float:
    """Exact payoff of (policy, discriminator); affine in the weights."""
    fc = game.function_class
    if discriminator.weights.shape != (fc.n_vertices,):
        raise ValueError("discriminator does not match the game's class")
    g = _payoff_weight_tensor(game, policy)
    f_raw = fc.combine(discriminator.weights)
    return float(np.einsum("tsa,tsa->", g, f_raw) / (game.mdp.horizon * fc.scale))


def vertex_payoffs(game: GameSpec, policy: TimedPolicy) -> np.ndarray:
    """Payoff at every signed vertex, in vertex-index order."""
    fc = game.function_class
    g = _payoff_weight_tensor(game, policy)
    pos = np.einsum("tsa,itsa->i", g, fc.basis) / (game.mdp.horizon * fc.scale)
    return np.concatenate([pos, -pos])


def best_response_discriminator(game: GameSpec, policy: TimedPolicy
                                ) -> tuple[Discriminator, float]:
    """Payoff-maximizing vertex (affinity puts the sup at a vertex).

    Ties break toward the lowest vertex index.
    """
    vals = vertex_payoffs(game, policy)
    idx = int(np.argmax(vals))
    return vertex_discriminator(game.function_class, idx), float(vals[idx])


def causal_entropy(mdp: TabularMdp, policy: TimedPolicy) -> float:
    """H(pi) = sum_t E_{s~d_t}[-sum_a pi log pi]: visitation-weighted entropy."""
    ds = occupancy(mdp, policy).state_occupancy()
    p = policy.probs
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    return float(-np.einsum("ts,tsa->", ds, plogp))
