"""Sampling-based planning and a tabular value-iteration demonstrator.

The planner is a path-integral style loop: sample action sequences around a
mean, score them with learned or ground-truth models, and re-fit the mean to
a softmax-weighted elite set.  Noise scales are isotropic per timestep so the
sampling law commutes with orthogonal action transformations; with coupled
noise the whole planning step is then exactly equivariant, not just in
distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .envs import GeometricEnv
from .groups import Representation


class PlanningFailureError(RuntimeError):
    """Raised when every sampled trajectory scores non-finite."""


class SymmetryViolationError(ValueError):
    """Raised when a tabular model's permutation action is inconsistent."""


@dataclass
class Trajectory:
    states: np.ndarray            # (H + 1, d_s)
    actions: np.ndarray           # (H, d_a)
    rewards: np.ndarray | None = None

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise ValueError("need exactly one more state than actions")
        if self.rewards is not None and len(self.rewards) != len(self.actions):
            raise ValueError("rewards must align with actions")

    @property
    def horizon(self) -> int:
        return len(self.actions)


@dataclass
class MppiConfig:
    num_samples: int = 256
    horizon: int = 10
    iterations: int = 6
    temperature: float = 0.5
    top_k: int = 32
    noise_std: float = 0.5
    noise_std_min: float = 0.05
    discount: float = 0.99
    policy_fraction: float = 0.05
    action_limit: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (self.num_samples >= self.top_k >= 1):
            raise ValueError("need num_samples >= top_k >= 1")
        if not (0.0 < self.discount <= 1.0):
            raise ValueError("discount must be in (0, 1]")


@dataclass
class PlannerModels:
    """Batched callables the planner scores trajectories with.

    dynamics: (N, d_s), (N, d_a) -> (N, d_s)
    reward:   (N, d_s), (N, d_a) -> (N,)
    terminal_value: (N, d_s) -> (N,), the bootstrap value of the final state
    policy:   (N, d_s) -> (N, d_a), used for the policy-seeded sample fraction
    """

    dynamics: Callable
    reward: Callable
    terminal_value: Callable | None = None
    policy: Callable | None = None


def env_models(env: GeometricEnv) -> PlannerModels:
    """Ground-truth models backed by the environment's own functions."""

    def dyn(S, A):
        return np.stack([env.dynamics(s, a) for s, a in zip(S, A)])

    def rew(S, A):
        return np.array([env.reward(s, a) for s, a in zip(S, A)])

    return PlannerModels(dynamics=dyn, reward=rew)


def rollout(
    models: PlannerModels, s0: np.ndarray, action_sequence: np.ndarray
) -> Trajectory:
    """Deterministic rollout of one action sequence under the dynamics model."""
    s0 = np.asarray(s0, dtype=float)
    actions = np.atleast_2d(np.asarray(action_sequence, dtype=float))
    if actions.size == 0:
        return Trajectory(states=s0[None, :], actions=np.zeros((0, 0)))
    states = [s0]
    rewards = []
    s = s0[None, :]
    for a in actions:
        rewards.append(float(models.reward(s, a[None, :])[0]))
        s = models.dynamics(s, a[None, :])
        if not np.all(np.isfinite(s)):
            raise FloatingPointError("dynamics model produced non-finite state")
        states.append(s[0].copy())
    return Trajectory(
        states=np.array(states), actions=actions.copy(), rewards=np.array(rewards)
    )


def trajectory_return(
    traj: Trajectory,
    reward_model: Callable,
    q_model: Callable | None,
    gamma: float,
) -> float:
    """Discounted model-reward sum plus a terminal value bootstrap.

    q_model maps the final state to its bootstrap value (the action there is
    the policy's own choice, folded into the callable); omit it for a pure
    reward sum.
    """
    if traj.horizon < 1:
        raise ValueError("trajectory needs at least one action")
    total = 0.0
    for t in range(traj.horizon):
        r = float(reward_model(traj.states[t][None, :], traj.actions[t][None, :])[0])
        total += (gamma**t) * r
    if q_model is not None:
        total += (gamma**traj.horizon) * float(q_model(traj.states[-1][None, :])[0])
    return total


def transform_trajectory(
    traj: Trajectory, g: int, rep_S: Representation, rep_A: Representation
) -> Trajectory:
    """Element-wise group action on every state and action of a trajectory."""
    states = traj.states @ rep_S.matrix(g).T
    actions = traj.actions @ rep_A.matrix(g).T if traj.actions.size else traj.actions
    rewards = None if traj.rewards is None else traj.rewards.copy()
    return Trajectory(states=states, actions=actions, rewards=rewards)


def shift_warm_start(mean: np.ndarray) -> np.ndarray:
    """Advance the previous plan one step, padding the tail with zeros."""
    out = np.zeros_like(mean)
    out[:-1] = mean[1:]
    return out


def _norm_clip_rows(a: np.ndarray, limit: float) -> np.ndarray:
    norms = np.linalg.norm(a, axis=-1, keepdims=True)
    scale = np.minimum(1.0, limit / np.maximum(norms, 1e-12))
    return a * scale


def _batch_returns(
    models: PlannerModels, s0: np.ndarray, actions: np.ndarray, gamma: float
) -> np.ndarray:
    """Returns of (N, H, d_a) action tensors rolled from a shared start state."""
    n, horizon, _ = actions.shape
    s = np.repeat(s0[None, :], n, axis=0)
    total = np.zeros(n)
    for t in range(horizon):
        total += (gamma**t) * models.reward(s, actions[:, t])
        s = models.dynamics(s, actions[:, t])
    if models.terminal_value is not None:
        total += (gamma**horizon) * models.terminal_value(s)
    return total


def _policy_rollout_actions(
    models: PlannerModels,
    s0: np.ndarray,
    noise: np.ndarray,
    std: np.ndarray,
    limit: float,
) -> np.ndarray:
    """Actions chosen by the policy along its own rollout, jittered by noise."""
    n, horizon, d_a = noise.shape
    s = np.repeat(s0[None, :], n, axis=0)
    actions = np.empty_like(noise)
    for t in range(horizon):
        a = models.policy(s) + std[t] * noise[:, t]
        a = _norm_clip_rows(a, limit)
        actions[:, t] = a
        s = models.dynamics(s, a)
    return actions


def mppi_plan(
    models: PlannerModels,
    s0: np.ndarray,
    config: MppiConfig,
    warm_start: np.ndarray | None = None,
    noise: np.ndarray | None = None,
    trace: list | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Iteratively refit the action-sequence mean to softmax-weighted elites.

    Returns (first action of the final mean, the final mean for warm starts).
    noise, when given, must have shape (iterations, N, H, d_a) and replaces
    the internally drawn standard-normal tensor; per-trajectory slices are
    indexed deterministically so batched and sequential evaluation agree.
    trace, when given, collects one record per iteration with the elite
    return statistics.
    """
    s0 = np.asarray(s0, dtype=float)
    horizon, n = config.horizon, config.num_samples
    d_a = warm_start.shape[1] if warm_start is not None else None
    if d_a is None:
        if models.policy is None:
            raise ValueError("need a warm start or a policy to size the action space")
        d_a = models.policy(s0[None, :]).shape[1]
    mean = (
        warm_start.copy() if warm_start is not None else np.zeros((horizon, d_a))
    )
    std = np.full(horizon, config.noise_std)
    rng = np.random.default_rng(config.seed)
    n_policy = (
        min(n, max(1, int(round(config.policy_fraction * n))))
        if models.policy is not None and config.policy_fraction > 0
        else 0
    )
    for it in range(config.iterations):
        eps = (
            noise[it]
            if noise is not None
            else rng.standard_normal((n, horizon, d_a))
        )
        actions = mean[None, :, :] + std[None, :, None] * eps
        actions = _norm_clip_rows(actions, config.action_limit)
        if n_policy:
            actions[:n_policy] = _policy_rollout_actions(
                models, s0, eps[:n_policy], std, config.action_limit
            )
        returns = _batch_returns(models, s0, actions, config.discount)
        finite = np.isfinite(returns)
        if not np.any(finite):
            raise PlanningFailureError("all sampled trajectory returns are non-finite")
        returns = np.where(finite, returns, -np.inf)
        elite_idx = np.argsort(-returns, kind="stable")[: config.top_k]
        elite_returns = returns[elite_idx]
        if trace is not None:
            trace.append(
                {
                    "iteration": it,
                    "elite_mean": float(np.mean(elite_returns)),
                    "elite_best": float(elite_returns[0]),
                }
            )
        weights = np.exp((elite_returns - elite_returns[0]) / config.temperature)
        weights /= weights.sum()
        elite_actions = actions[elite_idx]
        mean = np.einsum("i,ihd->hd", weights, elite_actions)
        spread = np.einsum(
            "i,ihd->hd", weights, (elite_actions - mean[None]) ** 2
        ).mean(axis=1)
        std = np.maximum(np.sqrt(spread), config.noise_std_min)
    return mean[0].copy(), mean


@dataclass
class TabularGmdp:
    """Finite MDP with deterministic transitions and a permutation symmetry.

    Deterministic transitions keep Bellman backups single-term, so symmetric
    tables produce bit-identical values across an orbit (sums never reorder).
    """

    rewards: np.ndarray          # (S, A)
    next_state: np.ndarray       # (S, A) int
    state_perms: np.ndarray      # (n_g, S) int, g . s = state_perms[g][s]
    action_perms: np.ndarray     # (n_g, A) int

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]

    def validate_symmetry(self, check_reward: bool = True) -> None:
        s_idx = np.arange(self.n_states)
        for g, (sp, ap) in enumerate(zip(self.state_perms, self.action_perms)):
            if sorted(sp) != list(s_idx) or sorted(ap) != list(range(self.n_actions)):
                raise SymmetryViolationError(f"element {g}: not a permutation")
            trans_two_path = self.next_state[sp[:, None], ap[None, :]]
            trans_one_path = sp[self.next_state]
            if not np.array_equal(trans_two_path, trans_one_path):
                raise SymmetryViolationError(
                    f"element {g}: transitions do not commute with the permutation"
                )
            if check_reward and not np.array_equal(
                self.rewards[sp[:, None], ap[None, :]], self.rewards
            ):
                raise SymmetryViolationError(
                    f"element {g}: rewards are not invariant"
                )


def tabular_value_iteration(
    gmdp: TabularGmdp, gamma: float, iters: int, validate: bool = True
) -> np.ndarray:
    """Bellman backups V(s) <- max_a [R(s, a) + gamma V(s')] on tables."""
    if validate:
        gmdp.validate_symmetry()
    v = np.zeros(gmdp.n_states)
    for _ in range(iters):
        v = np.max(gmdp.rewards + gamma * v[gmdp.next_state], axis=1)
    return v


def value_orbit_spread(gmdp: TabularGmdp, v: np.ndarray) -> float:
    """Max |V(g . s) - V(s)| over group elements and states."""
    return float(max(np.max(np.abs(v[sp] - v)) for sp in gmdp.state_perms))


def c4_grid_gmdp(size: int, broken_cell: int | None = None) -> TabularGmdp:
    """Odd-sized grid world whose quarter-turn about the center is a symmetry.

    Actions are stay/E/N/W/S with clamped moves; reward 1 on the center cell.
    broken_cell, when given, adds reward on one off-center cell to break the
    symmetry deliberately.
    """
    if size % 2 == 0:
        raise ValueError("grid size must be odd so the center cell exists")
    c = (size - 1) // 2
    dirs = [(0, 0), (1, 0), (0, 1), (-1, 0), (0, -1)]  # stay, E, N, W, S
    n_states, n_actions = size * size, len(dirs)

    def sid(x: int, y: int) -> int:
        return y * size + x

    next_state = np.empty((n_states, n_actions), dtype=np.int64)
    rewards = np.zeros((n_states, n_actions))
    for y in range(size):
        for x in range(size):
            s = sid(x, y)
            if x == c and y == c:
                rewards[s, :] = 1.0
            for ai, (dx, dy) in enumerate(dirs):
                nx = min(size - 1, max(0, x + dx))
                ny = min(size - 1, max(0, y + dy))
                next_state[s, ai] = sid(nx, ny)
    if broken_cell is not None:
        rewards[broken_cell, :] += 0.5
    # quarter turn: relative (u, v) -> (-v, u); actions E->N->W->S->E
    state_perm = np.empty(n_states, dtype=np.int64)
    for y in range(size):
        for x in range(size):
            u, v = x - c, y - c
            state_perm[sid(x, y)] = sid(-v + c, u + c)
    action_perm = np.array([0, 2, 3, 4, 1], dtype=np.int64)
    state_perms = [np.arange(n_states, dtype=np.int64)]
    action_perms = [np.arange(n_actions, dtype=np.int64)]
    for _ in range(3):
        state_perms.append(state_perm[state_perms[-1]])
        action_perms.append(action_perm[action_perms[-1]])
    return TabularGmdp(
        rewards=rewards,
        next_state=next_state,
        state_perms=np.array(state_perms),
        action_perms=np.array(action_perms),
    )
