"""Benchmark environments with exact symmetry-group actions.

Every environment exposes its state as a flat vector of tagged blocks; the
group acts block-wise through the representation built from those tags, the
dynamics commute with that action, and rewards depend only on invariant
quantities.  Desk-scale physics: unit masses, semi-implicit Euler, viscous
damping.

Action bounds are enforced by Euclidean-norm rescaling, which commutes with
any orthogonal action (componentwise clipping would not).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .groups import (
    FiniteGroup,
    Representation,
    direct_sum,
    make_group,
    sign_representation,
    standard_representation,
    trivial_representation,
)

GRAVITY_CONST = 9.8


@dataclass
class EnvState:
    vector: np.ndarray
    time_index: int = 0


def _rep_from_tags(group: FiniteGroup, tags: tuple[str, ...]) -> Representation:
    parts = []
    for t in tags:
        if t == "std":
            parts.append(standard_representation(group))
        elif t == "triv":
            parts.append(trivial_representation(group))
        elif t == "pseudo":
            parts.append(sign_representation(group))
        else:
            raise ValueError(f"unknown block tag {t!r}")
    return direct_sum(parts)


def norm_clip(v: np.ndarray, limit: float) -> np.ndarray:
    """Rescale v onto the Euclidean ball of the given radius."""
    n = np.linalg.norm(v)
    if n <= limit or n == 0.0:
        return v
    return v * (limit / n)


class GeometricEnv:
    """Base class: episodic, deterministic given the reset draw."""

    name: str
    group: FiniteGroup
    rep_S: Representation
    rep_A: Representation
    state_dim: int
    action_dim: int
    dt: float = 0.05
    damping: float = 0.05
    action_limit: float = 1.0
    target_radius: float = 0.03
    action_penalty: float = 0.0
    reward_mode: str = "sparse"
    episode_len: int = 250
    gravity_enabled: bool = False

    def dynamics(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def reward(self, s: np.ndarray, a: np.ndarray) -> float:
        raise NotImplementedError

    def sample_state(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def reset(self, rng: np.random.Generator) -> EnvState:
        return EnvState(self.sample_state(rng), 0)

    def sample_action(self, rng: np.random.Generator) -> np.ndarray:
        a = rng.uniform(-self.action_limit, self.action_limit, self.action_dim)
        return norm_clip(a, self.action_limit)

    def clip_action(self, a: np.ndarray) -> np.ndarray:
        return norm_clip(np.asarray(a, dtype=float), self.action_limit)

    def step(self, state: EnvState, action: np.ndarray) -> tuple[EnvState, float]:
        s, a = state.vector, np.asarray(action, dtype=float)
        if not np.all(np.isfinite(s)) or not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite state or action")
        r = self.reward(s, a)
        nxt = self.dynamics(s, a)
        return EnvState(nxt, state.time_index + 1), r

    def observe(self, state: EnvState) -> np.ndarray:
        return state.vector.copy()

    def transform_state(self, g: int, s: np.ndarray) -> np.ndarray:
        return self.rep_S.matrix(g) @ s

    def transform_action(self, g: int, a: np.ndarray) -> np.ndarray:
        return self.rep_A.matrix(g) @ a

    def config_dict(self) -> dict:
        return {
            "env": self.name,
            "group": self.group.name,
            "dt": self.dt,
            "damping": self.damping,
            "action_limit": self.action_limit,
            "target_radius": self.target_radius,
            "gravity": self.gravity_enabled,
            "reward_mode": self.reward_mode,
            "episode_len": self.episode_len,
        }


def pointmass_step(
    p: np.ndarray,
    v: np.ndarray,
    a: np.ndarray,
    dt: float,
    damping: float,
    gravity: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Semi-implicit Euler with unit mass and linear damping."""
    accel = a if gravity is None else a + gravity
    v_next = (1.0 - damping * dt) * v + dt * accel
    p_next = p + dt * v_next
    return p_next, v_next


class PointMassEnv(GeometricEnv):
    """Particle pushed by a bounded force toward a target at the origin."""

    def __init__(
        self,
        dim: int = 2,
        group: FiniteGroup | str = "D8",
        reward_mode: str = "sparse",
        gravity_enabled: bool = False,
        target_radius: float = 0.03,
        init_radius: tuple[float, float] = (0.15, 0.5),
        arena_radius: float | None = None,
        **overrides,
    ):
        self.spatial_dim = dim
        self.arena_radius = arena_radius
        self.name = f"pointmass{dim}d"
        self.group = make_group(group) if isinstance(group, str) else group
        if self.group.dim != dim:
            raise ValueError(
                f"group acts on dim {self.group.dim}, environment is {dim}-dimensional"
            )
        self.block_tags = ("std", "std")
        self.rep_S = _rep_from_tags(self.group, self.block_tags)
        self.rep_A = _rep_from_tags(self.group, ("std",))
        self.state_dim = 2 * dim
        self.action_dim = dim
        self.reward_mode = reward_mode
        self.gravity_enabled = gravity_enabled
        self.target_radius = target_radius
        self.init_radius = init_radius
        for k, v in overrides.items():
            setattr(self, k, v)

    def _gravity_vec(self) -> np.ndarray | None:
        if not self.gravity_enabled:
            return None
        g = np.zeros(self.spatial_dim)
        g[-1] = -GRAVITY_CONST
        return g

    def dynamics(self, s, a):
        d = self.spatial_dim
        a = norm_clip(np.asarray(a, dtype=float), self.action_limit)
        p, v = pointmass_step(s[:d], s[d:], a, self.dt, self.damping, self._gravity_vec())
        if self.arena_radius is not None:
            # circular wall: radially clamping the position commutes with
            # every orthogonal action, unlike a box
            p = norm_clip(p, self.arena_radius)
        return np.concatenate([p, v])

    dense_scale = 0.3

    def reward(self, s, a):
        dist = float(np.linalg.norm(s[: self.spatial_dim]))
        pen = self.action_penalty * float(np.dot(a, a))
        if self.reward_mode == "dense":
            # bounded shaping, 1 at the target falling linearly to 0; keeps
            # per-step rewards in [0, 1] like the sparse variant
            return max(0.0, 1.0 - dist / self.dense_scale) - pen
        return (1.0 if dist < self.target_radius else 0.0) - pen

    def sample_state(self, rng):
        lo, hi = self.init_radius
        direction = rng.standard_normal(self.spatial_dim)
        direction /= max(1e-12, np.linalg.norm(direction))
        p = direction * rng.uniform(lo, hi)
        v = rng.uniform(-0.2, 0.2, self.spatial_dim)
        return np.concatenate([p, v])


def nball_step(
    positions: np.ndarray,
    velocities: np.ndarray,
    forces: np.ndarray,
    dt: float,
    damping: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Independent point-mass updates for N particles, (N, d) arrays."""
    if positions.shape != velocities.shape or positions.shape != forces.shape:
        raise ValueError("positions, velocities and forces must share a shape")
    v_next = (1.0 - damping * dt) * velocities + dt * forces
    p_next = positions + dt * v_next
    return p_next, v_next


class NBallEnv(GeometricEnv):
    """N independent particles steered to the origin; the group acts diagonally."""

    def __init__(
        self,
        n_balls: int,
        group: FiniteGroup | str = "octa",
        reward_mode: str = "sparse",
        target_radius: float = 0.03,
        **overrides,
    ):
        if n_balls < 1:
            raise ValueError("need at least one particle")
        self.n_balls = n_balls
        self.spatial_dim = 3
        self.name = f"nball{n_balls}"
        self.group = make_group(group) if isinstance(group, str) else group
        if self.group.dim != 3:
            raise ValueError("N-ball runs in three dimensions")
        self.block_tags = ("std",) * (2 * n_balls)
        self.rep_S = _rep_from_tags(self.group, self.block_tags)
        self.rep_A = _rep_from_tags(self.group, ("std",) * n_balls)
        self.state_dim = 6 * n_balls
        self.action_dim = 3 * n_balls
        self.reward_mode = reward_mode
        self.target_radius = target_radius
        for k, v in overrides.items():
            setattr(self, k, v)

    def _split(self, s):
        n, d = self.n_balls, self.spatial_dim
        return s[: n * d].reshape(n, d), s[n * d :].reshape(n, d)

    def dynamics(self, s, a):
        pos, vel = self._split(s)
        forces = np.asarray(a, dtype=float).reshape(self.n_balls, self.spatial_dim)
        forces = np.stack([norm_clip(f, self.action_limit) for f in forces])
        p, v = nball_step(pos, vel, forces, self.dt, self.damping)
        return np.concatenate([p.ravel(), v.ravel()])

    dense_scale = 0.3

    def reward(self, s, a):
        pos, _ = self._split(s)
        dists = np.linalg.norm(pos, axis=1)
        pen = self.action_penalty * float(np.dot(a, a))
        if self.reward_mode == "dense":
            return float(np.mean(np.maximum(0.0, 1.0 - dists / self.dense_scale))) - pen
        return float(np.mean(dists < self.target_radius)) - pen

    def sample_state(self, rng):
        pos = rng.uniform(-0.5, 0.5, (self.n_balls, 3))
        vel = rng.uniform(-0.2, 0.2, (self.n_balls, 3))
        return np.concatenate([pos.ravel(), vel.ravel()])


def reacher_step(
    internal: np.ndarray,
    torques: np.ndarray,
    dt: float,
    damping: float = 0.5,
    inertia: tuple[float, float] = (1.0, 1.0),
) -> np.ndarray:
    """Two-link arm with decoupled joint inertias, semi-implicit Euler.

    internal = (theta1, theta2, dtheta1, dtheta2, target_x, target_y) with
    theta2 measured relative to the first link.  The simplification keeps the
    rotational/reflective structure of the task exactly while dropping the
    coupled manipulator terms.
    """
    th1, th2, w1, w2, tx, ty = internal
    t1, t2 = torques
    w1n = w1 + dt * (t1 - damping * w1) / inertia[0]
    w2n = w2 + dt * (t2 - damping * w2) / inertia[1]
    return np.array([th1 + dt * w1n, th2 + dt * w2n, w1n, w2n, tx, ty])


class ReacherEnv(GeometricEnv):
    """Planar two-link arm reaching a random target.

    State is the encoded observation; angles live in (cos, sin) pairs.  In the
    local frame the second joint and both angular velocities are invariant
    under rotations but flip sign under reflections, hence the pseudo tags
    (these collapse to trivial blocks for rotation-only groups).  Torques are
    planar pseudoscalars, so the action representation is det(g) times the
    identity.
    """

    link_lengths = (0.12, 0.10)
    joint_damping = 0.5

    def __init__(
        self,
        difficulty: str = "easy",
        frame: str = "local",
        group: FiniteGroup | str = "C8",
        reward_mode: str = "sparse",
        **overrides,
    ):
        if difficulty not in ("easy", "hard"):
            raise ValueError("difficulty must be easy or hard")
        if frame not in ("local", "global"):
            raise ValueError("frame must be local or global")
        self.name = f"reacher-{difficulty}" + ("" if frame == "local" else "-global")
        self.difficulty = difficulty
        self.frame = frame
        self.group = make_group(group) if isinstance(group, str) else group
        if self.group.dim != 2:
            raise ValueError("reacher is planar; use a 2D group")
        if frame == "local":
            self.block_tags = ("std", "triv", "pseudo", "pseudo", "pseudo", "std")
        else:
            self.block_tags = ("std", "std", "pseudo", "pseudo", "std")
        self.rep_S = _rep_from_tags(self.group, self.block_tags)
        self.rep_A = _rep_from_tags(self.group, ("pseudo", "pseudo"))
        self.state_dim = 8
        self.action_dim = 2
        self.target_radius = 0.05 if difficulty == "easy" else 0.015
        self.reward_mode = reward_mode
        for k, v in overrides.items():
            setattr(self, k, v)

    def fingertip(self, th1: float, th2: float) -> np.ndarray:
        l1, l2 = self.link_lengths
        return np.array(
            [
                l1 * np.cos(th1) + l2 * np.cos(th1 + th2),
                l1 * np.sin(th1) + l2 * np.sin(th1 + th2),
            ]
        )

    def encode(self, internal: np.ndarray) -> np.ndarray:
        th1, th2, w1, w2, tx, ty = internal
        delta = np.array([tx, ty]) - self.fingertip(th1, th2)
        if self.frame == "local":
            return np.array(
                [np.cos(th1), np.sin(th1), np.cos(th2), np.sin(th2), w1, w2, *delta]
            )
        fx, fy = self.fingertip(th1, th2)
        return np.array([np.cos(th1), np.sin(th1), fx, fy, w1, w2, *delta])

    def decode(self, obs: np.ndarray) -> np.ndarray:
        th1 = float(np.arctan2(obs[1], obs[0]))
        if self.frame == "local":
            th2 = float(np.arctan2(obs[3], obs[2]))
        else:
            l1 = self.link_lengths[0]
            tip_rel = np.array([obs[2], obs[3]]) - l1 * np.array(
                [np.cos(th1), np.sin(th1)]
            )
            th2 = float(np.arctan2(tip_rel[1], tip_rel[0])) - th1
        w1, w2 = float(obs[4]), float(obs[5])
        target = self.fingertip(th1, th2) + obs[6:8]
        return np.array([th1, th2, w1, w2, *target])

    def dynamics(self, s, a):
        a = norm_clip(np.asarray(a, dtype=float), self.action_limit)
        internal = self.decode(np.asarray(s, dtype=float))
        return self.encode(
            reacher_step(internal, a, self.dt, self.joint_damping)
        )

    def reward(self, s, a):
        dist = float(np.linalg.norm(s[6:8]))
        pen = self.action_penalty * float(np.dot(a, a))
        if self.reward_mode == "dense":
            reach = sum(self.link_lengths)
            return max(0.0, 1.0 - dist / reach) - pen
        return (1.0 if dist < self.target_radius else 0.0) - pen

    def sample_state(self, rng):
        th1 = rng.uniform(-np.pi, np.pi)
        th2 = rng.uniform(-np.pi, np.pi)
        w1, w2 = rng.uniform(-1.0, 1.0, 2)
        reach = sum(self.link_lengths)
        ang = rng.uniform(-np.pi, np.pi)
        rad = rng.uniform(0.3 * reach, 0.95 * reach)
        target = rad * np.array([np.cos(ang), np.sin(ang)])
        return self.encode(np.array([th1, th2, w1, w2, *target]))


def check_env_equivariance(
    env: GeometricEnv, samples: int = 200, rng_seed: int = 0
) -> tuple[float, float]:
    """Max two-path residuals of dynamics equivariance and reward invariance."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    dyn_res = rew_res = 0.0
    for _ in range(samples):
        g = int(rng.integers(env.group.order))
        s = env.sample_state(rng)
        a = env.sample_action(rng)
        gs, ga = env.transform_state(g, s), env.transform_action(g, a)
        two_path = env.dynamics(gs, ga)
        one_path = env.transform_state(g, env.dynamics(s, a))
        dyn_res = max(dyn_res, float(np.max(np.abs(two_path - one_path))))
        rew_res = max(rew_res, abs(env.reward(gs, ga) - env.reward(s, a)))
    return dyn_res, rew_res


def make_env(name: str, group: str | None = None, **overrides) -> GeometricEnv:
    """Environment factory for CLI names like pointmass2d, nball3, reacher-hard.

    group "none" selects the trivial group of the right spatial dimension,
    giving the unconstrained baseline over identical physics.
    """
    key = name.strip().lower()

    def pick(default: str, dim: int) -> str:
        if group is None:
            return default
        if group.strip().lower() in ("none", "c1", "trivial"):
            return f"id{dim}"
        return group

    if key in ("pointmass2d", "pointmass"):
        return PointMassEnv(dim=2, group=pick("D8", 2), **overrides)
    if key == "pointmass3d":
        return PointMassEnv(dim=3, group=pick("octa", 3), **overrides)
    if key.startswith("nball") and key[5:].isdigit():
        return NBallEnv(int(key[5:]), group=pick("octa", 3), **overrides)
    if key.startswith("reacher"):
        parts = key.split("-")
        difficulty = parts[1] if len(parts) > 1 else "easy"
        frame = "global" if "global" in parts[2:] else overrides.pop("frame", "local")
        return ReacherEnv(
            difficulty=difficulty, frame=frame, group=pick("C8", 2), **overrides
        )
    raise ValueError(f"unknown environment {name!r}")


def run_episode(
    env: GeometricEnv,
    policy,
    rng: np.random.Generator,
    max_steps: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Roll one episode; returns (states, actions, rewards) arrays."""
    steps = max_steps or env.episode_len
    state = env.reset(rng)
    states = [state.vector.copy()]
    actions, rewards = [], []
    for _ in range(steps):
        a = env.clip_action(policy(state.vector))
        state, r = env.step(state, a)
        states.append(state.vector.copy())
        actions.append(a)
        rewards.append(r)
    return np.array(states), np.array(actions), np.array(rewards)
