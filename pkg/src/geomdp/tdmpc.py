"""Desk-scale latent model-based RL with planning at action time.

Five networks are trained jointly from replayed segments: an encoder into a
latent space carrying multiples of the regular representation, a latent
dynamics model, a reward head, twin value heads with EMA target copies, and a
policy.  Acting runs the sampling-based planner on the latent models with the
value heads as terminal bootstrap.  All networks are equivariant by
construction, which makes every loss term invariant under batch
transformations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import eqnet
from .envs import GeometricEnv, make_env
from .eqnet import EqMlp, eqmlp_init, make_optimizer, regular_rep_multiple
from .groups import Representation, direct_sum
from .planner import MppiConfig, PlannerModels, mppi_plan, shift_warm_start


class TrainingFailureError(RuntimeError):
    """Raised when the loss turns non-finite during training."""


@dataclass
class TrainConfig:
    seed_steps: int = 0                 # warmup episodes collected with random actions
    total_env_steps: int = 50_000
    batch_size: int = 256
    rollout_horizon: int = 5
    discount: float = 0.99
    consistency_coef: float = 2.0
    reward_coef: float = 0.5
    value_coef: float = 0.1
    policy_coef: float = 1.0
    ema_rate: float = 0.01
    lr: float = 1e-3
    optimizer: str = "adam"
    update_ratio: float = 1.0           # gradient steps per collected env step
    eval_every: int = 5000
    eval_episodes: int = 3
    exploration_std: float = 0.1
    buffer_capacity: int = 1000         # episodes
    hidden_width: int = 32              # baseline scalar width before strategy scaling
    latent_channels: int = 16           # baseline latent width before strategy scaling
    depth: int = 3
    width_strategy: str = "sqrt"
    seeds: list[int] = field(default_factory=lambda: [0])
    planner: MppiConfig = field(default_factory=lambda: MppiConfig(
        num_samples=64, horizon=8, iterations=3, top_k=16, seed=0
    ))

    def __post_init__(self):
        if self.total_env_steps <= 0 or self.batch_size <= 0:
            raise ValueError("step and batch counts must be positive")
        if not (0.0 < self.discount <= 1.0):
            raise ValueError("discount must be in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelSet:
    """Joint networks plus EMA target copies of encoder, dynamics, and values."""

    encoder: EqMlp
    dynamics: EqMlp
    reward: EqMlp
    q1: EqMlp
    q2: EqMlp
    policy: EqMlp
    encoder_target: EqMlp
    dynamics_target: EqMlp
    q1_target: EqMlp
    q2_target: EqMlp
    rep_S: Representation
    rep_A: Representation
    rep_Z: Representation
    group_name: str
    rng_seed: int

    MODEL_NETS = ("encoder", "dynamics", "reward", "q1", "q2")
    TARGET_PAIRS = (
        ("encoder", "encoder_target"),
        ("dynamics", "dynamics_target"),
        ("q1", "q1_target"),
        ("q2", "q2_target"),
    )

    @property
    def latent_dim(self) -> int:
        return self.rep_Z.dim_rep

    def nets(self) -> dict[str, EqMlp]:
        return {
            "encoder": self.encoder,
            "dynamics": self.dynamics,
            "reward": self.reward,
            "q1": self.q1,
            "q2": self.q2,
            "policy": self.policy,
        }

    @property
    def param_count(self) -> int:
        return sum(net.param_count for net in self.nets().values())

    def model_params(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).get_params() for n in self.MODEL_NETS])

    def set_model_params(self, flat: np.ndarray) -> None:
        off = 0
        for n in self.MODEL_NETS:
            net = getattr(self, n)
            k = net.param_count
            net.set_params(flat[off : off + k])
            off += k

    def ema_update(self, rate: float) -> None:
        for online_name, target_name in self.TARGET_PAIRS:
            online = getattr(self, online_name)
            target = getattr(self, target_name)
            target.set_params(
                (1.0 - rate) * target.get_params() + rate * online.get_params()
            )

    def save(self, path: str, extra: dict | None = None) -> None:
        nets = dict(self.nets())
        for _, tname in self.TARGET_PAIRS:
            nets[tname] = getattr(self, tname)
        eqnet.save_checkpoint(path, nets, self.group_name, self.rng_seed, extra=extra)

    def restore(self, path: str) -> None:
        header, payload = eqnet.load_checkpoint(path)
        nets = dict(self.nets())
        for _, tname in self.TARGET_PAIRS:
            nets[tname] = getattr(self, tname)
        eqnet.restore_params(nets, header, payload)


ALL_COMPONENTS = ("transition", "q", "pi")


def _dense_rep(dim: int) -> Representation:
    """Unconstrained stand-in: dim trivial blocks over the one-element group."""
    from .groups import make_cyclic, trivial_representation

    group = make_cyclic(1)
    return direct_sum([trivial_representation(group)] * dim)


def build_models(
    env: GeometricEnv,
    config: TrainConfig,
    rng_seed: int = 0,
    equivariant_components: tuple[str, ...] = ALL_COMPONENTS,
) -> ModelSet:
    """Construct the network set for an environment's group and representations.

    equivariant_components selects which parts respect the group: "transition"
    covers encoder/dynamics/reward, "q" the twin value heads, "pi" the policy.
    Disabled parts become dense networks of matching dimensions (use the
    linear width strategy when mixing so feature sizes line up).
    """
    group = env.group
    latent_mult = eqnet.hidden_multiplicity_for(
        config.latent_channels, group.order, config.width_strategy
    )
    rep_Z = regular_rep_multiple(group, latent_mult)
    rep_ZA = direct_sum([rep_Z, env.rep_A])
    trivial_out = Representation(
        group, 1, np.ones((group.order, 1, 1)), name="trivial"
    )
    w, d, strat = config.hidden_width, config.depth, config.width_strategy
    dense_w = eqnet.hidden_multiplicity_for(w, group.order, strat) * group.order

    def net(in_rep, out_rep, depth, seed, equivariant):
        if equivariant:
            return eqmlp_init(in_rep, out_rep, w, depth, strat, rng_seed=seed)
        return eqmlp_init(
            _dense_rep(in_rep.dim_rep),
            _dense_rep(out_rep.dim_rep),
            dense_w,
            depth,
            "none",
            rng_seed=seed,
        )

    eq = set(equivariant_components)
    unknown = eq - set(ALL_COMPONENTS)
    if unknown:
        raise ValueError(f"unknown components {sorted(unknown)}")
    base = rng_seed * 101
    specs = {
        "encoder": (env.rep_S, rep_Z, max(2, d - 1), base + 1, "transition" in eq),
        "dynamics": (rep_ZA, rep_Z, d, base + 2, "transition" in eq),
        "reward": (rep_ZA, trivial_out, d, base + 3, "transition" in eq),
        "q1": (rep_ZA, trivial_out, d, base + 4, "q" in eq),
        "q2": (rep_ZA, trivial_out, d, base + 5, "q" in eq),
        "policy": (rep_Z, env.rep_A, d, base + 6, "pi" in eq),
    }
    nets = {name: net(*spec) for name, spec in specs.items()}

    def clone(name: str) -> EqMlp:
        copy = net(*specs[name])
        copy.set_params(nets[name].get_params().copy())
        return copy

    return ModelSet(
        encoder=nets["encoder"],
        dynamics=nets["dynamics"],
        reward=nets["reward"],
        q1=nets["q1"],
        q2=nets["q2"],
        policy=nets["policy"],
        encoder_target=clone("encoder"),
        dynamics_target=clone("dynamics"),
        q1_target=clone("q1"),
        q2_target=clone("q2"),
        rep_S=env.rep_S,
        rep_A=env.rep_A,
        rep_Z=rep_Z,
        group_name=group.name,
        rng_seed=rng_seed,
    )


class ReplayBuffer:
    """Ring buffer of whole episodes; segments never cross episode bounds."""

    def __init__(self, capacity: int, horizon: int):
        self.capacity = capacity
        self.horizon = horizon
        self.episodes: list[dict] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self.episodes)

    @property
    def total_steps(self) -> int:
        return sum(len(ep["rewards"]) for ep in self.episodes)

    def add(self, states: np.ndarray, actions: np.ndarray, rewards: np.ndarray) -> None:
        if len(states) != len(actions) + 1 or len(actions) != len(rewards):
            raise ValueError("episode arrays are inconsistent")
        if len(actions) < self.horizon:
            raise ValueError("episode shorter than the sampling horizon")
        ep = {"states": states, "actions": actions, "rewards": rewards}
        if len(self.episodes) < self.capacity:
            self.episodes.append(ep)
        else:
            self.episodes[self._cursor] = ep
            self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if not self.episodes:
            raise ValueError("cannot sample from an empty buffer")
        k = self.horizon
        ep_idx = rng.integers(len(self.episodes), size=batch_size)
        s = np.empty((batch_size, k + 1, self.episodes[0]["states"].shape[1]))
        a = np.empty((batch_size, k, self.episodes[0]["actions"].shape[1]))
        r = np.empty((batch_size, k))
        for row, ei in enumerate(ep_idx):
            ep = self.episodes[ei]
            t0 = int(rng.integers(len(ep["actions"]) - k + 1))
            s[row] = ep["states"][t0 : t0 + k + 1]
            a[row] = ep["actions"][t0 : t0 + k]
            r[row] = ep["rewards"][t0 : t0 + k]
        return {"states": s, "actions": a, "rewards": r}


def td_target(models: ModelSet, z_next: np.ndarray, r: np.ndarray, gamma: float) -> np.ndarray:
    """Bootstrap r + gamma * min(q1, q2)_target at the policy's next action."""
    z_next = np.atleast_2d(z_next)
    a_next = models.policy.forward(z_next)
    za = np.concatenate([z_next, a_next], axis=1)
    q1 = models.q1_target.forward(za)[:, 0]
    q2 = models.q2_target.forward(za)[:, 0]
    return np.asarray(r) + gamma * np.minimum(q1, q2)


def compute_losses(models: ModelSet, batch: dict, config: TrainConfig) -> dict:
    """Loss terms only (no gradients); used for invariance checks and logging."""
    s, a, r = batch["states"], batch["actions"], batch["rewards"]
    n_batch, k = a.shape[0], a.shape[1]
    z = models.encoder.forward(s[:, 0])
    dz = z.shape[1]
    cons = rew = val = 0.0
    for t in range(k):
        za = np.concatenate([z, a[:, t]], axis=1)
        r_pred = models.reward.forward(za)[:, 0]
        q1 = models.q1.forward(za)[:, 0]
        q2 = models.q2.forward(za)[:, 0]
        z_next = models.dynamics.forward(za)
        y = td_target(models, z_next, r[:, t], config.discount)
        z_tgt = models.encoder_target.forward(s[:, t + 1])
        cons += float(np.mean(np.sum((z_next - z_tgt) ** 2, axis=1) / dz))
        rew += float(np.mean((r_pred - r[:, t]) ** 2))
        val += 0.5 * float(np.mean((q1 - y) ** 2) + np.mean((q2 - y) ** 2))
        z = z_next
    zs_flat = models.encoder.forward(s[:, 0])
    a_pi = models.policy.forward(zs_flat)
    za_pi = np.concatenate([zs_flat, a_pi], axis=1)
    pol = -float(
        np.mean(
            np.minimum(
                models.q1.forward(za_pi)[:, 0], models.q2.forward(za_pi)[:, 0]
            )
        )
    )
    total = (
        config.consistency_coef * cons
        + config.reward_coef * rew
        + config.value_coef * val
        + config.policy_coef * pol
    )
    return {
        "consistency": cons,
        "reward": rew,
        "value": val,
        "policy": pol,
        "total": total,
    }


def td_targets_for_batch(models: ModelSet, batch: dict, config: TrainConfig) -> list[np.ndarray]:
    """Per-step TD bootstraps along the latent rollout (no gradients)."""
    s, a, r = batch["states"], batch["actions"], batch["rewards"]
    z = models.encoder.forward(s[:, 0])
    ys = []
    for t in range(a.shape[1]):
        z = models.dynamics.forward(np.concatenate([z, a[:, t]], axis=1))
        ys.append(td_target(models, z, r[:, t], config.discount))
    return ys


def model_loss_and_grad(
    models: ModelSet,
    batch: dict,
    config: TrainConfig,
    frozen_ys: list[np.ndarray] | None = None,
) -> tuple[dict, np.ndarray]:
    """Model losses and their gradient w.r.t. the concatenated model parameters.

    Backpropagates through the latent rollout z_{t+1} = d(z_t, a_t); target
    quantities (encoder targets, TD bootstraps) carry no gradient.  frozen_ys
    pins the bootstraps to externally computed values, which is what a
    finite-difference probe of this loss must differentiate against.
    """
    s, a, r = batch["states"], batch["actions"], batch["rewards"]
    n_batch, k = a.shape[0], a.shape[1]
    dz = models.latent_dim

    # Latent rollout is inherently sequential; the reward/value heads and all
    # target evaluations are batched across time afterwards.
    z0, enc_cache = models.encoder.forward_cached(s[:, 0])
    zs = [z0]
    caches_d = []
    for t in range(k):
        z_next, c_d = models.dynamics.forward_cached(
            np.concatenate([zs[t], a[:, t]], axis=1)
        )
        zs.append(z_next)
        caches_d.append(c_d)

    za_all = np.concatenate(
        [np.concatenate([zs[t], a[:, t]], axis=1) for t in range(k)], axis=0
    )
    r_all, cache_r = models.reward.forward_cached(za_all)
    q1_all, cache_q1 = models.q1.forward_cached(za_all)
    q2_all, cache_q2 = models.q2.forward_cached(za_all)
    r_pred = r_all[:, 0].reshape(k, n_batch)
    q1_pred = q1_all[:, 0].reshape(k, n_batch)
    q2_pred = q2_all[:, 0].reshape(k, n_batch)

    z_next_all = np.concatenate(zs[1:], axis=0)                     # (k B, dz)
    z_tgt_all = models.encoder_target.forward(
        np.concatenate([s[:, t + 1] for t in range(k)], axis=0)
    )
    r_true = np.stack([r[:, t] for t in range(k)])                  # (k, B)

    if frozen_ys is not None:
        ys = np.stack(frozen_ys)
    else:
        ys = td_target(
            models, z_next_all, r_true.reshape(-1), config.discount
        ).reshape(k, n_batch)

    diff_z = z_next_all - z_tgt_all
    cons = float(np.sum(diff_z**2) / (n_batch * dz))
    rew = float(np.sum((r_pred - r_true) ** 2) / n_batch)
    val = 0.5 * float(
        (np.sum((q1_pred - ys) ** 2) + np.sum((q2_pred - ys) ** 2)) / n_batch
    )
    total = (
        config.consistency_coef * cons + config.reward_coef * rew + config.value_coef * val
    )
    if not np.isfinite(total):
        raise TrainingFailureError(
            f"non-finite model loss (consistency={cons}, reward={rew}, value={val})"
        )

    grads = {name: np.zeros(getattr(models, name).param_count) for name in models.MODEL_NETS}
    d_r_up = (config.reward_coef * 2.0 / n_batch) * (r_pred - r_true).reshape(-1, 1)
    g_r, dza_r = models.reward.backward(cache_r, d_r_up)
    grads["reward"] += g_r
    d_q1_up = (config.value_coef / n_batch) * (q1_pred - ys).reshape(-1, 1)
    g_q1, dza_q1 = models.q1.backward(cache_q1, d_q1_up)
    grads["q1"] += g_q1
    d_q2_up = (config.value_coef / n_batch) * (q2_pred - ys).reshape(-1, 1)
    g_q2, dza_q2 = models.q2.backward(cache_q2, d_q2_up)
    grads["q2"] += g_q2
    dz_heads = (dza_r + dza_q1 + dza_q2)[:, :dz].reshape(k, n_batch, dz)
    d_cons = (config.consistency_coef * 2.0 / (n_batch * dz)) * diff_z.reshape(
        k, n_batch, dz
    )

    dz_next = np.zeros_like(z0)
    for t in reversed(range(k)):
        g_d, dza_d = models.dynamics.backward(caches_d[t], dz_next + d_cons[t])
        grads["dynamics"] += g_d
        dz_next = dza_d[:, :dz] + dz_heads[t]
    g_enc, _ = models.encoder.backward(enc_cache, dz_next)
    grads["encoder"] += g_enc

    flat = np.concatenate([grads[n] for n in models.MODEL_NETS])
    losses = {"consistency": cons, "reward": rew, "value": val, "model_total": total}
    return losses, flat


def policy_loss_and_grad(
    models: ModelSet, batch: dict, config: TrainConfig
) -> tuple[float, np.ndarray]:
    """Policy loss -E[min q(z, pi(z))] and its gradient w.r.t. policy params.

    Latents are detached and the value heads act as a frozen critic; only the
    action-input gradient flows back into the policy.
    """
    s = batch["states"]
    z = models.encoder.forward(s[:, 0])
    n_batch = z.shape[0]
    a_pi, pi_cache = models.policy.forward_cached(z)
    za = np.concatenate([z, a_pi], axis=1)
    q1, c_q1 = models.q1.forward_cached(za)
    q2, c_q2 = models.q2.forward_cached(za)
    q1, q2 = q1[:, 0], q2[:, 0]
    take_q1 = (q1 <= q2).astype(float)
    loss = -float(np.mean(np.minimum(q1, q2)))
    scale = -config.policy_coef / n_batch
    _, dza1 = models.q1.backward(c_q1, (scale * take_q1)[:, None])
    _, dza2 = models.q2.backward(c_q2, (scale * (1.0 - take_q1))[:, None])
    d_a = (dza1 + dza2)[:, models.latent_dim :]
    g_pi, _ = models.policy.backward(pi_cache, d_a)
    return loss, g_pi


class Trainer:
    """Owns the optimizers and applies one combined update per train_step."""

    def __init__(self, models: ModelSet, config: TrainConfig):
        self.models = models
        self.config = config
        self.model_opt = make_optimizer(config.optimizer, config.lr)
        self.policy_opt = make_optimizer(config.optimizer, config.lr)

    def train_step(self, batch: dict) -> dict:
        models, config = self.models, self.config
        losses, g_model = model_loss_and_grad(models, batch, config)
        pol_loss, g_pi = policy_loss_and_grad(models, batch, config)
        if not np.isfinite(pol_loss):
            raise TrainingFailureError("non-finite policy loss")
        models.set_model_params(
            self.model_opt.step(models.model_params(), g_model)
        )
        if config.policy_coef != 0.0:
            models.policy.set_params(
                self.policy_opt.step(models.policy.get_params(), g_pi)
            )
        models.ema_update(config.ema_rate)
        losses["policy"] = pol_loss
        losses["total"] = losses["model_total"] + config.policy_coef * pol_loss
        return losses


def latent_planner_models(models: ModelSet) -> PlannerModels:
    """Latent-space model bundle for the planner."""

    def dyn(Z, A):
        return models.dynamics.forward(np.concatenate([Z, A], axis=1))

    def rew(Z, A):
        return models.reward.forward(np.concatenate([Z, A], axis=1))[:, 0]

    def terminal(Z):
        A = models.policy.forward(Z)
        za = np.concatenate([Z, A], axis=1)
        return np.minimum(
            models.q1.forward(za)[:, 0], models.q2.forward(za)[:, 0]
        )

    return PlannerModels(
        dynamics=dyn, reward=rew, terminal_value=terminal, policy=models.policy.forward
    )


def collect_episode(
    env: GeometricEnv,
    models: ModelSet | None,
    mppi_config: MppiConfig,
    exploration_std: float,
    rng: np.random.Generator,
    plan_seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One episode; models None means uniform random actions (warmup)."""
    state = env.reset(rng)
    states = [state.vector.copy()]
    actions, rewards = [], []
    planner = latent_planner_models(models) if models is not None else None
    warm = np.zeros((mppi_config.horizon, env.action_dim))
    for step in range(env.episode_len):
        if planner is None:
            a = env.sample_action(rng)
        else:
            z0 = models.encoder.forward(state.vector)
            cfg = MppiConfig(**{**_mppi_dict(mppi_config), "seed": plan_seed + step})
            a, mean = mppi_plan(planner, z0, cfg, warm_start=warm)
            warm = shift_warm_start(mean)
            if exploration_std > 0:
                a = a + exploration_std * rng.standard_normal(env.action_dim)
            a = env.clip_action(a)
        state, r = env.step(state, a)
        states.append(state.vector.copy())
        actions.append(np.asarray(a, dtype=float))
        rewards.append(r)
    return np.array(states), np.array(actions), np.array(rewards)


def _mppi_dict(cfg: MppiConfig) -> dict:
    return {
        "num_samples": cfg.num_samples,
        "horizon": cfg.horizon,
        "iterations": cfg.iterations,
        "temperature": cfg.temperature,
        "top_k": cfg.top_k,
        "noise_std": cfg.noise_std,
        "noise_std_min": cfg.noise_std_min,
        "discount": cfg.discount,
        "policy_fraction": cfg.policy_fraction,
        "action_limit": cfg.action_limit,
        "seed": cfg.seed,
    }


def evaluate(
    env: GeometricEnv,
    models: ModelSet,
    episodes: int,
    seed: int,
    mppi_config: MppiConfig | None = None,
) -> float:
    """Mean episode reward with planning enabled and no exploration noise."""
    if episodes < 1:
        raise ValueError("need at least one evaluation episode")
    cfg = mppi_config or MppiConfig(num_samples=64, horizon=8, iterations=3, top_k=16)
    totals = []
    for ep in range(episodes):
        rng = np.random.default_rng((seed, ep))
        _, _, rewards = collect_episode(
            env, models, cfg, exploration_std=0.0, rng=rng, plan_seed=seed * 977 + ep
        )
        totals.append(float(rewards.sum()))
    return float(np.mean(totals))


def random_baseline(env: GeometricEnv, episodes: int, seed: int) -> float:
    """Mean episode reward of uniform random actions."""
    totals = []
    for ep in range(episodes):
        rng = np.random.default_rng((seed, ep))
        _, _, rewards = collect_episode(
            env, None, MppiConfig(num_samples=1, horizon=1, top_k=1), 0.0, rng
        )
        totals.append(float(rewards.sum()))
    return float(np.mean(totals))


def train(
    env_name: str,
    group_name: str,
    config: TrainConfig,
    seed: int = 0,
    env_overrides: dict | None = None,
    progress=None,
    equivariant_components: tuple[str, ...] = ALL_COMPONENTS,
) -> tuple[list[tuple[int, float, float]], ModelSet]:
    """Full loop: warmup, alternating collect/update, periodic evaluation.

    Returns the learning curve [(env_steps, mean_reward, std_reward)] and the
    trained models.  Deterministic given (seed, single-threaded numerics).
    """
    env_overrides = env_overrides or {}
    env = make_env(env_name, group_name, **env_overrides)
    eval_env = make_env(env_name, group_name, **env_overrides)
    models = build_models(
        env, config, rng_seed=seed, equivariant_components=equivariant_components
    )
    trainer = Trainer(models, config)
    buffer = ReplayBuffer(config.buffer_capacity, config.rollout_horizon)
    rng = np.random.default_rng((seed, 0xC0111EC7))
    batch_rng = np.random.default_rng((seed, 0xBA7C4))

    curve: list[tuple[int, float, float]] = []
    env_steps = 0
    episode_idx = 0
    next_eval = config.eval_every
    while env_steps < config.total_env_steps:
        warmup = episode_idx < config.seed_steps
        states, acts, rews = collect_episode(
            env,
            None if warmup else models,
            config.planner,
            config.exploration_std,
            rng,
            plan_seed=seed * 65537 + episode_idx,
        )
        buffer.add(states, acts, rews)
        env_steps += len(acts)
        episode_idx += 1
        if not warmup and len(buffer) > 0:
            n_updates = int(round(config.update_ratio * len(acts)))
            for _ in range(n_updates):
                trainer.train_step(buffer.sample(config.batch_size, batch_rng))
        while next_eval <= env_steps:
            scores = [
                evaluate(eval_env, models, 1, seed=next_eval + 31 * i)
                for i in range(config.eval_episodes)
            ]
            curve.append((next_eval, float(np.mean(scores)), float(np.std(scores))))
            if progress is not None:
                progress(next_eval, curve[-1][1])
            next_eval += config.eval_every
    return curve, models
