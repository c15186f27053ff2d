import numpy as np, time, json
from geomdp.tdmpc import TrainConfig, train, random_baseline
from geomdp.planner import MppiConfig
from geomdp.envs import make_env

base_kw = dict(total_env_steps=12000, batch_size=96, rollout_horizon=5, hidden_width=24,
               latent_channels=16, update_ratio=0.5, eval_every=3000, eval_episodes=3,
               lr=1e-3, optimizer="adam",
               planner=MppiConfig(num_samples=48, horizon=6, iterations=2, top_k=12, seed=0))
variants = {
  "A_warm2":        (dict(seed_steps=2, exploration_std=0.1), {"reward_mode": "dense"}),
  "B_warm2_arena":  (dict(seed_steps=2, exploration_std=0.1), {"reward_mode": "dense", "arena_radius": 2.0}),
  "C_arena":        (dict(seed_steps=0, exploration_std=0.1), {"reward_mode": "dense", "arena_radius": 2.0}),
  "D_warm2_exp3":   (dict(seed_steps=2, exploration_std=0.3), {"reward_mode": "dense", "arena_radius": 2.0}),
}
results = {}
for name, (kw, ekw) in variants.items():
    t0 = time.time()
    cfg = TrainConfig(**{**base_kw, **kw})
    curve, m = train("pointmass2d", "none", cfg, seed=0, env_overrides=ekw)
    results[name] = curve
    print(name, [round(c[1],1) for c in curve], f"({time.time()-t0:.0f}s)", flush=True)
json.dump(results, open("/root/pkg/.calib/calib2.json","w"), indent=1)
env = make_env("pointmass2d", "none", reward_mode="dense", arena_radius=2.0)
print("random w/ arena:", random_baseline(env, 10, 123))
