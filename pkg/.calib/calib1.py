import numpy as np, time, json, sys
from geomdp.tdmpc import TrainConfig, train, random_baseline
from geomdp.planner import MppiConfig
from geomdp.envs import make_env

cfg_kw = dict(total_env_steps=12000, batch_size=96, rollout_horizon=5, hidden_width=24,
              latent_channels=16, update_ratio=0.5, eval_every=2000, eval_episodes=3,
              exploration_std=0.1, lr=1e-3, optimizer="adam",
              planner=MppiConfig(num_samples=48, horizon=6, iterations=2, top_k=12, seed=0))
env_kw = {"reward_mode": "dense"}
results = {}
env = make_env("pointmass2d", "D8", **env_kw)
results["random"] = random_baseline(env, 10, 123)
print("random baseline:", results["random"], flush=True)
for group in ["D8", "none"]:
    t0 = time.time()
    curve, m = train("pointmass2d", group, TrainConfig(**cfg_kw), seed=0, env_overrides=env_kw,
                     progress=lambda s, r: print(f"  {group} {s}: {r:.1f}", flush=True))
    results[group] = curve
    print(group, "done in", round(time.time()-t0, 1), "s", flush=True)
json.dump(results, open("/root/pkg/.calib/calib1.json", "w"), indent=1)
