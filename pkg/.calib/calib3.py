import numpy as np, time, json
from geomdp.tdmpc import TrainConfig, train, random_baseline
from geomdp.planner import MppiConfig
from geomdp.envs import make_env

env_kw = {"reward_mode": "dense", "arena_radius": 2.0, "init_radius": (0.3, 0.9)}
base_kw = dict(total_env_steps=16000, batch_size=96, rollout_horizon=5, hidden_width=24,
               latent_channels=16, update_ratio=0.5, eval_every=4000, eval_episodes=3,
               seed_steps=2, exploration_std=0.1, lr=1e-3, optimizer="adam",
               planner=MppiConfig(num_samples=48, horizon=6, iterations=2, top_k=12, seed=0))
env = make_env("pointmass2d", "none", **env_kw)
print("random baseline:", random_baseline(env, 10, 123), flush=True)
results = {}
for group in ["none", "D8"]:
    t0 = time.time()
    curve, m = train("pointmass2d", group, TrainConfig(**base_kw), seed=0, env_overrides=env_kw,
                     progress=lambda s, r: print(f"  {group} {s}: {r:.1f}", flush=True))
    results[group] = curve
    print(group, "done", round(time.time()-t0), "s", flush=True)
json.dump(results, open("/root/pkg/.calib/calib3.json","w"), indent=1)
