"""Command-line entry point for all experiments.

Every run echoes its fully resolved configuration, writes flat CSV/JSON
results any plotting stack can consume, and renders matplotlib figures next
to them.  Exit codes: 0 success, 1 domain error, 2 usage error; failures
print a machine-readable JSON error record to stderr.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import envs, eqnet, lqr, planner, report, steerable, tdmpc
from .config import ConfigError, ExperimentConfig, load_config
from .groups import (
    GroupError,
    make_group,
    parse_rep,
    regular_representation,
    standard_representation,
)

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


def _apply_thread_cap() -> None:
    """GEOMDP_THREADS caps worker processes and, best effort, BLAS threads."""
    cap = os.environ.get("GEOMDP_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def thread_cap(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("GEOMDP_THREADS", default)))
    except ValueError:
        return default


def cmd_groups(args) -> int:
    group = make_group(args.name)
    reg = regular_representation(group)
    std = standard_representation(group)
    print(f"group {group.name}: order {group.order}, dim {group.dim}")
    print(f"  closure residual        {group.closure_residual():.3e}")
    print(f"  orthogonality residual  {group.orthogonality_residual():.3e}")
    print(f"  standard rep residual   {std.homomorphism_residual():.3e}")
    print(f"  regular rep residual    {reg.homomorphism_residual():.3e}")
    return EXIT_OK


def cmd_steerable(args) -> int:
    if args.steerable_cmd == "dims":
        rep = steerable.dimension_report(args.task)
        print(json.dumps(rep, indent=2))
        eq, raw = rep["equivariant"], rep["non_equivariant"]
        print(
            f"{args.task}: {eq['total']} coefficients over {eq['base_domain']} "
            f"(unconstrained: {raw['dynamics_entries']}+{raw['control_entries']} "
            f"entries over R^{raw['domain_dim']})"
        )
        return EXIT_OK
    if args.group.lower() in ("so2", "so(2)"):
        kb = steerable.so2_kernel_basis_11()
        res = steerable.so2_basis_constraint_residual(args.samples, rng_seed=0)
        print(f"planar-rotation kernel basis: dimension {kb.dimension}")
        print(f"  gram rank          {kb.gram_rank(xs=[0.0, 0.7, 1.9])}")
        print(f"  constraint residual {res:.3e}")
        return EXIT_OK
    group = make_group(args.group)
    rep_in = parse_rep(group, args.rep_in)
    rep_out = parse_rep(group, args.rep_out)
    kb = steerable.intertwiner_basis(rep_in, rep_out)
    worst = 0.0
    for mat in kb.basis:
        for g in range(group.order):
            resid = np.max(np.abs(rep_out.matrix(g) @ mat - mat @ rep_in.matrix(g)))
            worst = max(worst, float(resid))
    print(
        f"{group.name} {args.rep_in} -> {args.rep_out}: basis dimension {kb.dimension}"
    )
    print(f"  constraint residual {worst:.3e}")
    print(f"  gram rank           {kb.gram_rank()}")
    return EXIT_OK


def _env_point_sampler(env):
    def sample(rng):
        return env.sample_state(rng), env.sample_action(rng)

    return sample


def cmd_lqr(args) -> int:
    cfg = load_config(args.config)
    env = envs.make_env(args.env, args.group)
    horizon = args.horizon or cfg.lqr["horizon"]
    samples = args.samples or cfg.lqr["samples"]
    cost = lqr.isotropic_cost(env.state_dim, env.action_dim)
    thm3 = lqr.linearization_steerability_report(
        env.dynamics,
        env.group,
        env.rep_S,
        env.rep_A,
        samples=samples,
        rng_seed=cfg.seed,
        sample_point=_env_point_sampler(env),
    )
    thm4 = lqr.riccati_steerability_report(
        env.dynamics,
        lambda p: cost,
        env.group,
        env.rep_S,
        env.rep_A,
        samples=max(5, samples // 5),
        horizon=horizon,
        rng_seed=cfg.seed,
        sample_point=_env_point_sampler(env),
    )
    controller_err = None
    if env.name == "pointmass2d":
        controller_err = pointmass_controller_equivalence(
            env, horizon, n_states=20, rng_seed=cfg.seed
        )
    record = {
        "env": env.name,
        "group": env.group.name,
        "horizon": horizon,
        "linearization": thm3,
        "riccati": thm4,
        "controller_equivalence": controller_err,
    }
    print(json.dumps(record, indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "residuals.json").write_text(json.dumps(record, indent=2) + "\n")
    return EXIT_OK


def pointmass_controller_equivalence(
    env, horizon: int, n_states: int = 20, rng_seed: int = 0
) -> float:
    """Max action gap between orbit-representative LQR and per-point LQR."""
    from .steerable import TaggedPoint, orbit_project_so2

    cost = lqr.isotropic_cost(env.state_dim, env.action_dim)
    tags = ("rho1", "rho1", "rho1")

    def point_of_state(s):
        return TaggedPoint.of([s[:2], s[2:4], np.zeros(2)], tags)

    def base_solver(base):
        s = np.concatenate([base.blocks[0], base.blocks[1]])
        a = np.asarray(base.blocks[2])
        dyn = lqr.linearize(env.dynamics, (s, a))
        return lqr.dare_recursion(dyn, cost, horizon).K[0]

    policy = lqr.equivariant_lqr_controller(
        base_solver, orbit_project_so2, point_of_state, tags[:2], ("rho1",)
    )
    rng = np.random.default_rng(rng_seed)
    worst = 0.0
    for _ in range(n_states):
        s = env.sample_state(rng)
        direct = lqr.dare_recursion(
            lqr.linearize(env.dynamics, (s, np.zeros(env.action_dim))), cost, horizon
        )
        a_direct = -direct.K[0] @ s
        a_orbit = policy(s)
        worst = max(worst, float(np.max(np.abs(a_direct - a_orbit))))
    return worst


def cmd_env_check(args) -> int:
    env = envs.make_env(args.env, args.group)
    dyn, rew = envs.check_env_equivariance(env, samples=args.samples, rng_seed=args.seed)
    record = {
        "env": env.name,
        "group": env.group.name,
        "samples": args.samples,
        "dynamics_residual": dyn,
        "reward_residual": rew,
    }
    print(json.dumps(record, indent=2))
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out_dir)
    env = envs.make_env(args.env, cfg.group_name, **cfg.env_overrides())
    mppi_cfg = cfg.train.planner
    rng = np.random.default_rng(cfg.seed)
    state = env.reset(rng)
    if args.model == "ground-truth":
        models = planner.env_models(env)
        to_plan_space = lambda s: s
    else:
        train_cfg = cfg.train
        model_set = tdmpc.build_models(env, train_cfg, rng_seed=cfg.seed)
        model_set.restore(args.model)
        models = tdmpc.latent_planner_models(model_set)
        to_plan_space = lambda s: model_set.encoder.forward(s)
    warm = np.zeros((mppi_cfg.horizon, env.action_dim))
    actions, traces = [], []
    for step in range(args.steps):
        trace: list = []
        a, mean = planner.mppi_plan(
            models,
            to_plan_space(state.vector),
            mppi_cfg,
            warm_start=warm,
            trace=trace,
        )
        a = env.clip_action(a)
        actions.append(a)
        traces.append(trace)
        warm = planner.shift_warm_start(mean)
        state, _ = env.step(state, a)
    a_path, e_path = report.write_plan_csvs(out_dir, actions, traces)
    fig = report.plot_elite_returns(traces, out_dir / "elites.png")
    print(f"wrote {a_path}, {e_path}, {fig}")
    return EXIT_OK


def _train_one_job(job: dict) -> dict:
    """One training run; top-level so process pools can pickle it."""
    curve, models = tdmpc.train(
        job["env"],
        job["group"],
        tdmpc.TrainConfig(**job["train_kwargs"]),
        seed=job["seed"],
        env_overrides=job.get("env_overrides", {}),
        equivariant_components=tuple(job.get("components", tdmpc.ALL_COMPONENTS)),
    )
    out = dict(job)
    out["curve"] = curve
    if job.get("checkpoint"):
        models.save(job["checkpoint"], extra={"env": job["env"], "group": job["group"]})
    out.pop("env_overrides", None)
    return out


def run_training_jobs(jobs: list[dict], max_workers: int = 1) -> list[dict]:
    """Run training jobs, optionally across processes (results keep job order)."""
    if max_workers <= 1 or len(jobs) <= 1:
        return [_train_one_job(j) for j in jobs]
    import concurrent.futures as cf

    with cf.ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_train_one_job, jobs))


def _train_kwargs_from(cfg: ExperimentConfig, **over) -> dict:
    kw = cfg.train.to_dict()
    kw["planner"] = planner.MppiConfig(**kw["planner"])
    kw.update(over)
    return kw


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out_dir)
    group = args.group or cfg.group_name or "none"
    seeds = cfg.train.seeds or [cfg.seed]
    jobs = [
        {
            "env": args.env,
            "group": group,
            "train_kwargs": _train_kwargs_from(cfg),
            "seed": seed,
            "env_overrides": cfg.env_overrides(),
            "checkpoint": str(out_dir / f"checkpoint_seed{seed}.bin"),
            "label": f"seed{seed}",
        }
        for seed in seeds
    ]
    results = run_training_jobs(jobs, max_workers=thread_cap())
    curves = {}
    for res in results:
        label = f"{group}-{res['label']}"
        curves[label] = res["curve"]
        report.write_curve_csv(
            out_dir / ("curve.csv" if len(results) == 1 else f"curve_{res['label']}.csv"),
            res["curve"],
        )
    report.plot_learning_curves(curves, out_dir / "curve.png", title=f"{args.env} ({group})")
    for label, curve in curves.items():
        final = curve[-1] if curve else (0, float("nan"), 0.0)
        print(f"{label}: final eval reward {final[1]:.3f} at {final[0]} steps")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    env = envs.make_env(args.env, args.group or cfg.group_name, **cfg.env_overrides())
    models = tdmpc.build_models(env, cfg.train, rng_seed=cfg.seed)
    models.restore(args.checkpoint)
    score = tdmpc.evaluate(
        env, models, episodes=args.episodes, seed=args.seed, mppi_config=cfg.train.planner
    )
    print(json.dumps({"env": env.name, "episodes": args.episodes, "mean_reward": score}))
    return EXIT_OK


ABLATION_KINDS = ("warmup", "components", "group-order", "frame")


def ablate(kind: str, cfg: ExperimentConfig, env_name: str, out_dir: Path) -> list[dict]:
    """Run one ablation sweep and return flat rows (one per curve point)."""
    if kind not in ABLATION_KINDS:
        raise ConfigError(f"unknown ablation kind {kind!r}")
    seeds = cfg.train.seeds or [cfg.seed]
    group = cfg.group_name or "D8"
    jobs = []
    if kind == "warmup":
        for warm, seed in itertools.product((0, 1, 5), seeds):
            jobs.append(
                {
                    "env": env_name,
                    "group": group,
                    "train_kwargs": _train_kwargs_from(cfg, seed_steps=warm),
                    "seed": seed,
                    "env_overrides": cfg.env_overrides(),
                    "label": f"warmup{warm}",
                }
            )
    elif kind == "components":
        # mixed nets need matching feature sizes, hence the linear strategy
        names = ("transition", "q", "pi")
        for mask, seed in itertools.product(range(8), seeds):
            comps = tuple(n for i, n in enumerate(names) if mask & (1 << i))
            label = "+".join(comps) if comps else "none"
            jobs.append(
                {
                    "env": env_name,
                    "group": group,
                    "train_kwargs": _train_kwargs_from(cfg, width_strategy="linear"),
                    "seed": seed,
                    "env_overrides": cfg.env_overrides(),
                    "components": comps,
                    "label": label,
                }
            )
    elif kind == "group-order":
        for grp, seed in itertools.product(("C4", "C8", "C16", "D16"), seeds):
            jobs.append(
                {
                    "env": env_name,
                    "group": grp,
                    "train_kwargs": _train_kwargs_from(cfg),
                    "seed": seed,
                    "env_overrides": cfg.env_overrides(),
                    "label": grp,
                }
            )
    else:  # frame
        for frame, seed in itertools.product(("local", "global"), seeds):
            overrides = dict(cfg.env_overrides())
            overrides["frame"] = frame
            jobs.append(
                {
                    "env": env_name,
                    "group": group,
                    "train_kwargs": _train_kwargs_from(cfg),
                    "seed": seed,
                    "env_overrides": overrides,
                    "label": frame,
                }
            )
    results = run_training_jobs(jobs, max_workers=thread_cap())
    rows = []
    for res in results:
        for steps, mean, std in res["curve"]:
            rows.append(
                {
                    "kind": kind,
                    "cell": res["label"],
                    "seed": res["seed"],
                    "env_steps": steps,
                    "mean_reward": f"{mean:.17g}",
                    "std_reward": f"{std:.17g}",
                }
            )
    return rows


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out_dir)
    env_name = args.env or cfg.env_name
    rows = ablate(args.kind, cfg, env_name, out_dir)
    csv_path = report.write_ablation_csv(out_dir / "ablation.csv", rows)
    fig = report.plot_ablation(
        rows, out_dir / "ablation.png", title=f"{args.kind} ablation on {env_name}"
    )
    cells = sorted({r["cell"] for r in rows})
    print(f"wrote {csv_path} and {fig}; {len(cells)} cells: {', '.join(cells)}")
    return EXIT_OK


def cmd_report(args) -> int:
    curves = {}
    for path in args.curve:
        curves[Path(path).stem] = report.read_curve_csv(path)
    out = report.plot_learning_curves(curves, args.out, title=args.title)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="geomdp",
        description="Euclidean-symmetry toolkit: steerable kernels, symmetric LQR, "
        "equivariant sampling-based RL",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("groups", help="finite group diagnostics")
    gs = g.add_subparsers(dest="groups_cmd", required=True)
    gc = gs.add_parser("check", help="print order and residuals")
    gc.add_argument("name")

    s = sub.add_parser("steerable", help="kernel bases and dimension counts")
    ss = s.add_subparsers(dest="steerable_cmd", required=True)
    sb = ss.add_parser("basis", help="basis dimension and constraint residuals")
    sb.add_argument("--group", required=True)
    sb.add_argument("--rep-in", default="standard")
    sb.add_argument("--rep-out", default="standard")
    sb.add_argument("--samples", type=int, default=200)
    sd = ss.add_parser("dims", help="free-parameter counts for worked tasks")
    sd.add_argument("--task", choices=("free2d", "free3d"), required=True)

    l = sub.add_parser("lqr", help="steerability of linearization and Riccati solutions")
    ls = l.add_subparsers(dest="lqr_cmd", required=True)
    lc = ls.add_parser("check")
    lc.add_argument("--env", required=True)
    lc.add_argument("--group", default=None)
    lc.add_argument("--horizon", type=int, default=None)
    lc.add_argument("--samples", type=int, default=None)
    lc.add_argument("--config", default=None)
    lc.add_argument("--out", default=None)

    e = sub.add_parser("env-check", help="dynamics equivariance and reward invariance")
    e.add_argument("--env", required=True)
    e.add_argument("--group", default=None)
    e.add_argument("--samples", type=int, default=200)
    e.add_argument("--seed", type=int, default=0)

    pl = sub.add_parser("plan", help="run the planner and emit action/elite CSVs")
    pl.add_argument("--env", required=True)
    pl.add_argument("--model", default="ground-truth", help="'ground-truth' or checkpoint path")
    pl.add_argument("--config", default=None)
    pl.add_argument("--out", required=True)
    pl.add_argument("--steps", type=int, default=25)

    t = sub.add_parser("train", help="train the latent model-based agent")
    t.add_argument("--env", required=True)
    t.add_argument("--group", default=None, help="C4|D4|D8|octa|icosa|none (overrides config)")
    t.add_argument("--config", default=None)
    t.add_argument("--out", required=True)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--env", required=True)
    ev.add_argument("--group", default=None)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--config", default=None)
    ev.add_argument("--episodes", type=int, default=5)
    ev.add_argument("--seed", type=int, default=0)

    ab = sub.add_parser("ablate", help="run an ablation sweep")
    ab.add_argument("--kind", choices=ABLATION_KINDS, required=True)
    ab.add_argument("--env", default=None)
    ab.add_argument("--config", default=None)
    ab.add_argument("--out", required=True)

    rp = sub.add_parser("report", help="re-render figures from CSV outputs")
    rp.add_argument("--curve", nargs="+", required=True)
    rp.add_argument("--out", required=True)
    rp.add_argument("--title", default="evaluation reward")
    return p


_DISPATCH = {
    "groups": cmd_groups,
    "steerable": cmd_steerable,
    "lqr": cmd_lqr,
    "env-check": cmd_env_check,
    "plan": cmd_plan,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def run(argv: list[str] | None = None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return _DISPATCH[args.cmd](args)
    except (ConfigError, GroupError, ValueError, FileNotFoundError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return EXIT_DOMAIN


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
