"""Figure rendering for run outputs.

Every figure is derived from the delimited files the experiments emit, so a
plot can always be regenerated from CSV alone; the CSVs stay the canonical
record.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def write_curve_csv(path: str | Path, curve: list[tuple[int, float, float]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["env_steps", "mean_reward", "std_reward"])
        for steps, mean, std in curve:
            w.writerow([steps, f"{mean:.17g}", f"{std:.17g}"])
    return path


def read_curve_csv(path: str | Path) -> list[tuple[int, float, float]]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                (int(rec["env_steps"]), float(rec["mean_reward"]), float(rec["std_reward"]))
            )
    return rows


def plot_learning_curves(
    curves: dict[str, list[tuple[int, float, float]]],
    out_path: str | Path,
    title: str = "evaluation reward",
) -> Path:
    """One figure with a band of +-1 std around each labelled curve."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, curve in curves.items():
        if not curve:
            continue
        steps = [c[0] for c in curve]
        mean = [c[1] for c in curve]
        std = [c[2] for c in curve]
        ax.plot(steps, mean, label=label, marker="o", markersize=3)
        ax.fill_between(
            steps,
            [m - s for m, s in zip(mean, std)],
            [m + s for m, s in zip(mean, std)],
            alpha=0.2,
        )
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean episode reward")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def write_ablation_csv(path: str | Path, rows: list[dict]) -> Path:
    path = Path(path)
    fields = ["kind", "cell", "seed", "env_steps", "mean_reward", "std_reward"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in fields})
    return path


def read_ablation_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_ablation(rows: list[dict], out_path: str | Path, title: str) -> Path:
    """Curves grouped by (cell, seed), colored per cell."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    cells = sorted({r["cell"] for r in rows})
    cmap = plt.get_cmap("tab10")
    for i, cell in enumerate(cells):
        by_seed: dict[str, list] = {}
        for r in rows:
            if r["cell"] == cell:
                by_seed.setdefault(str(r["seed"]), []).append(
                    (int(r["env_steps"]), float(r["mean_reward"]))
                )
        for j, (seed, pts) in enumerate(sorted(by_seed.items())):
            pts.sort()
            ax.plot(
                [p[0] for p in pts],
                [p[1] for p in pts],
                color=cmap(i % 10),
                alpha=0.8,
                label=cell if j == 0 else None,
            )
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean episode reward")
    ax.set_title(title)
    ax.legend(fontsize=7)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def write_plan_csvs(
    out_dir: str | Path,
    actions: list,
    traces: list[list[dict]],
) -> tuple[Path, Path]:
    """actions.csv (step, a...) and elites.csv (step, iteration, elite stats)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    a_path = out_dir / "actions.csv"
    with open(a_path, "w", newline="") as fh:
        w = csv.writer(fh)
        dim = len(actions[0]) if actions else 0
        w.writerow(["step"] + [f"a{i}" for i in range(dim)])
        for t, a in enumerate(actions):
            w.writerow([t] + [f"{x:.17g}" for x in a])
    e_path = out_dir / "elites.csv"
    with open(e_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "iteration", "elite_mean", "elite_best"])
        for t, trace in enumerate(traces):
            for rec in trace:
                w.writerow(
                    [t, rec["iteration"], f"{rec['elite_mean']:.17g}", f"{rec['elite_best']:.17g}"]
                )
    return a_path, e_path


def plot_elite_returns(traces: list[list[dict]], out_path: str | Path) -> Path:
    """Elite-return progress across refit iterations, one line per planned step."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for t, trace in enumerate(traces):
        ax.plot(
            [r["iteration"] for r in trace],
            [r["elite_mean"] for r in trace],
            alpha=0.5,
            color="tab:blue",
        )
    ax.set_xlabel("refit iteration")
    ax.set_ylabel("elite mean return")
    ax.set_title("planner elite returns")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
