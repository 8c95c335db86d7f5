"""Figures written next to the CSV/JSON outputs (Agg backend, fixed metadata)."""
from __future__ import annotations

import io
import json
from pathlib import Path
from typing import Mapping, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .manifest import RunManifest, write_atomic  # noqa: E402


def _save(fig, path: Path, manifest: Optional[RunManifest]) -> Path:
    # no Software/date chunks, so identical inputs give identical bytes
    meta = {"Software": None}
    if manifest is not None:
        meta["Description"] = json.dumps(manifest.embedded(), sort_keys=True)
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata=meta)
    plt.close(fig)
    return write_atomic(Path(path), buf.getvalue())


def plot_learning_curves(curves: Mapping[str, object], path, manifest: Optional[RunManifest] = None,
                         baseline: Optional[float] = None) -> Path:
    fig, (ax_r, ax_s) = plt.subplots(1, 2, figsize=(10, 4))
    for label, curve in curves.items():
        xs = [p.env_step for p in curve.points]
        ax_r.plot(xs, [p.eval_return for p in curve.points], label=label)
        ax_s.plot(xs, [p.steps_to_goal for p in curve.points], marker=".", label=label)
    if baseline is not None:
        ax_s.axhline(baseline, color="grey", ls="--", label="random policy")
    ax_r.set(xlabel="environment steps", ylabel="eval return")
    ax_s.set(xlabel="environment steps", ylabel="steps to goal")
    ax_s.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path, manifest)


def plot_tracking(reports: Mapping[str, object], path, manifest: Optional[RunManifest] = None) -> Path:
    fig, (ax_v, ax_w) = plt.subplots(1, 2, figsize=(10, 4))
    for label, rep in reports.items():
        rows = rep.per_command
        ax_v.scatter([r["v_des"] for r in rows], [r["v"] for r in rows], s=10, label=label)
        ax_w.scatter([r["omega_des"] for r in rows], [r["omega"] for r in rows], s=10, label=label)
    for ax, name in ((ax_v, "v [m/s]"), (ax_w, "omega [rad/s]")):
        lo, hi = ax.get_xlim()
        ax.plot([lo, hi], [lo, hi], color="grey", lw=0.8)
        ax.set(xlabel=f"desired {name}", ylabel=f"achieved {name}")
    ax_w.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path, manifest)


def plot_match(stats, path, labels=("A", "B"), manifest: Optional[RunManifest] = None) -> Path:
    fig, (ax_g, ax_h) = plt.subplots(1, 2, figsize=(10, 4))
    ax_g.bar([labels[0], labels[1], "timeout"], [stats.goals_a, stats.goals_b, stats.timeouts],
             color=["tab:blue", "tab:orange", "grey"])
    ax_g.set(ylabel="episodes", title=f"{stats.goals_a} - {stats.goals_b}")
    for who, label in (("a", labels[0]), ("b", labels[1])):
        steps = [r.steps for r in stats.records if r.winner == who]
        if steps:
            ax_h.hist(steps, bins=20, alpha=0.6, label=label)
    ax_h.set(xlabel="steps to goal", ylabel="count")
    ax_h.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path, manifest)
