"""Static figures rendered next to the CSV outputs."""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "treesmbo",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
}

WEIGHT_LINES = (("w_phd", "PhD", "-"), ("w_ted", "TED", "--"), ("w_shd2", "SHD2", ":"))


def _save(fig, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fmt = os.path.splitext(path)[1][1:] or "svg"
    meta = {"Date": None} if fmt == "svg" else {}
    fig.savefig(path, format=fmt, metadata=meta, bbox_inches="tight")
    plt.close(fig)
    return path


def boxplots(rows, path):
    """Best-so-far boxplots; ``rows`` are (problem, strategy, checkpoint, run, best)."""
    data = defaultdict(list)
    for problem, strategy, cp, _, best in rows:
        data[(problem, int(cp), strategy)].append(float(best))
    problems = sorted({k[0] for k in data})
    checkpoints = sorted({k[1] for k in data})
    strategies = list(dict.fromkeys(r[1] for r in rows))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(problems), len(checkpoints), squeeze=False,
                                 figsize=(3.0 * len(checkpoints), 2.4 * len(problems)))
        for i, p in enumerate(problems):
            for j, cp in enumerate(checkpoints):
                ax = axes[i, j]
                vals = [data.get((p, cp, s), [np.nan]) for s in strategies]
                ax.boxplot(vals)
                ax.set_xticks(range(1, len(strategies) + 1), strategies)
                ax.set_title(f"{p}, {cp} evaluations")
                ax.set_ylabel("best F")
        fig.tight_layout()
        return _save(fig, path)


def weight_trajectories(rows, path):
    """Mean normalised kernel weights per iteration; rows are dicts from the trajectory CSV."""
    by_problem = defaultdict(list)
    for r in rows:
        by_problem[(r["problem"], r["strategy"])].append(r)
    keys = sorted(by_problem)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, max(len(keys), 1), squeeze=False,
                                 figsize=(3.2 * max(len(keys), 1), 2.4))
        for ax, key in zip(axes[0], keys):
            rs = sorted(by_problem[key], key=lambda r: int(r["iteration"]))
            it = [int(r["iteration"]) for r in rs]
            for col, name, ls in WEIGHT_LINES:
                ax.plot(it, [float(r[col]) for r in rs], ls, color="k", label=name)
            ax.set_ylim(0, 1)
            ax.set_xlabel("iteration")
            ax.set_title(f"{key[0]} ({key[1]})")
        axes[0, 0].set_ylabel("normalised weight")
        axes[0, 0].legend(loc="best")
        fig.tight_layout()
        return _save(fig, path)


def distance_images(matrices, depths, path):
    """Image plot of each distance matrix with tree depth marks along the x axis."""
    names = list(matrices)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(names), squeeze=False, figsize=(2.6 * len(names), 2.8))
        depths = np.asarray(depths)
        change = [0] + [i for i in range(1, len(depths)) if depths[i] != depths[i - 1]]
        for ax, name in zip(axes[0], names):
            m = np.asarray(matrices[name])
            ax.imshow(m, origin="lower", cmap="viridis", interpolation="nearest")
            ax.set_title(name.upper())
            ax.set_xticks([])
            ax.set_yticks([])
            for i in change:
                ax.text(i, -0.04 * len(depths), str(depths[i]), color="red",
                        ha="left", va="top", fontsize=7)
        fig.tight_layout()
        return _save(fig, path)
