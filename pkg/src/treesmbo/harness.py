"""Batch experiments: optimiser benchmark, distance study and EA tuning grid.

Every table is written as CSV with numbers printed to nine significant
digits.  Re-running with the same configuration and master seed rewrites
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import shutil
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from . import plotting
from .distance import all_matrices
from .expr import GeneratorParams, depth, format_sexpr, ramped_half_and_half, size
from .problems import ProblemSpec, UpperObjective, get_problem, make_dataset
from .search import (EAParams, SearchBudget, SurrogateConfig, ea_optimize, random_search, smbo)
from .stats import kruskal_wallis

log = logging.getLogger(__name__)

CHECKPOINTS = (50, 100)


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _round9(v):
    return float(f"{float(v):.9g}")


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class StrategySpec:
    name: str
    kind: str  # "rs" | "ea" | "smbo"
    mu: int = 15
    lam: int = 1
    distances: tuple = ("shd2", "phd", "ted")

    def __post_init__(self):
        if self.kind not in ("rs", "ea", "smbo"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.setdefault("name", d.get("kind"))
        if "distances" in d:
            d["distances"] = tuple(d["distances"])
        return cls(**d)


DEFAULT_STRATEGIES = (
    StrategySpec("rs", "rs"),
    StrategySpec("ea", "ea", mu=15, lam=1),
    StrategySpec("smbo", "smbo"),
)


@dataclass
class ExperimentConfig:
    problems: list
    strategies: list = field(default_factory=lambda: list(DEFAULT_STRATEGIES))
    repetitions: int = 20
    seed: int = 1
    budget: int = 100
    initial: int = 20
    ei_evals: int = 10_000
    mle_evals: int = 1000
    out: str = "results"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.strategies:
            raise ValueError("need at least one strategy")
        if not self.problems:
            raise ValueError("need at least one problem")
        self.strategies = [s if isinstance(s, StrategySpec) else StrategySpec.from_dict(s)
                           for s in self.strategies]
        self.problems = [p if isinstance(p, (str, ProblemSpec)) else ProblemSpec.from_dict(p)
                         for p in self.problems]

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())

    def to_dict(self):
        d = asdict(self)
        d["problems"] = [p if isinstance(p, str) else p.to_dict() for p in self.problems]
        d["strategies"] = [asdict(s) for s in self.strategies]
        for s in d["strategies"]:
            s["distances"] = list(s["distances"])
        return d

    def problem_specs(self):
        return [get_problem(p) if isinstance(p, str) else p for p in self.problems]

    @property
    def checkpoints(self):
        return tuple(sorted({c for c in CHECKPOINTS if c <= self.budget} | {self.budget}))


def run_seed(master: int, problem: str, strategy: str, rep: int) -> int:
    """Stream seed for one run; adding strategies or problems leaves other runs untouched."""
    h = hashlib.sha256(f"{master}|{problem}|{strategy}|{rep}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def run_one(spec: ProblemSpec, strategy: StrategySpec, config: ExperimentConfig, seed: int):
    rng = np.random.default_rng(seed)
    obj = UpperObjective(spec)
    if strategy.kind == "rs":
        rec = random_search(obj, config.budget, rng)
    elif strategy.kind == "ea":
        rec = ea_optimize(obj, EAParams(mu=strategy.mu, lam=strategy.lam), config.budget, rng)
    else:
        active = tuple(d in strategy.distances for d in ("shd2", "phd", "ted"))
        rec = smbo(obj, SearchBudget(config.budget, config.initial, config.ei_evals),
                   SurrogateConfig(active=active, mle_evals=config.mle_evals), rng)
    if obj.calls != config.budget:
        raise AssertionError(f"{strategy.name} used {obj.calls} evaluations, budget {config.budget}")
    rec.strategy = strategy.name
    return rec


def _run_task(args):
    spec, strategy, config, seed = args
    try:
        return run_one(spec, strategy, config, seed), None
    except Exception as exc:  # one failed run never aborts a study
        return None, f"{type(exc).__name__}: {exc}"


# -- results -----------------------------------------------------------------

@dataclass
class RunResult:
    problem: str
    strategy: str
    rep: int
    seed: int
    record: object


@dataclass
class StudyResult:
    runs: list
    failures: list
    checkpoints: tuple

    def boxplot_rows(self):
        rows = []
        for r in self.runs:
            for cp in self.checkpoints:
                rows.append((r.problem, r.strategy, cp, r.rep, _round9(r.record.best_at(cp))))
        return rows

    def summary(self):
        """Median and quartiles of best-so-far per problem, strategy and checkpoint."""
        groups = defaultdict(list)
        for p, s, cp, _, v in self.boxplot_rows():
            groups[(p, s, cp)].append(v)
        rows = []
        for (p, s, cp), vals in groups.items():
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            rows.append((p, s, cp, len(vals), float(med), float(q1), float(q3)))
        return rows

    def trajectories(self):
        """Mean normalised weights per (problem, strategy, iteration)."""
        acc = defaultdict(list)
        for r in self.runs:
            for it, wp, wt, ws, _ in getattr(r.record, "weights", []):
                acc[(r.problem, r.strategy, it)].append((wp, wt, ws))
        rows = []
        for (p, s, it), ws in acc.items():
            m = np.mean(np.array(ws), axis=0)
            m = m / m.sum()
            rows.append((p, s, it, float(m[0]), float(m[1]), float(m[2])))
        return rows

    def kruskal(self):
        groups = defaultdict(lambda: defaultdict(list))
        for p, s, cp, _, v in self.boxplot_rows():
            groups[(p, cp)][s].append(v)
        rows = []
        for (p, cp), by in groups.items():
            if len(by) < 2:
                continue
            H, pv = kruskal_wallis(list(by.values()))
            rows.append((p, cp, len(by), H, pv))
        return rows

    def medians(self, checkpoint):
        return {(p, s): med for p, s, cp, _, med, _, _ in self.summary() if cp == checkpoint}


RUN_HEADER = ["problem", "strategy", "rep", "seed", "eval_idx", "tree_sexpr", "F", "best_so_far"]
WEIGHT_HEADER = ["problem", "strategy", "rep", "iter_idx", "w_phd", "w_ted", "w_shd2", "status"]
BOX_HEADER = ["problem", "strategy", "checkpoint", "run", "best"]
TRAJ_HEADER = ["problem", "strategy", "iteration", "w_phd", "w_ted", "w_shd2"]
SUMMARY_HEADER = ["problem", "strategy", "checkpoint", "n", "median", "q1", "q3"]
KW_HEADER = ["problem", "checkpoint", "groups", "H", "p"]


def _stage(staging, idx, res: RunResult):
    rec = res.record
    head = (res.problem, res.strategy, res.rep)
    write_csv(os.path.join(staging, f"{idx:06d}-runs.csv"), RUN_HEADER,
              [(*head, res.seed, i, format_sexpr(t), F, b) for i, t, F, b in rec.evals])
    write_csv(os.path.join(staging, f"{idx:06d}-weights.csv"), WEIGHT_HEADER,
              [(*head, *w) for w in rec.weights])


def _merge(staging, n, kind, header, dest):
    with open(dest, "w", newline="") as out:
        out.write(",".join(header) + "\n")
        for idx in range(n):
            path = os.path.join(staging, f"{idx:06d}-{kind}.csv")
            if not os.path.exists(path):
                continue
            with open(path) as fh:
                next(fh)
                shutil.copyfileobj(fh, out)


def run_experiment(config: ExperimentConfig, workers: int = 1, out: Optional[str] = None,
                   plots: bool = True) -> StudyResult:
    """Run problems x strategies x repetitions and write all tables to ``out``."""
    out = out or config.out
    tasks, keys = [], []
    for spec in config.problem_specs():
        for strat in config.strategies:
            for rep in range(config.repetitions):
                seed = run_seed(config.seed, spec.name, strat.name, rep)
                tasks.append((spec, strat, config, seed))
                keys.append((spec.name, strat.name, rep, seed))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]

    staging = os.path.join(out, "staging")
    os.makedirs(staging, exist_ok=True)
    runs, failures = [], []
    for idx, ((p, s, rep, seed), (rec, err)) in enumerate(zip(keys, results)):
        if rec is None:
            log.error("run %s/%s/%d failed: %s", p, s, rep, err)
            failures.append((p, s, rep, seed, err))
            continue
        res = RunResult(p, s, rep, seed, rec)
        _stage(staging, idx, res)
        runs.append(res)
    _merge(staging, len(tasks), "runs", RUN_HEADER, os.path.join(out, "runs.csv"))
    _merge(staging, len(tasks), "weights", WEIGHT_HEADER, os.path.join(out, "weights.csv"))
    shutil.rmtree(staging)

    study = StudyResult(runs, failures, config.checkpoints)
    write_csv(os.path.join(out, "best.csv"), ["problem", "strategy", "rep", "best_F", "best_tree"],
              [(r.problem, r.strategy, r.rep, r.record.best_F, format_sexpr(r.record.best_tree))
               for r in runs])
    write_csv(os.path.join(out, "summary.csv"), SUMMARY_HEADER, study.summary())
    write_csv(os.path.join(out, "kruskal.csv"), KW_HEADER, study.kruskal())
    write_csv(os.path.join(out, "failures.csv"), ["problem", "strategy", "rep", "seed", "error"],
              failures)
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    emit_plots(study, out, render=plots)
    return study


def emit_plots(study: StudyResult, out: str, render: bool = True):
    """Write the boxplot and weight-trajectory tables, and optionally their SVG figures."""
    if not study.runs:
        raise ValueError("study has no runs")
    box = study.boxplot_rows()
    traj = study.trajectories()
    paths = [write_csv(os.path.join(out, "boxplot.csv"), BOX_HEADER, box),
             write_csv(os.path.join(out, "weight_trajectory.csv"), TRAJ_HEADER, traj)]
    if render:
        paths += render_figures(out)
    return paths


def render_figures(out: str):
    """Render SVG figures from the CSV tables in ``out``."""
    paths = []
    box_path = os.path.join(out, "boxplot.csv")
    box = read_csv(box_path) if os.path.exists(box_path) else []
    if box:
        rows = [(r["problem"], r["strategy"], r["checkpoint"], r["run"], r["best"]) for r in box]
        paths.append(plotting.boxplots(rows, os.path.join(out, "figures", "boxplot.svg")))
    traj_path = os.path.join(out, "weight_trajectory.csv")
    if os.path.exists(traj_path):
        traj = read_csv(traj_path)
        if traj:
            paths.append(plotting.weight_trajectories(
                traj, os.path.join(out, "figures", "weights.svg")))
    dist_path = os.path.join(out, "distance_order.csv")
    if os.path.exists(dist_path):
        order = read_csv(dist_path)
        mats = {}
        for name in ("phd", "ted", "shd1", "shd2"):
            path = os.path.join(out, f"distance_{name}.csv")
            if os.path.exists(path):
                with open(path) as fh:
                    rows = list(csv.reader(fh))[1:]
                mats[name] = np.array([[float(v) for v in r[1:]] for r in rows])
        if mats:
            paths.append(plotting.distance_images(
                mats, [int(r["depth"]) for r in order],
                os.path.join(out, "figures", "distances.svg")))
    return paths


def study_from_csv(out: str, checkpoints=CHECKPOINTS):
    """Rebuild per-run best-so-far traces from ``runs.csv`` for re-analysis."""
    traces = defaultdict(list)
    for r in read_csv(os.path.join(out, "runs.csv")):
        traces[(r["problem"], r["strategy"], int(r["rep"]))].append(float(r["best_so_far"]))
    return traces


# -- distance study ------------------------------------------------------------

@dataclass
class DistanceStudy:
    trees: list
    matrices: dict
    correlations: dict


def distance_study(n: int = 100, generator: GeneratorParams = GeneratorParams(),
                   problem: str = "sine-cosine", seed: int = 1, out: Optional[str] = None,
                   plots: bool = True) -> DistanceStudy:
    """Distance matrices of ``n`` random trees and the correlations between measures.

    Trees are sorted by depth, then node count.  Correlations use the
    strict lower triangles.
    """
    if n < 3:
        raise ValueError("need at least three trees")
    spec = get_problem(problem) if isinstance(problem, str) else problem
    data = make_dataset(spec)
    rng = np.random.default_rng(seed)
    trees = [ramped_half_and_half(spec.operator_set, generator, rng) for _ in range(n)]
    trees.sort(key=lambda t: (depth(t), size(t)))
    mats = {k: m.values for k, m in all_matrices(trees, data.X).items()}
    low = np.tril_indices(n, -1)
    cor = {}
    for a, b in combinations(("phd", "ted", "shd1", "shd2"), 2):
        cor[(a, b)] = float(np.corrcoef(mats[a][low], mats[b][low])[0, 1])
    study = DistanceStudy(trees, mats, cor)
    if out:
        write_distance_study(study, out, plots)
    return study


def write_distance_study(study: DistanceStudy, out: str, plots: bool = True):
    names = [format_sexpr(t) for t in study.trees]
    for k, m in study.matrices.items():
        write_csv(os.path.join(out, f"distance_{k}.csv"), [""] + names,
                  [[names[i]] + list(row) for i, row in enumerate(m)])
    write_csv(os.path.join(out, "distance_order.csv"), ["index", "tree_sexpr", "depth", "size"],
              [(i, s, depth(t), size(t)) for i, (s, t) in enumerate(zip(names, study.trees))])
    write_csv(os.path.join(out, "distance_correlations.csv"), ["measure_a", "measure_b", "pearson"],
              [(a, b, v) for (a, b), v in study.correlations.items()])
    if plots:
        plotting.distance_images(study.matrices, [depth(t) for t in study.trees],
                                 os.path.join(out, "figures", "distances.svg"))


# -- EA tuning grid --------------------------------------------------------------

TUNE_MU = (5, 10, 15, 20)
TUNE_LAMBDA = (1, 2, 3, 4, 5)


def tuning_grid(problems, mus=TUNE_MU, lams=TUNE_LAMBDA, reps: int = 5, seed: int = 1,
                budget: int = 100, out: Optional[str] = None):
    """Run the model-free EA on every (mu, lambda) cell.

    Cells are ranked per problem by their mean final best value (mid-ranks
    on ties) and then by mean rank across problems.  Returns the rank table
    sorted by mean rank and the best cell.
    """
    cells = [(mu, lam) for mu in mus for lam in lams]
    specs = [get_problem(p) if isinstance(p, str) else p for p in problems]
    finals = {}
    for spec in specs:
        for mu, lam in cells:
            vals = []
            for rep in range(reps):
                rng = np.random.default_rng(run_seed(seed, spec.name, f"ea-{mu}-{lam}", rep))
                rec = ea_optimize(UpperObjective(spec), EAParams(mu=mu, lam=lam), budget, rng)
                vals.append(rec.best_F)
            finals[(spec.name, mu, lam)] = float(np.mean(vals))
    ranks = {}
    for spec in specs:
        r = rankdata([finals[(spec.name, mu, lam)] for mu, lam in cells])
        for (mu, lam), v in zip(cells, r):
            ranks[(spec.name, mu, lam)] = float(v)
    table = []
    for mu, lam in cells:
        per = [ranks[(s.name, mu, lam)] for s in specs]
        table.append({"mu": mu, "lam": lam, "mean_rank": float(np.mean(per)),
                      "ranks": dict(zip([s.name for s in specs], per)),
                      "mean_best": {s.name: finals[(s.name, mu, lam)] for s in specs}})
    table.sort(key=lambda r: (r["mean_rank"], r["mu"], r["lam"]))
    if out:
        names = [s.name for s in specs]
        write_csv(os.path.join(out, "tuning.csv"),
                  ["mu", "lambda", "mean_rank"] + [f"rank_{p}" for p in names]
                  + [f"mean_best_{p}" for p in names],
                  [(r["mu"], r["lam"], r["mean_rank"], *[r["ranks"][p] for p in names],
                    *[r["mean_best"][p] for p in names]) for r in table])
    return table, (table[0]["mu"], table[0]["lam"])
