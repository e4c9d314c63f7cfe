"""Command line entry point: ``treesmbo <command> ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections import defaultdict

from . import harness
from .expr import format_sexpr, parse_sexpr
from .problems import PROBLEMS, UpperObjective, get_problem
from .stats import kruskal_wallis

f9 = harness.fmt


def _run(args):
    config = harness.ExperimentConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    out = args.out or config.out
    study = harness.run_experiment(config, workers=args.workers, out=out, plots=not args.no_plots)
    for p, s, cp, n, med, q1, q3 in study.summary():
        print(f"{p}\t{s}\t{cp}\tn={n}\tmedian={f9(med)}\tq1={f9(q1)}\tq3={f9(q3)}")
    for p, cp, k, H, pv in study.kruskal():
        print(f"{p}\t{cp}\tkruskal H={f9(H)}\tp={f9(pv)}")
    for fail in study.failures:
        print("failed:", *fail, file=sys.stderr)
    print(f"wrote {out}")


def _distances(args):
    study = harness.distance_study(n=args.n, problem=args.problem, seed=args.seed, out=args.out,
                                   plots=not args.no_plots)
    for (a, b), v in study.correlations.items():
        print(f"cor({a}, {b}) = {f9(v)}")
    if args.out:
        print(f"wrote {args.out}")


def _tune(args):
    problems = [p.strip() for p in args.problems.split(",") if p.strip()]
    table, best = harness.tuning_grid(problems, reps=args.reps, seed=args.seed,
                                      budget=args.budget, out=args.out)
    for r in table:
        print(f"mu={r['mu']}\tlambda={r['lam']}\tmean_rank={f9(r['mean_rank'])}")
    print(f"best: mu={best[0]} lambda={best[1]}")


def _stats(args):
    rows = harness.read_csv(args.input)
    value = args.value
    if value not in rows[0]:
        value = "best" if "best" in rows[0] else "best_so_far"
    keys = [k for k in ("problem", "checkpoint") if k in rows[0] and k != args.groupby]
    cells = defaultdict(lambda: defaultdict(list))
    for r in rows:
        cells[tuple(r[k] for k in keys)][r[args.groupby]].append(float(r[value]))
    for key, groups in cells.items():
        if len(groups) < 2:
            continue
        H, p = kruskal_wallis(list(groups.values()))
        label = " ".join(f"{k}={v}" for k, v in zip(keys, key))
        print(f"{label}\tgroups={len(groups)}\tH={f9(H)}\tp={f9(p)}")


def _plots(args):
    for path in harness.render_figures(args.input):
        print(f"wrote {path}")


def _eval(args):
    spec = get_problem(args.problem)
    tree = parse_sexpr(args.sexpr, spec.operator_set)
    res = UpperObjective(spec)(tree)
    print(f"tree={format_sexpr(tree)}\tF={f9(res.F)}\tconstants=[{', '.join(map(f9, res.c))}]"
          f"\tlower_evals={res.lower_evals}")


def build_parser():
    ap = argparse.ArgumentParser(prog="treesmbo", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an optimiser benchmark from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=_run)

    p = sub.add_parser("distances", help="distance matrices and correlations for random trees")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--problem", default="sine-cosine", choices=sorted(PROBLEMS))
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=_distances)

    p = sub.add_parser("tune", help="mu/lambda grid for the model-free EA")
    p.add_argument("--problems", default="sqr,sine-cosine")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=_tune)

    p = sub.add_parser("stats", help="Kruskal-Wallis test on a long-format CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--groupby", default="strategy")
    p.add_argument("--value", default="best")
    p.set_defaults(func=_stats)

    p = sub.add_parser("plots", help="render figures from the CSVs in a results directory")
    p.add_argument("--input", required=True)
    p.set_defaults(func=_plots)

    p = sub.add_parser("eval", help="upper-level fitness of one s-expression")
    p.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
    p.add_argument("sexpr")
    p.set_defaults(func=_eval)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "out", None):
        os.makedirs(args.out, exist_ok=True)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
