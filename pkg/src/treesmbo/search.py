"""Upper-level search: random search, a (mu + lambda) EA, and surrogate-model-based optimisation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .distance import TreeSet
from .expr import (GeneratorParams, MutationParams, crossover_subtree, format_sexpr,
                   mutate_subtree, ramped_half_and_half)
from .kriging import ModelFitError, expected_improvement, fit_distances, normalized_weights
from .problems import UpperObjective

log = logging.getLogger(__name__)

DISTANCES = ("shd2", "phd", "ted")


@dataclass(frozen=True)
class SearchBudget:
    total: int = 100
    initial: int = 20
    ei_evals: int = 10_000

    def __post_init__(self):
        if self.total < 1:
            raise ValueError("budget must be >= 1")
        if not 0 < self.initial < self.total:
            raise ValueError("initial design must be smaller than the total budget")


@dataclass(frozen=True)
class EAParams:
    mu: int = 15
    lam: int = 1
    generator: GeneratorParams = GeneratorParams()
    mutation: MutationParams = MutationParams()

    def __post_init__(self):
        if self.mu < 1 or self.lam < 1:
            raise ValueError("mu and lambda must be >= 1")


@dataclass(frozen=True)
class SurrogateConfig:
    active: tuple = (True, True, True)  # shd2, phd, ted
    mle_evals: int = 1000
    inner: EAParams = EAParams(mu=200, lam=10)

    @classmethod
    def single(cls, which: str, **kw):
        return cls(active=tuple(d == which for d in DISTANCES), **kw)


@dataclass
class RunRecord:
    strategy: str
    problem: str
    evals: list = field(default_factory=list)    # (idx, tree, F, best_so_far)
    weights: list = field(default_factory=list)  # (iter, w_phd, w_ted, w_shd2, status)
    best_tree: object = None
    best_F: float = np.inf

    def add(self, tree, F):
        if F < self.best_F:
            self.best_F, self.best_tree = F, tree
        self.evals.append((len(self.evals) + 1, tree, F, self.best_F))

    def best_at(self, k):
        return self.evals[min(k, len(self.evals)) - 1][3]

    def eval_rows(self):
        return [(i, self.strategy, format_sexpr(t), F, b) for i, t, F, b in self.evals]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eval_idx", "strategy", "tree_sexpr", "F", "best_so_far"])
            for i, s, t, F, b in self.eval_rows():
                w.writerow([i, s, t, f"{F:.9g}", f"{b:.9g}"])

    def write_weights_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter_idx", "w_phd", "w_ted", "w_shd2", "status"])
            for it, a, b, c, st in self.weights:
                w.writerow([it, f"{a:.9g}", f"{b:.9g}", f"{c:.9g}", st])


def _objective(problem):
    return problem if isinstance(problem, UpperObjective) else UpperObjective(problem)


def random_search(problem, budget: int, rng: np.random.Generator,
                  generator: GeneratorParams = GeneratorParams()) -> RunRecord:
    obj = _objective(problem)
    ops = obj.spec.operator_set
    rec = RunRecord("rs", obj.spec.name)
    for _ in range(budget):
        t = ramped_half_and_half(ops, generator, rng)
        rec.add(t, obj(t).F)
    return rec


def _breed(pop, ops, params: EAParams, rng):
    a = pop[rng.integers(len(pop))]
    b = pop[rng.integers(len(pop))]
    child, _ = crossover_subtree(a, b, rng, max_depth=params.mutation.max_depth)
    return mutate_subtree(child, ops, params.mutation, rng)


def _fresh_child(pop, kids, ops, params: EAParams, rng, tries: int = 100):
    """Breed until the child differs from every parent and sibling (gives up after ``tries``)."""
    seen = set(pop) | set(kids)
    for _ in range(tries):
        t = _breed(pop, ops, params, rng)
        if t not in seen:
            return t
    return t


def ea_optimize(problem, params: EAParams, budget: int, rng: np.random.Generator) -> RunRecord:
    """(mu + lambda) EA with uniform parent choice and truncation survival.

    Offspring that duplicate a population member or a sibling are bred again
    rather than evaluated.
    """
    obj = _objective(problem)
    ops = obj.spec.operator_set
    rec = RunRecord("ea", obj.spec.name)
    pop, fit = [], []
    for _ in range(min(params.mu, budget)):
        t = ramped_half_and_half(ops, params.generator, rng)
        F = obj(t).F
        rec.add(t, F)
        pop.append(t)
        fit.append(F)
    used = len(pop)
    while used < budget:
        kids, kfit = [], []
        for _ in range(min(params.lam, budget - used)):
            t = _fresh_child(pop, kids, ops, params, rng)
            F = obj(t).F
            rec.add(t, F)
            kids.append(t)
            kfit.append(F)
        used += len(kids)
        allp, allf = pop + kids, np.array(fit + kfit)
        keep = np.argsort(allf, kind="stable")[:params.mu]
        pop = [allp[i] for i in keep]
        fit = [float(allf[i]) for i in keep]
    rec.generations = (used - min(params.mu, budget)) // params.lam if budget > params.mu else 0
    return rec


class _Archive:
    """Evaluated trees with incrementally grown kernel distance matrices."""

    def __init__(self, X):
        self.X = X
        self.trees = []
        self.keys = set()
        self.y = []
        self.D = np.zeros((3, 0, 0))
        self.ts: Optional[TreeSet] = None

    def add(self, tree, F):
        new = TreeSet([tree], self.X)
        if self.ts is None:
            D = np.zeros((3, 1, 1))
        else:
            row = new.kernel_distances(self.ts)[:, 0, :]
            n = len(self.trees)
            D = np.zeros((3, n + 1, n + 1))
            D[:, :n, :n] = self.D
            D[:, n, :n] = row
            D[:, :n, n] = row
        self.D = D
        self.trees.append(tree)
        self.keys.add(tree)
        self.y.append(F)
        self.ts = new if self.ts is None else self.ts.extend([tree])


class _EIScorer:
    """Scores candidate trees by EI; memoised per tree and capped at a call budget."""

    def __init__(self, model, archive: _Archive, budget: int):
        self.model = model
        self.archive = archive
        self.y_min = float(np.min(archive.y))
        self.left = budget
        self.calls = 0
        self.memo = {}

    def __call__(self, trees):
        trees = trees[:self.left]
        self.left -= len(trees)
        self.calls += len(trees)
        fresh = list(dict.fromkeys(t for t in trees if t not in self.memo))
        if fresh:
            ts = TreeSet(fresh, self.archive.X)
            mean, sd = self.model.predict_distances(ts.kernel_distances(self.archive.ts))
            ei = expected_improvement(mean, sd, self.y_min)
            for t, v in zip(fresh, np.atleast_1d(ei)):
                self.memo[t] = float(v)
        return trees, [self.memo[t] for t in trees]


def _maximise_ei(scorer: _EIScorer, ops, params: EAParams, rng):
    pop, val = scorer([ramped_half_and_half(ops, params.generator, rng)
                       for _ in range(params.mu)])
    while scorer.left > 0:
        kids, kval = scorer([_breed(pop, ops, params, rng) for _ in range(params.lam)])
        allp, allv = pop + kids, np.array(val + kval)
        keep = np.argsort(-allv, kind="stable")[:params.mu]
        pop = [allp[i] for i in keep]
        val = [float(allv[i]) for i in keep]


def _propose(scorer: _EIScorer, archive: _Archive):
    """Best-EI tree seen by the inner search that is not already archived."""
    best, best_v = None, -np.inf
    for t, v in scorer.memo.items():
        if v > best_v and t not in archive.keys:
            best, best_v = t, v
    return best


def _fresh_random(archive, ops, gen, rng, tries=1000):
    for _ in range(tries):
        t = ramped_half_and_half(ops, gen, rng)
        if t not in archive.keys:
            return t
    return t


def smbo(problem, budget: SearchBudget, config: SurrogateConfig, rng: np.random.Generator,
         strategy: str = "smbo") -> RunRecord:
    """Kriging + expected-improvement loop over trees.

    The inner EA only ever calls the surrogate; upper-level evaluations
    happen once per iteration on the proposal.
    """
    obj = _objective(problem)
    ops = obj.spec.operator_set
    gen = config.inner.generator
    rec = RunRecord(strategy, obj.spec.name)
    rec.fits = 0
    rec.ei_calls = []
    archive = _Archive(obj.dataset.X)

    for _ in range(budget.initial):
        t = _fresh_random(archive, ops, gen, rng)
        F = obj(t).F
        archive.add(t, F)
        rec.add(t, F)

    it = 0
    while len(archive.trees) < budget.total:
        it += 1
        status = "ok"
        try:
            model = fit_distances(archive.D, archive.y, archive.trees,
                                  active=config.active, budget=config.mle_evals)
            rec.fits += 1
            wn = normalized_weights(model)
            if model.degenerate:
                status = "degenerate"
        except ModelFitError as exc:
            log.warning("model fit failed in iteration %d: %s", it, exc)
            model = None
            status = "fit-failed"
            act = np.array(config.active, dtype=float)
            wn = tuple(act / act.sum())

        proposal = None
        if model is not None and not model.degenerate:
            scorer = _EIScorer(model, archive, budget.ei_evals)
            _maximise_ei(scorer, ops, config.inner, rng)
            rec.ei_calls.append(scorer.calls)
            proposal = _propose(scorer, archive)
        if proposal is None:
            proposal = _fresh_random(archive, ops, gen, rng)
            if status == "ok":
                status = "random"

        F = obj(proposal).F
        archive.add(proposal, F)
        rec.add(proposal, F)
        w_shd2, w_phd, w_ted = wn
        rec.weights.append((it, w_phd, w_ted, w_shd2, status))
    return rec


def single_distance_smbo(problem, which: str, budget: SearchBudget, rng: np.random.Generator,
                         **kw) -> RunRecord:
    if which not in DISTANCES:
        raise ValueError(f"unknown distance {which!r}")
    return smbo(problem, budget, SurrogateConfig.single(which, **kw), rng, strategy=f"smbo-{which}")
