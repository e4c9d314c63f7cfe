"""Symbolic-regression benchmarks and the bi-level fitness.

The upper level scores a tree structure; the lower level tunes the tree's
constants to maximise the absolute Pearson correlation between the tree's
output and the target data.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .expr import OperatorSet, Tree, compile_tree
from .optim import BoxBounds, direct_minimize, nelder_mead

PENALTY = 1.0
LOWER_EVALS_PER_CONSTANT = 1000

_TARGET_NAMESPACE = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "pi", "tanh")
}


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    target: str  # numpy expression over z1..zv
    n_vars: int
    bounds: tuple  # ((lo, hi), ...) per variable
    n: int
    operators: tuple
    seed: int = 1
    const_bounds: tuple = (-10.0, 10.0)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two data points")
        if len(self.bounds) != self.n_vars:
            raise ValueError("one (lo, hi) pair per variable")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"bad bounds ({lo}, {hi})")
        if not self.const_bounds[0] < self.const_bounds[1]:
            raise ValueError("bad constant bounds")

    @property
    def operator_set(self) -> OperatorSet:
        return OperatorSet(tuple(self.operators), self.n_vars)

    def target_fn(self, X):
        env = dict(_TARGET_NAMESPACE)
        for i in range(self.n_vars):
            env[f"z{i + 1}"] = X[:, i]
        with np.errstate(all="ignore"):
            y = eval(self.target, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(y, dtype=float), (X.shape[0],))

    def to_dict(self):
        d = asdict(self)
        d["bounds"] = [list(b) for b in self.bounds]
        d["operators"] = list(self.operators)
        d["const_bounds"] = list(self.const_bounds)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["bounds"] = tuple(tuple(float(v) for v in b) for b in d["bounds"])
        d["operators"] = tuple(d["operators"])
        if "const_bounds" in d:
            d["const_bounds"] = tuple(float(v) for v in d["const_bounds"])
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    _yc: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        yc = self.y - self.y.mean()
        self._yc = yc / np.sqrt(yc @ yc)

    def to_csv(self, path):
        v = self.X.shape[1]
        header = ",".join([f"z{i + 1}" for i in range(v)] + ["y"])
        rows = [",".join(f"{x:.9g}" for x in (*r, t)) for r, t in zip(self.X, self.y)]
        with open(path, "w") as fh:
            fh.write(header + "\n" + "\n".join(rows) + "\n")


_ARITH = ("+", "-", "*", "/")

PROBLEMS = {
    "kotanchek2d": ProblemSpec(
        "kotanchek2d", "exp(-(z1 - 1)**2) / (1.2 + (z2 - 2.5)**2)", 2,
        ((0.3, 4.0), (0.3, 4.0)), 100, _ARITH + ("sqrt",)),
    "salustowicz1d": ProblemSpec(
        "salustowicz1d", "z1**3 * exp(-z1) * cos(z1) * sin(z1) * (sin(z1)**2 * cos(z1) - 1)", 1,
        ((0.0, 10.0),), 100, _ARITH + ("sin", "cos")),
    "newton": ProblemSpec(
        "newton", "z1 * z2 / z3**2", 3, ((1.0, 10.0), (1.0, 10.0), (0.5, 2.0)), 100,
        _ARITH + ("sqrt",)),
    "sine-cosine": ProblemSpec(
        "sine-cosine", "6 * sin(z1) * cos(z1)", 1, ((-np.pi, np.pi),), 100, _ARITH + ("sin", "cos")),
    "sqr": ProblemSpec("sqr", "z1**2", 1, ((-1.0, 1.0),), 20, _ARITH + ("log",)),
    "sqr+log": ProblemSpec("sqr+log", "z1**2 + log(z1)", 1, ((0.1, 2.0),), 20, _ARITH + ("log",)),
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


def make_dataset(spec: ProblemSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    lo = np.array([b[0] for b in spec.bounds])
    hi = np.array([b[1] for b in spec.bounds])
    X = rng.uniform(lo, hi, size=(spec.n, spec.n_vars))
    y = spec.target_fn(X).copy()
    for _ in range(1000):
        bad = ~np.isfinite(y)
        if not bad.any():
            break
        X[bad] = rng.uniform(lo, hi, size=(int(bad.sum()), spec.n_vars))
        y[bad] = spec.target_fn(X[bad])
    else:
        raise ValueError(f"target of {spec.name!r} is not finite on its box")
    return Dataset(X, y)


def _fitness_of_output(out, dataset):
    if out is None:
        return PENALTY
    oc = out - out.mean()
    norm = np.sqrt(oc @ oc)
    if norm <= 1e-12 * max(1.0, np.abs(oc).max()) or not np.isfinite(norm):
        return PENALTY
    return 1.0 - min(abs(oc @ dataset._yc) / norm, 1.0)


def lower_fitness(tree: Tree, c, dataset: Dataset) -> float:
    """One minus the absolute correlation of the tree output with the target."""
    fn = compile_tree(tree)
    c = np.asarray(c, dtype=float).ravel()
    if c.size != fn.n_constants:
        raise ValueError(f"expected {fn.n_constants} constants, got {c.size}")
    return _fitness_of_output(fn(dataset.X, c), dataset)


@dataclass
class UpperEvaluation:
    tree: Tree
    F: float
    c: np.ndarray
    lower_evals: int
    feasible: bool


def evaluate_upper(tree: Tree, dataset: Dataset, const_bounds=(-10.0, 10.0),
                   evals_per_constant: int = LOWER_EVALS_PER_CONSTANT) -> UpperEvaluation:
    """Solve the lower level for ``tree`` and return its upper-level fitness.

    DIRECT-L spends ``evals_per_constant * d_c`` evaluations, then
    Nelder-Mead refines from the DIRECT incumbent with the same budget.
    """
    fn = compile_tree(tree)
    dc = fn.n_constants
    X = dataset.X
    if dc == 0:
        F = _fitness_of_output(fn(X, np.empty(0)), dataset)
        return UpperEvaluation(tree, F, np.empty(0), 0, F < PENALTY)

    def objective(c):
        return _fitness_of_output(fn(X, c), dataset)

    box = BoxBounds(np.full(dc, const_bounds[0]), np.full(dc, const_bounds[1]))
    budget = evals_per_constant * dc
    first = direct_minimize(objective, box, budget)
    second = nelder_mead(objective, first.x, box, budget, tol=0.0)
    best = second if second.fun < first.fun else first
    return UpperEvaluation(tree, best.fun, best.x, first.nfev + second.nfev, best.fun < PENALTY)


# Upper-level results per problem, shared by every run in the process.
# evaluate_upper is deterministic, so sharing never changes a result.
_SHARED = {}


def clear_cache():
    _SHARED.clear()


class UpperObjective:
    """Counts upper-level evaluations for one problem.

    Repeated trees reuse the stored result but still count as evaluations.
    """

    def __init__(self, spec: ProblemSpec, dataset: Dataset = None):
        self.spec = spec
        self.dataset = dataset if dataset is not None else make_dataset(spec)
        self.calls = 0
        self._memo = _SHARED.setdefault(spec, {}) if dataset is None else {}

    def __call__(self, tree: Tree) -> UpperEvaluation:
        self.calls += 1
        res = self._memo.get(tree)
        if res is None:
            res = evaluate_upper(tree, self.dataset, self.spec.const_bounds)
            self._memo[tree] = res
        return res
