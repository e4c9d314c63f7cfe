"""Ordinary Kriging over trees with a weighted sum of three distances in the kernel.

    k(x, x') = exp(-b1 * shd2 - b2 * phd - b3 * ted)

The weights and a nugget are fitted by maximising the concentrated
likelihood with DIRECT-L over a log10 box.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.special import ndtr

from .distance import KERNEL_ORDER, TreeSet
from .optim import BoxBounds, direct_minimize

LOG10_BETA_BOX = (-4.0, 2.0)
LOG10_NUGGET_BOX = (-8.0, -2.0)
NUGGET_CAP = 1e-1
FAILED_FIT = 1e10

_SQRT_2PI = np.sqrt(2.0 * np.pi)


class ModelFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class DistanceTriple:
    shd2: float
    phd: float
    ted: float

    def as_array(self):
        return np.array([self.shd2, self.phd, self.ted])


@dataclass(frozen=True)
class KernelWeights:
    beta: tuple  # (shd2, phd, ted)
    nugget: float = 1e-8

    def __post_init__(self):
        if len(self.beta) != 3 or any(b < 0 for b in self.beta):
            raise ValueError("beta must be three non-negative weights")
        if not self.nugget > 0:
            raise ValueError("nugget must be positive")


@dataclass(frozen=True)
class Prediction:
    mean: float
    sd: float


def kernel(d: DistanceTriple, w: KernelWeights) -> float:
    return float(np.exp(-np.dot(w.beta, d.as_array())))


def kernel_matrix(D: np.ndarray, beta) -> np.ndarray:
    """exp(-sum_k beta_k D_k) for stacked distances ``D`` of shape (3, ...)."""
    return np.exp(-np.tensordot(np.asarray(beta, dtype=float), D, axes=1))


def _factor(D, y, beta, nugget):
    """Cholesky-factorise K + nugget*I, escalating the nugget tenfold on failure."""
    n = y.size
    R = kernel_matrix(D, beta)
    eta = nugget
    while True:
        K = R + eta * np.eye(n)
        try:
            c = linalg.cho_factor(K, lower=True, check_finite=False)
            if np.all(np.diag(c[0]) > 0):
                return c, eta
        except linalg.LinAlgError:
            pass
        eta *= 10.0
        if eta > NUGGET_CAP:
            raise ModelFitError("kernel matrix is not positive definite")


def _concentrate(cho, y):
    n = y.size
    ones = np.ones(n)
    Ki1 = linalg.cho_solve(cho, ones, check_finite=False)
    Kiy = linalg.cho_solve(cho, y, check_finite=False)
    mu = (ones @ Kiy) / (ones @ Ki1)
    r = y - mu
    Kir = Kiy - mu * Ki1
    sigma2 = (r @ Kir) / n
    return mu, sigma2, Ki1, Kir


def neg_concentrated_log_likelihood(beta, nugget, D, y) -> float:
    """(n/2) ln sigma2 + (1/2) ln det K for ordinary Kriging."""
    y = np.asarray(y, dtype=float)
    cho, _ = _factor(D, y, beta, nugget)
    _, sigma2, _, _ = _concentrate(cho, y)
    if not sigma2 > 0:
        raise ModelFitError("non-positive process variance")
    logdet = 2.0 * np.sum(np.log(np.diag(cho[0])))
    return 0.5 * y.size * np.log(sigma2) + 0.5 * logdet


@dataclass
class KrigingModel:
    trees: list
    y: np.ndarray
    D: np.ndarray  # (3, n, n) in KERNEL_ORDER
    weights: KernelWeights
    active: tuple
    mu: float
    sigma2: float
    loglik: float
    degenerate: bool = False
    cho: Optional[tuple] = field(default=None, repr=False)
    Ki1: Optional[np.ndarray] = field(default=None, repr=False)
    Kir: Optional[np.ndarray] = field(default=None, repr=False)
    treeset: Optional[TreeSet] = field(default=None, repr=False)
    nfev: int = 0

    @property
    def n(self):
        return self.y.size

    def predict_distances(self, Dx: np.ndarray):
        """Mean and sd for candidates with distances ``Dx`` (3, m, n) to the training trees."""
        m = Dx.shape[1]
        if self.degenerate:
            return np.full(m, self.mu), np.zeros(m)
        k = kernel_matrix(Dx, self.weights.beta)  # (m, n)
        mean = self.mu + k @ self.Kir
        v = linalg.solve_triangular(self.cho[0], k.T, lower=True, check_finite=False)
        kKk = np.sum(v * v, axis=0)
        one_Kk = k @ self.Ki1
        s2 = self.sigma2 * (1.0 + self.weights.nugget - kKk
                            + (1.0 - one_Kk) ** 2 / self.Ki1.sum())
        return mean, np.sqrt(np.maximum(s2, 0.0))

    def predict_many(self, trees, treeset: Optional[TreeSet] = None):
        ts = treeset if treeset is not None else TreeSet(trees, self.treeset.X)
        return self.predict_distances(ts.kernel_distances(self.treeset))

    def summary(self):
        return {
            "beta": dict(zip(KERNEL_ORDER, map(float, self.weights.beta))),
            "nugget": float(self.weights.nugget),
            "mu": float(self.mu),
            "sigma2": float(self.sigma2),
            "loglik": float(self.loglik),
            "n": int(self.n),
            "degenerate": bool(self.degenerate),
        }

    def to_json(self):
        return json.dumps(self.summary(), indent=2)


def predict(model: KrigingModel, tree) -> Prediction:
    mean, sd = model.predict_many([tree])
    return Prediction(float(mean[0]), float(sd[0]))


def fit_distances(D, y, trees=None, weights: Optional[KernelWeights] = None,
                  active=(True, True, True), budget: int = 1000) -> KrigingModel:
    """Fit on precomputed distances ``D`` (3, n, n).

    With ``weights`` given the likelihood search is skipped.  Inactive
    distances get weight zero.
    """
    D = np.asarray(D, dtype=float)
    y = np.asarray(y, dtype=float)
    active = tuple(bool(a) for a in active)
    if y.size < 2:
        raise ValueError("need at least two training points")
    if not any(active):
        raise ValueError("at least one distance must be active")
    idx = [i for i, a in enumerate(active) if a]

    if np.ptp(y) == 0:
        beta = tuple(1.0 if a else 0.0 for a in active)
        w = weights or KernelWeights(beta, 10 ** LOG10_NUGGET_BOX[0])
        return KrigingModel(list(trees or []), y, D, w, active, float(y[0]), 0.0, np.nan,
                            degenerate=True)

    nfev = 0
    if weights is None:
        def objective(p):
            beta = np.zeros(3)
            beta[idx] = 10.0 ** p[:-1]
            try:
                return neg_concentrated_log_likelihood(beta, 10.0 ** p[-1], D, y)
            except ModelFitError:
                return FAILED_FIT

        box = BoxBounds([LOG10_BETA_BOX[0]] * len(idx) + [LOG10_NUGGET_BOX[0]],
                        [LOG10_BETA_BOX[1]] * len(idx) + [LOG10_NUGGET_BOX[1]])
        res = direct_minimize(objective, box, budget)
        nfev = res.nfev
        if res.fun >= FAILED_FIT:
            raise ModelFitError("no admissible kernel parameters found")
        beta = np.zeros(3)
        beta[idx] = 10.0 ** res.x[:-1]
        weights = KernelWeights(tuple(float(b) for b in beta), float(10.0 ** res.x[-1]))
    else:
        beta = np.array(weights.beta, dtype=float)
        beta[[i for i, a in enumerate(active) if not a]] = 0.0
        weights = KernelWeights(tuple(float(b) for b in beta), weights.nugget)

    cho, eta = _factor(D, y, weights.beta, weights.nugget)
    if eta != weights.nugget:
        weights = KernelWeights(weights.beta, eta)
    mu, sigma2, Ki1, Kir = _concentrate(cho, y)
    if not sigma2 > 0:
        raise ModelFitError("non-positive process variance")
    logdet = 2.0 * np.sum(np.log(np.diag(cho[0])))
    loglik = -(0.5 * y.size * np.log(sigma2) + 0.5 * logdet)
    return KrigingModel(list(trees or []), y, D, weights, active, float(mu), float(sigma2),
                        float(loglik), cho=cho, Ki1=Ki1, Kir=Kir, nfev=nfev)


def fit(trees, y, X, budget: int = 1000, active=(True, True, True),
        weights: Optional[KernelWeights] = None) -> KrigingModel:
    """Compute the three distance matrices once and fit the model."""
    trees = list(trees)
    if len(set(trees)) < 2:
        raise ValueError("need at least two distinct trees")
    ts = TreeSet(trees, X)
    model = fit_distances(ts.kernel_distances(), y, trees, weights, active, budget)
    model.treeset = ts
    return model


def expected_improvement(mean, sd, y_min):
    """EI for minimisation; zero where ``sd`` is zero."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    diff = y_min - mean
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        u = np.where(sd > 0, diff / np.where(sd > 0, sd, 1.0), 0.0)
        ei = diff * ndtr(u) + sd * np.exp(-0.5 * u * u) / _SQRT_2PI
    ei = np.where(sd > 0, np.maximum(ei, 0.0), 0.0)
    return ei if ei.ndim else float(ei)


def normalized_weights(model_or_weights) -> tuple:
    """Weights rescaled to sum to one, in :data:`KERNEL_ORDER`."""
    w = getattr(model_or_weights, "weights", model_or_weights)
    beta = np.asarray(getattr(w, "beta", w), dtype=float)
    return tuple(float(b) for b in beta / beta.sum())
