"""Box-constrained derivative-free minimisers: locally biased DIRECT and Nelder-Mead.

Both count objective evaluations exactly and never exceed ``max_evals``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BoxBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("bounds must be 1-d vectors of equal length")
        if not np.all(lower < upper):
            raise ValueError("need lower < upper in every dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self):
        return self.lower.size

    @property
    def width(self):
        return self.upper - self.lower

    def clip(self, x):
        return np.clip(x, self.lower, self.upper)


@dataclass
class OptResult:
    x: np.ndarray
    fun: float
    nfev: int


class _Budget:
    def __init__(self, f, max_evals):
        self.f = f
        self.left = max_evals
        self.nfev = 0
        self.best_x = None
        self.best_f = np.inf

    def __call__(self, x):
        self.left -= 1
        self.nfev += 1
        v = float(self.f(x))
        if v < self.best_f or self.best_x is None:
            self.best_f = v
            self.best_x = np.array(x, dtype=float)
        return v

    def result(self):
        return OptResult(self.best_x, self.best_f, self.nfev)


def direct_minimize(f, bounds: BoxBounds, max_evals: int, eps: float = 1e-4) -> OptResult:
    """DIRECT-L (Gablonsky & Kelley).

    The unit cube is split into hyperrectangles whose size is the length of
    their longest side.  Each iteration picks, per size class, the single
    best rectangle lying on the lower-right convex hull of (size, value)
    pairs, and trisects it along its first longest side.
    """
    if max_evals < 1:
        raise ValueError("max_evals must be >= 1")
    d = bounds.dim
    lo, width = bounds.lower, bounds.width
    ev = _Budget(lambda u: f(lo + u * width), max_evals)

    # Rectangle state: centre (unit cube), per-dimension trisection count, value.
    centres = [np.full(d, 0.5)]
    levels = [np.zeros(d, dtype=np.int64)]
    values = [ev(centres[0])]
    groups = {0: [(values[0], 0)]}  # size class (min level) -> heap of (value, id)

    while ev.left > 0:
        chosen = _potentially_optimal(groups, ev.best_f, eps)
        if not chosen:
            break
        picked = []
        for k in chosen:
            heapq.heappop(groups[k])
            if not groups[k]:
                del groups[k]
            picked.append(chosen[k][1])
        for rid in picked:
            if ev.left <= 0:
                break
            lev = levels[rid]
            dim = int(np.argmin(lev))
            step = 3.0 ** -(lev[dim] + 1)
            new_lev = lev.copy()
            new_lev[dim] += 1
            levels[rid] = new_lev
            cls = int(new_lev.min())
            heapq.heappush(groups.setdefault(cls, []), (values[rid], rid))
            for sign in (-1.0, 1.0):
                if ev.left <= 0:
                    break
                c = centres[rid].copy()
                c[dim] += sign * step
                centres.append(c)
                levels.append(new_lev.copy())
                values.append(ev(c))
                heapq.heappush(groups.setdefault(cls, []), (values[-1], len(centres) - 1))

    res = ev.result()
    return OptResult(lo + res.x * width, res.fun, res.nfev)


def _potentially_optimal(groups, fmin, eps):
    """Return {size class: (value, id)} of the rectangles to divide."""
    pts = sorted(((3.0 ** -k, groups[k][0][0], k) for k in groups), key=lambda p: p[0])
    chosen = {}
    for j, (dj, fj, k) in enumerate(pts):
        k_lo = 0.0
        for di, fi, _ in pts[:j]:
            k_lo = max(k_lo, (fj - fi) / (dj - di))
        k_hi = np.inf
        for di, fi, _ in pts[j + 1:]:
            k_hi = min(k_hi, (fi - fj) / (di - dj))
        if k_hi <= 0 or k_lo > k_hi:
            continue
        if np.isfinite(k_hi) and fj - k_hi * dj > fmin - eps * abs(fmin):
            continue
        chosen[k] = groups[k][0]
    return chosen


def nelder_mead(f, x0, bounds: BoxBounds, max_evals: int, tol: float = 1e-10,
                step: float = 0.05) -> OptResult:
    """Nelder-Mead with out-of-box trial points clamped onto the box.

    Stops when the budget is spent or the simplex diameter drops below
    ``tol``; ``tol=0`` always spends the full budget.
    """
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < bounds.lower) or np.any(x0 > bounds.upper):
        raise ValueError("x0 outside bounds")
    d = bounds.dim
    ev = _Budget(f, max_evals)

    simplex = [x0.copy()]
    for i in range(d):
        x = x0.copy()
        h = step * bounds.width[i]
        x[i] = x[i] + h if x[i] + h <= bounds.upper[i] else x[i] - h
        simplex.append(x)
    fs = []
    for x in simplex:
        if ev.left <= 0:
            return ev.result()
        fs.append(ev(x))
    simplex = np.array(simplex)
    fs = np.array(fs)

    while ev.left > 0:
        order = np.argsort(fs, kind="stable")
        simplex, fs = simplex[order], fs[order]
        diam = np.max(np.abs(simplex[1:] - simplex[0]))
        if diam < tol:
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = bounds.clip(centroid + (centroid - worst))
        fr = ev(xr)
        if fr < fs[0]:
            if ev.left <= 0:
                simplex[-1], fs[-1] = xr, fr
                break
            xe = bounds.clip(centroid + 2.0 * (centroid - worst))
            fe = ev(xe)
            if fe < fr:
                simplex[-1], fs[-1] = xe, fe
            else:
                simplex[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            simplex[-1], fs[-1] = xr, fr
            continue
        if ev.left <= 0:
            break
        if fr < fs[-1]:
            xc = bounds.clip(centroid + 0.5 * (xr - centroid))
            fc = ev(xc)
            if fc <= fr:
                simplex[-1], fs[-1] = xc, fc
                continue
        else:
            xc = bounds.clip(centroid + 0.5 * (worst - centroid))
            fc = ev(xc)
            if fc < fs[-1]:
                simplex[-1], fs[-1] = xc, fc
                continue
        for i in range(1, d + 1):
            if ev.left <= 0:
                break
            simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
            fs[i] = ev(simplex[i])
    return ev.result()
