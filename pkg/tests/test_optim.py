import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treesmbo.optim import BoxBounds, direct_minimize, nelder_mead


class Recorder:
    """Objective wrapper that keeps every evaluated point."""

    def __init__(self, f):
        self.f = f
        self.xs, self.fs = [], []

    def __call__(self, x):
        v = self.f(x)
        self.xs.append(np.array(x, dtype=float))
        self.fs.append(v)
        return v


def quad(x):
    return float((x[0] - 0.3) ** 2)


def sphere(x):
    return float((x[0] - 0.2) ** 2 + (x[1] + 0.4) ** 2)


def rosenbrock(x):
    return float(100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2)


def test_bounds_validation():
    with pytest.raises(ValueError):
        BoxBounds([0, 1], [1, 1])
    with pytest.raises(ValueError):
        BoxBounds([0], [1, 2])
    assert BoxBounds(0, 1).dim == 1


def test_direct_quadratic():
    r = direct_minimize(quad, BoxBounds([0], [1]), 100)
    assert abs(r.x[0] - 0.3) <= 0.01
    assert r.nfev == 100


def test_direct_constant_returns_midpoint():
    r = direct_minimize(lambda x: 7.0, BoxBounds([-1, 2], [3, 4]), 50)
    assert r.fun == 7.0
    assert np.array_equal(r.x, [1.0, 3.0])


def test_direct_sphere():
    r = direct_minimize(sphere, BoxBounds([-1, -1], [1, 1]), 1000)
    assert r.fun <= 1e-3


def test_direct_single_evaluation():
    r = direct_minimize(quad, BoxBounds([0], [1]), 1)
    assert r.nfev == 1 and r.x[0] == 0.5


@pytest.mark.parametrize("budget", [1, 2, 3, 4, 7, 10, 33, 100, 257])
def test_direct_budget_exact(budget):
    rec = Recorder(sphere)
    r = direct_minimize(rec, BoxBounds([-1, -1], [1, 1]), budget)
    assert r.nfev == len(rec.fs) == budget


def test_direct_tracks_incumbent_and_stays_in_box():
    rec = Recorder(lambda x: float(np.sin(5 * x[0]) * np.cos(3 * x[1]) + x[2] ** 2))
    b = BoxBounds([-2, 0, -1], [1, 3, 0.5])
    r = direct_minimize(rec, b, 500)
    assert r.fun == min(rec.fs)
    xs = np.array(rec.xs)
    assert np.all(xs >= b.lower) and np.all(xs <= b.upper)
    assert np.array_equal(rec.xs[int(np.argmin(rec.fs))], r.x)


def test_direct_penalty_plateau_is_ordinary_value():
    # infeasible half of the box returns the penalty 1
    f = lambda x: 1.0 if x[0] > 0.5 else float((x[0] - 0.45) ** 2)  # noqa: E731
    r = direct_minimize(f, BoxBounds([0], [1]), 200)
    assert abs(r.x[0] - 0.45) < 1e-3


def test_direct_deterministic():
    b = BoxBounds([-1, -1], [1, 1])
    a1 = direct_minimize(rosenbrock, b, 300)
    a2 = direct_minimize(rosenbrock, b, 300)
    assert np.array_equal(a1.x, a2.x) and a1.fun == a2.fun


def test_direct_more_budget_never_worse():
    b = BoxBounds([-2, -2], [2, 2])
    prev = np.inf
    for n in (25, 50, 100, 200, 400, 800, 1600):
        r = direct_minimize(rosenbrock, b, n)
        assert r.fun <= prev
        prev = r.fun


def test_direct_budget_prefix_consistency():
    # a run with a larger budget evaluates the same points first
    r1, r2 = Recorder(sphere), Recorder(sphere)
    b = BoxBounds([-1, -1], [1, 1])
    direct_minimize(r1, b, 60)
    direct_minimize(r2, b, 120)
    assert all(np.array_equal(p, q) for p, q in zip(r1.xs, r2.xs))


def test_nm_quadratic():
    r = nelder_mead(quad, [0.9], BoxBounds([0], [1]), 200)
    assert abs(r.x[0] - 0.3) <= 1e-6


def test_nm_at_optimum_does_not_worsen():
    f = lambda x: float(np.sum((x - 0.3) ** 2))  # noqa: E731
    r = nelder_mead(f, [0.3, 0.3], BoxBounds([0, 0], [1, 1]), 100)
    assert r.fun <= 0.0


def test_nm_rosenbrock():
    r = nelder_mead(rosenbrock, [-1.2, 1.0], BoxBounds([-2, -2], [2, 2]), 2000)
    assert r.fun <= 1e-4


def test_nm_tol_zero_spends_budget():
    rec = Recorder(quad)
    r = nelder_mead(rec, [0.9], BoxBounds([0], [1]), 300, tol=0)
    assert r.nfev == len(rec.fs) == 300


def test_nm_stops_on_small_simplex():
    r = nelder_mead(quad, [0.9], BoxBounds([0], [1]), 10_000)
    assert r.nfev < 10_000


@pytest.mark.parametrize("budget", [1, 2, 3, 5, 50])
def test_nm_never_exceeds_budget(budget):
    rec = Recorder(rosenbrock)
    r = nelder_mead(rec, [-1.2, 1.0], BoxBounds([-2, -2], [2, 2]), budget, tol=0)
    assert r.nfev == len(rec.fs) <= budget


def test_nm_clamps_to_box():
    rec = Recorder(lambda x: float(-x[0] - x[1]))  # optimum at the upper corner
    b = BoxBounds([0, 0], [1, 1])
    r = nelder_mead(rec, [0.5, 0.5], b, 300)
    xs = np.array(rec.xs)
    assert np.all(xs >= 0) and np.all(xs <= 1)
    assert r.fun == pytest.approx(-2.0, abs=1e-6)
    assert r.fun == min(rec.fs)


def test_nm_rejects_start_outside():
    with pytest.raises(ValueError):
        nelder_mead(quad, [2.0], BoxBounds([0], [1]), 10)


def test_nm_initial_simplex_step():
    rec = Recorder(sphere)
    nelder_mead(rec, [0.0, 0.0], BoxBounds([-1, -1], [1, 1]), 3)
    assert np.allclose(rec.xs[1], [0.1, 0.0]) and np.allclose(rec.xs[2], [0.0, 0.1])


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.99, 0.99), st.floats(-0.99, 0.99), st.integers(5, 200))
def test_both_optimisers_in_box_and_incumbent_exact(x0, x1, budget):
    b = BoxBounds([-1, -1], [1, 1])
    for run in (lambda g: direct_minimize(g, b, budget),
                lambda g: nelder_mead(g, [x0, x1], b, budget, tol=0)):
        rec = Recorder(rosenbrock)
        r = run(rec)
        xs = np.array(rec.xs)
        assert np.all(xs >= -1) and np.all(xs <= 1)
        assert r.fun == min(rec.fs)
        assert r.nfev == len(rec.fs) <= budget
