import numpy as np
import pytest

from treesmbo.expr import GeneratorParams, OperatorSet, parse_sexpr, ramped_half_and_half

SC_OPS = OperatorSet(("+", "-", "*", "/", "sin", "cos"), 1)
FULL_OPS = OperatorSet(("+", "-", "*", "/", "sqrt", "sin", "cos", "exp", "log"), 2)

FIG1 = "(+ (sqrt (- c z2)) (* z1 c))"


@pytest.fixture
def P():
    return parse_sexpr


@pytest.fixture
def fig1():
    return parse_sexpr(FIG1)


def random_trees(n, seed=0, ops=FULL_OPS, params=GeneratorParams()):
    rng = np.random.default_rng(seed)
    return [ramped_half_and_half(ops, params, rng) for _ in range(n)]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
