import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treesmbo.stats import kruskal_wallis


def chi2_sf_oracle(x, df):
    """Upper regularised incomplete gamma Q(df/2, x/2) at 50 digits."""
    mpmath.mp.dps = 50
    return float(mpmath.gammainc(mpmath.mpf(df) / 2, mpmath.mpf(x) / 2, mpmath.inf,
                                 regularized=True))


def hand_kw(groups):
    """Rank by counting, average ties, then the textbook H with tie correction."""
    allv = [v for g in groups for v in g]
    N = len(allv)

    def rank(v):
        less = sum(1 for w in allv if w < v)
        eq = sum(1 for w in allv if w == v)
        return less + (eq + 1) / 2

    H = 12 / (N * (N + 1)) * sum(sum(rank(v) for v in g) ** 2 / len(g) for g in groups)
    H -= 3 * (N + 1)
    ties = [allv.count(v) for v in set(allv)]
    C = 1 - sum(t ** 3 - t for t in ties) / (N ** 3 - N)
    return H / C


def test_unit_value_exact():
    H, p = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    assert H == 7.2
    assert abs(p - chi2_sf_oracle(7.2, 2)) <= 1e-6
    assert p == pytest.approx(np.exp(-3.6), abs=1e-15)


def test_identical_groups():
    H, p = kruskal_wallis([[1, 2, 3], [1, 2, 3]])
    assert H == 0
    H, p = kruskal_wallis([[4, 4], [4, 4, 4]])
    assert (H, p) == (0.0, 1.0)


def test_input_validation():
    with pytest.raises(ValueError):
        kruskal_wallis([[1, 2]])
    with pytest.raises(ValueError):
        kruskal_wallis([[1, 2], []])


def test_ties_against_hand_formula():
    groups = [[1, 2, 2, 3], [2, 3, 3, 5, 8], [1, 1, 9]]
    H, p = kruskal_wallis(groups)
    assert H == pytest.approx(hand_kw(groups), abs=1e-12)
    assert p == pytest.approx(chi2_sf_oracle(H, 2), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.integers(0, 6), min_size=1, max_size=8), min_size=2, max_size=4))
def test_random_groups_against_oracle(groups):
    allv = [v for g in groups for v in g]
    H, p = kruskal_wallis(groups)
    if len(set(allv)) == 1:
        assert (H, p) == (0.0, 1.0)
        return
    assert H == pytest.approx(hand_kw(groups), abs=1e-9)
    assert p == pytest.approx(chi2_sf_oracle(H, len(groups) - 1), abs=1e-9)
    assert 0 <= p <= 1
