import csv

import numpy as np
import pytest

import treesmbo.search as search
from treesmbo.expr import format_sexpr
from treesmbo.kriging import ModelFitError
from treesmbo.problems import UpperObjective, get_problem
from treesmbo.search import (EAParams, SearchBudget, SurrogateConfig, ea_optimize, random_search,
                             single_distance_smbo, smbo)

SQR = get_problem("sqr")
FAST = SurrogateConfig(mle_evals=60, inner=EAParams(mu=20, lam=5))


def small_budget(total=30, initial=20):
    return SearchBudget(total, initial, ei_evals=150)


def check_trace(rec, budget):
    assert len(rec.evals) == budget
    assert [e[0] for e in rec.evals] == list(range(1, budget + 1))
    best = [e[3] for e in rec.evals]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
    assert best == list(np.minimum.accumulate([e[2] for e in rec.evals]))
    assert rec.best_F == best[-1]


def test_budget_validation():
    with pytest.raises(ValueError):
        SearchBudget(20, 20)
    with pytest.raises(ValueError):
        EAParams(mu=0)


def test_random_search_budget_one():
    obj = UpperObjective(SQR)
    rec = random_search(obj, 1, np.random.default_rng(0))
    assert len(rec.evals) == 1 and obj.calls == 1


def test_random_search_trace_and_determinism():
    a = random_search(SQR, 30, np.random.default_rng(3))
    b = random_search(SQR, 30, np.random.default_rng(3))
    check_trace(a, 30)
    assert a.evals == b.evals


def test_ea_budget_equals_mu():
    obj = UpperObjective(SQR)
    rec = ea_optimize(obj, EAParams(mu=15, lam=1), 15, np.random.default_rng(0))
    assert rec.generations == 0 and obj.calls == 15
    assert rec.best_F == min(e[2] for e in rec.evals)


def test_ea_generation_count():
    obj = UpperObjective(SQR)
    rec = ea_optimize(obj, EAParams(mu=15, lam=1), 100, np.random.default_rng(1))
    assert rec.generations == 85
    assert obj.calls == 100
    check_trace(rec, 100)


def test_ea_truncation_keeps_mu_best(monkeypatch):
    survivors = []
    orig = np.argsort

    def spy(a, *args, **kw):
        order = orig(a, *args, **kw)
        if kw.get("kind") == "stable" and np.size(a) == 9:  # the mu + lambda survival step
            survivors.append((np.asarray(a).copy(), order))
        return order

    monkeypatch.setattr(search.np, "argsort", spy)
    ea_optimize(SQR, EAParams(mu=6, lam=3), 30, np.random.default_rng(2))
    assert len(survivors) == 8
    for vals, order in survivors:
        kept = np.sort(vals[order[:6]])
        assert np.array_equal(kept, np.sort(vals)[:6])


def test_ea_reproducible():
    a = ea_optimize(SQR, EAParams(), 40, np.random.default_rng(5))
    b = ea_optimize(SQR, EAParams(), 40, np.random.default_rng(5))
    assert a.evals == b.evals


def test_smbo_accounting_full_protocol():
    obj = UpperObjective(SQR)
    rec = smbo(obj, SearchBudget(100, 20, ei_evals=100), FAST, np.random.default_rng(0))
    assert obj.calls == 100
    check_trace(rec, 100)
    assert rec.fits == 80
    assert len(rec.weights) == 80
    assert [w[0] for w in rec.weights] == list(range(1, 81))
    for _, a, b, c, _ in rec.weights:
        assert abs(a + b + c - 1) <= 1e-12
    trees = [e[1] for e in rec.evals]
    assert len(set(trees)) == len(trees)
    assert all(n <= 100 for n in rec.ei_calls)


def test_smbo_inner_search_never_evaluates_upper(monkeypatch):
    obj = UpperObjective(SQR)
    in_inner = []
    orig_max = search._maximise_ei
    orig_call = UpperObjective.__call__

    def guarded_max(*a, **kw):
        in_inner.append(True)
        try:
            return orig_max(*a, **kw)
        finally:
            in_inner.pop()

    def guarded_call(self, tree):
        assert not in_inner, "upper-level evaluation inside surrogate search"
        return orig_call(self, tree)

    monkeypatch.setattr(search, "_maximise_ei", guarded_max)
    monkeypatch.setattr(UpperObjective, "__call__", guarded_call)
    smbo(obj, small_budget(25), FAST, np.random.default_rng(1))
    assert obj.calls == 25


def test_smbo_ei_budget_includes_initial_population():
    rec = smbo(SQR, small_budget(23), FAST, np.random.default_rng(2))
    assert rec.ei_calls == [150, 150, 150]


def test_smbo_reproducible():
    a = smbo(SQR, small_budget(26), FAST, np.random.default_rng(9))
    b = smbo(SQR, small_budget(26), FAST, np.random.default_rng(9))
    assert a.evals == b.evals and a.weights == b.weights


def test_smbo_fit_failure_falls_back_to_random(monkeypatch):
    def broken(*a, **kw):
        raise ModelFitError("forced")

    monkeypatch.setattr(search, "fit_distances", broken)
    obj = UpperObjective(SQR)
    rec = smbo(obj, small_budget(24), FAST, np.random.default_rng(0))
    assert obj.calls == 24
    assert [w[4] for w in rec.weights] == ["fit-failed"] * 4
    for w in rec.weights:
        assert w[1:4] == pytest.approx((1 / 3, 1 / 3, 1 / 3))


@pytest.mark.parametrize("which", ["phd", "ted", "shd2"])
def test_single_distance_weights(which):
    obj = UpperObjective(SQR)
    rec = single_distance_smbo(obj, which, small_budget(24), np.random.default_rng(4),
                               mle_evals=40, inner=EAParams(20, 5))
    assert rec.strategy == f"smbo-{which}"
    assert obj.calls == 24
    pos = {"phd": 1, "ted": 2, "shd2": 3}[which]
    for w in rec.weights:
        assert w[pos] == 1.0
        assert sum(w[1:4]) == 1.0


def test_single_distance_rejects_unknown():
    with pytest.raises(ValueError):
        single_distance_smbo(SQR, "euclid", small_budget(), np.random.default_rng(0))


def test_record_csv(tmp_path):
    rec = smbo(SQR, small_budget(22), FAST, np.random.default_rng(0))
    rec.write_csv(tmp_path / "e.csv")
    rec.write_weights_csv(tmp_path / "w.csv")
    with open(tmp_path / "e.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["eval_idx", "strategy", "tree_sexpr", "F", "best_so_far"]
    assert len(rows) == 22
    assert rows[3]["tree_sexpr"] == format_sexpr(rec.evals[3][1])
    with open(tmp_path / "w.csv") as fh:
        w = list(csv.DictReader(fh))
    assert list(w[0])[:4] == ["iter_idx", "w_phd", "w_ted", "w_shd2"]
    assert len(w) == 2
