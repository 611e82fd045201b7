import math

import numpy as np
import pytest

from spo2cam.errors import BadBudget, ObjectiveFailed
from spo2cam.hyperband import SearchSpace, plan, run, survivors

CANONICAL_81_3 = [
    [(81, 1), (27, 3), (9, 9), (3, 27), (1, 81)],
    [(34, 3), (11, 9), (3, 27), (1, 81)],
    [(15, 9), (5, 27), (1, 81)],
    [(8, 27), (2, 81)],
    [(5, 81)],
]


def analytic_budget(R, eta):
    s_max = int(round(math.log(R, eta)))
    total = 0
    for s in range(s_max, -1, -1):
        n = math.ceil((s_max + 1) * eta**s / (s + 1))
        for i in range(s + 1):
            total += (n // eta**i) * R * eta ** (i - s)
    return total


def test_canonical_table():
    p = plan(81, 3)
    assert p.table() == CANONICAL_81_3
    assert p.s_max == 4


def test_budget_matches_analytic_total():
    assert plan(81, 3).budget == analytic_budget(81, 3) == 1902
    assert plan(27, 3).budget == analytic_budget(27, 3)


def test_run_charges_exactly_the_plan():
    p = plan(27, 3)
    calls = []

    def objective(cfg, epochs):
        calls.append(epochs)
        return (np.log10(cfg["lr"]) + 3) ** 2 + 1 / epochs

    res = run(SearchSpace(), p, objective, seed=0)
    assert res.epochs_used == sum(calls) == p.budget
    assert len(res.log) == sum(r.n for b in p.brackets for r in b.rungs)
    best = min(res.log, key=lambda r: (r.val_rmse, r.config_id))
    assert res.best_config_id == best.config_id and res.best_val_rmse == best.val_rmse


def test_run_is_deterministic():
    p = plan(9, 3)
    obj = lambda cfg, e: cfg["lr"] * 100 + cfg["dropout"] / e  # noqa: E731
    a, b = run(SearchSpace(), p, obj, seed=4), run(SearchSpace(), p, obj, seed=4)
    assert a.configs == b.configs and a.best_config == b.best_config


def test_survivors_tie_break_by_id():
    assert survivors([5, 2, 9, 1, 7, 3], [1.0, 1.0, 0.5, 2.0, 1.0, np.inf], 3) == [9, 2]


def test_objective_failure_carries_config():
    def bad(cfg, epochs):
        raise RuntimeError("boom")

    with pytest.raises(ObjectiveFailed) as info:
        run(SearchSpace(), plan(9, 3), bad)
    assert "lr" in info.value.config


def test_bad_budgets():
    for R, eta in ((81, 1), (2, 3), (81.0, 3)):
        with pytest.raises(BadBudget):
            plan(R, eta)


def test_search_space_sampling_and_round_trip():
    space = SearchSpace(choices={"filters": [[4, 4], [8, 8]], "batchnorm": [False, True]})
    rng = np.random.default_rng(0)
    lrs = [space.sample(rng)["lr"] for _ in range(2000)]
    assert 1e-4 <= min(lrs) and max(lrs) <= 1e-2
    # log-uniform: about half the draws below the geometric midpoint
    assert abs(np.mean(np.array(lrs) < 1e-3) - 0.5) < 0.05
    assert SearchSpace.from_dict(space.to_dict()).to_dict() == space.to_dict()
    with pytest.raises(ValueError):
        SearchSpace(lr=(0.0, 1.0))
