"""Acquisition tests: entropy, committee utility, selection, throttling."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from greenloop.acquisition import (Ensemble, QueryBudget, ThrottleContext, ThrottleParams,
                                   entropy, query_count, score_pool, select_top_b, throttle,
                                   utility)
from greenloop.errors import RejectedInputError
from greenloop.learner import Architecture, ModelState, init_model
from greenloop.samples import UnlabeledSample


def bias_model(probs):
    """Logistic model with zero weights and biases log(p): predicts p everywhere."""
    probs = np.asarray(probs, dtype=float)
    c = probs.shape[0]
    weights = np.concatenate([np.zeros(c), np.log(probs)])
    return ModelState(version=0, weights=weights, architecture=Architecture.LOGISTIC,
                      d_in=1, n_classes=c)


def pool_of(n, d=1):
    return [UnlabeledSample(sample_id=i, features=np.full(d, float(i))) for i in range(n)]


# -- entropy ------------------------------------------------------------------

def test_entropy_deterministic_distribution_is_zero():
    assert entropy([1.0, 0.0]) == 0.0


def test_entropy_uniform_two_classes():
    assert entropy([0.5, 0.5]) == pytest.approx(math.log(2.0), abs=1e-12)


def test_entropy_hand_case():
    expected = -(0.7 * math.log(0.7) + 0.2 * math.log(0.2) + 0.1 * math.log(0.1))
    assert entropy([0.7, 0.2, 0.1]) == pytest.approx(expected, abs=1e-12)


def test_entropy_rejects_invalid_distributions():
    with pytest.raises(RejectedInputError):
        entropy([0.7, 0.2])
    with pytest.raises(RejectedInputError):
        entropy([1.2, -0.2])


def test_entropy_bounds_property():
    rng = np.random.default_rng(0)
    for _ in range(300):
        c = int(rng.integers(2, 7))
        p = rng.dirichlet(np.ones(c) * rng.uniform(0.2, 4.0))
        h = entropy(p)
        assert -1e-12 <= h <= math.log(c) + 1e-9


# -- utility ------------------------------------------------------------------

def test_identical_members_have_zero_disagreement():
    member = bias_model([0.3, 0.7])
    ens = Ensemble(members=(member, member, member))
    score = utility(ens, np.zeros(1), beta=1.0)
    assert score.variance_term == pytest.approx(0.0, abs=1e-15)
    assert score.info_gain == pytest.approx(0.0, abs=1e-12)
    expected_h = -(0.3 * math.log(0.3) + 0.7 * math.log(0.7))
    assert score.utility == pytest.approx(expected_h, rel=1e-9)


def test_beta_zero_utility_is_pure_entropy():
    ens = Ensemble(members=(bias_model([0.3, 0.7]), bias_model([0.6, 0.4])))
    score = utility(ens, np.zeros(1), beta=0.0)
    assert score.utility == score.entropy_term


def test_two_member_hand_case():
    # members predict (0.9, 0.1) and (0.1, 0.9); mean is uniform.
    # population variance per class = ((0.9-0.5)^2 + (0.1-0.5)^2)/2 = 0.16,
    # summed over 2 classes = 0.32; utility = ln 2 + 0.32;
    # info gain = ln 2 - H(0.9, 0.1).
    ens = Ensemble(members=(bias_model([0.9, 0.1]), bias_model([0.1, 0.9])))
    score = utility(ens, np.zeros(1), beta=1.0)
    h_member = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
    assert score.entropy_term == pytest.approx(math.log(2.0), rel=1e-9)
    assert score.variance_term == pytest.approx(0.32, rel=1e-9)
    assert score.utility == pytest.approx(math.log(2.0) + 0.32, rel=1e-9)
    assert score.info_gain == pytest.approx(math.log(2.0) - h_member, rel=1e-9)


def test_variance_needs_two_members():
    ens = Ensemble(members=(bias_model([0.5, 0.5]),))
    with pytest.raises(RejectedInputError):
        utility(ens, np.zeros(1), beta=1.0)
    # beta = 0 with a single member is allowed
    assert utility(ens, np.zeros(1), beta=0.0).utility == pytest.approx(math.log(2.0), rel=1e-9)


def test_ensemble_members_must_agree_on_shape():
    with pytest.raises(RejectedInputError):
        Ensemble(members=(bias_model([0.5, 0.5]), bias_model([0.3, 0.3, 0.4])))


def test_info_gain_nonnegative_property():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        k = int(rng.integers(2, 6))
        c = int(rng.integers(2, 5))
        P = rng.dirichlet(np.ones(c), size=k)   # K member predictive rows
        mean = P.mean(axis=0)
        info = entropy(mean) - float(np.mean([entropy(row) for row in P]))
        assert info >= -1e-12


def test_utility_monotone_in_beta():
    rng = np.random.default_rng(3)
    members = tuple(init_model(Architecture.LOGISTIC, 2, 3, seed=i) for i in range(4))
    ens = Ensemble(members=members)
    for _ in range(50):
        x = rng.normal(size=2)
        betas = sorted(rng.uniform(0, 5, size=4))
        values = [utility(ens, x, beta=b).utility for b in betas]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


# -- selection ----------------------------------------------------------------

def brute_force_top(scores, size):
    """Oracle: the subset of ``size`` maximizing summed utility."""
    best_ids, best_total = [], -math.inf
    for combo in itertools.combinations(scores, size):
        total = sum(s.utility for s in combo)
        ids = sorted(s.sample_id for s in combo)
        if total > best_total + 1e-12 or (abs(total - best_total) <= 1e-12 and ids < best_ids):
            best_ids, best_total = ids, total
    return best_ids


def diverse_ensemble(seed=0, k=3, d=2, c=2):
    return Ensemble(members=tuple(init_model(Architecture.LOGISTIC, d, c, seed=seed * 100 + i)
                                  for i in range(k)))


def test_select_with_exhausted_budget_is_empty():
    ens = diverse_ensemble()
    budget = QueryBudget(b=3, spent=3)
    assert select_top_b(pool_of(5, d=2), ens, budget, beta=1.0) == []


def test_select_single_sample_pool():
    ens = diverse_ensemble()
    budget = QueryBudget(b=3, spent=0)
    assert select_top_b(pool_of(1, d=2), ens, budget, beta=1.0) == [0]


def test_select_matches_exhaustive_subset_oracle():
    rng = np.random.default_rng(11)
    for trial in range(30):
        n = int(rng.integers(2, 13))
        size = int(rng.integers(1, min(4, n) + 1))
        ens = diverse_ensemble(seed=trial)
        pool = [UnlabeledSample(sample_id=i, features=rng.normal(size=2, scale=3))
                for i in range(n)]
        scores = score_pool(ens, pool, beta=1.0)
        budget = QueryBudget(b=size, spent=0)
        picked = select_top_b(pool, ens, budget, beta=1.0)
        assert sorted(picked) == brute_force_top(scores, size)


def test_select_breaks_ties_by_lowest_sample_id():
    ens = diverse_ensemble()
    # identical feature vectors give identical utilities
    pool = [UnlabeledSample(sample_id=i, features=np.array([1.0, -1.0])) for i in range(6)]
    budget = QueryBudget(b=3, spent=0)
    assert select_top_b(pool, ens, budget, beta=1.0) == [0, 1, 2]


def test_select_respects_exclusions_and_limit():
    ens = diverse_ensemble()
    pool = pool_of(8, d=2)
    budget = QueryBudget(b=8, spent=0)
    picked = select_top_b(pool, ens, budget, beta=1.0, limit=2, exclude={0, 1})
    assert len(picked) == 2
    assert not {0, 1} & set(picked)


def test_query_count_floor_but_at_least_one():
    assert query_count(QueryBudget(b=10, spent=0, throttle_factor=0.05), pool_size=100) == 1
    assert query_count(QueryBudget(b=10, spent=0, throttle_factor=0.55), pool_size=100) == 5
    assert query_count(QueryBudget(b=10, spent=0, throttle_factor=1.0), pool_size=3) == 3
    assert query_count(QueryBudget(b=10, spent=10), pool_size=100) == 0
    assert query_count(QueryBudget(b=10, spent=0), pool_size=0) == 0


def test_budget_charge_never_exceeds_b():
    rng = np.random.default_rng(5)
    for _ in range(200):
        b = int(rng.integers(0, 20))
        budget = QueryBudget(b=b, spent=0)
        for _ in range(30):
            n = int(rng.integers(0, 4))
            if budget.spent + n > b:
                with pytest.raises(RejectedInputError):
                    budget.charge(n)
            else:
                budget = budget.charge(n)
            assert budget.spent <= budget.b


# -- throttle -----------------------------------------------------------------

def test_throttle_all_multipliers_unity():
    budget = QueryBudget(b=5, spent=0)
    out = throttle(budget, ThrottleContext(human_available=True, urgency=1.0,
                                           carbon_pressure=0.0), base=1.0)
    assert out.throttle_factor == pytest.approx(1.0, abs=1e-15)


def test_throttle_human_unavailable():
    budget = QueryBudget(b=5, spent=0)
    out = throttle(budget, ThrottleContext(human_available=False, urgency=1.0,
                                           carbon_pressure=0.0), base=1.0)
    assert out.throttle_factor == pytest.approx(1.0 * 0.25 * 1.0 * 1.0, abs=1e-15)


def test_throttle_full_carbon_pressure():
    budget = QueryBudget(b=5, spent=0)
    out = throttle(budget, ThrottleContext(human_available=True, urgency=1.0,
                                           carbon_pressure=1.0), base=1.0)
    assert out.throttle_factor == pytest.approx(0.5, abs=1e-15)


def test_throttle_clamps_to_floor():
    budget = QueryBudget(b=5, spent=0)
    out = throttle(budget, ThrottleContext(human_available=False, urgency=0.0,
                                           carbon_pressure=1.0), base=0.1)
    assert out.throttle_factor == ThrottleParams().min_factor


def test_throttle_is_deterministic_and_preserves_counters():
    budget = QueryBudget(b=7, spent=3)
    ctx = ThrottleContext(human_available=False, urgency=0.4, carbon_pressure=0.6)
    a = throttle(budget, ctx, base=0.8)
    b = throttle(budget, ctx, base=0.8)
    assert a == b
    assert a.b == 7 and a.spent == 3
