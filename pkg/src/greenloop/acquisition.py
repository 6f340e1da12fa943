"""Uncertainty scoring and budgeted query selection.

Utility per sample is Shannon entropy of the committee-mean prediction
plus beta times the summed per-class population variance across committee
members. The mutual-information variant (entropy of the mean minus mean
member entropy) rides along as ``info_gain``. Selection is greedy top-b:
utility is pointwise, so the greedy set maximizes the summed utility over
all subsets of that size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace
from typing import Iterable, Sequence

import numpy as np

from .errors import RejectedInputError
from .learner import ModelState, predict_proba_batch
from .samples import UnlabeledSample

PROB_SUM_TOL = 1e-6


@dataclass(frozen=True)
class Ensemble:
    """Committee of models trained from distinct seeds (or bootstraps).

    Approximates a posterior over weights at desk scale. Two or more
    members are required whenever the disagreement (variance) term is
    used; a single member is fine for pure-entropy scoring.
    """

    members: tuple[ModelState, ...]

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise RejectedInputError("ensemble needs at least one member")
        d, c = members[0].d_in, members[0].n_classes
        if any(m.d_in != d or m.n_classes != c for m in members):
            raise RejectedInputError("ensemble members must share d_in and n_classes")
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def d_in(self) -> int:
        return self.members[0].d_in

    @property
    def n_classes(self) -> int:
        return self.members[0].n_classes

    def member_probs(self, X: np.ndarray) -> np.ndarray:
        """[K x n x n_classes] member predictive distributions."""
        return np.stack([predict_proba_batch(m, X) for m in self.members])

    def mean_proba(self, X: np.ndarray) -> np.ndarray:
        return self.member_probs(X).mean(axis=0)


@dataclass(frozen=True)
class AcquisitionScore:
    sample_id: int
    entropy_term: float
    variance_term: float
    beta: float
    utility: float
    info_gain: float


@dataclass(frozen=True)
class QueryBudget:
    """Per-task label allowance with a throttled query rate."""

    b: int
    spent: int = 0
    throttle_factor: float = 1.0

    def __post_init__(self):
        if self.b < 0 or self.spent < 0:
            raise RejectedInputError("budget counters must be nonnegative")
        if self.spent > self.b:
            raise RejectedInputError("spent exceeds budget")
        if not (0.0 < self.throttle_factor <= 1.0):
            raise RejectedInputError("throttle_factor must be in (0, 1]")

    @property
    def remaining(self) -> int:
        return self.b - self.spent

    def charge(self, n: int) -> "QueryBudget":
        if n < 0 or self.spent + n > self.b:
            raise RejectedInputError(f"charging {n} labels would exceed budget {self.b}")
        return dc_replace(self, spent=self.spent + n)


@dataclass(frozen=True)
class ThrottleContext:
    human_available: bool
    urgency: float
    carbon_pressure: float

    def __post_init__(self):
        if not (0.0 <= self.urgency <= 1.0 and 0.0 <= self.carbon_pressure <= 1.0):
            raise RejectedInputError("urgency and carbon_pressure must be in [0, 1]")


@dataclass(frozen=True)
class ThrottleParams:
    """Coefficients of the query-rate formula; override via config."""

    unavailable_factor: float = 0.25
    urgency_floor: float = 0.5
    carbon_weight: float = 0.5
    min_factor: float = 0.05
    max_factor: float = 1.0


def entropy(p: Sequence[float] | np.ndarray) -> float:
    """Shannon entropy in nats, with 0*ln(0) taken as 0."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise RejectedInputError("probability vector must be 1-D and non-empty")
    if np.any(arr < 0):
        raise RejectedInputError("probabilities must be nonnegative")
    if abs(float(arr.sum()) - 1.0) > PROB_SUM_TOL:
        raise RejectedInputError(f"probabilities sum to {arr.sum():.8f}, not 1")
    nz = arr[arr > 0]
    return float(-(nz * np.log(nz)).sum())


def _entropy_rows(P: np.ndarray) -> np.ndarray:
    logs = np.where(P > 0, np.log(np.where(P > 0, P, 1.0)), 0.0)
    return -(P * logs).sum(axis=-1)


def utility(ensemble: Ensemble, x: np.ndarray, beta: float,
            sample_id: int = -1) -> AcquisitionScore:
    """Score one input: entropy + beta * summed per-class variance."""
    if beta < 0:
        raise RejectedInputError("beta must be >= 0")
    if beta > 0 and len(ensemble) < 2:
        raise RejectedInputError("variance term needs an ensemble of K >= 2")
    x = np.asarray(x, dtype=np.float64)
    return score_pool_features(ensemble, x[None, :], beta, [sample_id])[0]


def score_pool_features(ensemble: Ensemble, X: np.ndarray, beta: float,
                        sample_ids: Sequence[int]) -> list[AcquisitionScore]:
    """Vectorized scoring of a feature matrix (one forward pass per member)."""
    P = ensemble.member_probs(X)            # K x n x C
    mean = P.mean(axis=0)                   # n x C
    ent = _entropy_rows(mean)               # n
    var = P.var(axis=0, ddof=0).sum(axis=-1)  # population variance summed over classes
    member_ent = _entropy_rows(P).mean(axis=0)
    info = ent - member_ent
    return [
        AcquisitionScore(
            sample_id=int(sid),
            entropy_term=float(ent[i]),
            variance_term=float(var[i]),
            beta=beta,
            utility=float(ent[i] + beta * var[i]),
            info_gain=float(info[i]),
        )
        for i, sid in enumerate(sample_ids)
    ]


def score_pool(ensemble: Ensemble, pool: Sequence[UnlabeledSample],
               beta: float) -> list[AcquisitionScore]:
    if beta < 0:
        raise RejectedInputError("beta must be >= 0")
    if beta > 0 and len(ensemble) < 2:
        raise RejectedInputError("variance term needs an ensemble of K >= 2")
    if not pool:
        return []
    X = np.stack([s.features for s in pool])
    return score_pool_features(ensemble, X, beta, [s.sample_id for s in pool])


def query_count(budget: QueryBudget, pool_size: int, limit: int | None = None) -> int:
    """How many queries the throttled budget allows right now.

    floor(remaining * throttle), but never 0 while budget and pool both
    remain, and never more than the pool, the remaining budget, or the
    optional caller cap.
    """
    if pool_size <= 0 or budget.remaining <= 0:
        return 0
    count = int(math.floor(budget.remaining * budget.throttle_factor))
    count = max(count, 1)
    count = min(count, budget.remaining, pool_size)
    if limit is not None:
        count = min(count, limit)
    return count


def select_top_b(pool: Sequence[UnlabeledSample], ensemble: Ensemble,
                 budget: QueryBudget, beta: float, *,
                 use_info_gain: bool = False,
                 limit: int | None = None,
                 exclude: Iterable[int] = ()) -> list[int]:
    """Greedy top-b sample ids by utility, ties broken by lowest id.

    ``limit`` optionally caps one round below the throttled allowance;
    ``exclude`` drops ids (answered or declined) from consideration.
    """
    excluded = set(exclude)
    candidates = [s for s in pool if s.sample_id not in excluded]
    count = query_count(budget, len(candidates), limit)
    if count == 0:
        return []
    scores = score_pool(ensemble, candidates, beta)
    key = (lambda s: (-s.info_gain, s.sample_id)) if use_info_gain \
        else (lambda s: (-s.utility, s.sample_id))
    ranked = sorted(scores, key=key)
    return [s.sample_id for s in ranked[:count]]


def throttle(budget: QueryBudget, context: ThrottleContext, base: float = 1.0,
             params: ThrottleParams = ThrottleParams()) -> QueryBudget:
    """Recompute the query rate from human availability, urgency, and grid state."""
    factor = base
    factor *= 1.0 if context.human_available else params.unavailable_factor
    factor *= params.urgency_floor + (1.0 - params.urgency_floor) * context.urgency
    factor *= 1.0 - params.carbon_weight * context.carbon_pressure
    factor = min(max(factor, params.min_factor), params.max_factor)
    return dc_replace(budget, throttle_factor=factor)
