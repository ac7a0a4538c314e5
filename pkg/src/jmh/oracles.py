"""Brute-force optima for small instances and the two comparison schemes."""
from __future__ import annotations

from itertools import product
from math import comb

import numpy as np

from .bandwidth import BandwidthInstance, RbAllocation
from .hotspot import HotspotInstance
from .model import Assignment, Instance, evaluate
from .scenario import assign_by_preference

MAX_ASSIGNMENTS = 10**8
MAX_COMPOSITIONS = 10**7
_CHUNK = 1 << 16


def _assignment_values(instance: Instance, bs: np.ndarray) -> np.ndarray:
    """Utility of each row of ``bs`` (C x K BS indices); -inf where a cap is broken."""
    K, N = instance.rate.shape
    users = np.arange(K)
    loads = np.zeros((bs.shape[0], N), dtype=int)
    for n in range(N):
        loads[:, n] = (bs == n).sum(axis=1)
    load_of_user = np.take_along_axis(loads, bs, axis=1)
    d = instance.degradation[bs]
    with np.errstate(divide="ignore"):
        inv_r = 1.0 / instance.rate[users, bs]
    delay = inv_r + (1.0 + d) ** (load_of_user - 1) / instance.isolation_rate[users, bs]
    util = (instance.rate_weight / delay - instance.weighted_cost[users, bs]).sum(axis=1)
    return np.where((loads <= instance.vm_cap).all(axis=1), util, -np.inf)


class EnumerationLimit(ValueError):
    """The instance is too large to enumerate."""


def exhaustive_assignment(instance: Instance, limit: int = MAX_ASSIGNMENTS):
    """Best binary assignment by enumerating all N^K candidates.

    Candidates are visited in lexicographic order of the per-user BS index
    vector and the first maximiser wins. Raises ``ValueError`` when N^K
    exceeds ``limit`` (as :class:`EnumerationLimit`).
    """
    K, N = instance.rate.shape
    total = N ** K
    if total > limit:
        raise EnumerationLimit(f"{N}^{K} assignments exceed the enumeration limit {limit}; use the relaxed solver")
    powers = N ** np.arange(K - 1, -1, -1)
    best_value, best_bs = -np.inf, None
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        bs = (idx[:, None] // powers[None, :]) % N
        vals = _assignment_values(instance, bs)
        i = int(np.argmax(vals))
        if vals[i] > best_value:
            best_value, best_bs = float(vals[i]), bs[i]
    assignment = Assignment(best_bs, N)
    return assignment, evaluate(instance, assignment).utility


def _best_band(omega, eta, F, budget: float) -> np.ndarray:
    """Maximise ``sum omega/(1/(b eta) + 1/F)`` over ``sum b = budget``.

    Stationarity gives ``omega eta F^2 / (F + b eta)^2 = nu``; the common
    marginal ``nu`` is bisected in log space until the band is used up.
    """
    def demand(nu):
        return np.maximum(F / eta * (np.sqrt(omega * eta / nu) - 1.0), 0.0)

    lo, hi = np.log(1e-300), np.log(float((omega * eta).max()))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if demand(np.exp(mid)).sum() > budget:
            lo = mid
        else:
            hi = mid
    b = demand(np.exp(hi))
    return b * budget / b.sum() if b.sum() > 0 else b


def exhaustive_bandwidth(instance: BandwidthInstance, limit: int = 10**5):
    """Best assignment and bandwidth split: every cap-feasible assignment with
    its optimal per-BS split. Returns ``(assignment, allocation, utility)``."""
    K, N = instance.efficiency.shape
    if N ** K > limit:
        raise EnumerationLimit(f"{N}^{K} assignments exceed the enumeration limit {limit}")
    users = np.arange(K)
    best = (-np.inf, None, None)
    for bs in product(range(N), repeat=K):
        bs = np.array(bs)
        loads = np.bincount(bs, minlength=N)
        if (loads > instance.vm_cap).any():
            continue
        F = instance.isolation_rate[users, bs] / (1.0 + instance.degradation[bs]) ** (loads[bs] - 1.0)
        eta = instance.efficiency[users, bs]
        omega = instance.rate_weight
        b = np.zeros(K)
        for n in np.unique(bs):
            on = bs == n
            b[on] = _best_band(omega[on], eta[on], F[on], instance.rb_budget[n])
        rate = b * eta
        with np.errstate(divide="ignore"):
            value = np.where(rate > 0, omega / (1.0 / np.where(rate > 0, rate, 1.0) + 1.0 / F), 0.0)
        total = float((value - instance.weighted_cost[users, bs]).sum())
        if total > best[0]:
            full = np.zeros((K, N))
            full[users, bs] = b
            best = (total, Assignment(bs, N), RbAllocation(full))
    return best[1], best[2], best[0]


def exhaustive_loads(instance: HotspotInstance, limit: int = MAX_COMPOSITIONS):
    """Best hotspot load vector by enumerating every capped composition of K.

    Ties go to the first maximiser in lexicographic order of the helper loads.
    """
    K, N = instance.n_users, instance.n_bs
    if comb(K + N - 1, N - 1) > limit:
        raise EnumerationLimit(f"more than {limit} load vectors to enumerate")
    caps = instance.vm_cap
    grids = [np.arange(min(K, caps[n]) + 1) for n in range(1, N)]
    combos = list(product(*grids))
    rest = np.array(combos, dtype=int).reshape(len(combos), N - 1)
    rest = rest[rest.sum(axis=1) <= K]
    loads = np.column_stack([K - rest.sum(axis=1), rest])
    loads = loads[loads[:, 0] <= caps[0]]
    values = instance.bs_utility(loads).sum(axis=1)
    i = int(np.argmax(values))
    return loads[i], float(values[i])


def baseline_no_migration(instance: Instance):
    """Every user keeps its current BS."""
    assignment = Assignment(instance.initial, instance.n_bs)
    return assignment, evaluate(instance, assignment).utility


def baseline_radio_oriented(instance: Instance):
    """Users chase the best uplink rate net of weighted migration cost.

    Over-full BSs keep their highest-metric users; the rest fall back to
    their next-best BS.
    """
    metric = instance.rate - instance.weighted_cost
    assignment = assign_by_preference(metric, instance.vm_cap)
    return assignment, evaluate(instance, assignment).utility
