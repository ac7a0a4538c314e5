"""Integer recovery from a relaxed solution: round the loads to the closest
feasible integer vector, then assign users to the resulting VM slots
optimally."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lap import hungarian
from .model import Assignment, Instance, SolveReport, evaluate
from .relaxed import FractionalSolution


def round_loads(y, vm_cap, n_users: int, tol: float = 1e-9) -> np.ndarray:
    """Closest integer load vector that sums to ``n_users`` and respects the caps.

    Floors every entry, then raises the ``s = K - sum(floor)`` entries with
    the largest fractional parts (ties to the lowest index). Entries within
    ``tol`` of an integer are snapped first so round-off cannot flip them.
    """
    y = np.asarray(y, dtype=float)
    cap = np.broadcast_to(np.asarray(vm_cap, dtype=int), y.shape)
    near = np.abs(y - np.round(y)) <= tol
    y = np.where(near, np.round(y), y)
    base = np.minimum(np.floor(y), cap).astype(int)
    frac = y - base
    s = n_users - int(base.sum())
    if s < 0 or s > int((base < cap).sum()):
        raise ValueError(f"loads {y} cannot be rounded to sum {n_users} within caps {cap}")
    eligible = np.flatnonzero(base < cap)
    order = eligible[np.argsort(-frac[eligible], kind="stable")]
    out = base.copy()
    out[order[:s]] += 1
    return out


@dataclass(frozen=True, eq=False)
class LapProblem:
    """Square utility matrix with one column per VM slot; ``slot_bs[j]`` owns slot j."""

    utility: np.ndarray
    slot_bs: np.ndarray


def slot_utilities(instance: Instance, loads) -> np.ndarray:
    """K x N utility of placing each user on each BS when BS n hosts ``loads[n]`` users."""
    loads = np.asarray(loads)
    R = instance.offloading_rates(np.maximum(loads, 1))
    return instance.rate_weight[:, None] * R - instance.weighted_cost


def lap_utilities(instance: Instance, loads) -> LapProblem:
    """Replicate BS n's utility column ``loads[n]`` times (empty BSs vanish)."""
    loads = np.asarray(loads, dtype=int)
    if loads.sum() != instance.n_users:
        raise ValueError("loads must sum to the number of users")
    slot_bs = np.repeat(np.arange(instance.n_bs), loads)
    return LapProblem(slot_utilities(instance, loads)[:, slot_bs], slot_bs)


def assign_fixed_loads(instance: Instance, loads) -> Assignment:
    """Best assignment that puts exactly ``loads[n]`` users on each BS n."""
    lap = lap_utilities(instance, loads)
    perm = hungarian(lap.utility)
    return Assignment(lap.slot_bs[perm], instance.n_bs)


def report_for(instance: Instance, assignment: Assignment, upper_bound=None, **extra) -> SolveReport:
    obj = evaluate(instance, assignment)
    migrated = 100.0 * float(assignment.migrated(instance.initial).mean())
    return SolveReport(utility=obj.utility, sum_rate=obj.sum_rate, total_cost=obj.total_cost,
                       upper_bound=upper_bound, migrated_pct=migrated, **extra)


def recover_integer(instance: Instance, fractional: FractionalSolution):
    """Round the relaxed loads and solve the fixed-load assignment exactly."""
    loads = round_loads(fractional.y, instance.vm_cap, instance.n_users)
    assignment = assign_fixed_loads(instance, loads)
    report = report_for(instance, assignment, fractional.upper_bound,
                        outer_iterations=fractional.outer_iterations,
                        inner_iterations=fractional.inner_iterations,
                        residual=fractional.residual, converged=fractional.converged,
                        loads_match=bool((assignment.loads == loads).all()),
                        notes=list(fractional.notes))
    return assignment, report
