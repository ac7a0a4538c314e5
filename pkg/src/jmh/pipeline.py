"""End-to-end solve: relaxed optimum from several starts, rounding plus
exact fixed-load assignment, then an optional load-move local search."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .model import Assignment, Instance, evaluate
from .recovery import assign_fixed_loads, recover_integer, report_for
from .relaxed import SolverConfig, relaxed_runs


def relaxed_starts(instance: Instance) -> list:
    """Extra starting assignments: the uniform fractional split and each
    user's best BS at unit load."""
    K, N = instance.rate.shape
    unit = instance.rate_weight[:, None] * instance.offloading_rates(np.ones(N)) - instance.weighted_cost
    return [np.full((K, N), 1.0 / N), np.eye(N)[np.argmax(unit, axis=1)]]


def improve_loads(instance: Instance, assignment: Assignment, max_rounds: int = 50) -> Assignment:
    """Steepest-ascent search over integer load vectors.

    A move shifts one VM slot from BS a to BS b; each neighbouring load
    vector is scored by its exact fixed-load assignment. Stops at a local
    optimum or after ``max_rounds`` moves.
    """
    best = assignment
    best_value = evaluate(instance, best).utility
    for _ in range(max_rounds):
        loads = best.loads
        improved = None
        for a in np.flatnonzero(loads > 0):
            for b in np.flatnonzero(loads < instance.vm_cap):
                if a == b:
                    continue
                trial = loads.copy()
                trial[a] -= 1
                trial[b] += 1
                cand = assign_fixed_loads(instance, trial)
                value = evaluate(instance, cand).utility
                if value > best_value + 1e-12 * abs(best_value) and (improved is None or value > improved[0]):
                    improved = (value, cand)
        if improved is None:
            break
        best_value, best = improved
    return best


def solve_jmh(instance: Instance, config: SolverConfig = SolverConfig(), polish: bool = True):
    """Solve the migration problem end to end.

    Returns ``(assignment, report, fractional)``. With ``config.restarts``
    the relaxed problem is solved from extra starts and every run is rounded
    and assigned; the best integer result is kept. ``polish`` then applies
    :func:`improve_loads`. The reported upper bound is the best relaxed value
    found, raised to the integer utility if a run fell short of it.
    """
    starts = relaxed_starts(instance) if config.restarts else []
    runs = relaxed_runs(instance, config, starts)
    best = None
    for frac in runs:
        assignment, report = recover_integer(instance, frac)
        if best is None or report.utility > best[1].utility + 1e-12 * abs(report.utility):
            best = (assignment, report, frac)
    assignment, report, frac = best
    primary = max(runs, key=lambda f: f.upper_bound)
    notes = list(report.notes)
    if polish:
        polished = improve_loads(instance, assignment)
        if (polished.bs != assignment.bs).any():
            notes.append(f"load search improved the rounded loads {assignment.loads.tolist()} "
                         f"to {polished.loads.tolist()}")
            assignment = polished
    final = report_for(instance, assignment)
    bound = max(primary.upper_bound, final.utility)
    report = replace(report, utility=final.utility, sum_rate=final.sum_rate, total_cost=final.total_cost,
                     migrated_pct=final.migrated_pct, upper_bound=bound,
                     outer_iterations=sum(f.outer_iterations for f in runs),
                     inner_iterations=sum(f.inner_iterations for f in runs),
                     residual=primary.residual, converged=primary.converged, notes=notes)
    return assignment, report, primary
