"""Joint migration with orthogonal bandwidth allocation.

Each BS owns a private band of ``rb_budget[n]`` Hz that it splits among its
users, so user k's uplink rate on BS n is ``b[k, n] * efficiency[k, n]``.
The relaxed problem alternates the migration solver at fixed bandwidths
with a square-root bandwidth split; integer recovery prices bandwidth with
per-BS multipliers and solves one assignment problem per price.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lap import hungarian
from .model import Assignment, Instance
from .recovery import round_loads
from .relaxed import FractionalSolution, SolverConfig, solve_relaxed
from .scenario import Scenario, channel_gain


@dataclass(frozen=True, eq=False)
class BandwidthInstance:
    """Migration instance whose rates come from allocated bandwidth."""

    efficiency: np.ndarray
    rb_budget: np.ndarray
    isolation_rate: np.ndarray
    degradation: np.ndarray
    vm_cap: np.ndarray
    cost: np.ndarray
    cost_weight: float
    rate_weight: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        eta = np.array(self.efficiency, dtype=float)
        if eta.ndim != 2 or (eta <= 0).any():
            raise ValueError("spectral efficiencies must be a positive K x N matrix")
        budget = np.array(np.broadcast_to(np.asarray(self.rb_budget, dtype=float), (eta.shape[1],)))
        if (budget <= 0).any():
            raise ValueError("bandwidth budgets must be positive")
        base = self.with_bandwidth(np.ones_like(eta), eta)
        for name in ("isolation_rate", "degradation", "vm_cap", "cost", "rate_weight", "initial"):
            object.__setattr__(self, name, getattr(base, name))
        eta.setflags(write=False)
        budget.setflags(write=False)
        object.__setattr__(self, "efficiency", eta)
        object.__setattr__(self, "rb_budget", budget)
        object.__setattr__(self, "cost_weight", base.cost_weight)

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "BandwidthInstance":
        """Efficiency ``log2(1 + SNR)`` per Hz with the noise taken over each BS's
        share ``B / N`` of the total band; no inter-cell interference."""
        cfg = scenario.config
        share = cfg.bandwidth_hz / cfg.n_bs
        noise = 10.0 ** (cfg.noise_dbm_per_hz / 10) / 1000 * share
        eta = np.log2(1.0 + cfg.tx_power_w * channel_gain(scenario.geometry) / noise)
        inst = scenario.instance
        return cls(eta, share, inst.isolation_rate, inst.degradation, inst.vm_cap, inst.cost,
                   inst.cost_weight, inst.rate_weight, inst.initial)

    @property
    def n_users(self) -> int:
        return self.efficiency.shape[0]

    @property
    def n_bs(self) -> int:
        return self.efficiency.shape[1]

    @property
    def weighted_cost(self) -> np.ndarray:
        return self.cost_weight * self.cost

    def with_bandwidth(self, b, efficiency=None) -> Instance:
        """Migration instance with rates ``b * efficiency``."""
        eta = self.efficiency if efficiency is None else efficiency
        return Instance(rate=np.asarray(b, dtype=float) * eta, isolation_rate=self.isolation_rate,
                        degradation=self.degradation, vm_cap=self.vm_cap, cost=self.cost,
                        cost_weight=self.cost_weight, rate_weight=self.rate_weight, initial=self.initial)

    def effective_compute(self, loads) -> np.ndarray:
        """K x N degraded computation rates at the given loads."""
        return self.isolation_rate / (1.0 + self.degradation) ** (np.asarray(loads, dtype=float) - 1.0)

    def value(self, assignment: Assignment, b) -> float:
        """Utility of an integer assignment with bandwidths ``b``."""
        users = np.arange(self.n_users)
        return float(bandwidth_values(self, assignment, b)[users, assignment.bs].sum())


def bandwidth_values(instance: BandwidthInstance, assignment: Assignment, b) -> np.ndarray:
    """K x N weighted offloading rate minus weighted cost at the assignment's loads."""
    F = instance.effective_compute(np.maximum(assignment.loads, 1))
    rate = np.asarray(b, dtype=float) * instance.efficiency
    with np.errstate(divide="ignore"):
        R = np.where(rate > 0, 1.0 / (1.0 / np.where(rate > 0, rate, 1.0) + 1.0 / F), 0.0)
    return instance.rate_weight[:, None] * R - instance.weighted_cost


@dataclass(frozen=True, eq=False)
class RbAllocation:
    """Bandwidth per user and BS (Hz); only entries of hosted users count."""

    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        if (b < 0).any():
            raise ValueError("bandwidth must be non-negative")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    def used(self, assignment: Assignment) -> np.ndarray:
        return (self.b * assignment.matrix).sum(axis=0)

    def check(self, assignment: Assignment, budget, rtol: float = 1e-9) -> None:
        budget = np.asarray(budget, dtype=float)
        if (self.used(assignment) > budget * (1 + rtol)).any():
            raise ValueError("bandwidth budget exceeded")


def rb_split_closed_form(alpha, beta, eta, budget: float, weight=None) -> np.ndarray:
    """Square-root split of one BS's band: share proportional to ``sqrt(alpha*beta/eta)``.

    ``weight`` (default all ones) gives each user's occupancy, and the shares
    satisfy ``sum(weight * b) = budget``. All-zero terms fall back to a
    uniform split.
    """
    terms = np.sqrt(np.asarray(alpha, dtype=float) * np.asarray(beta, dtype=float) / np.asarray(eta, dtype=float))
    w = np.ones_like(terms) if weight is None else np.asarray(weight, dtype=float)
    total = float((w * terms).sum())
    if total <= 0:
        return np.full(terms.shape, budget / max(float(w.sum()), 1.0))
    return budget * terms / total


def b_star_of_nu(omega, nu, eta, isolation_rate, degradation, load):
    """Bandwidth maximising ``V(b) - nu*b`` with ``V(b) = omega / (1/(b eta) + 1/F)``.

    ``F`` is the degraded computation rate at ``load``. The maximiser is
    ``F * [sqrt(omega / (nu eta)) - 1/eta]^+``, zero once ``nu >= omega*eta``.
    """
    nu = np.asarray(nu, dtype=float)
    if (nu <= 0).any():
        raise ValueError("bandwidth price must be positive")
    eta = np.asarray(eta, dtype=float)
    F = np.asarray(isolation_rate, dtype=float) / (1.0 + np.asarray(degradation, dtype=float)) ** (
        np.asarray(load, dtype=float) - 1.0)
    return F * np.maximum(np.sqrt(np.asarray(omega, dtype=float) / (nu * eta)) - 1.0 / eta, 0.0)


def _member_values(omega, eta, F, b) -> np.ndarray:
    rate = b * eta
    with np.errstate(divide="ignore"):
        return np.where(rate > 0, omega / (1.0 / np.where(rate > 0, rate, 1.0) + 1.0 / F), 0.0)


def water_fill(omega, eta, F, budget: float, weight=None, tol: float = 1e-12) -> np.ndarray:
    """Optimal split of ``budget`` among users with values ``omega/(1/(b eta) + 1/F)``.

    With occupancies ``weight`` the band constraint is ``sum(weight * b) =
    budget`` and the objective is weighted alike; users with zero weight get
    the share they would take at the common marginal value. The marginal
    value is bisected geometrically, since it spans many decades.
    """
    omega, eta, F = (np.asarray(a, dtype=float) for a in (omega, eta, F))
    w = np.ones_like(omega) if weight is None else np.asarray(weight, dtype=float)
    if omega.size == 0:
        return omega.copy()
    hi = float((omega * eta).max())
    if hi <= 0 or w.sum() <= 0:
        return np.full(omega.shape, budget / max(float(w.sum()), 1.0))

    def response(nu):
        return F * np.maximum(np.sqrt(omega / (nu * eta)) - 1.0 / eta, 0.0)

    lo = hi
    while (w * response(lo)).sum() < budget:
        lo *= 1e-3
    for _ in range(300):
        mid = np.sqrt(lo * hi)
        if (w * response(mid)).sum() > budget:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1.0 <= tol:
            break
    b = response(hi)
    # the response at hi uses at most the budget; hand the sliver to active users
    used = float((w * b).sum())
    if used > 0:
        b *= budget / used
    else:
        b[int(np.argmax(w * omega * eta))] = budget / w[int(np.argmax(w * omega * eta))]
    return b


def optimal_bandwidth(instance: BandwidthInstance, assignment: Assignment) -> RbAllocation:
    """Best bandwidth split for a fixed assignment (water-filling per BS)."""
    F = instance.effective_compute(assignment.loads)
    b = np.zeros((instance.n_users, instance.n_bs))
    for n in range(instance.n_bs):
        users = np.flatnonzero(assignment.bs == n)
        if users.size:
            b[users, n] = water_fill(instance.rate_weight[users], instance.efficiency[users, n],
                                     F[users, n], instance.rb_budget[n])
    return RbAllocation(b)


@dataclass
class BandwidthSolution:
    fractional: FractionalSolution
    allocation: RbAllocation
    alternations: int
    converged: bool
    notes: list = field(default_factory=list)


def solve_bw_relaxed(instance: BandwidthInstance, config: SolverConfig = SolverConfig(),
                     max_alternations: int = 50, tol: float = 1e-6,
                     polish_steps: int = 10) -> BandwidthSolution:
    """Relaxed joint optimum by alternating the migration solve at fixed
    bandwidths with the square-root split at the resulting relaxed point.

    The split uses ``alpha = 1/q`` and ``beta = omega/q`` per unit of
    occupancy and weights each share by the user's fractional occupancy, so
    occupied bandwidth meets the budget exactly while users off a BS keep a
    prospective share there. Stops when the split or the relaxed value
    settles, then refines with exact occupancy-weighted water-filling at
    the best relaxed point. The best relaxed value seen is returned.
    """
    K, N = instance.efficiency.shape
    loads0 = np.bincount(instance.initial, minlength=N)
    member = np.eye(N, dtype=bool)[instance.initial]
    b = np.where(member, instance.rb_budget / np.maximum(loads0, 1), instance.rb_budget / (loads0 + 1))
    omega = instance.rate_weight[:, None]
    best = prev = None
    converged = False
    notes = []
    steps = 0
    for steps in range(1, max_alternations + 1):
        inst = instance.with_bandwidth(b)
        frac = solve_relaxed(inst, config)
        if best is None or frac.upper_bound > best[0].upper_bound:
            best = (frac, b)
        alpha = 1.0 / inst.delay(frac.y)
        new = np.column_stack([rb_split_closed_form(alpha[:, n], omega[:, 0] * alpha[:, n],
                                                    instance.efficiency[:, n], instance.rb_budget[n],
                                                    frac.X[:, n]) for n in range(N)])
        if prev is not None and frac.upper_bound < prev:
            new = 0.5 * (b + new)  # the split overshot; halve the move to break two-cycles
        change = float(np.abs(new - b).max() / instance.rb_budget.max())
        b = new
        if change <= tol or (prev is not None and abs(frac.upper_bound - prev) <= tol * abs(frac.upper_bound)):
            converged = True
            break
        prev = frac.upper_bound
    if not converged:
        notes.append(f"bandwidth split still moving after {max_alternations} alternations")
    inst = instance.with_bandwidth(b)
    frac = solve_relaxed(inst, config)
    if frac.upper_bound > best[0].upper_bound:
        best = (frac, b)
    # exact split at the best relaxed point; each step can only raise the value
    for _ in range(polish_steps):
        frac = best[0]
        F = instance.effective_compute(frac.y)
        b = np.column_stack([water_fill(omega[:, 0], instance.efficiency[:, n], F[:, n], instance.rb_budget[n],
                                        frac.X[:, n]) for n in range(N)])
        trial = solve_relaxed(instance.with_bandwidth(b), config)
        steps += 1
        gain = trial.upper_bound - frac.upper_bound
        if gain > 0:
            best = (trial, b)
        if gain <= tol * abs(frac.upper_bound):
            break
    return BandwidthSolution(best[0], RbAllocation(best[1]), steps, converged, notes)


@dataclass
class BandwidthReport:
    utility: float
    dual_bound: float
    iterations: int
    loads: np.ndarray
    notes: list = field(default_factory=list)

    @property
    def duality_gap(self) -> float:
        return self.dual_bound - self.utility


def priced_utilities(instance: BandwidthInstance, loads, nu) -> tuple:
    """Per-pair value ``U(nu) = V(b*(nu)) - nu b*(nu)`` and the responses ``b*(nu)``."""
    loads = np.maximum(np.asarray(loads), 1)
    F = instance.effective_compute(loads)
    omega = instance.rate_weight[:, None]
    b = b_star_of_nu(omega, np.broadcast_to(nu, F.shape), instance.efficiency, instance.isolation_rate,
                     instance.degradation, np.broadcast_to(loads, F.shape))
    U = _member_values(omega, instance.efficiency, F, b) - nu * b - instance.weighted_cost
    return U, b


def recover_bw_integer(instance: BandwidthInstance, fractional: FractionalSolution,
                       max_iter: int = 2000, rtol: float = 1e-6):
    """Integer assignment and bandwidths at the rounded relaxed loads.

    Bandwidth prices ``nu`` (one per BS) relax the budgets. At each price the
    priced utilities define an assignment problem with the rounded loads;
    its value plus ``sum(nu * budget)`` bounds the fixed-load optimum from
    above. Each assignment met along the way is given its optimal bandwidth
    split, which is always feasible, and the best one is returned. Prices move
    against the budget violation with harmonic steps on a normalised scale.
    Returns ``(assignment, allocation, report)``.
    """
    K, N = instance.efficiency.shape
    loads = round_loads(fractional.y, instance.vm_cap, K)
    slot_bs = np.repeat(np.arange(N), loads)
    budget = instance.rb_budget
    full = instance.with_bandwidth(np.broadcast_to(budget, (K, N)))
    scale = float(np.abs(instance.rate_weight[:, None] * full.offloading_rates(np.ones(N))).max())
    unit = scale / budget
    nu_scaled = np.ones(N)
    best = None
    dual = np.inf
    seen = {}
    it = 0
    for it in range(1, max_iter + 1):
        nu = nu_scaled * unit
        U, b = priced_utilities(instance, loads, nu)
        cols = U[:, slot_bs]
        perm = hungarian(cols)
        assignment = Assignment(slot_bs[perm], N)
        dual = min(dual, float(cols[np.arange(K), perm].sum() + (nu * budget).sum()))
        key = assignment.bs.tobytes()
        if key not in seen:
            alloc = optimal_bandwidth(instance, assignment)
            seen[key] = instance.value(assignment, alloc.b)
            if best is None or seen[key] > best[0]:
                best = (seen[key], assignment, alloc)
        if dual - best[0] <= rtol * max(abs(dual), 1.0):
            break
        used = (b * assignment.matrix).sum(axis=0)
        grad = (budget - used) / budget
        nu_scaled = np.maximum(nu_scaled - grad / (it + 1), 1e-9)
    value, assignment, alloc = best
    report = BandwidthReport(utility=value, dual_bound=dual, iterations=it, loads=loads)
    if dual < value:
        report.notes.append("dual bound below primal value; prices did not bound the fixed-load optimum")
    return assignment, alloc, report
