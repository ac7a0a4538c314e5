"""Hotspot mitigation: one overloaded macro BS (index 0) sheds users to
idle helper BSs.

Users are homogeneous per BS, so a decision is just the load vector ``y``
over all BSs. Each BS earns ``R_n(y) = y / (1/r + (1+d)^(y-1)/f) - lam*c*y``.
Below the utility-maximising total ``K*`` the relaxed problem is concave and
an exact solution follows by bisection plus optimal floor/ceil rounding;
above it a scalar sum-of-ratios iteration is used.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .recovery import round_loads
from .relaxed import SolverConfig

BISECT_TOL = 1e-10


def bisect(fn, lo: float, hi: float, tol: float = BISECT_TOL, max_iter: int = 200) -> float:
    """Root of a function that is positive at ``lo`` and non-positive at ``hi``."""
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class HotspotInstance:
    """Per-BS scalars; index 0 is the macro BS, which charges no migration cost."""

    rate: np.ndarray
    isolation_rate: np.ndarray
    cost: np.ndarray
    degradation: np.ndarray
    vm_cap: np.ndarray
    cost_weight: float
    n_users: int

    def __post_init__(self):
        r = np.array(self.rate, dtype=float).ravel()
        n = r.size
        arrays = dict(rate=r,
                      isolation_rate=np.broadcast_to(np.asarray(self.isolation_rate, dtype=float), (n,)).copy(),
                      cost=np.broadcast_to(np.asarray(self.cost, dtype=float), (n,)).copy(),
                      degradation=np.broadcast_to(np.asarray(self.degradation, dtype=float), (n,)).copy(),
                      vm_cap=np.broadcast_to(np.asarray(self.vm_cap, dtype=int), (n,)).copy())
        if (arrays["rate"] <= 0).any() or (arrays["isolation_rate"] <= 0).any():
            raise ValueError("rates must be positive")
        if (arrays["degradation"] <= 0).any():
            raise ValueError("degradation factors must be positive")
        if arrays["cost"][0] != 0:
            raise ValueError("keeping a user on the macro BS must cost nothing")
        if (arrays["cost"] < 0).any() or self.cost_weight < 0:
            raise ValueError("costs and the cost weight must be non-negative")
        if self.n_users < 0 or arrays["vm_cap"].sum() < self.n_users:
            raise ValueError("total VM capacity is below the number of users")
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_bs(self) -> int:
        return self.rate.size

    @property
    def weighted_cost(self) -> np.ndarray:
        return self.cost_weight * self.cost

    def with_users(self, n_users: int) -> "HotspotInstance":
        return HotspotInstance(self.rate, self.isolation_rate, self.cost, self.degradation, self.vm_cap,
                               self.cost_weight, n_users)

    def delay(self, y) -> np.ndarray:
        return 1.0 / self.rate + (1.0 + self.degradation) ** (np.asarray(y, dtype=float) - 1.0) / self.isolation_rate

    def bs_utility(self, y) -> np.ndarray:
        """Per-BS utility ``R_n(y_n)`` (broadcasts over leading axes)."""
        y = np.asarray(y, dtype=float)
        return y / self.delay(y) - self.weighted_cost * y

    def marginal(self, y) -> np.ndarray:
        """Derivative of each ``R_n`` at ``y``."""
        y = np.asarray(y, dtype=float)
        c = np.log1p(self.degradation)
        grow = np.exp(c * (y - 1.0)) / self.isolation_rate
        q = 1.0 / self.rate + grow
        return (1.0 / self.rate + grow * (1.0 - y * c)) / q**2 - self.weighted_cost

    def total_utility(self, y) -> float:
        return float(self.bs_utility(y).sum())


@dataclass(frozen=True)
class HotspotConfig:
    """Macro BS plus identical helpers; defaults are the standard small-cell example."""

    macro_rate: float = 5e6
    macro_isolation_rate: float = 5e7
    macro_degradation: float = 0.25
    macro_vm_cap: int = 45
    n_helpers: int = 3
    helper_rate: float = 2e6
    helper_isolation_rate: float = 1e7
    helper_cost: float = 2e5
    helper_degradation: float = 0.4
    helper_vm_cap: int = 45
    cost_weight: float = 0.5
    k_min: int = 1
    k_max: int = 70

    def instance(self, n_users: int) -> HotspotInstance:
        h = self.n_helpers
        return HotspotInstance(
            rate=[self.macro_rate] + [self.helper_rate] * h,
            isolation_rate=[self.macro_isolation_rate] + [self.helper_isolation_rate] * h,
            cost=[0.0] + [self.helper_cost] * h,
            degradation=[self.macro_degradation] + [self.helper_degradation] * h,
            vm_cap=[self.macro_vm_cap] + [self.helper_vm_cap] * h,
            cost_weight=self.cost_weight, n_users=n_users)


def one_sided_load(instance: HotspotInstance, n: int) -> float:
    """Load maximising BS n's own utility over ``[0, M_n]``.

    Zero when even the first user is not worth its weighted cost; otherwise
    the stationary point found by bisection, clipped to the cap.
    """
    r, f = instance.rate[n], instance.isolation_rate[n]
    d, M = instance.degradation[n], float(instance.vm_cap[n])
    if instance.weighted_cost[n] > 1.0 / (1.0 / r + 1.0 / (f * (1.0 + d))):
        return 0.0

    def slope(y):
        return float(instance.marginal(np.where(np.arange(instance.n_bs) == n, y, 0.0))[n])

    hi = 1.0
    while slope(hi) > 0:
        if hi >= M:
            return M
        hi *= 2.0
    return min(bisect(slope, 0.0, hi), M)


def one_sided_loads(instance: HotspotInstance) -> np.ndarray:
    return np.array([one_sided_load(instance, n) for n in range(instance.n_bs)])


def k_star(instance: HotspotInstance) -> float:
    return float(one_sided_loads(instance).sum())


def _response(instance: HotspotInstance, price: float, upper: np.ndarray) -> np.ndarray:
    """Per-BS load where the marginal utility meets ``price``, within ``[0, upper]``."""
    out = np.zeros(instance.n_bs)
    for n in range(instance.n_bs):
        if upper[n] <= 0:
            continue
        unit = np.zeros(instance.n_bs)

        def gap(y):
            unit[n] = y
            return float(instance.marginal(unit)[n]) - price

        if gap(0.0) <= 0:
            out[n] = 0.0
        elif gap(upper[n]) >= 0:
            out[n] = upper[n]
        else:
            out[n] = bisect(gap, 0.0, upper[n])
    return out


def solve_underloaded(instance: HotspotInstance, J=None) -> np.ndarray:
    """Relaxed optimum for ``K <= K*`` under the extra caps ``y_n <= J_n``.

    Each R_n is concave on ``[0, J_n]``, so the optimum equalises marginal
    utilities; the common price is found by bisection.
    """
    J = one_sided_loads(instance) if J is None else np.asarray(J, dtype=float)
    K = instance.n_users
    total = J.sum()
    if K > total + 1e-9:
        raise ValueError(f"K={K} exceeds K*={total:.6g}; use the overloaded solver")
    if K >= total - 1e-12:
        return J.copy()
    if K == 0:
        return np.zeros_like(J)
    lo = float(instance.marginal(J).min()) - 1.0
    hi = float(instance.marginal(np.zeros_like(J)).max()) + 1.0
    scale = max(abs(lo), abs(hi))
    price = bisect(lambda p: _response(instance, p, J).sum() - K, lo, hi, tol=1e-15 * scale / max(scale, 1.0))
    y = _response(instance, price, J)
    # spread the bisection residue over BSs strictly inside their range
    free = (y > 0) & (y < J)
    if free.any():
        y[free] += (K - y.sum()) / free.sum()
    return np.clip(y, 0.0, J)


def optimal_round_hotspot(instance: HotspotInstance, y, tol: float = 1e-9) -> np.ndarray:
    """Integer loads from a relaxed optimum: raise the ``s`` BSs whose step
    from floor to ceiling gains the most utility, floor the rest."""
    y = np.asarray(y, dtype=float)
    y = np.where(np.abs(y - np.round(y)) <= tol, np.round(y), y)
    lo = np.floor(y).astype(int)
    s = instance.n_users - int(lo.sum())
    frac = np.flatnonzero(y > lo)
    if not 0 <= s <= frac.size:
        raise ValueError("relaxed loads do not sum to the number of users")
    gain = instance.bs_utility(lo + 1) - instance.bs_utility(lo)
    order = frac[np.argsort(-gain[frac], kind="stable")]
    out = lo.copy()
    out[order[:s]] += 1
    return out


# ------------------------------------------------------- overloaded regime

def _inner_loads(instance: HotspotInstance, alpha, beta, z, K: int) -> np.ndarray:
    """Maximise ``sum (alpha+z) y - alpha beta (1+d)^(y-1)/f`` over the capped simplex."""
    c = np.log1p(instance.degradation)
    f = instance.isolation_rate
    M = instance.vm_cap.astype(float)
    ab = alpha * beta
    head = alpha + z

    def loads(nu):
        with np.errstate(divide="ignore", invalid="ignore"):
            interior = 1.0 + np.log(np.where(head > nu, (head - nu) * f, 1.0) / np.where(ab > 0, ab * c, 1.0)) / c
        y = np.where(ab > 0, interior, M)
        return np.where(head > nu, np.clip(y, 0.0, M), 0.0)

    hi = float(head.max())
    step = max(1.0, abs(hi))
    lo = float(head.min()) - step
    while loads(lo).sum() < K and step < 1e300:
        step *= 4.0
        lo = float(head.min()) - step
    nu = bisect(lambda v: loads(v).sum() - K, lo, hi, tol=1e-15)
    y = loads(nu + 1e-12 * max(1.0, abs(nu)))
    # BSs whose response jumps at the price (no penalty) absorb what is left
    left = K - y.sum()
    above = loads(nu - 1e-12 * max(1.0, abs(nu)))
    for n in np.flatnonzero(above > y):
        take = min(left, above[n] - y[n])
        y[n] += take
        left -= take
    free = (y > 0) & (y < M)
    if abs(left) > 0 and free.any():
        y[free] += left / free.sum()
    return np.clip(y, 0.0, M)


@dataclass
class HotspotReport:
    n_users: int
    k_star: float
    regime: str
    utility: float
    loads: np.ndarray
    one_sided: np.ndarray
    relaxed: np.ndarray
    converged: bool = True
    residual: float = 0.0
    iterations: int = 0
    notes: list = field(default_factory=list)


def _ratio_run(inst: HotspotInstance, y0, z, config):
    """Scalar sum-of-ratios loop from start loads ``y0``.

    Only the ratio parameters ``(alpha, beta)`` drive the inner problem; the
    bonus term is linear so its parameter is exact at every step. Returns
    ``(y, residual, iterations, converged)``.
    """
    K = inst.n_users
    q = inst.delay(y0)
    alpha, beta = 1.0 / q, np.asarray(y0, dtype=float) / q
    y = _inner_loads(inst, alpha, beta, z, K)

    def residual(a, b, yy):
        qq = inst.delay(yy)
        return float(((a * qq - 1) ** 2).sum() + (((b * qq - yy) / max(K, 1)) ** 2).sum())

    def trial_at(zeta, target):
        a = (1 - zeta) * alpha + zeta * target[0]
        b = (1 - zeta) * beta + zeta * target[1]
        ty = _inner_loads(inst, a, b, z, K)
        return a, b, ty, residual(a, b, ty)

    res = residual(alpha, beta, y)
    damped = False
    tol = config.tol_outer * inst.n_bs
    for it in range(1, config.max_outer + 1):
        if res < tol:
            return y, res, it - 1, True
        qq = inst.delay(y)
        target = (1.0 / qq, y / qq)
        accepted = False
        if not damped:
            for m in range(config.stall_backtracks + 1):
                zeta = config.backtrack ** m
                a, b, ty, tres = trial_at(zeta, target)
                if tres <= (1 - config.sufficient_decrease * zeta) * res:
                    accepted = True
                    break
            damped = not accepted
        if not accepted:
            a, b, ty, tres = trial_at(config.damping, target)
        alpha, beta, y, res = a, b, ty, tres
    return y, res, config.max_outer, res < tol


def _parked(base, K: int, n: int, cap) -> np.ndarray:
    """``base`` with the surplus put on BS n, overflow spilling to the others in index order."""
    y = np.minimum(base, cap).astype(float)
    for m in [n] + [m for m in range(y.size) if m != n]:
        y[m] += min(K - y.sum(), cap[m] - y[m])
    return y


def solve_overloaded(instance: HotspotInstance, config=None, J=None):
    """Loads for ``K > K*`` by a scalar sum-of-ratios iteration.

    Costs are reshaped into non-negative bonuses ``z_n = max(lam c) - lam c_n``.
    Runs start from the uniform split and from each "park the surplus on one
    BS" profile; every run is rounded by largest fractional part and the best
    integer utility wins. Returns ``(loads, relaxed_loads, residual,
    iterations, converged)`` for the winning run.
    """
    config = SolverConfig() if config is None else config
    J = one_sided_loads(instance) if J is None else np.asarray(J, dtype=float)
    K = instance.n_users
    N = instance.n_bs
    z = instance.weighted_cost.max() - instance.weighted_cost
    starts = [np.full(N, K / N)]
    base = np.floor(J)
    for n in range(N):
        starts.append(_parked(base, K, n, instance.vm_cap))
    best = None
    for y0 in starts:
        y, res, iters, ok = _ratio_run(instance, np.asarray(y0, dtype=float), z, config)
        loads = round_loads(y, instance.vm_cap, K)
        value = instance.total_utility(loads)
        if best is None or value > best[0] + 1e-12 * abs(value):
            best = (value, loads, y, res, iters, ok)
    return best[1], best[2], best[3], best[4], best[5]


def load_stage(loads, one_sided, k_star_value: float) -> str:
    """Label a load vector: "I" helpers idle, "II" filling towards ``J``,
    "III" balanced overload, "IV" surplus concentrated on one BS."""
    loads = np.asarray(loads, dtype=float)
    if not loads[1:].any():
        return "I"
    if loads.sum() <= np.floor(k_star_value + 1e-9):
        return "II"
    surplus = np.maximum(loads - np.asarray(one_sided), 0.0)
    return "IV" if surplus.max() > 0.5 * surplus.sum() else "III"


def solve_hotspot(instance: HotspotInstance, config=None):
    """Dispatch on ``K`` versus ``K*``: exact path up to ``floor(K*)``,
    sum-of-ratios beyond. Returns ``(loads, report)``."""
    J = one_sided_loads(instance)
    ks = float(J.sum())
    K = instance.n_users
    if K <= np.floor(ks + 1e-9):
        relaxed = solve_underloaded(instance, J)
        loads = optimal_round_hotspot(instance, relaxed)
        report = HotspotReport(K, ks, "underloaded", instance.total_utility(loads), loads, J, relaxed)
    else:
        loads, relaxed, res, iters, ok = solve_overloaded(instance, config, J)
        report = HotspotReport(K, ks, "overloaded", instance.total_utility(loads), loads, J, relaxed,
                               converged=ok, residual=res, iterations=iters)
    return loads, report

