"""System model for joint service migration and BS handover.

Holds the uplink-rate, degraded-computation-rate and offloading-rate
formulas, the per-user migration cost, and the evaluator for the binary
migration problem. Rates are in bits/s throughout; costs are in cost units
and enter the utility scaled by ``cost_weight``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class FeasibilityError(ValueError):
    """A decision violates one of the problem constraints.

    ``constraint`` names the violated constraint: ``"binary"``,
    ``"one_bs_per_user"``, ``"vm_cap"`` or ``"shape"``.
    """

    def __init__(self, constraint: str, message: str):
        super().__init__(f"{constraint}: {message}")
        self.constraint = constraint


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RateParams:
    """Shared-band uplink: bandwidth, per-user power, per-BS noise, K x N gains."""

    bandwidth_hz: float
    tx_power_w: np.ndarray
    noise_power_w: np.ndarray
    channel_gain: np.ndarray

    def __post_init__(self):
        g = _frozen(self.channel_gain)
        if g.ndim != 2:
            raise ValueError("channel_gain must be a K x N matrix")
        k, n = g.shape
        p = _frozen(np.broadcast_to(self.tx_power_w, (k,)))
        s2 = _frozen(np.broadcast_to(self.noise_power_w, (n,)))
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if (p < 0).any() or (g < 0).any():
            raise ValueError("tx powers and channel gains must be non-negative")
        if (s2 <= 0).any():
            raise ValueError("noise power must be positive")
        object.__setattr__(self, "channel_gain", g)
        object.__setattr__(self, "tx_power_w", p)
        object.__setattr__(self, "noise_power_w", s2)

    @property
    def shape(self) -> tuple[int, int]:
        return self.channel_gain.shape

    def sinr(self) -> np.ndarray:
        """K x N SINR with every other user interfering at every BS."""
        rx = self.tx_power_w[:, None] * self.channel_gain
        interference = rx.sum(axis=0)[None, :] - rx
        return rx / (self.noise_power_w[None, :] + interference)

    def rate_matrix(self) -> np.ndarray:
        return self.bandwidth_hz * np.log2(1.0 + self.sinr())


def uplink_rate(params: RateParams, k: int, n: int) -> float:
    """Achievable uplink rate of user ``k`` at BS ``n`` (bits/s)."""
    p, g = params.tx_power_w, params.channel_gain
    interference = p @ g[:, n] - p[k] * g[k, n]
    sinr = p[k] * g[k, n] / (params.noise_power_w[n] + interference)
    return float(params.bandwidth_hz * np.log2(1.0 + sinr))


@dataclass(frozen=True, eq=False)
class ComputeParams:
    isolation_rate: np.ndarray
    degradation: np.ndarray
    vm_cap: np.ndarray

    def __post_init__(self):
        f = _frozen(self.isolation_rate)
        d = _frozen(np.broadcast_to(self.degradation, (f.shape[1],)))
        m = _frozen(np.broadcast_to(self.vm_cap, (f.shape[1],)), dtype=int)
        if (f <= 0).any():
            raise ValueError("isolation rates must be positive")
        if (d <= 0).any():
            raise ValueError("degradation factors must be positive")
        if (m < 0).any():
            raise ValueError("vm caps must be non-negative")
        if m.sum() < f.shape[0]:
            raise ValueError(f"total VM capacity {m.sum()} is below the number of users {f.shape[0]}")
        object.__setattr__(self, "isolation_rate", f)
        object.__setattr__(self, "degradation", d)
        object.__setattr__(self, "vm_cap", m)


def degraded_rate(isolation_rate, degradation, load):
    """Per-VM computation rate when ``load`` VMs share a server (broadcasts).

    Each extra co-located VM stretches computing time by ``1 + degradation``.
    A load below 1 is a contract violation: a BS hosting no users runs no VM.
    """
    load = np.asarray(load)
    if (load < 1).any():
        raise ValueError("load must be at least 1")
    out = np.asarray(isolation_rate) * (1.0 + np.asarray(degradation)) ** (1.0 - load)
    return out if out.ndim else float(out)


def computation_rate(params: ComputeParams, k: int, n: int, load: int) -> float:
    """Computation rate of user k's VM on BS n when ``load`` VMs share it."""
    if load > params.vm_cap[n]:
        raise ValueError(f"load {load} exceeds the VM cap {params.vm_cap[n]} of BS {n}")
    return degraded_rate(params.isolation_rate[k, n], params.degradation[n], load)


def offloading_rate(r, F):
    """Two-stage transmit-then-compute throughput ``1 / (1/r + 1/F)``.

    Zero when either stage has zero rate; infinite ``r`` yields ``F``.
    """
    r = np.asarray(r, dtype=float)
    F = np.asarray(F, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where((r > 0) & (F > 0), 1.0 / (1.0 / r + 1.0 / F), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class CostParams:
    """Raw migration costs ``c[k, j, n]`` (from BS j to BS n) and the weights."""

    initial: np.ndarray
    raw_cost: np.ndarray
    cost_weight: float
    rate_weight: np.ndarray

    def __post_init__(self):
        x0 = _frozen(self.initial, dtype=int)
        c = _frozen(self.raw_cost)
        k, n = x0.shape
        w = _frozen(np.broadcast_to(self.rate_weight, (k,)))
        if c.shape != (k, n, n):
            raise ValueError(f"raw_cost must have shape {(k, n, n)}, got {c.shape}")
        if not np.isin(x0, (0, 1)).all() or (x0.sum(axis=1) != 1).any():
            raise ValueError("initial assignment must be binary with one BS per user")
        if (c < 0).any():
            raise ValueError("costs must be non-negative")
        if (np.diagonal(c, axis1=1, axis2=2) != 0).any():
            raise ValueError("staying on the same BS must cost nothing")
        if self.cost_weight < 0 or (w < 0).any():
            raise ValueError("weights must be non-negative")
        object.__setattr__(self, "initial", x0)
        object.__setattr__(self, "raw_cost", c)
        object.__setattr__(self, "rate_weight", w)

    @property
    def collapsed_cost(self) -> np.ndarray:
        """Cost of moving user k to BS n from wherever it currently is."""
        return np.einsum("kj,kjn->kn", self.initial, self.raw_cost)

    def total_cost(self, X) -> float:
        return float(np.einsum("kj,kn,kjn->", self.initial, np.asarray(X), self.raw_cost))


@dataclass(frozen=True, eq=False)
class Instance:
    """Numeric payload of one migration problem.

    ``cost`` is already collapsed by the initial placement, so it is zero on
    each user's current BS. ``initial[k]`` is the BS user k starts on.
    """

    rate: np.ndarray
    isolation_rate: np.ndarray
    degradation: np.ndarray
    vm_cap: np.ndarray
    cost: np.ndarray
    cost_weight: float
    rate_weight: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        r = _frozen(self.rate)
        k, n = r.shape
        f = _frozen(self.isolation_rate)
        d = _frozen(np.broadcast_to(self.degradation, (n,)))
        m = _frozen(np.broadcast_to(self.vm_cap, (n,)), dtype=int)
        c = _frozen(self.cost)
        w = _frozen(np.broadcast_to(self.rate_weight, (k,)))
        x0 = _frozen(self.initial, dtype=int)
        if f.shape != (k, n) or c.shape != (k, n) or x0.shape != (k,):
            raise ValueError("inconsistent instance shapes")
        if (r < 0).any() or (f <= 0).any() or (d <= 0).any():
            raise ValueError("rates must be non-negative, isolation rates and degradation positive")
        if (c < 0).any() or self.cost_weight < 0 or (w < 0).any():
            raise ValueError("costs and weights must be non-negative")
        if (m < 0).any() or m.sum() < k:
            raise ValueError(f"total VM capacity {m.sum()} is below the number of users {k}")
        if ((x0 < 0) | (x0 >= n)).any():
            raise ValueError("initial BS index out of range")
        for name, val in (("rate", r), ("isolation_rate", f), ("degradation", d), ("vm_cap", m),
                          ("cost", c), ("rate_weight", w), ("initial", x0)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "cost_weight", float(self.cost_weight))

    @classmethod
    def from_params(cls, rates: RateParams, compute: ComputeParams, costs: CostParams) -> "Instance":
        return cls(
            rate=rates.rate_matrix(),
            isolation_rate=compute.isolation_rate,
            degradation=compute.degradation,
            vm_cap=compute.vm_cap,
            cost=costs.collapsed_cost,
            cost_weight=costs.cost_weight,
            rate_weight=costs.rate_weight,
            initial=np.argmax(costs.initial, axis=1),
        )

    @property
    def n_users(self) -> int:
        return self.rate.shape[0]

    @property
    def n_bs(self) -> int:
        return self.rate.shape[1]

    @property
    def weighted_cost(self) -> np.ndarray:
        return self.cost_weight * self.cost

    @property
    def shift(self) -> float:
        """Smallest constant making every shifted cost non-negative."""
        return float(self.weighted_cost.max())

    @property
    def shifted_cost(self) -> np.ndarray:
        return self.shift - self.weighted_cost

    @property
    def initial_matrix(self) -> np.ndarray:
        x0 = np.zeros(self.rate.shape, dtype=int)
        x0[np.arange(self.n_users), self.initial] = 1
        return x0

    def replace(self, **changes) -> "Instance":
        fields = {name: getattr(self, name) for name in self.__dataclass_fields__}
        fields.update(changes)
        return Instance(**fields)

    def delay(self, load) -> np.ndarray:
        """Per-bit transmit plus compute time, K x N, at (possibly fractional) loads."""
        load = np.asarray(load, dtype=float)
        with np.errstate(divide="ignore"):
            inv_r = np.where(self.rate > 0, 1.0 / np.where(self.rate > 0, self.rate, 1.0), np.inf)
        return inv_r + (1.0 + self.degradation) ** (load - 1.0) / self.isolation_rate

    def offloading_rates(self, load) -> np.ndarray:
        """K x N offloading rates if BS n carried ``load[n]`` users."""
        return 1.0 / self.delay(load)


@dataclass(frozen=True, eq=False)
class Assignment:
    """Binary decision: ``bs[k]`` is the BS hosting user k."""

    bs: np.ndarray
    n_bs: int

    def __post_init__(self):
        bs = _frozen(self.bs, dtype=int)
        if bs.ndim != 1 or ((bs < 0) | (bs >= self.n_bs)).any():
            raise FeasibilityError("shape", "BS index out of range")
        object.__setattr__(self, "bs", bs)

    @classmethod
    def from_matrix(cls, X) -> "Assignment":
        X = np.asarray(X)
        if X.ndim != 2:
            raise FeasibilityError("shape", "decision must be a K x N matrix")
        if not np.isin(X, (0, 1)).all():
            raise FeasibilityError("binary", "entries must be 0 or 1")
        bad = np.flatnonzero(X.sum(axis=1) != 1)
        if bad.size:
            raise FeasibilityError("one_bs_per_user", f"users {bad.tolist()} are not on exactly one BS")
        return cls(np.argmax(X, axis=1), X.shape[1])

    @property
    def matrix(self) -> np.ndarray:
        X = np.zeros((self.bs.size, self.n_bs), dtype=int)
        X[np.arange(self.bs.size), self.bs] = 1
        return X

    @property
    def loads(self) -> np.ndarray:
        return np.bincount(self.bs, minlength=self.n_bs)

    def migrated(self, initial) -> np.ndarray:
        return self.bs != np.asarray(initial)


@dataclass(frozen=True)
class Objective:
    utility: float
    sum_rate: float
    total_cost: float


def _as_assignment(instance: Instance, X) -> Assignment:
    a = X if isinstance(X, Assignment) else Assignment.from_matrix(X)
    if a.bs.size != instance.n_users or a.n_bs != instance.n_bs:
        raise FeasibilityError("shape", "decision does not match the instance size")
    over = np.flatnonzero(a.loads > instance.vm_cap)
    if over.size:
        raise FeasibilityError("vm_cap", f"BSs {over.tolist()} exceed their VM cap")
    return a


def evaluate(instance: Instance, X) -> Objective:
    """Utility of a binary decision: weighted sum offloading rate minus weighted cost.

    ``X`` is an :class:`Assignment` or a K x N 0/1 matrix. Raises
    :class:`FeasibilityError` naming the violated constraint.
    """
    a = _as_assignment(instance, X)
    users = np.arange(a.bs.size)
    loads = a.loads
    R = instance.offloading_rates(np.maximum(loads, 1))[users, a.bs]
    sum_rate = float(instance.rate_weight @ R)
    total_cost = float(instance.cost[users, a.bs].sum())
    return Objective(sum_rate - instance.cost_weight * total_cost, sum_rate, total_cost)


def relaxed_value(instance: Instance, X, y=None) -> float:
    """Objective of the integer-relaxed problem with the shifted costs.

    ``y`` defaults to the column sums of ``X``. Evaluated at a binary
    decision this equals ``evaluate(...).utility + K * shift``.
    """
    X = np.asarray(X, dtype=float)
    y = X.sum(axis=0) if y is None else np.asarray(y, dtype=float)
    ratio = instance.rate_weight[:, None] / instance.delay(y)
    return float((X * (ratio + instance.shifted_cost)).sum())


@dataclass
class SolveReport:
    """Outcome of a solve: objective decomposition plus solver diagnostics."""

    utility: float
    sum_rate: float
    total_cost: float
    upper_bound: float | None = None
    outer_iterations: int = 0
    inner_iterations: int = 0
    residual: float = float("nan")
    converged: bool = True
    loads_match: bool = True
    migrated_pct: float = 0.0
    oracle_utility: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def gap_to_upper_bound(self) -> float:
        if self.upper_bound is None:
            return float("nan")
        return (self.upper_bound - self.utility) / max(abs(self.upper_bound), 1e-300)

    @property
    def oracle_gap(self) -> float:
        if self.oracle_utility is None:
            return float("nan")
        return (self.oracle_utility - self.utility) / max(abs(self.oracle_utility), 1e-300)
