"""Scenario generation: hexagonal BS layout, user drops, Random Waypoint
mobility, distance-based path loss, max-SINR initial association and the
assembly of solver instances."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Assignment, Instance, RateParams

MIN_DISTANCE_KM = 1e-3


@dataclass(frozen=True, eq=False)
class Geometry:
    area_km: float
    bs_positions: np.ndarray
    user_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        for name in ("bs_positions", "user_positions"):
            pts = np.array(getattr(self, name), dtype=float).reshape(-1, 2)
            if ((pts < -1e-12) | (pts > self.area_km + 1e-12)).any():
                raise ValueError(f"{name} must lie inside the {self.area_km} km square")
            pts.setflags(write=False)
            object.__setattr__(self, name, pts)

    def with_users(self, user_positions) -> "Geometry":
        return Geometry(self.area_km, self.bs_positions, user_positions)

    def distances_km(self) -> np.ndarray:
        """K x N user-to-BS distances, clamped below at 1 m."""
        diff = self.user_positions[:, None, :] - self.bs_positions[None, :, :]
        return np.maximum(np.linalg.norm(diff, axis=2), MIN_DISTANCE_KM)


@dataclass(frozen=True)
class MobilityConfig:
    v_min: float = 0.0
    v_max: float = 5.0
    static_prob: float = 0.0
    pause_time: float = 0.0
    slot_length: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.v_min <= self.v_max:
            raise ValueError("need 0 <= v_min <= v_max")
        if not 0 <= self.static_prob <= 1:
            raise ValueError("static_prob must be in [0, 1]")
        if self.pause_time < 0 or self.slot_length <= 0:
            raise ValueError("pause_time must be non-negative and slot_length positive")


@dataclass(frozen=True)
class ScenarioConfig:
    """Network and workload parameters. Defaults follow the standard
    7-cell, 60-user setup."""

    n_bs: int = 7
    n_users: int = 60
    area_km: float = 1.0
    bandwidth_hz: float = 20e6
    tx_power_w: float = 0.1
    noise_dbm_per_hz: float = -174.0
    f_min: float = 0.5e7
    f_max: float = 2e7
    degradation: float = 0.25
    vm_cap: int = 45
    cost_weight: float = 0.5
    rate_weight: float = 1.0
    handover_cost: float = 1e5
    migration_cost_classes: tuple = (1e5, 2e5, 5e5)
    v_min: float = 0.0
    v_max: float = 5.0
    static_prob: float = 0.0
    pause_time: float = 0.0
    slot_length: float = 1.0
    trials: int = 500
    orthogonal_rb: bool = False

    def __post_init__(self):
        object.__setattr__(self, "migration_cost_classes", tuple(float(w) for w in self.migration_cost_classes))
        if self.n_bs < 1 or self.n_users < 1:
            raise ValueError("n_bs and n_users must be positive")
        if self.vm_cap * self.n_bs < self.n_users:
            raise ValueError(f"total VM capacity {self.vm_cap * self.n_bs} is below n_users {self.n_users}")
        if not 0 < self.f_min <= self.f_max:
            raise ValueError("need 0 < f_min <= f_max")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.migration_cost_classes:
            raise ValueError("migration_cost_classes must not be empty")
        self.mobility()

    @property
    def noise_power_w(self) -> float:
        return 10.0 ** ((self.noise_dbm_per_hz + 10 * np.log10(self.bandwidth_hz)) / 10) / 1000

    def mobility(self, seed: int = 0) -> MobilityConfig:
        return MobilityConfig(self.v_min, self.v_max, self.static_prob, self.pause_time, self.slot_length, seed)


def _hex_ring(i: int) -> np.ndarray:
    """Lattice points of hexagonal ring i (unit pitch), counter-clockwise from angle 0."""
    if i == 0:
        return np.zeros((1, 2))
    corners = np.array([[np.cos(a), np.sin(a)] for a in np.arange(7) * np.pi / 3]) * i
    pts = [corners[s] + (corners[s + 1] - corners[s]) * j / i for s in range(6) for j in range(i)]
    return np.array(pts)


def hex_layout(n_bs: int, side_km: float = 1.0) -> Geometry:
    """Centre BS plus concentric hexagonal rings fitted inside the square.

    With R rings the lattice pitch is ``side / (2R + 1)``, so a 7-BS layout
    puts the first ring at radius side/3. The outermost ring may be partial.
    """
    if n_bs < 1:
        raise ValueError("n_bs must be at least 1")
    rings, count = 0, 1
    while count < n_bs:
        rings += 1
        count += 6 * rings
    pitch = side_km / (2 * rings + 1)
    pts = np.vstack([_hex_ring(i) for i in range(rings + 1)])[:n_bs]
    positions = np.clip(side_km / 2 + pitch * pts, 0.0, side_km)
    return Geometry(side_km, positions)


def path_loss_db(distance_km):
    d = np.maximum(np.asarray(distance_km, dtype=float), MIN_DISTANCE_KM)
    out = 128.1 + 37.6 * np.log10(d)
    return out if out.ndim else float(out)


def channel_gain(geometry: Geometry) -> np.ndarray:
    return 10.0 ** (-path_loss_db(geometry.distances_km()) / 10)


def drop_users(n_users: int, side_km: float, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, side_km, size=(n_users, 2))


def rwp_step(positions, mobility: MobilityConfig, side_km: float = 1.0, rng=None) -> np.ndarray:
    """Advance every user one slot of Random Waypoint motion.

    Each user draws a waypoint uniformly in the square and a speed in
    ``[v_min, v_max]`` m/s, then moves towards it for the slot (minus any
    pause), stopping at the waypoint. Positions are in km. A user stays put
    with probability ``static_prob``. All draws are made for every user so the
    random stream does not depend on outcomes.
    """
    rng = np.random.default_rng(mobility.rng_seed) if rng is None else rng
    pos = np.asarray(positions, dtype=float)
    k = pos.shape[0]
    waypoint = rng.uniform(0.0, side_km, size=(k, 2))
    speed = rng.uniform(mobility.v_min, mobility.v_max, size=k)
    static = rng.random(k) < mobility.static_prob
    travel_km = speed * max(mobility.slot_length - mobility.pause_time, 0.0) / 1000.0
    travel_km[static] = 0.0
    delta = waypoint - pos
    dist = np.linalg.norm(delta, axis=1)
    frac = np.divide(np.minimum(travel_km, dist), dist, out=np.zeros(k), where=dist > 0)
    return np.clip(pos + frac[:, None] * delta, 0.0, side_km)


def assign_by_preference(score, vm_cap=None) -> Assignment:
    """Each user asks for BSs in decreasing ``score`` order; an over-full BS
    keeps its highest-scoring users and bounces the rest to their next choice
    (user-proposing deferred acceptance). Score ties go to the lower index."""
    score = np.asarray(score, dtype=float)
    k, n = score.shape
    cap = np.full(n, k) if vm_cap is None else np.broadcast_to(np.asarray(vm_cap, dtype=int), (n,))
    if cap.sum() < k:
        raise ValueError(f"total VM capacity {cap.sum()} is below the number of users {k}")
    prefs = np.argsort(-score, axis=1, kind="stable")
    next_choice = np.zeros(k, dtype=int)
    held = [[] for _ in range(n)]
    free = list(range(k))
    while free:
        user = free.pop(0)
        bs = prefs[user, next_choice[user]]
        next_choice[user] += 1
        held[bs].append(user)
        if len(held[bs]) > cap[bs]:
            held[bs].sort(key=lambda u: (-score[u, bs], u))
            free.append(held[bs].pop())
    bs_of = np.empty(k, dtype=int)
    for b, users in enumerate(held):
        bs_of[users] = b
    return Assignment(bs_of, n)


def max_sinr_association(rate_params: RateParams, vm_cap=None) -> Assignment:
    """Max-SINR association; when a BS overflows its VM cap the lowest-SINR
    users spill over to their next-best BS."""
    return assign_by_preference(rate_params.sinr(), vm_cap)


def rate_params_for(geometry: Geometry, config: ScenarioConfig) -> RateParams:
    return RateParams(config.bandwidth_hz, config.tx_power_w, config.noise_power_w, channel_gain(geometry))


def build_instance(geometry: Geometry, config: ScenarioConfig, x0: Assignment,
                   rng: np.random.Generator) -> Instance:
    """Assemble the solver instance for users at ``geometry``'s positions.

    Draws the isolation rates (uniform per user/BS pair) and each user's VM
    migration cost class, then collapses the handover-plus-migration cost
    against the initial BS.
    """
    k, n = config.n_users, config.n_bs
    rate = rate_params_for(geometry, config).rate_matrix()
    f = rng.uniform(config.f_min, config.f_max, size=(k, n))
    w_k = rng.choice(np.asarray(config.migration_cost_classes), size=k)
    cost = np.where(np.arange(n)[None, :] == x0.bs[:, None], 0.0, config.handover_cost + w_k[:, None])
    return Instance(rate=rate, isolation_rate=f, degradation=config.degradation, vm_cap=config.vm_cap,
                    cost=cost, cost_weight=config.cost_weight, rate_weight=config.rate_weight, initial=x0.bs)


@dataclass(frozen=True, eq=False)
class Scenario:
    """One generated time slot: geometry before and after the move plus the instance."""

    initial_geometry: Geometry
    geometry: Geometry
    initial: Assignment
    instance: Instance
    config: ScenarioConfig


def generate(config: ScenarioConfig, seed: int) -> Scenario:
    """Draw one scenario; a pure function of ``(config, seed)``.

    Order of random draws: user drop, mobility step, isolation rates,
    migration cost classes.
    """
    rng = np.random.default_rng(seed)
    layout = hex_layout(config.n_bs, config.area_km)
    start = layout.with_users(drop_users(config.n_users, config.area_km, rng))
    x0 = max_sinr_association(rate_params_for(start, config), config.vm_cap)
    moved = layout.with_users(rwp_step(start.user_positions, config.mobility(seed), config.area_km, rng))
    instance = build_instance(moved, config, x0, rng)
    return Scenario(start, moved, x0, instance, config)
