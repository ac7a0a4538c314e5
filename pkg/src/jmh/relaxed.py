"""Two-layer sum-of-ratios solver for the load-relaxed migration problem.

The relaxed problem lets ``x[k, n]`` be fractional and treats the BS load
``y[n] = sum_k x[k, n]`` as a real variable. Each offloading rate is a ratio
``w_k / q_kn(y_n)`` with the per-bit delay ``q = 1/r + (1+d)^(y-1)/f`` in
the denominator. The outer layer runs a damped Newton iteration on the
parameters ``(alpha, beta, gamma)`` that turn the sum of ratios into a
subtractive problem; the inner layer solves that subtractive problem through
its dual over the per-BS load prices ``mu``.

All internal work happens on a rescaled copy of the instance in which rates
and shifted costs are divided by a common rate scale, so revenues are O(1).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .model import Instance, relaxed_value


@dataclass(frozen=True)
class SolverConfig:
    """Tuning knobs for both layers.

    ``step`` is the base subgradient step on normalised revenues,
    ``avg_exponent`` the primal-averaging exponent, ``backtrack`` and
    ``sufficient_decrease`` drive the Newton step-length search and
    ``tol_outer`` (per K x N entry) bounds the squared residual sum and
    ``tol_residual_max`` every single residual at the final smoothing.
    ``inner_method`` is ``"newton"`` (smoothed dual Newton, default) or
    ``"subgradient"`` (projected subgradient with primal averaging).
    """

    step: float = 1.0
    avg_exponent: float = 1.0
    backtrack: float = 0.5
    sufficient_decrease: float = 0.01
    tol_outer: float = 1e-6
    tol_residual_max: float = 1e-4
    tol_inner: float = 1e-5
    inner_patience: int = 10
    max_inner: int = 20000
    max_outer: int = 100
    max_backtracks: int = 60
    inner_method: str = "newton"
    smoothing: float = 1e-7
    damping: float = 0.5
    stall_backtracks: int = 10
    restarts: bool = True

    def __post_init__(self):
        if not (0 < self.backtrack < 1 and 0 < self.sufficient_decrease < 1):
            raise ValueError("backtrack and sufficient_decrease must lie in (0, 1)")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if min(self.tol_outer, self.tol_residual_max, self.tol_inner, self.step, self.smoothing) <= 0:
            raise ValueError("tolerances, step and smoothing must be positive")
        if self.inner_method not in ("newton", "subgradient"):
            raise ValueError(f"unknown inner_method {self.inner_method!r}")
        if min(self.max_inner, self.max_outer, self.max_backtracks, self.inner_patience) < 1:
            raise ValueError("iteration caps must be positive")


@dataclass(frozen=True, eq=False)
class ParamTriple:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            arr = np.array(getattr(self, name), dtype=float)
            if (arr < 0).any():
                raise ValueError(f"{name} must be non-negative")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass
class DualState:
    """Multipliers and running primal averages of the subgradient method."""

    mu: np.ndarray
    t: int = 0
    x_bar: np.ndarray | None = None
    y_bar: np.ndarray | None = None
    weight_sum: float = 0.0

    @classmethod
    def start(cls, n_users: int, n_bs: int, mu=None) -> "DualState":
        mu = np.zeros(n_bs) if mu is None else np.maximum(np.asarray(mu, dtype=float), 0.0)
        return cls(mu.copy(), 0, np.zeros((n_users, n_bs)), np.zeros(n_bs), 0.0)


@dataclass
class InnerSolution:
    X: np.ndarray
    y: np.ndarray
    mu: np.ndarray
    primal_value: float
    dual_value: float
    iterations: int
    converged: bool

    @property
    def duality_gap(self) -> float:
        return (self.dual_value - self.primal_value) / max(abs(self.dual_value), 1e-300)

    @property
    def constraint_violation(self) -> float:
        return float(np.abs(self.y - self.X.sum(axis=0)).max())


@dataclass
class FractionalSolution:
    """Relaxed optimum. ``upper_bound`` is in utility units (shift removed)."""

    X: np.ndarray
    y: np.ndarray
    upper_bound: float
    residual: float
    residual_max: tuple
    params: ParamTriple
    outer_iterations: int
    inner_iterations: int
    converged: bool
    duality_gap: float = 0.0
    constraint_violation: float = 0.0
    notes: list = field(default_factory=list)

    def check(self, instance: Instance, tol: float = 1e-6) -> None:
        """Raise if the row/column/cap/total invariants are violated."""
        K = instance.n_users
        if np.abs(self.X.sum(axis=1) - 1).max() > tol:
            raise ValueError("rows of X must sum to 1")
        if np.abs(self.X.sum(axis=0) - self.y).max() > tol:
            raise ValueError("y must equal the column sums of X")
        if (self.y > instance.vm_cap + tol).any() or (self.X < -tol).any():
            raise ValueError("loads exceed VM caps or X is negative")
        if abs(self.y.sum() - K) > tol * K:
            raise ValueError("loads must sum to K")


def rate_scale(instance: Instance) -> float:
    """Largest single-user revenue at unit load, used to normalise rates."""
    R1 = instance.offloading_rates(np.ones(instance.n_bs))
    s = float((instance.rate_weight[:, None] * R1 + instance.shifted_cost).max())
    return s if s > 0 else 1.0


def scaled(instance: Instance, scale: float) -> Instance:
    """Copy with rates and costs divided by ``scale`` (ratios and z scale alike)."""
    return instance.replace(rate=instance.rate / scale, isolation_rate=instance.isolation_rate / scale,
                            cost_weight=instance.cost_weight / scale)


# ---------------------------------------------------------------- inner layer

def _revenue(instance: Instance, alpha) -> np.ndarray:
    return alpha * instance.rate_weight[:, None] + instance.shifted_cost


def _load_price(instance: Instance, alpha, beta) -> np.ndarray:
    """Per-BS coefficient ``Q_n = sum_k alpha beta / f`` of the load penalty."""
    return (alpha * beta / instance.isolation_rate).sum(axis=0)


def _best_load(mu, Q, c, M):
    """Maximiser over ``0 <= y <= M`` of ``mu*y - Q*exp(c*(y-1))``."""
    mu = np.asarray(mu, dtype=float)
    q = Q * c
    with np.errstate(divide="ignore", invalid="ignore"):
        interior = (np.log(np.where(mu > 0, mu, 1.0)) - np.log(np.where(q > 0, q, 1.0))) / c + 1.0
    y = np.where(q > 0, np.where(mu >= q / np.exp(c), np.minimum(interior, M), 0.0),
                 np.where(mu > 0, M, 0.0))
    return np.clip(y, 0.0, M)


def dual_x_update(instance: Instance, alpha, mu, k: int) -> np.ndarray:
    """One-hot row: user k picks the BS with the highest revenue net of price."""
    rev = alpha[k] * instance.rate_weight[k] + instance.shifted_cost[k] - np.asarray(mu)
    row = np.zeros(instance.n_bs)
    row[int(np.argmax(rev))] = 1.0
    return row


def dual_y_update(instance: Instance, alpha, beta, mu_n: float, n: int) -> float:
    """Load of BS n that best trades the price ``mu_n`` against the penalty.

    With a zero penalty coefficient the load jumps to the cap for any positive
    price and stays at zero for a zero price.
    """
    Q = _load_price(instance, alpha, beta)[n]
    c = np.log1p(instance.degradation[n])
    return float(_best_load(mu_n, Q, c, float(instance.vm_cap[n])))


def subgradient_step(state: DualState, x, y, step: float) -> np.ndarray:
    """Projected step ``mu <- max(0, mu - step/(t+1) * (y - colsum x))``."""
    g = np.asarray(y) - np.asarray(x).sum(axis=0)
    state.mu = np.maximum(0.0, state.mu - step / (state.t + 1) * g)
    return state.mu


def primal_average(state: DualState, x, y, t: int, nu: float) -> None:
    """Fold iterate t into the running averages with weight ``t^nu / sum s^nu``."""
    w = float(t) ** nu
    state.weight_sum += w
    share = w / state.weight_sum
    state.x_bar = (1 - share) * state.x_bar + share * np.asarray(x, dtype=float)
    state.y_bar = (1 - share) * state.y_bar + share * np.asarray(y, dtype=float)


def subtractive_value(instance: Instance, params: ParamTriple, X, y) -> float:
    """Subtractive objective, dropping terms that do not depend on (X, y)."""
    a = _revenue(instance, params.alpha)
    Q = _load_price(instance, params.alpha, params.beta)
    c = np.log1p(instance.degradation)
    return float((np.asarray(X) * a).sum() - (Q * np.exp(c * (np.asarray(y) - 1))).sum())


def dual_value(instance: Instance, params: ParamTriple, mu) -> float:
    a = _revenue(instance, params.alpha)
    Q = _load_price(instance, params.alpha, params.beta)
    c = np.log1p(instance.degradation)
    M = instance.vm_cap.astype(float)
    mu = np.asarray(mu, dtype=float)
    y = _best_load(mu, Q, c, M)
    return float((a - mu).max(axis=1).sum() + (mu * y - Q * np.exp(c * (y - 1))).sum())


def _subgradient_inner(instance, params, config, mu0):
    K, N = instance.rate.shape
    a = _revenue(instance, params.alpha)
    Q = _load_price(instance, params.alpha, params.beta)
    c = np.log1p(instance.degradation)
    M = instance.vm_cap.astype(float)
    scale = float(a.max()) if a.max() > 0 else 1.0
    state = DualState.start(K, N, mu0)
    calm = 0
    converged = False
    for t in range(1, config.max_inner + 1):
        best = np.argmax(a - state.mu, axis=1)
        x = np.zeros((K, N))
        x[np.arange(K), best] = 1.0
        y = _best_load(state.mu, Q, c, M)
        primal_average(state, x, y, t, config.avg_exponent)
        before = state.mu
        state.t = t
        subgradient_step(state, x, y, config.step * scale)
        calm = calm + 1 if np.abs(state.mu - before).max() <= config.tol_inner * scale else 0
        if calm >= config.inner_patience:
            converged = True
            break
    # a stalled price means the last iterate is (nearly) feasible; the
    # averages still carry the early iterates, so keep whichever fits better
    if np.abs(y - x.sum(axis=0)).max() < np.abs(state.y_bar - state.x_bar.sum(axis=0)).max():
        return x, y, state.mu, t, converged
    return state.x_bar, state.y_bar, state.mu, t, converged


def _ladder(start: float, end: float) -> list:
    """Decades from ``start`` down to ``end`` (inclusive)."""
    taus = []
    tau = start
    while tau > end * 1.0001:
        taus.append(tau)
        tau /= 10.0
    return taus + [end]


def _smoothed_dual(mu, a, Q, c, M, tau):
    logits = (a - mu) / tau
    top = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - top)
    s = e.sum(axis=1, keepdims=True)
    p = e / s
    y = _best_load(mu, Q, c, M)
    value = tau * float((top[:, 0] + np.log(s[:, 0])).sum()) + float((mu * y - Q * np.exp(c * (y - 1))).sum())
    grad = y - p.sum(axis=0)
    interior = (y > 0) & (y < M) & (mu > 0)
    curv = np.where(interior, 1.0 / (c * np.where(mu > 0, mu, 1.0)), 0.0)
    hess = (np.diag(p.sum(axis=0)) - p.T @ p) / tau + np.diag(curv)
    return value, grad, hess, p


def _newton_inner(instance, params, config, mu0):
    """Minimise the entropy-smoothed dual by damped Newton with smoothing continuation.

    At the smoothed optimum the softmax rows give a primal X whose column
    sums equal the best-response loads, and the (unsmoothed) duality gap is
    at most ``smoothing * K * log N``.
    """
    K, N = instance.rate.shape
    a = _revenue(instance, params.alpha)
    Q = _load_price(instance, params.alpha, params.beta)
    # a zero penalty makes the dual kinked at mu=0; a tiny floor keeps it smooth
    Q = np.maximum(Q, 1e-14 * max(1.0, float(Q.max())))
    c = np.log1p(instance.degradation)
    M = instance.vm_cap.astype(float)
    mu = np.zeros(N) if mu0 is None else np.asarray(mu0, dtype=float).copy()
    # a warm start is already close, so skip the coarsest smoothing levels
    taus = _ladder(1e-2 if mu0 is None else min(1e-2, 1e3 * config.smoothing), config.smoothing)
    iters = 0
    converged = True
    for tau in taus:
        final = tau == taus[-1]
        gtol = (1e-10 if final else 1e-6) * K
        stage_ok = False
        for _ in range(100):
            iters += 1
            val, g, H, p = _smoothed_dual(mu, a, Q, c, M, tau)
            gmax = np.abs(g).max()
            if gmax <= gtol:
                stage_ok = True
                break
            reg = 1e-12 * (1.0 + np.abs(np.diag(H)).max())
            try:
                step = -np.linalg.solve(H + reg * np.eye(N), g)
            except np.linalg.LinAlgError:
                step = -g
            slope = float(g @ step)
            if slope >= 0:
                step, slope = -g, -float(g @ g)
            t = 1.0
            moved = False
            for _ in range(60):
                cand = mu + t * step
                cval, cg = _smoothed_dual(cand, a, Q, c, M, tau)[:2]
                # near the optimum value changes drown in round-off; fall back to the gradient
                if cval <= val + 1e-4 * t * slope or (
                        cval <= val + 1e-14 * abs(val) and np.abs(cg).max() < gmax):
                    moved = True
                    break
                t *= 0.5
            if not moved:
                stage_ok = gmax <= 1e-6 * K
                break
            mu = cand
        if final:
            converged = stage_ok
    _, g, _, p = _smoothed_dual(mu, a, Q, c, M, taus[-1])
    return p, p.sum(axis=0), mu, iters, converged


def solve_subtractive(instance: Instance, params: ParamTriple, config: SolverConfig = SolverConfig(),
                      mu0=None) -> InnerSolution:
    """Solve the parameterised subtractive problem for fixed (alpha, beta, gamma).

    Returns the primal (X, y) together with the dual prices, both objective
    values and a convergence flag. Expects a rate-normalised instance.
    """
    if instance.n_bs == 1:
        X = np.ones((instance.n_users, 1))
        y = np.array([float(instance.n_users)])
        v = subtractive_value(instance, params, X, y)
        return InnerSolution(X, y, np.zeros(1), v, v, 0, True)
    if config.inner_method == "subgradient":
        X, y, mu, iters, ok = _subgradient_inner(instance, params, config, mu0)
    else:
        X, y, mu, iters, ok = _newton_inner(instance, params, config, mu0)
    return InnerSolution(X, y, mu, subtractive_value(instance, params, X, y),
                         dual_value(instance, params, mu), iters, ok)


# ---------------------------------------------------------------- outer layer

def _reachable(q) -> np.ndarray:
    return np.isfinite(q).astype(float)


def _times_delay(p, q) -> np.ndarray:
    """``p * q`` where the link exists; a zero-rate pair has infinite delay
    and zero consistent parameters, so its residual terms vanish."""
    return np.where(np.isfinite(q), p * np.where(np.isfinite(q), q, 0.0), 0.0)


def residuals(instance: Instance, params: ParamTriple, X, y):
    """The three consistency residuals ``alpha q - 1``, ``beta q - x w``, ``gamma - x z``."""
    q = instance.delay(y)
    X = np.asarray(X)
    return (_times_delay(params.alpha, q) - _reachable(q),
            _times_delay(params.beta, q) - X * instance.rate_weight[:, None] * _reachable(q),
            params.gamma - X * instance.shifted_cost)


def residual_norm(instance: Instance, params: ParamTriple, X, y) -> float:
    return float(sum((r ** 2).sum() for r in residuals(instance, params, X, y)))


def residual_max(instance: Instance, params: ParamTriple, X, y) -> float:
    return float(max(np.abs(r).max() for r in residuals(instance, params, X, y)))


def initial_params(instance: Instance, X=None, y=None) -> ParamTriple:
    """Consistency equations evaluated at ``X`` (default: initial placement)
    and loads ``y`` (default: the uniform split K/N)."""
    K, N = instance.rate.shape
    X = instance.initial_matrix if X is None else np.asarray(X, dtype=float)
    y = np.full(N, K / N) if y is None else np.asarray(y, dtype=float)
    q = instance.delay(y)
    return ParamTriple(1.0 / q, X * instance.rate_weight[:, None] / q, X * instance.shifted_cost)


def newton_update(params: ParamTriple, q, X, instance: Instance, config: SolverConfig = SolverConfig(),
                  residual_fn=None):
    """One damped Newton step on the consistency system.

    The full step moves every parameter to its consistent value at the
    current ``(q, X)``; the step length is ``backtrack**m`` for the smallest
    ``m`` whose residual passes the sufficient-decrease test. ``residual_fn``
    maps trial parameters to their squared residual sum (re-solving the inner
    problem); without it the residual is evaluated at the fixed ``(q, X)``.

    Returns ``(new_params, zeta, accepted, payload)`` where ``payload`` is
    whatever ``residual_fn`` returned alongside the residual.
    """
    q = np.asarray(q)
    X = np.asarray(X)
    w = instance.rate_weight[:, None]
    target = (1.0 / q, X * w / q, X * instance.shifted_cost)

    def at(zeta):
        return ParamTriple(*((1 - zeta) * cur + zeta * tgt
                             for cur, tgt in zip((params.alpha, params.beta, params.gamma), target)))

    def fixed_residual(p):
        return float(((_times_delay(p.alpha, q) - _reachable(q)) ** 2).sum()
                     + ((_times_delay(p.beta, q) - X * w * _reachable(q)) ** 2).sum()
                     + ((p.gamma - X * instance.shifted_cost) ** 2).sum()), None

    fn = residual_fn or fixed_residual
    base = fixed_residual(params)[0]
    if base <= np.finfo(float).eps ** 2 * X.size:  # consistent up to round-off
        return params, 0.0, True, None
    for m in range(config.max_backtracks + 1):
        zeta = config.backtrack ** m
        trial = at(zeta)
        value, payload = fn(trial)
        if value <= (1 - config.sufficient_decrease * zeta) * base:
            return trial, zeta, True, payload
    warnings.warn("step-length search hit its cap", RuntimeWarning, stacklevel=2)
    return trial, zeta, False, payload


@dataclass
class _Run:
    params: ParamTriple
    inner: InnerSolution
    residual: float
    value: float
    converged: bool
    outer: int = 0
    inner_iterations: int = 0
    notes: list = field(default_factory=list)


def _damped_params(params: ParamTriple, inst: Instance, inner: InnerSolution, zeta: float) -> ParamTriple:
    q = inst.delay(inner.y)
    X = inner.X
    target = (1.0 / q, X * inst.rate_weight[:, None] / q, X * inst.shifted_cost)
    return ParamTriple(*((1 - zeta) * cur + zeta * tgt
                         for cur, tgt in zip((params.alpha, params.beta, params.gamma), target)))


def smoothing_schedule(config: SolverConfig) -> list:
    return _ladder(1e-2, config.smoothing)


def _relaxed_from(inst: Instance, params: ParamTriple, config: SolverConfig) -> _Run:
    """Outer loop on a normalised instance, starting from ``params``.

    The inner smoothing is tightened in stages, each warm-started from the
    previous stage's parameters. Within a stage the damped Newton step is
    used until its step-length search fails or only accepts steps shorter
    than ``backtrack**stall_backtracks``; the stage then continues with
    plain averaged steps of length ``damping``, which escape the two-cycles
    the Newton search cannot; the step is shortened whenever it fails to
    reduce the residual. The best relaxed value seen is kept in case the
    last stage does not converge.
    """
    K, N = inst.rate.shape
    tol = config.tol_outer * K * N
    mu = None
    best = None
    total_outer = 0
    total_inner = 0
    notes = []
    taus = smoothing_schedule(config) if config.inner_method == "newton" else [config.smoothing]
    for tau in taus:
        def settled(res, inner):
            if res >= tol:
                return False
            return tau != taus[-1] or residual_max(inst, params, inner.X, inner.y) <= config.tol_residual_max

        cfg = replace(config, smoothing=tau)
        search = replace(cfg, max_backtracks=min(config.max_backtracks, config.stall_backtracks))
        inner = solve_subtractive(inst, params, cfg, mu0=mu)
        total_inner += inner.iterations
        res = residual_norm(inst, params, inner.X, inner.y)
        damped = False
        step_len = config.damping
        stage_ok = settled(res, inner)
        for _ in range(config.max_outer):
            if stage_ok:
                break
            total_outer += 1
            prev = res
            if not damped:
                q = inst.delay(inner.y)

                def trial_residual(p, mu=inner.mu):
                    nonlocal total_inner
                    sol = solve_subtractive(inst, p, cfg, mu0=mu)
                    total_inner += sol.iterations
                    return residual_norm(inst, p, sol.X, sol.y), sol

                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    trial, zeta, ok, sol = newton_update(params, q, inner.X, inst, search, trial_residual)
                if ok:
                    params, inner = trial, sol
                if not ok or zeta < config.backtrack ** config.stall_backtracks:
                    damped = True
                    notes.append(f"Newton steps stalled at smoothing {tau:g}; switched to damped steps")
            if damped:
                params = _damped_params(params, inst, inner, step_len)
                inner = solve_subtractive(inst, params, cfg, mu0=inner.mu)
                total_inner += inner.iterations
            res = residual_norm(inst, params, inner.X, inner.y)
            if damped and res >= prev:
                step_len *= config.backtrack  # overshooting a steep tie; shorten
            stage_ok = settled(res, inner)
            if tau == taus[-1]:
                value = relaxed_value(inst, inner.X)
                if best is None or value > best.value:
                    best = _Run(params, inner, res, value, stage_ok)
        mu = inner.mu
    final = _Run(params, inner, res, relaxed_value(inst, inner.X), stage_ok)
    if not final.converged and best is not None and best.value > final.value:
        final = best
        notes.append("last stage did not converge; returning the best iterate seen")
    final.outer, final.inner_iterations, final.notes = total_outer, total_inner, notes
    return final


def relaxed_runs(instance: Instance, config: SolverConfig = SolverConfig(), starts=()) -> list:
    """One :class:`FractionalSolution` per starting point.

    The first start evaluates the consistency equations at the initial
    placement and uniform loads; each entry of ``starts`` is a K x N
    (possibly fractional) assignment used as a further starting point.
    """
    S = rate_scale(instance)
    inst = scaled(instance, S)
    K = instance.n_users
    points = [initial_params(inst)]
    for X in starts:
        X = np.asarray(X, dtype=float)
        points.append(initial_params(inst, X, X.sum(axis=0)))
    out = []
    for p0 in points:
        run = _relaxed_from(inst, p0, config)
        r1, r2, r3 = residuals(inst, run.params, run.inner.X, run.inner.y)
        X = run.inner.X
        out.append(FractionalSolution(
            X=X, y=X.sum(axis=0), upper_bound=run.value * S - K * instance.shift, residual=run.residual,
            residual_max=(float(np.abs(r1).max()), float(np.abs(r2).max()), float(np.abs(r3).max())),
            params=run.params, outer_iterations=run.outer, inner_iterations=run.inner_iterations,
            converged=run.converged, duality_gap=run.inner.duality_gap,
            constraint_violation=run.inner.constraint_violation, notes=run.notes))
    return out


def solve_relaxed(instance: Instance, config: SolverConfig = SolverConfig(), starts=()) -> FractionalSolution:
    """Relaxed optimum by the two-layer sum-of-ratios method; the run with
    the best relaxed objective over all starts wins."""
    runs = relaxed_runs(instance, config, starts)
    best = runs[0]
    for run in runs[1:]:
        if run.upper_bound > best.upper_bound + 1e-12 * abs(best.upper_bound):
            best = run
    best.outer_iterations = sum(r.outer_iterations for r in runs)
    best.inner_iterations = sum(r.inner_iterations for r in runs)
    return best
