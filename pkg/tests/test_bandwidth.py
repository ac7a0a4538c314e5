from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jmh.bandwidth import (BandwidthInstance, RbAllocation, b_star_of_nu, optimal_bandwidth, priced_utilities,
                           rb_split_closed_form, recover_bw_integer, solve_bw_relaxed, water_fill)
from jmh.lap import hungarian
from jmh.model import Assignment
from jmh.oracles import exhaustive_bandwidth
from jmh.scenario import ScenarioConfig, generate


def small_bw(seed, K=4, N=2):
    return BandwidthInstance.from_scenario(generate(ScenarioConfig(n_bs=N, n_users=K, trials=1), seed))


def member_value(omega, eta, F, b):
    return omega / (1 / (b * eta) + 1 / F) if b > 0 else 0.0


# ---------------------------------------------------------------- closed forms

def test_split_single_user_takes_band():
    assert rb_split_closed_form([2.0], [3.0], [5.0], 10.0).tolist() == [10.0]


def test_split_equal_terms_halve():
    assert rb_split_closed_form([1.0, 1.0], [2.0, 2.0], [3.0, 3.0], 8.0).tolist() == [4.0, 4.0]


def test_split_square_root_law():
    b = rb_split_closed_form([4.0, 1.0], [1.0, 1.0], [1.0, 1.0], 3.0)
    assert b.tolist() == pytest.approx([2.0, 1.0])


def test_split_all_zero_is_uniform():
    assert rb_split_closed_form([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0], 6.0).tolist() == [2.0] * 3


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=8), st.floats(1e-2, 1e8))
def test_split_saturates_budget(terms, budget):
    t = np.array(terms)
    b = rb_split_closed_form(t, t[::-1], np.ones_like(t), budget)
    assert b.sum() == pytest.approx(budget, rel=1e-12)


def test_b_star_boundaries():
    assert b_star_of_nu(1.0, 1e12, 2.0, 1.0, 0.3, 1) == 0.0
    # sqrt(omega/(nu eta)) = 1/eta exactly when nu = omega*eta
    assert b_star_of_nu(3.0, 6.0, 2.0, 1.0, 0.3, 1) == 0.0
    with pytest.raises(ValueError):
        b_star_of_nu(1.0, 0.0, 2.0, 1.0, 0.3, 1)


def test_b_star_unit_example():
    # omega=1, nu=1, eta=2, F=1: argmax of 1/(1/(2b)+1) - b is sqrt(1/2) - 1/2
    b = b_star_of_nu(1.0, 1.0, 2.0, 1.0, 0.3, 1)
    assert b == pytest.approx(np.sqrt(0.5) - 0.5, rel=1e-12)
    grid = np.linspace(1e-9, 2, 2000001)
    assert b == pytest.approx(grid[np.argmax(1 / (1 / (2 * grid) + 1) - grid)], abs=2e-6)


@given(st.floats(0.1, 10), st.floats(1e-3, 1e3), st.floats(0.5, 20), st.floats(1e5, 1e8),
       st.floats(0.1, 0.5), st.integers(1, 10))
def test_b_star_is_argmax(omega, nu_rel, eta, f, d, load):
    nu = nu_rel * omega * eta / 1e3 * 1.0
    F = f / (1 + d) ** (load - 1)
    b = float(b_star_of_nu(omega, nu, eta, f, d, load))
    value = member_value(omega, eta, F, b) - nu * b
    for trial in (b * 0.999, b * 1.001, b + F * 1e-3, max(b - F * 1e-3, 0.0), 0.0):
        assert member_value(omega, eta, F, trial) - nu * trial <= value + 1e-9 * max(1.0, abs(value))


def test_priced_utilities_fall_with_price():
    inst = small_bw(0)
    loads = np.array([2, 2])
    prev = None
    for nu in np.geomspace(1e-3, 1e3, 40):
        U, _ = priced_utilities(inst, loads, np.full(2, nu))
        if prev is not None:
            assert (U <= prev + 1e-9 * np.abs(prev).max()).all()
        prev = U


def test_priced_lap_matches_brute_force():
    inst = small_bw(3, K=6, N=3)
    loads = np.array([2, 2, 2])
    U, _ = priced_utilities(inst, loads, np.array([5.0, 1.0, 20.0]))
    cols = U[:, np.repeat(np.arange(3), loads)]
    perm = hungarian(cols)
    best = max(U[np.arange(6), bs].sum() for bs in product(range(3), repeat=6)
               if (np.bincount(bs, minlength=3) == loads).all())
    assert cols[np.arange(6), perm].sum() == pytest.approx(best, rel=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_water_fill_matches_grid(seed):
    rng = np.random.default_rng(seed)
    omega, eta, F = rng.uniform(0.5, 2, 2), rng.uniform(1, 10, 2), rng.uniform(1e6, 1e7, 2)
    budget = 1e6
    b = water_fill(omega, eta, F, budget)
    assert b.sum() == pytest.approx(budget, rel=1e-9)
    split = np.linspace(0, budget, 200001)
    values = [member_value(omega[0], eta[0], F[0], s) + member_value(omega[1], eta[1], F[1], budget - s)
              for s in split]
    got = member_value(omega[0], eta[0], F[0], b[0]) + member_value(omega[1], eta[1], F[1], b[1])
    assert got >= max(values) - 1e-9 * max(values)


def test_optimal_bandwidth_is_feasible():
    inst = small_bw(1, K=6, N=3)
    a = Assignment(np.array([0, 0, 1, 2, 2, 2]), 3)
    alloc = optimal_bandwidth(inst, a)
    alloc.check(a, inst.rb_budget)
    assert alloc.used(a) == pytest.approx(inst.rb_budget, rel=1e-9)
    with pytest.raises(ValueError):
        RbAllocation(alloc.b * 2).check(a, inst.rb_budget)


# ---------------------------------------------------------------- relaxed solve and recovery

def test_single_bs_relaxed():
    inst = small_bw(2, K=3, N=1)
    sol = solve_bw_relaxed(inst)
    assert sol.fractional.y.tolist() == pytest.approx([3.0])
    assert sol.allocation.b.sum() == pytest.approx(inst.rb_budget[0], rel=1e-6)


def test_relaxed_value_grows_with_budget():
    inst = small_bw(5)
    values = []
    for factor in (0.5, 1.0, 2.0, 4.0):
        bigger = BandwidthInstance(inst.efficiency, inst.rb_budget * factor, inst.isolation_rate, inst.degradation,
                                   inst.vm_cap, inst.cost, inst.cost_weight, inst.rate_weight, inst.initial)
        values.append(solve_bw_relaxed(bigger).fractional.upper_bound)
    assert all(b >= a - 1e-9 * abs(a) for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("seed", range(6))
def test_bandwidth_pipeline_against_enumeration(seed):
    inst = small_bw(seed)
    sol = solve_bw_relaxed(inst)
    assignment, alloc, report = recover_bw_integer(inst, sol.fractional)
    alloc.check(assignment, inst.rb_budget)
    assert (assignment.loads <= inst.vm_cap).all()
    assert report.utility <= report.dual_bound + 1e-9 * abs(report.dual_bound)
    assert report.utility == pytest.approx(inst.value(assignment, alloc.b), rel=1e-12)
    _, _, best = exhaustive_bandwidth(inst)
    assert report.utility >= best - 0.05 * abs(best)
    assert sol.fractional.upper_bound >= best - 1e-9 * abs(best)


def test_instance_validation():
    with pytest.raises(ValueError):
        BandwidthInstance(np.zeros((2, 2)), 1.0, np.ones((2, 2)), 0.3, 2, np.zeros((2, 2)), 0.5, 1.0, [0, 1])
    with pytest.raises(ValueError):
        BandwidthInstance(np.ones((2, 2)), 0.0, np.ones((2, 2)), 0.3, 2, np.zeros((2, 2)), 0.5, 1.0, [0, 1])
