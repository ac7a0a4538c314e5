import numpy as np
import pytest
from hypothesis import given, strategies as st

from jmh.model import (Assignment, ComputeParams, CostParams, FeasibilityError, Instance, RateParams,
                       computation_rate, degraded_rate, evaluate, offloading_rate, relaxed_value,
                       uplink_rate)
from jmh.oracles import exhaustive_assignment

from conftest import random_instance


def test_uplink_rate_single_user_unit_snr_is_bandwidth():
    p = RateParams(20e6, [1.0], [1.0], [[1.0]])
    assert uplink_rate(p, 0, 0) == pytest.approx(20e6, rel=1e-15)


def test_uplink_rate_zero_gain_is_zero():
    p = RateParams(1e6, [1.0, 1.0], [1e-3], [[0.0], [0.5]])
    assert uplink_rate(p, 0, 0) == 0.0


def test_uplink_rate_symmetric_users_equal():
    p = RateParams(1e6, [0.1, 0.1], [1e-9, 1e-9], [[1e-8, 2e-9], [1e-8, 2e-9]])
    assert uplink_rate(p, 0, 0) == uplink_rate(p, 1, 0)
    assert uplink_rate(p, 0, 1) == uplink_rate(p, 1, 1)


def test_uplink_rate_counts_every_other_user_as_interference():
    g = np.array([[1.0, 0.2], [0.5, 0.3], [0.1, 0.9]])
    p = RateParams(2.0, [1.0, 2.0, 3.0], [0.1, 0.2], g)
    rx = np.array([1.0, 2.0, 3.0])[:, None] * g
    sinr = rx[1, 0] / (0.1 + rx[0, 0] + rx[2, 0])
    assert uplink_rate(p, 1, 0) == pytest.approx(2.0 * np.log2(1 + sinr), rel=1e-14)


@pytest.mark.parametrize("load,expected", [(1, 1.0), (2, 0.8), (3, 0.64)])
def test_computation_rate_degrades_geometrically(load, expected):
    params = ComputeParams([[1.0]], [0.25], [5])
    assert computation_rate(params, 0, 0, load) == pytest.approx(expected, rel=1e-15)


def test_computation_rate_rejects_empty_and_overfull_loads():
    params = ComputeParams([[1.0]], [0.25], [2])
    with pytest.raises(ValueError):
        computation_rate(params, 0, 0, 0)
    with pytest.raises(ValueError):
        computation_rate(params, 0, 0, 3)
    with pytest.raises(ValueError):
        degraded_rate(1.0, 0.25, 0)


@pytest.mark.parametrize("r,F,expected", [(2, 2, 1), (3, 6, 2), (0, 5, 0), (5, 0, 0)])
def test_offloading_rate_examples(r, F, expected):
    assert offloading_rate(r, F) == pytest.approx(expected, rel=1e-15)


def test_offloading_rate_tends_to_compute_rate_for_huge_uplink():
    assert offloading_rate(1e300, 7.0) == pytest.approx(7.0, rel=1e-12)


@given(st.floats(1e3, 1e9), st.floats(1e3, 1e9), st.floats(0.01, 2.0), st.integers(1, 40))
def test_offloading_rate_bounded_and_decreasing_in_load(r, f, d, load):
    F = degraded_rate(f, d, load)
    R = offloading_rate(r, F)
    assert R <= min(r, F) * (1 + 1e-12)
    assert offloading_rate(r, degraded_rate(f, d, load + 1)) < R


def test_cost_params_collapse_and_diagonal():
    x0 = np.array([[1, 0], [0, 1]])
    raw = np.zeros((2, 2, 2))
    raw[0, 0, 1] = 3.0
    raw[1, 1, 0] = 4.0
    c = CostParams(x0, raw, 0.5, [1.0, 1.0])
    assert c.collapsed_cost.tolist() == [[0.0, 3.0], [4.0, 0.0]]
    assert c.total_cost(x0) == 0.0
    raw[0, 1, 1] = 1.0
    with pytest.raises(ValueError):
        CostParams(x0, raw, 0.5, [1.0, 1.0])


def test_instance_shift_makes_shifted_cost_non_negative(rng):
    inst = random_instance(rng, 5, 3)
    assert inst.shift == pytest.approx(inst.weighted_cost.max())
    assert (inst.shifted_cost >= 0).all()


def test_evaluate_initial_assignment_has_zero_cost(rng):
    inst = random_instance(rng, 6, 3)
    obj = evaluate(inst, Assignment(inst.initial, 3))
    assert obj.total_cost == 0.0
    assert obj.utility == obj.sum_rate


def test_evaluate_lambda_zero_equals_sum_rate_and_ignores_costs(rng):
    inst = random_instance(rng, 5, 3, cost_weight=0.0)
    a = Assignment(rng.integers(0, 3, size=5), 3)
    obj = evaluate(inst, a)
    assert obj.utility == obj.sum_rate
    other = inst.replace(cost=inst.cost * 7 + 1)
    assert evaluate(other, a).utility == obj.utility


def test_evaluate_matches_hand_computation_on_two_users():
    inst = Instance(rate=[[4.0, 1.0], [2.0, 8.0]], isolation_rate=[[4.0, 2.0], [2.0, 8.0]], degradation=[1.0, 0.5],
                    vm_cap=2, cost=[[0.0, 1.0], [3.0, 0.0]], cost_weight=0.5, rate_weight=[1.0, 2.0], initial=[0, 1])
    # both on BS 0: load 2 halves F
    both0 = evaluate(inst, Assignment([0, 0], 2))
    expected = 1 / (1 / 4 + 2 / 4) + 2 / (1 / 2 + 2 / 2) - 0.5 * 3.0
    assert both0.utility == pytest.approx(expected, rel=1e-14)
    split = evaluate(inst, Assignment([0, 1], 2))
    assert split.utility == pytest.approx(1 / (1 / 4 + 1 / 4) + 2 / (1 / 8 + 1 / 8), rel=1e-14)
    values = [evaluate(inst, Assignment([a, b], 2)).utility for a in range(2) for b in range(2)]
    assert exhaustive_assignment(inst)[1] == pytest.approx(max(values), rel=1e-14)


def test_evaluate_rejects_broken_caps_and_rows():
    inst = Instance(rate=np.ones((3, 2)), isolation_rate=np.ones((3, 2)), degradation=0.25, vm_cap=[1, 2],
                    cost=np.zeros((3, 2)), cost_weight=0.5, rate_weight=1.0, initial=[0, 1, 1])
    with pytest.raises(FeasibilityError) as err:
        evaluate(inst, Assignment([0, 0, 1], 2))
    assert err.value.constraint == "vm_cap"
    with pytest.raises(FeasibilityError) as err:
        evaluate(inst, np.array([[1, 1], [0, 1], [0, 1]]))
    assert err.value.constraint == "one_bs_per_user"
    with pytest.raises(FeasibilityError) as err:
        Assignment.from_matrix(np.array([[0.5, 0.5], [0, 1], [0, 1]]))
    assert err.value.constraint == "binary"


def test_instance_rejects_insufficient_capacity():
    with pytest.raises(ValueError):
        Instance(rate=np.ones((3, 2)), isolation_rate=np.ones((3, 2)), degradation=0.25, vm_cap=1,
                 cost=np.zeros((3, 2)), cost_weight=0.5, rate_weight=1.0, initial=[0, 1, 1])


def test_shifted_relaxed_value_is_utility_plus_k_times_shift(rng):
    inst = random_instance(rng, 6, 3)
    for _ in range(5):
        a = Assignment(rng.integers(0, 3, size=6), 3)
        assert relaxed_value(inst, a.matrix) == pytest.approx(evaluate(inst, a).utility + 6 * inst.shift, rel=1e-12)
