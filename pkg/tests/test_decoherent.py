import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qswitch.arrivals import ArrivalModel, LoadProfile
from qswitch.capacity import LinkModel, dual_supergradient, max_scaling
from qswitch.decoherent import (
    SlotObservation, SlotPolicyState, checkpoint_slots, monte_carlo_drift, queue_recursion, run_decoherent,
    slot_step,
)
from qswitch.topology import build_topology


def test_step_serves_and_keeps_queue():
    t = build_topology(4)
    pol = SlotPolicyState(np.array([2.0, 0, 0, 0, 0, 0]))
    b = np.array([1, 0, 0, 0, 0, 0])
    y, nxt = slot_step(pol, SlotObservation(np.array([1, 1, 0, 0]), b), t)
    assert y.tolist() == [1, 0, 0, 0, 0, 0]
    assert nxt.lam.tolist() == [2, 0, 0, 0, 0, 0]
    assert nxt.k == 1


def test_step_from_zero_serves_nothing():
    t = build_topology(4)
    b = np.array([1, 0, 1, 0, 0, 1])
    y, nxt = slot_step(SlotPolicyState.initial(t), SlotObservation(np.ones(4, int), b), t)
    assert not y.any()
    np.testing.assert_array_equal(nxt.lam, b)
    np.testing.assert_array_equal(nxt.arrived, b)


def test_step_matching_example():
    t = build_topology(4)
    lam = np.array([3, 1, 1, 1, 1, 3.0])
    b = np.array([0, 1, 0, 0, 0, 0])
    y, nxt = slot_step(SlotPolicyState(lam), SlotObservation(np.ones(4, int), b), t)
    assert y.tolist() == [1, 0, 0, 0, 0, 1]
    np.testing.assert_array_equal(nxt.lam, np.maximum(lam + b - y, 0))


def test_zero_arrivals_zero_everything():
    t = build_topology(4)
    tr = run_decoherent(t, 0.8, ArrivalModel.for_topology(t, 0.0), 3000, 1, checkpoint=1000)
    assert not tr.sum_lambda_per_slot.any()
    assert not tr.served_total.any()


def test_checkpoints():
    assert checkpoint_slots(1000, 300).tolist() == [300, 600, 900, 1000]
    assert checkpoint_slots(0, 10).size == 0
    assert checkpoint_slots(5, 100).tolist() == [5]


def test_frozen_small_run():
    t = build_topology(4)
    tr = run_decoherent(t, 0.8, ArrivalModel.for_topology(t, 0.1), 1000, 0, checkpoint=250)
    assert tr.checkpoints.tolist() == [250, 500, 750, 1000]
    assert tr.sum_lambda.tolist() == [2, 1, 0, 0]
    assert tr.served_total.tolist() == [144, 295, 430, 587]
    np.testing.assert_allclose(tr.residual_sq, [6.4e-05, 4.0e-06, 0, 0], atol=1e-15)


def test_flat_region_at_load_point_eight():
    t = build_topology(6)
    p = LoadProfile("uniform", 0.8).probabilities(t)
    tr = run_decoherent(t, 0.8, ArrivalModel.for_topology(t, p), 50000, 0, checkpoint=10000)
    assert tr.sum_lambda.tolist() == [2, 1, 3, 0, 0]


@pytest.mark.parametrize("n,tau,load", [(3, 0.9, 0.5), (4, 0.7, 1.0), (5, [0.6, 0.7, 0.8, 0.9, 1.0], 1.4)])
def test_engines_agree(n, tau, load):
    t = build_topology(n)
    am = ArrivalModel.for_topology(t, LoadProfile("uniform", load).probabilities(t))
    a = run_decoherent(t, tau, am, 9000, 4, record=True, engine="numba")
    b = run_decoherent(t, tau, am, 9000, 4, record=True, engine="python")
    np.testing.assert_array_equal(a.services, b.services)
    np.testing.assert_array_equal(a.lambdas, b.lambdas)
    np.testing.assert_array_equal(a.residual_sq, b.residual_sq)


def test_multipliers_are_queues():
    t = build_topology(5)
    am = ArrivalModel.for_topology(t, LoadProfile("skewed", 1.8).probabilities(t))
    tr = run_decoherent(t, 0.75, am, 20000, 2, record=True)
    np.testing.assert_array_equal(tr.lambdas, queue_recursion(tr.arrivals, tr.services))
    assert (tr.lambdas >= 0).all()
    assert np.array_equal(tr.lambdas, np.round(tr.lambdas))


def test_step_size_scales_multipliers():
    t = build_topology(4)
    am = ArrivalModel.for_topology(t, 0.15)
    a = run_decoherent(t, 0.8, am, 3000, 5, alpha=1.0, record=True)
    h = run_decoherent(t, 0.8, am, 3000, 5, alpha=0.5, record=True)
    # the argmax is scale invariant, so lam(alpha) = alpha * lam(1)
    np.testing.assert_array_equal(h.services, a.services)
    np.testing.assert_array_equal(h.lambdas, 0.5 * a.lambdas)


def test_services_are_feasible_matchings():
    t = build_topology(5)
    am = ArrivalModel.for_topology(t, 0.2)
    tr = run_decoherent(t, 0.6, am, 5000, 8, record=True)
    bits = (tr.states[:, None] >> np.arange(5)) & 1
    load = tr.services @ t.incidence.T
    assert (load <= bits).all()


def test_residual_decays_inside_region():
    t = build_topology(4)
    u = np.ones(6) / 6
    rho = max_scaling(t, 0.8, u)
    am = ArrivalModel.for_topology(t, 0.8 * rho * u)
    res = np.zeros(3)
    for s in range(10):
        tr = run_decoherent(t, 0.8, am, 100_000, s, checkpoint=1000)
        idx = np.searchsorted(tr.checkpoints, [1000, 10_000, 100_000])
        res += tr.residual_sq[idx]
    assert res[0] >= res[1] >= res[2]


def test_drift_is_unbiased_at_large_sample():
    t = build_topology(4)
    model = LinkModel.uniform(4, 0.8)
    b = np.full(6, 0.12)
    am = ArrivalModel.for_topology(t, b)
    rng = np.random.default_rng(123)
    chi2 = 0.0
    for i in range(5):
        lam = np.round(rng.uniform(0, 5, size=6), 2)
        mean, se = monte_carlo_drift(t, model, am, lam, 1_000_000, seed=700 + i)
        chi2 += float((((mean - dual_supergradient(t, model, b, lam)) / se) ** 2).sum())
    # 30 degrees of freedom; 59.7 is the 99.9% quantile
    assert chi2 < 59.7


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.integers(0, 1), min_size=3, max_size=3), min_size=1, max_size=40),
       st.lists(st.lists(st.integers(0, 1), min_size=3, max_size=3), min_size=1, max_size=40))
def test_queue_recursion_nonnegative(arr, srv):
    k = min(len(arr), len(srv))
    Q = queue_recursion(np.array(arr[:k]), np.array(srv[:k]))
    assert (Q >= 0).all()
    q = np.zeros(3, int)
    for a, s in zip(arr[:k], srv[:k]):
        q = np.maximum(q + np.array(a) - np.array(s), 0)
    np.testing.assert_array_equal(Q[-1], q)


def test_negative_slots_rejected():
    t = build_topology(3)
    with pytest.raises(ValueError):
        run_decoherent(t, 0.8, ArrivalModel.for_topology(t, 0.1), -1, 0)
