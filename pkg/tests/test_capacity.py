import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qswitch.capacity import (
    BOUNDARY, INSIDE, OUTSIDE, LinkModel, boundary_scaling, capacity_membership, dual_supergradient,
    dual_value, max_scaling, pdga_run, state_distribution,
)
from qswitch.experiments import trace_slope
from qswitch.topology import build_topology


def test_state_distribution_examples():
    d = state_distribution(LinkModel.uniform(6, 0.8))
    assert d.prob[-1] == pytest.approx(0.262144, abs=1e-15)
    assert d.prob.sum() == pytest.approx(1.0, abs=1e-12)
    d2 = state_distribution(LinkModel(np.array([0.5, 0.8])))
    # mask bit j is client j: masks 0, 1, 2, 3 are (0,0), (1,0), (0,1), (1,1)
    np.testing.assert_allclose(d2.prob, [0.1, 0.1, 0.4, 0.4], atol=1e-15)
    d3 = state_distribution(LinkModel.uniform(3, 1.0))
    assert d3.prob[-1] == 1.0 and d3.prob[:-1].sum() == 0.0


@pytest.mark.parametrize("tau", [[1.2], [-0.1], [np.nan]])
def test_bad_link_model(tau):
    with pytest.raises(ValueError):
        LinkModel(np.array(tau))


@pytest.mark.parametrize("n,tau,b,verdict", [
    (2, (1.0, 1.0), [0.9], INSIDE),
    (2, (0.5, 0.8), [0.41], OUTSIDE),
    (2, (0.5, 0.8), [0.39], INSIDE),
    (2, (0.5, 0.8), [0.4], BOUNDARY),
    (3, (1.0, 1.0, 1.0), [0.4] * 3, OUTSIDE),
    (3, (1.0, 1.0, 1.0), [0.3] * 3, INSIDE),
    (3, (1.0, 1.0, 1.0), [1 / 3] * 3, BOUNDARY),
])
def test_membership_examples(n, tau, b, verdict):
    res = capacity_membership(build_topology(n), LinkModel(np.array(tau)), b)
    assert res.verdict == verdict


def test_certificate_serves_b():
    topo = build_topology(4)
    b = np.array([0.05, 0.1, 0.02, 0.08, 0.1, 0.05])
    res = capacity_membership(topo, LinkModel.uniform(4, 0.8), b)
    assert res.verdict == INSIDE
    cert = res.certificate
    assert (cert.served() >= b - 1e-8).all()
    for w in cert.weights:
        assert (w >= -1e-12).all() and w.sum() == pytest.approx(1.0, abs=1e-8)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        capacity_membership(build_topology(3), 0.9, [0.1, 0.1])


def test_boundary_scaling_examples():
    assert boundary_scaling(build_topology(2), LinkModel(np.array([0.5, 0.8])), [1.0]) == pytest.approx(0.4, abs=1e-6)
    t3 = build_topology(3)
    assert boundary_scaling(t3, 1.0, np.ones(3) / 3) == pytest.approx(1.0, abs=1e-6)
    r1 = boundary_scaling(t3, 0.7, [1, 2, 3])
    r2 = boundary_scaling(t3, 0.7, [2, 4, 6])
    assert r2 == pytest.approx(r1 / 2, abs=1e-6)
    with pytest.raises(ValueError):
        boundary_scaling(t3, 0.7, [0, 0, 0])


def test_max_scaling_agrees_with_bisection():
    t = build_topology(4)
    u = np.array([1, 2, 1, 1, 3, 1.0])
    assert max_scaling(t, 0.8, u) == pytest.approx(boundary_scaling(t, 0.8, u), abs=2e-6)


def test_six_client_uniform_boundary_is_frozen():
    # total load (sum of rates) at the capacity boundary, N=6, tau=0.8
    t = build_topology(6)
    rho = max_scaling(t, 0.8, np.ones(15) / 15)
    assert rho == pytest.approx(2.161664, abs=1e-6)


def test_permutation_invariance():
    rng = np.random.default_rng(3)
    t = build_topology(4)
    for _ in range(10):
        tau = rng.uniform(0.4, 1, size=4)
        b = rng.uniform(0, 0.2, size=6)
        perm = rng.permutation(4)
        pb = np.zeros(6)
        for e, (i, j) in enumerate(t.pairs):
            pb[t.index_of(int(np.argwhere(perm == i)[0, 0]), int(np.argwhere(perm == j)[0, 0]))] = b[e]
        # client perm[k] becomes client k
        r1 = capacity_membership(t, LinkModel(tau), b)
        r2 = capacity_membership(t, LinkModel(tau[perm]), pb)
        assert r1.verdict == r2.verdict
        assert r1.margin == pytest.approx(r2.margin, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 0.3), min_size=6, max_size=6), st.floats(0, 1))
def test_monotone_in_b(b, shrink):
    t = build_topology(4)
    b = np.array(b)
    r = capacity_membership(t, 0.85, b)
    if r.verdict != OUTSIDE:
        assert capacity_membership(t, 0.85, b * shrink).verdict != OUTSIDE


def test_dual_examples():
    t2 = build_topology(2)
    assert dual_value(t2, 1.0, [0.5], [2.0]) == pytest.approx(0.0)
    assert dual_supergradient(t2, 1.0, [0.5], [1.0]).tolist() == [-0.5]
    t4 = build_topology(4)
    b = np.full(6, 0.1)
    assert dual_value(t4, 0.8, b, np.zeros(6)) == 1.0
    np.testing.assert_array_equal(dual_supergradient(t4, 0.8, b, np.zeros(6)), b)
    np.testing.assert_array_equal(dual_supergradient(t4, 0.0, b, np.ones(6) * 4), b)


def test_negative_multiplier_rejected():
    with pytest.raises(ValueError):
        dual_value(build_topology(2), 1.0, [0.5], [-1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=6, max_size=6), st.lists(st.floats(0, 10), min_size=6, max_size=6))
def test_supergradient_inequality(lam, mu):
    t = build_topology(4)
    b = np.array([0.1, 0.2, 0.05, 0.0, 0.1, 0.15])
    lam, mu = np.array(lam), np.array(mu)
    g = dual_supergradient(t, 0.7, b, lam)
    assert dual_value(t, 0.7, b, mu) <= dual_value(t, 0.7, b, lam) + g @ (mu - lam) + 1e-9


def test_pdga_zero_rates_stay_at_zero():
    res = pdga_run(build_topology(3), 0.8, np.zeros(3), 0.5, 50)
    assert not res.lambdas.any()
    assert (res.values == 1.0).all()


def test_pdga_inside_bounded_outside_grows():
    t = build_topology(4)
    u = np.ones(6) / 6
    rho = max_scaling(t, 0.8, u)
    inside = pdga_run(t, 0.8, 0.9 * rho * u, 1.0, 10_000)
    assert inside.sums.max() < 10
    outside = pdga_run(t, 0.8, 1.1 * rho * u, 1.0, 2_000)
    k = np.arange(outside.sums.size)
    assert trace_slope(k[1000:], outside.sums[1000:]) > 0.5 * (0.1 * rho)


def test_pdga_plateau_stop():
    # on the boundary one step lands on a multiplier where the gradient vanishes
    t = build_topology(2)
    res = pdga_run(t, 1.0, [1.0], 0.5, 5000, plateau=True)
    assert res.lambdas[-1].tolist() == [0.5]
    assert res.stopped_on_plateau
    assert res.lambdas.shape[0] < 5001
    with pytest.raises(ValueError):
        pdga_run(t, 1.0, [0.5], 0.0, 10)
