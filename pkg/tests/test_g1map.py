"""Quadratic map g -> g - a_n g^2: trajectories, approximants, sector checks."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rg1d import g1map, oracle

DELTA = np.pi / 4.0


# ---------------------------------------------------------------------------
# elementary steps and the rational approximant
# ---------------------------------------------------------------------------


def test_single_step_value():
    assert g1map.quadratic_map_step(0.1, 0.25) == pytest.approx(0.1 - 0.25 * 0.01, abs=1e-16)


def test_approximant_real_closed_form():
    # g0 / (1 + g0 n A): 0.01 / (1 + 0.01 * 400 * 0.25) = 0.005
    assert g1map.approximant(0.01, 0.25, 400) == pytest.approx(0.005, abs=1e-15)


def test_approximant_complex_value():
    g0 = 0.01 * np.exp(1j * np.pi / 2.0)
    # denominator 1 + i: modulus sqrt 2, angle pi/4
    val = g1map.approximant(g0, 0.25, 400)
    expected = g0 / (1.0 + 1.0j)
    assert val == pytest.approx(expected, abs=1e-15)


def test_approximant_raises_near_zero_denominator():
    # g0 n A = -1 exactly
    with pytest.raises(ValueError):
        g1map.approximant(-0.01, 0.25, 400, delta=DELTA)


# ---------------------------------------------------------------------------
# deterministic trajectories (sigma = 0)
# ---------------------------------------------------------------------------


def test_real_trajectory_monotone_and_asymptotics():
    a = 0.25
    state = g1map.iterate(0.1, a, 20000)
    g = state.trajectory
    assert np.all(g.real > 0.0)
    assert np.all(np.diff(g.real) < 0.0)
    assert np.max(np.abs(g.imag)) == 0.0
    # n g_n -> 1/a (rate log n / n)
    n = len(g) - 1
    assert n * g[-1].real == pytest.approx(1.0 / a, rel=5e-3)


def test_trajectory_matches_approximant_closely():
    state = g1map.iterate(0.01, 0.25, 100000, g1map.SectorDomain(0.015, DELTA))
    rep = g1map.verify_closeness(state)
    assert rep.ok
    assert rep.worst_margin <= 0.0


def test_square_sum_near_quadrature():
    a = 0.25
    state = g1map.iterate(0.05, a, 50000)
    direct = np.sum(np.abs(state.trajectory[:-1]) ** 2)
    est = g1map.square_sum_estimate(0.05, a, 50000)
    assert direct == pytest.approx(est, rel=0.1)


def test_escape_for_negative_coupling():
    # the negative real axis lies outside the sector: immediate escape
    dom = g1map.SectorDomain(0.015, DELTA)
    state = g1map.iterate(-0.01, 0.25, 1000, dom)
    assert state.escape_index == 0
    # the raw map runs away monotonically on the negative axis
    g = [-0.01]
    for _ in range(390):
        g.append(g1map.quadratic_map_step(g[-1], 0.25))
    g = np.array(g)
    assert np.all(np.diff(g) < 0.0)
    assert abs(g[-1]) > 10.0 * abs(g[0])


# ---------------------------------------------------------------------------
# sector geometry
# ---------------------------------------------------------------------------


def test_domain_membership_and_enlargements():
    dom = g1map.SectorDomain(1e-2, DELTA)
    assert dom.contains(5e-3 * np.exp(1j * (np.pi - DELTA)))
    assert not dom.contains(5e-3 * np.exp(1j * (np.pi - DELTA / 2.0)))
    assert not dom.contains(2e-2)
    big = dom.trajectory_enlargement()
    assert big.epsilon == pytest.approx(3e-2 / np.sin(DELTA))
    assert big.delta == pytest.approx(DELTA / 4.0)
    mid = dom.approximant_enlargement()
    assert mid.epsilon == pytest.approx(2e-2 / np.sin(DELTA))
    assert mid.delta == pytest.approx(DELTA / 2.0)


def test_boundary_ray_stays_in_enlarged_sector():
    g0 = 0.01 * np.exp(1j * 3.0 * np.pi / 4.0)
    dom = g1map.SectorDomain(0.015, DELTA)
    state = g1map.iterate(g0, 0.25, 10000, dom)
    assert state.escape_index is None
    rep = g1map.verify_sector(state)
    assert rep.ok
    # arguments relax toward the positive axis along the trajectory
    args = np.abs(np.angle(state.trajectory))
    assert args[-1] < args[0]


def test_denominator_bound_on_boundary_ray():
    g0 = 0.01 * np.exp(1j * (np.pi - DELTA))
    dom = g1map.SectorDomain(0.015, DELTA)
    state = g1map.iterate(g0, 0.25, 10000, dom)
    rep = g1map.verify_denominator_bound(state)
    assert rep.ok


# ---------------------------------------------------------------------------
# sigma models and the sweep
# ---------------------------------------------------------------------------


def test_sigma_sequences_bounded_and_reproducible():
    for m in g1map.SIGMA_MODELS:
        s1 = g1map.sigma_sequence(m, 1000, 0.05, seed=3)
        s2 = g1map.sigma_sequence(m, 1000, 0.05, seed=3)
        assert np.array_equal(s1, s2)
        assert np.max(np.abs(s1)) <= 0.05 + 1e-15
    assert np.all(g1map.sigma_sequence("zero", 100, 0.05) == 0.0)


def test_small_sweep_all_pass():
    rep = g1map.sweep_sector(DELTA, 1e-2, n_rays=8, n_radii=3, n_steps=2000, seed=0)
    assert rep.all_pass
    assert rep.containment_fraction == 1.0
    assert rep.closeness_fraction == 1.0
    assert len(rep.lanes) == 8 * 3 * len(g1map.SIGMA_MODELS)


def test_sweep_deterministic():
    r1 = g1map.sweep_sector(DELTA, 1e-2, n_rays=4, n_radii=2, n_steps=500, seed=5)
    r2 = g1map.sweep_sector(DELTA, 1e-2, n_rays=4, n_radii=2, n_steps=500, seed=5)
    for l1, l2 in zip(r1.lanes, r2.lanes):
        assert l1.g0 == l2.g0
        assert l1.max_ratio == l2.max_ratio


@given(st.floats(0.002, 0.012), st.integers(0, 7))
def test_closeness_bound_random_rays(r, k):
    # property: |g_n - gtilde_n| <= |gtilde_n|^{3/2} holds inside the sector
    ang = (np.pi - DELTA) * (2.0 * (k / 7.0) - 1.0)
    g0 = r * np.exp(1j * ang)
    state = g1map.iterate(g0, 0.25, 3000, g1map.SectorDomain(0.015, DELTA))
    if state.escape_index is None:
        rep = g1map.verify_closeness(state)
        assert rep.ok


# ---------------------------------------------------------------------------
# independent high-precision check
# ---------------------------------------------------------------------------


def test_against_multiprecision_oracle():
    g0 = 0.01 * np.exp(1j * 2.0)
    a = 0.25
    n = 400
    traj_mp, final = oracle.mp_map_trajectory(g0, a, n)
    state = g1map.iterate(g0, a, n)
    assert np.max(np.abs(traj_mp - state.trajectory)) < 1e-14
    assert final.error < 1e-12
    assert final.value == pytest.approx(abs(state.trajectory[-1]), abs=1e-13)


def test_trajectory_rows_layout():
    state = g1map.iterate(0.01, 0.25, 50, g1map.SectorDomain(0.015, DELTA))
    rows = g1map.trajectory_rows(state)
    assert len(rows) == 51
    n, re_g, im_g, re_gt, im_gt, err, bound = rows[10]
    assert n == 10
    assert re_g == pytest.approx(state.trajectory[10].real)
    # err column is |g - gtilde|, bound is |gtilde|^{3/2}
    gt = g1map.approximant(0.01, state.A[10], 10)
    assert re_gt == pytest.approx(gt.real)
    assert err <= bound
