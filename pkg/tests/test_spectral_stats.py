import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loscap.cli import random_integral_instance
from loscap.errors import InvalidArgument
from loscap.geometry import ClusterPair, make_cluster_pair
from loscap.spectral_stats import (
    DecayPoint, DecaySeries, PeriodicFunction, PiecewiseMonotone, decay_envelope,
    decay_regression, estimate_EQ, full_sample_mean, gamma_trace_moments,
    integral_bound_check, lln_convergence_check, normalized_channel, psi1_sum, q_sum,
    q_sum_bruteforce, q_term,
)

COS = PeriodicFunction(np.cos, 2 * math.pi)


def _q_direct(tx, rx, i, j, k, l, lam, L):
    # scalar re-evaluation of the defining formula
    d = lambda r, t: math.dist(rx[r], tx[t])
    a = lambda r, t: L / d(r, t)
    ph = d(i, k) - d(i, l) - d(j, k) + d(j, l)
    return a(i, k) * a(i, l) * a(j, k) * a(j, l) * math.cos(2 * math.pi * ph / lam)


# -- Q-terms -------------------------------------------------------------------
def test_q_term_mirror_symmetry_has_zero_phase():
    D, L = 1.0, 3.0
    tx = [[0.2, 0.5], [0.8, 0.5]]          # on the symmetry axis y = 1/2
    rx = [[3.3, 0.2], [3.3, 0.8]]          # mirror images
    pair = ClusterPair(D, L, tx, rx)
    q = q_term(pair, 0, 1, 0, 1, lam=0.0123)
    d = [[math.dist(r, t) for t in tx] for r in rx]
    prod = np.prod([L / x for row in d for x in row])
    assert q.value == pytest.approx(prod, rel=1e-12)


def test_q_term_matches_direct_formula():
    pair = make_cluster_pair(5, 1.0, 2.5, 8)
    for (i, j, k, l) in [(0, 1, 0, 1), (1, 4, 2, 3), (0, 3, 1, 4)]:
        got = q_term(pair, i, j, k, l, 0.037).value
        assert got == pytest.approx(_q_direct(pair.tx_points, pair.rx_points, i, j, k, l,
                                              0.037, 2.5), abs=1e-9)


def test_q_term_index_errors():
    pair = make_cluster_pair(3, 1.0, 2.0, 0)
    for idx in [(1, 0, 0, 1), (0, 1, 1, 1), (0, 3, 0, 1), (-1, 1, 0, 1)]:
        with pytest.raises(InvalidArgument):
            q_term(pair, *idx, lam=0.1)


@settings(max_examples=100)
@given(st.floats(2.0, 10.0), st.floats(1e-4, 1.0), st.integers(0, 2 ** 31), st.sampled_from([2.0, 3.0]))
def test_q_term_bounded_by_amax(L, lam, seed, alpha):
    pair = make_cluster_pair(2, 1.0, L, seed)
    amax = pair.amplitude_range(alpha)[1]
    assert abs(q_term(pair, 0, 1, 0, 1, lam, alpha).value) <= amax ** 4


# -- trace moments --------------------------------------------------------------
def test_gamma_moments_examples():
    assert gamma_trace_moments(np.eye(5)) == pytest.approx((1.0, 1.0))
    for N in (1, 3, 7):
        # all-ones: FF* = N J, so tr(FF*FF*) / N = N^3
        assert gamma_trace_moments(np.ones((N, N))) == pytest.approx((N, N ** 3))


def test_gamma_moments_match_eigenvalues():
    rng = np.random.default_rng(3)
    F = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    ev = np.linalg.eigvalsh(F @ F.conj().T)
    assert gamma_trace_moments(F) == pytest.approx((ev.mean(), np.mean(ev ** 2)), rel=1e-8)


@pytest.mark.parametrize("N,lam", [(2, 0.1), (6, 0.03), (12, 2 ** -7)])
def test_second_moment_decomposition(N, lam):
    pair = make_cluster_pair(N, 1.0, 2.0, N)
    F = normalized_channel(pair, lam)
    A = F @ F.conj().T
    total = np.vdot(A, A).real
    brute = q_sum_bruteforce(pair, lam)
    assert psi1_sum(F) + 4 * brute == pytest.approx(total, rel=1e-8)
    assert q_sum(F) == pytest.approx(brute, rel=1e-8, abs=1e-9)


def test_full_mean_with_two_nodes_is_the_q_term():
    pair = make_cluster_pair(2, 1.0, 2.0, 1)
    assert full_sample_mean(pair, 0.05) == pytest.approx(q_term(pair, 0, 1, 0, 1, 0.05).value)


# -- Monte Carlo ------------------------------------------------------------------
def test_single_trial_is_one_q_draw():
    D, L, lam, seed = 1.0, 2.0, 0.05, 17
    pt = estimate_EQ(D, L, lam, trials=1, seed=seed)
    rng = np.random.default_rng(seed)
    u = rng.uniform(0, D, (1, 1, 2))[0, 0]
    v = rng.uniform(0, D, (1, 1, 2))[0, 0]
    s = rng.uniform(0, D, (1, 2, 2))[0]
    s[:, 0] += L
    pair = ClusterPair(D, L, [u, v], s)
    assert pt.mean == pytest.approx(q_term(pair, 0, 1, 0, 1, lam).value, rel=1e-9)
    assert pt.trials == 1 and math.isinf(pt.half_width)


def test_long_wavelength_mean_close_to_amplitude_product():
    D, L = 1.0, 2.0
    pt = estimate_EQ(D, L, 100.0, trials=20_000, seed=0)
    amin = ClusterPair(D, L, [[0, 0]], [[L, 0]]).amplitude_range()[0]
    assert pt.M == 1.0
    assert pt.mean > 0.5 * amin ** 4


def test_half_width_is_normal_approximation():
    pt = estimate_EQ(1.0, 2.0, 0.1, trials=5000, seed=3)
    assert pt.half_width == pytest.approx(1.96 * pt.se)


def test_pooled_receivers_are_unbiased():
    a = estimate_EQ(1.0, 2.0, 2 ** -4, trials=100_000, seed=1)
    b = estimate_EQ(1.0, 2.0, 2 ** -4, trials=20_000, seed=2, receivers=32)
    assert abs(a.mean - b.mean) <= 3 * math.hypot(a.se, b.se)
    assert b.se < a.se


def test_two_receiver_estimator_is_noise_floored_at_small_wavelength():
    # the plain estimator cannot resolve E[Q] at the shortest wavelength of
    # the decay sweep: its standard error exceeds the quantity itself
    plain = estimate_EQ(1.0, 2.0, 2 ** -12, trials=100_000, seed=4)
    pooled = estimate_EQ(1.0, 2.0, 2 ** -12, trials=100_000, seed=5, receivers=64)
    assert plain.se > 2 * abs(pooled.mean)


def test_estimate_errors():
    with pytest.raises(InvalidArgument):
        estimate_EQ(1.0, 2.0, 0.1, trials=0)
    with pytest.raises(InvalidArgument):
        estimate_EQ(1.0, 1.5, 0.1, trials=10)
    with pytest.raises(InvalidArgument):
        estimate_EQ(1.0, 2.0, 0.1, trials=10, receivers=1)


def test_estimate_is_deterministic():
    a = estimate_EQ(1.0, 2.0, 0.01, trials=3000, seed=9, receivers=4)
    b = estimate_EQ(1.0, 2.0, 0.01, trials=3000, seed=9, receivers=4)
    assert a == b


def test_mean_nonincreasing_beyond_knee():
    pts = [estimate_EQ(1.0, 2.0, 2.0 ** -e, trials=20_000, seed=e, receivers=16)
           for e in range(3, 10)]
    for a, b in zip(pts, pts[1:]):
        assert b.mean <= a.mean + 3 * math.hypot(a.se, b.se)


# -- regression -----------------------------------------------------------------
def test_regression_synthetic_inverse():
    M = np.geomspace(2, 2000, 7)
    assert decay_regression((M, 0.3 / M)) == pytest.approx(-1.0)


def test_regression_synthetic_log_corrected():
    # the log correction keeps the slope inside (-1, -0.8) once M is large;
    # for M between 1e2 and 1e4 the fitted slope is -0.8653 (frozen)
    M = np.geomspace(1e2, 1e4, 9)
    slope = decay_regression((M, 0.3 * (1 + np.log2(M)) / M))
    assert -1 < slope < -0.8
    assert slope == pytest.approx(-0.8653, abs=5e-4)


def test_regression_preconditions():
    M = np.geomspace(2, 2000, 7)
    with pytest.raises(InvalidArgument):
        decay_regression((M[:4], 1 / M[:4]))
    with pytest.raises(InvalidArgument):
        decay_regression((np.geomspace(1, 1000, 6), np.ones(6)))
    with pytest.raises(InvalidArgument):
        decay_regression((np.geomspace(2, 100, 6), np.ones(6)))


def test_envelope():
    pts = tuple(DecayPoint(0.1, m, 1 / m, 0, 0, 1) for m in (2.0, 8.0))
    lo, hi = decay_envelope(DecaySeries(1, 2, 2, pts))
    assert lo == pytest.approx(1.0)
    assert hi == pytest.approx(3 * 4 / 2)


# -- LLN ------------------------------------------------------------------------
def test_lln_report_shapes_and_nesting():
    rep = lln_convergence_check([4, 8, 16], 1.0, 4.0, 0.1, seeds=[0, 1, 2], trials=2000,
                                mc_seed=0, receivers=8)
    assert rep.means.shape == (3, 3)
    assert rep.mean_abs_diff.shape == (2,)
    # prefix placement: the N=4 mean equals a direct computation on the first 4 nodes
    rng = np.random.default_rng(1)
    tx = rng.uniform(0, 1, (16, 2))
    rx = rng.uniform(0, 1, (16, 2))
    rx[:, 0] += 4.0
    direct = full_sample_mean(ClusterPair(1.0, 4.0, tx[:4], rx[:4]), 0.1)
    assert rep.means[1, 0] == pytest.approx(direct)


# -- periodic-integral bound ------------------------------------------------------
def test_integral_full_period_cancels():
    h = PiecewiseMonotone(lambda x: np.ones_like(np.asarray(x, dtype=float)), (0.0, 2 * math.pi))
    res = integral_bound_check(COS, h, 1.0, 0.0)
    assert res.lhs == pytest.approx(0.0, abs=1e-10)
    assert res.rhs == pytest.approx(math.pi)
    assert res.ok


def test_integral_linear_weight_against_antiderivative():
    k, c2 = 2 * math.pi, 0.7
    h = PiecewiseMonotone(lambda x: np.asarray(x, dtype=float), (0.0, 10.0))
    res = integral_bound_check(COS, h, k, c2)
    F = lambda x: x * math.sin(k * x + c2) / k + math.cos(k * x + c2) / k ** 2
    assert res.lhs == pytest.approx(abs(F(10.0) - F(0.0)), abs=1e-9)
    # windows of length 1/2 inside [0, 10]: best is [9.5, 10]
    assert res.rhs == pytest.approx((100 - 9.5 ** 2) / 2, rel=1e-6)
    assert res.ok


def test_integral_short_interval_uses_whole_interval():
    h = PiecewiseMonotone(lambda x: 1 + np.asarray(x, dtype=float), (0.0, 0.1))
    res = integral_bound_check(COS, h, 1.0, 0.3)
    assert res.rhs == pytest.approx(0.1 + 0.005)
    assert res.ok


def test_integral_rejects_bad_inputs():
    h = PiecewiseMonotone(lambda x: np.asarray(x, dtype=float), (0.0, 1.0))
    with pytest.raises(InvalidArgument):
        integral_bound_check(PeriodicFunction(lambda x: np.cos(x) ** 2, math.pi), h, 1.0)
    with pytest.raises(InvalidArgument):
        integral_bound_check(PeriodicFunction(lambda x: 2 * np.cos(x), 2 * math.pi), h, 1.0)
    with pytest.raises(InvalidArgument):
        integral_bound_check(COS, PiecewiseMonotone(lambda x: np.asarray(x) - 0.5, (0.0, 1.0)), 1.0)
    with pytest.raises(InvalidArgument):
        integral_bound_check(COS, PiecewiseMonotone(lambda x: np.sin(6 * np.asarray(x)) + 1,
                                                    (0.0, 2.0)), 1.0)
    with pytest.raises(InvalidArgument):
        integral_bound_check(COS, h, 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_integral_bound_random_admissible(seed):
    g, h, c1, c2 = random_integral_instance(np.random.default_rng(seed))
    res = integral_bound_check(g, h, c1, c2)
    assert res.ok, res
