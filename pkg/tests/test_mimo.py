import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loscap.channel import NetworkConfig, channel_matrix
from loscap.errors import InvalidArgument
from loscap.geometry import ClusterGrid, make_cluster_pair
from loscap.mimo import (
    DELTA_GRID, InterferenceModel, best_bound, corollary_delta, dof_limit_M, eigen_summary,
    embedded_interference, interference_covariance, mimo_instance, mutual_information_gaussian,
    paley_zygmund_lower, random_psd, rho_moments, theorem2_bound, trace_sq_inequality,
    trace_summary,
)


def _logdet_oracle(H, S, P):
    # eigenvalue route, independent of the Cholesky implementation
    N = H.shape[0]
    a = np.linalg.eigvalsh(np.eye(N) + S + P * H @ H.conj().T)
    b = np.linalg.eigvalsh(np.eye(N) + S)
    return float(np.sum(np.log2(a)) - np.sum(np.log2(b)))


# -- mutual information ------------------------------------------------------
def test_mi_scalar_examples():
    assert mutual_information_gaussian(np.zeros((3, 3)), None, 1.0) == 0.0
    assert mutual_information_gaussian([[1.0]], [[0.0]], 1.0) == pytest.approx(1.0)
    assert mutual_information_gaussian([[1.0]], [[1.0]], 1.0) == pytest.approx(math.log2(1.5))


def test_mi_matches_eigen_oracle():
    rng = np.random.default_rng(1)
    for N in (2, 5, 9):
        H = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
        S = random_psd(N, 0.7, rng)
        assert mutual_information_gaussian(H, S, 2.0) == pytest.approx(
            _logdet_oracle(H, S, 2.0), rel=1e-10)


def test_mi_errors():
    with pytest.raises(InvalidArgument):
        mutual_information_gaussian(np.eye(2), np.eye(3), 1.0)
    with pytest.raises(InvalidArgument):
        mutual_information_gaussian(np.eye(2), -np.eye(2), 1.0)
    with pytest.raises(InvalidArgument):
        mutual_information_gaussian(np.eye(2), [[0, 1], [0, 0]], 1.0)


# -- DoF quantity -------------------------------------------------------------
def test_dof_examples():
    assert dof_limit_M(1, 2, 1) == 1.0
    assert dof_limit_M(1, 2, 1 / 8) == pytest.approx(4 / 3)
    assert dof_limit_M(1, 2, 1 / 4) == 1.0
    with pytest.raises(InvalidArgument):
        dof_limit_M(1, 1.5, 0.1)
    with pytest.raises(InvalidArgument):
        dof_limit_M(1, 2, 0)


# -- rho moments --------------------------------------------------------------
def test_rho_examples():
    assert rho_moments(np.zeros((4, 4)), 4, 2, 1, 1) == (0.0, 0.0)
    for N in (1, 3, 8):
        assert rho_moments(np.eye(N), N, 2, 1, 1) == pytest.approx((4.0, 16.0))
    S = random_psd(5, 1.0, np.random.default_rng(0))
    r1, r2 = rho_moments(S, 5, 3, 0.5, 2)
    c1, c2 = rho_moments(2.5 * S, 5, 3, 0.5, 2)
    assert (c1, c2) == pytest.approx((2.5 * r1, 6.25 * r2))
    with pytest.raises(InvalidArgument):
        rho_moments(np.eye(3), 4, 1, 1, 1)


def test_interference_model_recomputes_moments():
    S = random_psd(6, 0.3, np.random.default_rng(2))
    m = InterferenceModel.from_sigma(S, 2.0, 1.0, 1.0)
    assert (m.rho1, m.rho2) == pytest.approx(rho_moments(S, 6, 2.0, 1.0, 1.0))
    assert not m.sigma.flags.writeable


# -- eigen summary and bound ---------------------------------------------------
def _instance(N=16, L=2.0, lam=2 ** -5, kind="random", seed=0):
    return mimo_instance(N, 1.0, L, lam, kind, rng=np.random.default_rng(seed))


def test_eigen_summary_invariants():
    for kind in ("zero", "interference", "random"):
        pair, H, S = _instance(kind=kind, seed=3)
        es = eigen_summary(H, S, pair.L, 1.0, 1.0)
        for name in ("kappa", "chi", "gamma"):
            assert np.all(getattr(es, name) >= 0)
        assert es.mean("kappa") == pytest.approx(es.mean("chi") + es.mean("gamma"), rel=1e-8)
        amin, amax = pair.amplitude_range()
        N = pair.N
        assert amin ** 2 * N <= es.mean("gamma") <= amax ** 2 * N
        # chi moments are the rho moments
        assert es.mean("chi") == pytest.approx(S.rho1, rel=1e-8, abs=1e-12)
        assert es.second("chi") == pytest.approx(S.rho2, rel=1e-8, abs=1e-12)


def test_geometric_arithmetic_step():
    pair, H, S = _instance(kind="random", seed=5)
    es = eigen_summary(H, S, pair.L, 1.0, 1.0)
    c = 1.0 / pair.L ** 2
    lhs = np.sum(np.log(1 + c * es.chi))
    assert lhs <= pair.N * math.log(1 + c * es.mean("chi")) + 1e-12


def test_bound_zero_channel():
    b = theorem2_bound(np.zeros((4, 4)), None, 0.5, D=1, L=2, lam=0.1, G=1, P=1)
    assert b.value == 0.0 and b.log_argument == 1.0


def test_bound_assembly_and_clamp():
    pair, H, S = _instance(kind="zero", seed=7)
    b = theorem2_bound(H, S, 0.5, D=1, L=pair.L, lam=2 ** -5, G=1, P=1)
    assert b.value == pytest.approx(b.N * b.prefactor * math.log2(b.log_argument))
    assert b.value > 0
    assert b.M == dof_limit_M(1, pair.L, 2 ** -5)
    # strong interference makes the bound vacuous, reported as 0
    big = InterferenceModel.from_sigma(1e6 * np.eye(pair.N), pair.L, 1, 1)
    assert theorem2_bound(H, big, 0.9, D=1, L=pair.L, lam=2 ** -5, G=1, P=1).value == 0.0
    with pytest.raises(InvalidArgument):
        theorem2_bound(H, S, 1.5, D=1, L=pair.L, lam=2 ** -5, G=1, P=1)


def test_bound_matches_hand_computation():
    # independent evaluation from raw traces
    pair, H, S = _instance(N=8, kind="random", seed=11)
    L, G, P, d = pair.L, 1.0, 1.0, 0.35
    c = G * P / L ** 2
    Hm = H.entries
    F = Hm * L / math.sqrt(G)
    N = 8
    Eg = np.trace(F @ F.conj().T).real / N
    Eg2 = np.trace(F @ F.conj().T @ F @ F.conj().T).real / N
    Ec = np.trace(S.sigma).real / (N * c)
    Ec2 = np.trace(S.sigma @ S.sigma).real / (N * c * c)
    pref = d * d * (Ec + Eg) ** 2 / (math.sqrt(Ec2) + math.sqrt(Eg2)) ** 2
    arg = 1 + c * ((1 - d) * Eg - d * Ec) / (1 + c * Ec)
    expect = N * pref * math.log2(arg) if arg > 1 else 0.0
    got = theorem2_bound(H, S, d, D=1, L=L, lam=2 ** -5, G=G, P=P).value
    assert got == pytest.approx(expect, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([4, 8, 16]), st.sampled_from([2.0, 4.0, 8.0]), st.integers(2, 10),
       st.sampled_from(["zero", "interference", "random"]), st.integers(0, 2 ** 31),
       st.floats(0.01, 100))
def test_mi_dominates_bound(N, L, e, kind, seed, P):
    lam = 2.0 ** -e
    pair, H, S = mimo_instance(N, 1.0, L, lam, kind, rng=np.random.default_rng(seed), P=P)
    mi = mutual_information_gaussian(H, S, P)
    es = eigen_summary(H, S, L, 1.0, P)
    for d in DELTA_GRID:
        assert mi >= theorem2_bound(None, None, d, D=1, L=L, lam=lam, G=1, P=P, summary=es).value


def test_best_bound_and_corollary_delta():
    assert corollary_delta(0.5) == 1.0
    assert corollary_delta(4.0) == 1 / 16
    pair, H, S = _instance(kind="zero", seed=1)
    b = best_bound(H, S, D=1, L=pair.L, lam=2 ** -5, G=1, P=1, s=3.0)
    assert b.value == max(theorem2_bound(H, S, d, D=1, L=pair.L, lam=2 ** -5, G=1, P=1).value
                          for d in list(DELTA_GRID) + [1 / 9])


def test_trace_summary_matches_eigen_summary():
    pair, H, S = _instance(N=12, kind="random", seed=2)
    es = eigen_summary(H, S, pair.L, 1.0, 1.0)
    ts = trace_summary(H, S, pair.L, 1.0, 1.0)
    for name in ("chi", "gamma"):
        assert ts.mean(name) == pytest.approx(es.mean(name), rel=1e-9, abs=1e-12)
        assert ts.second(name) == pytest.approx(es.second(name), rel=1e-9, abs=1e-12)
    kw = dict(D=1, L=pair.L, lam=2 ** -5, G=1, P=1)
    assert theorem2_bound(None, None, 0.4, summary=ts, **kw).value == pytest.approx(
        theorem2_bound(None, None, 0.4, summary=es, **kw).value, rel=1e-9)


def test_bound_grows_with_dof():
    # no interference, fixed SNR; M sweeps two decades with N large enough
    # that the pair-repeat part of the second moment stays small
    D, L, N, P = 1.0, 2.0, 1024, 100.0
    Ms, vals = [], []
    for e in range(3, 13):
        lam = 2.0 ** -e
        pair, H, S = mimo_instance(N, D, L, lam, rng=np.random.default_rng(e), P=P)
        ts = trace_summary(H, S, L, 1.0, P)
        vals.append(max(theorem2_bound(None, None, d, D=D, L=L, lam=lam, G=1, P=P,
                                       summary=ts).value for d in DELTA_GRID))
        Ms.append(dof_limit_M(D, L, lam))
    assert math.log10(max(Ms) / min(Ms)) >= 2
    slope = np.polyfit(np.log(Ms), np.log(vals), 1)[0]
    assert abs(slope - 1) <= 0.15, slope


# -- Paley-Zygmund and trace inequality ----------------------------------------
def test_paley_zygmund_examples():
    assert paley_zygmund_lower([2.0, 2.0, 2.0], 0.5) == (1.0, 0.25)
    assert paley_zygmund_lower([0.0, 2.0], 0.5) == (0.5, 0.125)
    assert paley_zygmund_lower([0.0, 0.0], 0.5) == (0.0, 0.0)
    with pytest.raises(InvalidArgument):
        paley_zygmund_lower([], 0.5)
    with pytest.raises(InvalidArgument):
        paley_zygmund_lower([1.0, -1.0], 0.5)


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=50), st.floats(0, 1))
def test_paley_zygmund_property(v, d):
    lhs, rhs = paley_zygmund_lower(v, d)
    assert lhs >= rhs - 1e-12


def test_trace_inequality_examples():
    assert trace_sq_inequality([np.eye(2)]) == pytest.approx((2.0, 2.0))
    assert trace_sq_inequality([np.diag([1.0, 0]), np.diag([0, 1.0])]) == pytest.approx((2.0, 4.0))
    with pytest.raises(InvalidArgument):
        trace_sq_inequality([np.diag([1.0, -1.0])])
    with pytest.raises(InvalidArgument):
        trace_sq_inequality([np.eye(2), np.eye(3)])


@settings(max_examples=100)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_trace_inequality_property(N, count, seed):
    rng = np.random.default_rng(seed)
    mats = [random_psd(N, rng.uniform(0.01, 10), rng) for _ in range(count)]
    lhs, rhs = trace_sq_inequality(mats)
    assert lhs <= rhs * (1 + 1e-12)


# -- interference covariance ----------------------------------------------------
def test_no_same_slot_cluster_gives_zero():
    grid = ClusterGrid.uniform(3, 3.0)
    cfg = NetworkConfig.link(0.01)
    m = interference_covariance((1, 1), grid, 4, 1.0, cfg, [[1.5, 1.5], [1.2, 1.7]])
    assert np.all(m.sigma == 0) and m.rho1 == 0


def test_single_interferer_trace_bound():
    # 4x4 grid: only cluster (3,3) shares the slot of (0,0)
    Lk, Gk, P, G = 1.0, 5, 2.0, 0.5
    grid = ClusterGrid.uniform(4, 4 * Lk)
    cfg = NetworkConfig.link(0.01, G=G)
    rx = np.random.default_rng(0).uniform(0, Lk, (Gk, 2))
    m = interference_covariance((0, 0), grid, Gk, P, cfg, rx, rng=1)
    bound = Gk * Gk * G * P * (3 * Lk - math.sqrt(2) * Lk) ** -2
    assert 0 < np.trace(m.sigma).real <= bound


def test_ring_sum_oracle_on_9x9_grid():
    pair = make_cluster_pair(16, 1.0, 2.0, 4)
    cfg = NetworkConfig.link(2 ** -5)
    m = embedded_interference(pair, cfg, 1.0, rng=5)
    side = pair.L + pair.D
    rings = [8 * i for i in (1,)]
    cap = sum(cnt * (pair.L / ((3 * i - math.sqrt(2)) * side)) ** 2
              for i, cnt in enumerate(rings, start=1))
    assert 0 < m.rho1 / pair.N <= cap


def test_interference_from_placement():
    from loscap.geometry import place_uniform
    grid = ClusterGrid.uniform(6, 1.0)
    pl = place_uniform(2000, 1.0, 3)
    cfg = NetworkConfig.link(1e-3)
    rx = np.array([[0.05, 0.05], [0.1, 0.12]])
    m = interference_covariance((0, 0), grid, 3, 1.0, cfg, rx, rng=0, placement=pl)
    lo, hi = np.linalg.eigvalsh(m.sigma)[[0, -1]]
    assert lo >= -1e-12 and hi > 0
