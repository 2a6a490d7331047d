"""Statistics of the normalized channel ``F``: trace moments, the four-node
Q-terms, Monte Carlo estimates of their mean and a checker for the
periodic-integral bound used to control them.

For receive nodes ``i < j`` and transmit nodes ``k < l``::

    Q_ijkl = a_ik a_il a_jk a_jl cos(2 pi / lam (d_ik - d_il - d_jk + d_jl))

with ``a = (L / d)^(alpha/2)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .channel import NetworkConfig, channel_matrix, pairwise_distances, phase_cycles
from .errors import InvalidArgument
from .geometry import ClusterPair
from .mimo import dof_limit_M

DEFAULT_TRIALS = 100_000


@dataclass(frozen=True)
class QSample:
    i: int
    j: int
    k: int
    l: int
    value: float


def normalized_channel(pair, lam, alpha=2.0):
    """``F = (L^(alpha/2) / sqrt(G)) H`` for the pair; rows are receivers."""
    H = channel_matrix(pair.tx_points, pair.rx_points, NetworkConfig.link(lam, alpha=alpha))
    return H.normalized(pair.L)


def q_term(pair, i, j, k, l, lam, alpha=2.0):
    """Q-term for receive nodes ``i < j`` and transmit nodes ``k < l`` (0-based)."""
    N = pair.N
    if not (0 <= i < j < N and 0 <= k < l < N):
        raise InvalidArgument(f"need 0 <= i < j < {N} and 0 <= k < l < {N}")
    d = pairwise_distances(pair.tx_points[[k, l]], pair.rx_points[[i, j]])
    a = (pair.L / d) ** (alpha / 2)
    # reduce each distance to fractional wavelengths before combining
    cyc = phase_cycles(d, lam)
    phase = cyc[0, 0] - cyc[0, 1] - cyc[1, 0] + cyc[1, 1]
    val = a[0, 0] * a[0, 1] * a[1, 0] * a[1, 1] * math.cos(2 * math.pi * phase)
    return QSample(i, j, k, l, float(val))


def gamma_trace_moments(F):
    """``(tr(FF*)/N, tr(FF*FF*)/N)`` from Frobenius norms."""
    F = np.atleast_2d(np.asarray(F))
    N = F.shape[0]
    A = F @ F.conj().T
    return float(np.vdot(F, F).real / N), float(np.vdot(A, A).real / N)


def psi1_sum(F):
    """Part of ``tr(FF*FF*)`` from index tuples with a repeated row or column."""
    P = np.abs(np.asarray(F)) ** 2
    return float((P.sum(1) ** 2).sum() + (P.sum(0) ** 2).sum() - (P * P).sum())


def q_sum(F):
    """``sum_{i<j, k<l} Q_ijkl`` via ``tr(FF*FF*) = psi1 + 4 * sum Q``."""
    F = np.asarray(F)
    A = F @ F.conj().T
    return (float(np.vdot(A, A).real) - psi1_sum(F)) / 4.0


def q_sum_bruteforce(pair, lam, alpha=2.0):
    """Direct four-index sum of :func:`q_term` (small N only)."""
    N = pair.N
    total = 0.0
    for i in range(N):
        for j in range(i + 1, N):
            for k in range(N):
                for l in range(k + 1, N):
                    total += q_term(pair, i, j, k, l, lam, alpha).value
    return total


def full_sample_mean(pair, lam, alpha=2.0):
    """Average of all ``Q_ijkl`` of one placement: ``4 sum Q / (N^2 (N-1)^2)``."""
    N = pair.N
    if N < 2:
        raise InvalidArgument("need at least two nodes per cluster")
    return 4.0 * q_sum(normalized_channel(pair, lam, alpha)) / (N * N * (N - 1) ** 2)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DecayPoint:
    """Monte Carlo estimate of ``E[Q_1212]`` at one wavelength.

    ``half_width`` is the 95% normal-approximation half-width ``1.96 se``.
    """

    lam: float
    M: float
    mean: float
    se: float
    half_width: float
    trials: int


@dataclass(frozen=True)
class DecaySeries:
    D: float
    L: float
    alpha: float
    points: tuple

    @property
    def M(self):
        return np.array([p.M for p in self.points])

    @property
    def means(self):
        return np.array([p.mean for p in self.points])


def estimate_EQ(D, L, lam, trials=DEFAULT_TRIALS, seed=None, *, alpha=2.0,
                receivers=2, chunk=4096):
    """Monte Carlo estimate of ``E[Q_1212]``.

    Each trial draws two transmit nodes in ``[0, D]^2`` and `receivers`
    receive nodes in ``[L, L+D] x [0, D]``, and scores the average Q-term
    over all receive pairs. With the default two receivers a trial is one
    plain Q draw. More receivers give an unbiased estimate with much lower
    variance, since the pair average is a U-statistic with the same mean.
    """
    trials = int(trials)
    K = int(receivers)
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    if K < 2:
        raise InvalidArgument("need at least two receivers per trial")
    if not (D > 0 and L >= 2 * D and lam > 0):
        raise InvalidArgument("need D > 0, L >= 2D and lam > 0")
    rng = np.random.default_rng(seed)
    h = alpha / 2
    parts = []
    for start in range(0, trials, chunk):
        T = min(chunk, trials - start)
        u = rng.uniform(0.0, D, (T, 1, 2))
        v = rng.uniform(0.0, D, (T, 1, 2))
        s = rng.uniform(0.0, D, (T, K, 2))
        s[..., 0] += L
        du = np.hypot(s[..., 0] - u[..., 0], s[..., 1] - u[..., 1])
        dv = np.hypot(s[..., 0] - v[..., 0], s[..., 1] - v[..., 1])
        X = (L * L / (du * dv)) ** h * np.exp(2j * np.pi * np.mod((du - dv) / lam, 1.0))
        S = X.sum(axis=1)
        parts.append((np.abs(S) ** 2 - (np.abs(X) ** 2).sum(axis=1)) / (K * (K - 1)))
    e = np.concatenate(parts)
    mean = float(e.mean())
    se = float(e.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    return DecayPoint(float(lam), dof_limit_M(D, L, lam), mean, se, 1.96 * se, trials)


def decay_series(D, L, lams, trials=DEFAULT_TRIALS, seed=None, *, alpha=2.0, receivers=2):
    """:func:`estimate_EQ` over `lams`, one spawned seed stream per point."""
    seeds = np.random.SeedSequence(seed).spawn(len(lams))
    pts = tuple(estimate_EQ(D, L, lam, trials, s, alpha=alpha, receivers=receivers)
                for lam, s in zip(lams, seeds))
    return DecaySeries(float(D), float(L), float(alpha), pts)


def decay_regression(series):
    """Least-squares slope of ``log |E[Q]|`` against ``log M``.

    Needs at least 5 points, all with ``M > 1``, spanning two decades of M.
    Accepts a :class:`DecaySeries` or a pair ``(M, means)``.
    """
    if isinstance(series, DecaySeries):
        M, E = series.M, series.means
    else:
        M, E = (np.asarray(x, dtype=float) for x in series)
    if len(M) < 5:
        raise InvalidArgument("need at least 5 points")
    if np.any(M <= 1):
        raise InvalidArgument("all points need M > 1")
    if math.log10(M.max() / M.min()) < 2:
        raise InvalidArgument("points must span at least two decades of M")
    if np.any(E == 0):
        raise InvalidArgument("zero mean estimate")
    return float(np.polyfit(np.log(M), np.log(np.abs(E)), 1)[0])


def decay_envelope(series):
    """``(max E[Q] M, 3 min E[Q] M (1 + log2 M_max) / (1 + log2 M_min))``."""
    M, E = series.M, series.means
    EM = E * M
    return float(EM.max()), float(3 * EM.min() * (1 + math.log2(M.max())) / (1 + math.log2(M.min())))


@dataclass(frozen=True)
class LLNReport:
    """Full sample means on nested placements.

    ``means[s, t]`` is the mean for seed ``s`` and size ``Ns[t]``;
    ``z[t]`` compares the seed average at ``Ns[t]`` with the Monte Carlo
    estimate in units of the combined standard error.
    """

    Ns: tuple
    means: np.ndarray
    mean_abs_diff: np.ndarray
    reference: DecayPoint
    z: np.ndarray

    @property
    def relative_last_diff(self):
        return float(self.mean_abs_diff[-1] / abs(self.reference.mean))


def lln_convergence_check(Ns, D, L, lam, seeds, *, alpha=2.0, trials=DEFAULT_TRIALS,
                          mc_seed=None, receivers=2):
    """Track the full sample mean as the clusters grow.

    For each seed one placement of ``max(Ns)`` nodes per cluster is drawn
    and its prefixes give the smaller clusters, so every seed is a single
    growing sample path.
    """
    Ns = tuple(int(n) for n in Ns)
    if any(n < 2 for n in Ns) or list(Ns) != sorted(Ns):
        raise InvalidArgument("Ns must be increasing and >= 2")
    seeds = list(seeds)
    Nmax = Ns[-1]
    means = np.empty((len(seeds), len(Ns)))
    for a, sd in enumerate(seeds):
        rng = np.random.default_rng(sd)
        tx = rng.uniform(0.0, D, (Nmax, 2))
        rx = rng.uniform(0.0, D, (Nmax, 2))
        rx[:, 0] += L
        for t, N in enumerate(Ns):
            means[a, t] = full_sample_mean(ClusterPair(D, L, tx[:N], rx[:N]), lam, alpha)
    ref = estimate_EQ(D, L, lam, trials, mc_seed, alpha=alpha, receivers=receivers)
    diffs = np.abs(np.diff(means, axis=1)).mean(axis=0) if len(Ns) > 1 else np.array([])
    if len(seeds) > 1:
        sd_seed = means.std(axis=0, ddof=1)
    else:
        sd_seed = np.zeros(len(Ns))
    comb = np.sqrt(sd_seed ** 2 / len(seeds) + ref.se ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (means.mean(axis=0) - ref.mean) / comb
    return LLNReport(Ns, means, diffs, ref, z)


# ---------------------------------------------------------------------------
# Periodic-integral bound
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PeriodicFunction:
    """``g`` with period `period`, ``g(x + p/2) = -g(x)`` and ``|g| <= 1``."""

    func: object
    period: float

    def validate(self, samples=257):
        p = self.period
        if not p > 0:
            raise InvalidArgument("period must be positive")
        x = np.linspace(0.0, p, samples, endpoint=False)
        g0 = np.asarray(self.func(x), dtype=float)
        tol = 1e-9 * max(1.0, float(np.abs(g0).max()))
        if np.abs(g0 + np.asarray(self.func(x + p / 2), dtype=float)).max() > tol:
            raise InvalidArgument("g is not antisymmetric over a half period")
        if np.abs(g0 - np.asarray(self.func(x + p), dtype=float)).max() > tol:
            raise InvalidArgument("g is not periodic")
        if np.abs(g0).max() > 1 + 1e-12:
            raise InvalidArgument("|g| must not exceed 1")


@dataclass(frozen=True)
class PiecewiseMonotone:
    """Nonnegative ``h`` monotone on each cell of the partition `breakpoints`."""

    func: object
    breakpoints: tuple

    @property
    def a(self):
        return self.breakpoints[0]

    @property
    def b(self):
        return self.breakpoints[-1]

    @property
    def m(self):
        return len(self.breakpoints) - 1

    def validate(self, samples=201):
        bp = np.asarray(self.breakpoints, dtype=float)
        if len(bp) < 2 or np.any(np.diff(bp) <= 0):
            raise InvalidArgument("breakpoints must be strictly increasing")
        for x0, x1 in zip(bp[:-1], bp[1:]):
            # cell interior only: endpoint values may belong to the neighbour
            y = np.asarray(self.func(np.linspace(x0, x1, samples)[1:-1]), dtype=float)
            tol = 1e-9 * max(1.0, float(np.abs(y).max()))
            if y.min() < -tol:
                raise InvalidArgument("h must be nonnegative")
            dy = np.diff(y)
            if dy.min() < -tol and dy.max() > tol:
                raise InvalidArgument(f"h is not monotone on [{x0}, {x1}]")


@dataclass(frozen=True)
class IntegralCheck:
    lhs: float
    rhs: float
    tol: float
    window_start: float
    ok: bool


def _quad(f, a, b, points=()):
    pts = [p for p in points if a < p < b]
    with warnings.catch_warnings():
        # roundoff warnings on near-zero integrals; the error estimate is kept
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, points=pts or None, limit=max(200, 4 * len(pts) + 50),
                                  epsabs=1e-12, epsrel=1e-10)
    return val, err


def integral_bound_check(g, h, c1, c2=0.0, *, grid=1000):
    """Check ``|int_a^b g(c1 x + c2) h(x) dx| <= m * max_x int_x^{x+w} h``.

    ``w = p / (2 |c1|)`` and ``m`` is the number of monotone cells of `h`.
    The maximizing window start is searched on a grid of `grid` starts in
    ``[a, b - w]`` and refined locally; when ``b - a <= w`` the window is
    the whole interval. Quadrature error estimates are added to the
    tolerance.
    """
    if c1 == 0:
        raise InvalidArgument("c1 must be nonzero")
    g.validate()
    h.validate()
    a, b = float(h.a), float(h.b)
    p = g.period
    w = p / (2 * abs(c1))

    # split at half-period nodes of the integrand so quad sees smooth pieces
    lo, hi = sorted((c1 * a + c2, c1 * b + c2))
    half = np.arange(math.ceil(lo / (p / 2)), math.floor(hi / (p / 2)) + 1)
    nodes = sorted(set(h.breakpoints) | set(((half * (p / 2) - c2) / c1).tolist()))
    lhs_v, lhs_e = _quad(lambda x: float(g.func(c1 * x + c2)) * float(h.func(x)), a, b, nodes)
    lhs = abs(lhs_v)

    if b - a <= w:
        win, win_e = _quad(lambda x: float(h.func(x)), a, b, h.breakpoints)
        start = a
    else:
        xs = np.linspace(a, b, 20 * grid + 1)
        ys = np.asarray(h.func(xs), dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))])
        starts = np.linspace(a, b - w, grid)
        approx = np.interp(starts + w, xs, cum) - np.interp(starts, xs, cum)
        best = int(np.argmax(approx))
        window = lambda s: _quad(lambda x: float(h.func(x)), s, s + w, h.breakpoints)[0]
        step = (b - w - a) / max(grid - 1, 1)
        r0, r1 = max(a, starts[best] - step), min(b - w, starts[best] + step)
        cand = [starts[best]]
        if r1 > r0:
            res = optimize.minimize_scalar(lambda s: -window(s), bounds=(r0, r1),
                                           method="bounded", options={"xatol": 1e-10})
            cand.append(float(res.x))
        vals = [(window(s), s) for s in cand]
        win, start = max(vals)
        win_e = _quad(lambda x: float(h.func(x)), start, start + w, h.breakpoints)[1]
    rhs = h.m * win
    tol = lhs_e + h.m * win_e + 1e-12 * max(1.0, rhs)
    return IntegralCheck(lhs, rhs, tol, float(start), bool(lhs <= rhs + tol))
