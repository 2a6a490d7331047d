"""Cooperative MIMO between two clusters: Gaussian mutual information, the
eigenvalue-moment capacity lower bound and the inequalities it is built on.

Normalizations follow the free-space case with ``L^2`` replaced by
``L^alpha`` so that ``alpha > 2`` channels stay consistent:

* ``kappa``: eigenvalues of ``(L^alpha / GP) (Sigma + P H H*)``
* ``chi``:   eigenvalues of ``(L^alpha / GP) Sigma``
* ``gamma``: eigenvalues of ``(L^alpha / G) H H*``

and the lower bound, for ``0 <= delta <= 1`` and ``c = GP / L^alpha``, is::

    N * delta^2 (E chi + E gamma)^2 / (sqrt(E chi^2) + sqrt(E gamma^2))^2
      * log2(1 + c ((1 - delta) E gamma - delta E chi) / (1 + c E chi))
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix, channel_matrix
from .errors import InvalidArgument
from .geometry import ClusterGrid, interferer_subgroups

PSD_RTOL = 1e-9

#: The 19-point delta grid ``0.05, 0.10, ..., 0.95``.
DELTA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))


def _entries(H):
    return H.entries if isinstance(H, ChannelMatrix) else np.atleast_2d(np.asarray(H))


def _sigma_array(sigma, N):
    if sigma is None:
        return np.zeros((N, N))
    if isinstance(sigma, InterferenceModel):
        sigma = sigma.sigma
    return np.asarray(sigma)


def check_psd(sigma):
    """Return the Hermitian part of `sigma` after checking it is PSD.

    The eigenvalue floor is ``-1e-9 * tr(sigma) / N``.
    """
    s = np.atleast_2d(np.asarray(sigma))
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvalidArgument(f"covariance must be square, got shape {s.shape}")
    scale = np.abs(s).max() if s.size else 0.0
    if np.abs(s - s.conj().T).max(initial=0.0) > 1e-9 * max(scale, 1e-300):
        raise InvalidArgument("covariance is not Hermitian")
    s = 0.5 * (s + s.conj().T)
    N = s.shape[0]
    eps = PSD_RTOL * abs(np.trace(s).real) / N
    if N and np.linalg.eigvalsh(s).min() < -eps:
        raise InvalidArgument("covariance is not positive semidefinite")
    return s


def rho_moments(sigma, N, L, G, P, alpha=2.0):
    """Normalized interference trace moments ``(rho1, rho2)``.

    ``rho1 = L^a tr(S) / (N G P)`` and ``rho2 = L^(2a) tr(S^2) / (N (GP)^2)``.
    """
    s = np.atleast_2d(np.asarray(sigma))
    if s.shape != (N, N):
        raise InvalidArgument(f"expected a {N}x{N} covariance, got {s.shape}")
    la = L ** alpha
    rho1 = la * np.trace(s).real / (N * G * P)
    rho2 = la * la * np.vdot(s, s).real / (N * (G * P) ** 2)
    return float(rho1), float(rho2)


@dataclass(frozen=True)
class InterferenceModel:
    """PSD interference covariance with its normalized trace moments."""

    sigma: np.ndarray
    rho1: float
    rho2: float

    @classmethod
    def from_sigma(cls, sigma, L, G, P, alpha=2.0):
        s = check_psd(sigma)
        s.setflags(write=False)
        return cls(s, *rho_moments(s, s.shape[0], L, G, P, alpha))

    @classmethod
    def zero(cls, N):
        s = np.zeros((N, N))
        s.setflags(write=False)
        return cls(s, 0.0, 0.0)


def mutual_information_gaussian(H, sigma, P):
    """``log2 det(I + S + P H H*) - log2 det(I + S)`` in bits per channel use."""
    Hm = _entries(H)
    N = Hm.shape[0]
    s = _sigma_array(sigma, N)
    if s.shape != (N, N):
        raise InvalidArgument(f"covariance shape {s.shape} does not match {N} receivers")
    s = check_psd(s)
    if P < 0:
        raise InvalidArgument("power must be nonnegative")
    base = np.eye(N) + s
    full = base + P * (Hm @ Hm.conj().T)
    return (_logdet2(full) - _logdet2(base))


def _logdet2(A):
    c = np.linalg.cholesky(0.5 * (A + A.conj().T))
    return 2.0 * float(np.sum(np.log2(np.diagonal(c).real)))


@dataclass(frozen=True)
class EigenSummary:
    kappa: np.ndarray
    chi: np.ndarray
    gamma: np.ndarray

    @property
    def N(self):
        return len(self.gamma)

    def mean(self, name):
        return float(np.mean(getattr(self, name)))

    def second(self, name):
        v = getattr(self, name)
        return float(np.mean(v * v))


def eigen_summary(H, sigma, L, G, P, alpha=2.0):
    """Eigenvalues of the three normalized matrices of the bound (clipped at 0)."""
    Hm = _entries(H)
    N = Hm.shape[0]
    s = check_psd(_sigma_array(sigma, N))
    c = G * P / L ** alpha
    HH = Hm @ Hm.conj().T
    clip = lambda a: np.clip(np.linalg.eigvalsh(0.5 * (a + a.conj().T)), 0.0, None)
    return EigenSummary(
        kappa=clip((s + P * HH) / c),
        chi=clip(s / c),
        gamma=clip(HH * (L ** alpha / G)),
    )


@dataclass(frozen=True)
class TraceMoments:
    """First and second eigenvalue moments of chi and gamma, from traces.

    Same ``mean`` / ``second`` interface as :class:`EigenSummary` (for
    ``chi`` and ``gamma``), without an eigendecomposition.
    """

    N: int
    chi1: float
    chi2: float
    gamma1: float
    gamma2: float

    def mean(self, name):
        return {"chi": self.chi1, "gamma": self.gamma1,
                "kappa": self.chi1 + self.gamma1}[name]

    def second(self, name):
        return {"chi": self.chi2, "gamma": self.gamma2}[name]


def trace_summary(H, sigma, L, G, P, alpha=2.0):
    """:class:`TraceMoments` for the bound, in ``O(N^3)`` matrix products."""
    Hm = _entries(H)
    N = Hm.shape[0]
    s = check_psd(_sigma_array(sigma, N))
    c = G * P / L ** alpha
    F = Hm * (L ** (alpha / 2) / math.sqrt(G))
    A = F @ F.conj().T
    return TraceMoments(N, np.trace(s).real / (N * c), np.vdot(s, s).real / (N * c * c),
                        np.vdot(F, F).real / N, np.vdot(A, A).real / N)


def dof_limit_M(D, L, lam):
    """Spatial degrees of freedom between two clusters.

    ``M = max(1, r / (1 + (log2 r)^+))`` with ``r = D^2 / (lam L)``.
    """
    if not (D > 0 and L > 0 and lam > 0):
        raise InvalidArgument("D, L and lambda must be positive")
    if L < 2 * D:
        raise InvalidArgument("need L >= 2D")
    r = D * D / (lam * L)
    return max(1.0, r / (1.0 + max(math.log2(r), 0.0)))


@dataclass(frozen=True)
class MimoBound:
    """Capacity lower bound and its pieces: ``value = N * prefactor * log2(log_argument)``."""

    value: float
    delta: float
    M: float
    prefactor: float
    log_argument: float
    N: int


def theorem2_bound(H, sigma, delta, *, D, L, lam, G, P, alpha=2.0, summary=None):
    """Explicit MIMO capacity lower bound from empirical eigenvalue moments.

    Reports 0 when the bound is vacuous (log argument at most 1, or no
    signal energy at all).
    """
    if not 0.0 <= delta <= 1.0:
        raise InvalidArgument(f"delta must lie in [0, 1], got {delta}")
    es = summary if summary is not None else eigen_summary(H, sigma, L, G, P, alpha)
    N = es.N
    c = G * P / L ** alpha
    Ec, Eg = es.mean("chi"), es.mean("gamma")
    den = math.sqrt(es.second("chi")) + math.sqrt(es.second("gamma"))
    pref = delta ** 2 * (Ec + Eg) ** 2 / den ** 2 if den > 0 else 0.0
    arg = 1.0 + c * ((1 - delta) * Eg - delta * Ec) / (1 + c * Ec)
    value = N * pref * math.log2(arg) if arg > 1 else 0.0
    return MimoBound(value, float(delta), dof_limit_M(D, L, lam), pref, arg, N)


def corollary_delta(s):
    """``delta = s^-2`` (unit constant), capped at 1."""
    if not s > 0:
        raise InvalidArgument("s must be positive")
    return min(1.0, s ** -2)


def best_bound(H, sigma, *, D, L, lam, G, P, alpha=2.0, s=None):
    """Largest bound over :data:`DELTA_GRID` (plus ``corollary_delta(s)`` if given)."""
    es = eigen_summary(H, sigma, L, G, P, alpha)
    deltas = list(DELTA_GRID) + ([corollary_delta(s)] if s is not None else [])
    bounds = [theorem2_bound(None, None, d, D=D, L=L, lam=lam, G=G, P=P,
                             alpha=alpha, summary=es) for d in deltas]
    return max(bounds, key=lambda b: b.value)


def paley_zygmund_lower(values, delta):
    """Both sides of the Paley-Zygmund inequality on an empirical sample.

    Returns ``(lhs, rhs)`` with ``lhs`` the fraction of values above
    ``(1 - delta) * mean`` and ``rhs = delta^2 E[v]^2 / E[v^2]``; always
    ``lhs >= rhs``.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise InvalidArgument("empty sample")
    if np.any(v < 0):
        raise InvalidArgument("values must be nonnegative")
    if not 0.0 <= delta <= 1.0:
        raise InvalidArgument("delta must lie in [0, 1]")
    m = v.mean()
    m2 = np.mean(v * v)
    lhs = float(np.mean(v > (1 - delta) * m))
    rhs = float(delta ** 2 * m * m / m2) if m2 > 0 else 0.0
    return lhs, rhs


def trace_sq_inequality(matrices):
    """``(tr((sum A_i)^2), (sum_i tr(A_i^2)^(1/2))^2)`` for PSD ``A_i``; lhs <= rhs."""
    mats = [check_psd(a) for a in matrices]
    if not mats:
        raise InvalidArgument("need at least one matrix")
    if len({a.shape for a in mats}) != 1:
        raise InvalidArgument("matrices must share a shape")
    total = sum(mats)
    lhs = float(np.vdot(total, total).real)
    rhs = float(sum(math.sqrt(max(np.vdot(a, a).real, 0.0)) for a in mats) ** 2)
    return lhs, rhs


def interference_covariance(v, grid, G_k, P_prime, config, rx_points, *, L=None,
                            rng=None, placement=None):
    """Covariance of the interference seen by `rx_points` inside cluster `v`.

    Every cluster sharing `v`'s 9-TDMA slot activates ``G_k`` transmitters
    at power `P_prime`: random nodes of `placement` in that cluster when a
    placement is given, otherwise uniform draws inside the cluster. The
    returned moments are normalized by link distance `L` (default: the
    grid's cell side) and power `P_prime`.
    """
    if not isinstance(grid, ClusterGrid):
        raise InvalidArgument("grid must be a ClusterGrid")
    rng = np.random.default_rng(rng)
    rx = np.asarray(rx_points, dtype=float).reshape(-1, 2)
    N = len(rx)
    sigma = np.zeros((N, N), dtype=complex)
    member = grid.locate(placement.points) if placement is not None else None
    ncols = grid.shape[1]
    for ring in interferer_subgroups(v, grid):
        for (r, c) in ring:
            if placement is not None:
                idx = np.flatnonzero(member == r * ncols + c)
                pick = rng.choice(idx, size=min(G_k, len(idx)), replace=False)
                tx = placement.points[pick]
            else:
                x0, x1, y0, y1 = grid.bounds(r, c)
                tx = np.column_stack([rng.uniform(x0, x1, G_k), rng.uniform(y0, y1, G_k)])
            if len(tx) == 0:
                continue
            Hh = channel_matrix(tx, rx, config).entries
            sigma += P_prime * (Hh @ Hh.conj().T)
    if L is None:
        L = grid.cell_side
    return InterferenceModel.from_sigma(sigma, L, config.G, P_prime, config.alpha)


def embedded_interference(pair, config, P_prime, *, grid_size=9, rng=None):
    """Interference on a cluster pair placed in the center cell of a grid.

    The cell side is ``L + D`` so the pair fits in one cell; each cell in the
    victim's 9-TDMA slot activates ``pair.N`` interferers at `P_prime`.
    """
    side = pair.L + pair.D
    grid = ClusterGrid.uniform(grid_size, grid_size * side)
    mid = grid_size // 2
    origin = np.array([mid * side, mid * side])
    return interference_covariance((mid, mid), grid, pair.N, P_prime, config,
                                   pair.rx_points + origin, L=pair.L, rng=rng)


SIGMA_KINDS = ("zero", "interference", "random")


def random_psd(N, scale, rng):
    """Random complex PSD matrix with ``tr / N = scale``."""
    X = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    A = X @ X.conj().T
    return A * (scale * N / np.trace(A).real)


def mimo_instance(N, D, L, lam, sigma_kind="zero", *, rng=None, P=1.0, G=1.0, alpha=2.0):
    """Random cluster pair, its channel and an interference covariance.

    `sigma_kind` is ``"zero"``, ``"interference"`` (9x9 cluster grid with
    the pair in the center cell) or ``"random"`` (random PSD matrix whose
    per-antenna power is log-uniform in ``[1e-3, 1e3] * GP / L^alpha``).
    """
    from .geometry import make_cluster_pair
    from .channel import NetworkConfig

    if sigma_kind not in SIGMA_KINDS:
        raise InvalidArgument(f"sigma kind must be one of {SIGMA_KINDS}")
    rng = np.random.default_rng(rng)
    pair = make_cluster_pair(N, D, L, rng)
    config = NetworkConfig.link(lam, G=G, alpha=alpha, P=P)
    H = channel_matrix(pair.tx_points, pair.rx_points, config)
    if sigma_kind == "zero":
        sigma = InterferenceModel.zero(N)
    elif sigma_kind == "interference":
        sigma = embedded_interference(pair, config, P, rng=rng)
    else:
        scale = 10.0 ** rng.uniform(-3, 3) * G * P / L ** alpha
        sigma = InterferenceModel.from_sigma(random_psd(N, scale, rng), L, G, P, alpha)
    return pair, H, sigma
