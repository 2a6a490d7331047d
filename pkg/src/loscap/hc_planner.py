"""Planner for hierarchical cooperation with partial cluster participation.

Every level ``k`` of an ``h``-level hierarchy groups ``n_k`` nodes per
cluster (``n_h = n``); during the MIMO phase only ``G_k`` nodes per cluster
transmit, which keeps the virtual array within the degrees of freedom that
the wavelength supports. The module evaluates the throughput recursion, the
cluster-size choice, the regime exponents and the resulting scaling
predictions. All order constants are 1 and logarithms are base 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidArgument

REGIMES = ("dense", "extended")


def _lam_log(lam):
    if not 0 < lam < 1:
        raise InvalidArgument(f"wavelength must lie in (0, 1), got {lam}")
    return lam * math.log2(1.0 / lam)


# ---------------------------------------------------------------------------
# Per-level quantities
# ---------------------------------------------------------------------------
def g_k(n_prev, n_cur, n, lam):
    """Active nodes per cluster: ``min(n_prev, n_prev / (sqrt(n_cur n) lam log 1/lam))``.

    Floored and at least 1.
    """
    if not 1 <= n_prev <= n_cur <= n:
        raise InvalidArgument("need 1 <= n_prev <= n_cur <= n")
    x = _lam_log(lam)
    val = min(n_prev, n_prev / (math.sqrt(n_cur * n) * x))
    return max(1, int(math.floor(val * (1 + 1e-12))))


def throughput_recursion(T_prev, n_prev, n_cur, m, R_k, Q=3):
    """Level-k throughput from the three phase durations.

    ``n_cur m / (9 m n_prev / T_prev + n_cur m / R_k + 9 Q m^2 n_prev / (R_k T_prev))``
    """
    if not (T_prev > 0 and n_prev > 0 and n_cur > 0 and m > 0 and R_k > 0 and Q >= 0):
        raise InvalidArgument("throughput inputs must be positive")
    return n_cur * m / (9 * m * n_prev / T_prev + n_cur * m / R_k
                        + 9 * Q * m * m * n_prev / (R_k * T_prev))


def base_throughput(n_0):
    """Multihop throughput surrogate ``sqrt(n_0) / log2(n_0)`` for the smallest clusters."""
    if n_0 < 2:
        raise InvalidArgument("n_0 must be at least 2")
    return math.sqrt(n_0) / math.log2(n_0)


def rate_rk(G_k, n):
    """MIMO-phase rate ``G_k / (log2 n)^7``."""
    if G_k < 1 or n < 2:
        raise InvalidArgument("need G_k >= 1 and n >= 2")
    return G_k / math.log2(n) ** 7


# ---------------------------------------------------------------------------
# Regime exponents
# ---------------------------------------------------------------------------
def Lambda(v, h):
    """Regime threshold ``(3^(h-v)(3+v) - 2^(h-v)) / (3^(h-v)(4+v) - 2^(1+h-v))``."""
    if not 1 <= v <= h:
        raise InvalidArgument(f"v must lie in [1, {h}]")
    a, b = 3 ** (h - v), 2 ** (h - v)
    return (a * (3 + v) - b) / (a * (4 + v) - 2 * b)


def log_n_lamlog(n, lam):
    """``log_n(lam log2(1/lam))``."""
    if n < 2:
        raise InvalidArgument("n must be at least 2")
    return math.log(_lam_log(lam)) / math.log(n)


def regime_classifier(n, lam, h):
    """Regime index ``b in [1, h+1]``; larger means closer to linear scaling."""
    if h < 1:
        raise InvalidArgument("h must be >= 1")
    x = log_n_lamlog(n, lam)
    if x <= -Lambda(h, h):
        return h + 1
    for k in range(h, 1, -1):
        if -Lambda(k, h) < x <= -Lambda(k - 1, h):
            return k
    return 1


def delta_tau(u, h):
    """Exponent pair ``(delta_u, tau_u)`` of regime `u`."""
    if not 1 <= u <= h + 1:
        raise InvalidArgument(f"u must lie in [1, {h + 1}]")
    den = 3 ** (1 + h - u) + 2 ** (h - u) * (u - 1)
    return u * 2 ** (h - u) / den, (3 ** (1 + h - u) - 2 ** (1 + h - u)) / den


def alpha_beta_recursion(hp, h):
    """``[(alpha, beta)]`` for levels ``hp-1 .. h`` of regime ``hp``, by recursion."""
    if not 1 <= hp <= h:
        raise InvalidArgument(f"regime must lie in [1, {h}]")
    a, b = hp / (hp + 1), 0.0
    out = [(a, b)]
    for _ in range(hp, h + 1):
        a, b = (a + 1) / (2 * (2 - a)), (1 - a + 2 * b) / (2 * (2 - a))
        out.append((a, b))
    return out


def alpha_beta_closed(hp, k):
    """Closed-form ``(alpha, beta)`` of level ``k >= hp - 1`` in regime ``hp``."""
    t3, t2 = 3 ** (1 + k - hp), 2 ** (1 + k - hp)
    den = 2 * t3 + t2 * (hp - 1)
    return (t3 + t2 * (hp - 1)) / den, (t3 - t2) / den


def cluster_size_exponents(hp, h, k):
    """``(e_n, e_l)`` with ``n_k = n^e_n (lam log 1/lam)^e_l`` in regime ``hp < h+1``.

    Valid for ``k in [hp-1, h]``.
    """
    den = 3 ** (1 + h - hp) + 2 ** (h - hp) * (hp - 1)
    e_n = (3 ** (1 + h - hp) + hp * 2 ** (1 + k - hp) * 3 ** (h - k)
           - 2 ** (h - hp) * (1 + hp)) / den
    e_l = (2 ** (1 + k - hp) * 3 ** (h - k) - 2 ** (1 + h - hp)) * (1 + hp) / den
    return e_n, e_l


# ---------------------------------------------------------------------------
# Plans
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class HierarchyPlan:
    """Cluster sizes and per-level rates and throughputs.

    ``n_seq[k] = n_k`` for ``k = 0..h``; ``m_seq[k] = m_k`` and
    ``rates[k] = R_{k+1}`` for ``k = 0..h-1``; ``throughputs[k] = T_k``.
    ``n_real`` keeps the cluster sizes before rounding.
    """

    n: int
    lam: float
    h: int
    Q: int
    regime_index: int
    n_seq: tuple
    m_seq: tuple
    rates: tuple
    throughputs: tuple
    n_real: tuple = ()

    def __post_init__(self):
        ns, ms = self.n_seq, self.m_seq
        if len(ns) != self.h + 1 or len(ms) != self.h or len(self.rates) != self.h:
            raise InvalidArgument("sequence lengths do not match h")
        if ns[-1] != self.n:
            raise InvalidArgument("n_h must equal n")
        if any(a > b for a, b in zip(ns, ns[1:])):
            raise InvalidArgument("cluster sizes must be nondecreasing")
        if any(not 1 <= m <= nk for m, nk in zip(ms, ns)):
            raise InvalidArgument("need 1 <= m_k <= n_k")

    @property
    def T_h(self):
        return self.throughputs[-1]


def build_plan(n_seq, lam, Q=3, *, m_seq=None, regime_index=None, n_real=()):
    """Plan for given cluster sizes; ``m_{k-1} = G_k`` unless `m_seq` is given."""
    ns = tuple(int(x) for x in n_seq)
    h = len(ns) - 1
    n = ns[-1]
    if h < 1:
        raise InvalidArgument("need at least one level")
    if m_seq is None:
        m_seq = tuple(g_k(ns[k - 1], ns[k], n, lam) for k in range(1, h + 1))
    m_seq = tuple(int(m) for m in m_seq)
    rates = tuple(rate_rk(m, n) for m in m_seq)
    T = [base_throughput(ns[0])]
    for k in range(1, h + 1):
        T.append(throughput_recursion(T[-1], ns[k - 1], ns[k], m_seq[k - 1], rates[k - 1], Q))
    if regime_index is None:
        regime_index = regime_classifier(n, lam, h)
    return HierarchyPlan(n, float(lam), h, int(Q), regime_index, ns, m_seq, rates,
                         tuple(T), tuple(n_real))


def real_cluster_sizes(n, lam, h):
    """Unrounded cluster sizes ``(n_0, ..., n_h)`` for the regime of ``(n, lam)``."""
    hp = regime_classifier(n, lam, h)
    x2n = _lam_log(lam) ** 2 * n
    sizes = [0.0] * (h + 1)
    sizes[h] = float(n)
    if hp == h + 1:
        lin_top = h
    else:
        ab = alpha_beta_recursion(hp, h)  # index j -> level hp-1+j
        for k in range(h, hp - 1, -1):
            a, b = ab[k - 1 - (hp - 1)]
            sizes[k - 1] = sizes[k] ** (3 / (2 * (2 - a))) * x2n ** ((1 - 2 * b) / (2 * (2 - a)))
        lin_top = hp - 1
    for k in range(lin_top, 0, -1):
        sizes[k - 1] = sizes[k] ** ((k + 1) / (k + 2))
    return hp, sizes


def optimal_cluster_sizes(n, lam, h, Q=3, *, mu=None):
    """Cluster sizes maximizing the throughput bound, as an integer plan.

    Levels in the linear regime use ``n_{k-1} = n_k^((k+1)/(k+2))``; levels
    at and above the bottleneck regime use the DoF-limited rule. Sizes are
    rounded to the nearest integer and clamped to ``[2, n_k]``.
    """
    if int(n) != n or n < 4:
        raise InvalidArgument("n must be an integer >= 4")
    if h < 1:
        raise InvalidArgument("h must be >= 1")
    _lam_log(lam)
    if mu is not None and lam < n ** -mu:
        raise InvalidArgument("wavelength below n^-mu")
    hp, real = real_cluster_sizes(n, lam, h)
    ns = [int(n)] * (h + 1)
    for k in range(h - 1, -1, -1):
        ns[k] = min(ns[k + 1], max(2, int(round(real[k]))))
    return build_plan(ns, lam, Q, regime_index=hp, n_real=real)


# ---------------------------------------------------------------------------
# Scaling predictions
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ScalingPrediction:
    """Predicted throughput scaling at one ``(n, lam)``.

    ``core`` is the lower bound without its ``(log n)^-(7h+1)`` factor and
    ``regime_value`` is the single term ``n^delta / (lam log 1/lam)^tau`` of
    the active regime. For extended networks `lam_eff` is the rescaled
    wavelength used for the lower bound.
    """

    n: int
    lam: float
    h: int
    regime: str
    lam_eff: float
    regime_index: int
    delta: float
    tau: float
    core: float
    regime_value: float
    lower_bound: float
    upper_bound: float
    dof_limit: float
    dof_limited: bool
    active_fraction: float = 1.0


def lower_bound_core(n, lam, h):
    """``min_k n^delta_k / (lam log 1/lam)^tau_k`` over ``k in [1, h+1]``."""
    x = _lam_log(lam)
    return min(n ** d / x ** t for d, t in (delta_tau(u, h) for u in range(1, h + 2)))


def upper_bound(n, lam, regime="dense"):
    """``(value, dof_term, dof_limited)`` of the throughput upper bound.

    ``dof_limited`` compares the polylog-free terms: ``1/lam < n`` (dense)
    or ``sqrt(n)/lam < n`` (extended).
    """
    if regime == "dense":
        dof = 1.0 / lam
        first = dof * math.log2(lam ** -2) ** 2
    elif regime == "extended":
        dof = math.sqrt(n) / lam
        first = dof * math.log2(n * lam ** -2) ** 2
    else:
        raise InvalidArgument(f"unknown regime {regime!r}")
    return min(first, n * math.log2(n)), dof, dof < n


def bursty_adjustment(n, alpha, regime="extended"):
    """``(active fraction n^(1 - alpha/2), throughput multiplier)``.

    The multiplier equals the fraction for extended networks and is 1 for
    dense ones.
    """
    if not alpha >= 2:
        raise InvalidArgument("alpha must be >= 2")
    if regime not in REGIMES:
        raise InvalidArgument(f"unknown regime {regime!r}")
    frac = float(n) ** (1 - alpha / 2)
    return frac, (frac if regime == "extended" else 1.0)


def predicted_throughput(n, lam, h, regime="dense", *, alpha=2.0):
    """Lower and upper throughput bounds with their regime exponents."""
    if regime not in REGIMES:
        raise InvalidArgument(f"unknown regime {regime!r}")
    if n < 2 or h < 1:
        raise InvalidArgument("need n >= 2 and h >= 1")
    if not lam > 0:
        raise InvalidArgument("wavelength must be positive")
    lam_eff = lam if regime == "dense" else lam / math.sqrt(n)
    b = regime_classifier(n, lam_eff, h)
    d, t = delta_tau(b, h)
    core = lower_bound_core(n, lam_eff, h)
    frac, mult = bursty_adjustment(n, alpha, regime)
    lower = mult * core / math.log2(n) ** (7 * h + 1)
    ub, dof, limited = upper_bound(n, lam, regime)
    return ScalingPrediction(
        n=int(n), lam=float(lam), h=h, regime=regime, lam_eff=lam_eff, regime_index=b,
        delta=d, tau=t, core=mult * core, regime_value=mult * n ** d / _lam_log(lam_eff) ** t,
        lower_bound=lower, upper_bound=ub, dof_limit=dof, dof_limited=limited,
        active_fraction=frac,
    )


# ---------------------------------------------------------------------------
# Exponent dominance
# ---------------------------------------------------------------------------
def levels_for(eps_prime):
    """Smallest integer ``h > 8 / eps_prime``."""
    if not eps_prime > 0:
        raise InvalidArgument("eps_prime must be positive")
    return int(math.floor(8 / eps_prime)) + 1


def exponent_margin(x, h, eps_prime, polylog=0.0):
    """``min_k (delta_k - tau_k x) - polylog - (1 - eps') min(-x, 1)``.

    `x` is ``log_n(lam log 1/lam)`` and `polylog` the exponent
    ``(7h+1) log_n log n`` lost to logarithmic factors.
    """
    yk = min(d - t * x for d, t in (delta_tau(u, h) for u in range(1, h + 2)))
    return yk - polylog - (1 - eps_prime) * min(-x, 1.0)
