"""Node placement, cluster grids, 9-TDMA reuse and the planar predicates
used to analyse the transmit-pair statistics.

Coordinates are 2D and use the bottom-left corner of the square being
described as origin: the whole network for :class:`Placement` and
:class:`ClusterHierarchy`, the transmit square for :class:`ClusterPair`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, PreconditionError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Placement
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Placement:
    """Uniform i.i.d. node locations in ``[0, side]^2``."""

    points: np.ndarray
    side: float
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points).reshape(-1, 2))

    @property
    def n(self):
        return len(self.points)


def place_uniform(n, side, seed):
    """Draw `n` nodes uniformly and independently in a square of side `side`.

    The same `seed` always yields the same coordinates.
    """
    if int(n) != n or n < 1:
        raise InvalidArgument(f"node count must be a positive integer, got {n!r}")
    if not side > 0:
        raise InvalidArgument(f"side must be positive, got {side!r}")
    rng = np.random.default_rng(seed)
    return Placement(rng.uniform(0.0, side, size=(int(n), 2)), float(side), seed)


# ---------------------------------------------------------------------------
# Two-cluster MIMO geometry
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ClusterPair:
    """Transmit square ``[0, D]^2`` and receive square ``[L, L+D] x [0, D]``.

    The two squares are horizontally aligned with centers `L` apart.
    """

    D: float
    L: float
    tx_points: np.ndarray
    rx_points: np.ndarray

    def __post_init__(self):
        if not (self.D > 0 and self.L > 0):
            raise InvalidArgument("D and L must be positive")
        if self.L < 2 * self.D:
            raise InvalidArgument(f"need L >= 2D, got D={self.D}, L={self.L}")
        tx = _frozen(self.tx_points).reshape(-1, 2)
        rx = _frozen(self.rx_points).reshape(-1, 2)
        if len(tx) != len(rx):
            raise InvalidArgument("transmit and receive clusters must have equal size")
        if not _inside(tx, 0.0, 0.0, self.D) or not _inside(rx, self.L, 0.0, self.D):
            raise InvalidArgument("cluster points outside their squares")
        object.__setattr__(self, "tx_points", tx)
        object.__setattr__(self, "rx_points", rx)

    @property
    def N(self):
        return len(self.tx_points)

    @property
    def rx_corners(self):
        """Corners of the receive square, counterclockwise from bottom-left."""
        L, D = self.L, self.D
        return np.array([(L, 0.0), (L + D, 0.0), (L + D, D), (L, D)])

    def distance_range(self):
        """Exact (min, max) transmit-receive distance allowed by the squares."""
        return self.L - self.D, math.hypot(self.L + self.D, self.D)

    def amplitude_range(self, alpha=2.0):
        """Bounds ``(a_min, a_max)`` on the normalized amplitudes ``(L/d)^(alpha/2)``."""
        dmin, dmax = self.distance_range()
        return (self.L / dmax) ** (alpha / 2), (self.L / dmin) ** (alpha / 2)


def _inside(pts, x0, y0, side):
    return bool(np.all((pts[:, 0] >= x0) & (pts[:, 0] <= x0 + side)
                       & (pts[:, 1] >= y0) & (pts[:, 1] <= y0 + side)))


def make_cluster_pair(N, D, L, seed):
    """Random :class:`ClusterPair` with `N` uniform nodes per square."""
    if int(N) != N or N < 1:
        raise InvalidArgument(f"N must be a positive integer, got {N!r}")
    rng = np.random.default_rng(seed)
    tx = rng.uniform(0.0, D, size=(int(N), 2))
    rx = rng.uniform(0.0, D, size=(int(N), 2))
    rx[:, 0] += L
    return ClusterPair(float(D), float(L), tx, rx)


# ---------------------------------------------------------------------------
# Cluster grids and hierarchy
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ClusterGrid:
    """Square tiling given by its edge coordinates (shared by both axes).

    Rows index the y axis, columns the x axis. ``cell_side`` is the nominal
    side; edge cells may be wider when a remainder strip was absorbed.
    """

    edges: np.ndarray
    cell_side: float

    def __post_init__(self):
        e = _frozen(self.edges)
        if e.ndim != 1 or len(e) < 2 or np.any(np.diff(e) <= 0):
            raise InvalidArgument("edges must be strictly increasing")
        object.__setattr__(self, "edges", e)

    @classmethod
    def uniform(cls, count, side):
        """`count` x `count` grid of equal cells covering ``[0, side]^2``."""
        return cls(np.linspace(0.0, side, int(count) + 1), side / count)

    @property
    def shape(self):
        k = len(self.edges) - 1
        return k, k

    @property
    def centers_1d(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def center(self, row, col):
        c = self.centers_1d
        return np.array([c[col], c[row]])

    def bounds(self, row, col):
        """``(x0, x1, y0, y1)`` of a cell."""
        e = self.edges
        return e[col], e[col + 1], e[row], e[row + 1]

    def locate(self, points):
        """Flat cell index ``row * ncols + col`` for every point."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        k = len(self.edges) - 1
        col = np.clip(np.searchsorted(self.edges, pts[:, 0], side="right") - 1, 0, k - 1)
        row = np.clip(np.searchsorted(self.edges, pts[:, 1], side="right") - 1, 0, k - 1)
        return row * k + col


@dataclass(frozen=True)
class ClusterHierarchy:
    """Nested square partitions for levels ``0..h`` (level ``h`` is the network).

    ``membership[k][i]`` is the flat cell index of node ``i`` at level ``k``.
    ``ideal_counts`` holds ``n_k`` and ``realized_counts[k]`` the per-cell
    node counts actually observed.
    """

    levels: tuple
    areas: tuple
    membership: tuple
    branching: tuple
    ideal_counts: tuple
    realized_counts: tuple = field(default=())

    @property
    def h(self):
        return len(self.levels) - 1

    def parent_index(self, k, flat):
        """Level-``k+1`` cell containing level-``k`` cell `flat`."""
        r = self.branching[k + 1]
        ncols = self.levels[k].shape[1]
        row, col = divmod(int(flat), ncols)
        return (row // r) * self.levels[k + 1].shape[1] + col // r


def build_hierarchy(placement, n_seq):
    """Partition `placement` into the nested cluster grids of sizes `n_seq`.

    ``n_seq = (n_0, ..., n_h)`` with ``n_h`` the network size. Level ``k``
    cells have nominal area ``A_k = n_k / n`` (times ``side^2``). Each level-k
    cell is split into ``r x r`` children with ``r = floor(sqrt(n_k/n_{k-1}))``;
    the remainder strip is absorbed into the last child on each axis.
    """
    n_seq = [int(x) for x in n_seq]
    if len(n_seq) < 1 or any(x < 1 for x in n_seq):
        raise InvalidArgument("n_seq entries must be positive")
    if any(a > b for a, b in zip(n_seq, n_seq[1:])):
        raise InvalidArgument("n_seq must be nondecreasing")
    n = n_seq[-1]
    side = placement.side
    h = len(n_seq) - 1

    edges = [None] * (h + 1)
    branching = [1] * (h + 1)
    edges[h] = np.array([0.0, side])
    for k in range(h, 0, -1):
        child = side * math.sqrt(n_seq[k - 1] / n)
        r = max(1, int(math.floor(math.sqrt(n_seq[k] / n_seq[k - 1]) + 1e-12)))
        branching[k] = r
        parent = edges[k]
        new = []
        for p0, p1 in zip(parent[:-1], parent[1:]):
            new.extend(p0 + i * child for i in range(r))
        new.append(parent[-1])
        edges[k - 1] = np.array(new)

    levels = tuple(ClusterGrid(edges[k], side * math.sqrt(n_seq[k] / n)) for k in range(h + 1))
    membership = tuple(_frozen(g.locate(placement.points), dtype=np.int64) for g in levels)
    realized = tuple(
        _frozen(np.bincount(m, minlength=g.shape[0] * g.shape[1]), dtype=np.int64)
        for m, g in zip(membership, levels)
    )
    return ClusterHierarchy(
        levels=levels,
        areas=tuple(x / n for x in n_seq),
        membership=membership,
        branching=tuple(branching),
        ideal_counts=tuple(n_seq),
        realized_counts=realized,
    )


# ---------------------------------------------------------------------------
# 9-TDMA
# ---------------------------------------------------------------------------
def tdma9_slot(cluster_row, cluster_col):
    """TDMA slot in ``1..9``; clusters share a slot iff row and column agree mod 3."""
    return 3 * (cluster_row % 3) + (cluster_col % 3) + 1


def interferer_subgroups(v, grid):
    """Split the clusters sharing `v`'s 9-TDMA slot into distance rings.

    Parameters
    ----------
    v : (row, col)
        The victim cluster.
    grid : ClusterGrid or (nrows, ncols)

    Returns
    -------
    list of list of (row, col)
        Entry ``i-1`` is ring ``i``: same-slot clusters at grid (Chebyshev)
        distance ``3i`` from `v`. Ring ``i`` has at most ``8i`` members and
        all of them have center distance at least ``3i`` cell sides. Empty
        list when no other cluster shares the slot.
    """
    nrows, ncols = grid.shape if isinstance(grid, ClusterGrid) else grid
    r0, c0 = v
    if not (0 <= r0 < nrows and 0 <= c0 < ncols):
        raise InvalidArgument(f"cluster {v} outside a {nrows}x{ncols} grid")
    rings = {}
    for r in range(r0 % 3, nrows, 3):
        for c in range(c0 % 3, ncols, 3):
            if (r, c) == (r0, c0):
                continue
            i = max(abs(r - r0), abs(c - c0)) // 3
            rings.setdefault(i, []).append((r, c))
    if not rings:
        return []
    return [rings.get(i, []) for i in range(1, max(rings) + 1)]


# ---------------------------------------------------------------------------
# Transmit-pair classification and angles
# ---------------------------------------------------------------------------
class Region(enum.Enum):
    GAMMA1 = "gamma1"  # line through the transmit pair meets the receive square
    GAMMA2 = "gamma2"


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def classify_region(z_u, z_v, pair):
    """Classify a transmit pair by whether its line meets the receive square.

    The test is exact: the line meets the closed square iff the square's
    corners do not all lie strictly on one side of it. Touching counts as
    ``GAMMA1``.
    """
    u = np.asarray(z_u, dtype=float)
    v = np.asarray(z_v, dtype=float)
    if np.array_equal(u, v):
        raise InvalidArgument("transmit points coincide")
    side = _cross(v - u, pair.rx_corners - u)
    if side.min() <= 0.0 <= side.max():
        return Region.GAMMA1
    return Region.GAMMA2


def angle_phi(z_u, z_v, z_s):
    """Counterclockwise angle at `z_s` from `z_v` to `z_u`, in ``(-pi, pi]``."""
    u = np.asarray(z_u, dtype=float)
    v = np.asarray(z_v, dtype=float)
    s = np.asarray(z_s, dtype=float)
    a = v - s
    b = u - s
    if not (np.any(a) and np.any(b)):
        raise InvalidArgument("vertex coincides with an endpoint")
    if np.array_equal(u, v):
        raise InvalidArgument("points must be distinct")
    ang = math.atan2(float(_cross(a, b)), float(np.dot(a, b)))
    return math.pi if ang == -math.pi else ang


def angles_phi(z_u, z_v, z_s):
    """Vectorised :func:`angle_phi` over an ``(m, 2)`` array of vertices."""
    s = np.asarray(z_s, dtype=float).reshape(-1, 2)
    a = np.asarray(z_v, dtype=float) - s
    b = np.asarray(z_u, dtype=float) - s
    ang = np.arctan2(_cross(a, b), np.einsum("ij,ij->i", a, b))
    return np.where(ang == -np.pi, np.pi, ang)


def phi_corner_min(z_u, z_v, pair):
    """Smallest ``|angle_phi|`` over the four receive-square corners.

    Only defined for ``GAMMA2`` pairs; for those it lower-bounds
    ``|angle_phi(z_u, z_v, z_s)|`` over the whole receive square.
    """
    if classify_region(z_u, z_v, pair) is not Region.GAMMA2:
        raise PreconditionError("corner angle bound needs a GAMMA2 transmit pair")
    return float(np.min(np.abs(angles_phi(z_u, z_v, pair.rx_corners))))
