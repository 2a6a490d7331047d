"""Line-of-sight channel gains with distance-dependent phase.

``H_ik = sqrt(G) * d_ik^(-alpha/2) * exp(-j 2 pi d_ik / lambda)``; the
free-space case is ``alpha = 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, SingularityError

REGIMES = ("dense", "extended")


@dataclass(frozen=True)
class NetworkConfig:
    """Physical parameters shared by the channel, MIMO and planner code.

    Parameters
    ----------
    n : int
        Number of nodes.
    regime : {"dense", "extended"}
        Unit-area network or area-`n` network.
    lam : float
        Wavelength, in the same length unit as node coordinates.
    alpha : float
        Path-loss exponent (2 is free space).
    P : float
        Average transmit power per node.
    G : float
        Aggregate Friis gain.
    mu : float
        Wavelength floor exponent: ``lam >= n**-mu`` is required.
    Q : int
        Quantization rate, in subblocks per time slot.
    far_field : float
        Safety factor ``k < 1`` with ``lam < k * spacing``.
    check_scale : bool
        Enforce the far-field and wavelength-floor constraints. Turn off for
        isolated link computations that have no network around them.
    """

    n: int
    regime: str = "dense"
    lam: float = 1e-3
    alpha: float = 2.0
    P: float = 1.0
    G: float = 1.0
    mu: float = 1.0
    Q: int = 3
    far_field: float = 0.5
    check_scale: bool = True

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise InvalidArgument(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidArgument(f"n must be a positive integer, got {self.n!r}")
        if not self.lam > 0:
            raise InvalidArgument("wavelength must be positive")
        if not self.alpha >= 2:
            raise InvalidArgument(f"path-loss exponent must be >= 2, got {self.alpha}")
        if not (self.P > 0 and self.G > 0):
            raise InvalidArgument("P and G must be positive")
        if int(self.Q) != self.Q or self.Q < 1:
            raise InvalidArgument("Q must be a positive integer")
        if not self.mu > 0.5:
            raise InvalidArgument("mu must exceed 1/2")
        if not 0 < self.far_field < 1:
            raise InvalidArgument("far-field safety factor must lie in (0, 1)")
        if self.check_scale:
            if self.lam >= self.far_field * self.spacing:
                raise InvalidArgument(
                    f"wavelength {self.lam} not small against node spacing {self.spacing}")
            if self.lam < self.n ** (-self.mu):
                raise InvalidArgument(f"wavelength below n^-mu = {self.n ** -self.mu}")

    @property
    def spacing(self):
        """Typical inter-node distance: ``n^-1/2`` (dense) or 1 (extended)."""
        return self.n ** -0.5 if self.regime == "dense" else 1.0

    @classmethod
    def link(cls, lam, G=1.0, alpha=2.0, P=1.0):
        """Config for a standalone link or cluster pair (no scale checks)."""
        return cls(n=1, lam=lam, G=G, alpha=alpha, P=P, check_scale=False)


def friis_gain(lam, Gl, regime="dense", n=1):
    """Friis aggregate gain ``lam^2 Gl / (16 pi^2)``.

    `regime` and `n` are accepted for symmetry with the gain conventions:
    callers reach ``G = Theta(1)`` (extended) or ``G = Theta(1/n)`` (dense)
    by scaling `Gl`, e.g. ``Gl ~ lam^-2 / n`` for dense networks.
    """
    if not (lam > 0 and Gl > 0):
        raise InvalidArgument("wavelength and antenna gain must be positive")
    if regime not in REGIMES:
        raise InvalidArgument(f"unknown regime {regime!r}")
    if n < 1:
        raise InvalidArgument("n must be positive")
    return lam * lam * Gl / (16.0 * math.pi ** 2)


def phase_cycles(d, lam):
    """Fractional wavelengths ``(d / lam) mod 1``, reduced in extended precision."""
    q = np.asarray(d, dtype=np.longdouble) / np.longdouble(lam)
    return np.asarray(q - np.floor(q), dtype=float)


def channel_gain(d, config):
    """Complex gain at distance `d` (scalar or array)."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0):
        raise SingularityError("channel gain needs positive distances")
    mag = math.sqrt(config.G) * d_arr ** (-config.alpha / 2)
    g = mag * np.exp(-2j * math.pi * phase_cycles(d_arr, config.lam))
    return complex(g) if g.ndim == 0 else g


@dataclass(frozen=True)
class ChannelMatrix:
    """Receive-by-transmit gain matrix together with what produced it."""

    entries: np.ndarray
    tx: np.ndarray
    rx: np.ndarray
    config: NetworkConfig

    @property
    def shape(self):
        return self.entries.shape

    @property
    def distances(self):
        return pairwise_distances(self.tx, self.rx)

    def normalized(self, L):
        """``F = L^(alpha/2) / sqrt(G) * H``: unit-scale amplitudes ``(L/d)^(alpha/2)``."""
        return self.entries * (L ** (self.config.alpha / 2) / math.sqrt(self.config.G))


def pairwise_distances(tx, rx):
    """``d[i, k]`` between receiver ``i`` and transmitter ``k``."""
    tx = np.asarray(tx, dtype=float).reshape(-1, 2)
    rx = np.asarray(rx, dtype=float).reshape(-1, 2)
    diff = rx[:, None, :] - tx[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def channel_matrix(tx, rx, config):
    """Gain matrix from transmitters `tx` to receivers `rx` (rows = receivers)."""
    tx = np.array(tx, dtype=float).reshape(-1, 2)
    rx = np.array(rx, dtype=float).reshape(-1, 2)
    d = pairwise_distances(tx, rx)
    if np.any(d == 0):
        raise SingularityError("a transmitter and a receiver coincide")
    H = np.atleast_2d(channel_gain(d, config))
    for a in (H, tx, rx):
        a.setflags(write=False)
    return ChannelMatrix(H, tx, rx, config)
