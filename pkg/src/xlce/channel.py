"""Near-field, dual-wideband ground-truth channel simulator.

The array is a uniform linear array at half-wavelength spacing, split into
equally sized subarrays. Each propagation path is parameterized by a
complex gain, an arrival angle and a distance; the induced per-antenna
phase has both a linear and a quadratic term in the antenna index
(spherical wavefront), and every subcarrier sees an additional
frequency-scaled phase ramp (beam squint).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import SPEED_OF_LIGHT, rng_from_seed

DEFAULT_RANGE_M = (10.0, 50.0)
"""Default scatterer distance window, in meters."""


@dataclass(frozen=True)
class SystemConfig:
    """Static geometry and pilot dimensioning of one deployment.

    n_t      total antennas (uniform linear array)
    m_sub    number of subarrays; must divide n_t
    k_sc     pilot subcarriers
    f_c      carrier frequency in Hz
    f_s      subcarrier spacing of the pilot grid in Hz
    n_rf     RF chains per subarray
    p_slots  pilot time slots
    """

    n_t: int
    m_sub: int
    k_sc: int
    f_c: float
    f_s: float
    n_rf: int = 1
    p_slots: int = 8

    def __post_init__(self) -> None:
        if self.n_t < 1 or self.m_sub < 1 or self.k_sc < 1:
            raise ValueError("n_t, m_sub and k_sc must be positive")
        if self.n_t % self.m_sub != 0:
            raise ValueError(f"n_t={self.n_t} is not divisible by m_sub={self.m_sub}")
        if self.f_c <= 0 or self.f_s <= 0:
            raise ValueError("carrier frequency and bandwidth must be positive")
        if self.n_rf < 1 or self.p_slots < 1:
            raise ValueError("n_rf and p_slots must be positive")

    @property
    def n_sub(self) -> int:
        """Antennas per subarray."""
        return self.n_t // self.m_sub

    @property
    def wavelength(self) -> float:
        """Carrier wavelength in meters."""
        return SPEED_OF_LIGHT / self.f_c

    @property
    def spacing(self) -> float:
        """Antenna spacing d = lambda_c / 2, in meters."""
        return 0.5 * self.wavelength

    @property
    def q_beams(self) -> int:
        """Total receive beams per subarray, n_rf * p_slots."""
        return self.n_rf * self.p_slots

    def subcarriers(self) -> np.ndarray:
        """Pilot subcarrier frequencies f_k = f_c + f_s * (k - 1)."""
        return self.f_c + self.f_s * np.arange(self.k_sc)


@dataclass(frozen=True)
class PathParams:
    """One propagation path and its derived phase parameters.

    psi is the normalized spatial frequency d*cos(theta)/lambda_c and phi
    the quadratic (distance-dependent) curvature d^2*sin^2(theta) /
    (2*r*lambda_c); tau = r / c is the path delay.
    """

    alpha: complex
    theta: float
    r: float
    tau: float
    psi: float
    phi: float

    @classmethod
    def from_geometry(cls, alpha: complex, theta: float, r: float, cfg: SystemConfig) -> "PathParams":
        """Fill the derived delay/phase fields from (gain, angle, distance)."""
        if r <= 0:
            raise ValueError(f"path distance must be positive, got {r}")
        d = cfg.spacing
        lam = cfg.wavelength
        return cls(
            alpha=complex(alpha),
            theta=float(theta),
            r=float(r),
            tau=float(r / SPEED_OF_LIGHT),
            psi=float(d * np.cos(theta) / lam),
            phi=float(d * d * np.sin(theta) ** 2 / (2.0 * r * lam)),
        )


@dataclass(frozen=True)
class ChannelRealization:
    """Ground-truth spatial-frequency channel plus its generating paths."""

    h: np.ndarray  # (n_t, k_sc) complex
    paths: tuple[PathParams, ...] = field(default=())


def draw_paths(
    cfg: SystemConfig,
    g_paths: int,
    seed: int,
    r_range: tuple[float, float] = DEFAULT_RANGE_M,
) -> list[PathParams]:
    """Draw i.i.d. path parameters.

    Angles are uniform on (-pi/2, pi/2), distances uniform on ``r_range``
    and complex gains circularly symmetric Gaussian with variance
    1/g_paths so the expected channel energy does not depend on the path
    count.
    """
    if g_paths < 1:
        raise ValueError(f"need at least one path, got {g_paths}")
    rng = rng_from_seed(seed)
    thetas = rng.uniform(-np.pi / 2, np.pi / 2, size=g_paths)
    dists = rng.uniform(r_range[0], r_range[1], size=g_paths)
    scale = np.sqrt(1.0 / (2.0 * g_paths))
    gains = scale * (rng.standard_normal(g_paths) + 1j * rng.standard_normal(g_paths))
    return [
        PathParams.from_geometry(gains[g], thetas[g], dists[g], cfg)
        for g in range(g_paths)
    ]


def steering_freq(tau: float, cfg: SystemConfig) -> np.ndarray:
    """Frequency-domain steering vector, entry k = exp(-2i*pi*f_k*tau)."""
    if tau < 0:
        raise ValueError(f"delay must be nonnegative, got {tau}")
    return np.exp(-2j * np.pi * cfg.subcarriers() * tau)


def steering_space(psi: float, phi: float, cfg: SystemConfig) -> np.ndarray:
    """Spatial steering vector over the full array.

    Entry j (0-based index) is exp(-2i*pi*(psi*j - phi*j^2)); the
    quadratic term carries the spherical-wavefront curvature and vanishes
    in the far field.
    """
    j = np.arange(cfg.n_t)
    return np.exp(-2j * np.pi * (psi * j - phi * j**2))


def phase_shift_matrix(psi: float, phi: float, cfg: SystemConfig) -> np.ndarray:
    """Frequency-dependent phase-shift matrix (beam squint).

    Entry (j, k) = exp(-2i*pi*f_k*(j*psi - j^2*phi)/f_c) with 0-based j;
    its f_k = f_c column reproduces the spatial steering vector exactly.
    """
    j = np.arange(cfg.n_t)[:, None]
    f = cfg.subcarriers()[None, :]
    return np.exp(-2j * np.pi * f * (j * psi - j**2 * phi) / cfg.f_c)


def assemble_channel(paths: list[PathParams], cfg: SystemConfig) -> ChannelRealization:
    """Sum the per-path rank-one terms into the (n_t, k_sc) channel."""
    if not paths:
        raise ValueError("cannot assemble a channel from an empty path list")
    h = np.zeros((cfg.n_t, cfg.k_sc), dtype=complex)
    for p in paths:
        b = steering_space(p.psi, p.phi, cfg)
        a = steering_freq(p.tau, cfg)
        h += p.alpha * np.outer(b, a) * phase_shift_matrix(p.psi, p.phi, cfg)
    return ChannelRealization(h=h, paths=tuple(paths))


def subarray_slice(chan: ChannelRealization | np.ndarray, m: int, cfg: SystemConfig) -> np.ndarray:
    """Rows of the channel that belong to subarray m (1-based)."""
    if not 1 <= m <= cfg.m_sub:
        raise IndexError(f"subarray index {m} outside 1..{cfg.m_sub}")
    h = chan.h if isinstance(chan, ChannelRealization) else np.asarray(chan)
    lo = (m - 1) * cfg.n_sub
    return h[lo : lo + cfg.n_sub]
