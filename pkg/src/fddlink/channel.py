"""Geometric multipath channel model for a ULA base station.

Narrowband uplink/downlink channels are synthesized as weighted sums of
steering vectors.  Angles, path amplitudes, traversed distances, and the
number of paths are shared between the two bands; only the wavelength and
the per-path reflection phases differ, so the bands are not reciprocal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array plus the UL/DL carrier wavelengths (meters)."""

    num_antennas: int
    spacing: float
    lambda_ul: float
    lambda_dl: float

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError(f"num_antennas must be >= 1, got {self.num_antennas}")
        for name in ("spacing", "lambda_ul", "lambda_dl"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v}")


@dataclass(frozen=True)
class ChannelPath:
    """One propagation path: AoA, amplitude, distance, and per-band phases.

    theta is in [-pi/2, pi/2]; phases are in [0, 2*pi).  The amplitude and
    geometry are band-invariant, the reflection phases are not.
    """

    theta: float
    beta: float
    distance: float
    phase_ul: float
    phase_dl: float

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"path amplitude must be nonnegative, got {self.beta}")
        if not -math.pi / 2 <= self.theta <= math.pi / 2:
            raise ValueError(f"theta out of [-pi/2, pi/2]: {self.theta}")


@dataclass(frozen=True)
class PathSet:
    """Ordered collection of paths for one user; path index is meaningful."""

    paths: tuple[ChannelPath, ...]

    def __post_init__(self):
        if len(self.paths) < 1:
            raise ValueError("a PathSet needs at least one path")
        object.__setattr__(self, "paths", tuple(self.paths))

    def __len__(self):
        return len(self.paths)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([p.theta for p in self.paths])

    @property
    def betas(self) -> np.ndarray:
        return np.array([p.beta for p in self.paths])

    @property
    def distances(self) -> np.ndarray:
        return np.array([p.distance for p in self.paths])

    @property
    def phases_ul(self) -> np.ndarray:
        return np.array([p.phase_ul for p in self.paths])

    @property
    def phases_dl(self) -> np.ndarray:
        return np.array([p.phase_dl for p in self.paths])


@dataclass(frozen=True)
class EstimationNoise:
    """Perturbation levels emulating imperfect AoA/amplitude estimation."""

    aoa_sigma: float = 0.0
    gain_rel_sigma: float = 0.0

    def __post_init__(self):
        if self.aoa_sigma < 0 or self.gain_rel_sigma < 0:
            raise ValueError("noise sigmas must be nonnegative")


def array_response(theta: float, wavelength: float, geom: ArrayGeometry) -> np.ndarray:
    """Steering vector of the ULA for angle ``theta`` at ``wavelength``.

    Element n (0-based) is exp(-j * (2*pi/wavelength) * n * d * sin(theta)),
    so element 0 is always 1 and every element has unit magnitude.
    """
    if not (np.isfinite(theta) and np.isfinite(wavelength)):
        raise ValueError("theta and wavelength must be finite")
    if wavelength <= 0:
        raise ValueError(f"wavelength must be positive, got {wavelength}")
    n = np.arange(geom.num_antennas)
    return np.exp(-1j * (TWO_PI / wavelength) * n * geom.spacing * math.sin(theta))


def steering_matrix(thetas, wavelength: float, geom: ArrayGeometry) -> np.ndarray:
    """N x L matrix whose columns are steering vectors at the given angles."""
    thetas = np.asarray(thetas, dtype=float)
    n = np.arange(geom.num_antennas)[:, None]
    return np.exp(-1j * (TWO_PI / wavelength) * n * geom.spacing * np.sin(thetas)[None, :])


def dl_path_gains(ps: PathSet, geom: ArrayGeometry) -> np.ndarray:
    """Complex DL gain per path: beta * exp(j*(-2*pi*r/lambda_dl + phi_dl))."""
    return ps.betas * np.exp(1j * (-TWO_PI * ps.distances / geom.lambda_dl + ps.phases_dl))


def ul_path_gains(ps: PathSet, geom: ArrayGeometry) -> np.ndarray:
    """Complex UL gain per path: beta * exp(j*(-2*pi*r/lambda_ul + phi_ul))."""
    return ps.betas * np.exp(1j * (-TWO_PI * ps.distances / geom.lambda_ul + ps.phases_ul))


def dl_channel(ps: PathSet, geom: ArrayGeometry) -> np.ndarray:
    """Narrowband DL channel: sum of steering vectors weighted by DL gains."""
    a = steering_matrix(ps.thetas, geom.lambda_dl, geom)
    return a @ dl_path_gains(ps, geom)


def ul_channel(ps: PathSet, geom: ArrayGeometry) -> np.ndarray:
    """Narrowband UL channel: sum of steering vectors weighted by UL gains."""
    a = steering_matrix(ps.thetas, geom.lambda_ul, geom)
    return a @ ul_path_gains(ps, geom)


def dl_phases(ps: PathSet, geom: ArrayGeometry) -> np.ndarray:
    """Phase of each DL path gain, reduced to [0, 2*pi)."""
    return np.mod(-TWO_PI * ps.distances / geom.lambda_dl + ps.phases_dl, TWO_PI)


def path_loss(distance: float, cfg) -> float:
    """Log-distance path loss as a linear power gain.

    PL(d) = cfg.pl_ref_gain * (d / cfg.pl_ref_distance)^(-cfg.pl_exponent),
    with the reference gain in linear scale.
    """
    if not np.isfinite(distance) or distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    return cfg.pl_ref_gain * (distance / cfg.pl_ref_distance) ** (-cfg.pl_exponent)


def power_decay_profile(num_paths: int, decay_ratio: float) -> np.ndarray:
    """Per-path power weights w_l proportional to decay_ratio**l, summing to 1."""
    if not 0 < decay_ratio <= 1:
        raise ValueError(f"decay_ratio must be in (0, 1], got {decay_ratio}")
    w = decay_ratio ** np.arange(num_paths, dtype=float)
    return w / w.sum()


def draw_user_paths(cfg, rng: np.random.Generator) -> PathSet:
    """Draw one user's multipath geometry.

    The user lands uniformly in a disc of radius ISD/2 around the BS.  AoAs
    are i.i.d. uniform on [-pi/2, pi/2], reflection phases i.i.d. uniform on
    [0, 2*pi) and independent across bands.  Per-path power follows the
    geometric decay profile applied to the user-level path loss, and each
    path adds a uniform excess distance affecting only its phase.
    """
    L = cfg.n_paths
    radius = cfg.isd / 2.0
    r_user = radius * math.sqrt(rng.uniform())
    r_user = max(r_user, cfg.pl_ref_distance)  # keep the path-loss model in range
    pl = path_loss(r_user, cfg)
    weights = power_decay_profile(L, cfg.decay_ratio)
    betas = np.sqrt(pl * weights)
    thetas = rng.uniform(-math.pi / 2, math.pi / 2, size=L)
    dists = r_user + rng.uniform(0.0, cfg.excess_range, size=L)
    phis_ul = rng.uniform(0.0, TWO_PI, size=L)
    phis_dl = rng.uniform(0.0, TWO_PI, size=L)
    return PathSet(tuple(
        ChannelPath(theta=thetas[i], beta=betas[i], distance=dists[i],
                    phase_ul=phis_ul[i], phase_dl=phis_dl[i])
        for i in range(L)
    ))


def draw_scene(cfg, rng: np.random.Generator) -> list[PathSet]:
    """Draw independent multipath geometry for each of cfg.n_users users."""
    return [draw_user_paths(cfg, rng) for _ in range(cfg.n_users)]


def perturb_estimates(ps: PathSet, noise: EstimationNoise, rng: np.random.Generator) -> PathSet:
    """Emulate imperfect AoA/amplitude estimation on a path set.

    AoAs get additive Gaussian error clamped to [-pi/2, pi/2]; amplitudes get
    relative Gaussian error clamped at zero.  Distances and phases are left
    untouched (the estimator never observes them directly).
    """
    out = []
    for p in ps.paths:
        theta = p.theta
        if noise.aoa_sigma > 0:
            theta = float(np.clip(theta + rng.normal(0.0, noise.aoa_sigma),
                                  -math.pi / 2, math.pi / 2))
        beta = p.beta
        if noise.gain_rel_sigma > 0:
            beta = max(beta * (1.0 + rng.normal(0.0, noise.gain_rel_sigma)), 0.0)
        out.append(ChannelPath(theta=theta, beta=beta, distance=p.distance,
                               phase_ul=p.phase_ul, phase_dl=p.phase_dl))
    return PathSet(tuple(out))
