"""Monte Carlo estimation of configuration events and eta moments.

Two events control the probabilistic side of the scaling analysis: the
no-close-pairs event (all nearest-neighbor distances exceed 2*L*eps^alpha)
and the bounded-smearing event (the sup of the cube-smeared empirical
density stays below 16 times the density's sup norm).  Alongside these,
negative and positive moments of the truncation scale eta are estimated
both by direct Monte Carlo and by an independent layer-cake integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from . import kernels
from .errors import ParameterError, SamplerError
from .geometry import DensityModel, ParticleConfiguration
from .rng import stream

__all__ = [
    "EventEstimate",
    "SmearedDensity",
    "wilson_interval",
    "indicator_A",
    "indicator_B",
    "smeared_density_sup",
    "estimate_event_probability",
    "eta_moment",
    "eta_moment_samples",
    "eta_moment_bound",
    "d1_samples",
    "min_distance_lower_bound",
    "sample_in_A",
]

_Z95 = 1.959963984540054


def wilson_interval(successes: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ParameterError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class EventEstimate:
    """Binomial estimate with its 95% Wilson interval."""

    trials: int
    successes: int

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials

    @cached_property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.trials)

    @property
    def ci_low(self) -> float:
        return self.interval[0]

    @property
    def ci_high(self) -> float:
        return self.interval[1]

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low


# ----------------------------------------------------------------------
# event A: no close pairs
# ----------------------------------------------------------------------

def indicator_A(config: ParticleConfiguration, L: float, alpha_thresh: float) -> bool:
    """True iff every nearest-neighbor distance is >= 2*L*eps^alpha_thresh."""
    if L <= 0:
        raise ParameterError("L must be positive")
    if config.n == 1:
        return True
    return bool(config.nn_dist.min() >= 2.0 * L * config.eps**alpha_thresh)


def min_distance_lower_bound(rho_sup: float, L: float) -> float:
    """Quoted probability lower bound exp(-4*pi*sup(rho)*L^3/3) for the event."""
    return math.exp(-4.0 * math.pi * rho_sup * L**3 / 3.0)


def sample_in_A(density: DensityModel, n: int, seed: int, alpha: float,
                L: float = 1.0, max_tries: int = 100) -> ParticleConfiguration:
    """Sample a configuration conditioned on the no-close-pairs event.

    The corrector construction is defined only when every hole fits inside
    its truncation ball, which the event guarantees; rejection over
    replicate streams keeps the draw deterministic per seed.
    """
    from .rng import stream as _stream

    for t in range(max_tries):
        centers = density.sample(_stream(seed, t), n)
        cfg = ParticleConfiguration(centers=centers, alpha=alpha)
        if indicator_A(cfg, L, alpha):
            return cfg
    raise SamplerError(
        f"no configuration in the no-close-pairs event after {max_tries} draws"
    )


# ----------------------------------------------------------------------
# event B: bounded smeared density
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SmearedDensity:
    """Empirical density averaged over cubes of side eps^(1-lambda).

    Each of the N congruent cubes carries mass 1/N, so the value at a
    point is (number of covering cubes) / (N * eps^(3*(1-lambda))).
    """

    config: ParticleConfiguration
    lam: float

    def __post_init__(self):
        if not (0.0 < self.lam < 1.0):
            raise ParameterError("lambda must lie in (0, 1)")

    @property
    def side(self) -> float:
        return self.config.eps ** (1.0 - self.lam)

    @property
    def value_per_cube(self) -> float:
        n = self.config.n
        return 1.0 / (n * self.config.eps ** (3.0 * (1.0 - self.lam)))

    def multiplicity(self, points) -> np.ndarray:
        """Number of covering cubes at each query point (exact, brute force)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        gap = np.abs(pts[:, None, :] - self.config.centers[None, :, :]).max(axis=2)
        return (gap <= self.side / 2.0).sum(axis=1)

    def value(self, points) -> np.ndarray:
        return self.multiplicity(points) * self.value_per_cube

    @cached_property
    def sup(self) -> float:
        m = kernels.max_cover_multiplicity(self.config.centers, self.side)
        return m * self.value_per_cube


def smeared_density_sup(config: ParticleConfiguration, lam: float) -> float:
    """Exact sup of the smeared density (coordinate-compression sweep)."""
    return SmearedDensity(config, lam).sup


def _cover_upper_bound(centers: np.ndarray, side: float, refine: int = 8) -> int:
    """Sound upper bound on the max cube-cover multiplicity.

    Counts points on a grid of cell side/refine; any cube intersects at
    most (refine+1) consecutive cells per axis, so the max block sum over
    windows of that size dominates the true maximum.
    """
    h = side / refine
    lo = centers.min(axis=0)
    idx = np.floor((centers - lo) / h).astype(np.int64)
    dims = idx.max(axis=0) + 1
    counts = np.zeros(dims, dtype=np.int64)
    np.add.at(counts, (idx[:, 0], idx[:, 1], idx[:, 2]), 1)
    w = refine + 1
    pad = np.zeros(dims + 2 * w, dtype=np.int64)
    pad[w:-w, w:-w, w:-w] = counts
    cs = pad.cumsum(axis=0).cumsum(axis=1).cumsum(axis=2)
    # block sums over all w-anchored windows via inclusion-exclusion
    a = cs[w:, w:, w:]
    b = cs[:-w, w:, w:]
    c = cs[w:, :-w, w:]
    d = cs[w:, w:, :-w]
    e = cs[:-w, :-w, w:]
    f = cs[:-w, w:, :-w]
    g = cs[w:, :-w, :-w]
    k = cs[:-w, :-w, :-w]
    block = a - b - c - d + e + f + g - k
    return int(block.max())


def indicator_B(config: ParticleConfiguration, lam: float, rho_sup: float) -> bool:
    """True iff sup of the smeared density <= 16 * sup(rho).

    Decided by a sound coarse-grid certificate when possible, otherwise by
    the exact sweep, so the hard threshold is never misclassified.
    """
    sm = SmearedDensity(config, lam)
    thresh = 16.0 * rho_sup / sm.value_per_cube  # multiplicity threshold
    upper = _cover_upper_bound(config.centers, sm.side)
    if upper <= thresh:
        return True
    m = kernels.max_cover_multiplicity(config.centers, sm.side)
    return m <= thresh


# ----------------------------------------------------------------------
# Monte Carlo event probability
# ----------------------------------------------------------------------

def estimate_event_probability(
    event: Callable[[ParticleConfiguration], bool],
    density: DensityModel,
    n: int,
    trials: int,
    seed: int,
    alpha: float = 2.5,
) -> EventEstimate:
    """Frequency of ``event`` over independent replicate configurations.

    Replicate k draws its centers from the counter-based stream
    ``(seed, k)``, so the estimate is deterministic for a fixed seed no
    matter how replicates are scheduled.
    """
    if trials < 30:
        raise ParameterError("trials >= 30 required")
    successes = 0
    for k in range(trials):
        centers = density.sample(stream(seed, k), n)
        cfg = ParticleConfiguration(centers=centers, alpha=alpha)
        if event(cfg):
            successes += 1
    return EventEstimate(trials=trials, successes=successes)


# ----------------------------------------------------------------------
# moments of the truncation scale
# ----------------------------------------------------------------------

def _validate_eta_params(n, beta, m_eta, kappa, alpha):
    if kappa <= -3.0:
        raise ParameterError("kappa must exceed -3 (the moment diverges otherwise)")
    if not (1.0 <= beta <= alpha):
        raise ParameterError("beta must lie in [1, alpha]")
    if not (0.0 < m_eta <= 1.0):
        raise ParameterError("m_eta must lie in (0, 1]")
    if beta == alpha and m_eta != 1.0:
        raise ParameterError("m_eta must equal 1 when beta == alpha")
    if n < 2:
        raise ParameterError("need n >= 2 for a nearest-neighbor distance")


def eta_moment_samples(
    density: DensityModel,
    n: int,
    beta: float,
    m_eta: float,
    kappa: float,
    trials: int,
    seed: int,
    alpha: float = 2.5,
) -> np.ndarray:
    """I.i.d. samples of eta_1^kappa, one per replicate configuration.

    Only the first particle's nearest-neighbor distance enters, so each
    trial costs O(n).
    """
    _validate_eta_params(n, beta, m_eta, kappa, alpha)
    eps = float(n) ** (-1.0 / 3.0)
    cap = m_eta * eps**beta
    out = np.empty(trials)
    for k in range(trials):
        pts = density.sample(stream(seed, k), n)
        d1 = math.sqrt(((pts[1:] - pts[0]) ** 2).sum(axis=1).min())
        out[k] = min(cap, d1) ** kappa
    return out


def eta_moment(
    density: DensityModel,
    n: int,
    beta: float,
    m_eta: float,
    kappa: float,
    trials: int,
    seed: int,
    mode: str = "monte-carlo",
    cdf: str = "monte-carlo",
    alpha: float = 2.5,
    grid_nodes: int = 400,
) -> float:
    """E[eta_1^kappa] by Monte Carlo or by the layer-cake integral.

    ``monte-carlo`` averages eta^kappa over replicate configurations.
    ``layer-cake-oracle`` integrates the survival function of eta^kappa
    over a geometric grid anchored at the pointwise bound (m*eps^beta)^kappa.
    The distribution of d_1 entering the oracle is either an empirical CDF
    from fresh Monte Carlo samples (``cdf="monte-carlo"``, unbiased) or
    the closed form 1 - (1 - sup(rho)*(4/3)pi*s^3)^(n-1) valid for a
    uniform box away from the support boundary (``cdf="closed-form"``;
    the boundary depletion is an acknowledged bias of order surface/volume).
    """
    _validate_eta_params(n, beta, m_eta, kappa, alpha)
    eps = float(n) ** (-1.0 / 3.0)
    cap = m_eta * eps**beta
    if kappa == 0.0:
        return 1.0

    if mode == "monte-carlo":
        vals = eta_moment_samples(density, n, beta, m_eta, kappa, trials, seed, alpha)
        mean = float(np.add.reduce(vals) / trials)
        # pointwise lower bound for negative exponents: eta <= cap always
        if kappa < 0:
            assert mean >= cap**kappa * (1.0 - 1e-12)
        return mean
    if mode != "layer-cake-oracle":
        raise ParameterError(f"unknown mode {mode!r}")

    if cdf == "closed-form":
        if density.kind != "uniform-box":
            raise ParameterError("closed-form CDF is valid for uniform-box densities only")
        cdf_fn = _closed_form_cdf(density, n)
    elif cdf == "monte-carlo":
        samples = np.sort(d1_samples(density, n, trials, seed))
        def cdf_fn(s):
            return np.searchsorted(samples, s, side="right") / len(samples)
    else:
        raise ParameterError(f"unknown cdf flavor {cdf!r}")

    return _layer_cake_integral(cdf_fn, cap, kappa, n, density.sup_norm, grid_nodes)


def d1_samples(density, n, trials, seed) -> np.ndarray:
    """I.i.d. samples of the first particle's nearest-neighbor distance."""
    out = np.empty(trials)
    for k in range(trials):
        pts = density.sample(stream(seed, k), n)
        out[k] = math.sqrt(((pts[1:] - pts[0]) ** 2).sum(axis=1).min())
    return out


def _closed_form_cdf(density: DensityModel, n: int):
    rho = density.sup_norm
    c = rho * 4.0 / 3.0 * math.pi

    def cdf(s):
        s = np.asarray(s, dtype=np.float64)
        base = np.clip(1.0 - c * s**3, 0.0, 1.0)
        return 1.0 - base ** (n - 1)

    return cdf


def _layer_cake_integral(cdf, cap, kappa, n, rho_sup, grid_nodes) -> float:
    """Integrate the layer-cake representation of E[min(cap, d_1)^kappa].

    Substituting t = s^kappa turns the geometric t-grid anchored at the
    pointwise bound cap^kappa into a geometric s-grid below the cap:
    kappa<0: E = cap^kappa + |kappa| * int_0^cap F(s) s^(kappa-1) ds,
    kappa>0: E = kappa * int_0^cap (1 - F(s)) s^(kappa-1) ds,
    with the [0, s_lo] remainder handled in closed form.
    """
    s_lo = cap * 1e-5
    s = np.geomspace(s_lo, cap, grid_nodes)
    if kappa < 0.0:
        g = cdf(s) * s ** (kappa - 1.0)
        integral = float(np.trapezoid(g, s))
        # small-s tail: F(s) ~= (n-1)*rho*(4/3)pi*s^3 exactly to first order
        c3 = (n - 1) * rho_sup * 4.0 / 3.0 * math.pi
        tail = c3 * s_lo ** (3.0 + kappa) / (3.0 + kappa)
        return cap**kappa + abs(kappa) * (integral + tail)
    g = (1.0 - cdf(s)) * s ** (kappa - 1.0)
    integral = float(np.trapezoid(g, s))
    head = s_lo**kappa  # survival ~= 1 on [0, s_lo]
    return kappa * integral + head


def eta_moment_bound(n: int, beta: float, m_eta: float, kappa: float) -> float:
    """Shape of the moment bound: m^kappa * (1 + eps^(3(beta-1))) * eps^(beta*kappa)."""
    eps = float(n) ** (-1.0 / 3.0)
    return m_eta**kappa * (1.0 + eps ** (3.0 * (beta - 1.0))) * eps ** (beta * kappa)
