"""Exact Wasserstein-2 distances and power-law rate fitting.

All quadratic-transport numbers on acceptance paths come from an exact
assignment solve (compiled auction run to optimality, or the dense
Jonker-Volgenant fallback); there is no entropic smoothing anywhere.
General weights are reduced to equal atoms by exact weight splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats

from . import kernels
from .errors import ParameterError, SizeCapError
from .events import SmearedDensity
from .geometry import DensityModel, ParticleConfiguration
from .rng import stream

__all__ = [
    "DiscreteMeasure",
    "RateFit",
    "w2_assignment",
    "w2_plan_cost_smeared",
    "w2_empirical_vs_density",
    "fit_power_law",
]

_ASSIGNMENT_CAP = 4096
_SPLIT_CAP = 512
_EMPIRICAL_ATOM_CAP = 8192


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud: nonnegative weights summing to one."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ParameterError("points must be an (n, 3) array")
        if w.shape != (pts.shape[0],):
            raise ParameterError("weights must match the number of points")
        if np.any(w < 0):
            raise ParameterError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ParameterError("weights must sum to 1 within 1e-12")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n = pts.shape[0]
        return cls(points=pts, weights=np.full(n, 1.0 / n))

    @classmethod
    def from_config(cls, config: ParticleConfiguration) -> "DiscreteMeasure":
        return cls.uniform(config.centers)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


def _split_to_uniform(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Exact common-denominator weight splitting into equal atoms."""
    if mu.n > _SPLIT_CAP or nu.n > _SPLIT_CAP:
        raise SizeCapError(
            f"weight splitting supports at most {_SPLIT_CAP} points per side"
        )
    fracs = []
    for w in np.concatenate([mu.weights, nu.weights]):
        f = Fraction(float(w)).limit_denominator(_ASSIGNMENT_CAP)
        if abs(float(f) - float(w)) > 1e-12:
            raise ParameterError(
                "weight mismatch: weights are not commensurate with a common "
                f"denominator <= {_ASSIGNMENT_CAP}"
            )
        fracs.append(f)
    m = 1
    for f in fracs:
        m = m * f.denominator // math.gcd(m, f.denominator)
        if m > _ASSIGNMENT_CAP:
            raise SizeCapError(
                f"weight splitting would need more than {_ASSIGNMENT_CAP} atoms"
            )
    nm = len(mu.weights)
    counts_mu = [int(f * m) for f in fracs[:nm]]
    counts_nu = [int(f * m) for f in fracs[nm:]]
    if sum(counts_mu) != m or sum(counts_nu) != m:
        raise ParameterError("weight mismatch: weights do not sum to 1 exactly")
    a = np.repeat(mu.points, counts_mu, axis=0)
    b = np.repeat(nu.points, counts_nu, axis=0)
    return a, b


def w2_assignment(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact W2 between discrete probability measures.

    Uniform measures with equal counts go straight to the assignment
    solver (n <= 4096); general weights are split into equal atoms first
    (n <= 512 per side).  The result is symmetric and zero exactly when
    the weighted multisets coincide.
    """
    if mu.is_uniform() and nu.is_uniform() and mu.n == nu.n:
        if mu.n > _ASSIGNMENT_CAP:
            raise SizeCapError(f"assignment cap is {_ASSIGNMENT_CAP} points")
        a, b = mu.points, nu.points
    else:
        a, b = _split_to_uniform(mu, nu)
    perm = kernels.assignment(a, b)
    diff = a - b[perm]
    cost2 = float(np.add.reduce(np.einsum("ij,ij->i", diff, diff)) / len(a))
    return math.sqrt(cost2)


def w2_plan_cost_smeared(config: ParticleConfiguration, lam: float):
    """Cost of the explicit atom-to-cube plan against the smeared density.

    The plan pairs each center's atom (mass 1/N) with the uniform measure
    on its enlarged cube; its squared cost is the analytic second moment
    of a uniform cube about its center, side^2/4, identical for every
    cube.  Returns (plan_cost, sqrt(3)*eps^(1-lambda)); the bound is the
    cube diameter and always dominates.
    """
    sm = SmearedDensity(config, lam)
    side = sm.side
    plan_cost = math.sqrt(side**2 / 4.0)
    bound = math.sqrt(3.0) * config.eps ** (1.0 - lam)
    return plan_cost, bound


def w2_empirical_vs_density(
    density: DensityModel,
    config: ParticleConfiguration,
    seed: int,
    ref_samples: int | None = None,
) -> float:
    """Surrogate W2 between the empirical measure and its density.

    Replicates the N centers r times and solves the exact assignment
    against r*N i.i.d. reference draws from the density.  The surrogate
    upper-bounds the true W2(rho_N, rho) in expectation up to the
    reference sample's own fluctuation, which decays with r.
    """
    n = config.n
    if n > 2048:
        raise SizeCapError("w2_empirical_vs_density supports N <= 2048")
    if ref_samples is None:
        ref_samples = min(16 * n, _EMPIRICAL_ATOM_CAP // n * n)
    r = int(round(ref_samples / n))
    total = r * n
    if total < 4 * n:
        raise ParameterError("ref_samples must be at least 4*N")
    if total > _EMPIRICAL_ATOM_CAP:
        raise SizeCapError(f"reference sample cap is {_EMPIRICAL_ATOM_CAP}")
    ref = density.sample(stream(seed), total)
    a = np.repeat(config.centers, r, axis=0)
    perm = kernels.assignment(a, ref)
    diff = a - ref[perm]
    cost2 = float(np.add.reduce(np.einsum("ij,ij->i", diff, diff)) / total)
    return math.sqrt(cost2)


@dataclass(frozen=True)
class RateFit:
    """Least-squares power-law fit on log-log axes with a slope CI."""

    log_x: np.ndarray
    log_y: np.ndarray
    slope: float
    intercept: float
    slope_ci: tuple[float, float]

    @property
    def n(self) -> int:
        return len(self.log_x)


def fit_power_law(pairs) -> RateFit:
    """Fit value ~ C * scale^slope; 95% CI from standard regression theory."""
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise ParameterError("need at least 3 (scale, value) pairs")
    if np.any(arr <= 0):
        raise ParameterError("scales and values must be positive")
    lx = np.log(arr[:, 0])
    ly = np.log(arr[:, 1])
    n = len(lx)
    xbar = lx.mean()
    sxx = float(((lx - xbar) ** 2).sum())
    if sxx == 0:
        raise ParameterError("scales must not be all equal")
    slope = float(((lx - xbar) * (ly - ly.mean())).sum() / sxx)
    intercept = float(ly.mean() - slope * xbar)
    resid = ly - (intercept + slope * lx)
    dof = n - 2
    s2 = float((resid**2).sum() / dof) if dof > 0 else 0.0
    se = math.sqrt(s2 / sxx)
    tq = float(stats.t.ppf(0.975, dof)) if dof > 0 else 0.0
    ci = (slope - tq * se, slope + tq * se)
    return RateFit(log_x=lx, log_y=ly, slope=slope, intercept=intercept, slope_ci=ci)
