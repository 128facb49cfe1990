"""Random particle configurations and their derived length scales.

A configuration is N i.i.d. centers drawn from a bounded compactly
supported density; the small parameter is eps = N^(-1/3) and each center
carries a hole of radius ~ eps^alpha.  This module owns the reference
particle, the density models, nearest-neighbor distances, and the
per-particle truncation scales eta_i = min(m_eta * eps^beta, d_i).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .errors import ParameterError, SamplerError
from .rng import stream

__all__ = [
    "ReferenceParticle",
    "DensityModel",
    "ParticleConfiguration",
    "TruncationScales",
    "sample_configuration",
    "nearest_neighbor_distances",
    "truncation_scales",
    "save_configuration",
    "load_configuration",
]


# ----------------------------------------------------------------------
# reference particle
# ----------------------------------------------------------------------

def _solid_angle_winding(vertices: np.ndarray, faces: np.ndarray, point: np.ndarray) -> float:
    """Winding number of a closed triangle mesh about a point.

    Van Oosterom-Strackee signed solid angles summed over faces, divided
    by 4*pi; +1 for a point strictly inside an outward-oriented surface.
    """
    r = vertices[faces] - point  # (F, 3, 3)
    a, b, c = r[:, 0], r[:, 1], r[:, 2]
    la = np.linalg.norm(a, axis=1)
    lb = np.linalg.norm(b, axis=1)
    lc = np.linalg.norm(c, axis=1)
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = (
        la * lb * lc
        + np.einsum("ij,ij->i", a, b) * lc
        + np.einsum("ij,ij->i", b, c) * la
        + np.einsum("ij,ij->i", a, c) * lb
    )
    return float(np.sum(2.0 * np.arctan2(num, den)) / (4.0 * np.pi))


@dataclass(frozen=True)
class ReferenceParticle:
    """The unit-scale hole shape, contained in the ball of radius 1/4.

    Either a sphere of given radius (the default used by the corrector
    machinery) or a watertight outward-oriented triangle mesh (used only
    by the boundary-integral resistance solver).
    """

    radius: float | None = None
    vertices: np.ndarray | None = None
    faces: np.ndarray | None = None

    def __post_init__(self):
        if self.radius is not None:
            if not (0.0 < self.radius < 0.25):
                raise ParameterError("sphere radius must lie in (0, 1/4)")
            return
        if self.vertices is None or self.faces is None:
            raise ParameterError("provide a radius or a (vertices, faces) mesh")
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if np.linalg.norm(v, axis=1).max() >= 0.25:
            raise ParameterError("mesh must be contained in the ball of radius 1/4")
        edges = {}
        for tri in f:
            for k in range(3):
                e = (int(tri[k]), int(tri[(k + 1) % 3]))
                if e in edges:
                    raise ParameterError("mesh is not watertight (repeated directed edge)")
                edges[e] = True
        for (a, b) in edges:
            if (b, a) not in edges:
                raise ParameterError("mesh is not watertight (unmatched edge)")
        w = _solid_angle_winding(v, f, np.zeros(3))
        if abs(w - 1.0) > 1e-6:
            raise ParameterError(
                "origin must be strictly inside the outward-oriented surface "
                f"(winding number {w:.6f})"
            )

    @classmethod
    def sphere(cls, radius: float = 0.125) -> "ReferenceParticle":
        return cls(radius=radius)

    @classmethod
    def from_mesh(cls, vertices, faces) -> "ReferenceParticle":
        return cls(radius=None, vertices=np.asarray(vertices, dtype=np.float64),
                   faces=np.asarray(faces, dtype=np.int64))

    @property
    def is_sphere(self) -> bool:
        return self.radius is not None


# ----------------------------------------------------------------------
# density models
# ----------------------------------------------------------------------

_BALL_ATTEMPT_CAP = 100  # rejection rounds per point before declaring failure


@dataclass(frozen=True)
class DensityModel:
    """Bounded compactly supported probability density on R^3.

    Three kinds: uniform on an axis-aligned box, uniform on a ball, or
    piecewise constant on a regular grid over a box.  The evaluator
    vanishes outside the support box and the total mass is 1.
    """

    kind: str
    lo: np.ndarray
    hi: np.ndarray
    sup_norm: float
    grid_values: np.ndarray | None = None
    center: np.ndarray | None = None
    ball_radius: float | None = None

    @classmethod
    def uniform_box(cls, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> "DensityModel":
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if not np.all(hi > lo):
            raise ParameterError("box must have positive extent")
        vol = float(np.prod(hi - lo))
        return cls(kind="uniform-box", lo=lo, hi=hi, sup_norm=1.0 / vol)

    @classmethod
    def uniform_ball(cls, center=(0.0, 0.0, 0.0), radius: float = 0.5) -> "DensityModel":
        if radius <= 0:
            raise ParameterError("ball radius must be positive")
        center = np.asarray(center, dtype=np.float64)
        lo = center - radius
        hi = center + radius
        vol = 4.0 / 3.0 * np.pi * radius**3
        return cls(kind="uniform-ball", lo=lo, hi=hi, sup_norm=1.0 / vol,
                   center=center, ball_radius=float(radius))

    @classmethod
    def piecewise_constant(cls, lo, hi, values, normalize: bool = False) -> "DensityModel":
        """Grid of nonnegative cell values; cell masses must sum to 1."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ParameterError("grid values must be a 3d array")
        if np.any(values < 0):
            raise ParameterError("grid values must be nonnegative")
        if not np.all(hi > lo):
            raise ParameterError("box must have positive extent")
        cellvol = float(np.prod((hi - lo) / np.array(values.shape)))
        total = float(values.sum() * cellvol)
        if normalize:
            if total <= 0:
                raise ParameterError("grid values must have positive total mass")
            values = values / total
        elif abs(total - 1.0) > 1e-12:
            raise ParameterError(f"cell masses must sum to 1 (got {total!r})")
        values.setflags(write=False)
        return cls(kind="piecewise-constant-grid", lo=lo, hi=hi,
                   sup_norm=float(values.max()), grid_values=values)

    @property
    def support_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lo, self.hi

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def pdf(self, points) -> np.ndarray:
        """Density values at ``points`` (zero outside the support box)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        inside = np.all((pts >= self.lo) & (pts <= self.hi), axis=1)
        out = np.zeros(len(pts))
        if self.kind == "uniform-box":
            out[inside] = self.sup_norm
        elif self.kind == "uniform-ball":
            r2 = ((pts - self.center) ** 2).sum(axis=1)
            out[inside & (r2 <= self.ball_radius**2)] = self.sup_norm
        else:
            shape = np.array(self.grid_values.shape)
            scaled = (pts[inside] - self.lo) / (self.hi - self.lo) * shape
            idx = np.minimum(scaled.astype(np.int64), shape - 1)
            out[inside] = self.grid_values[idx[:, 0], idx[:, 1], idx[:, 2]]
        return out

    def cell_masses(self) -> np.ndarray:
        """Exact per-cell masses of the grid kind."""
        if self.kind != "piecewise-constant-grid":
            raise ParameterError("cell_masses is defined for the grid kind only")
        cellvol = float(np.prod((self.hi - self.lo) / np.array(self.grid_values.shape)))
        return self.grid_values * cellvol

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n i.i.d. points; deterministic for a given generator state."""
        if n < 1:
            raise ParameterError("need n >= 1 samples")
        if self.kind == "uniform-box":
            return self.lo + rng.random((n, 3)) * (self.hi - self.lo)
        if self.kind == "uniform-ball":
            out = np.empty((n, 3))
            have = 0
            for _ in range(_BALL_ATTEMPT_CAP):
                cand = self.lo + rng.random((n - have, 3)) * (self.hi - self.lo)
                keep = ((cand - self.center) ** 2).sum(axis=1) <= self.ball_radius**2
                took = cand[keep]
                out[have : have + len(took)] = took
                have += len(took)
                if have == n:
                    return out
            raise SamplerError(
                f"ball rejection sampler exhausted {_BALL_ATTEMPT_CAP} rounds"
            )
        # piecewise constant: invert the cell-mass CDF, then uniform in cell
        masses = self.cell_masses().ravel()
        cdf = np.cumsum(masses)
        cdf[-1] = 1.0
        flat = np.searchsorted(cdf, rng.random(n), side="right")
        flat = np.minimum(flat, len(masses) - 1)
        shape = self.grid_values.shape
        iz = flat % shape[2]
        iy = (flat // shape[2]) % shape[1]
        ix = flat // (shape[1] * shape[2])
        cell_lo = self.lo + np.stack([ix, iy, iz], axis=1) * (self.hi - self.lo) / np.array(shape)
        return cell_lo + rng.random((n, 3)) * (self.hi - self.lo) / np.array(shape)


# ----------------------------------------------------------------------
# configurations
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ParticleConfiguration:
    """N sampled centers with the derived small parameter eps = N^(-1/3)."""

    centers: np.ndarray
    alpha: float
    seed: int | None = None

    def __post_init__(self):
        c = np.ascontiguousarray(self.centers, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 3:
            raise ParameterError("centers must be an (N, 3) array")
        if c.shape[0] < 1:
            raise ParameterError("need at least one center")
        if self.alpha <= 1.0:
            raise ParameterError("hole-size exponent alpha must exceed 1")
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @property
    def eps(self) -> float:
        return float(self.n) ** (-1.0 / 3.0)

    @cached_property
    def nn_dist(self) -> np.ndarray:
        d = kernels.nn_distances(self.centers)
        d.setflags(write=False)
        return d

    def hole_radius(self, particle: ReferenceParticle | None = None) -> float:
        r = 0.125 if particle is None else particle.radius
        return r * self.eps**self.alpha


def sample_configuration(density: DensityModel, n: int, seed: int,
                         alpha: float = 2.5) -> ParticleConfiguration:
    """Draw N i.i.d. centers from ``density``; bit-reproducible per seed."""
    if n < 1:
        raise ParameterError("need n >= 1 particles")
    rng = stream(seed)
    centers = density.sample(rng, n)
    return ParticleConfiguration(centers=centers, alpha=alpha, seed=seed)


def nearest_neighbor_distances(config: ParticleConfiguration) -> np.ndarray:
    """Per-particle distance to the nearest other center (inf for N=1)."""
    return config.nn_dist


# ----------------------------------------------------------------------
# truncation scales
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TruncationScales:
    """Per-particle blending radii eta_i = min(m_eta * eps^beta, d_i)."""

    config: ParticleConfiguration
    beta: float
    m_eta: float
    eta: np.ndarray = field(repr=False)

    def __post_init__(self):
        e = np.ascontiguousarray(self.eta, dtype=np.float64)
        e.setflags(write=False)
        object.__setattr__(self, "eta", e)


def truncation_scales(config: ParticleConfiguration, beta: float,
                      m_eta: float = 1.0) -> TruncationScales:
    """Truncation radii; requires 1 <= beta <= alpha and 0 < m_eta <= 1."""
    if not (1.0 <= beta <= config.alpha):
        raise ParameterError("beta must lie in [1, alpha]")
    if not (0.0 < m_eta <= 1.0):
        raise ParameterError("m_eta must lie in (0, 1]")
    if beta == config.alpha and m_eta != 1.0:
        raise ParameterError("m_eta must equal 1 when beta == alpha")
    eta = np.minimum(m_eta * config.eps**beta, config.nn_dist)
    return TruncationScales(config=config, beta=beta, m_eta=m_eta, eta=eta)


# ----------------------------------------------------------------------
# serialization: columnar text, one center per line
# ----------------------------------------------------------------------

def save_configuration(config: ParticleConfiguration, path) -> None:
    seed = "none" if config.seed is None else str(config.seed)
    with open(path, "w") as fh:
        fh.write(
            f"# brinklab-config N={config.n} eps={config.eps!r} "
            f"alpha={config.alpha!r} seed={seed}\n"
        )
        for x, y, z in config.centers:
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


def load_configuration(path) -> ParticleConfiguration:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("# brinklab-config"):
            raise ParameterError("missing configuration header")
        meta = dict(tok.split("=", 1) for tok in header[2:].split()[1:])
        centers = np.loadtxt(fh, ndmin=2)
    seed = None if meta["seed"] == "none" else int(meta["seed"])
    cfg = ParticleConfiguration(centers=centers, alpha=float(meta["alpha"]), seed=seed)
    if cfg.n != int(meta["N"]):
        raise ParameterError("header N does not match row count")
    return cfg
