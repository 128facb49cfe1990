"""Periodic-grid rasterization, spectral H^-1 norms, and force pairings.

The whole-space H^-1 norm of compactly supported measure differences is
approximated on a padded periodic box: rasterize mass-conservatively,
transform, and weight the spectrum by 1/(1 + |2 pi k / L|^2) with the
zero mode excluded.  The same grids host the pairing that compares the
assembled per-particle Stokes forces against the smooth friction field
rho * R, together with the quadrature evaluation of its bound parts.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .events import SmearedDensity
from .geometry import DensityModel, ParticleConfiguration, ReferenceParticle, TruncationScales
from .stokes import CorrectorField, SphereStokesSolution, sphere_quadrature
from .transport import w2_empirical_vs_density

__all__ = [
    "BoxSpec",
    "GridField",
    "SphereSurfaceMeasure",
    "GaussianBump",
    "rasterize",
    "h_neg1_norm",
    "brinkman_gap_pairing",
]


# ----------------------------------------------------------------------
# grids
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BoxSpec:
    """Periodic cube: center, side, and a power-of-two resolution >= 32.

    Choose the side at least twice the diameter of the union of supports
    involved; rasterization enforces the quarter-side margin that keeps
    compactly supported measures away from the periodic images.
    """

    center: tuple[float, float, float]
    side: float
    n: int

    def __post_init__(self):
        if self.side <= 0:
            raise ParameterError("box side must be positive")
        n = self.n
        if n < 32 or (n & (n - 1)) != 0:
            raise ParameterError("resolution must be a power of two, at least 32")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - self.side / 2.0

    @property
    def cell(self) -> float:
        return self.side / self.n

    def centers_1d(self, axis: int) -> np.ndarray:
        return self.lo[axis] + (np.arange(self.n) + 0.5) * self.cell


@dataclass
class GridField:
    """Cell-centered scalar samples on a BoxSpec."""

    box: BoxSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        n = self.box.n
        if v.shape != (n, n, n):
            raise ParameterError("values must have shape (n, n, n)")
        if not np.all(np.isfinite(v)):
            raise ParameterError("values must be finite")
        self.values = v

    def integral(self) -> float:
        return float(self.values.sum() * self.box.cell**3)

    def pair(self, func) -> float:
        """Approximate integral of ``func`` against the rasterized measure."""
        n = self.box.n
        x = self.box.centers_1d(0)
        y = self.box.centers_1d(1)
        z = self.box.centers_1d(2)
        total = 0.0
        cell3 = self.box.cell**3
        for i in range(n):  # slab at a time to bound memory
            pts = np.empty((n * n, 3))
            pts[:, 0] = x[i]
            pts[:, 1] = np.repeat(y, n)
            pts[:, 2] = np.tile(z, n)
            total += float(np.dot(self.values[i].ravel(), func(pts))) * cell3
        return total

    def write_binary(self, path) -> None:
        """Flat layout: header (n, L, center), then row-major doubles."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<q", self.box.n))
            fh.write(struct.pack("<d", self.box.side))
            fh.write(struct.pack("<3d", *self.box.center))
            fh.write(np.ascontiguousarray(self.values).tobytes())

    @classmethod
    def read_binary(cls, path) -> "GridField":
        with open(path, "rb") as fh:
            n = struct.unpack("<q", fh.read(8))[0]
            side = struct.unpack("<d", fh.read(8))[0]
            center = struct.unpack("<3d", fh.read(24))
            data = np.frombuffer(fh.read(8 * n**3), dtype=np.float64).reshape(n, n, n)
        return cls(box=BoxSpec(center=center, side=side, n=n), values=data.copy())


@dataclass(frozen=True)
class SphereSurfaceMeasure:
    """Uniform unit-mass measure on a sphere surface."""

    center: tuple[float, float, float]
    radius: float


# ----------------------------------------------------------------------
# rasterization
# ----------------------------------------------------------------------

def _support_bounds(measure):
    if isinstance(measure, SmearedDensity):
        half = measure.side / 2.0
        return measure.config.centers.min(0) - half, measure.config.centers.max(0) + half
    if isinstance(measure, SphereSurfaceMeasure):
        c = np.asarray(measure.center, dtype=np.float64)
        return c - measure.radius, c + measure.radius
    if isinstance(measure, DensityModel):
        return measure.lo, measure.hi
    # discrete measure
    return measure.points.min(0), measure.points.max(0)


def _check_margin(measure, box: BoxSpec):
    lo, hi = _support_bounds(measure)
    blo = box.lo
    bhi = box.lo + box.side
    margin = min(float((lo - blo).min()), float((bhi - hi).min()))
    if margin < box.side / 4.0 - 1e-12:
        raise ParameterError(
            f"measure support must sit inside the box with margin >= side/4 "
            f"(margin {margin:.4g}, required {box.side / 4.0:.4g})"
        )


def _deposit_points(values, box: BoxSpec, pts, weights):
    """Trilinear (cloud-in-cell) deposition; conserves mass exactly."""
    n = box.n
    u = (pts - box.lo) / box.cell - 0.5
    i0 = np.floor(u).astype(np.int64)
    f = u - i0
    flat = values.ravel()
    for dx in (0, 1):
        wx = (1.0 - f[:, 0]) if dx == 0 else f[:, 0]
        ix = i0[:, 0] + dx
        for dy in (0, 1):
            wy = (1.0 - f[:, 1]) if dy == 0 else f[:, 1]
            iy = i0[:, 1] + dy
            for dz in (0, 1):
                wz = (1.0 - f[:, 2]) if dz == 0 else f[:, 2]
                iz = i0[:, 2] + dz
                np.add.at(flat, (ix * n + iy) * n + iz, weights * wx * wy * wz)


def _axis_overlaps(box: BoxSpec, centers_1d, half: float):
    """Per-axis exact cell overlaps for intervals [c-half, c+half].

    Returns (first cell index (m,), fractions (m, K)) with K covering the
    widest interval; fractions sum to 1 per interval.
    """
    h = box.cell
    lo_edge = centers_1d - half
    hi_edge = centers_1d + half
    first = np.floor(lo_edge / h).astype(np.int64)
    last = np.floor(hi_edge / h).astype(np.int64)
    K = int((last - first).max()) + 1
    k = np.arange(K)
    cell_lo = (first[:, None] + k[None, :]) * h
    cell_hi = cell_lo + h
    ov = np.clip(np.minimum(cell_hi, hi_edge[:, None]) - np.maximum(cell_lo, lo_edge[:, None]), 0.0, None)
    return first, ov / (2.0 * half)


def _deposit_boxes(values, box: BoxSpec, centers, halves, masses):
    """Exact-overlap deposition of axis-aligned boxes (equal half-extents)."""
    n = box.n
    rel = centers - box.lo
    fx, wx = _axis_overlaps(box, rel[:, 0], halves[0])
    fy, wy = _axis_overlaps(box, rel[:, 1], halves[1])
    fz, wz = _axis_overlaps(box, rel[:, 2], halves[2])
    w = masses[:, None, None, None] * wx[:, :, None, None] * wy[:, None, :, None] * wz[:, None, None, :]
    kx = np.arange(wx.shape[1])
    ky = np.arange(wy.shape[1])
    kz = np.arange(wz.shape[1])
    ix = fx[:, None, None, None] + kx[None, :, None, None]
    iy = fy[:, None, None, None] + ky[None, None, :, None]
    iz = fz[:, None, None, None] + kz[None, None, None, :]
    flat_idx = ((ix * n + iy) * n + iz).reshape(-1)
    np.add.at(values.ravel(), flat_idx, w.reshape(-1))


def _fibonacci_sphere(m: int) -> np.ndarray:
    i = np.arange(m)
    z = 1.0 - (2.0 * i + 1.0) / m
    phi = i * (np.pi * (3.0 - math.sqrt(5.0)))
    st = np.sqrt(1.0 - z**2)
    return np.stack([st * np.cos(phi), st * np.sin(phi), z], axis=1)


def rasterize(measure, box: BoxSpec) -> GridField:
    """Mass-conservative deposition of a measure onto the grid.

    Point masses deposit trilinearly; cubes and boxes by exact overlap
    volume fractions; sphere surfaces by equal-weight Fibonacci nodes
    deposited trilinearly; the uniform ball is supersampled at boundary
    cells and renormalized to unit mass.
    """
    _check_margin(measure, box)
    n = box.n
    values = np.zeros((n, n, n))
    cell3 = box.cell**3

    if isinstance(measure, SmearedDensity):
        half = measure.side / 2.0
        masses = np.full(measure.config.n, 1.0 / measure.config.n)
        _deposit_boxes(values, box, measure.config.centers, (half, half, half), masses)
    elif isinstance(measure, SphereSurfaceMeasure):
        m = max(256, min(16384, int(32 * (measure.radius / box.cell) ** 2)))
        pts = np.asarray(measure.center) + measure.radius * _fibonacci_sphere(m)
        _deposit_points(values, box, pts, np.full(m, 1.0 / m))
    elif isinstance(measure, DensityModel):
        if measure.kind == "uniform-box":
            c = 0.5 * (measure.lo + measure.hi)
            halves = 0.5 * (measure.hi - measure.lo)
            _deposit_boxes(values, box, c[None, :], tuple(halves), np.array([1.0]))
        elif measure.kind == "piecewise-constant-grid":
            shape = np.array(measure.grid_values.shape)
            cw = (measure.hi - measure.lo) / shape
            ii = np.indices(measure.grid_values.shape).reshape(3, -1).T
            centers = measure.lo + (ii + 0.5) * cw
            masses = measure.cell_masses().ravel()
            keep = masses > 0
            _deposit_boxes(values, box, centers[keep], tuple(0.5 * cw), masses[keep])
        else:  # uniform ball: supersampled boundary cells, then renormalized
            c = np.asarray(measure.center)
            r = measure.ball_radius
            x = box.centers_1d(0)
            y = box.centers_1d(1)
            z = box.centers_1d(2)
            dx2 = (x - c[0]) ** 2
            dy2 = (y - c[1]) ** 2
            dz2 = (z - c[2]) ** 2
            d2 = dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :]
            rin = max(r - box.cell * math.sqrt(3.0) / 2.0, 0.0)
            rout = r + box.cell * math.sqrt(3.0) / 2.0
            values[d2 <= rin**2] = 1.0
            edge = np.argwhere((d2 > rin**2) & (d2 < rout**2))
            if len(edge):
                sub = (np.indices((4, 4, 4)).reshape(3, -1).T + 0.5) / 4.0 - 0.5
                pts = box.lo + (edge[:, None, :] + 0.5 + sub[None, :, :]) * box.cell
                frac = ((((pts - c) ** 2).sum(-1) <= r * r).mean(axis=1))
                values[edge[:, 0], edge[:, 1], edge[:, 2]] = frac
            total = values.sum() * cell3
            values /= total
            return GridField(box=box, values=values)
    else:
        _deposit_points(values, box, measure.points, measure.weights)

    return GridField(box=box, values=values / cell3)


# ----------------------------------------------------------------------
# spectral H^-1 norm
# ----------------------------------------------------------------------

def h_neg1_norm(f: GridField, assume_zero_mean: bool = False, mean_tol: float = 1e-8) -> float:
    """Spectral H^-1 norm on the periodic box.

    (sum_{k != 0} |f_hat(k)|^2 / (1 + |2 pi k / L|^2))^(1/2), the DFT
    normalized so the plain sum of |f_hat|^2 reproduces the continuum
    L^2 norm.  The zero mode is dropped and must be below ``mean_tol``
    unless the caller acknowledges via ``assume_zero_mean``.
    """
    vals = f.values
    n = f.box.n
    ll = f.box.side
    h3 = f.box.cell**3
    total = float(vals.sum() * h3)
    if not assume_zero_mean and abs(total) > mean_tol:
        raise ParameterError(
            f"field integrates to {total:.3e}; pass assume_zero_mean=True to drop the zero mode"
        )
    spec = np.fft.rfftn(vals)
    power = spec.real**2 + spec.imag**2
    # conjugate-pair double counting along the halved last axis
    fac = np.full(power.shape[2], 2.0)
    fac[0] = 1.0
    if n % 2 == 0:
        fac[-1] = 1.0
    k1 = np.fft.fftfreq(n, d=1.0 / n)
    kz = np.arange(power.shape[2])
    k2 = (
        k1[:, None, None] ** 2
        + k1[None, :, None] ** 2
        + kz[None, None, :] ** 2
    )
    weight = fac[None, None, :] / (1.0 + (2.0 * np.pi / ll) ** 2 * k2)
    weight[0, 0, 0] = 0.0
    norm2 = float((power * weight).sum()) * h3**2 / ll**3
    return math.sqrt(max(norm2, 0.0))


# ----------------------------------------------------------------------
# analytic test fields
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianBump:
    """Vector test field amp * exp(-|x-c|^2 / (2 sigma^2)) with gradient."""

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sigma: float = 0.2
    amplitude: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def value(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        d = pts - np.asarray(self.center)
        g = np.exp(-np.einsum("mi,mi->m", d, d) / (2.0 * self.sigma**2))
        return g[:, None] * np.asarray(self.amplitude)[None, :]

    def grad(self, pts) -> np.ndarray:
        """out[m, j, l] = d_l psi_j."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        d = pts - np.asarray(self.center)
        g = np.exp(-np.einsum("mi,mi->m", d, d) / (2.0 * self.sigma**2))
        amp = np.asarray(self.amplitude)
        return -(g[:, None, None] / self.sigma**2) * amp[None, :, None] * d[:, None, :]

    def h1_norm(self) -> float:
        """Closed-form H^1(R^3) norm."""
        s = self.sigma
        a2 = float(np.dot(self.amplitude, self.amplitude))
        l2 = a2 * math.pi**1.5 * s**3
        grad2 = a2 * math.pi**1.5 * s**3 * 1.5 / s**2
        return math.sqrt(l2 + grad2)


def _gl_cube_nodes(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * x  # unit cube [-1/2, 1/2]
    w = 0.5 * w
    nodes = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    wts = (w[:, None, None] * w[None, :, None] * w[None, None, :]).reshape(-1)
    return nodes, wts


def _cube_norms(psi, centers, side, order=4, want_grad=True, chunk=2048):
    """Per-cube L2 norms (and H1 seminorms) of psi over cubes of one side."""
    nodes, wts = _gl_cube_nodes(order)
    vol = side**3
    l2 = np.empty(len(centers))
    g2 = np.empty(len(centers)) if want_grad else None
    for s in range(0, len(centers), chunk):
        cs = centers[s : s + chunk]
        pts = (cs[:, None, :] + side * nodes[None, :, :]).reshape(-1, 3)
        v = psi.value(pts)
        v2 = np.einsum("mj,mj->m", v, v).reshape(len(cs), -1)
        l2[s : s + chunk] = (v2 @ wts) * vol
        if want_grad:
            gr = psi.grad(pts)
            gg = np.einsum("mjl,mjl->m", gr, gr).reshape(len(cs), -1)
            g2[s : s + chunk] = (gg @ wts) * vol
    return (l2, g2) if want_grad else l2


# ----------------------------------------------------------------------
# the force-pairing gap
# ----------------------------------------------------------------------

def _density_pairing(density: DensityModel, psi, order: int = 32) -> np.ndarray:
    """integral of rho(x) psi(x) dx, by tensor Gauss-Legendre quadrature."""
    if density.kind == "piecewise-constant-grid":
        shape = np.array(density.grid_values.shape)
        cw = (density.hi - density.lo) / shape
        ii = np.indices(density.grid_values.shape).reshape(3, -1).T
        centers = density.lo + (ii + 0.5) * cw
        masses = density.cell_masses().ravel()
        nodes, wts = _gl_cube_nodes(8)
        acc = np.zeros(3)
        for c, m in zip(centers, masses):
            if m == 0:
                continue
            pts = c + cw * nodes
            acc += m * (wts @ psi.value(pts))
        return acc
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = density.lo, density.hi
    pts1 = [0.5 * (hi[d] + lo[d]) + 0.5 * (hi[d] - lo[d]) * x for d in range(3)]
    wts1 = [0.5 * (hi[d] - lo[d]) * w for d in range(3)]
    pts = np.stack(np.meshgrid(*pts1, indexing="ij"), axis=-1).reshape(-1, 3)
    wts = (wts1[0][:, None, None] * wts1[1][None, :, None] * wts1[2][None, None, :]).reshape(-1)
    rho = density.pdf(pts)
    vals = psi.value(pts)
    return np.einsum("m,m,mj->j", wts, rho, vals)


def _w2_surrogate(density, config, seed) -> float:
    """W2(rho_N, rho) estimate; batched over subsamples beyond the cap."""
    if config.n <= 2048:
        return w2_empirical_vs_density(density, config, seed=seed)
    nb = math.ceil(config.n / 2048)
    size = config.n // nb
    vals = []
    for b in range(nb):
        sub = ParticleConfiguration(
            centers=config.centers[b * size : (b + 1) * size],
            alpha=config.alpha,
        )
        vals.append(w2_empirical_vs_density(density, sub, seed=seed + b))
    return float(np.mean(vals))


def brinkman_gap_pairing(
    config: ParticleConfiguration,
    scales: TruncationScales,
    resistance: np.ndarray,
    density: DensityModel,
    psi,
    lam: float,
    particle: ReferenceParticle | None = None,
    seed: int = 0,
    chunk: int = 1024,
):
    """Gap between assembled per-particle forces and the smooth friction field.

    Per column k, the assembled pairing is
        eps^(3-alpha) * sum_i [ traction integral over the sphere eta_i/4
                                + annulus divergence term over D_i ]
    and the gap is its distance to integral(rho psi . R_k).  Returns
    (gap, parts) where parts holds the four bound components: the W2 and
    eps^(1-lambda) terms times |psi|_H1, the annulus sum
    sum_i eta_i^(-1/2) eps^3 |psi|_H1(Qtilde_i), and the cube sum
    sum_i eta_i^(-1) eps^alpha |psi|_L2(Q_i).
    """
    if not (0.0 < lam < 1.0):
        raise ParameterError("lambda must lie in (0, 1)")
    radius = 0.125 if particle is None else particle.radius
    if particle is not None and not particle.is_sphere:
        raise ParameterError("gap pairing requires a spherical reference particle")
    eps = config.eps
    alpha = config.alpha
    eta = scales.eta
    centers = config.centers
    nconf = config.n
    ea = eps**alpha
    sol = SphereStokesSolution(radius)
    field = CorrectorField.from_config(config, scales,
                                       particle or ReferenceParticle.sphere(radius))

    sph_nodes, sph_wts = sphere_quadrature(6)   # 72 nodes
    gl_x, gl_w = np.polynomial.legendre.leggauss(6)
    assembled = np.zeros(3)

    for s in range(0, nconf, chunk):
        cs = centers[s : s + chunk]
        es = eta[s : s + chunk]
        m = len(cs)
        rho_i = es / 4.0

        # traction term on the spheres of radius eta_i/4
        pts = cs[:, None, :] + rho_i[:, None, None] * sph_nodes[None, :, :]
        y = (rho_i[:, None, None] / ea) * sph_nodes[None, :, :]
        trac = sol.traction(y.reshape(-1, 3)).reshape(m, len(sph_nodes), 3, 3)
        psiv = psi.value(pts.reshape(-1, 3)).reshape(m, len(sph_nodes), 3)
        t1 = np.einsum("q,mqjk,mqj->mk", sph_wts, trac, psiv)
        assembled += (rho_i**2 / ea) @ t1

        # annulus divergence term: -int_D (q I - grad w) : grad psi
        mid = 0.5 * (es / 4.0 + es / 2.0)
        half = 0.5 * (es / 2.0 - es / 4.0)
        radii = mid[:, None] + half[:, None] * gl_x[None, :]          # (m, 6)
        rw = half[:, None] * gl_w[None, :]
        xs = (cs[:, None, None, :]
              + radii[:, :, None, None] * sph_nodes[None, None, :, :]).reshape(-1, 3)
        grad_w = field.gradient(xs).reshape(m, 6, len(sph_nodes), 3, 3, 3)
        q = field.pressure(xs).reshape(m, 6, len(sph_nodes), 3)
        gpsi = psi.grad(xs).reshape(m, 6, len(sph_nodes), 3, 3)
        div_psi = np.einsum("mrqjj->mrq", gpsi)
        contr = (q * div_psi[..., None]
                 - np.einsum("mrqkjl,mrqjl->mrqk", grad_w, gpsi))
        ang = np.einsum("q,mrqk->mrk", sph_wts, contr)
        t2 = -np.einsum("mr,mr,mrk->mk", rw, radii**2, ang)
        assembled += t2.sum(axis=0)

    assembled *= eps ** (3.0 - alpha)
    smooth = _density_pairing(density, psi) @ resistance  # component k: int rho psi . R_k
    gap_vec = assembled - smooth
    gap = float(np.linalg.norm(gap_vec))

    # bound parts
    h1_global = psi.h1_norm()
    w2_hat = _w2_surrogate(density, config, seed)
    l2_t, g2_t = _cube_norms(psi, centers, eps ** (1.0 - lam))
    annulus_sum = float(np.add.reduce(eta ** -0.5 * eps**3 * np.sqrt(l2_t + g2_t)))
    l2_q = _cube_norms(psi, centers, eps, want_grad=False)
    cube_sum = float(np.add.reduce(eta ** -1.0 * eps**alpha * np.sqrt(l2_q)))
    parts = {
        "w2_term": w2_hat * h1_global,
        "smearing_term": eps ** (1.0 - lam) * h1_global,
        "annulus_sum": annulus_sum,
        "cube_sum": cube_sum,
    }
    parts["total"] = sum(parts.values())
    return gap, parts
