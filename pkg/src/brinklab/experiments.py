"""Batch experiment orchestration and report emission.

An experiment is a TOML config naming one pipeline (events, eta-moments,
w2-rates, hneg1, corrector, resistance, brinkman-gap) plus its parameters.
Running one produces a ScalingReport: delimited rows, an optional log-log
rate fit, and a provenance block (config hash, seed, package version).
Replicates use counter-based streams keyed by (seed, replicate) and are
merged in fixed order, so reports are byte-identical for a fixed seed no
matter how many workers run.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, events, fields, stokes, transport
from .errors import ValidationError
from .geometry import DensityModel, ParticleConfiguration, truncation_scales
from .rng import stream

__all__ = ["ExperimentConfig", "ScalingReport", "run_experiment", "load_config"]

KINDS = (
    "events",
    "eta-moments",
    "w2-rates",
    "hneg1",
    "corrector",
    "resistance",
    "brinkman-gap",
)


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see README for the TOML schema)."""

    kind: str
    seed: int
    output: str
    density: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def canonical(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "seed": self.seed,
                "output": self.output,
                "density": self.density,
                "params": self.params,
            },
            sort_keys=True,
        )

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def build_density(self) -> DensityModel:
        d = dict(self.density) or {"kind": "uniform-box"}
        kind = d.get("kind", "uniform-box")
        if kind == "uniform-box":
            return DensityModel.uniform_box(tuple(d.get("lo", (0, 0, 0))),
                                            tuple(d.get("hi", (1, 1, 1))))
        if kind == "uniform-ball":
            return DensityModel.uniform_ball(tuple(d.get("center", (0, 0, 0))),
                                             float(d.get("radius", 0.5)))
        if kind == "piecewise-constant-grid":
            return DensityModel.piecewise_constant(
                tuple(d["lo"]), tuple(d["hi"]), np.asarray(d["values"], dtype=float),
                normalize=bool(d.get("normalize", False)))
        raise ValidationError("density.kind", f"unknown density kind {kind!r}")


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment file."""
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return validate_config(raw)


def validate_config(raw: dict) -> ExperimentConfig:
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ValidationError("kind", f"must be one of {', '.join(KINDS)}")
    if "seed" not in raw or not isinstance(raw["seed"], int):
        raise ValidationError("seed", "integer master seed is required")
    output = raw.get("output", "report")
    cfg = ExperimentConfig(kind=kind, seed=raw["seed"], output=str(output),
                           density=dict(raw.get("density", {})),
                           params=dict(raw.get("params", {})))
    _VALIDATORS[kind](cfg.params)
    cfg.build_density()
    return cfg


def _require_n_list(p, minimum=2):
    n_list = p.get("n_list")
    if not n_list or not all(isinstance(n, int) and n >= minimum for n in n_list):
        raise ValidationError("params.n_list", f"need integers >= {minimum}")
    if list(n_list) != sorted(set(n_list)):
        raise ValidationError("params.n_list", "must be strictly increasing")


def _validate_events(p):
    _require_n_list(p, minimum=1)
    event = p.get("event", "A")
    if event not in ("A", "B"):
        raise ValidationError("params.event", "must be 'A' or 'B'")
    trials = p.get("trials", 0)
    if not isinstance(trials, int) or trials < 30:
        raise ValidationError("params.trials", "trials >= 30")
    if event == "A":
        if p.get("alpha", 2.5) <= 1:
            raise ValidationError("params.alpha", "alpha > 1")
        if p.get("L", 1.0) <= 0:
            raise ValidationError("params.L", "L > 0")
    else:
        lam = p.get("lambda", 0.3)
        if not (0 < lam < 1):
            raise ValidationError("params.lambda", "0 < lambda < 1")


def _validate_eta(p):
    _require_n_list(p)
    if not isinstance(p.get("trials", 0), int) or p["trials"] < 1:
        raise ValidationError("params.trials", "trials >= 1")
    kappas = p.get("kappa_list")
    if not kappas or any(k <= -3 for k in kappas):
        raise ValidationError("params.kappa_list", "each kappa must exceed -3")
    beta = p.get("beta", 1.0)
    alpha = p.get("alpha", 2.5)
    if not 1 <= beta <= alpha:
        raise ValidationError("params.beta", "1 <= beta <= alpha")
    m_eta = p.get("m_eta", 1.0)
    if not 0 < m_eta <= 1:
        raise ValidationError("params.m_eta", "0 < m_eta <= 1")
    if beta == alpha and m_eta != 1.0:
        raise ValidationError("params.m_eta", "m_eta = 1 required when beta = alpha")


def _validate_w2(p):
    _require_n_list(p)
    if max(p["n_list"]) > 2048:
        raise ValidationError("params.n_list", "N <= 2048 for the W2 surrogate")
    reps = p.get("replicates", 0)
    if not isinstance(reps, int) or reps < 2:
        raise ValidationError("params.replicates", "replicates >= 2")


def _validate_hneg1(p):
    if p.get("pairs", 0) < 1:
        raise ValidationError("params.pairs", "pairs >= 1")
    n = p.get("resolution", 64)
    if n < 32 or (n & (n - 1)) != 0:
        raise ValidationError("params.resolution", "power of two >= 32")


def _validate_corrector(p):
    eps_list = p.get("eps_list")
    if not eps_list or any(e <= 0 or e >= 1 for e in eps_list):
        raise ValidationError("params.eps_list", "need eps values in (0, 1)")
    if p.get("alpha", 2.5) <= 1:
        raise ValidationError("params.alpha", "alpha > 1")


def _validate_resistance(p):
    levels = p.get("levels", [2, 3, 4])
    if not levels or any(not isinstance(v, int) or v < 0 or v > 5 for v in levels):
        raise ValidationError("params.levels", "integer levels in [0, 5]")
    if p.get("radius", 1.0) <= 0:
        raise ValidationError("params.radius", "radius > 0")


def _validate_brinkman(p):
    _require_n_list(p)
    if max(p["n_list"]) > 20000:
        raise ValidationError("params.n_list", "N <= 20000 (resource cap)")
    lam = p.get("lambda", 0.3)
    if not (0 < lam < 1):
        raise ValidationError("params.lambda", "0 < lambda < 1")
    if p.get("sigma", 0.25) <= 0:
        raise ValidationError("params.sigma", "sigma > 0")


_VALIDATORS = {
    "events": _validate_events,
    "eta-moments": _validate_eta,
    "w2-rates": _validate_w2,
    "hneg1": _validate_hneg1,
    "corrector": _validate_corrector,
    "resistance": _validate_resistance,
    "brinkman-gap": _validate_brinkman,
}


# ----------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------

@dataclass
class ScalingReport:
    """Rows plus provenance; optionally a fitted log-log rate."""

    kind: str
    columns: tuple
    rows: list
    provenance: dict
    fit: transport.RateFit | None = None
    bound_ok: bool = True

    def to_tsv(self) -> str:
        lines = [
            f"# brinklab-report kind={self.kind} config={self.provenance['config_hash']} "
            f"seed={self.provenance['seed']} version={self.provenance['version']}"
        ]
        lines.append("\t".join(self.columns))
        for row in self.rows:
            lines.append("\t".join(_fmt(v) for v in row))
        if self.fit is not None:
            lines.append(
                f"# fit slope={self.fit.slope!r} intercept={self.fit.intercept!r} "
                f"ci=({self.fit.slope_ci[0]!r},{self.fit.slope_ci[1]!r})"
            )
        lines.append(f"# bound_ok={self.bound_ok}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "columns": list(self.columns),
            "rows": [[_plain(v) for v in r] for r in self.rows],
            "provenance": self.provenance,
            "bound_ok": self.bound_ok,
        }
        if self.fit is not None:
            doc["fit"] = {
                "slope": self.fit.slope,
                "intercept": self.fit.intercept,
                "slope_ci": list(self.fit.slope_ci),
            }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    def write(self, basename) -> None:
        with open(f"{basename}.tsv", "w") as fh:
            fh.write(self.to_tsv())
        with open(f"{basename}.json", "w") as fh:
            fh.write(self.to_json())


def _plain(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    return v


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _parallel_map(fn, items, threads: int):
    """Ordered map with an optional worker pool; order-fixed reduction."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ----------------------------------------------------------------------
# pipelines
# ----------------------------------------------------------------------

def run_experiment(config: ExperimentConfig, threads: int = 1) -> ScalingReport:
    pipeline = _PIPELINES[config.kind]
    columns, rows, fit, bound_ok = pipeline(config, threads)
    report = ScalingReport(
        kind=config.kind,
        columns=columns,
        rows=rows,
        provenance={
            "config_hash": config.config_hash(),
            "seed": config.seed,
            "version": __version__,
        },
        fit=fit,
        bound_ok=bound_ok,
    )
    return report


def _pipe_events(config: ExperimentConfig, threads: int):
    p = config.params
    density = config.build_density()
    event_kind = p.get("event", "A")
    alpha = float(p.get("alpha", 2.5))
    lam = float(p.get("lambda", 0.3))
    big_l = float(p.get("L", 1.0))
    trials = p["trials"]
    rows = []
    ok = True
    for n in p["n_list"]:
        eps = float(n) ** (-1.0 / 3.0)
        if event_kind == "A":
            def indicator(k, n=n):
                centers = density.sample(stream(config.seed, k), n)
                cfg = ParticleConfiguration(centers=centers, alpha=alpha)
                return events.indicator_A(cfg, big_l, alpha)
            bound = events.min_distance_lower_bound(
                density.sup_norm, big_l * eps ** (alpha - 2.0))
        else:
            def indicator(k, n=n):
                centers = density.sample(stream(config.seed, k), n)
                cfg = ParticleConfiguration(centers=centers, alpha=alpha)
                return events.indicator_B(cfg, lam, density.sup_norm)
            bound = 0.99
        hits = _parallel_map(indicator, range(trials), threads)
        est = events.EventEstimate(trials=trials, successes=int(np.add.reduce(hits)))
        row_ok = est.p_hat >= bound - est.ci_width
        ok = ok and row_ok
        rows.append((n, eps, est.p_hat, est.ci_low, est.ci_high, bound))
    return ("N", "eps", "p_hat", "ci_low", "ci_high", "bound"), rows, None, ok


def _pipe_eta(config: ExperimentConfig, threads: int):
    p = config.params
    density = config.build_density()
    beta = float(p.get("beta", 1.0))
    m_eta = float(p.get("m_eta", 1.0))
    alpha = float(p.get("alpha", 2.5))
    trials = p["trials"]
    cdf = p.get("cdf", "monte-carlo")
    rows = []
    ok = True
    base_c = {}
    for n in p["n_list"]:
        for kappa in p["kappa_list"]:
            mc = events.eta_moment(density, n, beta, m_eta, float(kappa), trials,
                                   seed=config.seed, mode="monte-carlo", alpha=alpha)
            oracle = events.eta_moment(density, n, beta, m_eta, float(kappa), trials,
                                       seed=config.seed + 1, mode="layer-cake-oracle",
                                       cdf=cdf, alpha=alpha)
            bound = events.eta_moment_bound(n, beta, m_eta, float(kappa))
            ratio = mc / bound
            if kappa not in base_c:
                base_c[kappa] = ratio
            row_ok = abs(ratio - base_c[kappa]) <= 0.25 * base_c[kappa]
            ok = ok and row_ok
            rows.append((n, float(kappa), mc, oracle, bound, ratio))
    return ("N", "kappa", "mc", "oracle", "bound", "c_ratio"), rows, None, ok


def _pipe_w2(config: ExperimentConfig, threads: int):
    p = config.params
    density = config.build_density()
    reps = p["replicates"]
    alpha = float(p.get("alpha", 2.5))
    ref_mult = p.get("ref_mult")
    rows = []
    pairs = []
    for idx, n in enumerate(p["n_list"]):
        def one(k, n=n, idx=idx):
            centers = density.sample(stream(config.seed, idx, k), n)
            cfg = ParticleConfiguration(centers=centers, alpha=alpha)
            ref = None if ref_mult is None else int(ref_mult) * n
            w = transport.w2_empirical_vs_density(
                density, cfg, seed=config.seed + 1_000_000 * idx + k, ref_samples=ref)
            return w * w
        vals = np.asarray(_parallel_map(one, range(reps), threads))
        mean = float(np.add.reduce(vals) / reps)
        se = float(vals.std(ddof=1) / math.sqrt(reps))
        rows.append((n, float(n) ** (-1.0 / 3.0), mean, se))
        pairs.append((n, mean))
    fit = transport.fit_power_law(pairs)
    ok = -0.75 <= fit.slope <= -0.40
    return ("N", "eps", "mean_w2_sq", "stderr"), rows, fit, ok


def _pipe_hneg1(config: ExperimentConfig, threads: int):
    p = config.params
    n_pairs = p["pairs"]
    res = int(p.get("resolution", 128))
    cells = int(p.get("cells", 4))
    shift_max = float(p.get("shift_max", 0.2))
    box = fields.BoxSpec(center=(0.6, 0.5, 0.5), side=4.8, n=res)
    rows = []
    ok = True

    def one(k):
        rng = stream(config.seed, k)
        vals = rng.random((cells, cells, cells)) + 0.05
        rho0 = DensityModel.piecewise_constant((0, 0, 0), (1, 1, 1), vals, normalize=True)
        t = rng.uniform(0.02, shift_max)
        rho1 = DensityModel.piecewise_constant((t, 0, 0), (1 + t, 1, 1), vals, normalize=True)
        f0 = fields.rasterize(rho0, box)
        f1 = fields.rasterize(rho1, box)
        diff = fields.GridField(box=box, values=f0.values - f1.values)
        hn = fields.h_neg1_norm(diff)
        bound = math.sqrt(rho0.sup_norm) * t  # shift plan is optimal: W2 = t exactly
        return (hn, t, rho0.sup_norm, bound)

    results = _parallel_map(one, range(n_pairs), threads)
    for k, (hn, t, sup, bound) in enumerate(results):
        row_ok = hn <= 1.05 * bound
        ok = ok and row_ok
        rows.append((k, t, sup, hn, bound))
    return ("pair", "shift", "sup_norm", "hneg1", "bound"), rows, None, ok


def _pipe_corrector(config: ExperimentConfig, threads: int):
    p = config.params
    alpha = float(p.get("alpha", 2.5))
    eps_list = [float(e) for e in p["eps_list"]]
    quantities = p.get("quantities", ["w-id", "grad"])
    rows = []
    fit = None
    for quantity in quantities:
        pw = 2.0
        pairs = []
        for eps in eps_list:
            fld = stokes.CorrectorField(centers=np.zeros((1, 3)), eta=np.array([eps]),
                                        eps=eps, alpha=alpha)
            nrm = stokes.corrector_norm(fld, quantity, pw)
            val = nrm**pw
            normalized = val / eps if quantity == "w-id" else val
            rows.append((quantity, eps, val, normalized))
            pairs.append((eps, normalized))
        f = transport.fit_power_law(pairs)
        if quantity == quantities[0]:
            fit = f
    target = {"w-id": 2 * alpha, "grad": alpha, "pressure": alpha}
    ok = True
    for quantity in quantities:
        pairs = [(r[1], r[3]) for r in rows if r[0] == quantity]
        slope = transport.fit_power_law(pairs).slope
        ok = ok and abs(slope - target.get(quantity, alpha)) <= 0.1
    return ("quantity", "eps", "norm_p", "normalized"), rows, fit, ok


def _pipe_resistance(config: ExperimentConfig, threads: int):
    p = config.params
    levels = p.get("levels", [2, 3, 4])
    radius = float(p.get("radius", 1.0))
    reg_factor = float(p.get("reg_factor", 0.5))
    results = stokes.resistance_refinement(radius, levels, reg_factor=reg_factor)
    target = 6.0 * math.pi * radius
    rows = []
    errs = []
    for r in results:
        err = float(np.abs(r.matrix - target * np.eye(3)).max() / target)
        errs.append(err)
        rows.append((r.level, r.n_vertices, r.mesh_h, r.reg_eps,
                     r.matrix[0, 0], r.matrix[1, 1], r.matrix[2, 2], err))
    ok = errs[-1] <= 0.02 and all(errs[i] > errs[i + 1] for i in range(len(errs) - 1))
    return ("level", "vertices", "mesh_h", "reg_eps", "R00", "R11", "R22", "rel_err"), rows, None, ok


def _pipe_brinkman(config: ExperimentConfig, threads: int):
    p = config.params
    density = config.build_density()
    alpha = float(p.get("alpha", 2.5))
    beta = float(p.get("beta", 1.0))
    lam = float(p.get("lambda", 0.3))
    radius = float(p.get("radius", 0.125))
    psi = fields.GaussianBump(center=tuple(p.get("psi_center", (0.5, 0.5, 0.5))),
                              sigma=float(p.get("sigma", 0.25)),
                              amplitude=tuple(p.get("amplitude", (1.0, 0.5, -0.3))))
    resistance = 6.0 * math.pi * radius * np.eye(3)
    rows = []
    ratios = []
    for idx, n in enumerate(p["n_list"]):
        cfg = events.sample_in_A(density, n, seed=config.seed + idx, alpha=alpha)
        scales = truncation_scales(cfg, beta=beta)
        gap, parts = fields.brinkman_gap_pairing(
            cfg, scales, resistance, density, psi, lam=lam, seed=config.seed + 7 * idx)
        ratio = gap / parts["total"]
        ratios.append(ratio)
        rows.append((n, gap, parts["w2_term"], parts["smearing_term"],
                     parts["annulus_sum"], parts["cube_sum"], ratio))
    ok = all(r <= 3.0 * ratios[0] for r in ratios)
    return ("N", "gap", "w2_term", "smearing_term", "annulus_sum", "cube_sum", "ratio"), rows, None, ok


_PIPELINES = {
    "events": _pipe_events,
    "eta-moments": _pipe_eta,
    "w2-rates": _pipe_w2,
    "hneg1": _pipe_hneg1,
    "corrector": _pipe_corrector,
    "resistance": _pipe_resistance,
    "brinkman-gap": _pipe_brinkman,
}
