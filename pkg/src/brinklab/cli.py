"""Command-line interface.

Verbs:
  run <config.toml>       execute the experiment, write <output>.tsv/.json
  validate <config.toml>  check the config and exit
  oracle <config.toml>    run the brute-force oracle battery for the kind
  report <path.tsv>       recompute the log-log fit from stored rows

Exit codes: 0 success, 2 validation failure, 3 bound violation under
--strict (run) or oracle disagreement (oracle).
"""

from __future__ import annotations

import argparse
import itertools
import math
import sys

import numpy as np

from . import events, kernels, transport
from .errors import ValidationError
from .experiments import load_config, run_experiment
from .geometry import DensityModel
from .rng import stream
from .stokes import SphereStokesSolution
from ._fallback import _nn_brute


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="brinklab", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--strict", action="store_true",
                       help="exit 3 when a paper-bound check fails")

    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("config")

    p_orc = sub.add_parser("oracle", help="run brute-force oracles for the config kind")
    p_orc.add_argument("config")

    p_rep = sub.add_parser("report", help="recompute fits from a stored report")
    p_rep.add_argument("path")

    args = parser.parse_args(argv)
    try:
        if args.verb == "validate":
            load_config(args.config)
            print("ok")
            return 0
        if args.verb == "run":
            config = load_config(args.config)
            report = run_experiment(config, threads=args.threads)
            report.write(config.output)
            print(f"wrote {config.output}.tsv and {config.output}.json "
                  f"(backend={kernels.BACKEND}, bound_ok={report.bound_ok})")
            if args.strict and not report.bound_ok:
                return 3
            return 0
        if args.verb == "oracle":
            config = load_config(args.config)
            return _run_oracles(config)
        if args.verb == "report":
            return _refit(args.path)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    return 0


# ----------------------------------------------------------------------
# oracle battery: brute-force reference computations only
# ----------------------------------------------------------------------

def _check(name: str, ok: bool, detail: str) -> bool:
    print(f"{'OK  ' if ok else 'FAIL'} {name}: {detail}")
    return ok


def _oracle_nn(seed) -> bool:
    ok = True
    for k in range(10):
        pts = stream(seed, k).random((400, 3))
        fast = kernels.nn_distances(pts)
        brute = _nn_brute(pts)
        ok &= _check("nn-vs-brute", np.array_equal(fast, brute),
                     f"config {k}: max|diff|={np.abs(fast - brute).max():.1e}")
    return ok


def _oracle_assignment(seed) -> bool:
    ok = True
    for k in range(25):
        rng = stream(seed, 100 + k)
        n = int(rng.integers(2, 7))
        a, b = rng.random((n, 3)), rng.random((n, 3))
        perm = kernels.assignment(a, b)
        cost = float(((a - b[perm]) ** 2).sum())
        best = min(
            float(((a - b[list(sigma)]) ** 2).sum())
            for sigma in itertools.permutations(range(n))
        )
        ok &= _check("assignment-vs-factorial", cost == best,
                     f"n={n}: solver={cost!r} brute={best!r}")
    return ok


def _oracle_eta(seed) -> bool:
    density = DensityModel.uniform_box()
    mc = events.eta_moment(density, 1000, 1.0, 1.0, -1.0, 4000, seed=seed)
    oracle = events.eta_moment(density, 1000, 1.0, 1.0, -1.0, 4000, seed=seed + 1,
                               mode="layer-cake-oracle")
    rel = abs(mc - oracle) / oracle
    return _check("eta-layer-cake", rel < 0.05, f"mc={mc:.4f} oracle={oracle:.4f} rel={rel:.3f}")


def _oracle_plan_cost(seed) -> bool:
    # Monte Carlo second moment of a uniform cube about its center
    rng = stream(seed, 7)
    side = 0.37
    pts = (rng.random((200_000, 3)) - 0.5) * side
    mc = float((pts**2).sum(axis=1).mean())
    exact = side**2 / 4.0
    rel = abs(mc - exact) / exact
    return _check("cube-second-moment", rel < 0.01, f"mc={mc:.6f} exact={exact:.6f}")


def _oracle_stokes(seed) -> bool:
    sol = SphereStokesSolution(1.0)
    ok = True
    for radius in (2.0, 4.0, 8.0):
        total = sol.total_traction(radius)
        err = float(np.abs(total - 6 * math.pi * np.eye(3)).max() / (6 * math.pi))
        ok &= _check("traction-R-independence", err < 5e-3, f"R={radius}: rel={err:.2e}")
    rng = stream(seed, 3)
    pts = rng.normal(size=(100, 3))
    pts *= (rng.uniform(1.05, 10.0, 100) / np.linalg.norm(pts, axis=1))[:, None]
    worst = 0.0
    for y0 in pts[:30]:
        step = 1e-4 * float(np.linalg.norm(y0))
        lap = np.zeros((3, 3))
        gq = np.zeros((3, 3))
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = step
            lap += (sol.velocity((y0 + e)[None])[0] - 2 * sol.velocity(y0[None])[0]
                    + sol.velocity((y0 - e)[None])[0]) / step**2
            gq[axis] = (sol.pressure((y0 + e)[None])[0]
                        - sol.pressure((y0 - e)[None])[0]) / (2 * step)
        resid = float(np.abs(-lap + gq).max()) * float(np.linalg.norm(y0)) ** 2
        worst = max(worst, resid)
    ok &= _check("stokes-fd-residual", worst < 1e-4, f"max scaled residual {worst:.2e}")
    return ok


_ORACLES = {
    "events": ("nn", "eta"),
    "eta-moments": ("eta",),
    "w2-rates": ("assignment", "plan"),
    "hneg1": ("assignment",),
    "corrector": ("stokes",),
    "resistance": ("stokes",),
    "brinkman-gap": ("stokes", "nn", "plan"),
}

_ORACLE_FNS = {
    "nn": _oracle_nn,
    "assignment": _oracle_assignment,
    "eta": _oracle_eta,
    "plan": _oracle_plan_cost,
    "stokes": _oracle_stokes,
}


def _run_oracles(config) -> int:
    ok = True
    for name in _ORACLES[config.kind]:
        ok &= _ORACLE_FNS[name](config.seed)
    return 0 if ok else 3


def _refit(path) -> int:
    """Recompute the log-log fit from the rows of a stored report."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    kind = None
    header = None
    rows = []
    for ln in lines:
        if ln.startswith("# brinklab-report"):
            for tok in ln.split():
                if tok.startswith("kind="):
                    kind = tok.split("=", 1)[1]
            continue
        if ln.startswith("#"):
            continue
        if header is None:
            header = ln.split("\t")
            continue
        rows.append(ln.split("\t"))
    if header is None or not rows:
        print("no rows found", file=sys.stderr)
        return 2
    if kind == "corrector":
        # one fit per quantity: normalized value vs eps
        status = 0
        for quantity in dict.fromkeys(r[0] for r in rows):
            pairs = [(float(r[1]), float(r[3])) for r in rows if r[0] == quantity]
            try:
                fit = transport.fit_power_law(pairs)
            except Exception as exc:  # noqa: BLE001
                print(f"cannot refit {quantity}: {exc}", file=sys.stderr)
                status = 2
                continue
            print(f"fit[{quantity}]: slope={fit.slope!r} "
                  f"ci=({fit.slope_ci[0]!r},{fit.slope_ci[1]!r})")
        return status
    try:
        pairs = [(float(r[0]), float(r[2])) for r in rows]
        fit = transport.fit_power_law(pairs)
    except Exception as exc:  # noqa: BLE001
        print(f"cannot refit: {exc}", file=sys.stderr)
        return 2
    print(f"fit: slope={fit.slope!r} intercept={fit.intercept!r} "
          f"ci=({fit.slope_ci[0]!r},{fit.slope_ci[1]!r}) from {len(rows)} rows")
    return 0


if __name__ == "__main__":
    sys.exit(main())
