"""Command-line interface: ``mvgeostat <command> [options]``.

Every command writes its primary output plus ``<output>.manifest.json``
recording the resolved configuration, seed, software version and timings.
Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""

import argparse
import csv
import math
import os
import sys
import time
import warnings
from typing import List, Optional, Sequence

import numpy as np

from .assess import DegenerateTargetError, mloe_mmom
from .backend import LikelihoodBackend
from .covariance import InvalidParameterError, ParameterSet, Representation, assemble_sigma, n_params
from .dataset import SpatialDataset
from .geometry import LocationSet, generate_locations
from .linalg import NotPositiveDefiniteError
from .manifest import RunManifest, fmt, write_csv, write_json
from .mle import BOUNDS, FitOptions, fit, log_likelihood
from .predict import cokrige
from .simulate import ExperimentConfig, rng_for, run_experiment, simulate_field
from .tlr import compress, default_tile_size, flop_estimate, footprint

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


_COORD_NAMES = ("x", "y", "lon", "lat", "longitude", "latitude")


class InputError(ValueError):
    """Malformed input file or argument."""


# ---------------------------------------------------------------------------
# input helpers
# ---------------------------------------------------------------------------


def parse_floats(text: str, what: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def parse_theta(text: str, p: Optional[int] = None) -> ParameterSet:
    vec = parse_floats(text, "--theta")
    if p is not None and len(vec) != n_params(p):
        raise InputError(f"--theta: p={p} needs {n_params(p)} values, got {len(vec)}")
    return ParameterSet.from_vector(vec, p)


def read_table(path: str, min_value_cols: int = 0):
    """Read ``x,y,z1,...`` (or ``lon,lat,...``) rows.

    Returns ``(coords, values, coord_names)``; ``values`` has zero columns
    when the file holds locations only.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        ncoord = 0
        while ncoord < len(header) and header[ncoord] in _COORD_NAMES:
            ncoord += 1
        if ncoord == 0:
            raise InputError(f"{path}:1: header must start with coordinate columns such as x,y or lon,lat")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric field in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise InputError(f"{path}:{lineno}: missing or non-finite value")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    arr = np.array(rows)
    if arr.shape[1] - ncoord < min_value_cols:
        raise InputError(f"{path}: expected at least {min_value_cols} value column(s)")
    return arr[:, :ncoord], arr[:, ncoord:], header[:ncoord]


def _metric(args) -> str:
    return "great_circle" if getattr(args, "geodesic", False) else "euclidean"


def load_dataset(path: str, metric: str) -> SpatialDataset:
    coords, values, _ = read_table(path, min_value_cols=1)
    try:
        locs = LocationSet(coords, metric=metric)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    return SpatialDataset(locs, values)


def detrend(data: SpatialDataset):
    """OLS on ``(1, s_1, ..., s_d)`` per variable; returns residual data and coefficients."""
    x = np.column_stack([np.ones(data.n), data.locs.coords])
    coef, *_ = np.linalg.lstsq(x, data.values, rcond=None)
    return data.with_values(data.values - x @ coef), coef


def _outputs(path: str) -> str:
    return path + ".manifest.json"


def _backend(args) -> LikelihoodBackend:
    return LikelihoodBackend.parse(args.backend, nb=args.nb, workers=args.threads)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    theta = parse_theta(args.theta, args.p)
    t0 = time.perf_counter()
    locs = generate_locations(args.locations, args.n, args.seed)
    data = simulate_field(theta, locs, args.seed, workers=args.threads)
    elapsed = time.perf_counter() - t0
    names = ["x", "y"][: locs.d] if locs.d <= 2 else [f"s{k + 1}" for k in range(locs.d)]
    header = names + [f"z{i + 1}" for i in range(theta.p)]
    write_csv(args.out, header, np.hstack([locs.coords, data.values]).tolist())
    RunManifest(
        "simulate",
        {"p": theta.p, "n": locs.n, "theta": theta.to_vector().tolist(), "locations": args.locations},
        seed=args.seed,
        timings={"simulate": elapsed},
        outputs=[args.out],
    ).write(_outputs(args.out))
    return EXIT_OK


def cmd_estimate(args) -> int:
    data = load_dataset(args.data, _metric(args))
    config = {"data": args.data, "backend": args.backend, "rep": args.rep, "nb": args.nb, "detrend": args.detrend}
    if args.detrend:
        data, coef = detrend(data)
        config["detrend_design"] = ["1"] + [f"s{k + 1}" for k in range(data.locs.d)]
        config["detrend_coefficients"] = coef.tolist()
    backend = _backend(args)
    scale = float(np.max(data.locs.distances)) if args.geodesic else 1.0
    opts = FitOptions(
        algorithm=args.algorithm,
        max_evals=args.max_evals,
        rep=args.rep,
        range_bounds=(BOUNDS["range"][0] * scale, BOUNDS["range"][1] * scale),
    )
    if args.start:
        opts.start = parse_theta(args.start, data.p)
    elif args.geodesic:
        p = data.p
        var = np.clip(np.var(data.values, axis=0), *BOUNDS["sigma2"])
        opts.start = ParameterSet(var, 0.1 * scale, np.full(p, 0.5), np.eye(p))
    config["range_bounds"] = list(opts.range_bounds)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = fit(data, backend, opts)
    elapsed = time.perf_counter() - t0
    out = res.to_dict()
    wall = [e.pop("wall_time") for e in out["trace"]]
    out["warnings"] = [str(w.message) for w in caught]
    for w in out["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    write_json(args.out, out)
    RunManifest("estimate", config, timings={"fit": elapsed, "evaluation_wall_time": wall}, outputs=[args.out]).write(
        _outputs(args.out)
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    data = load_dataset(args.data, _metric(args))
    tcoords, truth, _ = read_table(args.targets)
    theta = parse_theta(args.theta, data.p)
    targets = LocationSet(tcoords, metric=_metric(args))
    t0 = time.perf_counter()
    res = cokrige(theta, data, targets, _backend(args), args.rep, return_variance=args.variance)
    elapsed = time.perf_counter() - t0
    res.to_csv(args.out)
    outputs = [args.out]
    summary = {}
    if truth.shape[1] == data.p:
        res.score(truth)
        summary = {"mspe": res.mspe_per_variable.tolist(), "mspe_avg": res.mspe_avg}
        spath = os.path.splitext(args.out)[0] + ".mspe.json"
        write_json(spath, summary)
        outputs.append(spath)
    if args.variance:
        vpath = os.path.splitext(args.out)[0] + ".variance.csv"
        write_csv(vpath, [f"var_{i + 1}" for i in range(data.p)], res.variances.tolist())
        outputs.append(vpath)
    RunManifest(
        "predict",
        {"data": args.data, "targets": args.targets, "theta": theta.to_vector().tolist(), "backend": args.backend},
        timings={"predict": elapsed},
        outputs=outputs,
    ).write(_outputs(args.out))
    return EXIT_OK


def cmd_assess(args) -> int:
    coords, _, _ = read_table(args.data)
    tcoords, _, _ = read_table(args.targets)
    locs = LocationSet(coords, metric=_metric(args))
    targets = LocationSet(tcoords, metric=_metric(args))
    theta_t = parse_theta(args.theta_true)
    theta_a = parse_theta(args.theta_approx, theta_t.p)
    rep = mloe_mmom(theta_t, theta_a, locs, targets, workers=args.threads, skip_degenerate=args.skip_degenerate)
    out = rep.to_dict()
    out.pop("timing")
    write_json(args.out, out)
    RunManifest(
        "assess",
        {
            "data": args.data,
            "targets": args.targets,
            "theta_true": theta_t.to_vector().tolist(),
            "theta_approx": theta_a.to_vector().tolist(),
            "skip_degenerate": args.skip_degenerate,
        },
        timings=rep.timing,
        outputs=[args.out],
    ).write(_outputs(args.out))
    return EXIT_OK


def _locations_from_args(args) -> LocationSet:
    if args.data:
        coords, _, _ = read_table(args.data)
        return LocationSet(coords, metric=_metric(args))
    return generate_locations(args.locations, args.n, args.seed)


def cmd_rankmap(args) -> int:
    theta = parse_theta(args.theta)
    locs = _locations_from_args(args).morton_sorted()
    order = locs.n * theta.p
    nb = args.nb or default_tile_size(order)
    t0 = time.perf_counter()
    sigma = assemble_sigma(theta, locs, Representation.INTERLEAVED, nb=nb)
    timings = {"generate": time.perf_counter() - t0}
    os.makedirs(args.out_dir, exist_ok=True)
    summary, outputs = [], []
    for eps in parse_floats(args.eps, "--eps"):
        t0 = time.perf_counter()
        tlr = compress(sigma, eps, workers=args.threads)
        timings[f"compress_{eps:g}"] = time.perf_counter() - t0
        rm = tlr.rank_map()
        path = os.path.join(args.out_dir, f"rankmap_{eps:g}.csv")
        rm.to_csv(path)
        outputs.append(path)
        fp = footprint(tlr)
        summary.append(
            {
                "eps": eps,
                "nb": nb,
                "max_rank": rm.max_rank,
                "mean_rank": rm.mean_rank,
                "dense_bytes": fp.dense_bytes,
                "tlr_bytes": fp.tlr_bytes,
                "savings_ratio": fp.savings_ratio,
                "flop_estimate": flop_estimate(tlr),
            }
        )
    spath = os.path.join(args.out_dir, "summary.json")
    write_json(spath, summary)
    outputs.append(spath)
    RunManifest(
        "rankmap",
        {"theta": theta.to_vector().tolist(), "n": locs.n, "nb": nb, "eps": args.eps, "data": args.data},
        seed=args.seed,
        timings=timings,
        outputs=outputs,
    ).write(os.path.join(args.out_dir, "manifest.json"))
    return EXIT_OK


def cmd_bench(args) -> int:
    theta = parse_theta(args.theta)
    rows = []
    for n in (int(v) for v in parse_floats(args.n, "--n")):
        locs = generate_locations(args.locations, n, args.seed)
        values = rng_for(args.seed, n).standard_normal((locs.n, theta.p))
        data = SpatialDataset(locs, values)
        for tag in args.backends.split(","):
            backend = LikelihoodBackend.parse(tag, nb=args.nb, workers=args.threads)
            log_likelihood(theta, data.subset(np.arange(min(locs.n, 16))), backend)  # warm-up
            best = math.inf
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                ll = log_likelihood(theta, data, backend)
                best = min(best, time.perf_counter() - t0)
            rows.append([locs.n * theta.p, backend.tag, backend.tile_size(locs.n * theta.p), ll, best])
            print(f"N={locs.n * theta.p} {backend.tag}: {best:.3f} s", file=sys.stderr)
    write_csv(args.out, ["N", "backend", "nb", "loglik", "seconds"], rows)
    RunManifest(
        "bench",
        {"theta": theta.to_vector().tolist(), "n": args.n, "backends": args.backends, "nb": args.nb, "repeat": args.repeat},
        seed=args.seed,
        timings={"rows": [[r[0], r[1], r[4]] for r in rows]},
        outputs=[args.out],
    ).write(_outputs(args.out))
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig(
        experiment=args.id,
        replicates=args.replicates,
        n=args.n,
        n_pred=args.n_pred,
        betas=parse_floats(args.betas, "--betas"),
        ranges=parse_floats(args.ranges, "--ranges"),
        backends=[b for b in args.backends.split(",") if b],
        seed=args.seed,
        nb=args.nb,
        workers=args.threads,
        max_evals=args.max_evals,
    )
    rep = run_experiment(cfg)
    rep.write(args.out_dir)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvgeostat", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None, help="task-graph workers (default: GEOSTAT_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a multivariate Gaussian random field")
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--n", type=int, required=True, help="target number of locations")
    p.add_argument("--theta", required=True, help="comma-separated parameter vector")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--locations", choices=["grid", "jittered_grid", "uniform_random"], default="grid")
    p.add_argument("--out", default="simulated.csv")
    p.set_defaults(func=cmd_simulate)

    def backend_opts(q):
        q.add_argument("--backend", default="exact", help="exact, tlr5, tlr7, tlr9, tlr:<eps> or dst:<fraction>")
        q.add_argument("--nb", type=int, default=None, help="tile size")
        q.add_argument("--rep", choices=["I", "II"], default="I")
        q.add_argument("--geodesic", action="store_true", help="coordinates are lon,lat; use great-circle km")

    p = sub.add_parser("estimate", help="maximum likelihood fit")
    p.add_argument("--data", required=True)
    backend_opts(p)
    p.add_argument("--detrend", action="store_true", help="remove an OLS trend in the coordinates first")
    p.add_argument("--algorithm", choices=["bobyqa", "neldermead"], default="bobyqa")
    p.add_argument("--max-evals", type=int, default=500)
    p.add_argument("--start", default=None, help="starting parameter vector")
    p.add_argument("--out", default="fit.json")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("predict", help="cokriging at target locations")
    p.add_argument("--data", required=True)
    p.add_argument("--targets", required=True, help="CSV with coordinates and optional true values")
    p.add_argument("--theta", required=True)
    backend_opts(p)
    p.add_argument("--variance", action="store_true", help="also write prediction variances")
    p.add_argument("--out", default="predictions.csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("assess", help="MLOE/MMOM of approximate parameters")
    p.add_argument("--data", required=True, help="CSV whose coordinate columns are the data locations")
    p.add_argument("--targets", required=True)
    p.add_argument("--theta-true", required=True)
    p.add_argument("--theta-approx", required=True)
    p.add_argument("--skip-degenerate", action="store_true", help="warn instead of failing on targets at data sites")
    p.add_argument("--geodesic", action="store_true")
    p.add_argument("--out", default="assessment.json")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("rankmap", help="per-tile TLR ranks of a covariance matrix")
    p.add_argument("--theta", required=True)
    p.add_argument("--data", default=None, help="CSV of locations (otherwise generated)")
    p.add_argument("--n", type=int, default=720)
    p.add_argument("--locations", choices=["grid", "jittered_grid", "uniform_random"], default="grid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", default="1e-5,1e-7,1e-9")
    p.add_argument("--nb", type=int, default=None)
    p.add_argument("--geodesic", action="store_true")
    p.add_argument("--out-dir", default="rankmap")
    p.set_defaults(func=cmd_rankmap)

    p = sub.add_parser("bench", help="time one log-likelihood evaluation per backend")
    p.add_argument("--theta", default="1,1,0.09,0.5,1,0.5")
    p.add_argument("--n", default="1024,2048", help="comma-separated location counts")
    p.add_argument("--backends", default="exact,tlr5")
    p.add_argument("--nb", type=int, default=None)
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--locations", choices=["grid", "jittered_grid", "uniform_random"], default="grid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("experiment", help="run synthetic experiment 1, 2 or 3")
    p.add_argument("--id", type=int, choices=[1, 2, 3], required=True)
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--n", type=int, default=1600)
    p.add_argument("--n-pred", type=int, default=None)
    p.add_argument("--betas", default="0,0.2,0.4,0.6,0.8")
    p.add_argument("--ranges", default="0.03,0.09,0.2")
    p.add_argument("--backends", default="exact,tlr5,tlr7,tlr9")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nb", type=int, default=None, help="tile size of the approximate backends")
    p.add_argument("--max-evals", type=int, default=500)
    p.add_argument("--out-dir", default="experiment")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    # LinAlgError and DegenerateTargetError subclass ValueError, so test them first
    except (NotPositiveDefiniteError, np.linalg.LinAlgError, DegenerateTargetError, FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, InvalidParameterError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
