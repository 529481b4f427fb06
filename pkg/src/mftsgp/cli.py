"""Command-line interface: ``mftsgp <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 when more
than 20% of the study replications failed.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import basis as bs
from . import benchmark as bm
from . import design as dz
from . import study
from . import surrogate as sg
from .cokriging import InvalidPosteriorError, RankError
from .kernels import ConditioningError
from .optim import OptimizationError

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3
NUMERICAL_ERRORS = (
    ConditioningError,
    RankError,
    InvalidPosteriorError,
    OptimizationError,
    bm.IntegrationError,
    np.linalg.LinAlgError,
    FloatingPointError,
)

logger = logging.getLogger("mftsgp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: str | None, overrides) -> dict:
    """JSON config file merged with ``key=value`` overrides (dotted keys address nested dicts)."""
    cfg = {}
    if path:
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
    for item in overrides or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        node = cfg
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = _parse_value(value)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get(study.OUTPUT_ENV, "mftsgp-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pendulum_config(cfg: dict) -> bm.PendulumConfig:
    return bm.PendulumConfig(**cfg.get("pendulum", {}))


def write_matrix_csv(path, times, Z) -> None:
    """Observation matrix: rows are time steps, first column ``t``, then one column per point."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"p{j}" for j in range(Z.shape[1])])
        for t, row in zip(times, Z):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_matrix_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    arr = np.array([[float(v) for v in r] for r in rows])
    return arr[:, 0], arr[:, 1:]


def _load_pair(design_dir: Path) -> dz.NestedDesignPair:
    low = dz.read_design_csv(design_dir / "low.csv")
    high = dz.read_design_csv(design_dir / "high.csv")
    imap = json.loads((design_dir / "pair.json").read_text())["inclusion_map"]
    return dz.NestedDesignPair(low, high, np.array(imap))


# ------------------------------------------------------------------ commands


def cmd_design(args, cfg) -> int:
    out = _out_dir(args)
    pair = dz.nested_maximin_designs(
        args.n_low, args.n_high, len(bm.INPUT_BOUNDS), args.seed, args.sweeps, bm.INPUT_BOUNDS
    )
    dz.write_design_csv(pair.low, out / "low.csv")
    dz.write_design_csv(pair.high, out / "high.csv")
    (out / "pair.json").write_text(json.dumps({"inclusion_map": pair.inclusion_map.tolist()}))
    print(f"wrote {out / 'low.csv'} and {out / 'high.csv'}")
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    pcfg = _pendulum_config(cfg)
    design = dz.read_design_csv(args.design)
    X = bm.to_physical(design.points)
    Z = (bm.integrate_high(X, pcfg) if args.level == "high" else bm.simulate_low(X, pcfg)).T
    out = Path(args.output) if args.output else _out_dir(args) / f"obs_{args.level}.csv"
    write_matrix_csv(out, pcfg.times, Z)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_basis(args, cfg) -> int:
    _, Z_L = read_matrix_csv(args.obs)
    if args.law == "dirac":
        dist = bs.BasisDistribution.dirac(bs.svd_dirac_basis(Z_L))
    elif args.law == "empirical":
        dist = bs.empirical_ensemble(Z_L, args.k, args.n, args.seed, args.n_high)
    else:
        dist = bs.haar_distribution(Z_L.shape[0], args.n, args.seed)
    out = Path(args.output) if args.output else _out_dir(args) / "basis.npz"
    bs.save_distribution(dist, out)
    print(f"wrote {out} ({dist.kind}, {dist.n} member(s))")
    return EXIT_OK


def cmd_fit(args, cfg) -> int:
    pair = _load_pair(Path(args.designs))
    times, Z_L = read_matrix_csv(args.low_obs)
    _, Z_H = read_matrix_csv(args.high_obs)
    data = sg.MultiFidelityData(pair, Z_L, Z_H, times)
    dist = bs.load_distribution(args.basis)
    hyper = None
    if args.N == "auto":
        ref = bs.BasisDistribution.dirac(dist.reference or dist.members[0])
        sel = sg.select_dimension(data, ref, args.n_max, args.method, law="dirac")
        N, hyper = sel.N, sel.hyper
        print(f"selected N={N}")
    else:
        N = int(args.N)
    fit = sg.fit_full if args.method == "full" else sg.fit_projection
    model = fit(data, dist, N, hyper)
    out = Path(args.output) if args.output else _out_dir(args) / "model.npz"
    sg.save_surrogate(model, out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_predict(args, cfg) -> int:
    model = sg.load_surrogate(args.model)
    points = dz.read_design_csv(args.points).points
    pred = sg.predict(model, points)
    times = (model.projection if isinstance(model, sg.FullSurrogate) else model).data.times
    out = _out_dir(args)
    for j in range(points.shape[0]):
        sg.write_prediction_csv(out / f"pred_{j:04d}.csv", times, pred.mean[j], pred.variance[j])
    print(f"wrote {points.shape[0]} prediction file(s) to {out}")
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    model = sg.load_surrogate(args.model)
    points = dz.read_design_csv(args.points).points
    times, truth = read_matrix_csv(args.truth)
    pred = sg.predict(model, points)
    q2 = sg.q2_timeseries(pred.mean.T, truth)
    cov = sg.coverage_timeseries(pred, truth)
    out = Path(args.output) if args.output else _out_dir(args) / "evaluation.csv"
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "q2", "coverage"])
        for row in zip(times, q2, cov):
            w.writerow([repr(float(v)) for v in row])
    print(f"mean Q2 {np.nanmean(q2):.4f}, coverage {np.mean(cov):.3f}; wrote {out}")
    return EXIT_OK


def cmd_sobol(args, cfg) -> int:
    pcfg = _pendulum_config(cfg)
    res = bm.pendulum_sobol(args.level, args.n_mc, args.seed, pcfg)
    out = Path(args.output) if args.output else _out_dir(args) / f"sobol_{args.level}.csv"
    cols = ["t"] + [f"S_{n}" for n in bm.INPUT_NAMES] + ["interactions"]
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for u, t in enumerate(pcfg.times):
            vals = [t, *res.first_order[:, u], res.interactions[u]]
            w.writerow([repr(float(v)) for v in vals])
    print(f"wrote {out}")
    return EXIT_OK


def cmd_bench_loo(args, cfg) -> int:
    rows = study.loo_benchmark(args.n_x, args.n_t, args.n_test, args.seed, repeats=args.repeats)
    out = Path(args.output) if args.output else _out_dir(args) / "bench_loo.csv"
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "seconds", "mse", "lengths"])
        for r in rows:
            w.writerow([r["mode"], repr(r["seconds"]), repr(r["mse"]), " ".join(map(repr, r["lengths"]))])
            print(f"{r['mode']:>17s}  {r['seconds']:.4f} s  mse {r['mse']:.3e}")
    return EXIT_OK


def cmd_reproduce(args, cfg) -> int:
    cfg = dict(cfg)
    if args.out_dir:
        cfg["output_dir"] = args.out_dir
    if args.replications is not None:
        cfg["replications"] = args.replications
    try:
        ecfg = study.ExperimentConfig.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    report = study.run_experiment(ecfg, jobs=args.jobs)
    for m, v in report.time_averaged("q2").items():
        print(f"{m:>15s}  mean Q2 {np.mean(v):.4f}")
    print(f"{report.n_failed} of {len(report.results)} replication(s) failed; output in {report.output_dir}")
    return EXIT_PARTIAL if report.partial_failure else EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration entry (repeatable)")
    common.add_argument("--out-dir", help=f"output directory (default ${study.OUTPUT_ENV} or ./mftsgp-out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="mftsgp", description="Multi-fidelity GP surrogates for time-series outputs")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("design", parents=[common], help="nested maximin LHS designs")
    s.add_argument("--n-low", type=int, default=100)
    s.add_argument("--n-high", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sweeps", type=int, default=100)
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("simulate", parents=[common], help="run a pendulum code on a design")
    s.add_argument("--design", required=True)
    s.add_argument("--level", choices=("high", "low"), required=True)
    s.add_argument("--output")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("basis", parents=[common], help="build a basis law from low-fidelity outputs")
    s.add_argument("--obs", required=True)
    s.add_argument("--law", choices=("dirac", "empirical", "haar"), default="dirac")
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--n", type=int, default=64)
    s.add_argument("--n-high", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output")
    s.set_defaults(func=cmd_basis)

    s = sub.add_parser("fit", parents=[common], help="fit a projection or full surrogate")
    s.add_argument("--designs", required=True, help="directory written by 'design'")
    s.add_argument("--low-obs", required=True)
    s.add_argument("--high-obs", required=True)
    s.add_argument("--basis", required=True)
    s.add_argument("--method", choices=("projection", "full"), default="full")
    s.add_argument("--N", default="auto")
    s.add_argument("--n-max", type=int, default=15)
    s.add_argument("--output")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", parents=[common], help="predict time series at design points")
    s.add_argument("--model", required=True)
    s.add_argument("--points", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", parents=[common], help="per-time Q2 and coverage on a test set")
    s.add_argument("--model", required=True)
    s.add_argument("--points", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--output")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sobol", parents=[common], help="first-order Sobol indices of a pendulum code")
    s.add_argument("--level", choices=("high", "low"), default="high")
    s.add_argument("--n-mc", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output")
    s.set_defaults(func=cmd_sobol)

    s = sub.add_parser("bench-loo", parents=[common], help="benchmark the LOO criteria")
    s.add_argument("--n-x", type=int, default=30)
    s.add_argument("--n-t", type=int, default=51)
    s.add_argument("--n-test", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--output")
    s.set_defaults(func=cmd_bench_loo)

    s = sub.add_parser("reproduce-figure", parents=[common], help="run the method comparison study")
    s.add_argument("--replications", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, args.set)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"mftsgp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"mftsgp: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError, TypeError, KeyError) as exc:
        print(f"mftsgp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
