"""Command-line front end.

Subcommands: ``cluster``, ``bench``, ``modelsel``, ``generate`` and
``scalemap``. Exit status is 0 on success, 1 on I/O or parse failures and
2 on invalid configuration. Machine-readable records keep all timing
information under a single ``"timing"`` key; ``--no-timing`` drops it so
repeated invocations produce byte-identical files.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import datetime
import json
import math
import os
import re
import sys

import numpy as np

from lbflats import __version__, kernels
from lbflats._random import derive_int
from lbflats.baselines import KFlatsConfig, kflats_restarts
from lbflats.data import (
    SETTINGS,
    AngleConstraintError,
    MatrixFormatError,
    SyntheticSpec,
    generate,
    load_labels,
    load_matrix,
    misclassification_rate,
    save_labels,
    save_matrix,
    save_result,
)
from lbflats.geometry import FlatKind, GeometryError
from lbflats.lbf import LbfConfig, lbf_cluster
from lbflats.modelsel import DEFAULT_K_MAX, select_model_order
from lbflats.scale import ScaleConfig, scale_map

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ helpers


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _mean_shift(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*,\s*(\d+)\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected 'l,m' (two integers), got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _angle(text: str) -> float:
    """Radians, either a number or ``pi/n`` / ``k*pi/n``."""
    m = re.fullmatch(r"\s*(?:(\d+(?:\.\d*)?)\s*\*\s*)?pi\s*/\s*(\d+(?:\.\d*)?)\s*", text)
    if m:
        return float(m.group(1) or 1.0) * math.pi / float(m.group(2))
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad angle {text!r}; use radians or e.g. pi/8") from None


def _dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    return dims


def _dump(record: dict) -> str:
    return json.dumps(record, indent=2, sort_keys=True) + "\n"


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w") as fh:
        fh.write(text)


def _record(command: str, config: dict, seed: int, body: dict, timing: dict | None) -> dict:
    rec = {"command": command, "version": __version__, "config": config, "seed": seed}
    rec.update(body)
    if timing is not None:
        timing = dict(timing)
        timing["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        rec["timing"] = timing
    return rec


def _load_points(args):
    return load_matrix(args.input, fmt=args.input_format, delimiter=args.delimiter,
                       header=True if args.header else None)


def _scale_config(args) -> ScaleConfig:
    kw = {"step": args.step, "start_size": args.start, "max_size": getattr(args, "max_size", None)}
    if args.mean_shift is not None:
        ell, m = args.mean_shift
        kw.update(mean_shift=True, mean_shift_neighbors=ell, mean_shift_iters=m)
    kw["allow_first_scale_min"] = args.first_scale_min
    return ScaleConfig(**kw)


def _workers() -> int:
    raw = os.environ.get("LBF_THREADS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise CliError(f"LBF_THREADS must be a positive integer, got {raw!r}") from None
        if value < 1:
            raise CliError(f"LBF_THREADS must be a positive integer, got {raw!r}")
        return value
    return os.cpu_count() or 1


# ----------------------------------------------------------------- commands


def cmd_cluster(args) -> int:
    cloud = _load_points(args)
    truth = load_labels(args.labels) if args.labels else None
    if truth is not None and truth.shape[0] != cloud.n:
        raise CliError(f"labels file has {truth.shape[0]} entries for {cloud.n} points", EXIT_IO)
    cfg = LbfConfig(d=args.dim, K=args.k, C=args.candidates, p=args.passes, kind=args.kind,
                    scale=_scale_config(args), seed=args.seed)
    result = lbf_cluster(cloud, cfg)
    error = misclassification_rate(result.labels, truth) if truth is not None else None

    body = {
        "n": cloud.n,
        "ambient_dim": cloud.ambient_dim,
        "error_pct": error,
        "l1_energy": result.l1_energy,
        "l2_energy": result.l2_energy,
        "energy_trace": result.energy_trace,
        "active_candidates": [int(j) for j in result.active],
        "empty_clusters": result.empty_clusters,
        "kernels": kernels.backend(),
    }
    timing = None if args.no_timing else {"elapsed_s": result.elapsed}
    record = _record("cluster", cfg.to_dict(), args.seed, body, timing)

    if args.out:
        save_labels(args.out + ".labels", result.labels)
        ext = ".jsonl" if args.format == "jsonl" else ".txt"
        save_result(args.out + ext, result, args.format)
        _write_text(args.out + ".json", _dump(record))
    else:
        sys.stdout.write(_dump(record))
    if error is not None:
        print(f"error: {error:.2f}%", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def _bench_trial(job):
    """One generator + clustering trial (module level so worker processes can run it)."""
    method, suite, dims, D, fraction, trial_seed, restarts, backend = job
    kernels.set_backend(backend)
    lc = generate(SyntheticSpec(dims, D, outlier_fraction=fraction, kind=suite, seed=trial_seed))
    if method == "kflats":
        res = kflats_restarts(lc.cloud, KFlatsConfig(d=max(dims), K=len(dims), kind=suite, seed=trial_seed),
                              restarts)
    else:
        cfg = LbfConfig.variant(method, d=max(dims), K=len(dims), kind=suite, seed=trial_seed)
        res = lbf_cluster(lc.cloud, cfg)
    return {
        "seed": trial_seed,
        "error_pct": misclassification_rate(res.labels, lc.truth),
        "l1_energy": res.l1_energy,
        "l2_energy": res.l2_energy,
    }, res.elapsed


def cmd_bench(args) -> int:
    if args.setting not in SETTINGS:
        raise CliError(f"unknown setting {args.setting!r}; valid settings: {', '.join(SETTINGS)}")
    if not 0 <= args.outliers < 100:
        raise CliError("--outliers is a percentage in [0, 100)")
    dims, D = SETTINGS[args.setting]
    fraction = args.outliers / 100.0
    seeds = [derive_int(args.seed, "trial", t) for t in range(args.trials)]
    jobs = [(args.method, args.suite, dims, D, fraction, s, args.restarts, kernels.backend()) for s in seeds]
    workers = min(_workers(), len(jobs))
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_bench_trial, jobs))
    else:
        outcomes = [_bench_trial(job) for job in jobs]
    trials = [o[0] for o in outcomes]
    elapsed = [o[1] for o in outcomes]
    errors = np.array([t["error_pct"] for t in trials])

    config = {"suite": args.suite, "setting": args.setting, "dims": list(dims), "ambient_dim": D,
              "outliers_pct": args.outliers, "trials": args.trials, "method": args.method}
    if args.method == "kflats":
        config["restarts"] = args.restarts
    summary = {"mean_error_pct": float(errors.mean()), "median_error_pct": float(np.median(errors))}
    timing = None if args.no_timing else {"elapsed_s": elapsed, "mean_elapsed_s": float(np.mean(elapsed)),
                                          "workers": workers}
    record = _record("bench", config, args.seed, {"summary": summary, "trials": trials}, timing)

    d = args.delimiter
    header = ["suite", "setting", "outliers_pct", "method", "trials", "mean_error_pct", "median_error_pct"]
    row = [args.suite, args.setting, f"{args.outliers:g}", args.method, str(args.trials),
           f"{summary['mean_error_pct']:.4f}", f"{summary['median_error_pct']:.4f}"]
    if timing is not None:
        header.append("mean_time_s")
        row.append(f"{timing['mean_elapsed_s']:.4f}")
    table = d.join(header) + "\n" + d.join(row) + "\n"
    if args.json == "-":
        sys.stdout.write(_dump(record))
    else:
        sys.stdout.write(table)
        if args.json:
            _write_text(args.json, _dump(record))
    if args.out:
        _write_text(args.out + ".csv", table)
        _write_text(args.out + ".json", _dump(record))
    return EXIT_OK


def cmd_modelsel(args) -> int:
    cloud = _load_points(args)
    if args.kmax < 3:
        raise CliError("--kmax must be >= 3")
    curve = select_model_order(cloud, args.dim, args.kmax, args.kind, seed=args.seed)
    rows = curve.rows()
    d = args.delimiter
    lines = [d.join(["k", "W", "SOD"])]
    for k, w, sod in rows:
        lines.append(d.join([str(k), repr(w), "" if sod is None else repr(sod)]))
    table = "\n".join(lines) + "\n"
    body = {"W": [float(w) for w in curve.W], "sod": [float(s) for s in curve.sod], "k_opt": curve.k_opt}
    timing = None if args.no_timing else {"elapsed_s": curve.elapsed}
    record = _record("modelsel", {"d": args.dim, "k_max": args.kmax, "kind": FlatKind.parse(args.kind).value},
                     args.seed, body, timing)
    if args.json == "-":
        sys.stdout.write(_dump(record))
    else:
        sys.stdout.write(table)
        sys.stdout.write(f"k_opt{d}{curve.k_opt}\n")
        if args.json:
            _write_text(args.json, _dump(record))
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.setting:
        if args.setting not in SETTINGS:
            raise CliError(f"unknown setting {args.setting!r}; valid settings: {', '.join(SETTINGS)}")
        dims, D = SETTINGS[args.setting]
    else:
        if args.dims is None or args.ambient is None:
            raise CliError("give --setting or both --dims and --ambient")
        dims, D = args.dims, args.ambient
    spec = SyntheticSpec(dims, D, samples_per_subspace=args.samples, samples_per_dim=args.samples_per_dim,
                         noise_sigma=args.noise, outlier_fraction=args.outliers / 100.0, kind=args.kind,
                         min_angle=args.min_angle, seed=args.seed, outlier_rule=args.outlier_rule)
    lc = generate(spec)
    ext = ".bin" if args.format == "binary" else ".csv"
    save_matrix(args.out + ext, lc.points, args.format)
    save_labels(args.out + ".labels", lc.truth)
    body = {"n": int(lc.points.shape[0]), "ambient_dim": D, "outliers": lc.n_outliers,
            "files": {"matrix": os.path.basename(args.out + ext), "labels": os.path.basename(args.out + ".labels")}}
    _write_text(args.out + ".json", _dump(_record("generate", spec.to_dict(), args.seed, body, None)))
    print(f"{lc.points.shape[0]} points in R^{D} ({lc.n_outliers} outliers) -> {args.out}{ext}")
    return EXIT_OK


def cmd_scalemap(args) -> int:
    cloud = _load_points(args)
    sizes = scale_map(cloud, args.dim, _scale_config(args), args.kind)
    d = args.delimiter
    cols = [f"x{i}" for i in range(cloud.ambient_dim)] + ["size"]
    lines = [d.join(cols)]
    for row, size in zip(cloud.points, sizes):
        lines.append(d.join([repr(float(v)) for v in row] + [str(int(size))]))
    _write_text(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_input(p):
    p.add_argument("input", help="point matrix (delimited text or LBF1 binary)")
    p.add_argument("--input-format", choices=["auto", "text", "binary"], default="auto")
    p.add_argument("--delimiter", default=",", help="text delimiter (default ',')")
    p.add_argument("--header", action="store_true", help="first text row is a header")


def _add_scale(p):
    p.add_argument("--start", type=_positive_int, default=None, help="first neighborhood size S")
    p.add_argument("--step", type=_positive_int, default=2, help="neighborhood growth step T")
    p.add_argument("--mean-shift", type=_mean_shift, default=None, metavar="L,M",
                   help="move seeds to the mean of their L nearest points, M times")
    p.add_argument("--first-scale-min", action="store_true",
                   help="let the first examined size count as a local minimum")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lbflats", description="Hybrid linear modeling by local best-fit flats.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--kernels", choices=["auto", "native", "python"], default=None,
                        help="kernel backend (default: LBF_KERNELS or auto)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="partition a point file into K flats")
    _add_input(p)
    p.add_argument("--dim", type=int, required=True, help="flat dimension d")
    p.add_argument("--k", type=int, required=True, help="number of flats K")
    p.add_argument("--kind", choices=["affine", "linear"], default="affine")
    p.add_argument("--candidates", type=int, default=None, help="candidate count C (default 70K)")
    p.add_argument("--passes", type=int, default=None, help="greedy passes p (default 3K)")
    _add_scale(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels", default=None, help="ground-truth labels; prints the error rate")
    p.add_argument("--out", default=None, help="output prefix for .labels, result and .json record")
    p.add_argument("--format", choices=["jsonl", "text"], default="jsonl", help="per-point result format")
    p.add_argument("--no-timing", action="store_true", help="omit timing from the record")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("bench", help="synthetic benchmark trials")
    p.add_argument("--suite", choices=["linear", "affine"], required=True)
    p.add_argument("--setting", required=True, help=f"one of {', '.join(SETTINGS)}")
    p.add_argument("--outliers", type=float, default=5.0, help="outlier percentage (e.g. 5 or 30)")
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=["lbf", "lbfms", "kflats"], default="lbf")
    p.add_argument("--restarts", type=_positive_int, default=30, help="K-flats restarts (best by l2 energy)")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--json", default=None, help="write the JSON record here ('-' for stdout instead of the table)")
    p.add_argument("--out", default=None, help="output prefix for .csv and .json")
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("modelsel", help="estimate the number of flats")
    _add_input(p)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--kmax", type=int, default=DEFAULT_K_MAX)
    p.add_argument("--kind", choices=["affine", "linear"], default="affine")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", default=None, help="write the JSON record here ('-' for stdout instead of the table)")
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(func=cmd_modelsel)

    p = sub.add_parser("generate", help="sample a synthetic hybrid linear data set")
    p.add_argument("--setting", default=None, help=f"one of {', '.join(SETTINGS)}")
    p.add_argument("--dims", type=_dims, default=None, help="subspace dimensions, e.g. 2,2")
    p.add_argument("--ambient", type=int, default=None, help="ambient dimension D")
    p.add_argument("--samples", type=_positive_int, default=250, help="points per subspace")
    p.add_argument("--samples-per-dim", type=_positive_int, default=None,
                   help="points per subspace as a multiple of its dimension (overrides --samples)")
    p.add_argument("--noise", type=float, default=0.05, help="Gaussian noise sigma")
    p.add_argument("--outliers", type=float, default=0.0, help="outlier percentage")
    p.add_argument("--outlier-rule", choices=["inliers", "final"], default="inliers",
                   help="percentage of the inliers (default) or of the final data set")
    p.add_argument("--kind", choices=["affine", "linear"], default="linear")
    p.add_argument("--min-angle", type=_angle, default=None, help="radians or e.g. pi/8")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["text", "binary"], default="text")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("scalemap", help="selected neighborhood size at every point")
    _add_input(p)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--kind", choices=["affine", "linear"], default="affine")
    _add_scale(p)
    p.add_argument("--max-size", type=_positive_int, default=None, help="largest neighborhood examined")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.set_defaults(func=cmd_scalemap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.kernels:
            kernels.set_backend(args.kernels)
        return args.func(args)
    except CliError as exc:
        print(f"lbflats {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, MatrixFormatError) as exc:
        print(f"lbflats {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (AngleConstraintError, GeometryError, ValueError) as exc:
        print(f"lbflats {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
