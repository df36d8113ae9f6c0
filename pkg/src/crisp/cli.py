"""Command-line entry point: ``crisp {simulate,detect,preprocess,oracle-check}``.

Exit codes: 0 success, 1 validation failure, 2 bad input, 3 degenerate data.
Every command writes a ``manifest.json`` next to its outputs with the resolved
configuration, seed, version and per-stage wall times.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .contrast import ThresholdConfig
from .geometry import LabeledDataset, empirical_loss, sample_uniform_sphere
from .multi import DetectorConfig, detect_multi, match_regions
from .oracle import oracle_argmax_cusum, shatters
from .preprocess import DegenerateDataError, GeoGrid, build_mst, latlon_to_xyz, preprocess_grid, \
    robust_scale, standardize
from .simulate import SimDesign, run_monte_carlo
from .single import SearchBudget, detect_single

EXIT_OK, EXIT_VALIDATION, EXIT_INPUT, EXIT_DEGENERATE = 0, 1, 2, 3


class InputError(Exception):
    pass


class _Timer:
    def __init__(self):
        self.stages: dict[str, float] = {}

    def __call__(self, name):
        timer = self

        class _Stage:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.stages[name] = time.perf_counter() - self.t0
                return False

        return _Stage()


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int_list(text: str) -> list[int]:
    vals = _float_list(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}")
    return [int(v) for v in vals]


def _resolve_threads(flag: int | None) -> int:
    if flag is not None:
        threads = flag
    else:
        raw = os.environ.get("CRISP_THREADS", "").strip()
        if not raw:
            return 1
        try:
            threads = int(raw)
        except ValueError as exc:
            raise InputError(f"CRISP_THREADS must be a positive integer, got {raw!r}") from exc
    if threads < 1:
        raise InputError(f"thread count must be >= 1, got {threads}")
    return threads


def _parse_rss(text: str) -> tuple[str, float | None, float]:
    """``chi2:<p>`` or ``lm:<lambda>`` (``lm`` alone uses the default lambda)."""
    rule, _, arg = text.partition(":")
    try:
        if rule == "chi2":
            p = float(arg) if arg else 0.05
            if not 0.0 < p < 1.0:
                raise ValueError
            return "chi2", None, p
        if rule == "lm":
            lam = float(arg) if arg else None
            if lam is not None and not lam > 0:
                raise ValueError
            return "lm", lam, 0.05
    except ValueError:
        pass
    raise InputError(f"--rss must be chi2:<p in (0,1)> or lm:<lambda > 0>, got {text!r}")


def _parse_lambda_t(text: str):
    if text in ("auto", "theory"):
        return text
    try:
        val = float(text)
    except ValueError as exc:
        raise InputError(f"--lambda-t must be auto, theory or a number, got {text!r}") from exc
    if not val > 0:
        raise InputError("--lambda-t must be positive")
    return val


def _write_manifest(out: Path, command: str, config: dict, seed: int, timer: _Timer, **extra) -> None:
    manifest = {"command": command, "config": config, "seed": seed, "version": __version__,
                "kernel_backend": kernels.BACKEND, "timings_s": timer.stages, **extra}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _prepare_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    if args.dim not in (2, 3, 4):
        raise InputError(f"--dim must be 2, 3 or 4, got {args.dim}")
    if args.regions not in (1, 4):
        raise InputError("--regions must be 1 or 4")
    if args.reps < 1 or any(n < 3 for n in args.n_list) or any(t < 0 for t in args.theta_list):
        raise InputError("need reps >= 1, n >= 3 and theta >= 0")
    threads = _resolve_threads(args.threads)
    designs = [SimDesign(d=args.dim, n=n, theta=t, r=args.regions)
               for n in args.n_list for t in args.theta_list]
    detector = "single" if args.regions == 1 else "multi"
    cfg = SearchBudget() if detector == "single" else DetectorConfig(threads=threads)
    out = _prepare_out(args.out)
    timer = _Timer()
    with timer("monte_carlo"):
        report = run_monte_carlo(designs, args.reps, detector, cfg, master_seed=args.seed)
    (out / "report.csv").write_text(report.to_csv())
    (out / "report.json").write_text(report.to_json() + "\n")
    timer.stages.update({f"cell d={d} n={n} theta={t}": s for (d, n, t), s in report.timings.items()})
    _write_manifest(out, "simulate", {"dim": args.dim, "n_list": args.n_list, "theta_list": args.theta_list,
                                      "regions": args.regions, "reps": args.reps, "detector": detector,
                                      "threads": threads}, args.seed, timer)
    print(f"wrote {len(report.rows)} rows to {out / 'report.csv'}")
    return EXIT_OK


# ------------------------------------------------------------------ detect

def read_points_csv(path: str, geo: bool = False):
    """Read ``x1..xd,y`` (or ``lat,lon,y``) with an optional ``truth`` label column."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if "y" not in fields:
        raise InputError(f"{path}: missing 'y' column")
    if geo:
        coord_cols = ["lat", "lon"]
    else:
        coord_cols = sorted((f for f in fields if f.startswith("x") and f[1:].isdigit()),
                            key=lambda f: int(f[1:]))
        if coord_cols != [f"x{k}" for k in range(1, len(coord_cols) + 1)] or len(coord_cols) < 2:
            raise InputError(f"{path}: expected coordinate columns x1..xd (d >= 2)")
    if any(c not in fields for c in coord_cols):
        raise InputError(f"{path}: missing coordinate columns {coord_cols}")
    if not rows:
        raise InputError(f"{path}: no data rows")
    try:
        coords = np.array([[float(r[c]) for c in coord_cols] for r in rows])
        y = np.array([float(r["y"]) for r in rows])
        truth = np.array([int(r["truth"]) for r in rows]) if "truth" in fields else None
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed numeric field ({exc})") from exc
    if not (np.all(np.isfinite(coords)) and np.all(np.isfinite(y))):
        raise InputError(f"{path}: non-finite values")
    if geo:
        pts = latlon_to_xyz(coords[:, 0], coords[:, 1])
    else:
        norms = np.linalg.norm(coords, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InputError(f"{path}: coordinates are not unit vectors (tolerance 1e-6)")
        pts = coords / norms[:, None]
    return LabeledDataset(pts, y), truth


def cmd_detect(args) -> int:
    threads = _resolve_threads(args.threads)
    rss_rule, lambda_r, rss_level = _parse_rss(args.rss)
    lambda_t = _parse_lambda_t(args.lambda_t)
    if args.J != "auto":
        try:
            J = int(args.J)
        except ValueError as exc:
            raise InputError(f"--J must be a positive integer or auto, got {args.J!r}") from exc
        if J < 1:
            raise InputError("--J must be positive")
    else:
        J = "auto"
    if not 0.0 < args.omega < 2 * math.pi:
        raise InputError("--omega must lie in (0, 2 pi)")
    if not 0.0 < args.alpha < math.pi:
        raise InputError("--alpha must lie in (0, pi)")

    timer = _Timer()
    with timer("read"):
        ds, truth = read_points_csv(args.input, args.geo)
    if ds.n < 3:
        raise InputError("need at least three points")
    sigma = None
    if args.standardize == "mst-mad":
        with timer("standardize"):
            sigma = robust_scale(ds.values, build_mst(ds.points))
            ds = standardize(ds, sigma)

    budget = SearchBudget(n_directions=args.n_directions, n_perturb=args.n_perturb, seed=args.seed)
    resolved: dict = {"input": args.input, "mode": args.mode, "geo": args.geo, "sided": args.sided,
                      "standardize": args.standardize, "n": ds.n, "d": ds.dim, "threads": threads,
                      "n_directions": budget.n_directions, "n_perturb": budget.n_perturb}
    with timer("detect"):
        if args.mode == "single":
            est = detect_single(ds, budget, args.sided)
            regions = [est]
            labels = est.mask(ds.n).astype(int)
        else:
            cfg = DetectorConfig(J=J, alpha=args.alpha, omega=args.omega, budget=budget,
                                 thresholds=ThresholdConfig(lambda_t=lambda_t, rss_rule=rss_rule,
                                                            rss_level=rss_level, lambda_r=lambda_r),
                                 sided=args.sided, threads=threads)
            res = detect_multi(ds, cfg)
            regions = res.regions
            labels = res.labels(ds.n)
            resolved.update({"J": res.J, "alpha": args.alpha, "omega": args.omega,
                             "lambda_t": res.lambda_t, "rss_rule": rss_rule,
                             "rss_level": rss_level, "lambda_r": lambda_r,
                             "n_initial_candidates": len(res.initial_candidates)})

    out = _prepare_out(args.out)
    (out / "regions.json").write_text(json.dumps([r.to_dict() for r in regions], indent=2) + "\n")
    with open(out / "assignments.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "region"])
        w.writerows(enumerate(labels.tolist()))
    extra = {"sigma_hat": sigma}
    if truth is not None:
        if args.mode == "single":
            extra["truth_loss"] = empirical_loss(regions[0].mask(ds.n), truth > 0, ds.n)
        else:
            masks = [truth == k for k in np.unique(truth[truth > 0])]
            extra["truth_loss"] = match_regions(masks, regions, ds, greedy=True)["permuted_max_loss"]
    _write_manifest(out, "detect", resolved, args.seed, timer, **extra)
    print(f"{len(regions)} region(s) written to {out / 'regions.json'}")
    return EXIT_OK


# -------------------------------------------------------------- preprocess

def cmd_preprocess(args) -> int:
    if not -90.0 <= args.lat_min < args.lat_max <= 90.0:
        raise InputError(f"empty latitude band [{args.lat_min}, {args.lat_max}]")
    if args.sample_n < 2:
        raise InputError("--sample-n must be >= 2")
    timer = _Timer()
    with timer("read"):
        try:
            grid = GeoGrid.from_csv(args.grid)
            fill = GeoGrid.from_csv(args.fill_grid) if args.fill_grid else None
        except (OSError, ValueError) as exc:
            raise InputError(str(exc)) from exc
    rng = np.random.default_rng(args.seed)
    with timer("sample_snap_standardize"):
        ds, sigma, dropped = preprocess_grid(grid, args.sample_n, rng, fill, args.lat_min, args.lat_max)
    out = _prepare_out(args.out)
    with open(out / "points.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "x3", "y"])
        for p, v in zip(ds.points, ds.values):
            w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), repr(float(v))])
    _write_manifest(out, "preprocess", {"grid": args.grid, "fill_grid": args.fill_grid,
                                        "sample_n": args.sample_n, "lat_min": args.lat_min,
                                        "lat_max": args.lat_max}, args.seed, timer,
                    sigma_hat=sigma, n_dropped=dropped, n_kept=ds.n)
    print(f"{ds.n} points written to {out / 'points.csv'} (sigma_hat={sigma:.6g}, dropped={dropped})")
    return EXIT_OK


# ------------------------------------------------------------ oracle-check

def cmd_oracle_check(args) -> int:
    if args.dim not in (2, 3):
        raise InputError(f"--dim must be 2 or 3, got {args.dim}")
    limit = 60 if args.dim == 2 else 12
    if not 1 <= args.n <= limit:
        raise InputError(f"--n must lie in [1, {limit}] at d={args.dim}")
    if args.trials < 1:
        raise InputError("--trials must be >= 1")
    failures = 0
    print(f"{'trial':>5}  {'oracle':>12}  {'detector':>12}  {'argmax':>6}  {'shatter':>7}")
    for t in range(args.trials):
        rng = np.random.default_rng([args.seed, t])
        x = sample_uniform_sphere(rng, args.dim, args.n)
        ds = LabeledDataset(x, rng.standard_normal(args.n))
        ok_argmax = "n/a"
        if args.n >= 2:
            orc = oracle_argmax_cusum(ds, "two")
            det = detect_single(ds, SearchBudget(seed=t), "two")
            if args.dim == 2:
                good = abs(orc.value - det.statistic) <= 1e-10
            else:
                # the stochastic search can only fall short of the exact maximum
                good = det.statistic <= orc.value + 1e-10
            ok_argmax = "pass" if good else "FAIL"
            failures += not good
            line = f"{t:>5}  {orc.value:>12.8f}  {det.statistic:>12.8f}"
        else:
            line = f"{t:>5}  {'-':>12}  {'-':>12}"
        ok_shatter = "n/a"
        if args.n <= args.dim + 2:
            expected = args.n <= args.dim + 1
            good = shatters(x) == expected
            ok_shatter = "pass" if good else "FAIL"
            failures += not good
        print(f"{line}  {ok_argmax:>6}  {ok_shatter:>7}")
    print(f"{'FAILED' if failures else 'OK'}: {failures} failing check(s) over {args.trials} trial(s)")
    return EXIT_VALIDATION if failures else EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crisp", description="Change regions on the sphere.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo runs of the built-in designs")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--n-list", type=_int_list, required=True)
    p.add_argument("--theta-list", type=_float_list, required=True)
    p.add_argument("--regions", type=int, default=1)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default="crisp_simulate")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="detect change regions in a point file")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=("single", "multi"), default="multi")
    p.add_argument("--omega", type=float, default=0.1)
    p.add_argument("--J", default="auto")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--lambda-t", default="auto")
    p.add_argument("--rss", default="chi2:0.05")
    p.add_argument("--standardize", choices=("mst-mad", "none"), default="none")
    p.add_argument("--sided", choices=("two", "pos", "neg", "auto"), default="auto")
    p.add_argument("--geo", action="store_true", help="input columns are lat,lon,y (degrees)")
    p.add_argument("--n-directions", type=int, default=200)
    p.add_argument("--n-perturb", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default="crisp_detect")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("preprocess", help="sample and standardise a lat/lon grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--fill-grid", default=None)
    p.add_argument("--sample-n", type=int, default=2000)
    p.add_argument("--lat-min", type=float, default=-90.0)
    p.add_argument("--lat-max", type=float, default=90.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="crisp_preprocess")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("oracle-check", help="compare the detector against exact enumeration")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--n", type=int, default=25)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DegenerateDataError as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
