"""Simulation designs, data generation, Monte Carlo driver and metrics."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import comb

from .geometry import Disc, LabeledDataset, discs_intersect, empirical_loss, normalize, sample_uniform_sphere
from .multi import DetectorConfig, detect_multi, match_regions
from .single import SearchBudget, detect_single, parameter_error

# Radius of the four-region design by dimension; d=3 is interpolated.
MULTI_RADIUS = {2: 0.3, 3: 0.5, 4: 0.7}


def single_design_regions(d: int) -> list[Disc]:
    return [Disc(normalize(np.ones(d)), 0.75)]


def multi_design_regions(d: int) -> list[Disc]:
    if d == 2:
        centres = [(1, 0), (0, 1), (-1, 0), (0, -1)]
    elif d == 3:
        centres = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]
    elif d == 4:
        centres = [(1, 1, 1, -1), (1, -1, -1, -1), (-1, 1, -1, -1), (-1, -1, 1, -1)]
    else:
        raise ValueError(f"four-region design is defined for d in (2, 3, 4), got {d}")
    r = MULTI_RADIUS[d]
    return [Disc.from_radius(c, r) for c in centres]


@dataclass(frozen=True)
class SimDesign:
    """One simulation cell.

    region_spec is ``"single_cap"``, ``"four_caps"`` or a list of discs
    (custom).  All regions share the mean shift ``theta`` over a zero
    background.
    """

    d: int
    n: int
    theta: float
    r: int = 1
    sigma: float = 1.0
    region_spec: str | tuple = "auto"
    seed: int = 0

    def regions(self) -> list[Disc]:
        spec = self.region_spec
        if spec == "auto":
            spec = "single_cap" if self.r == 1 else "four_caps"
        if spec == "single_cap":
            return single_design_regions(self.d)
        if spec == "four_caps":
            return multi_design_regions(self.d)
        regions = list(spec)
        for i in range(len(regions)):
            for j in range(i + 1, len(regions)):
                if discs_intersect(regions[i], regions[j]):
                    raise ValueError(f"custom regions {i} and {j} overlap")
        return regions


@dataclass
class Simulated:
    ds: LabeledDataset
    truth: list[Disc]
    labels: np.ndarray


def generate(design: SimDesign, rng: np.random.Generator) -> Simulated:
    """Uniform design points; responses ``theta * 1{inside a region} + sigma * eps``."""
    regions = design.regions()
    x = sample_uniform_sphere(rng, design.d, design.n)
    labels = np.zeros(design.n, dtype=int)
    for k, reg in enumerate(regions, start=1):
        labels[reg.mask(x) & (labels == 0)] = k
    y = design.theta * (labels > 0) + design.sigma * rng.standard_normal(design.n)
    return Simulated(LabeledDataset(x, y), regions, labels)


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need at least two paired values")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit requires positive values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def adjusted_rand_index(a, b) -> float:
    """Adjusted Rand index of two labelings (pair-counting form)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("labelings differ in length")
    n = a.size
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def replicate_seed(master: int, cell: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master, cell, rep])


def _run_one(design: SimDesign, detector: str, cfg, seedseq: np.random.SeedSequence) -> dict:
    data_ss, det_ss = seedseq.spawn(2)
    sim = generate(design, np.random.default_rng(data_ss))
    det_seed = int(det_ss.generate_state(1, dtype=np.uint32)[0])
    if detector == "single":
        budget = cfg if isinstance(cfg, SearchBudget) else SearchBudget()
        budget = replace(budget, seed=det_seed)
        est = detect_single(sim.ds, budget)
        truth = sim.truth[0]
        est_labels = est.mask(sim.ds.n).astype(int)
        return {
            "loss": empirical_loss(est.mask(sim.ds.n), truth, sim.ds),
            "param_error": parameter_error(est.disc, truth),
            "ari": adjusted_rand_index(sim.labels, est_labels),
        }
    cfg = cfg or DetectorConfig()
    cfg = replace(cfg, budget=replace(cfg.budget, seed=det_seed))
    res = detect_multi(sim.ds, cfg)
    match = match_regions(sim.truth, res.regions, sim.ds)
    return {
        "loss": match["permuted_max_loss"],
        "rhat": float(res.n_regions),
        "rhat_correct": float(res.n_regions == len(sim.truth)),
        "ari": adjusted_rand_index(sim.labels, res.labels(sim.ds.n)),
    }


@dataclass
class MonteCarloReport:
    """Per-cell mean and standard deviation of each metric.

    ``rows`` hold ``(d, n, theta, metric, mean, sd, reps)``.  Wall-clock
    timings are kept apart in ``timings`` so the table itself is reproducible.
    """

    rows: list[tuple]
    reps: int
    master_seed: int
    timings: dict = field(default_factory=dict, compare=False)

    def cell(self, d: int, n: int, theta: float, metric: str) -> tuple[float, float]:
        for row in self.rows:
            if row[:4] == (d, n, theta, metric):
                return row[4], row[5]
        raise KeyError((d, n, theta, metric))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d", "n", "theta", "metric", "mean", "sd", "reps"])
        for d, n, theta, metric, mean, sd, reps in self.rows:
            w.writerow([d, n, repr(float(theta)), metric, repr(mean), repr(sd), reps])
        return buf.getvalue()

    def to_json(self) -> str:
        cells = [dict(zip(("d", "n", "theta", "metric", "mean", "sd", "reps"), row)) for row in self.rows]
        return json.dumps({"reps": self.reps, "master_seed": self.master_seed, "cells": cells},
                          indent=2, allow_nan=True)


def run_monte_carlo(designs: list[SimDesign], reps: int, detector: str = "single",
                    cfg=None, master_seed: int = 0) -> MonteCarloReport:
    """Run ``reps`` seeded replicates of each design and aggregate the metrics.

    Replicate ``k`` of cell ``c`` is seeded from ``(master_seed, c, k)`` only,
    so cells can be computed in any order.  Infinite losses (region count
    mismatch) are excluded from the loss mean; ``loss_finite`` counts the rest.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if detector not in ("single", "multi"):
        raise ValueError(f"detector must be 'single' or 'multi', got {detector!r}")
    rows, timings = [], {}
    for c, design in enumerate(designs):
        t0 = time.perf_counter()
        out = [_run_one(design, detector, cfg, replicate_seed(master_seed, c, k)) for k in range(reps)]
        timings[(design.d, design.n, design.theta)] = time.perf_counter() - t0
        for metric in out[0]:
            vals = np.array([o[metric] for o in out], dtype=float)
            if metric == "loss":
                finite = vals[np.isfinite(vals)]
                rows.append((design.d, design.n, design.theta, "loss_finite", float(finite.size), 0.0, reps))
                vals = finite
            mean = float(vals.mean()) if vals.size else math.nan
            sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            rows.append((design.d, design.n, design.theta, metric, mean, sd, reps))
    return MonteCarloReport(rows=rows, reps=reps, master_seed=master_seed, timings=timings)
