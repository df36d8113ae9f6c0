"""Multiple change region detection with local scans inside random outer discs.

Each random outer disc B yields one candidate inner disc (concentric prefix
scan, then constrained perturbation refinement).  A candidate is kept when its
local CUSUM exceeds the CUSUM threshold and the two-group RSS is below the
RSS threshold for ``|B| - 2`` degrees of freedom.  Candidates are then
selected greedily by decreasing local CUSUM, discarding any that intersect
an already selected region.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .contrast import ThresholdConfig, local_cusum, num_outer_discs, rss
from .geometry import Disc, LabeledDataset, discs_intersect, empirical_loss, sample_outer_discs
from .single import (
    _SIGN, RegionEstimate, ScanConstraints, SearchBudget, _clip, refine_perturb, resolve_sided,
)

REJECT_REASONS = ("too_few_points", "below_lambda_T", "above_gamma", "no_feasible_radius")


@dataclass(frozen=True)
class DetectorConfig:
    """Tunables of the multi-region detector.

    J: number of outer discs, or ``"auto"`` to derive it from ``alpha``.
    omega: inner-disc margin; candidates keep ``omega / 2`` from the outer boundary.
    intersect: ``"geometric"`` (disc overlap) or ``"empirical"`` (shared sample points).
    """

    J: int | str = "auto"
    alpha: float = 0.05
    omega: float = 0.1
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    inner_radius_frac_cap: float = 2.0 / 3.0
    min_outer_points: int = 10
    budget: SearchBudget = field(default_factory=lambda: SearchBudget(n_perturb=100))
    sided: str = "auto"
    intersect: str = "geometric"
    threads: int = 1

    def __post_init__(self):
        if isinstance(self.J, str):
            if self.J != "auto":
                raise ValueError(f"J must be a positive integer or 'auto', got {self.J!r}")
        elif int(self.J) != self.J or self.J < 1:
            raise ValueError(f"J must be a positive integer, got {self.J!r}")
        if not 0.0 < self.omega < 2 * math.pi:
            raise ValueError(f"omega must lie in (0, 2 pi), got {self.omega!r}")
        if not 0.0 < self.inner_radius_frac_cap <= 1.0:
            raise ValueError("inner_radius_frac_cap must lie in (0, 1]")
        if self.intersect not in ("geometric", "empirical"):
            raise ValueError(f"unknown intersect mode {self.intersect!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def resolve_J(self, d: int) -> int:
        return num_outer_discs(d, self.alpha) if self.J == "auto" else int(self.J)


@dataclass(frozen=True)
class ScanResult:
    """Outcome of scanning one outer disc; ``reason`` is None when accepted."""

    outer: Disc
    estimate: RegionEstimate | None
    reason: str | None
    n_outer: int
    gamma: float | None = None

    @property
    def accepted(self) -> bool:
        return self.reason is None

    def log_entry(self, index: int) -> dict:
        entry = {"outer_index": index, "n_outer": self.n_outer, "accepted": self.accepted,
                 "reason": self.reason, "gamma": self.gamma}
        if self.estimate is not None:
            entry["cusum"] = self.estimate.statistic
            entry["rss"] = self.estimate.rss
        return entry


@dataclass(frozen=True)
class MultiRegionResult:
    regions: list[RegionEstimate]
    initial_candidates: list[RegionEstimate]
    per_outer_log: list[dict]
    J: int
    lambda_t: float

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    def labels(self, n: int) -> np.ndarray:
        """Point labels: 0 for background, k for the k-th selected region."""
        lab = np.zeros(n, dtype=int)
        for k, reg in enumerate(self.regions, start=1):
            lab[reg.member_indices[lab[reg.member_indices] == 0]] = k
        return lab


def scan_outer(outer: Disc, ds: LabeledDataset, cfg: DetectorConfig, lambda_t: float,
               rng: np.random.Generator | None = None) -> ScanResult:
    """Best inner disc within ``outer`` and its threshold decision."""
    d = ds.dim
    sided = resolve_sided(cfg.sided, d)
    in_b = outer.mask(ds.points)
    n_b = int(np.count_nonzero(in_b))
    if n_b < max(cfg.min_outer_points, 3):
        return ScanResult(outer, None, "too_few_points", n_b)
    r_cap = min(cfg.inner_radius_frac_cap * outer.radius, math.pi / 2)
    r_max = min(r_cap, outer.radius - cfg.omega / 2)
    if r_max <= 0.0:
        return ScanResult(outer, None, "no_feasible_radius", n_b)

    idx_b = np.flatnonzero(in_b)
    pts, vals = ds.points[idx_b], ds.values[idx_b]
    proj = pts @ outer.center
    order = np.argsort(-proj, kind="stable")
    ks, scores, mids = kernels.best_prefix_batch(
        proj[order][None, :], vals[order][None, :], math.cos(r_max), 1.0, _SIGN[sided])
    if ks[0] == 0:
        return ScanResult(outer, None, "no_feasible_radius", n_b)

    disc = Disc(outer.center, _clip(mids[0]))
    in_a = disc.mask(ds.points) & in_b
    seed = RegionEstimate(disc=disc, statistic=local_cusum(in_a, in_b, ds, sided),
                          member_indices=np.flatnonzero(in_a), outer_disc=outer)
    constraints = ScanConstraints(outer=outer, gap=cfg.omega / 2, radius_cap=r_cap)
    est = refine_perturb(seed, ds, cfg.budget, constraints, sided, rng=rng)

    in_a = est.disc.mask(ds.points) & in_b
    t = local_cusum(in_a, in_b, ds, sided)
    resid = rss(in_a, in_b, ds)
    gamma = cfg.thresholds.rss_threshold(n_b - 2, ds.n, d)
    est = RegionEstimate(disc=est.disc, statistic=t, member_indices=np.flatnonzero(in_a),
                         rss=resid, outer_disc=outer, diagnostics=est.diagnostics)
    if not t > lambda_t:
        return ScanResult(outer, est, "below_lambda_T", n_b, gamma)
    if not resid < gamma:
        return ScanResult(outer, est, "above_gamma", n_b, gamma)
    return ScanResult(outer, est, None, n_b, gamma)


def _intersects(a: RegionEstimate, b: RegionEstimate, mode: str) -> bool:
    if mode == "empirical":
        return np.intersect1d(a.member_indices, b.member_indices).size > 0
    return discs_intersect(a.disc, b.disc)


def select_disjoint(candidates: list[RegionEstimate], mode: str = "geometric") -> list[RegionEstimate]:
    """Greedy selection by decreasing statistic, dropping candidates that meet a kept one."""
    ranked = sorted(candidates, key=lambda c: -c.statistic)
    kept: list[RegionEstimate] = []
    for cand in ranked:
        if not any(_intersects(cand, k, mode) for k in kept):
            kept.append(cand)
    return kept


def outer_discs(ds: LabeledDataset, J: int, seed: int) -> list[Disc]:
    return sample_outer_discs(np.random.default_rng([seed, 2]), J, ds.dim)


def detect_multi(ds: LabeledDataset, cfg: DetectorConfig | None = None) -> MultiRegionResult:
    """Detect an unknown number of disjoint change regions."""
    if ds.n < 3:
        raise ValueError("need at least three observations")
    cfg = cfg or DetectorConfig()
    J = cfg.resolve_J(ds.dim)
    lam_t = cfg.thresholds.cusum_threshold(ds.n, J, ds.dim)
    seed = cfg.budget.seed
    discs = outer_discs(ds, J, seed)

    def work(j: int) -> ScanResult:
        return scan_outer(discs[j], ds, cfg, lam_t, rng=np.random.default_rng([seed, 3, j]))

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(work, range(J)))
    else:
        results = [work(j) for j in range(J)]

    initial = [r.estimate for r in results if r.accepted]
    log = [r.log_entry(j) for j, r in enumerate(results)]
    regions = select_disjoint(initial, cfg.intersect)
    return MultiRegionResult(regions=regions, initial_candidates=initial, per_outer_log=log,
                             J=J, lambda_t=lam_t)


def _as_mask(region, ds: LabeledDataset) -> np.ndarray:
    if isinstance(region, RegionEstimate):
        return region.mask(ds.n)
    return ds.mask(region)


def match_regions(truth, estimates, ds: LabeledDataset, greedy: bool = False) -> dict:
    """Permutation-matched maximum loss between true and estimated regions.

    Regions may be discs, estimates or boolean membership masks.

    Exact over all permutations for up to 8 regions.  When the counts differ
    the matched loss is infinite and a greedy matching is reported instead.
    """
    t_masks = [_as_mask(r, ds) for r in truth]
    e_masks = [_as_mask(r, ds) for r in estimates]
    r, r_hat = len(t_masks), len(e_masks)
    losses = np.array([[empirical_loss(a, b, ds.n) for b in e_masks] for a in t_masks]).reshape(r, r_hat)

    def greedy_match():
        pairs, used_t, used_e = [], set(), set()
        for flat in np.argsort(losses, axis=None, kind="stable"):
            i, j = divmod(int(flat), r_hat)
            if i not in used_t and j not in used_e:
                pairs.append((i, j))
                used_t.add(i)
                used_e.add(j)
        return sorted(pairs)

    if r != r_hat:
        pairs = greedy_match() if r and r_hat else []
        return {"permuted_max_loss": math.inf,
                "per_region_losses": [float(losses[i, j]) for i, j in pairs],
                "matching": pairs, "loss_matrix": losses}
    if r == 0:
        return {"permuted_max_loss": 0.0, "per_region_losses": [], "matching": [],
                "loss_matrix": losses}
    if r > 8:
        if not greedy:
            raise ValueError("exact matching supports at most 8 regions; pass greedy=True")
        pairs = greedy_match()
        per = [float(losses[i, j]) for i, j in pairs]
        return {"permuted_max_loss": max(per), "per_region_losses": per,
                "matching": pairs, "loss_matrix": losses}
    best, best_perm = math.inf, None
    for perm in itertools.permutations(range(r)):
        worst = max(losses[k, perm[k]] for k in range(r))
        if worst < best:
            best, best_perm = worst, perm
    pairs = list(enumerate(best_perm))
    return {"permuted_max_loss": float(best),
            "per_region_losses": [float(losses[i, j]) for i, j in pairs],
            "matching": pairs, "loss_matrix": losses}
