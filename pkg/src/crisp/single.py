"""Single change region estimation by maximising the CUSUM contrast over discs.

The search scans every prefix of the projection order around a pool of
candidate centres (random directions, the data points themselves and, on the
circle, one direction per cell of the pairwise-bisector arrangement), then
refines the best disc by random perturbation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .contrast import cusum, local_cusum, orient
from .geometry import Disc, LabeledDataset, normalize, sample_uniform_sphere

_SIGN = {"two": 0, "pos": 1, "neg": -1}
_CHUNK_ELEMS = 4_000_000


def resolve_sided(sided: str | None, d: int) -> str:
    """``None``/``"auto"`` means one-sided (positive) on the circle, two-sided otherwise."""
    if sided in (None, "auto"):
        return "pos" if d == 2 else "two"
    if sided not in _SIGN:
        raise ValueError(f"sided must be 'two', 'pos', 'neg' or 'auto', got {sided!r}")
    return sided


@dataclass(frozen=True)
class SearchBudget:
    """Search effort for the disc scans.

    ``exhaustive_d2_max_n`` enables the bisector-cell directions on the
    circle for samples up to that size; with them the prefix scans visit
    every arc-induced subset.
    """

    n_directions: int = 200
    n_perturb: int = 100
    perturb_scale: float = 0.3
    seed: int = 0
    exhaustive_d2_max_n: int = 64
    perturb_decay: float = 0.97

    def __post_init__(self):
        if self.n_directions < 0 or self.n_perturb < 0:
            raise ValueError("search budget counts must be non-negative")
        if not self.perturb_scale > 0:
            raise ValueError("perturb_scale must be positive")
        if not 0.0 < self.perturb_decay <= 1.0:
            raise ValueError("perturb_decay must lie in (0, 1]")


@dataclass(frozen=True)
class RegionEstimate:
    disc: Disc
    statistic: float
    member_indices: np.ndarray
    rss: float | None = None
    outer_disc: Disc | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def n_inside(self) -> int:
        return int(self.member_indices.shape[0])

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[self.member_indices] = True
        return m

    def to_dict(self) -> dict:
        out = self.disc.to_dict()
        out["cusum"] = self.statistic
        out["rss"] = self.rss
        out["n_inside"] = self.n_inside
        out["outer"] = None if self.outer_disc is None else self.outer_disc.to_dict()
        return out


@dataclass(frozen=True)
class ScanConstraints:
    """Feasible set for inner discs: inside ``outer`` with a margin, capped radius."""

    outer: Disc
    gap: float
    radius_cap: float

    @property
    def outer_limit(self) -> float:
        return self.outer.radius - self.gap


def _clip(beta) -> float:
    return float(min(1.0, max(-1.0, beta)))


def _estimate(disc: Disc, ds: LabeledDataset, statistic: float, **kw) -> RegionEstimate:
    members = np.flatnonzero(disc.mask(ds.points))
    return RegionEstimate(disc=disc, statistic=statistic, member_indices=members, **kw)


def _scan_centres(centres: np.ndarray, points: np.ndarray, values: np.ndarray,
                  radius_bounds: tuple[float, float], sided: str):
    """Best admissible prefix for each centre.  Returns (ks, scores, mids)."""
    lo, hi = radius_bounds
    mid_min, mid_max = math.cos(hi), math.cos(lo)
    m = points.shape[0]
    rows = max(1, _CHUNK_ELEMS // max(m, 1))
    ks, scores, mids = [], [], []
    for start in range(0, centres.shape[0], rows):
        proj = centres[start:start + rows] @ points.T
        order = np.argsort(-proj, axis=1, kind="stable")
        ps = np.take_along_axis(proj, order, axis=1)
        vs = values[order]
        k, s, md = kernels.best_prefix_batch(ps, vs, mid_min, mid_max, _SIGN[sided])
        ks.append(k)
        scores.append(s)
        mids.append(md)
    return np.concatenate(ks), np.concatenate(scores), np.concatenate(mids)


def _pick(centres: np.ndarray, scores: np.ndarray, mids: np.ndarray) -> int | None:
    """Index of the best centre: highest score, then smallest radius, then smallest centre."""
    finite = np.flatnonzero(np.isfinite(scores))
    if finite.size == 0:
        return None
    top = scores[finite].max()
    tol = 1e-12 * max(1.0, abs(top))
    tied = finite[scores[finite] >= top - tol]
    # larger cut threshold = smaller radius
    return min(tied, key=lambda i: (-mids[i], tuple(centres[i])))


def scan_direction(center, ds: LabeledDataset, sided: str = "two",
                   radius_bounds: tuple[float, float] = (0.0, math.pi)) -> RegionEstimate:
    """Best concentric cap around ``center`` over prefixes of the projection order.

    The cap threshold is placed midway between the last included and first
    excluded projection.  When fewer than two points are available or no
    prefix is admissible, a zero-statistic estimate is returned.
    """
    center = normalize(center)
    lo, hi = radius_bounds
    if not 0.0 <= lo <= hi <= math.pi:
        raise ValueError(f"invalid radius bounds {radius_bounds!r}")
    ks, scores, mids = _scan_centres(center[None, :], ds.points, ds.values, radius_bounds, sided)
    if ks[0] == 0:
        return _estimate(Disc(center, 1.0), ds, 0.0)
    return _estimate(Disc(center, _clip(mids[0])), ds, max(0.0, float(scores[0])))


def d2_cell_directions(points: np.ndarray) -> np.ndarray:
    """One direction inside every cell of the pairwise-bisector arrangement on the circle.

    Within a cell the order of the points by distance from the direction is
    fixed, so scanning all cells visits every distance-order prefix.
    """
    ang = np.arctan2(points[:, 1], points[:, 0])
    i, j = np.triu_indices(ang.shape[0], k=1)
    half = 0.5 * (ang[i] + ang[j])
    brk = np.unique(np.mod(np.concatenate([half, half + math.pi]), 2 * math.pi))
    if brk.size == 0:
        return np.array([[1.0, 0.0]])
    nxt = np.append(brk[1:], brk[0] + 2 * math.pi)
    mid = 0.5 * (brk + nxt)
    return np.column_stack([np.cos(mid), np.sin(mid)])


def candidate_centres(ds: LabeledDataset, budget: SearchBudget) -> np.ndarray:
    rng = np.random.default_rng([budget.seed, 0])
    parts = [ds.points]
    if budget.n_directions:
        parts.insert(0, sample_uniform_sphere(rng, ds.dim, budget.n_directions))
    if ds.dim == 2 and ds.n <= budget.exhaustive_d2_max_n:
        parts.append(d2_cell_directions(ds.points))
    return np.vstack(parts)


def refine_perturb(seed_estimate: RegionEstimate, ds: LabeledDataset, budget: SearchBudget,
                   constraints: ScanConstraints | None = None, sided: str = "two",
                   rng: np.random.Generator | None = None) -> RegionEstimate:
    """Random-perturbation hill climb on the centre, starting from ``seed_estimate``.

    Each proposal moves the incumbent centre along a random tangent direction
    by a half-normal angle whose scale starts at ``perturb_scale * radius``
    and shrinks by ``perturb_decay`` per proposal.  Proposal ``t`` uses row
    ``t`` of a single ``(n_perturb, d + 1)`` normal draw, so a larger budget
    replays a smaller one before continuing.  The radius
    for each proposed centre is the best admissible cut of its projection
    order.  Contrasts are computed within the outer disc when ``constraints``
    is given.  The result is never worse than the seed.
    """
    if budget.n_perturb == 0:
        return seed_estimate
    if rng is None:
        rng = np.random.default_rng([budget.seed, 1])
    draws = rng.standard_normal((budget.n_perturb, ds.dim + 1))
    directions = draws[:, :ds.dim]
    steps = np.abs(draws[:, ds.dim])

    if constraints is None:
        ref = np.ones(ds.n, dtype=bool)
        outer_center, outer_limit, cap = None, math.inf, math.pi
    else:
        ref = constraints.outer.mask(ds.points)
        outer_center = constraints.outer.center
        outer_limit, cap = constraints.outer_limit, constraints.radius_cap
    seed_disc = seed_estimate.disc
    ref_radius = seed_disc.radius if seed_disc.radius > 0 else 0.1
    center, mid, score, accepted = kernels.hill_climb(
        ds.points[ref], ds.values[ref], seed_disc.center, ref_radius, directions, steps,
        budget.perturb_scale, budget.perturb_decay, outer_center, outer_limit, cap, _SIGN[sided],
    )
    if not np.isfinite(score) or not score > seed_estimate.statistic:
        return seed_estimate
    disc = Disc(normalize(center), _clip(mid))
    if constraints is None:
        stat = cusum(disc.mask(ds.points), ds, sided)
    else:
        stat = local_cusum(disc.mask(ds.points) & ref, ref, ds, sided)
    if stat <= seed_estimate.statistic:
        # kernel and reference sums disagree in the last bits; keep the seed
        return seed_estimate
    return _estimate(disc, ds, stat, outer_disc=seed_estimate.outer_disc,
                     diagnostics={**seed_estimate.diagnostics, "perturb_accepted": int(accepted)})


def detect_single(ds: LabeledDataset, budget: SearchBudget | None = None,
                  sided: str | None = "auto") -> RegionEstimate:
    """Estimate a single change region as the disc maximising the CUSUM contrast."""
    if ds.n < 2:
        raise ValueError("need at least two observations")
    budget = budget or SearchBudget()
    sided = resolve_sided(sided, ds.dim)
    centres = candidate_centres(ds, budget)
    ks, scores, mids = _scan_centres(centres, ds.points, ds.values, (0.0, math.pi), sided)
    best = _pick(centres, scores, mids)
    if best is None:
        return _estimate(Disc(centres[0], 1.0), ds, 0.0)
    disc = Disc(centres[best], _clip(mids[best]))
    stat = max(0.0, cusum(disc.mask(ds.points), ds, sided))
    seed = _estimate(disc, ds, stat, diagnostics={"n_centres": int(centres.shape[0]),
                                                  "scan_statistic": stat})
    return refine_perturb(seed, ds, budget, None, sided)


def parameter_error(est: Disc, truth: Disc) -> float:
    """``|alpha_hat - alpha| + |beta_hat - beta|``, minimised over complementing the truth."""
    if est.dim != truth.dim:
        raise ValueError("dimension mismatch")
    direct = np.linalg.norm(est.center - truth.center) + abs(est.cos_threshold - truth.cos_threshold)
    comp = np.linalg.norm(est.center + truth.center) + abs(est.cos_threshold + truth.cos_threshold)
    return float(min(direct, comp))


__all__ = [
    "RegionEstimate", "ScanConstraints", "SearchBudget", "candidate_centres",
    "d2_cell_directions", "detect_single", "orient", "parameter_error",
    "refine_perturb", "resolve_sided", "scan_direction",
]
