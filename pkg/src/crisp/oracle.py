"""Exhaustive enumeration of disc-induced subsets at small sample sizes.

On the circle a cap is an arc, so the induced subsets are the circular runs
of the angular order.  On the 2-sphere a cap is the intersection with an
affine half-space of R^3; every separable dichotomy of points in general
position is realised by a plane through three of them with some assignment
of those three to either side, which gives an O(n^3) candidate list.

Subsets are Python ``int`` bitsets with bit ``i`` set when point ``i`` is a
member.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import Disc, LabeledDataset

MAX_N = {2: 400, 3: 60}
_DEGENERATE_TOL = 1e-10


def mask_to_bits(mask) -> int:
    """Bitset of a boolean membership vector (bit i = point i)."""
    idx = np.flatnonzero(np.asarray(mask, dtype=bool))
    return sum(1 << int(i) for i in idx)


def bits_to_mask(bits: int, n: int) -> np.ndarray:
    return np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)


def _pack_rows(masks: np.ndarray) -> list[int]:
    # little-endian bit order so that byte-level int conversion keeps bit i = point i
    packed = np.packbits(masks, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


@dataclass
class SubsetFamily:
    """Deduplicated disc-induced subsets of ``n`` points with one witness disc each."""

    n: int
    witnesses: dict[int, Disc]

    @property
    def bitsets(self) -> set[int]:
        return set(self.witnesses)

    def __len__(self) -> int:
        return len(self.witnesses)

    def __contains__(self, bits: int) -> bool:
        return bits in self.witnesses

    def masks(self) -> tuple[list[int], np.ndarray]:
        """Sorted bitsets and the matching ``(len, n)`` boolean membership matrix."""
        keys = sorted(self.witnesses)
        out = np.zeros((len(keys), self.n), dtype=bool)
        for r, b in enumerate(keys):
            out[r] = bits_to_mask(b, self.n)
        return keys, out

    def restrict(self, subset_idx) -> set[int]:
        """Traces of the family on the points ``subset_idx`` (re-indexed 0..k-1)."""
        subset_idx = list(subset_idx)
        traces = set()
        for b in self.witnesses:
            traces.add(sum(1 << k for k, i in enumerate(subset_idx) if (b >> i) & 1))
        return traces


def _check_size(points: np.ndarray, d: int) -> None:
    if points.ndim != 2 or points.shape[1] != d:
        raise ValueError(f"expected an (n, {d}) array of unit vectors")
    if points.shape[0] > MAX_N[d]:
        raise ValueError(f"exact enumeration at d={d} supports n <= {MAX_N[d]}, got {points.shape[0]}")


def enumerate_disc_subsets_d2(points) -> SubsetFamily:
    """All arc-induced subsets of distinct points on the unit circle."""
    points = np.asarray(points, dtype=float)
    _check_size(points, 2)
    n = points.shape[0]
    fam = {0: Disc(np.array([1.0, 0.0]), 1.0)}
    if n == 0:
        return SubsetFamily(0, fam)
    fam[(1 << n) - 1] = Disc(np.array([1.0, 0.0]), -1.0)
    ang = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2 * math.pi)
    order = np.argsort(ang, kind="stable")
    a = ang[order]
    # gap midpoints: boundary b[k] sits between a[k-1] and a[k] (circularly)
    prev = np.roll(a, 1)
    prev[0] -= 2 * math.pi
    bounds = 0.5 * (prev + a)
    for start in range(n):
        bits = 0
        for length in range(1, n):
            bits |= 1 << int(order[(start + length - 1) % n])
            lo = bounds[start]
            end = start + length
            hi = bounds[end % n] + 2 * math.pi * (end // n)
            centre = 0.5 * (lo + hi)
            half = 0.5 * (hi - lo)
            fam.setdefault(bits, Disc(np.array([math.cos(centre), math.sin(centre)]), math.cos(half)))
    return SubsetFamily(n, fam)


def _plane_dichotomies(points: np.ndarray):
    """Masks and perturbed-plane witnesses for every (triple, on-plane assignment, orientation)."""
    n = points.shape[0]
    triples = np.array(list(itertools.combinations(range(n), 3)), dtype=np.int64)
    p0, p1, p2 = points[triples[:, 0]], points[triples[:, 1]], points[triples[:, 2]]
    normal = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(normal, axis=1)
    if np.any(norm < _DEGENERATE_TOL):
        raise _Degenerate("coincident points")
    normal /= norm[:, None]
    offset = np.einsum("ij,ij->i", normal, p0)
    side = points @ normal.T - offset[None, :]          # (n, T)
    on_plane = np.zeros_like(side, dtype=bool)
    on_plane[triples.T, np.arange(triples.shape[0])[None, :]] = True
    off = np.abs(np.where(on_plane, np.inf, side))
    if n > 3 and off.min() < _DEGENERATE_TOL:
        raise _Degenerate("four points on a common circle")
    margin = off.min(axis=0) if n > 3 else np.full(triples.shape[0], 1.0)

    # rows [p_k, -1] of the on-plane constraints, shared by every assignment
    M = np.concatenate([np.stack([p0, p1, p2], axis=1), -np.ones((triples.shape[0], 3, 1))], axis=2)
    gram = M @ np.transpose(M, (0, 2, 1))
    above = side > 0
    for signs in itertools.product((-1.0, 1.0), repeat=3):
        s = np.broadcast_to(np.array(signs), (triples.shape[0], 3))
        sol = np.einsum("tki,tk->ti", M, np.linalg.solve(gram, s[..., None])[..., 0])
        scale = margin / (2.0 * (np.linalg.norm(sol[:, :3], axis=1) + np.abs(sol[:, 3])))
        a = normal + scale[:, None] * sol[:, :3]
        b = offset + scale * sol[:, 3]
        mask = above.copy()
        for k in range(3):
            mask[triples[:, k], np.arange(triples.shape[0])] = signs[k] > 0
        yield mask.T, a, b
        yield ~mask.T, -a, -b


class _Degenerate(Exception):
    pass


def _witness(a: np.ndarray, b: float) -> Disc:
    na = np.linalg.norm(a)
    return Disc(a / na, float(min(1.0, max(-1.0, b / na))))


def _enumerate_d3_once(points: np.ndarray, check: np.ndarray) -> dict[int, Disc]:
    fam: dict[int, Disc] = {}
    for mask, a, b in _plane_dichotomies(points):
        for bits, row in zip(_pack_rows(mask), range(mask.shape[0])):
            if bits in fam:
                continue
            disc = _witness(a[row], b[row])
            # witnesses must induce the subset on the original points
            if mask_to_bits(disc.mask(check)) == bits:
                fam[bits] = disc
    return fam


def enumerate_disc_subsets_d3(points, seed: int = 0, max_retries: int = 3) -> SubsetFamily:
    """All cap-induced subsets of points in general position on the 2-sphere.

    Degenerate configurations (coincident points, four points on one circle)
    are retried on a jittered copy with a warning; only subsets whose witness
    cap reproduces them on the original points are kept.
    """
    points = np.asarray(points, dtype=float)
    _check_size(points, 3)
    n = points.shape[0]
    fam = {0: Disc(np.array([0.0, 0.0, 1.0]), 1.0)}
    if n == 0:
        return SubsetFamily(0, fam)
    fam[(1 << n) - 1] = Disc(np.array([0.0, 0.0, 1.0]), -1.0)
    if n <= 2:
        # any split of two distinct points is realised by the bisecting plane
        for bits in range(1, 1 << n):
            if bits in fam:
                continue
            inside = points[bits_to_mask(bits, n)]
            c = inside.sum(axis=0) - points[~bits_to_mask(bits, n)].sum(axis=0)
            c = c / np.linalg.norm(c)
            proj = points @ c
            cut = 0.5 * (proj[bits_to_mask(bits, n)].min() + proj[~bits_to_mask(bits, n)].max())
            fam[bits] = Disc(c, cut)
        return SubsetFamily(n, fam)

    work = points
    rng = np.random.default_rng(seed)
    for attempt in range(max_retries + 1):
        try:
            fam.update(_enumerate_d3_once(work, points))
            return SubsetFamily(n, fam)
        except _Degenerate as exc:
            if attempt == max_retries:
                raise ValueError(f"points are not in general position ({exc})") from exc
            warnings.warn(f"degenerate configuration ({exc}); retrying on jittered points",
                          RuntimeWarning, stacklevel=2)
            work = points + 1e-7 * rng.standard_normal(points.shape)
            work /= np.linalg.norm(work, axis=1, keepdims=True)
    raise AssertionError("unreachable")


def enumerate_disc_subsets(points) -> SubsetFamily:
    points = np.asarray(points, dtype=float)
    d = points.shape[1]
    if d == 2:
        return enumerate_disc_subsets_d2(points)
    if d == 3:
        return enumerate_disc_subsets_d3(points)
    raise ValueError(f"exact enumeration supports d in (2, 3), got {d}")


@dataclass(frozen=True)
class OracleResult:
    bits: int
    value: float
    disc: Disc
    family_size: int

    def mask(self, n: int) -> np.ndarray:
        return bits_to_mask(self.bits, n)


def cusum_over_masks(masks: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Signed CUSUM of every row of a boolean membership matrix (0 for empty/full rows)."""
    n = values.shape[0]
    k = masks.sum(axis=1).astype(float)
    c = masks.astype(float) @ (values - values.mean())
    with np.errstate(divide="ignore", invalid="ignore"):
        t = c * np.sqrt(n / (k * (n - k)))
    return np.where((k > 0) & (k < n), t, 0.0)


def oracle_argmax_cusum(ds: LabeledDataset, sided: str = "two",
                        family: SubsetFamily | None = None) -> OracleResult:
    """Exact maximiser of the oriented CUSUM over all disc-induced subsets.

    Ties (within a relative 1e-12) go to the smallest cardinality, then the
    smallest bitset integer.
    """
    if ds.dim not in MAX_N:
        raise ValueError(f"oracle supports d in (2, 3), got {ds.dim}")
    if family is None:
        family = enumerate_disc_subsets(ds.points)
    keys, masks = family.masks()
    t = cusum_over_masks(masks, ds.values)
    score = {"two": np.abs(t), "pos": t, "neg": -t}[sided]
    top = score.max()
    tol = 1e-12 * max(1.0, abs(top))
    tied = np.flatnonzero(score >= top - tol)
    best = min(tied, key=lambda i: (int(masks[i].sum()), keys[i]))
    return OracleResult(bits=keys[best], value=float(score[best]),
                        disc=family.witnesses[keys[best]], family_size=len(family))


def shatters(points) -> bool:
    """True when caps realise every subset of ``points`` (at most 6 points)."""
    points = np.asarray(points, dtype=float)
    k = points.shape[0]
    if k > 6:
        raise ValueError("shattering check supports at most 6 points")
    return len(enumerate_disc_subsets(points)) == 1 << k


def sauer_shelah_bound(n: int, vc_dim: int) -> int:
    return sum(math.comb(n, j) for j in range(vc_dim + 1))
