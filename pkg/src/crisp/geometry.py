"""Points, discs, distances, areas and empirical set measures on the unit sphere.

Points on the sphere S^{d-1} are plain float arrays of shape ``(d,)`` (or
``(n, d)`` for collections).  Discs are stored by centre and cosine
threshold so that membership is a single dot product.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

UNIT_TOL = 1e-12


def unit_vector(coords) -> np.ndarray:
    """Validate ``coords`` as a point on the sphere and return a float copy."""
    x = np.array(coords, dtype=float)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError(f"expected a vector of dimension >= 2, got shape {x.shape}")
    if abs(np.linalg.norm(x) - 1.0) > UNIT_TOL:
        raise ValueError(f"vector is not unit length (norm={np.linalg.norm(x)!r})")
    return x


def normalize(coords) -> np.ndarray:
    """Project nonzero vectors (rows) onto the sphere."""
    x = np.asarray(coords, dtype=float)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("cannot normalize the zero vector")
    return x / norm


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def geodesic(a, b) -> float:
    """Great-circle distance in radians between two unit vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_dims(a, b)
    return float(np.arccos(np.clip(np.dot(a, b), -1.0, 1.0)))


@dataclass(frozen=True)
class Disc:
    """Spherical cap ``{x : x . center >= cos_threshold}``.

    The threshold may be anywhere in [-1, 1]; ``radius`` is its arccos.
    """

    center: np.ndarray
    cos_threshold: float

    def __post_init__(self):
        c = np.array(self.center, dtype=float)
        if c.ndim != 1 or c.shape[0] < 2:
            raise ValueError(f"disc centre must be a vector of dimension >= 2, got {c.shape}")
        if abs(np.linalg.norm(c) - 1.0) > 1e-9:
            raise ValueError("disc centre must be a unit vector")
        beta = float(self.cos_threshold)
        if not -1.0 <= beta <= 1.0:
            raise ValueError(f"cos_threshold must lie in [-1, 1], got {beta!r}")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "cos_threshold", beta)

    @classmethod
    def from_radius(cls, center, radius: float) -> "Disc":
        if not 0.0 <= radius <= math.pi:
            raise ValueError(f"radius must lie in [0, pi], got {radius!r}")
        return cls(normalize(center), math.cos(radius))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def radius(self) -> float:
        return math.acos(self.cos_threshold)

    def contains(self, x) -> bool:
        return disc_contains(self, x)

    def mask(self, points: np.ndarray) -> np.ndarray:
        """Boolean membership of each row of ``points``."""
        points = np.asarray(points, dtype=float)
        _check_dims(points, self.center)
        return points @ self.center >= self.cos_threshold

    def complement(self) -> "Disc":
        """Closed cap around the antipode covering the complement (boundary shared)."""
        return Disc(-self.center, -self.cos_threshold)

    def to_dict(self) -> dict:
        return {
            "center": [float(v) for v in self.center],
            "radius_rad": self.radius,
            "cos_threshold": self.cos_threshold,
        }

    def __eq__(self, other):
        if not isinstance(other, Disc):
            return NotImplemented
        return (
            self.cos_threshold == other.cos_threshold
            and np.array_equal(self.center, other.center)
        )

    def __hash__(self):
        return hash((self.center.tobytes(), self.cos_threshold))


def disc_contains(disc: Disc, x) -> bool:
    x = np.asarray(x, dtype=float)
    _check_dims(x, disc.center)
    return bool(np.dot(x, disc.center) >= disc.cos_threshold)


@dataclass(frozen=True)
class LabeledDataset:
    """Immutable sample of locations on the sphere with scalar responses."""

    points: np.ndarray
    values: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        vals = np.array(self.values, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[1] < 2:
            raise ValueError(f"points must have shape (n, d) with d >= 2, got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("dataset must contain at least one point")
        if pts.shape[0] != vals.shape[0]:
            raise ValueError("points and values have different lengths")
        norms = np.linalg.norm(pts, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("all points must be unit vectors")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        pts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mask(self, region) -> np.ndarray:
        """Membership bitset of ``region`` (a Disc or a boolean array) over the sample."""
        if isinstance(region, Disc):
            return region.mask(self.points)
        m = np.asarray(region, dtype=bool)
        if m.shape != (self.n,):
            raise ValueError(f"bitset has shape {m.shape}, expected ({self.n},)")
        return m

    def with_values(self, values) -> "LabeledDataset":
        return LabeledDataset(self.points, values)


def empirical_count(region, ds: LabeledDataset) -> int:
    """Number of sample points inside ``region`` (``|A|_D``)."""
    return int(np.count_nonzero(ds.mask(region)))


def empirical_loss(a, b, ds_or_n) -> float:
    """In-sample classification error between two regions, up to complement.

    ``a`` and ``b`` are membership bitsets (or discs, in which case a dataset
    must be passed).  Returns ``min(|a ^ b|, |a ^ not b|) / n``.
    """
    if isinstance(ds_or_n, LabeledDataset):
        ma, mb = ds_or_n.mask(a), ds_or_n.mask(b)
        n = ds_or_n.n
    else:
        ma = np.asarray(a, dtype=bool)
        mb = np.asarray(b, dtype=bool)
        n = int(ds_or_n)
        if ma.shape != (n,) or mb.shape != (n,):
            raise ValueError("bitsets must both have length n")
    diff = int(np.count_nonzero(ma ^ mb))
    return min(diff, n - diff) / n


def disc_gap(inner: Disc, outer: Disc) -> float:
    """Geodesic distance from ``inner`` to the complement of ``outer``.

    Raises ``ValueError`` when ``inner`` is not contained in ``outer``.
    """
    _check_dims(inner.center, outer.center)
    gap = outer.radius - geodesic(inner.center, outer.center) - inner.radius
    if gap < -1e-12:
        raise ValueError(f"inner disc is not contained in outer disc (gap={gap:.3g})")
    return max(gap, 0.0)


def discs_intersect(d1: Disc, d2: Disc) -> bool:
    """Whether two closed caps share a point (tangency counts)."""
    _check_dims(d1.center, d2.center)
    return geodesic(d1.center, d2.center) <= d1.radius + d2.radius + 1e-12


def sphere_area(d: int) -> float:
    """Surface measure of S^{d-1}."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def cap_area(d: int, radius: float) -> float:
    """Surface measure of a cap of the given geodesic radius on S^{d-1}.

    For caps no larger than a hemisphere the measure is
    ``pi^{(d-1)/2} / Gamma((d-1)/2) * B((d-1)/2, 1/2) * I_{sin^2 r}((d-1)/2, 1/2)``;
    larger caps are the sphere minus the complementary cap.
    """
    if int(d) != d or d < 2:
        raise ValueError(f"d must be an integer >= 2, got {d!r}")
    if not 0.0 <= radius <= math.pi:
        raise ValueError(f"radius must lie in [0, pi], got {radius!r}")
    if radius > math.pi / 2:
        return sphere_area(d) - cap_area(d, math.pi - radius)
    a, b = (d - 1) / 2, 0.5
    x = math.sin(radius) ** 2  # (1 + beta)(1 - beta) with beta = cos(radius)
    scale = math.pi ** a / math.gamma(a)
    return scale * float(special.beta(a, b) * special.betainc(a, b, x))


def sample_uniform_sphere(rng: np.random.Generator, d: int, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) on S^{d-1} via normalized isotropic Gaussians."""
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d!r}")
    shape = (d,) if size is None else (size, d)
    while True:
        g = rng.standard_normal(shape)
        norm = np.linalg.norm(g, axis=-1, keepdims=True)
        if np.all(norm > 0):
            return g / norm


def sample_outer_discs(rng: np.random.Generator, J: int, d: int) -> list[Disc]:
    """``J`` i.i.d. discs with uniform centres and radii uniform on [0, pi].

    Draws are made disc by disc so a longer sequence extends a shorter one
    from the same generator state.
    """
    discs = []
    for _ in range(J):
        center = sample_uniform_sphere(rng, d)
        radius = rng.uniform(0.0, math.pi)
        discs.append(Disc(center, math.cos(radius)))
    return discs
