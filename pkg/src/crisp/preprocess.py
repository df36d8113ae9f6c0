"""Gridded-data ingestion: sampling, snapping, MST neighbourhoods and robust scale.

Typical use::

    grid = GeoGrid.from_csv("t2m.csv")
    pts = sample_band(rng, 2000, lat_min=-90, lat_max=-60)
    y = snap_to_grid(pts, grid, fill=GeoGrid.from_csv("sst.csv"))
    keep = ~np.isnan(y)
    ds = LabeledDataset(pts[keep], y[keep])
    sigma = robust_scale(ds.values, build_mst(ds.points))
    ds = standardize(ds, sigma)
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import LabeledDataset

MAD_CONSTANT = 1.4826


class DegenerateDataError(ValueError):
    """Data carry no usable scale information (constant values or no neighbours)."""


def latlon_to_xyz(lat_deg, lon_deg) -> np.ndarray:
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    return np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1)


def xyz_to_latlon(points) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(points, dtype=float)
    lat = np.degrees(np.arcsin(np.clip(p[..., 2], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(p[..., 1], p[..., 0]))
    return lat, lon


def sample_band(rng: np.random.Generator, n: int, lat_min: float = -90.0,
                lat_max: float = 90.0) -> np.ndarray:
    """Uniform points on the 2-sphere restricted to a latitude band (degrees)."""
    if not -90.0 <= lat_min < lat_max <= 90.0:
        raise ValueError(f"empty latitude band [{lat_min}, {lat_max}]")
    z = rng.uniform(math.sin(math.radians(lat_min)), math.sin(math.radians(lat_max)), n)
    lon = rng.uniform(-math.pi, math.pi, n)
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack([r * np.cos(lon), r * np.sin(lon), z])


def _edges(centres: np.ndarray) -> np.ndarray:
    if centres.size == 1:
        return np.array([centres[0] - 0.5, centres[0] + 0.5])
    mids = 0.5 * (centres[1:] + centres[:-1])
    return np.concatenate([[2 * centres[0] - mids[0]], mids, [2 * centres[-1] - mids[-1]]])


@dataclass(frozen=True)
class GeoGrid:
    """Regular latitude-longitude grid of cell-centre values (NaN = missing).

    Rows follow ``lat_centres`` and columns ``lon_centres``, both increasing.
    """

    lat_centres: np.ndarray
    lon_centres: np.ndarray
    cell_values: np.ndarray

    def __post_init__(self):
        lat = np.asarray(self.lat_centres, dtype=float)
        lon = np.asarray(self.lon_centres, dtype=float)
        vals = np.asarray(self.cell_values, dtype=float)
        if vals.shape != (lat.size, lon.size):
            raise ValueError(f"cell_values shape {vals.shape} does not match "
                             f"{lat.size} latitudes x {lon.size} longitudes")
        if np.any(np.diff(lat) <= 0) or np.any(np.diff(lon) <= 0):
            raise ValueError("grid centres must be strictly increasing")
        object.__setattr__(self, "lat_centres", lat)
        object.__setattr__(self, "lon_centres", lon)
        object.__setattr__(self, "cell_values", vals)

    @property
    def lat_edges(self) -> np.ndarray:
        return _edges(self.lat_centres)

    @property
    def lon_edges(self) -> np.ndarray:
        return _edges(self.lon_centres)

    @classmethod
    def from_csv(cls, path) -> "GeoGrid":
        """Read ``lat,lon,value`` rows; an empty value marks a missing cell."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"lat", "lon", "value"} <= set(reader.fieldnames):
                raise ValueError(f"{path}: expected header lat,lon,value")
            rows = []
            for line_no, row in enumerate(reader, start=2):
                try:
                    val = float(row["value"]) if row["value"].strip() else math.nan
                    rows.append((float(row["lat"]), float(row["lon"]), val))
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"{path}:{line_no}: malformed row {row!r}") from exc
        if not rows:
            raise ValueError(f"{path}: no grid rows")
        arr = np.array(rows)
        lat = np.unique(arr[:, 0])
        lon = np.unique(arr[:, 1])
        vals = np.full((lat.size, lon.size), math.nan)
        vals[np.searchsorted(lat, arr[:, 0]), np.searchsorted(lon, arr[:, 1])] = arr[:, 2]
        return cls(lat, lon, vals)

    def nearest_cell(self, lat_deg, lon_deg) -> tuple[np.ndarray, np.ndarray]:
        """Row/column of the nearest centre per axis; ties go to the smaller index."""
        lat = np.asarray(lat_deg, dtype=float)
        lon = np.asarray(lon_deg, dtype=float)
        row = np.argmin(np.abs(lat[..., None] - self.lat_centres), axis=-1)
        dlon = np.abs(np.mod(lon[..., None] - self.lon_centres + 180.0, 360.0) - 180.0)
        col = np.argmin(dlon, axis=-1)
        return row, col

    def lookup(self, lat_deg, lon_deg) -> np.ndarray:
        row, col = self.nearest_cell(lat_deg, lon_deg)
        return self.cell_values[row, col]


def snap_to_grid(points, grid: GeoGrid, fill: GeoGrid | None = None) -> np.ndarray:
    """Value of the nearest grid cell for each point on the 2-sphere.

    Missing primary cells are taken from ``fill``.  Points missing in both
    come back as NaN and a warning reports how many.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("grid snapping needs points on the 2-sphere (d = 3)")
    lat, lon = xyz_to_latlon(points)
    out = grid.lookup(lat, lon)
    if fill is not None:
        gap = np.isnan(out)
        out[gap] = fill.lookup(lat[gap], lon[gap])
    missing = int(np.count_nonzero(np.isnan(out)))
    if missing:
        warnings.warn(f"{missing} point(s) fall on cells missing in every grid and are dropped",
                      RuntimeWarning, stacklevel=2)
    return out


@dataclass(frozen=True)
class NeighborGraph:
    mst_edges: list[tuple[int, int, float]]
    d_max: float
    neighbor_lists: list[list[int]]

    @property
    def n(self) -> int:
        return len(self.neighbor_lists)


def _geodesic_matrix(points: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(points @ points.T, -1.0, 1.0))


def build_mst(points) -> NeighborGraph:
    """Geodesic minimum spanning tree by dense Prim, and its short-edge neighbourhoods.

    ``d_max`` is the mean MST edge length; ``j`` is a neighbour of ``i`` when
    ``(i, j)`` is an MST edge no longer than ``d_max``.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < 2:
        raise ValueError("need at least two points")
    dist = _geodesic_matrix(points)
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = dist[0].copy()
    parent = np.zeros(n, dtype=np.int64)
    best[0] = np.inf
    edges = []
    for _ in range(n - 1):
        j = int(np.argmin(np.where(in_tree, np.inf, best)))
        i = int(parent[j])
        edges.append((min(i, j), max(i, j), float(dist[i, j])))
        in_tree[j] = True
        closer = ~in_tree & (dist[j] < best)
        best[closer] = dist[j][closer]
        parent[closer] = j
    d_max = float(np.mean([e[2] for e in edges]))
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for i, j, length in edges:
        if length <= d_max:
            nbrs[i].append(j)
            nbrs[j].append(i)
    return NeighborGraph(sorted(edges), d_max, [sorted(v) for v in nbrs])


def local_residuals(values, graph: NeighborGraph) -> np.ndarray:
    """Variance-corrected deviations from the neighbourhood mean.

    For a point with ``m - 1`` neighbours the residual is
    ``sqrt(m / (m - 1)) * (y_i - mean(y_i, neighbours))``.  Isolated points
    are omitted.
    """
    y = np.asarray(values, dtype=float)
    if y.shape[0] != graph.n:
        raise ValueError("values and graph sizes differ")
    out = []
    for i, nb in enumerate(graph.neighbor_lists):
        if not nb:
            continue
        m = len(nb) + 1
        local_mean = (y[i] + y[nb].sum()) / m
        out.append(math.sqrt(m / (m - 1)) * (y[i] - local_mean))
    return np.asarray(out)


def robust_scale(values, graph: NeighborGraph) -> float:
    """MAD-type noise scale from MST-neighbourhood residuals."""
    e = local_residuals(values, graph)
    if e.size == 0:
        raise DegenerateDataError("every point is isolated in the neighbour graph")
    sigma = MAD_CONSTANT * float(np.median(np.abs(e)))
    if not sigma > 0:
        raise DegenerateDataError("robust scale is zero (values locally constant)")
    return sigma


def standardize(ds: LabeledDataset, sigma: float) -> LabeledDataset:
    if not sigma > 0:
        raise ValueError(f"scale must be positive, got {sigma!r}")
    return ds.with_values(ds.values / sigma)


def preprocess_grid(grid: GeoGrid, n: int, rng: np.random.Generator, fill: GeoGrid | None = None,
                    lat_min: float = -90.0, lat_max: float = 90.0):
    """Sample, snap, drop missing points and standardise.

    Returns ``(dataset, sigma, n_dropped)``; the scale is estimated on the
    snapped sample.
    """
    pts = sample_band(rng, n, lat_min, lat_max)
    y = snap_to_grid(pts, grid, fill)
    keep = ~np.isnan(y)
    if np.count_nonzero(keep) < 2:
        raise DegenerateDataError("fewer than two sampled points have grid values")
    ds = LabeledDataset(pts[keep], y[keep])
    sigma = robust_scale(ds.values, build_mst(ds.points))
    return standardize(ds, sigma), sigma, int(n - np.count_nonzero(keep))
