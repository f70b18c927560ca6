"""Spatial analyses: quadrant counts, greenspace shares, spread metrics.

Binning and containment treat lat/lon as planar (fine at city extents);
distances use the haversine formula on a sphere of radius 6,371,000 m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cnckit.errors import DataError
from cnckit.geometry import PolygonLayer
from cnckit.records import ChallengeWindow, Dataset

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GridSpec:
    """A regular nx (longitude) by ny (latitude) grid over a bounding box."""

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.max_lat <= self.min_lat or self.max_lon <= self.min_lon:
            raise DataError("grid bbox max must exceed min on both axes")
        if self.nx < 1 or self.ny < 1:
            raise DataError("grid needs nx >= 1 and ny >= 1")


@dataclass
class QuadrantCount:
    grid: GridSpec
    counts: np.ndarray  # shape (nx, ny); cell (i, j) = (lon index, lat index)
    out_of_bbox: int

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.out_of_bbox


@dataclass(frozen=True)
class SpreadMetric:
    entropy: float  # nats, over the in-bbox quadrant distribution
    mean_radial: float  # meters, mean great-circle distance to the centroid
    n_points: int


def quadrant_count(points: list[tuple[float, float]], grid: GridSpec) -> QuadrantCount:
    """Floor-index points into grid cells; the max edge belongs to the last
    cell; points outside the bbox are tallied separately."""
    counts = np.zeros((grid.nx, grid.ny), dtype=np.int64)
    if not points:
        return QuadrantCount(grid=grid, counts=counts, out_of_bbox=0)
    pts = np.asarray(points, dtype=np.float64)
    lat, lon = pts[:, 0], pts[:, 1]
    inside = (
        (lat >= grid.min_lat)
        & (lat <= grid.max_lat)
        & (lon >= grid.min_lon)
        & (lon <= grid.max_lon)
    )
    i = np.floor(
        (lon[inside] - grid.min_lon) / (grid.max_lon - grid.min_lon) * grid.nx
    ).astype(np.int64)
    j = np.floor(
        (lat[inside] - grid.min_lat) / (grid.max_lat - grid.min_lat) * grid.ny
    ).astype(np.int64)
    np.clip(i, 0, grid.nx - 1, out=i)
    np.clip(j, 0, grid.ny - 1, out=j)
    np.add.at(counts, (i, j), 1)
    return QuadrantCount(grid=grid, counts=counts, out_of_bbox=int((~inside).sum()))


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return EARTH_RADIUS_M * 2.0 * math.asin(min(1.0, math.sqrt(a)))


def spread_metric(points: list[tuple[float, float]], grid: GridSpec) -> SpreadMetric:
    """Shannon entropy of the in-bbox quadrant distribution plus the mean
    haversine distance of the in-bbox points to their (lat, lon) centroid."""
    qc = quadrant_count(points, grid)
    n_inside = int(qc.counts.sum())
    if n_inside == 0:
        raise DataError("no points inside the grid bbox")
    p = qc.counts[qc.counts > 0].astype(np.float64) / n_inside
    entropy = float(-(p * np.log(p)).sum())

    pts = np.asarray(points, dtype=np.float64)
    lat, lon = pts[:, 0], pts[:, 1]
    inside = (
        (lat >= grid.min_lat)
        & (lat <= grid.max_lat)
        & (lon >= grid.min_lon)
        & (lon <= grid.max_lon)
    )
    clat, clon = float(lat[inside].mean()), float(lon[inside].mean())
    radial = [
        haversine_m(la, lo, clat, clon) for la, lo in zip(lat[inside], lon[inside])
    ]
    return SpreadMetric(
        entropy=entropy, mean_radial=float(np.mean(radial)), n_points=n_inside
    )


def classify_points(
    points: list[tuple[float, float]], layer: PolygonLayer, use_index: bool = True
) -> list[str]:
    """Greenspace/bluespace/other per point (greenspace wins overlaps)."""
    return [layer.classify(lat, lon, use_index=use_index) for lat, lon in points]


@dataclass(frozen=True)
class GreenspaceResult:
    fraction: float
    n_located: int
    n_unlocated: int


def greenspace_fraction(
    dataset: Dataset, layer: PolygonLayer, window: ChallengeWindow
) -> GreenspaceResult:
    """Share of located in-window observations falling in greenspace."""
    located: list[tuple[float, float]] = []
    unlocated = 0
    for obs in dataset.observations.values():
        if not window.contains_time(obs.observed_at):
            continue
        if obs.location is None:
            unlocated += 1
        else:
            located.append(obs.location)
    if not located:
        raise DataError("no located observations in the window")
    classes = classify_points(located, layer)
    green = sum(1 for cls in classes if cls == "greenspace")
    return GreenspaceResult(
        fraction=green / len(located), n_located=len(located), n_unlocated=unlocated
    )


def species_spread(
    dataset: Dataset,
    grid: GridSpec,
    windows: list[ChallengeWindow],
    min_observations: int = 10,
) -> dict[tuple[str, int], SpreadMetric]:
    """Spread per (taxon, challenge year), pooling cities within a year.

    Taxa with fewer than ``min_observations`` located observations in a
    year are excluded.
    """
    groups: dict[tuple[str, int], dict[str, tuple[float, float]]] = {}
    for window in windows:
        for obs in dataset.observations.values():
            if obs.taxon_id is None or obs.location is None:
                continue
            if window.contains(obs):
                key = (obs.taxon_id, window.year)
                groups.setdefault(key, {})[obs.observation_id] = obs.location
    return {
        key: spread_metric(list(pts.values()), grid)
        for key, pts in sorted(groups.items())
        if len(pts) >= min_observations
    }
