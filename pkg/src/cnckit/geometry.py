"""Planar polygon geometry on (latitude, longitude) coordinates.

Coordinates are treated as planar (plate carree), which is adequate at city
scale. Containment uses even-odd ray casting; points exactly on an edge or
vertex of any ring count as inside, and holes subtract.

GeoJSON stores positions as [lon, lat]; everything in this package is
(lat, lon), so loaders swap the axes once at the boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cnckit import kernels
from cnckit.errors import GeometryError

GREENSPACE = "greenspace"
BLUESPACE = "bluespace"
OTHER = "other"

# classification priority when polygons of different classes overlap
CLASS_PRIORITY = (GREENSPACE, BLUESPACE)


def _as_ring(vertices) -> np.ndarray:
    ring = np.asarray(vertices, dtype=np.float64)
    if ring.ndim != 2 or ring.shape[1] != 2 or ring.shape[0] < 4:
        raise GeometryError("ring must be an (n>=4, 2) array of (lat, lon)")
    if not np.array_equal(ring[0], ring[-1]):
        raise GeometryError("ring is not closed (first vertex != last vertex)")
    if not np.all(np.isfinite(ring)):
        raise GeometryError("ring contains non-finite coordinates")
    return np.ascontiguousarray(ring)


def _segments_properly_intersect(p1, p2, p3, p4) -> bool:
    """True when open segments (p1,p2) and (p3,p4) cross at an interior point."""

    def orient(a, b, c):
        v = (b[1] - a[1]) * (c[0] - a[0]) - (b[0] - a[0]) * (c[1] - a[1])
        return 0 if v == 0 else (1 if v > 0 else -1)

    o1 = orient(p1, p2, p3)
    o2 = orient(p1, p2, p4)
    o3 = orient(p3, p4, p1)
    o4 = orient(p3, p4, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def _check_simple(ring: np.ndarray) -> None:
    """Reject self-intersecting rings (O(n^2); rings are city-scale small)."""
    n = len(ring) - 1
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # shared-endpoint neighbours
            if _segments_properly_intersect(ring[i], ring[i + 1], ring[j], ring[j + 1]):
                raise GeometryError(f"ring self-intersects (edges {i} and {j})")


@dataclass
class Polygon:
    """A simple polygon: one exterior ring plus optional hole rings.

    Rings are (n, 2) float arrays of (lat, lon) with first == last.
    """

    exterior: np.ndarray
    holes: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.exterior = _as_ring(self.exterior)
        _check_simple(self.exterior)
        self.holes = [_as_ring(h) for h in self.holes]
        for hole in self.holes:
            _check_simple(hole)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        ext = self.exterior
        return (ext[:, 0].min(), ext[:, 1].min(), ext[:, 0].max(), ext[:, 1].max())

    def contains(self, lat: float, lon: float) -> bool:
        return bool(self.contains_many(np.array([lat]), np.array([lon]))[0])

    def contains_many(self, lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
        """Vectorized containment; boundary points (any ring) are inside."""
        lat = np.ascontiguousarray(lat, dtype=np.float64)
        lon = np.ascontiguousarray(lon, dtype=np.float64)
        flags = kernels.ring_crossings(lat, lon, self.exterior)
        inside = (flags & kernels.INSIDE).astype(bool)
        boundary = (flags & kernels.ON_BOUNDARY).astype(bool)
        for hole in self.holes:
            hflags = kernels.ring_crossings(lat, lon, hole)
            inside ^= (hflags & kernels.INSIDE).astype(bool)
            boundary |= (hflags & kernels.ON_BOUNDARY).astype(bool)
        return inside | boundary


def point_in_polygon(point: tuple[float, float], polygon: Polygon) -> bool:
    """Even-odd containment test for a single (lat, lon) point."""
    return polygon.contains(point[0], point[1])


@dataclass
class PolygonLayer:
    """Class-tagged polygons with a uniform-grid bounding-box index.

    The index maps grid buckets to candidate polygon indices so that points
    far from every polygon are classified without any containment test.
    ``tests_performed`` counts polygon containment tests, for diagnostics.
    """

    polygons: list[Polygon]
    classes: list[str]
    index_cells: int = 16
    tests_performed: int = 0

    def __post_init__(self):
        if len(self.polygons) != len(self.classes):
            raise GeometryError("polygons and classes differ in length")
        for cls in self.classes:
            if cls not in (GREENSPACE, BLUESPACE, OTHER):
                raise GeometryError(f"unknown polygon class {cls!r}")
        self._bboxes = [p.bbox for p in self.polygons]
        self._build_index()

    def _build_index(self):
        self._grid = None
        if not self.polygons:
            return
        boxes = np.array(self._bboxes)
        lat0, lon0 = boxes[:, 0].min(), boxes[:, 1].min()
        lat1, lon1 = boxes[:, 2].max(), boxes[:, 3].max()
        n = self.index_cells
        dlat = (lat1 - lat0) / n or 1.0
        dlon = (lon1 - lon0) / n or 1.0
        buckets: dict[tuple[int, int], list[int]] = {}
        for idx, (blat0, blon0, blat1, blon1) in enumerate(self._bboxes):
            i0 = int((blat0 - lat0) / dlat)
            i1 = min(int((blat1 - lat0) / dlat), n - 1)
            j0 = int((blon0 - lon0) / dlon)
            j1 = min(int((blon1 - lon0) / dlon), n - 1)
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    buckets.setdefault((i, j), []).append(idx)
        self._grid = (lat0, lon0, dlat, dlon, buckets)

    def _candidates(self, lat: float, lon: float) -> list[int]:
        if self._grid is None:
            return []
        lat0, lon0, dlat, dlon, buckets = self._grid
        i = int((lat - lat0) / dlat)
        j = int((lon - lon0) / dlon)
        if lat < lat0 or lon < lon0 or i >= self.index_cells or j >= self.index_cells:
            return []
        cands = buckets.get((i, j), [])
        return [
            k
            for k in cands
            if self._bboxes[k][0] <= lat <= self._bboxes[k][2]
            and self._bboxes[k][1] <= lon <= self._bboxes[k][3]
        ]

    def classify(self, lat: float, lon: float, use_index: bool = True) -> str:
        """Class of the point: greenspace beats bluespace beats other."""
        if use_index:
            candidates = self._candidates(lat, lon)
        else:
            candidates = list(range(len(self.polygons)))
        hits = set()
        for k in candidates:
            self.tests_performed += 1
            if self.polygons[k].contains(lat, lon):
                hits.add(self.classes[k])
        for cls in CLASS_PRIORITY:
            if cls in hits:
                return cls
        return OTHER


def _polygon_from_geojson_coords(coords) -> Polygon:
    rings = []
    for ring in coords:
        arr = np.asarray(ring, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] < 2:
            raise GeometryError("malformed GeoJSON ring")
        rings.append(arr[:, [1, 0]])  # [lon, lat] -> (lat, lon)
    return Polygon(exterior=rings[0], holes=rings[1:])


def load_geojson_layer(path: str | Path, index_cells: int = 16) -> PolygonLayer:
    """Load a FeatureCollection of class-tagged (Multi)Polygons.

    The feature property ``class`` must be "greenspace" or "bluespace";
    features without it are kept with class "other". MultiPolygons are
    flattened into their member polygons.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise GeometryError(f"cannot read GeoJSON layer {path}: {exc}") from exc
    if doc.get("type") != "FeatureCollection":
        raise GeometryError("layer must be a GeoJSON FeatureCollection")
    polygons: list[Polygon] = []
    classes: list[str] = []
    for feature in doc.get("features", []):
        cls = (feature.get("properties") or {}).get("class", OTHER)
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "Polygon":
            parts = [geom["coordinates"]]
        elif gtype == "MultiPolygon":
            parts = geom["coordinates"]
        else:
            raise GeometryError(f"unsupported geometry type {gtype!r}")
        for part in parts:
            polygons.append(_polygon_from_geojson_coords(part))
            classes.append(cls)
    return PolygonLayer(polygons=polygons, classes=classes, index_cells=index_cells)
