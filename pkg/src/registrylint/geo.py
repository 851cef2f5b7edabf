"""Geometry kernel for the location tests.

Spherical-earth geodesics (haversine, R = 6371.0088 km): the 1.5 km
buffer tolerance of the location tests dwarfs the spherical-model error,
so no ellipsoid is needed. Polygon edges are treated as straight lines in
latitude/longitude space, matching how the boundary files are drawn and
how ray casting interprets them. Points exactly on an edge count as
inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

EARTH_RADIUS_M = 6_371_008.8

# Segments longer than this are split at their lat/lon midpoint before the
# local-projection minimization; keeps the projection error negligible.
_SEGMENT_SPLIT_M = 25_000.0

LatLon = tuple[float, float]
Ring = tuple[LatLon, ...]


class GeometryError(ValueError):
    """Raised for unusable geometry (degenerate polygons, bad rings)."""


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance between two WGS84 points in meters."""
    rlat1 = math.radians(lat1)
    rlat2 = math.radians(lat2)
    dlat = rlat2 - rlat1
    dlon = math.radians(lon2 - lon1)
    a = math.sin(dlat / 2.0) ** 2 + math.cos(rlat1) * math.cos(rlat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def _check_ring(ring: Ring, where: str) -> Ring:
    if len(ring) < 4:
        raise GeometryError(f"ring with fewer than 4 vertices in {where}")
    if ring[0] != ring[-1]:
        raise GeometryError(f"unclosed ring in {where}")
    return ring


def _ring_area_deg2(ring: Ring) -> float:
    # Planar shoelace in lat/lon space; only used to detect degeneracy.
    total = 0.0
    for (lat1, lon1), (lat2, lon2) in zip(ring, ring[1:]):
        total += lon1 * lat2 - lon2 * lat1
    return abs(total) / 2.0


@dataclass(frozen=True, slots=True)
class PolygonGeom:
    """One polygon part: an outer ring plus zero or more holes."""

    outer: Ring
    holes: tuple[Ring, ...] = ()

    def rings(self):
        yield self.outer
        yield from self.holes


@dataclass(frozen=True, slots=True)
class Region:
    """An administrative region: one or more polygon parts under one key."""

    region_id: str
    name: str
    polygons: tuple[PolygonGeom, ...]
    degenerate: bool = field(init=False, default=False)

    def __post_init__(self) -> None:
        if not self.polygons:
            raise GeometryError(f"region {self.region_id!r} has no polygons")
        area = 0.0
        for poly in self.polygons:
            _check_ring(poly.outer, f"region {self.region_id!r}")
            for hole in poly.holes:
                _check_ring(hole, f"region {self.region_id!r}")
            area += _ring_area_deg2(poly.outer)
        object.__setattr__(self, "degenerate", area == 0.0)

    def bbox(self) -> tuple[float, float, float, float]:
        lats = [lat for poly in self.polygons for lat, _ in poly.outer]
        lons = [lon for poly in self.polygons for _, lon in poly.outer]
        return (min(lats), min(lons), max(lats), max(lons))


@dataclass(frozen=True, slots=True)
class BoundarySet:
    """Administrative polygons of one level, keyed by region id."""

    level: str  # "district" or "municipality"
    regions: dict[str, Region]

    def __iter__(self):
        return iter(self.regions.values())

    def __len__(self) -> int:
        return len(self.regions)


def _point_in_rings(lat: float, lon: float, rings) -> bool:
    """Even-odd ray cast over all rings; points on an edge count inside."""
    inside = False
    for ring in rings:
        for i in range(len(ring) - 1):
            alat, alon = ring[i]
            blat, blon = ring[i + 1]
            # On-edge test: collinear and within the segment's bbox.
            if (
                min(alat, blat) <= lat <= max(alat, blat)
                and min(alon, blon) <= lon <= max(alon, blon)
            ):
                cross = (blon - alon) * (lat - alat) - (blat - alat) * (lon - alon)
                if abs(cross) <= 1e-12:
                    return True
            if (alat > lat) != (blat > lat):
                xint = alon + (lat - alat) * (blon - alon) / (blat - alat)
                if lon < xint:
                    inside = not inside
    return inside


def point_in_polygon(lat: float, lon: float, poly: PolygonGeom) -> bool:
    return _point_in_rings(lat, lon, poly.rings())


def _segment_distance_m(lat: float, lon: float, a: LatLon, b: LatLon) -> float:
    """Min geodesic distance from a point to a lat/lon-straight segment."""
    alat, alon = a
    blat, blon = b
    span = haversine_m(alat, alon, blat, blon)
    if span > _SEGMENT_SPLIT_M:
        mid = ((alat + blat) / 2.0, (alon + blon) / 2.0)
        return min(_segment_distance_m(lat, lon, a, mid), _segment_distance_m(lat, lon, mid, b))
    if span == 0.0:
        return haversine_m(lat, lon, alat, alon)

    # Seed with the foot point under a local equirectangular projection,
    # then refine along the segment with true haversine evaluations. The
    # distance is flat near its minimum, so the refinement converges fast.
    coslat = math.cos(math.radians(lat))
    ax = math.radians(_wrap_degrees(alon - lon)) * coslat
    ay = math.radians(alat - lat)
    bx = math.radians(_wrap_degrees(blon - lon)) * coslat
    by = math.radians(blat - lat)
    dx = bx - ax
    dy = by - ay
    denom = dx * dx + dy * dy
    t_seed = 0.0 if denom == 0.0 else min(1.0, max(0.0, -(ax * dx + ay * dy) / denom))

    def dist_at(t: float) -> float:
        return haversine_m(lat, lon, alat + t * (blat - alat), alon + t * (blon - alon))

    best_t = t_seed
    best = dist_at(t_seed)
    # Coarse sweep guards against a poor seed on distorted projections.
    for k in range(5):
        t = k / 4.0
        d = dist_at(t)
        if d < best:
            best, best_t = d, t
    step = 0.125
    for _ in range(14):
        for t in (best_t - step, best_t + step):
            if 0.0 <= t <= 1.0:
                d = dist_at(t)
                if d < best:
                    best, best_t = d, t
        step /= 2.0
    return best


def _wrap_degrees(dlon: float) -> float:
    if dlon > 180.0:
        return dlon - 360.0
    if dlon < -180.0:
        return dlon + 360.0
    return dlon


def boundary_clearance_m(lat: float, lon: float, region: Region) -> float:
    """Distance to the nearest ring of the region, ignoring containment."""
    best = math.inf
    for poly in region.polygons:
        for ring in poly.rings():
            for i in range(len(ring) - 1):
                d = _segment_distance_m(lat, lon, ring[i], ring[i + 1])
                if d < best:
                    best = d
    return best


def _require_usable(region: Region) -> None:
    if region.degenerate:
        raise GeometryError(f"degenerate (zero-area) polygon for region {region.region_id!r}")


def contains_with_buffer(lat: float, lon: float, region: Region, buffer_m: float) -> bool:
    """True iff the point is inside the region or within buffer_m of its boundary."""
    if buffer_m < 0:
        raise ValueError(f"buffer_m must be >= 0, got {buffer_m!r}")
    _require_usable(region)
    for poly in region.polygons:
        if point_in_polygon(lat, lon, poly):
            return True
    if buffer_m > 0.0:
        return boundary_clearance_m(lat, lon, region) <= buffer_m
    return False


def distance_to_boundary(lat: float, lon: float, region: Region) -> float:
    """0 for interior points, else min geodesic distance to the boundary."""
    _require_usable(region)
    for poly in region.polygons:
        if point_in_polygon(lat, lon, poly):
            return 0.0
    return boundary_clearance_m(lat, lon, region)


@dataclass(frozen=True, slots=True)
class _Node:
    bbox: tuple[float, float, float, float]  # (minlat, minlon, maxlat, maxlon)
    children: tuple  # of _Node, or of (bbox, Region) leaf entries
    is_leaf: bool


class SpatialIndex:
    """Static bounding-box tree over a BoundarySet (STR bulk load).

    Queries return a superset of the regions that could contain the point
    or lie within buffer range of it; exact containment is decided by
    contains_with_buffer.
    """

    NODE_CAPACITY = 16

    def __init__(self, boundary_set: BoundarySet):
        self.level = boundary_set.level
        entries = [(region.bbox(), region) for region in boundary_set]
        self._root = self._build(entries) if entries else None

    @classmethod
    def _build(cls, entries: list) -> _Node:
        if len(entries) <= cls.NODE_CAPACITY:
            return _Node(_union_bbox([e[0] for e in entries]), tuple(entries), True)
        # Sort-tile-recursive packing: slice by longitude, tile by latitude.
        entries = sorted(entries, key=lambda e: (e[0][1] + e[0][3], e[0][0] + e[0][2]))
        leaf_count = math.ceil(len(entries) / cls.NODE_CAPACITY)
        slice_count = math.ceil(math.sqrt(leaf_count))
        slice_size = math.ceil(len(entries) / slice_count)
        children = []
        for s in range(0, len(entries), slice_size):
            strip = sorted(entries[s : s + slice_size], key=lambda e: e[0][0] + e[0][2])
            for k in range(0, len(strip), cls.NODE_CAPACITY):
                chunk = strip[k : k + cls.NODE_CAPACITY]
                children.append(_Node(_union_bbox([e[0] for e in chunk]), tuple(chunk), True))
        while len(children) > cls.NODE_CAPACITY:
            children = [
                _Node(
                    _union_bbox([c.bbox for c in children[k : k + cls.NODE_CAPACITY]]),
                    tuple(children[k : k + cls.NODE_CAPACITY]),
                    False,
                )
                for k in range(0, len(children), cls.NODE_CAPACITY)
            ]
        return _Node(_union_bbox([c.bbox for c in children]), tuple(children), False)

    def candidates(self, lat: float, lon: float, buffer_m: float) -> list[Region]:
        """Regions whose padded bbox covers the point (a superset of hits)."""
        if self._root is None:
            return []
        pad_lat = math.degrees(buffer_m / EARTH_RADIUS_M) * 1.01
        coslat = max(0.01, math.cos(math.radians(lat)))
        pad_lon = math.degrees(buffer_m / (EARTH_RADIUS_M * coslat)) * 1.01
        qbox = (lat - pad_lat, lon - pad_lon, lat + pad_lat, lon + pad_lon)
        out: list[Region] = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            if not _bbox_intersects(node.bbox, qbox):
                continue
            if node.is_leaf:
                for bbox, region in node.children:
                    if _bbox_intersects(bbox, qbox):
                        out.append(region)
            else:
                stack.extend(node.children)
        return out


def _union_bbox(boxes: list[tuple[float, float, float, float]]) -> tuple[float, float, float, float]:
    return (
        min(b[0] for b in boxes),
        min(b[1] for b in boxes),
        max(b[2] for b in boxes),
        max(b[3] for b in boxes),
    )


def _bbox_intersects(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def locate(lat: float, lon: float, index: SpatialIndex, buffer_m: float) -> set[str]:
    """Ids of all regions containing the point within the buffer.

    An empty set is a valid result (offshore or abroad).
    """
    return {
        region.region_id
        for region in index.candidates(lat, lon, buffer_m)
        if contains_with_buffer(lat, lon, region, buffer_m)
    }
