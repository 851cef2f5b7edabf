"""Independent geometry oracle for verifying the geo kernel.

Deliberately reimplemented from scratch: winding-number containment (the
kernel uses even-odd ray casting) and brute-force dense sampling along
segments followed by golden-section refinement for distances. Slow but
accurate to well below a meter.
"""

from __future__ import annotations

import math

EARTH_RADIUS_M = 6_371_008.8

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def oracle_haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dphi = p2 - p1
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.atan2(math.sqrt(a), math.sqrt(1.0 - a))


def _winding_number(lat: float, lon: float, ring) -> int:
    # Classic wn_PnPoly with (x, y) = (lon, lat).
    wn = 0
    for i in range(len(ring) - 1):
        y1, x1 = ring[i]
        y2, x2 = ring[i + 1]
        if y1 <= lat:
            if y2 > lat and (x2 - x1) * (lat - y1) - (lon - x1) * (y2 - y1) > 0:
                wn += 1
        elif y2 <= lat and (x2 - x1) * (lat - y1) - (lon - x1) * (y2 - y1) < 0:
            wn -= 1
    return wn


def oracle_point_in_region(lat: float, lon: float, region) -> bool:
    for poly in region.polygons:
        if _winding_number(lat, lon, poly.outer) != 0:
            if not any(_winding_number(lat, lon, hole) != 0 for hole in poly.holes):
                return True
    return False


def _sample_segment(lat: float, lon: float, a, b, step_m: float) -> float:
    """Min distance to the lat/lon-linear segment a-b by dense sampling
    plus golden-section refinement in the best local window."""
    alat, alon = a
    blat, blon = b
    span = oracle_haversine_m(alat, alon, blat, blon)
    if span == 0.0:
        return oracle_haversine_m(lat, lon, alat, alon)
    n = max(8, min(768, int(math.ceil(span / step_m))))

    def dist(t: float) -> float:
        return oracle_haversine_m(lat, lon, alat + t * (blat - alat), alon + t * (blon - alon))

    best_i = 0
    best = dist(0.0)
    for i in range(1, n + 1):
        d = dist(i / n)
        if d < best:
            best, best_i = d, i
    lo = max(0.0, (best_i - 1) / n)
    hi = min(1.0, (best_i + 1) / n)
    # Golden-section search on the bracketing window.
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = dist(x1), dist(x2)
    for _ in range(48):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = dist(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = dist(x2)
    return min(best, f1, f2)


def oracle_boundary_distance_m(lat: float, lon: float, region, step_m: float = 250.0) -> float:
    best = math.inf
    for poly in region.polygons:
        for ring in (poly.outer, *poly.holes):
            for i in range(len(ring) - 1):
                d = _sample_segment(lat, lon, ring[i], ring[i + 1], step_m)
                if d < best:
                    best = d
    return best


def oracle_distance_to_boundary(lat: float, lon: float, region, step_m: float = 250.0) -> float:
    if oracle_point_in_region(lat, lon, region):
        return 0.0
    return oracle_boundary_distance_m(lat, lon, region, step_m)


def oracle_contains_with_buffer(lat: float, lon: float, region, buffer_m: float,
                                step_m: float = 250.0) -> bool:
    if oracle_point_in_region(lat, lon, region):
        return True
    return oracle_boundary_distance_m(lat, lon, region, step_m) <= buffer_m
