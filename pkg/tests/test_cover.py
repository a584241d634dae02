"""Covering tests.

Three independent oracles check the exact intersection predicate:
  1. covering == brute-force filter over the full cell enumeration
     (verifies the BFS refinement),
  2. random sphere points: a point inside both the rect and a cell forces
     that cell into the covering, and a cell outside the covering may not
     contain any sampled rect point (verifies no false negatives),
  3. an analytically derived cell latitude range decides full-longitude
     band coverings exactly (verifies the latitude-edge math).
"""

import math

import numpy as np
import pytest

from cellsearch.errors import CapacityError, ConfigError, DataError
from cellsearch.s2geom import (
    GeoRect,
    all_cells_at_level,
    cell_from_latlng,
    cells_from_latlng_vec,
    cover_rect,
    cover_rect_raw,
    num_cells_at_level,
)
from cellsearch.s2geom import hilbert, transforms
from cellsearch.s2geom.region import rect_intersects_cell, rect_intersects_cells

RECT_BATTERY = [
    GeoRect(10, 25, 30, 55),            # generic mid-latitude
    GeoRect(48.8, 48.9, 2.3, 2.4),      # small city-sized
    GeoRect(-20, 10, 160, -150),        # antimeridian wrap
    GeoRect(75, 90, -180, 180),         # north polar cap
    GeoRect(-90, -80, -180, 180),       # south polar cap
    GeoRect(-5, 12, -180, 180),         # full-longitude band
    GeoRect(-10, 10, -5, 5),            # equator, face-0 center
    GeoRect(80, 89, 10, 40),            # near-pole partial lune
    GeoRect(-90, 90, 20, 30),           # pole-to-pole lune
    GeoRect(33, 33, -120, -100),        # degenerate latitude line
    GeoRect(10, 20, 77, 77),            # degenerate meridian segment
    GeoRect(5, 6, 179.5, -179.5),       # thin wrap sliver
    GeoRect(30, 50, 35, 55),            # spans a cube corner (~35.26, 45)
    GeoRect(-90, 90, -180, 180),        # full sphere
]


def _decode_level(raws, level):
    face = (raws >> np.uint64(61)).astype(np.int64)
    mask = np.uint64((1 << (2 * level)) - 1)
    pos = ((raws >> np.uint64(61 - 2 * level)) & mask).astype(np.int64)
    i, j = hilbert.position_to_xy_vec(level, pos, face & hilbert.SWAP_MASK)
    return face, i, j


def _brute_force_cover(rect, level):
    raws = all_cells_at_level(level)
    face, i, j = _decode_level(raws, level)
    keep = rect_intersects_cells(rect, face, i, j, level)
    return raws[keep]


@pytest.mark.parametrize("rect", RECT_BATTERY)
def test_cover_equals_enumeration_filter(rect):
    for level in (0, 1, 2, 3, 4, 5):
        got = cover_rect_raw(rect, level, cap=10**6)
        want = _brute_force_cover(rect, level)
        np.testing.assert_array_equal(got, want)


def test_cover_equals_enumeration_filter_level6_spot():
    for rect in (RECT_BATTERY[0], RECT_BATTERY[2], RECT_BATTERY[8]):
        got = cover_rect_raw(rect, 6, cap=10**6)
        np.testing.assert_array_equal(got, _brute_force_cover(rect, 6))


def test_point_membership_consistency():
    rng = np.random.default_rng(31)
    # Uniform points on the sphere.
    xyz = rng.normal(size=(120_000, 3))
    xyz /= np.linalg.norm(xyz, axis=1, keepdims=True)
    lat, lng = transforms.xyz_to_latlng(xyz)
    level = 6
    point_cells = cells_from_latlng_vec(lat, lng, level)
    for rect in RECT_BATTERY:
        cover = cover_rect_raw(rect, level, cap=10**6)
        in_rect = rect.contains(lat, lng)
        # Every cell holding an in-rect point must be covered.
        must_cover = np.unique(point_cells[in_rect])
        assert np.isin(must_cover, cover).all(), rect
        # No sampled in-rect point may fall in an uncovered cell.
        uncovered = point_cells[in_rect][~np.isin(point_cells[in_rect], cover)]
        assert uncovered.size == 0, rect


def _cell_lat_range(face, i, j, level):
    """Independent latitude range of a cell: corner latitudes plus the
    turning-point latitude of each edge's great circle when the turning
    point lies on the edge arc. Level-0 polar faces contain a pole."""
    size = 1 << level
    su = [transforms.st_to_uv(i / size), transforms.st_to_uv((i + 1) / size)]
    sv = [transforms.st_to_uv(j / size), transforms.st_to_uv((j + 1) / size)]
    uv = [(su[0], sv[0]), (su[1], sv[0]), (su[1], sv[1]), (su[0], sv[1])]
    pts = []
    for u, v in uv:
        p = transforms.face_uv_to_xyz(face, u, v)
        pts.append(p / np.linalg.norm(p))
    lats = [math.degrees(math.asin(max(-1.0, min(1.0, p[2])))) for p in pts]
    lo, hi = min(lats), max(lats)
    for a, b in zip(pts, pts[1:] + pts[:1]):
        n = np.cross(a, b)
        n /= np.linalg.norm(n)
        zproj = np.array([0.0, 0.0, 1.0]) - n[2] * n
        nz = np.linalg.norm(zproj)
        if nz < 1e-12:
            continue  # edge on the equator, corners already cover it
        m = zproj / nz
        for cand in (m, -m):
            # Is cand within the arc a -> b?
            e1 = a
            e2 = np.cross(n, a)
            ang_b = math.atan2(float(b @ e2), float(b @ e1)) % (2 * math.pi)
            ang_c = math.atan2(float(cand @ e2), float(cand @ e1)) % (2 * math.pi)
            if ang_c <= ang_b + 1e-15:
                lat_c = math.degrees(math.asin(max(-1.0, min(1.0, cand[2]))))
                lo, hi = min(lo, lat_c), max(hi, lat_c)
    if level == 0 and face == 2:
        hi = 90.0
    if level == 0 and face == 5:
        lo = -90.0
    return lo, hi


@pytest.mark.parametrize("band", [(-5, 12), (40, 55), (-90, -70), (62, 90), (0, 0.5)])
def test_band_cover_matches_latitude_ranges(band):
    lat_lo, lat_hi = band
    rect = GeoRect(lat_lo, lat_hi, -180, 180)
    for level in (0, 1, 2, 3):
        raws = all_cells_at_level(level)
        face, i, j = _decode_level(raws, level)
        cover = cover_rect_raw(rect, level, cap=10**6)
        for k in range(raws.size):
            lo, hi = _cell_lat_range(int(face[k]), int(i[k]), int(j[k]), level)
            expect = (hi >= lat_lo) and (lo <= lat_hi)
            got = raws[k] in cover
            assert got == expect, (level, int(face[k]), int(i[k]), int(j[k]))


def test_cover_monotone_across_levels():
    rng = np.random.default_rng(37)
    for _ in range(20):
        clat = rng.uniform(-80, 80)
        clng = rng.uniform(-180, 180)
        rect = GeoRect.from_center(clat, clng, rng.uniform(0.5, 8), rng.uniform(0.5, 8))
        coarse = set(cover_rect_raw(rect, 4, cap=10**6).tolist())
        fine = cover_rect_raw(rect, 5, cap=10**6)
        parents = set()
        for raw in fine.tolist():
            c = cell_from_latlng(0, 0, 0)  # placeholder type
            from cellsearch.s2geom import CellId

            parents.add(int(CellId(raw).parent(4)))
        assert parents <= coarse
        # and every coarse cell has at least one fine descendant
        assert len(parents) == len(coarse)


def test_point_rect_cover_is_containing_cell():
    rng = np.random.default_rng(41)
    for _ in range(50):
        lat = rng.uniform(-85, 85)
        lng = rng.uniform(-179, 179)
        rect = GeoRect(lat, lat, lng, lng)
        cover = cover_rect(rect, 11)
        assert 1 <= len(cover) <= 4
        assert cell_from_latlng(lat, lng, 11) in cover


def test_full_sphere_cover_counts():
    rect = GeoRect(-90, 90, -180, 180)
    for level in (0, 1, 2, 3):
        assert cover_rect_raw(rect, level, cap=10**6).size == num_cells_at_level(level)


def test_cover_capacity_error():
    rect = GeoRect(-60, 60, -120, 120)
    with pytest.raises(CapacityError):
        cover_rect_raw(rect, 11, cap=500)


def test_cover_level_cap():
    with pytest.raises(ConfigError):
        cover_rect_raw(GeoRect(0, 1, 0, 1), 17)


def test_rect_validation():
    with pytest.raises(DataError):
        GeoRect(10, 5, 0, 1)  # inverted latitudes
    with pytest.raises(DataError):
        GeoRect(-100, 5, 0, 1)
    with pytest.raises(DataError):
        GeoRect(0, 1, -200, 1)
    with pytest.raises(DataError):
        GeoRect(0, float("nan"), 0, 1)


def test_rect_contains_and_wrap():
    rect = GeoRect(-10, 10, 170, -170)
    assert rect.contains(0, 180) and rect.contains(0, -180)
    assert rect.contains(0, 175) and rect.contains(0, -175)
    assert not rect.contains(0, 0)
    assert not rect.contains(20, 180)
    assert rect.lng_length == 20
    full = GeoRect(0, 1, -180, 180)
    assert full.is_full_lng and full.contains(0.5, 123)


def test_rect_from_center_clamps_and_wraps():
    r = GeoRect.from_center(89, 0, 5, 5)
    assert r.lat_hi == 90 and r.lat_lo == 84
    r2 = GeoRect.from_center(0, 179, 1, 5)
    assert r2.lng_lo == 174 and r2.lng_hi == -176
    r3 = GeoRect.from_center(0, 0, 1, 200)
    assert r3.is_full_lng


def test_single_cell_predicate_agrees():
    rect = GeoRect(10, 25, 30, 55)
    cover = cover_rect(rect, 3)
    for raw in all_cells_at_level(3).tolist():
        from cellsearch.s2geom import CellId

        assert rect_intersects_cell(rect, CellId(raw)) == (raw in cover)
