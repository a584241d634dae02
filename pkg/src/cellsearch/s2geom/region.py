"""Lat/lng rectangles and their coverings by grid cells.

The covering algorithm needs an exact intersection predicate between a
cell (a quadrilateral of geodesic edges on the sphere) and a lat/lng
rectangle (bounded by meridian segments and latitude-circle arcs, which
are not geodesics). A cell and a rect intersect iff

    * some cell corner lies inside the rect, or
    * some rect corner (or pole, for caps) lies inside the cell, or
    * some cell edge crosses a meridian edge of the rect, or
    * some cell edge crosses a latitude edge of the rect.

Cell edges are great-circle arcs, so the meridian test is plain geodesic
crossing; the latitude test intersects the edge's great circle with the
z = sin(lat) plane and checks the hit angles against the edge's arc span
and the rect's longitude span. The predicate is monotone (a child cell
intersecting implies its parent intersects), which makes breadth-first
refinement from the six face cells equivalent to filtering a full
enumeration of the target level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import CapacityError, ConfigError, DataError
from . import hilbert, transforms
from .cellid import CellId, check_level

COVER_MAX_LEVEL = 16
DEFAULT_COVER_CAP = 200_000

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GeoRect:
    """A lat/lng rectangle in degrees, possibly wrapping the antimeridian.

    lng_lo > lng_hi means the longitude interval wraps; lng_lo == -180 and
    lng_hi == 180 means the full circle. Degenerate (point or line) rects
    are legal.
    """

    lat_lo: float
    lat_hi: float
    lng_lo: float
    lng_hi: float

    def __post_init__(self):
        vals = (self.lat_lo, self.lat_hi, self.lng_lo, self.lng_hi)
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"non-finite rect bounds {vals}")
        if not (-90.0 <= self.lat_lo <= self.lat_hi <= 90.0):
            raise DataError(
                f"latitude range [{self.lat_lo}, {self.lat_hi}] invalid"
            )
        if not (-180.0 <= self.lng_lo <= 180.0 and -180.0 <= self.lng_hi <= 180.0):
            raise DataError(
                f"longitude range [{self.lng_lo}, {self.lng_hi}] invalid"
            )

    @classmethod
    def from_center(
        cls, lat: float, lng: float, half_lat: float, half_lng: float
    ) -> "GeoRect":
        """Rect around a center point, clamped to valid lat and wrapped in lng."""
        if half_lat < 0 or half_lng < 0:
            raise DataError("negative half-extent")
        lat_lo = max(-90.0, lat - half_lat)
        lat_hi = min(90.0, lat + half_lat)
        if half_lng >= 180.0:
            return cls(lat_lo, lat_hi, -180.0, 180.0)
        lng_lo = math.remainder(lng - half_lng, 360.0)
        lng_hi = math.remainder(lng + half_lng, 360.0)
        # math.remainder yields (-180, 180]; keep exact +/-180 stable
        return cls(lat_lo, lat_hi, lng_lo, lng_hi)

    @property
    def is_full_lng(self) -> bool:
        return self.lng_lo == -180.0 and self.lng_hi == 180.0

    @property
    def is_full_sphere(self) -> bool:
        return self.lat_lo == -90.0 and self.lat_hi == 90.0 and self.is_full_lng

    @property
    def lng_length(self) -> float:
        """Longitude span in degrees, in [0, 360]."""
        if self.is_full_lng:
            return 360.0
        d = self.lng_hi - self.lng_lo
        return d if d >= 0 else d + 360.0

    @property
    def is_point(self) -> bool:
        return self.lat_lo == self.lat_hi and self.lng_length == 0.0

    def contains(self, lat, lng):
        """Membership test; accepts scalars or arrays (degrees)."""
        lat = np.asarray(lat, dtype=np.float64)
        lng = np.asarray(lng, dtype=np.float64)
        ok_lat = (lat >= self.lat_lo) & (lat <= self.lat_hi)
        if self.is_full_lng:
            return ok_lat
        ok_lng = np.mod(lng - self.lng_lo, 360.0) <= self.lng_length
        return ok_lat & ok_lng

    def center(self) -> tuple[float, float]:
        lat = 0.5 * (self.lat_lo + self.lat_hi)
        lng = math.remainder(self.lng_lo + 0.5 * self.lng_length, 360.0)
        return lat, lng


class _RectGeometry:
    """Per-rect precomputation shared across predicate calls."""

    def __init__(self, rect: GeoRect):
        self.rect = rect
        self.lng_lo_r = math.radians(rect.lng_lo)
        self.lng_len_r = math.radians(rect.lng_length)
        self.full_lng = rect.is_full_lng

        # Witness points of the rect that might lie strictly inside a cell.
        witness = []
        lats = (rect.lat_lo, rect.lat_hi)
        if self.full_lng:
            for lat in lats:
                for lng in (-180.0, -90.0, 0.0, 90.0):
                    witness.append((lat, lng))
        else:
            for lat in lats:
                for lng in (rect.lng_lo, rect.lng_hi):
                    witness.append((lat, lng))
        if rect.lat_hi == 90.0:
            witness.append((90.0, 0.0))
        if rect.lat_lo == -90.0:
            witness.append((-90.0, 0.0))
        w = np.array(witness, dtype=np.float64)
        wxyz = transforms.latlng_to_xyz(w[:, 0], w[:, 1])  # (w, 3)

        # Face-local coordinates of every witness on all six faces.
        d = wxyz @ transforms.FACE_NORMALS.T  # (w, 6)
        with np.errstate(divide="ignore", invalid="ignore"):
            wu = (wxyz @ transforms.FACE_U_AXES.T) / d
            wv = (wxyz @ transforms.FACE_V_AXES.T) / d
        self.w_valid = d.T > 0  # (6, w)
        self.w_u = wu.T
        self.w_v = wv.T

        # Meridian edges (geodesic segments at lng_lo / lng_hi). Segments
        # spanning more than 90 degrees are split so no segment comes close
        # to antipodal endpoints (pole-to-pole meridians would degenerate).
        self.meridians = []
        if not self.full_lng and rect.lat_lo < rect.lat_hi:
            stops = [rect.lat_lo, rect.lat_hi]
            if rect.lat_hi - rect.lat_lo > 90.0:
                stops.insert(1, 0.5 * (rect.lat_lo + rect.lat_hi))
            for lng in (rect.lng_lo, rect.lng_hi):
                for lo, hi in zip(stops, stops[1:]):
                    c = transforms.latlng_to_xyz(lo, lng)
                    dpt = transforms.latlng_to_xyz(hi, lng)
                    self.meridians.append((c, dpt))

        # Latitude-circle edges strictly between the poles.
        self.lat_edges = [
            math.sin(math.radians(lat))
            for lat in sorted({rect.lat_lo, rect.lat_hi})
            if -90.0 < lat < 90.0
        ]

    def lng_contains_rad(self, lng_r: np.ndarray) -> np.ndarray:
        if self.full_lng:
            return np.ones(lng_r.shape, dtype=bool)
        return np.mod(lng_r - self.lng_lo_r, _TWO_PI) <= self.lng_len_r


def _simple_crossing_vec(a, b, c, d) -> np.ndarray:
    """Strict geodesic crossing of edges (a_k, b_k) with segment (c, d)."""
    ab = np.cross(a, b)
    acb = -(ab @ c)
    bda = ab @ d
    cd = np.cross(c, d)
    cbd = -(b @ cd)
    dac = a @ cd
    return (acb * bda > 0) & (acb * cbd > 0) & (acb * dac > 0)


def _intersects_lat_edge_vec(a, b, sin_lat: float, geom: _RectGeometry) -> np.ndarray:
    """Do edges (a_k, b_k) cross the latitude circle z = sin_lat inside the
    rect's longitude span?"""
    z = np.cross(a, b)
    nz = np.linalg.norm(z, axis=-1)
    ok = nz > 1e-300
    z = z / np.where(ok, nz, 1.0)[..., None]
    z = np.where(z[..., 2:3] < 0, -z, z)

    # Basis (x, y, z) with x pointing at the great circle's highest latitude.
    ny = np.hypot(z[..., 0], z[..., 1])
    ok &= ny > 1e-15  # edge along the equator: handled by containment tests
    ny_safe = np.where(ok, ny, 1.0)
    y = np.stack([z[..., 1], -z[..., 0], np.zeros(ny.shape)], axis=-1) / ny_safe[..., None]
    x = np.cross(y, z)

    x2 = x[..., 2]
    reach = ok & (np.abs(sin_lat) < x2)
    x2_safe = np.where(reach, x2, 1.0)
    cos_t = np.clip(sin_lat / x2_safe, -1.0, 1.0)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))

    # Angular span of the edge within its great circle.
    a_ang = np.arctan2(np.einsum("...i,...i->...", a, y), np.einsum("...i,...i->...", a, x))
    b_ang = np.arctan2(np.einsum("...i,...i->...", b, y), np.einsum("...i,...i->...", b, x))
    fwd = np.mod(b_ang - a_ang, _TWO_PI)
    swap = fwd > math.pi
    lo = np.where(swap, b_ang, a_ang)
    length = np.where(swap, _TWO_PI - fwd, fwd)

    hit = np.zeros(a.shape[:-1], dtype=bool)
    theta = np.arctan2(sin_t, cos_t)
    for sign in (1.0, -1.0):
        t = sign * theta
        in_arc = np.mod(t - lo, _TWO_PI) <= length
        px = x[..., 0] * cos_t + sign * y[..., 0] * sin_t
        py = x[..., 1] * cos_t + sign * y[..., 1] * sin_t
        lng_pt = np.arctan2(py, px)
        hit |= reach & in_arc & geom.lng_contains_rad(lng_pt)
    return hit


def _cells_uv_bounds(i, j, level: int):
    size = float(1 << level)
    u0 = transforms.st_to_uv(i / size)
    u1 = transforms.st_to_uv((i + 1) / size)
    v0 = transforms.st_to_uv(j / size)
    v1 = transforms.st_to_uv((j + 1) / size)
    return u0, u1, v0, v1


def _rect_intersects_ij(geom: _RectGeometry, face, i, j, level: int) -> np.ndarray:
    """Vectorized exact intersection of one rect with cells given as
    (face, i, j) arrays at a single level."""
    rect = geom.rect
    n = face.shape[0]
    if rect.is_full_sphere:
        return np.ones(n, dtype=bool)

    face = face.astype(np.int64)
    i = np.asarray(i, dtype=np.float64)
    j = np.asarray(j, dtype=np.float64)
    u0, u1, v0, v1 = _cells_uv_bounds(i, j, level)

    # Rect witnesses inside the cell (closed uv box, front hemisphere).
    wu = geom.w_u[face]  # (n, w)
    wv = geom.w_v[face]
    inside = (
        geom.w_valid[face]
        & (wu >= u0[:, None])
        & (wu <= u1[:, None])
        & (wv >= v0[:, None])
        & (wv <= v1[:, None])
    )
    result = inside.any(axis=1)
    if rect.is_point:
        return result

    # Cell corners inside the rect.
    corners = np.stack(
        [
            transforms.face_uv_to_xyz(face, u0, v0),
            transforms.face_uv_to_xyz(face, u1, v0),
            transforms.face_uv_to_xyz(face, u1, v1),
            transforms.face_uv_to_xyz(face, u0, v1),
        ]
    )  # (4, n, 3)
    lat, lng = transforms.xyz_to_latlng(corners)
    in_lat = (lat >= rect.lat_lo) & (lat <= rect.lat_hi)
    if geom.full_lng:
        in_lng = True
    else:
        in_lng = np.mod(lng - rect.lng_lo, 360.0) <= rect.lng_length
    result |= (in_lat & in_lng).any(axis=0)

    # Edge crossings; all four cell edges batched into one (4n, 3) call.
    a = corners.reshape(4 * n, 3)
    b = np.roll(corners, -1, axis=0).reshape(4 * n, 3)
    crossed = np.zeros(4 * n, dtype=bool)
    for c, dpt in geom.meridians:
        crossed |= _simple_crossing_vec(a, b, c, dpt)
    for sin_lat in geom.lat_edges:
        crossed |= _intersects_lat_edge_vec(a, b, sin_lat, geom)
    result |= crossed.reshape(4, n).any(axis=0)
    return result


def rect_intersects_cells(rect: GeoRect, face, i, j, level: int) -> np.ndarray:
    """Exact rect/cell intersection for cells given as (face, i, j) arrays."""
    check_level(level)
    geom = _RectGeometry(rect)
    face = np.atleast_1d(np.asarray(face, dtype=np.int64))
    i = np.atleast_1d(np.asarray(i, dtype=np.int64))
    j = np.atleast_1d(np.asarray(j, dtype=np.int64))
    return _rect_intersects_ij(geom, face, i, j, level)


def rect_intersects_cell(rect: GeoRect, cell: CellId) -> bool:
    """Exact rect/cell intersection for a single cell id."""
    face, i, j, level = cell.to_ij()
    return bool(rect_intersects_cells(rect, [face], [i], [j], level)[0])


_CHILD_DI = np.array([0, 0, 1, 1], dtype=np.int64)
_CHILD_DJ = np.array([0, 1, 0, 1], dtype=np.int64)


def cover_rect_raw(
    rect: GeoRect, level: int, cap: int = DEFAULT_COVER_CAP
) -> np.ndarray:
    """All level-L cells intersecting the rect, as a sorted uint64 array.

    Breadth-first refinement from the six face cells; every intersecting
    cell at an intermediate level has at least one intersecting descendant,
    so live candidate counts never exceed the final covering size and the
    cap can be enforced at every level.
    """
    check_level(level)
    if level > COVER_MAX_LEVEL:
        raise ConfigError(f"covering level {level} above cap {COVER_MAX_LEVEL}")
    if cap <= 0:
        raise ConfigError(f"covering cap {cap} must be positive")
    geom = _RectGeometry(rect)

    face = np.arange(6, dtype=np.int64)
    i = np.zeros(6, dtype=np.int64)
    j = np.zeros(6, dtype=np.int64)
    for cur in range(level + 1):
        keep = _rect_intersects_ij(geom, face, i, j, cur)
        face, i, j = face[keep], i[keep], j[keep]
        if face.shape[0] > cap:
            raise CapacityError(
                f"covering exceeds cap {cap} ({face.shape[0]} cells at level {cur})"
            )
        if cur == level or face.shape[0] == 0:
            break
        face = np.repeat(face, 4)
        i = np.repeat(i, 4) * 2 + np.tile(_CHILD_DI, face.shape[0] // 4)
        j = np.repeat(j, 4) * 2 + np.tile(_CHILD_DJ, face.shape[0] // 4)

    pos = hilbert.xy_to_position_vec(level, i, j, face & hilbert.SWAP_MASK)
    raws = (
        (face.astype(np.uint64) << np.uint64(61))
        | (pos.astype(np.uint64) << np.uint64(61 - 2 * level))
        | np.uint64(1 << (60 - 2 * level))
    )
    return np.sort(raws)


def cover_rect(rect: GeoRect, level: int, cap: int = DEFAULT_COVER_CAP) -> set:
    """Covering as a set of CellId."""
    return {CellId(int(r)) for r in cover_rect_raw(rect, level, cap)}
