"""Coordinates and intrinsic distances on the unit sphere.

Longitude/latitude are radians throughout; latitude is geodetic
(``[-pi/2, pi/2]``), longitude is normalized into ``[-pi, pi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import InvalidArgumentError

TWO_PI = 2.0 * math.pi


def _wrap_lon(lon):
    return np.mod(np.asarray(lon, dtype=float) + math.pi, TWO_PI) - math.pi


def lonlat_to_xyz(lon, lat) -> np.ndarray:
    """Map longitude/latitude (radians) to unit vectors, shape ``(..., 3)``."""
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    clat = np.cos(lat)
    return np.stack([clat * np.cos(lon), clat * np.sin(lon), np.sin(lat)], axis=-1)


@dataclass(frozen=True)
class SphereLocation:
    lon: float
    lat: float
    unit_vec: tuple[float, float, float]

    @property
    def xyz(self) -> np.ndarray:
        return np.asarray(self.unit_vec)


def from_lonlat(lon: float, lat: float) -> SphereLocation:
    """Build a validated :class:`SphereLocation` from radians."""
    lon = float(lon)
    lat = float(lat)
    if not (math.isfinite(lon) and math.isfinite(lat)):
        raise InvalidArgumentError(f"non-finite coordinates ({lon}, {lat})")
    if abs(lat) > math.pi / 2:
        raise InvalidArgumentError(f"latitude {lat} outside [-pi/2, pi/2]")
    lon = float(_wrap_lon(lon))
    x, y, z = lonlat_to_xyz(lon, lat)
    return SphereLocation(lon, lat, (float(x), float(y), float(z)))


class SpherePoints:
    """A batch of locations stored as arrays (``lon``, ``lat``, ``xyz``).

    This is the vectorized counterpart of :class:`SphereLocation`; all the
    numerical code works on batches.
    """

    __slots__ = ("lon", "lat", "xyz")

    def __init__(self, lon, lat):
        lon = np.atleast_1d(np.asarray(lon, dtype=float))
        lat = np.atleast_1d(np.asarray(lat, dtype=float))
        if lon.shape != lat.shape or lon.ndim != 1:
            raise InvalidArgumentError("lon and lat must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lon)) and np.all(np.isfinite(lat))):
            raise InvalidArgumentError("non-finite coordinates")
        if np.any(np.abs(lat) > math.pi / 2):
            raise InvalidArgumentError("latitude outside [-pi/2, pi/2]")
        self.lon = _wrap_lon(lon)
        self.lat = lat
        self.xyz = lonlat_to_xyz(self.lon, self.lat)

    @classmethod
    def from_degrees(cls, lon_deg, lat_deg) -> "SpherePoints":
        return cls(np.radians(lon_deg), np.radians(lat_deg))

    @classmethod
    def from_locations(cls, locs) -> "SpherePoints":
        locs = list(locs)
        return cls([p.lon for p in locs], [p.lat for p in locs])

    def __len__(self) -> int:
        return self.lon.shape[0]

    def __getitem__(self, idx):
        if np.isscalar(idx) or isinstance(idx, (int, np.integer)):
            i = int(idx)
            return SphereLocation(float(self.lon[i]), float(self.lat[i]), tuple(map(float, self.xyz[i])))
        out = SpherePoints.__new__(SpherePoints)
        out.lon = self.lon[idx]
        out.lat = self.lat[idx]
        out.xyz = self.xyz[idx]
        return out

    def __iter__(self) -> Iterator[SphereLocation]:
        for i in range(len(self)):
            yield self[i]

    def __repr__(self) -> str:
        return f"SpherePoints(n={len(self)})"


def as_xyz(obj) -> np.ndarray:
    """Unit vectors of a location, a batch of locations, or an ``(n, 3)`` array."""
    if isinstance(obj, SpherePoints):
        return obj.xyz
    if isinstance(obj, SphereLocation):
        return np.asarray(obj.unit_vec)
    if isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], SphereLocation):
        return np.array([p.unit_vec for p in obj])
    return np.asarray(obj, dtype=float)


def great_arc_angle(a, b):
    """Great-arc angle between ``a`` and ``b`` (elementwise, broadcasting).

    Uses ``atan2(|a x b|, a . b)``, which stays accurate near 0 and pi
    where ``acos`` loses half the digits.
    """
    xa = as_xyz(a)
    xb = as_xyz(b)
    cross = np.linalg.norm(np.cross(xa, xb), axis=-1)
    dot = np.sum(xa * xb, axis=-1)
    out = np.arctan2(cross, dot)
    return float(out) if np.ndim(out) == 0 else out


def pairwise_arc(a, b=None) -> np.ndarray:
    """Matrix of great-arc angles between two batches of points."""
    xa = as_xyz(a)
    xb = xa if b is None else as_xyz(b)
    dot = np.clip(xa @ xb.T, -1.0, 1.0)
    # |a x b|^2 = 1 - (a.b)^2 for unit vectors
    cross = np.sqrt(np.maximum(0.0, 1.0 - dot * dot))
    out = np.arctan2(cross, dot)
    if b is None:
        np.fill_diagonal(out, 0.0)
    return out


def pairwise_chordal_sq(a, b=None) -> np.ndarray:
    xa = as_xyz(a)
    xb = xa if b is None else as_xyz(b)
    d2 = 2.0 - 2.0 * (xa @ xb.T)
    return np.maximum(d2, 0.0)


def fibonacci_knots(m: int) -> SpherePoints:
    """Deterministic quasi-uniform points from the Fibonacci spherical lattice."""
    if int(m) != m or m < 4:
        raise InvalidArgumentError(f"need at least 4 knots, got {m}")
    m = int(m)
    i = np.arange(m, dtype=float)
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    z = 1.0 - (2.0 * i + 1.0) / m
    lat = np.arcsin(z)
    lon = TWO_PI * i / golden
    return SpherePoints(lon, lat)


def uniform_points(n: int, rng: np.random.Generator) -> SpherePoints:
    """Uniform draws on the sphere: lon = phi - pi, lat = arcsin(u)."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    phi = rng.uniform(0.0, TWO_PI, size=n)
    u = rng.uniform(-1.0, 1.0, size=n)
    return lonlat_from_uniforms(phi, u)


def lonlat_from_uniforms(phi, u) -> SpherePoints:
    return SpherePoints(np.asarray(phi) - math.pi, np.arcsin(u))
