"""Spatial basis systems used as network inputs.

Three families:

* ``SPHERICAL_MRTS``: eigen-ordered thin-plate spline basis built from
  the dilogarithm kernel on the sphere. Column ``k`` (k >= 2) is
  ``(k(s) - K 1/m)^T v_{k-1} / Lambda_{k-1}``, column 1 is the constant
  ``m**-0.5``.
* ``EUCLIDEAN_MRTS``: the same construction with the R^3 thin-plate
  kernel ``-|x - y|`` on chordal distance.
* ``WENDLAND_MULTI``: compactly supported Wendland functions centred on
  multi-resolution lon/lat grids.

A system is built once for the largest basis count and truncated with
:meth:`BasisSystem.truncate`; truncation never recomputes the
eigendecomposition.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError
from .geometry import SpherePoints, fibonacci_knots, pairwise_arc
from .linalg import EigenDecomp, eig_sym
from .specialfn import chordal_tps_kernel_matrix, sph_tps_kernel_matrix

DUPLICATE_TOL = 1e-10
WENDLAND_RANGE_FACTOR = 2.5
DEFAULT_WENDLAND_GRIDS = (100, 361, 1369)


class BasisFamily(str, enum.Enum):
    SPHERICAL_MRTS = "spherical_mrts"
    EUCLIDEAN_MRTS = "euclidean_mrts"
    WENDLAND_MULTI = "wendland_multi"


_KERNELS = {
    BasisFamily.SPHERICAL_MRTS: sph_tps_kernel_matrix,
    BasisFamily.EUCLIDEAN_MRTS: chordal_tps_kernel_matrix,
}


@dataclass(frozen=True)
class BasisSystem:
    family: BasisFamily
    knots: SpherePoints
    k_active: int
    eig: EigenDecomp | None = None
    kernel_row_means: np.ndarray | None = None
    wendland_scales: tuple[tuple[int, float], ...] = ()
    _wendland_centres: tuple[SpherePoints, ...] = field(default=(), repr=False)

    @property
    def m(self) -> int:
        return len(self.knots)

    @property
    def max_k(self) -> int:
        if self.family is BasisFamily.WENDLAND_MULTI:
            return sum(g for g, _ in self.wendland_scales)
        return self.m

    def truncate(self, k: int) -> "BasisSystem":
        """Same system exposing only the first (smoothest) ``k`` functions."""
        if self.family is BasisFamily.WENDLAND_MULTI:
            if k != self.max_k:
                raise InvalidArgumentError("Wendland systems cannot be truncated")
            return self
        if not 1 <= k <= self.m:
            raise InvalidArgumentError(f"k={k} outside [1, {self.m}]")
        return replace(self, k_active=int(k))

    def features(self, points: SpherePoints) -> np.ndarray:
        return eval_features(self, points)


def _check_distinct(knots: SpherePoints) -> None:
    gam = pairwise_arc(knots)
    np.fill_diagonal(gam, np.inf)
    if np.min(gam) < DUPLICATE_TOL:
        i, j = np.unravel_index(np.argmin(gam), gam.shape)
        raise InvalidArgumentError(f"knots {i} and {j} coincide")


def _build_mrts(family: BasisFamily, knots, k: int) -> BasisSystem:
    if not isinstance(knots, SpherePoints):
        knots = SpherePoints.from_locations(knots)
    m = len(knots)
    if not 1 <= k <= m:
        raise InvalidArgumentError(f"need 1 <= K <= m, got K={k}, m={m}")
    _check_distinct(knots)
    kmat = _KERNELS[family](knots)
    kmat = 0.5 * (kmat + kmat.T)
    row_means = kmat.mean(axis=1)
    # Q K Q with Q = I - 11^T/m, i.e. double centering
    centred = kmat - row_means[:, None] - row_means[None, :] + row_means.mean()
    eig = eig_sym(centred)
    return BasisSystem(family, knots, int(k), eig=eig, kernel_row_means=row_means)


def build_spherical_mrts(knots, k: int) -> BasisSystem:
    return _build_mrts(BasisFamily.SPHERICAL_MRTS, knots, k)


def build_euclidean_mrts(knots, k: int) -> BasisSystem:
    return _build_mrts(BasisFamily.EUCLIDEAN_MRTS, knots, k)


@lru_cache(maxsize=8)
def fibonacci_mrts(family: BasisFamily | str, m: int) -> BasisSystem:
    """Cached full-rank MRTS system on ``m`` Fibonacci knots."""
    family = BasisFamily(family)
    return _build_mrts(family, fibonacci_knots(m), m)


def wendland(d):
    """Wendland C4 function ``(1-d)^6 (35 d^2 + 18 d + 3) / 3`` on ``[0, 1]``."""
    d = np.asarray(d, dtype=float)
    inside = d < 1.0
    dd = np.where(inside, d, 1.0)
    return np.where(inside, (1.0 - dd) ** 6 * (35.0 * dd * dd + 18.0 * dd + 3.0) / 3.0, 0.0)


def wendland_grid(g: int) -> SpherePoints:
    """``g x g`` lon/lat grid: lon in [-pi, pi), lat from pole to pole."""
    lon = -math.pi + 2.0 * math.pi * np.arange(g) / g
    lat = np.linspace(-math.pi / 2, math.pi / 2, g)
    lon_g, lat_g = np.meshgrid(lon, lat)
    return SpherePoints(lon_g.ravel(), lat_g.ravel())


def default_wendland_scales(grids=DEFAULT_WENDLAND_GRIDS) -> list[tuple[int, float]]:
    """Scales with range = 2.5 x the meridional grid spacing."""
    out = []
    for count in grids:
        g = math.isqrt(count)
        out.append((count, WENDLAND_RANGE_FACTOR * math.pi / (g - 1)))
    return out


def build_wendland_multi(scales=None) -> BasisSystem:
    if scales is None:
        scales = default_wendland_scales()
    scales = tuple((int(c), float(r)) for c, r in scales)
    if not scales:
        raise InvalidArgumentError("at least one Wendland scale is required")
    centres = []
    for count, rng_ in scales:
        g = math.isqrt(count)
        if g * g != count or g < 2:
            raise InvalidArgumentError(f"grid count {count} is not a perfect square >= 4")
        if not rng_ > 0:
            raise InvalidArgumentError(f"range must be positive, got {rng_}")
        centres.append(wendland_grid(g))
    all_knots = SpherePoints(
        np.concatenate([c.lon for c in centres]), np.concatenate([c.lat for c in centres])
    )
    return BasisSystem(
        BasisFamily.WENDLAND_MULTI,
        all_knots,
        sum(c for c, _ in scales),
        wendland_scales=scales,
        _wendland_centres=tuple(centres),
    )


def eval_features(system: BasisSystem, points, chunk: int = 4096) -> np.ndarray:
    """Feature matrix of shape ``(n, k_active)``."""
    if not isinstance(points, SpherePoints):
        points = SpherePoints.from_locations(points)
    n = len(points)
    out = np.empty((n, system.k_active))
    for start in range(0, n, chunk):
        sl = slice(start, min(n, start + chunk))
        out[sl] = _eval_block(system, points[sl])
    return out


def _eval_block(system: BasisSystem, pts: SpherePoints) -> np.ndarray:
    if system.family is BasisFamily.WENDLAND_MULTI:
        cols = []
        for centres, (_, rng_) in zip(system._wendland_centres, system.wendland_scales):
            cols.append(wendland(pairwise_arc(pts, centres) / rng_))
        return np.hstack(cols)
    k = system.k_active
    m = system.m
    kvec = _KERNELS[system.family](pts, system.knots)
    kvec -= system.kernel_row_means[None, :]
    out = np.empty((len(pts), k))
    out[:, 0] = m ** -0.5
    if k > 1:
        lam = system.eig.values[: k - 1]
        out[:, 1:] = (kvec @ system.eig.vectors[:, : k - 1]) / lam
    return out
