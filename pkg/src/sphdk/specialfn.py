"""Dilogarithm and the spherical thin-plate spline kernel."""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError
from .geometry import as_xyz

PI2_6 = math.pi ** 2 / 6.0
KERNEL_OFFSET = 1.0 - math.pi / 6.0
KERNEL_MAX = PI2_6 + KERNEL_OFFSET
KERNEL_MIN = KERNEL_OFFSET

# 0.5**k / k**2 < 1e-19 beyond k = 50
_SERIES_K = np.arange(1, 51, dtype=float)
_SERIES_INV_K2 = 1.0 / _SERIES_K ** 2


def _li2_series(y: np.ndarray) -> np.ndarray:
    # Horner on sum_k y^k / k^2, y in [0, 0.5]
    acc = np.zeros_like(y)
    for c in _SERIES_INV_K2[::-1]:
        acc = (acc + c) * y
    return acc


def dilog(y):
    """Real dilogarithm ``Li2(y)`` on ``[0, 1]``.

    Power series below 1/2, Euler's reflection
    ``Li2(y) = pi^2/6 - ln(y) ln(1-y) - Li2(1-y)`` above it.
    """
    arr = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("dilog is only defined here for arguments in [0, 1]")
    out = np.empty_like(arr)
    lo = arr <= 0.5
    out[lo] = _li2_series(arr[lo])
    hi = ~lo
    if np.any(hi):
        yh = arr[hi]
        w = 1.0 - yh
        with np.errstate(divide="ignore", invalid="ignore"):
            prod = np.where(w > 0.0, np.log(yh) * np.log(w), 0.0)
        out[hi] = PI2_6 - prod - _li2_series(w)
    return float(out) if out.ndim == 0 else out


def tps_kernel_from_cos(cos_gamma):
    """Spherical TPS kernel as a function of ``cos(gamma)``."""
    arg = np.clip(0.5 + 0.5 * np.asarray(cos_gamma, dtype=float), 0.0, 1.0)
    return dilog(arg) + KERNEL_OFFSET


def sph_tps_kernel(a, b):
    """Kernel ``Li2(1/2 + cos(gamma)/2) + 1 - pi/6`` between two locations.

    The argument is taken from the unit-vector dot product, so no
    trigonometric round trip is involved.
    """
    xa = as_xyz(a)
    xb = as_xyz(b)
    out = tps_kernel_from_cos(np.sum(xa * xb, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def sph_tps_kernel_matrix(a, b=None) -> np.ndarray:
    xa = as_xyz(a)
    xb = xa if b is None else as_xyz(b)
    return tps_kernel_from_cos(xa @ xb.T)


def chordal_tps_kernel_matrix(a, b=None) -> np.ndarray:
    """Order-2 TPS kernel in R^3, ``-|x - y|``, on sphere points."""
    xa = as_xyz(a)
    xb = xa if b is None else as_xyz(b)
    d2 = np.maximum(2.0 - 2.0 * (xa @ xb.T), 0.0)
    return -np.sqrt(d2)
