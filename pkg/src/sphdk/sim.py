"""Simulated fields on the sphere and observation contamination.

Scenarios:

* ``stationary_gp``: ``y = 1 + g`` with ``g`` a zero-mean Gaussian process,
  exponential covariance in great-arc distance (variance 1, range 0.5).
* ``local_extremes``: deterministic trend built from ``f_macro`` plus 60
  random Gaussian bumps, floored at 0.5.
* ``nonstationary_wh``: the local-extremes trend plus a centred
  Wilson-Hilferty transform of a Gaussian process, floored at 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError
from .geometry import SpherePoints, pairwise_arc, uniform_points
from .linalg import cholesky


class Scenario(str, enum.Enum):
    STATIONARY_GP = "stationary_gp"
    LOCAL_EXTREMES = "local_extremes"
    NONSTATIONARY_WH = "nonstationary_wh"


class NoiseKind(str, enum.Enum):
    CLEAN = "clean"
    GAUSSIAN = "gaussian"
    OUTLIERS = "outliers"


SCENARIO_ALIASES = {
    "i": Scenario.STATIONARY_GP,
    "ii": Scenario.LOCAL_EXTREMES,
    "iii": Scenario.NONSTATIONARY_WH,
}


@dataclass(frozen=True)
class Noise:
    kind: NoiseKind = NoiseKind.CLEAN
    sd: float = 0.5
    frac: float = 0.02
    factor: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not 0.0 < self.frac < 1.0:
            raise InvalidArgumentError("outlier fraction must be in (0, 1)")
        if self.factor == 0:
            raise InvalidArgumentError("outlier factor must be non-zero")
        if self.sd < 0:
            raise InvalidArgumentError("noise sd must be >= 0")


@dataclass(frozen=True)
class GpParams:
    mean: float = 1.0
    var: float = 1.0
    range: float = 0.5


@dataclass(frozen=True)
class WhParams:
    a: float = 2.0
    b: float = 1.0
    var: float = 0.1
    range: float = 1.5
    mean: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario = Scenario.STATIONARY_GP
    n: int = 2500
    noise: Noise = field(default_factory=Noise)
    seed: int = 0
    gp_params: GpParams = field(default_factory=GpParams)
    wh_params: WhParams = field(default_factory=WhParams)
    anomaly_count: int = 60

    def __post_init__(self):
        scen = self.scenario
        if isinstance(scen, str) and scen in SCENARIO_ALIASES:
            scen = SCENARIO_ALIASES[scen]
        object.__setattr__(self, "scenario", Scenario(scen))
        if self.n < 10:
            raise InvalidArgumentError("n must be >= 10")


@dataclass
class SimulatedField:
    locations: SpherePoints
    y_true: np.ndarray
    z_obs: np.ndarray
    outlier_mask: np.ndarray

    def __len__(self) -> int:
        return len(self.locations)


def sample_uniform_sphere(n: int, rng: np.random.Generator) -> SpherePoints:
    return uniform_points(n, rng)


def exponential_cov(gamma, var: float, rng_: float) -> np.ndarray:
    return var * np.exp(-np.asarray(gamma) / rng_)


def sample_gp(points: SpherePoints, var: float, range_: float, rng: np.random.Generator,
              jitter: float = 1e-10) -> np.ndarray:
    """Zero-mean GP draw, exponential covariance in great-arc distance."""
    cov = exponential_cov(pairwise_arc(points), var, range_)
    lower = cholesky(cov, jitter)
    return lower @ rng.standard_normal(len(points))


def f_macro(lon, lat):
    """Large-scale trend: peaks near +-45 deg latitude, equatorial dip, block drop."""
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    block = (lon > 0.0) & (lon < 1.0) & (lat > 0.1) & (lat < 1.0)
    out = (
        5.0
        + 18.0 * np.exp(-((lat - math.pi / 4) ** 2) / 0.05)
        + 22.0 * np.exp(-((lat + math.pi / 4) ** 2) / 0.04)
        - 4.0 * np.exp(-(lat ** 2) / 0.01)
        - 12.0 * block
    )
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Anomalies:
    centres: SpherePoints
    amplitude: np.ndarray
    radius: np.ndarray


def draw_anomalies(count: int, rng: np.random.Generator) -> Anomalies:
    centres = uniform_points(count, rng)
    amp = rng.uniform(-10.0, 18.0, size=count)
    rad = rng.uniform(0.005, 0.03, size=count)
    return Anomalies(centres, amp, rad)


def extremes_trend(points: SpherePoints, anomalies: Anomalies) -> np.ndarray:
    """``max(0.5, f_macro + sum_i A_i exp(-|x - a_i|^2 / r_i))``."""
    d2 = np.maximum(2.0 - 2.0 * points.xyz @ anomalies.centres.xyz.T, 0.0)
    bumps = np.exp(-d2 / anomalies.radius) @ anomalies.amplitude
    return np.maximum(0.5, f_macro(points.lon, points.lat) + bumps)


def wh_centre(a: float, b: float, var: float, mean: float = 1.0) -> float:
    """Closed-form mean of the Wilson-Hilferty transform of ``N(mean, var)``.

    With ``c = sqrt(1/(9a))`` the cubed term is Gaussian with mean
    ``mu = 1 - 1/(9a) + c*mean`` and variance ``s2 = c^2 var``, so
    ``E[eta] = (a/b)(mu^3 + 3 mu s2)``.
    """
    c = math.sqrt(1.0 / (9.0 * a))
    mu = 1.0 - 1.0 / (9.0 * a) + c * mean
    s2 = c * c * var
    return (a / b) * (mu ** 3 + 3.0 * mu * s2)


def wilson_hilferty(kappa, a: float, b: float) -> np.ndarray:
    c = math.sqrt(1.0 / (9.0 * a))
    return (a / b) * (1.0 - 1.0 / (9.0 * a) + np.asarray(kappa) * c) ** 3


def gen_stationary_gp(config: ScenarioConfig, rng: np.random.Generator) -> SimulatedField:
    pts = sample_uniform_sphere(config.n, rng)
    p = config.gp_params
    y = p.mean + sample_gp(pts, p.var, p.range, rng)
    return _clean_field(pts, y)


def gen_local_extremes(config: ScenarioConfig, rng: np.random.Generator) -> SimulatedField:
    pts = sample_uniform_sphere(config.n, rng)
    anomalies = draw_anomalies(config.anomaly_count, rng)
    return _clean_field(pts, extremes_trend(pts, anomalies))


def gen_nonstationary_wh(config: ScenarioConfig, rng: np.random.Generator) -> SimulatedField:
    pts = sample_uniform_sphere(config.n, rng)
    anomalies = draw_anomalies(config.anomaly_count, rng)
    p = config.wh_params
    kappa = p.mean + sample_gp(pts, p.var, p.range, rng)
    g = wilson_hilferty(kappa, p.a, p.b) - wh_centre(p.a, p.b, p.var, p.mean)
    y = np.maximum(extremes_trend(pts, anomalies) + g, 0.0)
    return _clean_field(pts, y)


GENERATORS = {
    Scenario.STATIONARY_GP: gen_stationary_gp,
    Scenario.LOCAL_EXTREMES: gen_local_extremes,
    Scenario.NONSTATIONARY_WH: gen_nonstationary_wh,
}


def generate(config: ScenarioConfig, rng: np.random.Generator | None = None) -> SimulatedField:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    return GENERATORS[config.scenario](config, rng)


def _clean_field(pts: SpherePoints, y: np.ndarray) -> SimulatedField:
    y = np.asarray(y, dtype=float)
    return SimulatedField(pts, y, y.copy(), np.zeros(y.shape[0], dtype=bool))


def outlier_count(n_train: int, frac: float) -> int:
    return max(1, int(math.floor(frac * n_train)))


def contaminate(field_: SimulatedField, noise: Noise, split, rng: np.random.Generator) -> SimulatedField:
    """Apply observation noise after the split.

    Gaussian noise hits every index; outliers (``z <- factor * z``) are
    drawn from the training indices only.
    """
    y = field_.y_true
    z = y.copy()
    mask = np.zeros(y.shape[0], dtype=bool)
    if noise.kind is NoiseKind.GAUSSIAN:
        z = y + rng.normal(0.0, noise.sd, size=y.shape[0])
    elif noise.kind is NoiseKind.OUTLIERS:
        train = np.asarray(split.train, dtype=int)
        k = outlier_count(train.size, noise.frac)
        picked = rng.choice(train, size=k, replace=False)
        z[picked] = noise.factor * z[picked]
        mask[picked] = True
    return replace(field_, z_obs=z, outlier_mask=mask)


def temperature_like(points: SpherePoints) -> np.ndarray:
    """Smooth synthetic surface-temperature field (deg C) for real-data stand-in runs.

    Zonal profile from about 28 at the equator to -22 at the poles, a
    cooler south, and two planetary waves standing in for land/sea contrast.
    """
    lon, lat = points.lon, points.lat
    s, c = np.sin(lat), np.cos(lat)
    return (28.0 - 50.0 * s ** 2 - 4.0 * s ** 3
            + 6.0 * c * np.sin(lon + 0.5) + 3.0 * c ** 2 * np.cos(2.0 * lon - 1.0))
