"""Comparison predictors: least squares on basis features and universal kriging.

Universal kriging here is the two-stage recipe: an OLS trend on the basis
features, an exponential semivariogram fitted to the binned residual
semivariogram, and ordinary kriging of the residuals (weights summing to
one). The nugget is treated as measurement error, so predictions filter
it rather than honouring the data exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial import cKDTree

from .basis import BasisSystem, eval_features
from .errors import InvalidArgumentError, NumericalError
from .geometry import SpherePoints, pairwise_arc
from .linalg import cho_solve, cholesky, lstsq_minnorm

FULL_KRIGING_MAX_N = 5000
DEFAULT_NEIGHBOR_CAP = 64
VARIOGRAM_BINS = 15
MAX_VARIOGRAM_POINTS = 3000


@dataclass
class OlsModel:
    basis: BasisSystem | None
    coefficients: np.ndarray
    ridge_used: float = 0.0

    def predict_features(self, features) -> np.ndarray:
        return np.asarray(features, dtype=float) @ self.coefficients

    def predict(self, points: SpherePoints) -> np.ndarray:
        if self.basis is None:
            raise InvalidArgumentError("model was fitted on raw features; use predict_features")
        return self.predict_features(eval_features(self.basis, points))


def fit_ols(features, targets, basis: BasisSystem | None = None, ridge: float = 0.0) -> OlsModel:
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise InvalidArgumentError(f"shape mismatch: features {x.shape}, targets {y.shape}")
    if basis is not None and x.shape[1] != basis.k_active:
        raise InvalidArgumentError("feature width does not match basis size")
    return OlsModel(basis, lstsq_minnorm(x, y, ridge), ridge)


@dataclass(frozen=True)
class CovParams:
    sill: float
    range: float
    nugget: float

    def __post_init__(self):
        if not (self.sill > 0 and self.range > 0 and self.nugget >= 0):
            raise InvalidArgumentError(f"invalid covariance parameters {self}")

    def semivariogram(self, h):
        return self.nugget + self.sill * (1.0 - np.exp(-np.asarray(h) / self.range))

    def cov(self, h):
        """Covariance of the smooth component (nugget excluded)."""
        return self.sill * np.exp(-np.asarray(h) / self.range)


def empirical_semivariogram(points: SpherePoints, values, n_bins: int = VARIOGRAM_BINS,
                            rng: np.random.Generator | None = None,
                            max_points: int = MAX_VARIOGRAM_POINTS):
    """Binned semivariogram in great-arc distance, out to half the largest lag.

    Returns ``(centres, gamma, counts)``; empty bins are dropped.
    """
    values = np.asarray(values, dtype=float)
    n = len(points)
    if n > max_points:
        rng = rng or np.random.default_rng(0)
        keep = np.sort(rng.choice(n, size=max_points, replace=False))
        points, values = points[keep], values[keep]
        n = max_points
    iu = np.triu_indices(n, k=1)
    h = pairwise_arc(points)[iu]
    sq = 0.5 * (values[:, None] - values[None, :])[iu] ** 2
    edges = np.linspace(0.0, h.max() / 2.0, n_bins + 1)
    which = np.digitize(h, edges) - 1
    ok = (which >= 0) & (which < n_bins)
    counts = np.bincount(which[ok], minlength=n_bins).astype(float)
    sums = np.bincount(which[ok], weights=sq[ok], minlength=n_bins)
    hs = np.bincount(which[ok], weights=h[ok], minlength=n_bins)
    nz = counts > 0
    return hs[nz] / counts[nz], sums[nz] / counts[nz], counts[nz]


def fit_exponential_variogram(lags, gamma, counts) -> CovParams:
    """Weighted least squares fit of ``nugget + sill (1 - exp(-h/range))``.

    Weights are the pair counts. Raises :class:`NumericalError` when the
    optimizer fails.
    """
    lags = np.asarray(lags, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    w = np.sqrt(np.asarray(counts, dtype=float))
    gmax = float(np.max(gamma))
    if not gmax > 0 or lags.size < 3:
        raise NumericalError("degenerate empirical semivariogram")
    x0 = np.array([0.9 * gmax, max(lags.max() / 3.0, 1e-3), 0.1 * float(gamma[0])])

    def resid(p):
        s, r, nug = p
        return w * (nug + s * (1.0 - np.exp(-lags / r)) - gamma)

    sol = least_squares(resid, x0, bounds=([1e-12, 1e-6, 0.0], [10 * gmax, 10 * np.pi, gmax]))
    if not sol.success or not np.all(np.isfinite(sol.x)):
        raise NumericalError(f"variogram fit failed: {sol.message}")
    s, r, nug = sol.x
    return CovParams(float(s), float(r), float(nug))


@dataclass
class UkModel:
    basis: BasisSystem | None
    trend_coefficients: np.ndarray
    cov_params: CovParams
    train_locations: SpherePoints
    train_residuals: np.ndarray
    neighbor_cap: int | None = None
    fallback_used: bool = False
    _solver: dict = field(default_factory=dict, repr=False)

    def trend(self, features) -> np.ndarray:
        return np.asarray(features, dtype=float) @ self.trend_coefficients

    def predict(self, points: SpherePoints, features=None) -> np.ndarray:
        if features is None:
            if self.basis is None:
                raise InvalidArgumentError("features required when no basis is attached")
            features = eval_features(self.basis, points)
        return self.trend(features) + self.krige_residual(points)

    def krige_residual(self, points: SpherePoints) -> np.ndarray:
        n = len(self.train_locations)
        if self.neighbor_cap is None or self.neighbor_cap >= n:
            return self._krige_full(points)
        return self._krige_local(points)

    def _krige_full(self, points: SpherePoints) -> np.ndarray:
        if not self._solver:
            self._solver.update(_ok_factor(self.train_locations, self.train_residuals, self.cov_params))
        s = self._solver
        c0 = self.cov_params.cov(pairwise_arc(points, self.train_locations))
        return s["mu"] + c0 @ s["alpha"]

    def _krige_local(self, points: SpherePoints) -> np.ndarray:
        tree = self._solver.get("tree")
        if tree is None:
            tree = self._solver["tree"] = cKDTree(self.train_locations.xyz)
        _, nbrs = tree.query(points.xyz, k=self.neighbor_cap)
        out = np.empty(len(points))
        for i in range(len(points)):
            loc = self.train_locations[nbrs[i]]
            s = _ok_factor(loc, self.train_residuals[nbrs[i]], self.cov_params)
            c0 = self.cov_params.cov(pairwise_arc(points[i:i + 1], loc))[0]
            out[i] = s["mu"] + c0 @ s["alpha"]
        return out


def _ok_factor(locs: SpherePoints, resid: np.ndarray, cov: CovParams) -> dict:
    """Ordinary-kriging pieces: ``pred = mu + c0^T C^-1 (r - mu 1)``.

    ``mu`` is the generalized-least-squares mean ``1^T C^-1 r / 1^T C^-1 1``,
    which is what the Lagrange-constrained kriging system reduces to.
    """
    c = cov.cov(pairwise_arc(locs))
    c[np.diag_indices_from(c)] += cov.nugget
    lower = cholesky(c, jitter=1e-10 * cov.sill)
    ones = np.ones(len(locs))
    ci_r = cho_solve(lower, resid)
    ci_1 = cho_solve(lower, ones)
    mu = float(ones @ ci_r / (ones @ ci_1))
    alpha = ci_r - mu * ci_1
    return {"mu": mu, "alpha": alpha}


def fit_uk(locations: SpherePoints, targets, basis: BasisSystem | None = None, features=None,
           neighbor_cap: int | None = None, cov_params: CovParams | None = None,
           rng: np.random.Generator | None = None) -> UkModel:
    """Fit the trend, the residual variogram, and prepare residual kriging.

    ``neighbor_cap=None`` means full kriging up to 5000 training points
    and 64 nearest neighbours beyond. Supplying ``cov_params`` skips the
    variogram fit.
    """
    y = np.asarray(targets, dtype=float)
    n = len(locations)
    if y.shape[0] != n:
        raise InvalidArgumentError("targets and locations differ in length")
    if n < 30:
        raise InvalidArgumentError("universal kriging needs at least 30 observations")
    if features is None:
        if basis is None:
            raise InvalidArgumentError("need a basis or a feature matrix")
        features = eval_features(basis, locations)
    trend = fit_ols(features, y, basis)
    resid = y - trend.predict_features(features)
    fallback = False
    if cov_params is None:
        try:
            lags, gam, counts = empirical_semivariogram(locations, resid, rng=rng)
            cov_params = fit_exponential_variogram(lags, gam, counts)
        except (NumericalError, InvalidArgumentError) as exc:
            var = float(np.var(resid)) or 1e-12
            cov_params = CovParams(var, 0.3, 0.1 * var)
            fallback = True
            warnings.warn(f"variogram fit failed ({exc}); using default covariance", RuntimeWarning)
    if neighbor_cap is None and n > FULL_KRIGING_MAX_N:
        neighbor_cap = DEFAULT_NEIGHBOR_CAP
    return UkModel(basis, trend.coefficients, cov_params, locations, resid, neighbor_cap, fallback)


def predict(model, points: SpherePoints, features=None) -> np.ndarray:
    if isinstance(model, UkModel):
        return model.predict(points, features)
    if features is not None:
        return model.predict_features(features)
    return model.predict(points)
