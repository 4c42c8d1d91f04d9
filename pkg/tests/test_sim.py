import math

import numpy as np
import pytest

from sphdk import sim
from sphdk.errors import InvalidArgumentError
from sphdk.geometry import SpherePoints, pairwise_arc, uniform_points
from sphdk.harness import split


def test_uniform_sphere_moments():
    pts = sim.sample_uniform_sphere(50000, np.random.default_rng(7))
    assert np.linalg.norm(pts.xyz.mean(axis=0)) < 0.02
    # area above latitude pi/6 is (1 - sin(pi/6)) / 2 = 0.25 of the sphere
    assert abs(np.mean(pts.lat > math.pi / 6) - 0.25) < 0.01
    assert np.all((pts.lon >= -math.pi) & (pts.lon < math.pi))


def test_gp_coincident_points_identical():
    pts = SpherePoints([0.3, 0.3, 1.2], [0.1, 0.1, -0.4])
    g = sim.sample_gp(pts, 1.0, 0.5, np.random.default_rng(0))
    assert g[0] == pytest.approx(g[1], abs=1e-4)


def gp_moment_stats(seeds=range(20), n=2500):
    """Known-mean second moments of g pooled over seeds: E[g^2] and E[g_i g_j | h ~ 0.1]."""
    sq, lag = [], []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        fld = sim.gen_stationary_gp(sim.ScenarioConfig("i", n=n), rng)
        g = fld.y_true - 1.0
        sq.append(np.mean(g * g))
        h = pairwise_arc(fld.locations)
        i, j = np.where(np.triu((h >= 0.09) & (h <= 0.11), k=1))
        lag.append(g[i] * g[j])
    var = float(np.mean(sq))
    return var, float(np.mean(np.concatenate(lag)) / var)


def test_exponential_cov_values():
    assert sim.exponential_cov(0.0, 1.0, 0.5) == 1.0
    assert sim.exponential_cov(0.1, 1.0, 0.5) == pytest.approx(math.exp(-0.2))


def test_cov_permutation_equivariant(rng):
    pts = uniform_points(40, rng)
    perm = rng.permutation(40)
    c = sim.exponential_cov(pairwise_arc(pts), 1.0, 0.5)
    cp = sim.exponential_cov(pairwise_arc(pts[perm]), 1.0, 0.5)
    np.testing.assert_array_equal(cp, c[np.ix_(perm, perm)])


@pytest.mark.parametrize("lon, lat, expected, tol", [
    (2.0, math.pi / 4, 23.0, 1e-9),
    (0.5, 0.5, 5 + 18 * math.exp(-(0.5 - math.pi / 4) ** 2 / 0.05) - 12, 1e-9),
    (0.0, 0.0, 1 + 18 * math.exp(-(math.pi / 4) ** 2 / 0.05) + 22 * math.exp(-(math.pi / 4) ** 2 / 0.04), 1e-12),
])
def test_f_macro(lon, lat, expected, tol):
    assert sim.f_macro(lon, lat) == pytest.approx(expected, abs=tol)


def test_f_macro_rounded_values():
    assert sim.f_macro(0.5, 0.5) == pytest.approx(-3.47, abs=0.01)
    assert sim.f_macro(0.0, 0.0) == pytest.approx(1.0000834, abs=1e-7)
    # block boundaries are open
    assert sim.f_macro(1.0, 0.5) - sim.f_macro(0.999, 0.5) == pytest.approx(12.0, abs=1e-6)


def test_local_extremes_floor():
    for seed in range(5):
        fld = sim.gen_local_extremes(sim.ScenarioConfig("ii", n=3000), np.random.default_rng(seed))
        assert np.all(fld.y_true >= 0.5)
        assert fld.y_true.min() == 0.5  # the block drop hits the floor


def test_anomaly_peak_and_locality():
    centre = SpherePoints([2.0], [-0.3])
    anom = sim.Anomalies(centre, np.array([18.0]), np.array([0.03]))
    base = sim.f_macro(2.0, -0.3)
    assert sim.extremes_trend(centre, anom)[0] == pytest.approx(base + 18.0, abs=1e-12)
    # chordal distance 0.5 -> central angle 2 asin(0.25)
    far = SpherePoints([2.0], [-0.3 + 2 * math.asin(0.25)])
    bump = sim.extremes_trend(far, anom)[0] - sim.f_macro(far.lon, far.lat)[0]
    assert bump == pytest.approx(18.0 * math.exp(-0.25 / 0.03), rel=1e-6)
    assert math.exp(-0.25 / 0.03) == pytest.approx(2.4e-4, rel=0.01)


def test_wh_centre_matches_monte_carlo():
    closed = sim.wh_centre(2.0, 1.0, 0.1)
    mu = 1 - 1 / 18 + math.sqrt(1 / 18)
    assert mu == pytest.approx(1.180146, abs=1e-6)
    assert closed == pytest.approx(2 * (mu ** 3 + 3 * mu * 0.1 / 18), rel=1e-14)
    kappa = 1.0 + math.sqrt(0.1) * np.random.default_rng(2024).standard_normal(10 ** 6)
    assert abs(np.mean(sim.wilson_hilferty(kappa, 2.0, 1.0)) - closed) < 0.003


def test_nonstationary_nonnegative_and_centred():
    for seed in range(3):
        fld = sim.gen_nonstationary_wh(sim.ScenarioConfig("iii", n=800), np.random.default_rng(seed))
        assert np.all(fld.y_true >= 0)
    # g is spatially correlated (range 1.5), so a replication's mean of g has sd ~0.4;
    # 400 replications put the pooled mean's sd near 0.02
    means = []
    for seed in range(400):
        rng = np.random.default_rng(seed)
        pts = uniform_points(60, rng)
        kappa = 1.0 + sim.sample_gp(pts, 0.1, 1.5, rng)
        means.append(np.mean(sim.wilson_hilferty(kappa, 2, 1) - sim.wh_centre(2, 1, 0.1)))
    assert abs(np.mean(means)) < 0.05


@pytest.mark.parametrize("scenario", ["i", "ii", "iii"])
def test_generators_reproducible(scenario):
    cfg = sim.ScenarioConfig(scenario, n=300)
    a = sim.generate(cfg, np.random.default_rng(11))
    b = sim.generate(cfg, np.random.default_rng(11))
    np.testing.assert_array_equal(a.y_true, b.y_true)
    np.testing.assert_array_equal(a.locations.xyz, b.locations.xyz)
    np.testing.assert_array_equal(a.z_obs, a.y_true)


def _field(y):
    n = len(y)
    rng = np.random.default_rng(0)
    return sim.SimulatedField(uniform_points(n, rng), np.asarray(y, float), np.asarray(y, float),
                              np.zeros(n, bool))


def test_contaminate_clean():
    fld = _field(np.arange(20.0))
    sp = split(20, rng=np.random.default_rng(0))
    out = sim.contaminate(fld, sim.Noise("clean"), sp, np.random.default_rng(1))
    np.testing.assert_array_equal(out.z_obs, fld.y_true)
    assert not out.outlier_mask.any()


def test_contaminate_outliers():
    n = 2500
    fld = _field(np.ones(n))
    sp = split(n, rng=np.random.default_rng(3))
    out = sim.contaminate(fld, sim.Noise("outliers"), sp, np.random.default_rng(4))
    assert out.outlier_mask.sum() == math.floor(0.02 * 2000) == 40
    np.testing.assert_array_equal(out.z_obs[out.outlier_mask], 5.0)
    np.testing.assert_array_equal(out.z_obs[~out.outlier_mask], 1.0)
    assert not out.outlier_mask[sp.val].any() and not out.outlier_mask[sp.test].any()
    assert set(np.where(out.outlier_mask)[0]) <= set(sp.train)


def test_outlier_minimum_one():
    assert sim.outlier_count(10, 0.02) == 1
    assert sim.outlier_count(2000, 0.02) == 40


def test_contaminate_gaussian():
    n = 2500
    fld = _field(np.linspace(0, 3, n))
    sp = split(n, rng=np.random.default_rng(3))
    out = sim.contaminate(fld, sim.Noise("gaussian"), sp, np.random.default_rng(8))
    e = out.z_obs - out.y_true
    assert abs(e.mean()) < 0.03
    assert abs(e.std() - 0.5) < 0.02
    assert not out.outlier_mask.any()


def test_masks_never_touch_holdout_exhaustive():
    for seed in range(50):
        n = 100 + seed
        sp = split(n, rng=np.random.default_rng(seed))
        out = sim.contaminate(_field(np.ones(n)), sim.Noise("outliers"), sp, np.random.default_rng(seed))
        assert not out.outlier_mask[np.r_[sp.val, sp.test]].any()


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        sim.ScenarioConfig("i", n=5)
    with pytest.raises(InvalidArgumentError):
        sim.Noise("outliers", frac=1.5)
    with pytest.raises(InvalidArgumentError):
        sim.Noise("outliers", factor=0)
    with pytest.raises(ValueError):
        sim.ScenarioConfig("iv")
