import numpy as np
import pytest

from sphdk.errors import InvalidArgumentError, NotPositiveDefiniteError
from sphdk.linalg import cholesky, eig_sym, lstsq_minnorm


def test_eig_identity():
    e = eig_sym(np.eye(3))
    np.testing.assert_allclose(e.values, [1, 1, 1])


def test_eig_diag_permutation():
    e = eig_sym(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(e.values, [3, 2, 1])
    np.testing.assert_allclose(np.abs(e.vectors), [[1, 0, 0], [0, 0, 1], [0, 1, 0]], atol=1e-14)


def test_eig_2x2():
    e = eig_sym([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(e.values, [3, 1], atol=1e-14)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(np.abs(e.vectors[:, 0]), [s, s], atol=1e-14)
    np.testing.assert_allclose(np.abs(e.vectors[:, 1]), [s, s], atol=1e-14)
    assert np.sign(e.vectors[0, 1]) != np.sign(e.vectors[1, 1])


def test_eig_rejects_nonsymmetric():
    with pytest.raises(InvalidArgumentError):
        eig_sym([[1.0, 2.0], [0.0, 1.0]])


@pytest.mark.parametrize("n", [1, 2, 5, 17, 60])
def test_eig_random(rng, n):
    a = rng.normal(size=(n, n))
    a = a + a.T
    e = eig_sym(a)
    assert np.all(np.diff(e.values) <= 0)
    np.testing.assert_allclose(e.vectors.T @ e.vectors, np.eye(n), atol=1e-8)
    recon = e.vectors @ np.diag(e.values) @ e.vectors.T
    assert np.linalg.norm(a - recon) <= 1e-8 * np.linalg.norm(a)
    np.testing.assert_allclose(e.values, np.sort(np.linalg.eigvalsh(a))[::-1], atol=1e-9)
    # sign convention
    idx = np.argmax(np.abs(e.vectors), axis=0)
    assert np.all(e.vectors[idx, np.arange(n)] > 0)


def test_cholesky_examples():
    np.testing.assert_allclose(cholesky(np.eye(4)), np.eye(4))
    np.testing.assert_allclose(cholesky([[4.0, 2.0], [2.0, 5.0]]), [[2, 0], [1, 2]], atol=1e-14)
    with pytest.raises(NotPositiveDefiniteError):
        cholesky([[1.0, 2.0], [2.0, 1.0]], jitter=0.0)


def test_cholesky_roundtrip(rng):
    for _ in range(20):
        b = rng.normal(size=(8, 8))
        a = b @ b.T + 0.1 * np.eye(8)
        low = cholesky(a)
        assert np.linalg.norm(low @ low.T - a) <= 1e-8 * np.linalg.norm(a)
        assert np.allclose(low, np.tril(low))


def test_cholesky_jitter_rescues_semidefinite():
    v = np.ones((5, 1))
    a = v @ v.T  # rank one
    low = cholesky(a, jitter=1e-10)
    assert np.all(np.isfinite(low))


def test_lstsq_examples():
    np.testing.assert_allclose(lstsq_minnorm(np.eye(2), [3.0, 4.0]), [3, 4])
    np.testing.assert_allclose(lstsq_minnorm(np.array([[1.0], [1.0]]), [1.0, 3.0]), [2.0])
    np.testing.assert_allclose(lstsq_minnorm([[1.0, 1.0], [1.0, 1.0]], [2.0, 2.0]), [1, 1])


def test_lstsq_mismatch():
    with pytest.raises(InvalidArgumentError):
        lstsq_minnorm(np.eye(3), [1.0, 2.0])


def test_lstsq_residual_orthogonal(rng):
    a = rng.normal(size=(40, 6))
    b = rng.normal(size=40)
    beta = lstsq_minnorm(a, b)
    r = b - a @ beta
    assert np.max(np.abs(a.T @ r)) < 1e-8
    np.testing.assert_allclose(beta, np.linalg.lstsq(a, b, rcond=None)[0], atol=1e-10)


def test_lstsq_ridge(rng):
    a = rng.normal(size=(30, 4))
    b = rng.normal(size=30)
    beta = lstsq_minnorm(a, b, ridge=2.0)
    np.testing.assert_allclose(beta, np.linalg.solve(a.T @ a + 2.0 * np.eye(4), a.T @ b))


def test_lstsq_minnorm_matches_pinv(rng):
    a = rng.normal(size=(10, 3)) @ rng.normal(size=(3, 6))  # rank 3
    b = rng.normal(size=10)
    np.testing.assert_allclose(lstsq_minnorm(a, b), np.linalg.pinv(a) @ b, atol=1e-8)
