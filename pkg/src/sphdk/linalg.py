"""Dense symmetric linear algebra: Jacobi eigensolver, jittered Cholesky,
minimum-norm least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConvergenceError, InvalidArgumentError, NotPositiveDefiniteError

SYM_TOL = 1e-10


@dataclass(frozen=True)
class EigenDecomp:
    values: np.ndarray  # descending
    vectors: np.ndarray  # orthonormal columns
    sweeps: int = 0


def as_sym(m, tol: float = SYM_TOL) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > tol * scale:
        raise InvalidArgumentError("matrix is not symmetric")
    return 0.5 * (a + a.T)


@njit(cache=True)
def _jacobi_sweeps(a, v, target, max_sweeps):
    n = a.shape[0]
    sweeps = 0
    while True:
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += 2.0 * a[i, j] * a[i, j]
        if np.sqrt(off) <= target:
            return sweeps
        if sweeps >= max_sweeps:
            return -1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
        sweeps += 1


def eig_sym(m, tol: float = 1e-12, max_sweeps: int = 100) -> EigenDecomp:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm falls below
    ``tol * ||m||_F``. Eigenvalues are returned in descending order and
    each eigenvector is signed so its largest-magnitude entry is positive.
    """
    a = np.ascontiguousarray(as_sym(m))
    n = a.shape[0]
    v = np.eye(n)
    fro = float(np.linalg.norm(a))
    sweeps = 0
    if n > 1 and fro > 0.0:
        sweeps = _jacobi_sweeps(a, v, tol * fro, max_sweeps)
        if sweeps < 0:
            raise ConvergenceError("Jacobi eigensolver did not converge", max_sweeps)
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    v = v[:, order]
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(n)])
    signs[signs == 0] = 1.0
    v = v * signs
    return EigenDecomp(values, v, sweeps)


def cholesky(m, jitter: float = 0.0) -> np.ndarray:
    """Lower Cholesky factor of ``m + jitter*I``.

    On failure the jitter is escalated by decades up to
    ``1e-6 * trace(m)/n`` before giving up.
    """
    a = as_sym(m)
    n = a.shape[0]
    if jitter < 0:
        raise InvalidArgumentError("jitter must be >= 0")
    cap = 1e-6 * abs(float(np.trace(a))) / max(n, 1)
    tries = [float(jitter)]
    if cap > jitter:
        j = max(10.0 * jitter, 1e-6 * cap)
        while j < cap:
            tries.append(j)
            j *= 10.0
        tries.append(cap)
    eye = np.eye(n)
    for j in tries:
        try:
            return np.linalg.cholesky(a + j * eye)
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefiniteError(
        f"matrix is not positive definite (jitter up to {tries[-1]:.3g})"
    )


def cho_solve(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    from scipy.linalg import solve_triangular

    y = solve_triangular(lower, b, lower=True, check_finite=False)
    return solve_triangular(lower.T, y, lower=False, check_finite=False)


def lstsq_minnorm(A, b, ridge: float = 0.0, rcond: float = 1e-10) -> np.ndarray:
    """Solve ``argmin |A beta - b|^2 + ridge |beta|^2``.

    With ``ridge == 0`` and rank-deficient ``A`` the minimum-norm solution
    is returned: eigen-directions of ``A^T A`` below ``rcond * max
    eigenvalue`` are dropped.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
        raise InvalidArgumentError(f"shape mismatch: A {A.shape}, b {b.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidArgumentError("empty system")
    if ridge < 0:
        raise InvalidArgumentError("ridge must be >= 0")
    gram = A.T @ A
    lam, vec = np.linalg.eigh(0.5 * (gram + gram.T))
    rhs = vec.T @ (A.T @ b)
    if ridge > 0:
        coef = rhs / (lam + ridge)
    else:
        keep = lam > rcond * max(float(lam[-1]), 0.0)
        coef = np.zeros_like(rhs)
        coef[keep] = rhs[keep] / lam[keep]
    return vec @ coef
