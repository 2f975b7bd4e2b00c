"""Dense linear algebra helpers with a uniform jitter policy.

Every Cholesky factorization that the package *requires* to succeed goes
through :func:`chol`.  On failure it adds ``1e-10 * trace(A)/dim`` to the
diagonal and retries up to three times, escalating the jitter tenfold each
time, then raises :class:`CholeskyFailure`.
"""

import numpy as np

from .errors import CholeskyFailure, DimensionMismatch

# starting jitter, relative to the mean diagonal scale
_JITTER0 = 1e-10
_MAX_RETRIES = 3


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the symmetric part (a + a.T) / 2."""
    return 0.5 * (a + a.T)


def as_cov(a, dim: int | None = None) -> np.ndarray:
    """Coerce to a float64 symmetric square matrix, checking shape."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DimensionMismatch(f"expected {dim}x{dim} matrix, got {a.shape}")
    return symmetrize(a)


def chol(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of ``a`` under the escalating jitter policy."""
    a = symmetrize(np.asarray(a, dtype=float))
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    dim = a.shape[0]
    scale = np.trace(a) / max(dim, 1)
    if not np.isfinite(scale) or scale <= 0.0:
        raise CholeskyFailure(f"{what} is not positive definite (trace scale {scale})")
    jitter = _JITTER0 * scale
    eye = np.eye(dim)
    for _ in range(_MAX_RETRIES):
        try:
            return np.linalg.cholesky(a + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise CholeskyFailure(f"{what} is not positive definite after jitter {jitter:g}")


def is_pd(a: np.ndarray) -> bool:
    """True when the symmetric part of ``a`` admits a plain Cholesky."""
    try:
        np.linalg.cholesky(symmetrize(np.asarray(a, dtype=float)))
        return True
    except np.linalg.LinAlgError:
        return False


def chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b given the lower Cholesky factor L of A."""
    y = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, y)


def chol_inv(L: np.ndarray) -> np.ndarray:
    """Inverse of A from its lower Cholesky factor, symmetrized."""
    inv = chol_solve(L, np.eye(L.shape[0]))
    return symmetrize(inv)


def logdet_from_chol(L: np.ndarray) -> float:
    """log det(A) from the lower Cholesky factor of A."""
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def solve_psd(a: np.ndarray, b: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Solve a x = b for symmetric positive definite a, with jitter."""
    return chol_solve(chol(a, what), b)


def inv_psd(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Inverse of a symmetric positive definite matrix, with jitter."""
    return chol_inv(chol(a, what))


def wrap_to_pi(a):
    """Principal angle value(s) in (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)
