"""Multivariate Gaussians in moment and natural form, with scale bookkeeping.

Messages in the smoother are unnormalized Gaussians ``s * N(x | mean, cov)``.
The moment form stores ``log_scale = log s`` on top of a normalized density.
The natural form stores the raw exponential-quadratic

    f(x) = exp(log_scale + shift . x - 0.5 x . precision . x)

which stays well defined when the precision is indefinite or zero, as happens
for cavity ratios and freshly initialized site messages.  Conversions between
the two forms carry the scale exactly, so multiplying and dividing messages
never loses normalization mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonPositiveDefinite
from .linalg import as_cov, chol, chol_solve, is_pd, logdet_from_chol, symmetrize

_LOG_2PI = float(np.log(2.0 * np.pi))


def _as_mean(mean) -> np.ndarray:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if mean.ndim != 1:
        raise DimensionMismatch(f"expected vector mean, got shape {mean.shape}")
    return mean


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Moment-form Gaussian ``exp(log_scale) * N(mean, cov)``."""

    mean: np.ndarray
    cov: np.ndarray
    log_scale: float = 0.0

    def __post_init__(self):
        mean = _as_mean(self.mean)
        cov = as_cov(self.cov, dim=mean.shape[0])
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "log_scale", float(self.log_scale))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_natural(self) -> "NaturalGaussian":
        """Natural form with the scale carried exactly.  Requires PD cov."""
        L = chol(self.cov, "covariance")
        precision = symmetrize(chol_solve(L, np.eye(self.dim)))
        shift = chol_solve(L, self.mean)
        # log of the normalized density's constant term
        g0 = -0.5 * (self.dim * _LOG_2PI + logdet_from_chol(L)
                     + float(self.mean @ shift))
        return NaturalGaussian(precision, shift, self.log_scale + g0)

    def log_pdf(self, x) -> float:
        """Log of the unnormalized density at ``x``."""
        x = _as_mean(x)
        if x.shape[0] != self.dim:
            raise DimensionMismatch(f"point dim {x.shape[0]} != {self.dim}")
        L = chol(self.cov, "covariance")
        r = np.linalg.solve(L, x - self.mean)
        return (self.log_scale
                - 0.5 * (self.dim * _LOG_2PI + logdet_from_chol(L) + float(r @ r)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` samples, shape (n, dim), via the Cholesky factor."""
        L = chol(self.cov, "covariance")
        return self.mean + rng.standard_normal((n, self.dim)) @ L.T


@dataclass(frozen=True, eq=False)
class NaturalGaussian:
    """Natural-form Gaussian; precision may be indefinite or zero.

    ``improper`` marks messages known to have no moment form, such as the
    unit message with zero precision.  Definiteness is otherwise checked
    only where an operation requires it.
    """

    precision: np.ndarray
    shift: np.ndarray
    log_scale: float = 0.0
    improper: bool = field(default=False)

    def __post_init__(self):
        shift = _as_mean(self.shift)
        precision = as_cov(self.precision, dim=shift.shape[0])
        object.__setattr__(self, "precision", precision)
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "log_scale", float(self.log_scale))

    @property
    def dim(self) -> int:
        return self.shift.shape[0]

    @classmethod
    def unit(cls, dim: int) -> "NaturalGaussian":
        """The multiplicative identity: constant 1, zero precision."""
        return cls(np.zeros((dim, dim)), np.zeros(dim), 0.0, improper=True)

    def is_proper(self) -> bool:
        return (not self.improper) and is_pd(self.precision)

    def to_moment(self) -> Gaussian:
        """Moment form.  Raises :class:`NonPositiveDefinite` when impossible."""
        if self.improper:
            raise NonPositiveDefinite("improper message has no moment form")
        if not is_pd(self.precision):
            raise NonPositiveDefinite("precision is not positive definite")
        L = chol(self.precision, "precision")
        cov = symmetrize(chol_solve(L, np.eye(self.dim)))
        mean = chol_solve(L, self.shift)
        g0 = -0.5 * (self.dim * _LOG_2PI - logdet_from_chol(L)
                     + float(mean @ self.shift))
        return Gaussian(mean, cov, self.log_scale - g0)

    def __mul__(self, other: "NaturalGaussian") -> "NaturalGaussian":
        _check_dims(self, other)
        return NaturalGaussian(self.precision + other.precision,
                               self.shift + other.shift,
                               self.log_scale + other.log_scale,
                               improper=self.improper and other.improper)

    def __truediv__(self, other: "NaturalGaussian") -> "NaturalGaussian":
        _check_dims(self, other)
        return NaturalGaussian(self.precision - other.precision,
                               self.shift - other.shift,
                               self.log_scale - other.log_scale)

    def scaled(self, log_factor: float) -> "NaturalGaussian":
        return NaturalGaussian(self.precision, self.shift,
                               self.log_scale + log_factor,
                               improper=self.improper)


def _check_dims(a, b):
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension mismatch: {a.dim} vs {b.dim}")


def _natural(g: Gaussian | NaturalGaussian) -> NaturalGaussian:
    return g.to_natural() if isinstance(g, Gaussian) else g


def multiply(a: Gaussian | NaturalGaussian,
             b: Gaussian | NaturalGaussian) -> Gaussian:
    """Product of two messages as a moment-form Gaussian.

    The scale accumulates the product normalizer: for two normalized
    inputs the result's log_scale is ``log N(mean_a | mean_b, cov_a+cov_b)``.
    Raises :class:`NonPositiveDefinite` when the summed precision is not PD.
    """
    prod = _natural(a) * _natural(b)
    if prod.improper:
        raise NonPositiveDefinite("product of improper messages has no moments")
    return prod.to_moment()


def divide(a: Gaussian | NaturalGaussian,
           b: Gaussian | NaturalGaussian) -> NaturalGaussian:
    """Ratio of two messages in natural form; may be indefinite."""
    return _natural(a) / _natural(b)


def log_pdf(g: Gaussian, x) -> float:
    return g.log_pdf(x)


def moment_distance(a: Gaussian, b: Gaussian) -> float:
    """Euclidean mean distance plus Frobenius covariance distance."""
    _check_dims(a, b)
    return float(np.linalg.norm(a.mean - b.mean)
                 + np.linalg.norm(a.cov - b.cov, ord="fro"))
