"""Univariate and bivariate statistical primitives.

Empirical marginals with generalized-inverse quantiles, the standard
normal CDF and its inverse, Pearson correlation, the exact earth mover's
distance between empirical distributions, and correlation-matrix checks.
All array-valued entry points accept scalars or ndarrays.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

from .errors import ValidationError

__all__ = [
    "ConstantVectorError",
    "EmpiricalMarginal",
    "check_correlation_matrix",
    "emd",
    "normal_cdf",
    "normal_pdf",
    "normal_quantile",
    "pearson_corr",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ConstantVectorError(ValidationError):
    """Pearson correlation is undefined for a constant vector."""


class EmpiricalMarginal:
    """Empirical distribution of a univariate sample.

    The CDF is the right-continuous step function
    ``F(x) = #{samples <= x} / n`` and the quantile is its generalized
    inverse ``inf{x : F(x) >= u}``, so a marginal built from integer
    heights can only ever emit those heights.
    """

    __slots__ = ("sorted_values", "n", "_cumprobs")

    def __init__(self, values):
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size == 0:
            raise ValidationError("empirical marginal needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("samples must be finite")
        self.sorted_values = np.sort(arr)
        self.n = int(arr.size)
        self._cumprobs = np.arange(1, self.n + 1) / self.n

    def cdf(self, x):
        """Fraction of samples <= x."""
        idx = np.searchsorted(self.sorted_values, x, side="right")
        out = idx / self.n
        return float(out) if np.ndim(x) == 0 else out

    def quantile(self, u):
        """Smallest sample value v with cdf(v) >= u, for u in (0, 1]."""
        u_arr = np.asarray(u, dtype=float)
        if np.any((u_arr <= 0.0) | (u_arr > 1.0)):
            raise ValidationError("quantile level must lie in (0, 1]")
        idx = np.searchsorted(self._cumprobs, u_arr, side="left")
        out = self.sorted_values[np.minimum(idx, self.n - 1)]
        return float(out) if np.ndim(u) == 0 else out

    def mean(self):
        return float(self.sorted_values.mean())

    def var(self):
        """Population variance of the empirical distribution."""
        return float(self.sorted_values.var())

    @property
    def is_degenerate(self):
        return bool(self.sorted_values[0] == self.sorted_values[-1])

    def __repr__(self):  # pragma: no cover
        return f"EmpiricalMarginal(n={self.n}, support=[{self.sorted_values[0]}, {self.sorted_values[-1]}])"


def normal_cdf(z):
    """Standard normal CDF.

    Evaluated through erfc in complementary form on each side, which keeps
    the result within about one ulp everywhere (tail values are computed
    without cancellation and the opposite tail rounds once against 1).
    """
    z_arr = np.asarray(z, dtype=float)
    tail = 0.5 * erfc(np.abs(z_arr) / _SQRT2)
    out = np.where(z_arr <= 0.0, tail, 1.0 - tail)
    return float(out) if np.ndim(z) == 0 else out


def normal_pdf(z):
    """Standard normal density."""
    z_arr = np.asarray(z, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * z_arr * z_arr)
    return float(out) if np.ndim(z) == 0 else out


# Acklam's rational approximation to the normal quantile (lower tail and
# central region; the upper tail is handled by symmetry since 1 - u is
# exact for u >= 0.5).
_ACKLAM_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ACKLAM_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
             6.680131188771972e+01, -1.328068155288572e+01)
_ACKLAM_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ACKLAM_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
             3.754408661907416e+00)
_ACKLAM_SPLIT = 0.02425


def _acklam_lower(p):
    """Rational-approximation quantile for p in (0, 0.5]; returns z <= 0."""
    out = np.empty_like(p)
    low = p < _ACKLAM_SPLIT
    if np.any(low):
        q = np.sqrt(-2.0 * np.log(p[low]))
        a = _ACKLAM_C
        num = ((((a[0] * q + a[1]) * q + a[2]) * q + a[3]) * q + a[4]) * q + a[5]
        d = _ACKLAM_D
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        out[low] = num / den
    mid = ~low
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        a = _ACKLAM_A
        num = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
        b = _ACKLAM_B
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        out[mid] = num / den
    return out


def normal_quantile(u):
    """Inverse standard normal CDF on the open interval (0, 1).

    One Newton refinement on top of Acklam's approximation; the
    refinement runs in the lower tail where the CDF is evaluated with
    full relative accuracy, so normal_quantile(normal_cdf(z)) recovers z
    to ~1e-8 absolute over |z| <= 6 (the representation limit near u=1).
    """
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(~np.isfinite(u_arr)) or np.any((u_arr <= 0.0) | (u_arr >= 1.0)):
        raise ValidationError("normal_quantile is defined on the open interval (0, 1)")
    upper = u_arr > 0.5
    p = np.where(upper, 1.0 - u_arr, u_arr)  # exact subtraction for u in [0.5, 1)
    z0 = _acklam_lower(p)
    f = normal_cdf(z0) - p
    pdf = normal_pdf(z0)
    step = np.divide(f, pdf, out=np.zeros_like(f), where=pdf > 1e-300)
    z = z0 - step
    out = np.where(upper, -z, z)
    return float(out[0]) if np.ndim(u) == 0 else out.reshape(np.shape(u))


def pearson_corr(xs, ys):
    """Sample Pearson correlation of two equal-length vectors."""
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if x.size != y.size:
        raise ValidationError("vectors must have equal length")
    if x.size < 2:
        raise ValidationError("correlation needs at least 2 observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantVectorError("correlation undefined for a constant vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def emd(f: EmpiricalMarginal, g: EmpiricalMarginal):
    """Exact earth mover's distance between two empirical distributions.

    Both CDFs are step functions, so the integral of |F - G| is a finite
    sum over the merged breakpoints. For equal sample counts this equals
    the mean absolute difference of the sorted samples.
    """
    grid = np.union1d(f.sorted_values, g.sorted_values)
    if grid.size < 2:
        return 0.0
    gaps = np.diff(grid)
    diff = np.abs(f.cdf(grid[:-1]) - g.cdf(grid[:-1]))
    return float(diff @ gaps)


def check_correlation_matrix(a, *, require_psd=False, eig_tol=1e-8, name="matrix"):
    """Validate that `a` is a correlation matrix; returns it as ndarray.

    Checks symmetry, unit diagonal and entries in [-1, 1] (all to 1e-12);
    with require_psd=True also checks the smallest eigenvalue >= -eig_tol.
    """
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be square")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    if not np.allclose(arr, arr.T, rtol=0.0, atol=1e-12):
        raise ValidationError(f"{name} must be symmetric")
    if not np.allclose(np.diag(arr), 1.0, rtol=0.0, atol=1e-12):
        raise ValidationError(f"{name} must have a unit diagonal")
    if np.any(np.abs(arr) > 1.0 + 1e-12):
        raise ValidationError(f"{name} entries must lie in [-1, 1]")
    if require_psd:
        w = np.linalg.eigvalsh((arr + arr.T) / 2.0)
        if w[0] < -eig_tol:
            raise ValidationError(f"{name} is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    return arr
