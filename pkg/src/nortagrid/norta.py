"""NORTA fitting and correlation-preserving scenario generation.

Pipeline: estimate empirical marginals and a target correlation matrix
from K observed scenarios; invert the correlation-matching function
c(rho_z) pairwise by bisection to get the base-normal correlation
matrix; repair it to the nearest correlation matrix if the entrywise
inversion left the PSD cone; factor it; sample by pushing correlated
normals through the marginal quantiles.

Marginals only need a ``quantile(u)`` method accepting ndarrays, so
analytic marginals can stand in for empirical ones (used heavily in the
test-suite oracles).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .errors import NumericalError, ValidationError
from .stats import (
    ConstantVectorError,
    EmpiricalMarginal,
    check_correlation_matrix,
    normal_cdf,
    normal_quantile,
    pearson_corr,
)

__all__ = [
    "FitReport",
    "NortaModel",
    "PairMatch",
    "RhoMatch",
    "ScenarioSet",
    "c_of_rho",
    "estimate_inputs",
    "fit",
    "nearest_correlation",
    "sample",
    "solve_rho_z",
]

_GH_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


@dataclass(frozen=True)
class ScenarioSet:
    """A weighted set of scenarios: one row per scenario, one column per
    flooded substation. `columns` optionally carries the substation ids
    in column order (used by file round-trips)."""

    scenarios: np.ndarray
    probs: np.ndarray
    columns: tuple | None = None

    def __post_init__(self):
        scen = np.asarray(self.scenarios, dtype=float)
        if scen.ndim != 2:
            raise ValidationError("scenarios must be a 2-D array (K x n)")
        probs = np.asarray(self.probs, dtype=float).ravel()
        if probs.size != scen.shape[0]:
            raise ValidationError("need exactly one probability per scenario")
        if np.any(probs < 0.0) or not np.all(np.isfinite(probs)):
            raise ValidationError("probabilities must be non-negative and finite")
        if abs(float(probs.sum()) - 1.0) > 1e-12:
            raise ValidationError("probabilities must sum to 1 within 1e-12")
        if not np.all(np.isfinite(scen)):
            raise ValidationError("scenario values must be finite")
        if self.columns is not None and len(self.columns) != scen.shape[1]:
            raise ValidationError("column ids must match scenario width")
        object.__setattr__(self, "scenarios", scen)
        object.__setattr__(self, "probs", probs)
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(self.columns))

    @classmethod
    def with_uniform_probs(cls, scenarios, columns=None):
        scen = np.asarray(scenarios, dtype=float)
        if scen.ndim != 2 or scen.shape[0] == 0:
            raise ValidationError("scenarios must be a non-empty 2-D array")
        k = scen.shape[0]
        return cls(scen, np.full(k, 1.0 / k), columns=columns)

    @property
    def n_scenarios(self):
        return int(self.scenarios.shape[0])

    @property
    def dim(self):
        return int(self.scenarios.shape[1])

    def validate_heights(self):
        """Flood-data check: every value a non-negative integer."""
        scen = self.scenarios
        if np.any(scen < 0.0):
            raise ValidationError("flood heights must be non-negative")
        if not np.allclose(scen, np.round(scen), rtol=0.0, atol=1e-9):
            raise ValidationError("flood heights must be integer-valued")
        return self


class RhoMatch(NamedTuple):
    rho_z: float
    residual: float
    clamped: bool


@dataclass(frozen=True)
class PairMatch:
    i: int
    j: int
    target: float
    rho_z: float
    residual: float
    clamped: bool


@dataclass
class FitReport:
    pairs: list = field(default_factory=list)
    repair_distance: float = 0.0
    chol_jitter: float = 0.0

    @property
    def clamp_count(self):
        return sum(1 for p in self.pairs if p.clamped)

    @property
    def max_residual(self):
        return max((p.residual for p in self.pairs), default=0.0)

    def to_dict(self):
        return {
            "pairs": [
                {"i": p.i, "j": p.j, "target": p.target, "rho_z": p.rho_z,
                 "residual": p.residual, "clamped": p.clamped}
                for p in self.pairs
            ],
            "repair_distance": self.repair_distance,
            "chol_jitter": self.chol_jitter,
            "clamp_count": self.clamp_count,
            "max_residual": self.max_residual,
        }


@dataclass(frozen=True)
class NortaModel:
    """Fitted generator: marginals plus base-normal correlation factor."""

    marginals: list
    sigma_x: np.ndarray
    sigma_z: np.ndarray
    y: np.ndarray
    chol: np.ndarray
    report: FitReport
    columns: tuple | None = None

    @property
    def dim(self):
        return len(self.marginals)


def estimate_inputs(s: ScenarioSet):
    """Empirical marginals and pairwise Pearson target correlations.

    A constant column has undefined correlations; its off-diagonal
    entries fall back to 0 (independence) so fitting can proceed.
    """
    if s.n_scenarios < 2:
        raise ValidationError("need at least 2 scenarios to estimate correlations")
    n = s.dim
    marginals = [EmpiricalMarginal(s.scenarios[:, j]) for j in range(n)]
    sigma = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            try:
                r = pearson_corr(s.scenarios[:, i], s.scenarios[:, j])
            except ConstantVectorError:
                r = 0.0
            sigma[i, j] = sigma[j, i] = r
    return marginals, sigma


def _gh_nodes(degree):
    try:
        return _GH_CACHE[degree]
    except KeyError:
        x, w = hermgauss(degree)
        wn = w / math.sqrt(math.pi)  # E[f(Z)] = sum wn_k f(sqrt(2) x_k)
        _GH_CACHE[degree] = (x, wn)
        return x, wn


def c_of_rho(marginal_i, marginal_j, rho_z, degree=64):
    """Correlation of the transformed pair induced by base correlation rho_z.

    Evaluates corr(Fi^{-1}(Phi(Z1)), Fj^{-1}(Phi(Z2))) for a standard
    bivariate normal (Z1, Z2) with correlation rho_z, by tensor
    Gauss-Hermite quadrature over the rotated independent pair. The
    quadrature is deterministic, which keeps the map nondecreasing in
    rho_z as evaluated -- a Monte Carlo estimate would break the
    bisection in solve_rho_z. Returns 0.0 for a degenerate marginal.
    """
    rho = float(rho_z)
    if not -1.0 <= rho <= 1.0:
        raise ValidationError("rho_z must lie in [-1, 1]")
    # The quadrature ignores mass beyond the node range; pull exact +-1
    # inside the open interval where the rotation is well defined.
    rho = min(1.0 - 1e-12, max(-1.0 + 1e-12, rho))
    x, wn = _gh_nodes(degree)
    shat = math.sqrt(max(0.0, 1.0 - rho * rho))
    z1 = math.sqrt(2.0) * x
    z2 = math.sqrt(2.0) * (rho * x[:, None] + shat * x[None, :])
    xi = np.asarray(marginal_i.quantile(normal_cdf(z1)), dtype=float)
    yj = np.asarray(marginal_j.quantile(normal_cdf(z2)), dtype=float)
    if xi.max() == xi.min() or yj.max() == yj.min():
        # Degenerate marginal: correlation is undefined, report 0 rather
        # than dividing rounding fuzz by rounding fuzz below.
        return 0.0
    # Collapse the independent axis first; one consistent double-sum
    # weighting for every moment keeps c(0) at zero to rounding.
    wy = yj @ wn            # E[Y | Z1 node k]
    wy2 = (yj * yj) @ wn
    sw = float(wn.sum())
    ex = float((wn * xi).sum()) * sw
    ex2 = float((wn * xi * xi).sum()) * sw
    ey = float((wn * wy).sum())
    ey2 = float((wn * wy2).sum())
    exy = float((wn * xi * wy).sum())
    var_i = ex2 - ex * ex
    var_j = ey2 - ey * ey
    if var_i <= 0.0 or var_j <= 0.0:
        return 0.0
    c = (exy - ex * ey) / math.sqrt(var_i * var_j)
    return min(1.0, max(-1.0, c))


def solve_rho_z(marginal_i, marginal_j, rho_x_target, *, tol=1e-4,
                max_iter=200, degree=64):
    """Invert the correlation-matching function by bisection.

    c is nondecreasing in rho_z, so bisection on [-1+1e-6, 1-1e-6] is
    safe. Targets outside the attainable range clamp to the nearer
    endpoint (clamped=True). Discrete marginals make c step-like, so
    after max_iter the midpoint of the final bracket is returned with
    its residual rather than failing.
    """
    target = float(rho_x_target)
    if not -1.0 <= target <= 1.0:
        raise ValidationError("target correlation must lie in [-1, 1]")
    lo, hi = -1.0 + 1e-6, 1.0 - 1e-6
    c_lo = c_of_rho(marginal_i, marginal_j, lo, degree=degree)
    c_hi = c_of_rho(marginal_i, marginal_j, hi, degree=degree)
    if c_hi - c_lo <= 1e-12:
        # Flat matching function (degenerate marginal): rho_z is moot.
        return RhoMatch(0.0, abs(target), False)
    if target <= c_lo:
        return RhoMatch(lo, abs(c_lo - target), target < c_lo)
    if target >= c_hi:
        return RhoMatch(hi, abs(c_hi - target), target > c_hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        c_mid = c_of_rho(marginal_i, marginal_j, mid, degree=degree)
        if abs(c_mid - target) <= tol:
            return RhoMatch(mid, abs(c_mid - target), False)
        if c_mid < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-9:
            # Discrete marginals step over the target; the bracket has
            # collapsed, so more halving cannot improve the residual.
            break
    mid = 0.5 * (lo + hi)
    c_mid = c_of_rho(marginal_i, marginal_j, mid, degree=degree)
    return RhoMatch(mid, abs(c_mid - target), False)


def nearest_correlation(a, *, tol=1e-9, max_iter=1000):
    """Nearest correlation matrix by alternating projections.

    Higham's method with a Dykstra correction on the PSD projection,
    alternating with the unit-diagonal projection, stopping when the
    Frobenius change drops below tol. A PSD input is returned unchanged
    after the first sweep. The result is exactly unit-diagonal and has
    smallest eigenvalue >= -1e-8 (a final clip-and-rescale guards the
    rare non-converged case).
    """
    y = check_correlation_matrix(a, name="nearest_correlation input").copy()
    n = y.shape[0]
    if n == 0:
        return y
    ds = np.zeros_like(y)
    for _ in range(max_iter):
        r = y - ds
        w, v = np.linalg.eigh((r + r.T) / 2.0)
        x = (v * np.maximum(w, 0.0)) @ v.T
        ds = x - r
        y_new = (x + x.T) / 2.0
        np.fill_diagonal(y_new, 1.0)
        delta = float(np.linalg.norm(y_new - y))
        y = y_new
        if delta <= tol:
            break
    np.fill_diagonal(y, 1.0)
    w = np.linalg.eigvalsh(y)
    if w[0] < -1e-8:
        w_all, v = np.linalg.eigh(y)
        x = (v * np.maximum(w_all, 0.0)) @ v.T
        d = np.sqrt(np.diag(x))
        y = x / np.outer(d, d)
        y = (y + y.T) / 2.0
        np.fill_diagonal(y, 1.0)
    return y


def _cholesky_with_jitter(y):
    """Cholesky factor of a (numerically) PSD correlation matrix.

    Escalating diagonal jitter starting at 1e-10 absorbs tiny negative
    eigenvalues left by the repair tolerance.
    """
    eye = np.eye(y.shape[0])
    for jitter in (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6):
        try:
            return np.linalg.cholesky(y + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("correlation matrix is not factorable even with jitter")


def _solve_pairs(marginals, sigma_x, pairs, degree, tol, max_iter, threads):
    def one(pair):
        i, j = pair
        return solve_rho_z(marginals[i], marginals[j], sigma_x[i, j],
                           tol=tol, max_iter=max_iter, degree=degree)

    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, pairs))
    return [one(p) for p in pairs]


def fit(s: ScenarioSet, *, degree=64, match_tol=1e-4, bisect_max_iter=200,
        threads=1) -> NortaModel:
    """Fit a NORTA model to an observed scenario set.

    Parameters
    ----------
    s : ScenarioSet
        K scenarios by n dimensions, K >= 2.
    degree : int
        Gauss-Hermite degree per axis for the matching quadrature.
    match_tol : float
        Bisection tolerance on |c(rho_z) - rho_x|.
    threads : int
        Pair-matching worker threads; results are assembled in pair
        order so the fit is deterministic for any thread count.
    """
    marginals, sigma_x = estimate_inputs(s)
    n = len(marginals)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    matches = _solve_pairs(marginals, sigma_x, pairs, degree, match_tol,
                           bisect_max_iter, threads)
    sigma_z = np.eye(n)
    report = FitReport()
    for (i, j), m in zip(pairs, matches):
        sigma_z[i, j] = sigma_z[j, i] = m.rho_z
        report.pairs.append(PairMatch(i, j, float(sigma_x[i, j]), m.rho_z,
                                      m.residual, m.clamped))
    y = nearest_correlation(sigma_z)
    report.repair_distance = float(np.linalg.norm(sigma_z - y))
    chol, jitter = _cholesky_with_jitter(y)
    report.chol_jitter = jitter
    return NortaModel(marginals=marginals, sigma_x=sigma_x, sigma_z=sigma_z,
                      y=y, chol=chol, report=report, columns=s.columns)


def sample(model: NortaModel, m: int, seed) -> ScenarioSet:
    """Draw m synthetic scenarios from a fitted model.

    Standard-normal draws come from the inverse-CDF transform of PCG64
    uniforms, are correlated through the Cholesky factor, and are pushed
    through each marginal quantile, so every emitted value lies on the
    marginal's support. Identical (model, m, seed) reproduce the exact
    same scenarios.
    """
    if m < 1:
        raise ValidationError("sample count must be at least 1")
    n = model.dim
    rng = np.random.default_rng(seed)
    u = rng.random((m, n))
    u = np.maximum(u, 2.0 ** -54)  # open-interval guard for the quantile
    zhat = normal_quantile(u)
    z = zhat @ model.chol.T
    ug = np.maximum(normal_cdf(z), np.finfo(float).tiny)
    out = np.empty((m, n))
    for j, marg in enumerate(model.marginals):
        out[:, j] = marg.quantile(ug[:, j])
    return ScenarioSet(out, np.full(m, 1.0 / m), columns=model.columns)
