"""Dense bounded-variable linear programming by two-phase primal simplex.

Small, deterministic, and self-contained: the recourse model needs exact
statuses (optimal / infeasible / unbounded / iteration-limit), bound
handling on every variable, and bit-reproducible pivoting, which is the
whole point of carrying our own solver instead of shelling out.

Internals: each constraint row gets a slack column whose bounds encode
the sense, plus a phase-1 artificial column; the basis is refactorized
with a dense solve every iteration (problems here are tiny, correctness
beats speed). Entering variables follow Dantzig's rule until the
objective stalls for 100 iterations, then Bland's rule takes over to
guarantee termination.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError

__all__ = [
    "INFEASIBLE",
    "ITERATION_LIMIT",
    "LpProblem",
    "LpSolution",
    "OPTIMAL",
    "UNBOUNDED",
    "solve_lp",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

_SENSES = ("<=", ">=", "==")
_PIVOT_TOL = 1e-10
_STALL_LIMIT = 100


@dataclass
class LpProblem:
    """min c.x subject to row constraints and variable bounds.

    Rows are (coeffs, sense, rhs) with coeffs a {column: value} dict;
    bounds may be +-inf.
    """

    n_vars: int
    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    rows: list = field(default_factory=list)

    @classmethod
    def with_bounds(cls, objective, lower, upper):
        c = np.asarray(objective, dtype=float)
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        if not (c.shape == lo.shape == hi.shape) or c.ndim != 1:
            raise ValidationError("objective and bounds must be equal-length vectors")
        return cls(n_vars=c.size, objective=c, lower=lo, upper=hi)

    def add_row(self, coeffs, sense, rhs):
        if sense not in _SENSES:
            raise ValidationError(f"unknown row sense {sense!r}")
        if not np.isfinite(rhs):
            raise ValidationError("row rhs must be finite")
        clean = {}
        for col, val in coeffs.items():
            col = int(col)
            if not 0 <= col < self.n_vars:
                raise ValidationError(f"row references unknown column {col}")
            if not np.isfinite(val):
                raise ValidationError("row coefficients must be finite")
            if val != 0.0:
                clean[col] = float(val)
        self.rows.append((clean, sense, float(rhs)))

    def validate(self):
        if not np.all(np.isfinite(self.objective)):
            raise ValidationError("objective must be finite")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValidationError("bounds must not be NaN")
        if np.any(self.lower > self.upper):
            raise ValidationError("need lower <= upper for every variable")
        return self


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    max_infeasibility: float
    iterations: int


def _initial_value(lo, hi):
    if np.isfinite(lo):
        return lo
    if np.isfinite(hi):
        return hi
    return 0.0


class _Simplex:
    def __init__(self, prob: LpProblem, feas_tol, opt_tol):
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        n = prob.n_vars
        m = len(prob.rows)
        self.n, self.m = n, m
        self.ncols = n + 2 * m  # structural | slack | artificial
        self.A = np.zeros((m, self.ncols))
        self.b = np.zeros(m)
        self.lo = np.full(self.ncols, -np.inf)
        self.hi = np.full(self.ncols, np.inf)
        self.lo[:n] = prob.lower
        self.hi[:n] = prob.upper
        self.senses = []
        for i, (coeffs, sense, rhs) in enumerate(prob.rows):
            for col in sorted(coeffs):
                self.A[i, col] = coeffs[col]
            self.b[i] = rhs
            s = n + i
            self.A[i, s] = 1.0
            if sense == "<=":
                self.lo[s], self.hi[s] = 0.0, np.inf
            elif sense == ">=":
                self.lo[s], self.hi[s] = -np.inf, 0.0
            else:
                self.lo[s], self.hi[s] = 0.0, 0.0
            self.senses.append(sense)
        self.art = n + m + np.arange(m)
        self.x = np.zeros(self.ncols)
        for j in range(n + m):
            self.x[j] = _initial_value(self.lo[j], self.hi[j])
        resid = self.b - self.A[:, :n + m] @ self.x[:n + m]
        sign = np.where(resid >= 0.0, 1.0, -1.0)
        self.A[np.arange(m), self.art] = sign
        self.lo[self.art] = 0.0
        self.hi[self.art] = np.inf
        self.x[self.art] = np.abs(resid)
        self.basis = self.art.copy()
        self.in_basis = np.zeros(self.ncols, dtype=bool)
        self.in_basis[self.basis] = True
        self.iterations = 0

    # -- linear algebra helpers -------------------------------------

    def _recompute_basics(self):
        mask = ~self.in_basis
        rhs = self.b - self.A[:, mask] @ self.x[mask]
        try:
            xb = np.linalg.solve(self.A[:, self.basis], rhs)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by pivot tol
            raise NumericalError("singular basis in simplex") from exc
        self.x[self.basis] = xb

    def _duals(self, c):
        return np.linalg.solve(self.A[:, self.basis].T, c[self.basis])

    # -- pivoting ----------------------------------------------------

    def _entering(self, c, bland):
        y = self._duals(c)
        d = c - y @ self.A
        fixed = self.lo == self.hi
        at_lo = self.x == self.lo
        at_hi = self.x == self.hi
        free = np.isinf(self.lo) & np.isinf(self.hi)
        ok = ~self.in_basis & ~fixed
        up = ok & (at_lo | free) & (d < -self.opt_tol)
        dn = ok & (at_hi | free) & (d > self.opt_tol)
        if not (up.any() or dn.any()):
            return None, 0
        if bland:
            cand = np.flatnonzero(up | dn)
            j = int(cand[0])
        else:
            viol = np.where(up | dn, np.abs(d), 0.0)
            j = int(np.argmax(viol))  # first max: deterministic tie-break
        return j, (1 if up[j] else -1)

    def _ratio_test(self, e, direction):
        w = np.linalg.solve(self.A[:, self.basis], self.A[:, e])
        delta = direction * w
        best_t = self.hi[e] - self.lo[e]  # bound-flip distance (inf if unbounded)
        if not np.isfinite(best_t):
            best_t = np.inf
        leave = -1
        hit_lower = False
        xb = self.x[self.basis]
        lob = self.lo[self.basis]
        hib = self.hi[self.basis]
        for i in range(self.m):
            di = delta[i]
            if di > _PIVOT_TOL:
                if not np.isfinite(lob[i]):
                    continue
                limit = (xb[i] - lob[i]) / di
                lower_side = True
            elif di < -_PIVOT_TOL:
                if not np.isfinite(hib[i]):
                    continue
                limit = (xb[i] - hib[i]) / di
                lower_side = False
            else:
                continue
            limit = max(limit, 0.0)
            if limit < best_t - 1e-12:
                best_t, leave, hit_lower = limit, i, lower_side
            elif leave >= 0 and abs(limit - best_t) <= 1e-12 and self.basis[i] < self.basis[leave]:
                leave, hit_lower = i, lower_side
        return best_t, leave, hit_lower, w

    def _step(self, c, bland):
        """One simplex iteration; returns 'optimal', 'unbounded' or 'moved'."""
        e, direction = self._entering(c, bland)
        if e is None:
            return "optimal"
        t, leave, hit_lower, w = self._ratio_test(e, direction)
        if not np.isfinite(t):
            return "unbounded"
        if leave < 0:
            # Bound flip: entering jumps to its other bound, basis unchanged.
            self.x[e] = self.hi[e] if direction > 0 else self.lo[e]
        else:
            l_col = self.basis[leave]
            self.x[e] = self.x[e] + direction * t
            self.basis[leave] = e
            self.in_basis[e] = True
            self.in_basis[l_col] = False
            self.x[l_col] = self.lo[l_col] if hit_lower else self.hi[l_col]
            if l_col >= self.n + self.m:
                # An artificial that leaves the basis never comes back.
                self.lo[l_col] = self.hi[l_col] = 0.0
                self.x[l_col] = 0.0
        self._recompute_basics()
        return "moved"

    def _run(self, c, max_iter):
        bland = False
        stall = 0
        prev = c @ self.x
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            outcome = self._step(c, bland)
            if outcome == "optimal":
                return OPTIMAL
            if outcome == "unbounded":
                return UNBOUNDED
            self.iterations += 1
            obj = c @ self.x
            if obj < prev - 1e-12:
                stall = 0
            else:
                stall += 1
                if stall >= _STALL_LIMIT:
                    bland = True
            prev = obj

    # -- phases ------------------------------------------------------

    def drive_out_artificials(self):
        """Pivot zero-valued artificials out of the basis where possible."""
        for i in range(self.m):
            col = self.basis[i]
            if col < self.n + self.m:
                continue
            ei = np.zeros(self.m)
            ei[i] = 1.0
            row = np.linalg.solve(self.A[:, self.basis].T, ei) @ self.A
            replaced = False
            for j in range(self.n + self.m):
                if self.in_basis[j] or self.lo[j] == self.hi[j]:
                    continue
                if abs(row[j]) > 1e-7:
                    self.basis[i] = j
                    self.in_basis[j] = True
                    self.in_basis[col] = False
                    self.lo[col] = self.hi[col] = 0.0
                    self.x[col] = 0.0
                    self._recompute_basics()
                    replaced = True
                    break
            if not replaced:
                # Redundant row: the artificial stays basic, pinned at 0.
                self.lo[col] = self.hi[col] = 0.0


def solve_lp(prob: LpProblem, *, max_iter=None, feas_tol=1e-9, opt_tol=1e-9):
    """Solve an LpProblem; see module docstring for the method.

    max_iter defaults to 50 * (rows + columns), counted across both
    phases. The returned solution reports the true maximum primal
    infeasibility of its point; an "optimal" answer failing its own
    feasibility check raises NumericalError instead of lying.
    """
    prob.validate()
    m = len(prob.rows)
    n = prob.n_vars
    if max_iter is None:
        max_iter = 50 * (m + n)
    if m == 0:
        # Pure bound minimization.
        x = np.empty(n)
        for j in range(n):
            cj = prob.objective[j]
            if cj > 0.0:
                x[j] = prob.lower[j]
            elif cj < 0.0:
                x[j] = prob.upper[j]
            else:
                x[j] = _initial_value(prob.lower[j], prob.upper[j])
        if not np.all(np.isfinite(x)):
            return LpSolution(UNBOUNDED, None, None, 0.0, 0)
        return LpSolution(OPTIMAL, x, float(prob.objective @ x), _max_infeas(prob, x), 0)

    sx = _Simplex(prob, feas_tol, opt_tol)
    c1 = np.zeros(sx.ncols)
    c1[sx.art] = 1.0
    status = sx._run(c1, max_iter)
    if status == ITERATION_LIMIT:
        return LpSolution(ITERATION_LIMIT, None, None, np.inf, sx.iterations)
    phase1 = float(c1 @ sx.x)
    if phase1 > feas_tol * (1.0 + float(np.abs(sx.b).max(initial=0.0))) * 10.0:
        return LpSolution(INFEASIBLE, None, None, phase1, sx.iterations)
    sx.drive_out_artificials()
    c2 = np.zeros(sx.ncols)
    c2[:n] = prob.objective
    status = sx._run(c2, max_iter)
    if status == ITERATION_LIMIT:
        return LpSolution(ITERATION_LIMIT, None, None, np.inf, sx.iterations)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, None, None, 0.0, sx.iterations)
    x = sx.x[:n].copy()
    infeas = _max_infeas(prob, x)
    if infeas > 1e-7:
        raise NumericalError(f"simplex reported optimal but infeasibility is {infeas:.3e}")
    return LpSolution(OPTIMAL, x, float(prob.objective @ x), infeas, sx.iterations)


def _max_infeas(prob: LpProblem, x):
    """Maximum violation of rows and bounds at x."""
    worst = 0.0
    worst = max(worst, float(np.max(prob.lower - x, initial=0.0)))
    worst = max(worst, float(np.max(x - prob.upper, initial=0.0)))
    for coeffs, sense, rhs in prob.rows:
        ax = sum(val * x[col] for col, val in coeffs.items())
        if sense == "<=":
            worst = max(worst, ax - rhs)
        elif sense == ">=":
            worst = max(worst, rhs - ax)
        else:
            worst = max(worst, abs(ax - rhs))
    return worst
