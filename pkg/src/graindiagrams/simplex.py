"""Dense revised simplex for ``max cᵀx  s.t.  Ax = b, lo ≤ x ≤ up``.

Bounds are ``[0, ∞)`` for ordinary columns and ``[0, 0]`` for *fixed* ones.
Fixed columns may sit in the basis (this is how artificial variables of
equality rows are handled when the initial point is already feasible) but
never enter it.

Columns are kept sparse and may be appended between solves (column
generation); rows may be appended too, each with its own basic slack column.
The basis matrix is factorized densely (LU) and updated with product-form eta
vectors between refactorizations.

Degenerate problems are handled by bound perturbation: while perturbed, the
lower bound of a basic column is moved to a small column-specific negative
value (fixed columns get a symmetric interval), which makes ratio-test steps
strictly positive. :meth:`solve` removes the perturbation at the end and
restores exact feasibility with dual simplex pivots, which keep the reduced
costs optimal. Pricing is Dantzig's rule; after a run of degenerate pivots the
primal phase switches to Bland's rule until the objective moves again.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

OPTIMAL = "optimal"
UNBOUNDED = "unbounded"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"

_GOLDEN = 0.6180339887498949


class RevisedSimplex:
    """Incremental revised simplex.

    Parameters
    ----------
    b : array_like
        Right-hand side of the initial rows.
    tol : float
        Reduced-cost tolerance, relative to the largest cost magnitude.
    feas_tol : float
        Primal feasibility tolerance, relative to the largest ``|b|`` (at least 1).
    pivot_tol : float
        Smallest admissible pivot element.
    refactor_every : int
        Number of eta updates before the basis is factorized afresh.
    perturbation : float
        Relative size of the bound perturbation; 0 disables it.
    stall : int, optional
        Degenerate pivots tolerated before Bland's rule takes over
        (default ``100 + 2·rows``).
    """

    def __init__(self, b, tol: float = 1e-9, feas_tol: float = 1e-9, pivot_tol: float = 1e-9,
                 refactor_every: int = 64, perturbation: float = 1e-6, stall=None):
        self.b = np.asarray(b, dtype=float).copy()
        self.tol = tol
        self.feas_tol = feas_tol
        self.pivot_tol = pivot_tol
        self.refactor_every = refactor_every
        self.perturbation = perturbation
        self.stall = stall
        self._rows: list = []
        self._vals: list = []
        self.c = np.zeros(0)
        self.fixed = np.zeros(0, dtype=bool)
        self.xn = np.zeros(0)                     # values of nonbasic columns
        self.basis = np.full(len(self.b), -1, dtype=np.int64)
        self._matrix = None
        self._lu = None
        self._etas: list = []
        self.x_basic = None
        self._perturbed = False
        self.iterations = 0
        self.dual_iterations = 0
        self.degenerate = 0
        self.bland_iterations = 0
        self.last_entering = -1

    @property
    def n_rows(self) -> int:
        return len(self.b)

    @property
    def n_cols(self) -> int:
        return len(self.c)

    def add_columns(self, rows, vals, costs, fixed=None) -> np.ndarray:
        """Append nonbasic columns at value 0, given per-column row indices and values."""
        start = self.n_cols
        for r, v in zip(rows, vals):
            self._rows.append(np.asarray(r, dtype=np.int64))
            self._vals.append(np.asarray(v, dtype=float))
        costs = np.asarray(costs, dtype=float)
        self.c = np.concatenate([self.c, costs])
        fx = np.zeros(len(costs), dtype=bool) if fixed is None else np.asarray(fixed, dtype=bool)
        self.fixed = np.concatenate([self.fixed, fx])
        self.xn = np.concatenate([self.xn, np.zeros(len(costs))])
        self._matrix = None
        return np.arange(start, self.n_cols)

    def add_identity_basis(self, fixed) -> None:
        """Give every row without a basic variable a unit column of its own."""
        rows = np.flatnonzero(self.basis < 0)
        fixed = np.broadcast_to(np.asarray(fixed, dtype=bool), rows.shape)
        cols = self.add_columns([[r] for r in rows], [[1.0]] * len(rows),
                                np.zeros(len(rows)), fixed)
        self.basis[rows] = cols
        self._lu = None

    def add_rows(self, rhs) -> np.ndarray:
        """Append empty rows, each with a fresh basic slack column (cost 0)."""
        rhs = np.asarray(rhs, dtype=float)
        start = self.n_rows
        self.b = np.concatenate([self.b, rhs])
        self.basis = np.concatenate([self.basis, np.full(len(rhs), -1, dtype=np.int64)])
        self._matrix = None
        self.add_identity_basis(False)
        return np.arange(start, self.n_rows)

    # ---- linear algebra ------------------------------------------------------

    def matrix(self) -> sp.csc_matrix:
        if self._matrix is None or self._matrix.shape != (self.n_rows, self.n_cols):
            lens = np.array([len(r) for r in self._rows], dtype=np.int64)
            indptr = np.concatenate([[0], np.cumsum(lens)])
            indices = np.concatenate(self._rows) if self._rows else np.zeros(0, np.int64)
            data = np.concatenate(self._vals) if self._vals else np.zeros(0)
            self._matrix = sp.csc_matrix((data, indices, indptr),
                                         shape=(self.n_rows, self.n_cols))
        return self._matrix

    def _column(self, q: int) -> np.ndarray:
        v = np.zeros(self.n_rows)
        v[self._rows[q]] = self._vals[q]
        return v

    def refactor(self) -> None:
        A = self.matrix()
        B = A[:, self.basis].toarray()
        self._lu = sla.lu_factor(B, check_finite=False)
        self._etas = []
        xn = self.xn.copy()
        xn[self.basis] = 0.0
        self.x_basic = self.ftran(self.b - A @ xn)

    def ftran(self, v: np.ndarray) -> np.ndarray:
        w = sla.lu_solve(self._lu, v, check_finite=False)
        for p, eta in self._etas:
            wp = w[p]
            if wp != 0.0:
                w += eta * wp
                w[p] = eta[p] * wp
        return w

    def btran(self, z: np.ndarray) -> np.ndarray:
        z = z.copy()
        for p, eta in reversed(self._etas):
            z[p] = z @ eta
        return sla.lu_solve(self._lu, z, trans=1, check_finite=False)

    def _pivot(self, p: int, q: int, alpha: np.ndarray, theta: float, leave_value: float):
        self.x_basic -= theta * alpha
        self.x_basic[p] = self.xn[q] + theta
        self.xn[self.basis[p]] = leave_value
        self.basis[p] = q
        eta = -alpha / alpha[p]
        eta[p] = 1.0 / alpha[p]
        self._etas.append((p, eta))
        if len(self._etas) >= self.refactor_every:
            self.refactor()

    # ---- bounds --------------------------------------------------------------

    def _shift(self, cols) -> np.ndarray:
        scale = self.perturbation * max(1.0, float(np.abs(self.b).max(initial=0.0)))
        return scale * (1.0 + ((np.asarray(cols) + 1) * _GOLDEN) % 1.0)

    def _bounds(self, cols):
        """Current (possibly perturbed) bounds of the given columns."""
        lo = np.zeros(len(cols))
        up = np.where(self.fixed[cols], 0.0, np.inf)
        if self._perturbed:
            s = self._shift(cols)
            lo -= s
            up = np.where(self.fixed[cols], s, up)
        return lo, up

    # ---- iterations ----------------------------------------------------------

    def duals(self) -> np.ndarray:
        """Simplex multipliers ``y = c_Bᵀ B⁻¹``."""
        if self._lu is None:
            self.refactor()
        return self.btran(self.c[self.basis])

    def primal(self) -> np.ndarray:
        if self._lu is None:
            self.refactor()
        x = self.xn.copy()
        x[self.basis] = self.x_basic
        return x

    def objective(self) -> float:
        return float(self.c @ self.primal())

    def _reduced_costs(self, A, is_basic):
        y = self.btran(self.c[self.basis])
        d = self.c - A.T @ y
        d[is_basic | self.fixed] = 0.0
        return d

    def _primal_phase(self, max_iter: int) -> str:
        stall = self.stall if self.stall is not None else 100 + 2 * self.n_rows
        cscale = max(float(np.abs(self.c).max()) if self.n_cols else 0.0, 1e-300)
        dtol = self.tol * cscale
        run = 0
        bland = False
        A = self.matrix()
        is_basic = np.zeros(self.n_cols, dtype=bool)
        is_basic[self.basis] = True
        while True:
            d = self._reduced_costs(A, is_basic)
            cand = np.flatnonzero(d > dtol)
            if not len(cand):
                return OPTIMAL
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            q = int(cand[0]) if bland else int(cand[np.argmax(d[cand])])
            alpha = self.ftran(self._column(q))
            lo, up = self._bounds(self.basis)
            xb = self.x_basic
            down = alpha > self.pivot_tol
            rise = (alpha < -self.pivot_tol) & np.isfinite(up)
            if not (down.any() or rise.any()):
                self.last_entering = q
                return UNBOUNDED
            ratios = np.full(self.n_rows, np.inf)
            ratios[down] = (xb[down] - lo[down]) / alpha[down]
            ratios[rise] = (up[rise] - xb[rise]) / -alpha[rise]
            np.maximum(ratios, 0.0, out=ratios)
            theta = ratios.min()
            ties = np.flatnonzero(ratios <= theta + 1e-12 * max(1.0, theta))
            if bland:
                p = int(ties[np.argmin(self.basis[ties])])
            else:
                p = int(ties[np.argmax(np.abs(alpha[ties]))])
            leave_value = lo[p] if alpha[p] > 0 else up[p]
            is_basic[self.basis[p]] = False
            is_basic[q] = True
            self._pivot(p, q, alpha, theta, leave_value)
            self.iterations += 1
            if bland:
                self.bland_iterations += 1
            if theta * d[q] <= dtol * 1e-3:
                self.degenerate += 1
                run += 1
                if run > stall:
                    bland = True
            else:
                run = 0
                bland = False

    def _dual_phase(self, max_iter: int) -> str:
        """Dual simplex pivots until the basic values respect the bounds."""
        A = self.matrix()
        ftol = self.feas_tol * max(1.0, float(np.abs(self.b).max(initial=0.0)))
        is_basic = np.zeros(self.n_cols, dtype=bool)
        is_basic[self.basis] = True
        while True:
            lo, up = self._bounds(self.basis)
            xb = self.x_basic
            infeas = np.maximum(lo - xb, xb - up)
            p = int(np.argmax(infeas))
            if infeas[p] <= ftol:
                return OPTIMAL
            if self.dual_iterations >= max_iter:
                return ITERATION_LIMIT
            below = xb[p] < lo[p]
            e = np.zeros(self.n_rows)
            e[p] = 1.0
            rho = self.btran(e)
            row = A.T @ rho
            d = self._reduced_costs(A, is_basic)
            eligible = ~(is_basic | self.fixed)
            if below:
                eligible &= row < -self.pivot_tol
            else:
                eligible &= row > self.pivot_tol
            cand = np.flatnonzero(eligible)
            if not len(cand):
                return INFEASIBLE
            ratio = np.abs(d[cand]) / np.abs(row[cand])
            best = ratio.min()
            ties = cand[ratio <= best + 1e-12 * max(1.0, best)]
            q = int(ties[np.argmax(np.abs(row[ties]))])
            alpha = self.ftran(self._column(q))
            bound = lo[p] if below else up[p]
            theta = (xb[p] - bound) / alpha[p]
            is_basic[self.basis[p]] = False
            is_basic[q] = True
            self._pivot(p, q, alpha, theta, bound)
            self.dual_iterations += 1

    def solve(self, max_iter: int = 1_000_000) -> str:
        """Optimize; on return the solution is exact (no perturbation left)."""
        if (self.basis < 0).any():
            raise ValueError("every row needs a basic variable before solving")
        self.refactor()
        if self.perturbation > 0:
            self._perturbed = True
            status = self._primal_phase(max_iter)
            self._perturbed = False
            if status != OPTIMAL:
                return status
            nonbasic = np.ones(self.n_cols, dtype=bool)
            nonbasic[self.basis] = False
            self.xn[nonbasic] = 0.0
            self.refactor()
        while True:
            status = self._dual_phase(max_iter)
            if status != OPTIMAL:
                return status
            status = self._primal_phase(max_iter)
            if status != OPTIMAL:
                return status
            lo, up = self._bounds(self.basis)
            ftol = self.feas_tol * max(1.0, float(np.abs(self.b).max(initial=0.0)))
            if (self.x_basic >= lo - ftol).all() and (self.x_basic <= up + ftol).all():
                return OPTIMAL
