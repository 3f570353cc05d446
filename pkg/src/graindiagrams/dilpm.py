"""Direct LP fit of all diagram parameters via lifted quadric separation.

Each cell function ``h_i(x) = xᵀA_i x − 2 s_iᵀA_i x + s_iᵀA_i s_i + γ_i`` is
linear in the parameter vector ``𝔄_i`` once ``x`` is lifted to its monomials
``𝔛``. Fitting asks for ``h_i(x_j) + margin ≤ h_ℓ(x_j)`` at strict points of
grain ``i`` (deep inside it) and ``h_i(x_j) ≤ h_ℓ(x_j) + ζ_j`` at soft points,
minimizing the weighted slack ``Σ ω_j ζ_j``.

The LP is solved through its dual by column generation: a column per
constraint row, balance rows per parameter (the last grain's vector is the
gauge and is fixed to zero) and one capacity row per soft point. Violated
rows of the primal are priced in rounds until none is left.
"""

from __future__ import annotations

import dataclasses
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import simplex
from .apd import DiagramParams, classify_points, h_matrix
from .scan_stats import (GrainStats, NeighborGraph, compute_boundary_distance,
                         compute_neighbors, compute_stats)
from .supports import full_support, member_range
from .transport import ImageSupport
from .volume_io import GrainScan

log = logging.getLogger(__name__)

PD_REL = 1e-6
_IU = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


class DilpmError(RuntimeError):
    pass


def lift(x) -> np.ndarray:
    """``(1, x₁, x₂, x₃, x₁², x₁x₂, x₁x₃, x₂², x₂x₃, x₃²)``; rows for 2-d input."""
    X = np.asarray(x, dtype=float)
    one = X.ndim == 1
    X = np.atleast_2d(X)
    out = np.empty((len(X), 10))
    out[:, 0] = 1.0
    out[:, 1:4] = X
    for c, (a, b) in enumerate(_IU):
        out[:, 4 + c] = X[:, a] * X[:, b]
    return out[0] if one else out


def encode(A, s, gamma) -> np.ndarray:
    """``(α, −2As, A₁₁, 2A₁₂, 2A₁₃, A₂₂, 2A₂₃, A₃₃)`` with ``α = sᵀAs + γ``."""
    A = np.asarray(A, dtype=float)
    s = np.asarray(s, dtype=float)
    out = np.empty(10)
    out[0] = s @ A @ s + gamma
    out[1:4] = -2.0 * A @ s
    for c, (a, b) in enumerate(_IU):
        out[4 + c] = A[a, b] if a == b else 2.0 * A[a, b]
    return out


def quadratic_part(P) -> np.ndarray:
    """Symmetric matrices read off parameter vectors, shape ``(k, 3, 3)``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    A = np.empty((len(P), 3, 3))
    for c, (a, b) in enumerate(_IU):
        v = P[:, 4 + c] if a == b else 0.5 * P[:, 4 + c]
        A[:, a, b] = v
        A[:, b, a] = v
    return A


@dataclass(frozen=True)
class Decoded:
    A: np.ndarray
    sites: np.ndarray
    gamma: np.ndarray
    beta: float


def decode(P, eps_pd: Optional[float] = None) -> Decoded:
    """Recover ``(A, s, γ)`` per cell, shifting every ``A_i`` by one ``β·I``
    when some smallest eigenvalue is not above ``eps_pd``.

    ``eps_pd`` defaults to ``1e-6 ×`` the median trace of the decoded matrices.
    The common shift adds ``β‖x‖²`` to every cell function and so leaves the
    diagram unchanged.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    A = quadratic_part(P)
    if eps_pd is None:
        eps_pd = PD_REL * float(np.median(np.trace(A, axis1=1, axis2=2)))
        if eps_pd <= 0:
            eps_pd = PD_REL * max(float(np.abs(A).max()), 1.0)
    lam_min = float(np.linalg.eigvalsh(A)[:, 0].min())
    beta = eps_pd - lam_min if lam_min <= eps_pd else 0.0
    Abar = A + beta * np.eye(3)
    a = P[:, 1:4]
    s = -0.5 * np.linalg.solve(Abar, a[:, :, None])[:, :, 0]
    gamma = P[:, 0] - np.einsum("ka,kab,kb->k", s, Abar, s)
    return Decoded(Abar, s, gamma, beta)


@dataclass
class SeparationInstance:
    """Lifted support points and the constraint rows between neighbor grains.

    Row ``r`` asks ``h_{own[r]}(x_{point[r]}) + m ≤ h_{other[r]}(x_{point[r]})``,
    with ``m = margin`` for strict points and a slack for soft ones.
    """

    points: np.ndarray        # (n, 3) µm
    weights: np.ndarray       # (n,)
    grain: np.ndarray         # (n,) 1-based owning grain
    strict: np.ndarray        # (n,) bool
    active: np.ndarray        # (n,) bool; False for points dropped in ring mode
    k: int
    pairs: np.ndarray         # (p, 2) ordered label pairs (i, ℓ), ℓ a neighbor of i
    margin: float = 1.0
    row_point: np.ndarray = field(default=None, repr=False)
    row_own: np.ndarray = field(default=None, repr=False)
    row_other: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.row_point is None:
            nbrs = [[] for _ in range(self.k + 1)]
            for i, l in self.pairs:
                nbrs[i].append(l)
            pts, own, oth = [], [], []
            idx = np.flatnonzero(self.active)
            for g in range(1, self.k + 1):
                mine = idx[self.grain[idx] == g]
                for l in nbrs[g]:
                    pts.append(mine)
                    own.append(np.full(len(mine), g))
                    oth.append(np.full(len(mine), l))
            cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt))
            self.row_point = cat(pts, np.int64)
            self.row_own = cat(own, np.int64)
            self.row_other = cat(oth, np.int64)

    @property
    def n_rows(self) -> int:
        return len(self.row_point)

    def strict_points(self, grain: int) -> np.ndarray:
        return np.flatnonzero(self.active & self.strict & (self.grain == grain))

    def soft_points(self, grain: int) -> np.ndarray:
        return np.flatnonzero(self.active & ~self.strict & (self.grain == grain))


def build_instance(scan: GrainScan, field: np.ndarray, neighbors: NeighborGraph,
                   support: ImageSupport, delta: int, ring=None,
                   margin: float = 1.0) -> SeparationInstance:
    """Strict/soft split of the support by boundary distance.

    A point is strict when it is pure (one grain) and all its voxels are at
    distance ``>= delta``. In ring mode ``(δ⁻, δ⁺)`` strict points need
    distances in ``[δ⁻, δ⁺)`` and points entirely at ``>= δ⁺`` are dropped.
    """
    if scan.k < 2:
        raise DilpmError("k ≥ 2 required")
    if not margin > 0:
        raise ValueError("margin must be positive")
    npts = len(support)
    if support.owner is None:
        if npts != scan.n:
            raise ValueError("support without voxel provenance must be the full voxel support")
        owner = np.arange(scan.n)
    else:
        owner = support.owner
    field = np.asarray(field, dtype=np.int64)
    lab_lo, lab_hi = member_range(owner, scan.labels.astype(np.int64), npts)
    d_lo, d_hi = member_range(owner, field, npts)
    pure = lab_lo == lab_hi
    active = np.ones(npts, dtype=bool)
    if ring is None:
        strict = pure & (d_lo >= delta)
    else:
        lo, hi = ring
        if not 1 <= lo < hi:
            raise ValueError("ring needs 1 <= δ⁻ < δ⁺")
        strict = pure & (d_lo >= lo) & (d_hi < hi)
        active = ~(pure & (d_lo >= hi))
    pairs = np.array(sorted({(a, b) for a, b in neighbors.edges} |
                            {(b, a) for a, b in neighbors.edges}), dtype=np.int64).reshape(-1, 2)
    inst = SeparationInstance(support.points, support.weights.astype(float),
                              support.grain.astype(np.int64), strict, active, scan.k, pairs,
                              float(margin))
    for g in range(1, scan.k + 1):
        if not len(inst.strict_points(g)):
            warnings.warn(f"grain {g} has no strict points; it is fitted by soft constraints only",
                          stacklevel=2)
    return inst


@dataclass
class DilpmSolution:
    params: np.ndarray        # (k, 10) parameter vectors in the caller's coordinates
    slack: np.ndarray         # (n,) ζ per point, zero for strict points
    objective: float
    info: dict


def _normalization(points):
    lo, hi = points.min(axis=0), points.max(axis=0)
    center = 0.5 * (lo + hi)
    L = max(0.5 * float((hi - lo).max()), 1e-12)
    return center, L


def _to_caller(Pn: np.ndarray, center, L) -> np.ndarray:
    """Map parameter vectors fitted on ``(x − c)/L`` back to ``x``."""
    out = np.empty_like(Pn)
    Q = quadratic_part(Pn)                     # xnᵀQxn + bnᵀxn + α
    bn = Pn[:, 1:4]
    A = Q / L ** 2
    b = bn / L - 2.0 * np.einsum("kab,b->ka", A, center)
    alpha = (Pn[:, 0] - np.einsum("ka,a->k", bn, center) / L
             + np.einsum("a,kab,b->k", center, A, center))
    out[:, 0] = alpha
    out[:, 1:4] = b
    for c, (a, bb) in enumerate(_IU):
        out[:, 4 + c] = A[:, a, bb] if a == bb else 2.0 * A[:, a, bb]
    return out


def _row_violation(inst, lifted, P, zeta, rows):
    own, oth, pt = inst.row_own[rows], inst.row_other[rows], inst.row_point[rows]
    diff = np.einsum("ra,ra->r", P[own - 1] - P[oth - 1], lifted[pt])
    m = np.where(inst.strict[pt], inst.margin, 0.0)
    return diff + m - np.where(inst.strict[pt], 0.0, zeta[pt])


def _initial_guess(inst, Xn):
    """Power-diagram guess from grain means and covariances in normalized units."""
    k = inst.k
    P = np.zeros((k, 10))
    for g in range(1, k + 1):
        sel = inst.grain == g
        if not sel.any():
            continue
        w = inst.weights[sel]
        mu = np.average(Xn[sel], axis=0, weights=w)
        d = Xn[sel] - mu
        C = np.einsum("n,na,nb->ab", w, d, d) / w.sum()
        C += (1e-3 + np.trace(C) / 3) * 1e-2 * np.eye(3)
        P[g - 1] = encode(np.linalg.inv(C) / 3.0, mu, 0.0)
    return P


def _pick_rows(inst, score, rows, per_pair):
    """Up to ``per_pair`` rows with the largest score for every ordered pair."""
    if not len(rows):
        return rows
    key = inst.row_own[rows] * (inst.k + 1) + inst.row_other[rows]
    order = np.lexsort((-score, key))
    key_s = key[order]
    start = np.concatenate([[0], np.flatnonzero(np.diff(key_s)) + 1])
    rank = np.arange(len(order)) - np.repeat(start, np.diff(np.concatenate([start, [len(order)]])))
    return rows[order[rank < per_pair]]


def solve_dilpm(inst: SeparationInstance, solver: str = "simplex", per_pair: int = 16,
                max_rounds: int = 500, tol: float = 1e-7) -> DilpmSolution:
    """Optimal parameter vectors and slacks of the separation LP.

    ``solver="highs"`` hands the full primal LP to HiGHS (through SciPy)
    instead of the in-house column generation.
    """
    if inst.k < 2:
        raise DilpmError("k ≥ 2 required")
    # the LP is homogeneous in (𝔄, ζ, margin): solve at margin 1 and rescale,
    # so that the chosen optimal vertex does not depend on the margin
    margin = inst.margin
    inst = dataclasses.replace(inst, margin=1.0)
    center, L = _normalization(inst.points)
    Xn = (inst.points - center) / L
    lifted = lift(Xn)
    if solver == "highs":
        Pn, zeta, info = _solve_highs(inst, lifted)
    elif solver == "simplex":
        Pn, zeta, info = _solve_colgen(inst, lifted, Xn, per_pair, max_rounds, tol)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    Pn, zeta = margin * Pn, margin * zeta
    objective = float(inst.weights @ zeta)
    return DilpmSolution(_to_caller(Pn, center, L), zeta, objective, info)


def _solve_highs(inst, lifted):
    from scipy.optimize import linprog

    k = inst.k
    soft_pts = np.flatnonzero(inst.active & ~inst.strict)
    slack_col = np.full(len(inst.points), -1, dtype=np.int64)
    slack_col[soft_pts] = 10 * k + np.arange(len(soft_pts))
    nr = inst.n_rows
    pt = inst.row_point
    r = np.arange(nr)
    rows = [np.repeat(r, 10), np.repeat(r, 10)]
    cols = [((inst.row_own - 1) * 10)[:, None] + np.arange(10),
            ((inst.row_other - 1) * 10)[:, None] + np.arange(10)]
    vals = [lifted[pt], -lifted[pt]]
    soft = slack_col[pt] >= 0
    rows.append(r[soft])
    cols.append(slack_col[pt][soft])
    vals.append(-np.ones(soft.sum()))
    G = sp.csr_matrix((np.concatenate([v.ravel() for v in vals]),
                       (np.concatenate([x.ravel() for x in rows]),
                        np.concatenate([x.ravel() for x in cols]))),
                      shape=(nr, 10 * k + len(soft_pts)))
    h = -np.where(inst.strict[pt], inst.margin, 0.0)
    c = np.concatenate([np.zeros(10 * k), inst.weights[soft_pts]])
    bounds = [(None, None)] * (10 * (k - 1)) + [(0, 0)] * 10 + [(0, None)] * len(soft_pts)
    res = linprog(c, A_ub=G, b_ub=h, bounds=bounds, method="highs")
    if res.status == 2:
        raise DilpmError("strict point sets are not separable")
    if res.status != 0:
        raise DilpmError(f"HiGHS failed: {res.message}")
    zeta = np.zeros(len(inst.points))
    zeta[soft_pts] = res.x[10 * k:]
    return res.x[:10 * k].reshape(k, 10), zeta, {"solver": "highs", "rows": nr,
                                                 "iterations": int(res.nit)}


def _solve_colgen(inst, lifted, Xn, per_pair, max_rounds, tol):
    k = inst.k
    nb = 10 * (k - 1)
    lp = simplex.RevisedSimplex(np.zeros(nb))
    lp.add_identity_basis(True)
    cap_row = np.full(len(inst.points), -1, dtype=np.int64)
    in_lp = np.zeros(inst.n_rows, dtype=bool)
    col_row = []                                   # constraint row of every LP column

    def add(rows):
        rows = rows[~in_lp[rows]]
        if not len(rows):
            return 0
        pts = inst.row_point[rows]
        new_soft = np.unique(pts[(~inst.strict[pts]) & (cap_row[pts] < 0)])
        if len(new_soft):
            cap_row[new_soft] = lp.add_rows(inst.weights[new_soft])
            col_row.extend([-1] * len(new_soft))
        idx, val, cost = [], [], []
        for r in rows:
            j, i, l = inst.row_point[r], inst.row_own[r], inst.row_other[r]
            ri, vi = [], []
            if i < k:
                ri.append(np.arange(10) + 10 * (i - 1))
                vi.append(lifted[j])
            if l < k:
                ri.append(np.arange(10) + 10 * (l - 1))
                vi.append(-lifted[j])
            if cap_row[j] >= 0:
                ri.append([cap_row[j]])
                vi.append([1.0])
            idx.append(np.concatenate(ri))
            val.append(np.concatenate(vi))
            cost.append(inst.margin if inst.strict[j] else 0.0)
        lp.add_columns(idx, val, cost)
        col_row.extend(rows.tolist())
        in_lp[rows] = True
        return len(rows)

    all_rows = np.arange(inst.n_rows)
    guess = _initial_guess(inst, Xn)
    add(_pick_rows(inst, _row_violation(inst, lifted, guess, np.zeros(len(Xn)), all_rows),
                   all_rows, per_pair))
    rounds = 0
    while True:
        rounds += 1
        status = lp.solve()
        if status == simplex.UNBOUNDED:
            r = col_row[lp.last_entering]
            raise DilpmError(f"strict points cannot be separated: grains "
                             f"{inst.row_own[r]} and {inst.row_other[r]}")
        if status != simplex.OPTIMAL:
            raise DilpmError(f"simplex stopped: {status}")
        y = lp.duals()
        P = np.zeros((k, 10))
        P[:k - 1] = -y[:nb].reshape(k - 1, 10)
        zeta = np.zeros(len(Xn))
        has = cap_row >= 0
        zeta[has] = np.maximum(y[cap_row[has]], 0.0)
        viol = _row_violation(inst, lifted, P, zeta, all_rows)
        bad = np.flatnonzero((viol > tol * inst.margin) & ~in_lp)
        log.debug("round %d: %d columns, %d rows, %d violated", rounds, lp.n_cols,
                  lp.n_rows, len(bad))
        if not len(bad) or rounds >= max_rounds:
            break
        add(_pick_rows(inst, viol[bad], bad, per_pair))
    # slacks that make every row feasible for the final parameters
    zeta = np.zeros(len(Xn))
    viol = _row_violation(inst, lifted, P, zeta, all_rows)
    soft_rows = ~inst.strict[inst.row_point]
    np.maximum.at(zeta, inst.row_point[soft_rows], np.maximum(viol[soft_rows], 0.0))
    info = {"solver": "simplex", "rounds": rounds, "columns": int(in_lp.sum()),
            "lp_rows": lp.n_rows, "iterations": lp.iterations,
            "degenerate": lp.degenerate, "bland_iterations": lp.bland_iterations,
            "dual_objective": lp.objective(),
            "max_strict_violation": float(max(0.0, viol[~soft_rows].max(initial=0.0))),
            "converged": not len(bad)}
    return P, zeta, info


def fit_dilpm(scan: GrainScan, delta: int = 2, support: Optional[ImageSupport] = None,
              ring=None, margin: float = 1.0, solver: str = "simplex",
              field: Optional[np.ndarray] = None, neighbors: Optional[NeighborGraph] = None,
              eps_pd: Optional[float] = None):
    """Build, solve and decode; returns ``(DiagramParams, DilpmSolution, beta)``."""
    if scan.k < 2:
        raise DilpmError("k ≥ 2 required")
    field = compute_boundary_distance(scan) if field is None else field
    neighbors = compute_neighbors(scan) if neighbors is None else neighbors
    support = full_support(scan) if support is None else support
    inst = build_instance(scan, field, neighbors, support, delta, ring, margin)
    sol = solve_dilpm(inst, solver=solver)
    dec = decode(sol.params, eps_pd)
    return DiagramParams(dec.A, dec.sites, dec.gamma), sol, dec.beta
