"""Weight-constrained anisotropic assignment as a transportation problem.

Points with weights ``ω_j`` are shipped to clusters with demands ``κ_i`` at
unit cost ``‖x_j − s_i‖²_{A_i}``. The optimal duals ``γ_i`` are the sizes of
an anisotropic power diagram compatible with the optimal clustering.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _netsimplex as ns
from .apd import DiagramParams, h_matrix
from .volume_io import PathLike

log = logging.getLogger(__name__)

# provenance of support points
VOXEL, BATCH, COARSE, INTERIOR = 0, 1, 2, 3
KIND_NAMES = {VOXEL: "voxel", BATCH: "batch", COARSE: "coarse", INTERIOR: "interior"}

_CHUNK = 1 << 15


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ImageSupport:
    """Weighted point set fed to the assignment LP.

    ``kind`` records how each point was made (see module constants),
    ``grain`` its plurality grain label (0 if unknown) and ``owner`` maps every
    voxel of the originating scan to the support point that represents it.
    """

    points: np.ndarray
    weights: np.ndarray
    kind: Optional[np.ndarray] = None
    grain: Optional[np.ndarray] = None
    owner: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(w) != len(pts):
            raise ValueError("points and weights differ in length")
        if not np.isfinite(pts).all():
            raise ValueError("support coordinates must be finite")
        if not (w > 0).all():
            raise ValueError("support weights must be positive")
        kind = np.zeros(len(w), np.int8) if self.kind is None else np.asarray(self.kind, np.int8)
        grain = np.zeros(len(w), np.int64) if self.grain is None else np.asarray(self.grain, np.int64)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "grain", grain)
        if self.owner is not None:
            object.__setattr__(self, "owner", np.asarray(self.owner, np.int64))

    def __len__(self):
        return len(self.weights)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def to_json(self) -> dict:
        return {"points": [{"x": p.tolist(), "weight": float(w), "kind": KIND_NAMES[int(c)],
                            "grain": int(g)}
                           for p, w, c, g in zip(self.points, self.weights, self.kind, self.grain)]}

    def save(self, path: PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)


@dataclass(frozen=True)
class Clustering:
    """Sparse fractional assignment: ``xi[t]`` of point ``point[t]`` goes to
    cluster ``cluster[t]`` (0-based)."""

    cluster: np.ndarray
    point: np.ndarray
    xi: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    def dense(self, n: int, k: int) -> np.ndarray:
        out = np.zeros((k, n))
        np.add.at(out, (self.cluster, self.point), self.xi)
        return out

    def cluster_weights(self, weights, k: int) -> np.ndarray:
        return np.bincount(self.cluster, weights=self.xi * np.asarray(weights)[self.point],
                           minlength=k)

    def fractional_points(self) -> np.ndarray:
        counts = np.bincount(self.point)
        return np.flatnonzero(counts >= 2)

    def hard_labels(self, n: int) -> np.ndarray:
        """1-based label of the largest share of each point."""
        lab = np.zeros(n, dtype=np.int64)
        best = np.full(n, -1.0)
        for c, p, x in zip(self.cluster, self.point, self.xi):
            if x > best[p]:
                best[p] = x
                lab[p] = c + 1
        return lab

    def to_json(self) -> dict:
        return {"triplets": [[int(c), int(p), float(x)]
                             for c, p, x in zip(self.cluster, self.point, self.xi)],
                "info": self.info}


@dataclass(frozen=True)
class DualSolution:
    eta: np.ndarray
    gamma: np.ndarray

    def to_json(self) -> dict:
        return {"eta": self.eta.tolist(), "gamma": self.gamma.tolist()}


def target_weights(kappa, total: float) -> np.ndarray:
    """Rescale ``kappa`` so that it sums to ``total``."""
    kap = np.asarray(kappa, dtype=float)
    if (kap <= 0).any():
        raise ValueError("cluster weights must be positive")
    return kap * (total / kap.sum())


def _candidates(points, A, sites, m):
    """Each point's ``m`` cheapest sites, sorted by cost then site index."""
    n, k = len(points), len(sites)
    m = min(m, k)
    cand = np.empty((n, m), dtype=np.int64)
    cost = np.empty((n, m))
    second = np.full(n, np.inf)
    zeros = np.zeros(k)
    for start in range(0, n, _CHUNK):
        sl = slice(start, start + _CHUNK)
        C = h_matrix(A, sites, zeros, points[sl])
        if m < k:
            part = np.argpartition(C, m - 1, axis=1)[:, :m]
        else:
            part = np.broadcast_to(np.arange(k), C.shape)
        # rows sorted by (cost, site index): index sort first, then stable cost sort
        part = np.sort(part, axis=1)
        pc = np.take_along_axis(C, part, axis=1)
        idx = np.argsort(pc, axis=1, kind="stable")
        cand[sl] = np.take_along_axis(part, idx, axis=1)
        cost[sl] = np.take_along_axis(pc, idx, axis=1)
        if k > 1:
            second[sl] = np.partition(C, 1, axis=1)[:, 1]
    return cand, cost, second


def _min_reduced(points, A, sites, gamma):
    """``min_i (c_ji + γ_i)`` and its argmin over all sites, chunked."""
    n = len(points)
    val = np.empty(n)
    arg = np.empty(n, dtype=np.int64)
    for start in range(0, n, _CHUNK):
        sl = slice(start, start + _CHUNK)
        H = h_matrix(A, sites, gamma, points[sl])
        arg[sl] = np.argmin(H, axis=1)
        val[sl] = np.take_along_axis(H, arg[sl, None], axis=1)[:, 0]
    return val, arg


def solve_wcaa(support: ImageSupport, A, sites, kappa, candidates: int = 8,
               max_pivots: Optional[int] = None, center: bool = True):
    """Optimal basic solution of the weight-constrained assignment LP.

    Parameters
    ----------
    support : ImageSupport
        Points and weights ``ω_j``.
    A, sites : array_like
        Per-cluster shape matrices ``(k, 3, 3)`` and sites ``(k, 3)``.
    kappa : array_like
        Cluster weights; rescaled to the support's total weight.
    candidates : int
        Arcs initially priced per point (the cheapest sites). The set is
        doubled until every arc of the full problem has non-negative reduced
        cost.
    center : bool
        Replace the vertex duals by the centered ones of :func:`center_duals`.

    Returns
    -------
    clustering : Clustering
    duals : DualSolution
        Normalized so that ``min γ = 0``.
    objective : float
    """
    if candidates < 1:
        raise ValueError("candidates must be >= 1")
    X = np.ascontiguousarray(support.points)
    w = np.ascontiguousarray(support.weights)
    A = np.ascontiguousarray(np.asarray(A, dtype=float).reshape(-1, 3, 3))
    S = np.ascontiguousarray(np.asarray(sites, dtype=float).reshape(-1, 3))
    n, k = len(X), len(S)
    if n == 0:
        raise ValueError("empty support")
    demand = target_weights(kappa, w.sum())
    if len(demand) != k:
        raise ValueError("kappa and sites differ in length")

    m = min(int(candidates), k)
    cand, cand_cost, second = _candidates(X, A, S, m)
    cost_scale = max(float(np.abs(cand_cost[:, 0]).max()), float(np.median(second[np.isfinite(second)]))
                     if k > 1 else 0.0, 1e-300)
    tol_r = 1e-11 * cost_scale
    tol_f = 1e-12 * float(w.max())

    regret = second - cand_cost[:, 0] if k > 1 else np.zeros(n)
    order = np.lexsort((np.arange(n), -regret, cand[:, 0])).astype(np.int64)

    leaf_site = np.full(n, -1, dtype=np.int64)
    leaf_cost = np.zeros(n)
    cap = 2 * k + 8
    core_j = np.zeros(cap, dtype=np.int64)
    core_i = np.zeros(cap, dtype=np.int64)
    core_f = np.zeros(cap)
    core_c = np.zeros(cap)
    nc = ns.northwest_corner(order, w, demand, tol_f, leaf_site, core_j, core_i, core_f)
    leaves = np.flatnonzero(leaf_site >= 0)
    d = X[leaves] - S[leaf_site[leaves]]
    leaf_cost[leaves] = np.einsum("na,nab,nb->n", d, A[leaf_site[leaves]], d)
    for a in range(nc):
        core_c[a] = ns.arc_cost(X, S, A, core_j[a], core_i[a])

    pos_of = np.full(n, -1, dtype=np.int64)
    node_pt = np.zeros(cap, dtype=np.int64)
    gamma = np.zeros(k)
    eta = np.zeros(n)
    par_node = np.zeros(cap, dtype=np.int64)
    par_arc = np.zeros(cap, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    nn = ns.rebuild_core(k, core_j, core_i, core_c, nc, pos_of, node_pt, k,
                         gamma, eta, par_node, par_arc, depth)
    if nn < 0:
        raise SolverError("initial basis is not a spanning tree")
    nc_box = np.array([nc], dtype=np.int64)
    nn_box = np.array([nn], dtype=np.int64)
    stats = np.zeros(3, dtype=np.int64)
    if max_pivots is None:
        max_pivots = 50 * (n + k) + 10_000
    rounds = 0
    while True:
        rounds += 1
        block = max(64, int(np.sqrt(n * m) / m))
        status = ns.run_simplex(X, S, A, w, cand, cand_cost, leaf_site, leaf_cost,
                                core_j, core_i, core_f, core_c, nc_box, pos_of, node_pt,
                                nn_box, gamma, eta, par_node, par_arc, depth,
                                tol_r, tol_f, max_pivots - stats[0], block, 100 + 2 * k, stats)
        if status == ns.PIVOT_CAP:
            raise SolverError(f"pivot cap of {max_pivots} reached without optimality")
        if status == ns.BROKEN_BASIS:
            raise SolverError("basis lost the spanning-tree property")
        eta_all = _point_potentials(leaf_site, leaf_cost, eta, gamma)
        best, _ = _min_reduced(X, A, S, gamma)
        violated = int(np.count_nonzero(eta_all - best > tol_r))
        log.debug("round %d with %d candidates: %d pivots, %d violating points",
                  rounds, m, stats[0], violated)
        if violated == 0:
            break
        if m == k:
            raise SolverError("optimality over the full arc set could not be certified")
        m = min(2 * m, k)
        cand, cand_cost, _ = _candidates(X, A, S, m)

    nc = int(nc_box[0])
    leaves = np.flatnonzero(leaf_site >= 0)
    core = np.flatnonzero(core_f[:nc] > tol_f)
    cl = np.concatenate([leaf_site[leaves], core_i[:nc][core]])
    pt = np.concatenate([leaves, core_j[:nc][core]])
    flow = np.concatenate([w[leaves], core_f[:nc][core]])
    order = np.lexsort((cl, pt))
    cl, pt, flow = cl[order], pt[order], flow[order]
    objective = float(w[leaves] @ leaf_cost[leaves] + core_f[:nc] @ core_c[:nc])

    eta_all = _point_potentials(leaf_site, leaf_cost, eta, gamma)
    duals = DualSolution(eta_all, gamma.copy())
    if center:
        centered = center_duals(X, A, S, cl, pt, gamma)
        if centered is not None:
            best, _ = _min_reduced(X, A, S, centered)
            if np.abs(best[pt] - cost_of(X, A, S, cl, pt) - centered[cl]).max() <= 1e3 * tol_r:
                duals = DualSolution(best, centered)
    shift = duals.gamma.min()
    duals = DualSolution(duals.eta - shift, duals.gamma - shift)
    info = {"pivots": int(stats[0]), "degenerate_pivots": int(stats[1]),
            "bland_pivots": int(stats[2]), "rounds": rounds, "candidates": m,
            "cost_scale": cost_scale, "kappa_scaled": demand.tolist()}
    clustering = Clustering(cl, pt, flow / w[pt], info)
    return clustering, duals, objective


def cost_of(X, A, S, cl, pt):
    d = X[pt] - S[cl]
    return np.einsum("na,nab,nb->n", d, A[cl], d)


def center_duals(X, A, S, cl, pt, gamma):
    """Move ``γ`` to the middle of the optimal dual face.

    Given the primal support, optimal sizes are exactly the solutions of
    ``γ_i − γ_l ≤ D_il = min_{j ∈ supp C_i} (c_lj − c_ij)``. Shortest-path
    potentials rooted at each cluster are extreme solutions; their average
    over all roots, in both edge directions, is feasible and keeps points
    off cell boundaries wherever the support does not force a tie.
    """
    k = len(S)
    if k == 1:
        return np.zeros(1)
    D = np.full((k, k), np.inf)
    for start in range(0, len(pt), _CHUNK):
        sl = slice(start, start + _CHUNK)
        C = h_matrix(A, S, np.zeros(k), X[pt[sl]])
        own = np.take_along_axis(C, cl[sl, None], axis=1)
        np.minimum.at(D, cl[sl], C - own)
    # edge l -> i with weight D[i, l]
    dist = D.T.copy()
    np.fill_diagonal(dist, 0.0)
    for m in range(k):
        np.minimum(dist, dist[:, m:m + 1] + dist[m:m + 1, :], out=dist)
    if not np.isfinite(dist).all() or (np.diag(dist) < 0).any():
        return None
    return 0.5 * (dist.mean(axis=0) - dist.mean(axis=1))


def _point_potentials(leaf_site, leaf_cost, eta, gamma):
    out = eta.copy()
    leaves = leaf_site >= 0
    out[leaves] = leaf_cost[leaves] + gamma[leaf_site[leaves]]
    return out


def primal_objective(support: ImageSupport, A, sites, clustering: Clustering) -> float:
    pts = support.points[clustering.point]
    c = np.empty(len(pts))
    for i in np.unique(clustering.cluster):
        sel = clustering.cluster == i
        d = pts[sel] - np.asarray(sites)[i]
        c[sel] = np.einsum("na,ab,nb->n", d, np.asarray(A)[i], d)
    return float(np.sum(clustering.xi * support.weights[clustering.point] * c))


def dual_objective(support: ImageSupport, kappa, duals: DualSolution) -> float:
    demand = target_weights(kappa, support.total_weight)
    return float(support.weights @ duals.eta - demand @ duals.gamma)


def diagram_from_duals(A, sites, duals: DualSolution) -> DiagramParams:
    """Diagram with the given shapes and sites and sizes ``Γ = γ``."""
    return DiagramParams(A, sites, duals.gamma)


def check_complementary_slackness(support: ImageSupport, A, sites, clustering: Clustering,
                                  duals: DualSolution):
    """Return ``(slackness residual, dual infeasibility)``.

    The residual is ``max |η_j − c_ij − γ_i|`` over arcs with ``ξ_ij > 0``;
    the infeasibility is ``max(0, max_ij η_j − c_ij − γ_i)`` over all arcs.
    """
    A = np.asarray(A, dtype=float).reshape(-1, 3, 3)
    S = np.asarray(sites, dtype=float).reshape(-1, 3)
    X = support.points
    resid = 0.0
    for i in np.unique(clustering.cluster):
        sel = clustering.cluster == i
        j = clustering.point[sel]
        d = X[j] - S[i]
        h = np.einsum("na,ab,nb->n", d, A[i], d) + duals.gamma[i]
        resid = max(resid, float(np.abs(duals.eta[j] - h).max()))
    best, _ = _min_reduced(X, A, S, duals.gamma)
    infeas = max(0.0, float((duals.eta - best).max()))
    return resid, infeas
