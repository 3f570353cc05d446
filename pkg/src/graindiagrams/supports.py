"""Sparse image supports: resolution and pencil coresets, interior removal.

Every construction returns an :class:`ImageSupport` whose ``owner`` maps each
voxel of the scan to the support point that represents it, so the total
weight equals the voxel count exactly and later stages (interior removal,
DiLPM instance building) can reason about the voxels behind a point.
Points are emitted in canonical order: by plurality grain, then x, y, z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .scan_stats import GrainStats, compute_boundary_distance
from .transport import BATCH, COARSE, INTERIOR, VOXEL, ImageSupport
from .volume_io import GrainScan

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
_PHI_FRAC = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class PencilParams:
    rays_per_site: int = 64
    batch_error: float = 4.0
    ellipsoidal: bool = True

    def __post_init__(self):
        if self.rays_per_site < 6:
            raise ValueError("at least 6 rays per site are required")
        if not self.batch_error > 0:
            raise ValueError("batch error must be positive")


@dataclass(frozen=True)
class ResolutionParams:
    tau: tuple

    def __post_init__(self):
        tau = tuple(int(t) for t in self.tau)
        if len(tau) != 3 or min(tau) < 1:
            raise ValueError(f"resolution must be three positive integers, got {self.tau}")
        object.__setattr__(self, "tau", tau)


@dataclass(frozen=True)
class InteriorParams:
    delta: int = 4

    def __post_init__(self):
        if int(self.delta) != self.delta or self.delta < 2:
            raise ValueError("interior removal needs an integer delta >= 2 "
                             "(delta = 1 would remove every voxel)")


def plurality(owner: np.ndarray, labels: np.ndarray, npts: int) -> np.ndarray:
    """Most frequent label among each point's voxels (lowest label on ties)."""
    key = owner.astype(np.int64) * (int(labels.max()) + 1) + labels
    uniq, counts = np.unique(key, return_counts=True)
    pt = uniq // (int(labels.max()) + 1)
    lab = uniq % (int(labels.max()) + 1)
    order = np.lexsort((lab, -counts, pt))
    pt, lab = pt[order], lab[order]
    first = np.ones(len(pt), dtype=bool)
    first[1:] = pt[1:] != pt[:-1]
    out = np.zeros(npts, dtype=np.int64)
    out[pt[first]] = lab[first]
    return out


def member_range(owner: np.ndarray, values: np.ndarray, npts: int):
    """Per-point minimum and maximum of a voxel quantity."""
    lo = np.full(npts, np.iinfo(np.int64).max, dtype=np.int64)
    hi = np.full(npts, np.iinfo(np.int64).min, dtype=np.int64)
    np.minimum.at(lo, owner, values)
    np.maximum.at(hi, owner, values)
    return lo, hi


def canonical(points, weights, kind, grain, owner) -> ImageSupport:
    """Sort points by (grain, x, y, z) and remap ``owner`` accordingly."""
    order = np.lexsort((points[:, 2], points[:, 1], points[:, 0], grain))
    inverse = np.empty_like(order)
    inverse[order] = np.arange(len(order))
    return ImageSupport(points[order], weights[order], kind[order], grain[order],
                        None if owner is None else inverse[owner])


def full_support(scan: GrainScan) -> ImageSupport:
    """Every voxel center with unit weight."""
    n = scan.n
    labels = scan.labels.astype(np.int64)
    return canonical(scan.coordinates(), np.ones(n), np.full(n, VOXEL, np.int8), labels,
                     np.arange(n))


def _axis_cells(d: int, t: int):
    """Cell index per voxel along one axis; leading cells take the remainder."""
    if not 1 <= t <= d:
        raise ValueError(f"resolution {t} must lie in [1, {d}]")
    sizes = np.full(t, d // t)
    sizes[: d % t] += 1
    cell = np.repeat(np.arange(t), sizes)
    start = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    mean_index = start + (sizes - 1) / 2.0
    return cell, sizes, mean_index


def resolution_coreset(scan: GrainScan, params: ResolutionParams) -> ImageSupport:
    """Coarse grid support: one point per coarse cell at its voxels' centroid.

    The volume is split into ``τx·τy·τz`` boxes of near-equal voxel extent;
    each point carries the number of voxels of its box.
    """
    tau = params.tau
    per_axis = [_axis_cells(d, t) for d, t in zip(scan.dims, tau)]
    (cx, sx, mx), (cy, sy, my), (cz, sz, mz) = per_axis
    nx, ny, nz = scan.dims
    idx = np.arange(scan.n)
    i, j, l = idx % nx, (idx // nx) % ny, idx // (nx * ny)
    owner = cx[i] + tau[0] * (cy[j] + tau[1] * cz[l])
    npts = tau[0] * tau[1] * tau[2]
    c = np.arange(npts)
    ci, cj, cl = c % tau[0], (c // tau[0]) % tau[1], c // (tau[0] * tau[1])
    pts = np.stack([(mx[ci] + 0.5) * scan.spacing[0],
                    (my[cj] + 0.5) * scan.spacing[1],
                    (mz[cl] + 0.5) * scan.spacing[2]], axis=1)
    weights = (sx[ci] * sy[cj] * sz[cl]).astype(float)
    grain = plurality(owner, scan.labels, npts)
    kind = np.full(npts, VOXEL if npts == scan.n else COARSE, np.int8)
    return canonical(pts, weights, kind, grain, owner)


def ray_directions(A: np.ndarray, rays: int, ellipsoidal: bool = True) -> np.ndarray:
    """Quasi-uniform ray directions per site, shape ``(k, rays, 3)``.

    A spherical Fibonacci lattice, rotated about z by a site-dependent angle.
    With ``ellipsoidal`` the unit directions are mapped through ``A_i^{-1/2}``
    so that they are spread evenly over the ellipsoid ``‖x‖_{A_i} = 1`` and
    have unit length in that metric; otherwise they are Euclidean unit vectors.
    """
    A = np.asarray(A, dtype=float).reshape(-1, 3, 3)
    q = np.arange(rays)
    z = 1.0 - (2.0 * q + 1.0) / rays
    rad = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    out = np.empty((len(A), rays, 3))
    for i, M in enumerate(A):
        phi = q * GOLDEN_ANGLE + 2.0 * math.pi * ((i * _PHI_FRAC) % 1.0)
        f = np.stack([rad * np.cos(phi), rad * np.sin(phi), z], axis=1)
        if ellipsoidal:
            lam, V = np.linalg.eigh(M)
            inv_sqrt = (V / np.sqrt(lam)) @ V.T
            u = f @ inv_sqrt.T
            u /= np.sqrt(np.einsum("ra,ab,rb->r", u, M, u))[:, None]
        else:
            u = f
        out[i] = u
    return out


@njit(cache=True)
def _greedy_batches(group, t, w, eps):
    """Batch ids for points sorted by (group, t): grow while Σω(t − t̄)² ≤ eps."""
    n = t.shape[0]
    out = np.empty(n, dtype=np.int64)
    b = -1
    W = 0.0
    mean = 0.0
    m2 = 0.0
    prev = -1
    for p in range(n):
        if group[p] != prev:
            prev = group[p]
            b += 1
            W = w[p]
            mean = t[p]
            m2 = 0.0
            out[p] = b
            continue
        W2 = W + w[p]
        delta = t[p] - mean
        mean2 = mean + delta * w[p] / W2
        m22 = m2 + w[p] * delta * (t[p] - mean2)
        if m22 > eps:
            b += 1
            W = w[p]
            mean = t[p]
            m2 = 0.0
        else:
            W = W2
            mean = mean2
            m2 = m22
        out[p] = b
    return out


def pencil_batches(points, weights, sites, A, directions, batch_error: float,
                   error_scale=None):
    """Project points onto pencils of rays and merge them into batches.

    Parameters
    ----------
    points, weights : array_like
        Input points ``(n, 3)`` and weights.
    sites, A : array_like
        Pencil apexes and the metric of each site (used for the assignment to
        the nearest site, for projection and for the batch error).
    directions : array_like
        ``(k, r, 3)`` ray directions per site.
    batch_error : float
        Upper bound on ``Σ_{x∈B} ω_x ‖x − c(B)‖²_{A_i}`` per batch.
    error_scale : array_like, optional
        Per-site factor applied to the batch error (default 1).

    Returns
    -------
    centers : (b, 3) batch centroids, lying on their rays
    bweights : (b,) summed weights
    owner : (n,) batch index of each input point
    site, ray : (b,) pencil and ray of each batch
    """
    X = np.asarray(points, dtype=float).reshape(-1, 3)
    w = np.asarray(weights, dtype=float)
    S = np.asarray(sites, dtype=float).reshape(-1, 3)
    A = np.asarray(A, dtype=float).reshape(-1, 3, 3)
    U = np.asarray(directions, dtype=float)
    n, k = len(X), len(S)
    site = np.empty(n, dtype=np.int64)
    chunk = 1 << 15
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        C = np.empty((len(X[sl]), k))
        for i in range(k):
            d = X[sl] - S[i]
            C[:, i] = np.einsum("na,ab,nb->n", d, A[i], d)
        site[sl] = np.argmin(C, axis=1)
    ray = np.zeros(n, dtype=np.int64)
    t = np.zeros(n)
    for i in range(k):
        sel = np.flatnonzero(site == i)
        if not len(sel):
            continue
        V = X[sel] - S[i]
        AU = U[i] @ A[i]                               # (r, 3)
        unorm = np.einsum("ra,ra->r", AU, U[i])        # ‖u‖²_A
        T = (V @ AU.T) / unorm                         # projection parameters
        # nearest ray in the metric: maximal ⟨v, u⟩_A / ‖u‖_A
        q = np.argmax(T * np.sqrt(unorm), axis=1)
        ray[sel] = q
        t[sel] = T[np.arange(len(sel)), q]
    group = site * U.shape[1] + ray
    order = np.lexsort((np.arange(n), t, group))
    # error along a ray scales with ‖u‖²_A
    unorm_all = np.einsum("kra,kab,krb->kr", U, A, U)
    if error_scale is not None:
        unorm_all = unorm_all * np.asarray(error_scale, dtype=float)[:, None]
    unorm_all = unorm_all.ravel()
    scale = unorm_all[group[order]]
    bid_sorted = _greedy_batches(group[order], t[order] * np.sqrt(scale), w[order],
                                 float(batch_error) if np.isfinite(batch_error) else np.inf)
    owner = np.empty(n, dtype=np.int64)
    owner[order] = bid_sorted
    nb = int(bid_sorted[-1]) + 1 if n else 0
    bw = np.bincount(owner, weights=w, minlength=nb)
    tbar = np.bincount(owner, weights=w * t, minlength=nb) / bw
    bgroup = np.zeros(nb, dtype=np.int64)
    bgroup[owner] = group
    bsite, bray = bgroup // U.shape[1], bgroup % U.shape[1]
    centers = S[bsite] + tbar[:, None] * U[bsite, bray]
    return centers, bw, owner, bsite, bray


def pencil_coreset(scan: GrainScan, stats: GrainStats, params: PencilParams,
                   A=None, sites=None) -> ImageSupport:
    """Pencil coreset of the scan's voxels.

    Pencils sit at ``sites`` with metrics ``A``, by default the grain
    centroids and precisions of ``stats``. The batch error is measured in the
    shape of each metric scaled to unit determinant, so ``batch_error`` is in
    µm² whatever the overall scale of ``A``.
    """
    A = stats.precisions if A is None else np.asarray(A, dtype=float)
    sites = stats.centroids if sites is None else np.asarray(sites, dtype=float)
    metric = A if params.ellipsoidal else np.broadcast_to(np.eye(3), A.shape)
    scale = 1.0 / np.cbrt(np.linalg.det(metric))
    U = ray_directions(metric, params.rays_per_site, params.ellipsoidal)
    centers, bw, owner, _, _ = pencil_batches(scan.coordinates(), np.ones(scan.n), sites, metric,
                                              U, params.batch_error, scale)
    grain = plurality(owner, scan.labels, len(bw))
    return canonical(centers, bw, np.full(len(bw), BATCH, np.int8), grain, owner)


def interior_removal(scan: GrainScan, stats: GrainStats, field: Optional[np.ndarray],
                     support: ImageSupport, params: InteriorParams) -> ImageSupport:
    """Replace support points lying deep inside one grain by grain representatives.

    A point is removed iff all of its voxels belong to one grain and have
    boundary distance ``>= delta``. Per grain, the removed weight is carried
    by one new point at the grain centroid.
    """
    if support.owner is None:
        raise ValueError("interior removal needs a support with voxel provenance")
    if field is None:
        field = compute_boundary_distance(scan)
    npts = len(support)
    owner = support.owner
    lab_lo, lab_hi = member_range(owner, scan.labels.astype(np.int64), npts)
    dist_lo, _ = member_range(owner, np.asarray(field, dtype=np.int64), npts)
    removable = (lab_lo == lab_hi) & (dist_lo >= params.delta)
    keep = np.flatnonzero(~removable)
    removed_w = np.bincount(lab_lo[removable], weights=support.weights[removable],
                            minlength=scan.k + 1)[1:]
    reps = np.flatnonzero(removed_w > 0)
    new_index = np.full(npts, -1, dtype=np.int64)
    new_index[keep] = np.arange(len(keep))
    rep_index = np.full(scan.k + 1, -1, dtype=np.int64)
    rep_index[reps + 1] = len(keep) + np.arange(len(reps))
    new_index[removable] = rep_index[lab_lo[removable]]
    pts = np.vstack([support.points[keep], stats.centroids[reps]])
    w = np.concatenate([support.weights[keep], removed_w[reps]])
    kind = np.concatenate([support.kind[keep], np.full(len(reps), INTERIOR, np.int8)])
    grain = np.concatenate([support.grain[keep], reps + 1])
    return canonical(pts, w, kind, grain, new_index[owner])


def advisory_tau(k: int, eps: float) -> int:
    """Per-axis resolution ``⌈2^{8/3} k / ε^{2/3}⌉`` guaranteeing an ε-coreset."""
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    if k < 1:
        raise ValueError("k must be positive")
    return math.ceil(2.0 ** (8.0 / 3.0) * k / eps ** (2.0 / 3.0))


def combined_support(scan: GrainScan, stats: GrainStats, strategy: str = "none",
                     pencil: Optional[PencilParams] = None,
                     resolution: Optional[ResolutionParams] = None,
                     interior: Optional[InteriorParams] = None,
                     field: Optional[np.ndarray] = None, A=None, sites=None) -> ImageSupport:
    """Coreset construction (``none``, ``pencil`` or ``resolution``), then
    optional interior removal. ``A`` and ``sites`` place the pencils."""
    if strategy == "none":
        support = full_support(scan)
    elif strategy == "pencil":
        support = pencil_coreset(scan, stats, pencil or PencilParams(), A, sites)
    elif strategy == "resolution":
        if resolution is None:
            raise ValueError("resolution strategy needs ResolutionParams")
        support = resolution_coreset(scan, resolution)
    else:
        raise ValueError(f"unknown support strategy {strategy!r}")
    if interior is not None:
        support = interior_removal(scan, stats, field, support, interior)
    return support
