"""Per-grain measurements, grain adjacency and grid-graph boundary distances."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .volume_io import GrainScan, PathLike

RIDGE_EPS = 1e-8
NO_BOUNDARY = np.iinfo(np.int32).max

_CHUNK = 1 << 20


@dataclass(frozen=True)
class GrainStats:
    """Cardinality, centroid, covariance and precision of every grain.

    Arrays are indexed by ``grain - 1``.
    """

    kappa: np.ndarray        # (k,)
    centroids: np.ndarray    # (k, 3) µm
    covariances: np.ndarray  # (k, 3, 3) µm²
    precisions: np.ndarray   # (k, 3, 3) µm⁻²

    @property
    def k(self) -> int:
        return len(self.kappa)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "grains": [
                {"label": i + 1,
                 "kappa": int(self.kappa[i]),
                 "centroid": self.centroids[i].tolist(),
                 "covariance": self.covariances[i].ravel().tolist()}
                for i in range(self.k)
            ],
        }

    def save(self, path: PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def from_json(cls, doc: dict) -> "GrainStats":
        grains = sorted(doc["grains"], key=lambda g: g["label"])
        kappa = np.array([g["kappa"] for g in grains], dtype=np.int64)
        cent = np.array([g["centroid"] for g in grains], dtype=float)
        cov = np.array([g["covariance"] for g in grains], dtype=float).reshape(-1, 3, 3)
        return cls(kappa, cent, cov, regularized_precision(cov, kappa))

    @classmethod
    def load(cls, path: PathLike) -> "GrainStats":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def regularized_precision(covariances: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    """Inverse of ``Σ + ε·tr(Σ)/3·I``; ε = 1e-8, or 1 for grains under 4 voxels.

    A single-voxel grain has Σ = 0, for which the ridge collapses and the
    identity scaled by ``1/ε`` is returned instead.
    """
    cov = np.asarray(covariances, dtype=float)
    out = np.empty_like(cov)
    eye = np.eye(3)
    for i, (S, kap) in enumerate(zip(cov, kappa)):
        eps = 1.0 if kap < 4 else RIDGE_EPS
        ridge = eps * np.trace(S) / 3.0
        if ridge <= 0.0:
            out[i] = eye / eps
            continue
        R = S + ridge * eye
        out[i] = np.linalg.inv(R)
        out[i] = 0.5 * (out[i] + out[i].T)
    return out


def weighted_moments(points: np.ndarray, labels: np.ndarray, k: int, weights=None):
    """Counts, means and centered second moments of labelled points.

    Labels run from 1 to ``k``; label 0 is ignored. Empty groups get NaN means
    and zero covariance.
    """
    labels = np.asarray(labels)
    w = np.ones(len(labels)) if weights is None else np.asarray(weights, dtype=float)
    w = np.where(labels > 0, w, 0.0)
    mass = np.bincount(labels, weights=w, minlength=k + 1)[1:]
    sums = np.stack([np.bincount(labels, weights=w * points[:, a], minlength=k + 1)[1:]
                     for a in range(3)], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / mass[:, None]
    cov = np.zeros((k, 3, 3))
    safe = np.where(mass > 0, mass, 1.0)
    centered_means = np.vstack([np.zeros(3), np.nan_to_num(means)])
    d = points - centered_means[labels]
    for a, b in itertools.combinations_with_replacement(range(3), 2):
        m = np.bincount(labels, weights=w * d[:, a] * d[:, b], minlength=k + 1)[1:] / safe
        cov[:, a, b] = m
        cov[:, b, a] = m
    return mass, means, cov


def compute_stats(scan: GrainScan) -> GrainStats:
    """Grain cardinalities κ, centroids, covariances and regularized precisions.

    Covariances are centered second moments divided by κ. Moments are
    accumulated in two passes (means first) over fixed voxel chunks, so the
    result does not depend on traversal order beyond rounding.
    """
    k = scan.k
    kappa = scan.kappa().astype(np.int64)
    sums = np.zeros((k, 3))
    for start in range(0, scan.n, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, scan.n))
        lab = scan.labels[idx]
        pts = scan.coordinates(idx)
        for a in range(3):
            sums[:, a] += np.bincount(lab, weights=pts[:, a], minlength=k + 1)[1:]
    safe = np.where(kappa > 0, kappa, 1)
    centroids = sums / safe[:, None]
    second = np.zeros((k, 6))
    pairs = list(itertools.combinations_with_replacement(range(3), 2))
    padded = np.vstack([np.zeros(3), centroids])
    for start in range(0, scan.n, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, scan.n))
        lab = scan.labels[idx]
        d = scan.coordinates(idx) - padded[lab]
        for p, (a, b) in enumerate(pairs):
            second[:, p] += np.bincount(lab, weights=d[:, a] * d[:, b], minlength=k + 1)[1:]
    cov = np.zeros((k, 3, 3))
    for p, (a, b) in enumerate(pairs):
        cov[:, a, b] = cov[:, b, a] = second[:, p] / safe
    return GrainStats(kappa, centroids, cov, regularized_precision(cov, kappa))


@dataclass(frozen=True)
class NeighborGraph:
    """26-adjacency between grains, plus which grains avoid the volume faces."""

    k: int
    edges: frozenset          # of (i, l) label pairs with i < l
    interior: np.ndarray      # (k,) bool, index = label - 1

    def neighbors(self, label: int) -> set:
        return {b if a == label else a for a, b in self.edges if label in (a, b)}

    def adjacency(self) -> list[set]:
        """Neighbor sets indexed by ``label - 1``."""
        adj = [set() for _ in range(self.k)]
        for a, b in self.edges:
            adj[a - 1].add(b)
            adj[b - 1].add(a)
        return adj

    def is_connected(self) -> bool:
        adj = self.adjacency()
        seen = {1}
        stack = [1]
        while stack:
            v = stack.pop()
            for w in adj[v - 1]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.k


# 13 offsets: one from each ± pair of the 26-neighbourhood
_HALF_26 = [o for o in itertools.product((-1, 0, 1), repeat=3) if o > (0, 0, 0)]


def _shifted_pairs(vol: np.ndarray, offset) -> tuple[np.ndarray, np.ndarray]:
    src, dst = [], []
    for d, o in zip(vol.shape, offset):
        if o >= 0:
            src.append(slice(0, d - o))
            dst.append(slice(o, d))
        else:
            src.append(slice(-o, d))
            dst.append(slice(0, d + o))
    return vol[tuple(src)].ravel(), vol[tuple(dst)].ravel()


def label_adjacency(volume: np.ndarray, k: int) -> frozenset:
    """Pairs of distinct non-zero labels that touch under 26-adjacency."""
    found = set()
    for off in _HALF_26:
        a, b = _shifted_pairs(volume, off)
        m = (a != b) & (a > 0) & (b > 0)
        if not m.any():
            continue
        lo = np.minimum(a[m], b[m]).astype(np.int64)
        hi = np.maximum(a[m], b[m]).astype(np.int64)
        for key in np.unique(lo * (k + 1) + hi):
            found.add((int(key // (k + 1)), int(key % (k + 1))))
    return frozenset(found)


def compute_neighbors(scan: GrainScan) -> NeighborGraph:
    vol = scan.volume
    edges = label_adjacency(vol, scan.k)
    on_face = np.zeros(scan.k + 1, dtype=bool)
    for ax in range(3):
        for idx in (0, vol.shape[ax] - 1):
            on_face[np.unique(np.take(vol, idx, axis=ax))] = True
    return NeighborGraph(scan.k, edges, ~on_face[1:])


def _face_sources(vol: np.ndarray) -> np.ndarray:
    src = np.zeros(vol.shape, dtype=bool)
    for ax in range(3):
        n = vol.shape[ax]
        if n < 2:
            continue
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, n - 1)
        hi[ax] = slice(1, n)
        diff = vol[tuple(lo)] != vol[tuple(hi)]
        src[tuple(lo)] |= diff
        src[tuple(hi)] |= diff
    return src


def compute_boundary_distance(scan: GrainScan) -> np.ndarray:
    """Grid-graph distance from each voxel to the nearest differently labeled one.

    Multi-source breadth-first search over the 6-connected grid, seeded with
    every voxel that has a differently labeled face neighbour (distance 1).
    Returns a flat int32 array in scan order; voxels of a volume without any
    label change hold ``NO_BOUNDARY``.
    """
    vol = scan.volume
    dist = np.full(vol.shape, NO_BOUNDARY, dtype=np.int32)
    frontier = _face_sources(vol)
    level = 1
    while frontier.any():
        dist[frontier] = level
        grown = frontier.copy()
        for ax in range(3):
            n = vol.shape[ax]
            if n < 2:
                continue
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[ax] = slice(0, n - 1)
            hi[ax] = slice(1, n)
            grown[tuple(lo)] |= frontier[tuple(hi)]
            grown[tuple(hi)] |= frontier[tuple(lo)]
        frontier = grown & (dist == NO_BOUNDARY)
        level += 1
    return dist.ravel(order="F")


def delta_interior_mask(field: np.ndarray, delta: int) -> np.ndarray:
    """Voxels whose boundary distance is at least ``delta``."""
    if int(delta) != delta or delta < 1:
        raise ValueError(f"delta must be a positive integer, got {delta}")
    return np.asarray(field) >= delta
