"""Anisotropic power diagrams: evaluation, classification, rasterization."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .volume_io import GrainScan, PathLike, voxel_centers

TIE_REL = 1e-9
SPD_REL = 1e-12

_CHUNK = 1 << 16


class DiagramError(ValueError):
    pass


def _check_spd(A: np.ndarray) -> None:
    for i, M in enumerate(A):
        if not np.allclose(M, M.T, rtol=0, atol=SPD_REL * max(np.abs(M).max(), 1e-300)):
            raise DiagramError(f"matrix of cell {i + 1} is not symmetric")
        lam = np.linalg.eigvalsh(M)
        if lam[0] <= SPD_REL * np.linalg.norm(M, 2):
            raise DiagramError(f"matrix of cell {i + 1} is not positive definite "
                               f"(smallest eigenvalue {lam[0]:.3g})")


@dataclass(frozen=True, eq=False)
class DiagramParams:
    """Shape matrices ``A`` (k,3,3), sites (k,3) and sizes ``gamma`` (k,).

    Cell ``i`` (1-based label ``i+1``) is governed by
    ``h_i(x) = (x - s_i)ᵀ A_i (x - s_i) + γ_i``.
    """

    A: np.ndarray
    sites: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float).reshape(-1, 3, 3)
        S = np.array(self.sites, dtype=float).reshape(-1, 3)
        g = np.array(self.gamma, dtype=float).reshape(-1)
        if not (len(A) == len(S) == len(g)) or len(A) == 0:
            raise DiagramError("A, sites and gamma must describe the same positive number of cells")
        if not (np.isfinite(A).all() and np.isfinite(S).all() and np.isfinite(g).all()):
            raise DiagramError("diagram parameters must be finite")
        _check_spd(A)
        if len(np.unique(S, axis=0)) != len(S):
            raise DiagramError("sites must be pairwise distinct")
        for arr in (A, S, g):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "sites", S)
        object.__setattr__(self, "gamma", g)

    @property
    def k(self) -> int:
        return len(self.gamma)

    def to_json(self) -> dict:
        return {"cells": [{"A": self.A[i].ravel().tolist(),
                           "s": self.sites[i].tolist(),
                           "gamma": float(self.gamma[i])} for i in range(self.k)]}

    @classmethod
    def from_json(cls, doc: dict) -> "DiagramParams":
        cells = doc["cells"]
        return cls(np.array([c["A"] for c in cells]).reshape(-1, 3, 3),
                   np.array([c["s"] for c in cells]),
                   np.array([c["gamma"] for c in cells]))

    def save(self, path: PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path: PathLike) -> "DiagramParams":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def h_matrix(self, points) -> np.ndarray:
        """All diagram functions at all points, shape ``(n, k)``."""
        return h_matrix(self.A, self.sites, self.gamma, points)


def h_matrix(A, sites, gamma, points) -> np.ndarray:
    x = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty((len(x), len(gamma)))
    for i in range(len(gamma)):
        d = x - sites[i]
        out[:, i] = np.einsum("na,ab,nb->n", d, A[i], d) + gamma[i]
    return out


def h_value(params: DiagramParams, i: int, x) -> float:
    """``‖x − s_i‖²_{A_i} + γ_i`` for the 0-based cell index ``i``."""
    d = np.asarray(x, dtype=float) - params.sites[i]
    return float(d @ params.A[i] @ d + params.gamma[i])


class ClassificationResult(NamedTuple):
    label: int
    margin: float


def _best_two(H: np.ndarray):
    if H.shape[1] == 1:
        return np.zeros(len(H), dtype=np.int64), H[:, 0], np.full(len(H), np.inf)
    part = np.argpartition(H, 1, axis=1)[:, :2]
    a = np.take_along_axis(H, part, axis=1)
    swap = (a[:, 1] < a[:, 0]) | ((a[:, 1] == a[:, 0]) & (part[:, 1] < part[:, 0]))
    best = np.where(swap, part[:, 1], part[:, 0])
    hb = np.where(swap, a[:, 1], a[:, 0])
    hs = np.where(swap, a[:, 0], a[:, 1])
    return best, hb, hs


def default_tie_tol(h_best: np.ndarray) -> float:
    """``1e-9 × median |h_best|``; 1e-9 if that median is zero."""
    scale = float(np.median(np.abs(h_best))) if len(h_best) else 0.0
    return TIE_REL * (scale if scale > 0 else 1.0)


def classify(params: DiagramParams, x, tie_tol: Optional[float] = None) -> ClassificationResult:
    """Label of the unique minimizing cell of ``x``, or 0 on a (near) tie.

    The default tolerance is relative to the median magnitude of the ``k``
    diagram function values at ``x``.
    """
    H = params.h_matrix(x)
    best, hb, hs = _best_two(H)
    margin = float(hs[0] - hb[0])
    if tie_tol is None:
        tie_tol = default_tie_tol(H[0])
    if tie_tol < 0:
        raise ValueError("tie_tol must be non-negative")
    label = int(best[0]) + 1 if margin > tie_tol else 0
    return ClassificationResult(label, margin)


def classify_points(params: DiagramParams, points, tie_tol: Optional[float] = None):
    """Vectorized :func:`classify`; returns ``(labels, margins)``.

    With the default tolerance the scale is the median best value over the
    whole batch, so one tolerance applies to every point.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    best = np.empty(len(pts), dtype=np.int64)
    hb = np.empty(len(pts))
    hs = np.empty(len(pts))
    for start in range(0, len(pts), _CHUNK):
        sl = slice(start, start + _CHUNK)
        best[sl], hb[sl], hs[sl] = _best_two(params.h_matrix(pts[sl]))
    margin = hs - hb
    if tie_tol is None:
        tie_tol = default_tie_tol(hb)
    if tie_tol < 0:
        raise ValueError("tie_tol must be non-negative")
    labels = np.where(margin > tie_tol, best + 1, 0)
    return labels, margin


def rasterize(params: DiagramParams, dims: Sequence[int], spacing: Sequence[float],
              tie_tol: Optional[float] = None) -> GrainScan:
    """Classify every voxel center; label 0 marks (near) ties."""
    pts = voxel_centers(dims, spacing)
    labels, _ = classify_points(params, pts, tie_tol)
    return GrainScan(dims, spacing, labels, k=params.k, allow_unassigned=True)


def voronoi(sites) -> DiagramParams:
    S = np.asarray(sites, dtype=float).reshape(-1, 3)
    return DiagramParams(np.broadcast_to(np.eye(3), (len(S), 3, 3)), S, np.zeros(len(S)))


def power(sites, gammas) -> DiagramParams:
    S = np.asarray(sites, dtype=float).reshape(-1, 3)
    return DiagramParams(np.broadcast_to(np.eye(3), (len(S), 3, 3)), S, gammas)
