"""End-to-end stages: synthetic ground truth, s-GBPD and DiLPM fits, evaluation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import special_ortho_group

from . import dilpm, metrics, supports
from .apd import DiagramParams, rasterize
from .scan_stats import compute_boundary_distance, compute_neighbors, compute_stats
from .transport import (check_complementary_slackness, diagram_from_duals, dual_objective,
                        solve_wcaa)
from .volume_io import GrainScan, voxel_centers

log = logging.getLogger(__name__)

SYNTH_ATTEMPTS = 10
MAX_CONDITION = 10.0


class SynthError(RuntimeError):
    pass


def random_spd(rng: np.random.Generator, count: int, max_condition: float = MAX_CONDITION):
    """Random SPD matrices with condition number ≤ ``max_condition`` and det 1."""
    out = np.empty((count, 3, 3))
    for i in range(count):
        lam = np.exp(rng.uniform(0.0, np.log(max_condition), 3))
        lam /= np.prod(lam) ** (1.0 / 3.0)
        R = special_ortho_group.rvs(3, random_state=rng)
        out[i] = (R * lam) @ R.T
        out[i] = 0.5 * (out[i] + out[i].T)
    return out


def synth(k: int, dims, spacing=(1.0, 1.0, 1.0), seed: int = 0):
    """Rasterized random APD with every cell nonempty; returns ``(scan, params)``.

    Sites are uniform in the box, matrices random SPD (condition ≤ 10,
    det 1) and all sizes zero. Voxels take the minimizing cell, exact ties
    going to the lower index. Draws with an empty cell are repeated.
    """
    if k < 2:
        raise ValueError("synth needs k ≥ 2")
    dims = tuple(int(d) for d in dims)
    spacing = tuple(float(s) for s in spacing)
    rng = np.random.default_rng(seed)
    extent = np.asarray(dims) * np.asarray(spacing)
    pts = voxel_centers(dims, spacing)
    for attempt in range(SYNTH_ATTEMPTS):
        sites = rng.uniform(0.0, 1.0, (k, 3)) * extent
        A = random_spd(rng, k)
        params = DiagramParams(A, sites, np.zeros(k))
        labels = np.empty(len(pts), dtype=np.int64)
        for start in range(0, len(pts), 1 << 16):
            labels[start:start + (1 << 16)] = np.argmin(
                params.h_matrix(pts[start:start + (1 << 16)]), axis=1) + 1
        counts = np.bincount(labels, minlength=k + 1)[1:]
        if (counts > 0).all():
            return GrainScan(dims, spacing, labels, k=k), params
        log.info("synth attempt %d left %d empty cells", attempt + 1, int((counts == 0).sum()))
    raise SynthError(f"could not draw {k} nonempty cells in {SYNTH_ATTEMPTS} attempts")


@dataclass
class FitResult:
    params: DiagramParams
    predicted: GrainScan
    report: metrics.FitReport
    info: dict = field(default_factory=dict)


def fit_sgbpd(scan: GrainScan, strategy: str = "none", pencil=None, resolution=None,
              interior=None, A=None, sites=None, kappa=None, tie_tol=None,
              candidates: int = 8) -> FitResult:
    """s-GBPD: fixed shapes and sites, sizes from the weight-balanced assignment.

    ``A``, ``sites`` and ``kappa`` default to the measured precisions,
    centroids and grain cardinalities.
    """
    times = {}
    t0 = time.perf_counter()
    stats = compute_stats(scan)
    A = stats.precisions if A is None else np.asarray(A, dtype=float)
    sites = stats.centroids if sites is None else np.asarray(sites, dtype=float)
    kappa = stats.kappa if kappa is None else np.asarray(kappa, dtype=float)
    times["stats"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    field_ = compute_boundary_distance(scan) if interior is not None else None
    support = supports.combined_support(scan, stats, strategy, pencil, resolution, interior,
                                        field_, A, sites)
    times["support"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    clustering, duals, objective = solve_wcaa(support, A, sites, kappa, candidates=candidates)
    times["solve"] = time.perf_counter() - t0
    residual, infeas = check_complementary_slackness(support, A, sites, clustering, duals)

    t0 = time.perf_counter()
    params = diagram_from_duals(A, sites, duals)
    predicted = rasterize(params, scan.dims, scan.spacing, tie_tol)
    times["rasterize"] = time.perf_counter() - t0

    report = metrics.evaluate(scan, predicted, times)
    info = {"support_points": len(support), "objective": objective,
            "dual_objective": dual_objective(support, kappa, duals),
            "cs_residual": residual, "cs_infeasibility": infeas,
            "fractional_points": int(len(clustering.fractional_points())),
            **clustering.info}
    report.extra = {k: v for k, v in info.items() if np.isscalar(v)}
    return FitResult(params, predicted, report, info)


def fit_dilpm(scan: GrainScan, delta: int = 2, ring=None, strategy: str = "none",
              pencil=None, resolution=None, margin: float = 1.0, solver: str = "simplex",
              tie_tol=None) -> FitResult:
    """DiLPM: all parameters from the lifted separation LP."""
    times = {}
    t0 = time.perf_counter()
    stats = compute_stats(scan)
    field_ = compute_boundary_distance(scan)
    nbrs = compute_neighbors(scan)
    support = supports.combined_support(scan, stats, strategy, pencil, resolution, None)
    times["stats"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    params, sol, beta = dilpm.fit_dilpm(scan, delta, support, ring, margin, solver, field_, nbrs)
    times["solve"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    predicted = rasterize(params, scan.dims, scan.spacing, tie_tol)
    times["rasterize"] = time.perf_counter() - t0
    report = metrics.evaluate(scan, predicted, times)
    info = {"objective": sol.objective, "beta": beta, "support_points": len(support),
            **sol.info}
    report.extra = {k: v for k, v in info.items() if np.isscalar(v)}
    return FitResult(params, predicted, report, info)
