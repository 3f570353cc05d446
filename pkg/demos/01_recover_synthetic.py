#!/usr/bin/env python3
"""Recovering a known anisotropic power diagram from its voxelization.

A random diagram with 12 cells is rasterized on a 48³ grid. The weight-balanced
assignment (s-GBPD) is then asked to rebuild it twice:

* with the generator's own sites and shape matrices, only the sizes being
  unknown; the assignment should reproduce the scan voxel for voxel,
* with sites and shapes estimated from the scan (grain centroids and inverse
  covariances), which is what one has for a measured polycrystal.

The gap between the two runs is the price of the moment estimates.
"""

import numpy as np

from graindiagrams import fit_sgbpd, synth


def main():
    scan, truth = synth(12, (48, 48, 48), seed=4)
    print(f"synthetic scan: {scan.k} grains on {scan.dims}, "
          f"grain sizes {scan.kappa().min()}..{scan.kappa().max()} voxels\n")

    known = fit_sgbpd(scan, A=truth.A, sites=truth.sites)
    print(known.report.table("generator shapes"))
    # sizes are determined up to a common constant, and the voxel grid only
    # pins them down to an interval: any sizes giving the same voxel labels fit
    shift = known.params.gamma - truth.gamma
    print(f"\nrecovered sizes minus true sizes: spread {np.ptp(shift):.2e} "
          f"(same labels, so within the grid's slack)\n")

    measured = fit_sgbpd(scan)
    print(measured.report.table("measured shapes"))
    info = measured.info
    print(f"\nLP: {info['support_points']} points, objective {info['objective']:.6g}, "
          f"dual objective {info['dual_objective']:.6g}, "
          f"{info['fractional_points']} split points (at most k-1 = {scan.k - 1})")


if __name__ == "__main__":
    main()
