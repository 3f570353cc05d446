#!/usr/bin/env python3
"""How far can the image support be compressed before the fit suffers?

The weight-balanced LP has one row per support point, so the support size
drives the run time. Two compressions are compared on a 64³ scan with 20
grains:

* resolution coresets: a coarser grid, each coarse cell weighted by its voxel
  count, optionally with grain interiors replaced by one point per grain;
* pencil coresets: voxels projected onto rays through each grain's center and
  merged into batches whose spread stays below ``batch_error`` µm².
"""

import time

from graindiagrams import fit_sgbpd, synth
from graindiagrams.supports import InteriorParams, PencilParams, ResolutionParams


def run(scan, label, **kw):
    t0 = time.perf_counter()
    res = fit_sgbpd(scan, **kw)
    r = res.report
    print(f"{label:<34} {res.info['support_points']:>8} {r.accuracy:>8.4f} "
          f"{r.weight_error:>8.4f} {time.perf_counter() - t0:>7.1f}")


def main():
    scan, _ = synth(20, (64, 64, 64), seed=0)
    print(f"{'support':<34} {'points':>8} {'Phi':>8} {'Psi':>8} {'sec':>7}")
    run(scan, "full voxel support")
    for tau in (32, 16):
        run(scan, f"resolution {tau}^3", strategy="resolution",
            resolution=ResolutionParams((tau,) * 3))
    run(scan, "resolution 32^3 + interior (d=4)", strategy="resolution",
        resolution=ResolutionParams((32,) * 3), interior=InteriorParams(4))
    run(scan, "full + interior (d=2)", interior=InteriorParams(2))
    for rays in (64, 512):
        for eps in (4.0, 16.0):
            run(scan, f"pencil r={rays} eps={eps:g}", strategy="pencil",
                pencil=PencilParams(rays, eps))


if __name__ == "__main__":
    main()
