"""Anisotropic power diagram representations of voxel grain scans."""

from .apd import DiagramParams, classify, classify_points, h_value, power, rasterize, voronoi
from .dilpm import DilpmError, decode, encode, lift, solve_dilpm
from .metrics import (FitReport, accuracy, centroid_error, covariance_error, evaluate,
                      neighborhood_report, weight_error)
from .pipeline import FitResult, SynthError, fit_dilpm, fit_sgbpd, synth
from .scan_stats import (GrainStats, NeighborGraph, compute_boundary_distance, compute_neighbors,
                         compute_stats, delta_interior_mask)
from .supports import (InteriorParams, PencilParams, ResolutionParams, advisory_tau,
                       combined_support, interior_removal, pencil_coreset, resolution_coreset)
from .transport import (Clustering, DualSolution, ImageSupport, check_complementary_slackness,
                        diagram_from_duals, solve_wcaa)
from .volume_io import GrainScan, export_slice, load_scan, save_scan

__version__ = "0.1.0"
