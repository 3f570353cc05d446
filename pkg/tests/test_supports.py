import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graindiagrams.scan_stats import compute_boundary_distance, compute_stats
from graindiagrams.supports import (COARSE, INTERIOR, VOXEL, InteriorParams, PencilParams,
                                    ResolutionParams, advisory_tau, combined_support,
                                    full_support, interior_removal, pencil_batches,
                                    pencil_coreset, ray_directions, resolution_coreset)
from graindiagrams.volume_io import GrainScan

from conftest import random_blob_scan, strip

RAY = np.array([[[1.0, 0.0, 0.0]]])


def _on_one_ray(eps):
    X = np.array([[1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]])
    return pencil_batches(X, np.ones(3), [[0, 0, 0]], np.eye(3)[None], RAY, eps)


def test_pencil_single_batch():
    c, w, owner, _, _ = _on_one_ray(np.inf)
    assert np.allclose(c, [[2, 0, 0]]) and w.tolist() == [3.0]


def test_pencil_no_compression():
    # two neighbors at distance 1 cost 0.5; anything smaller keeps singletons
    c, w, owner, _, _ = _on_one_ray(0.4)
    assert np.allclose(c[:, 0], [1, 2, 3]) and w.tolist() == [1.0, 1.0, 1.0]


def test_pencil_param_errors():
    with pytest.raises(ValueError):
        PencilParams(rays_per_site=5)
    with pytest.raises(ValueError):
        PencilParams(batch_error=0.0)


def test_ray_directions_unit_in_metric():
    A = np.stack([np.eye(3), np.diag([4.0, 1, 0.25])])
    U = ray_directions(A, 64)
    assert U.shape == (2, 64, 3)
    assert np.allclose(np.einsum("kra,kab,krb->kr", U, A, U), 1.0)
    E = ray_directions(A, 64, ellipsoidal=False)
    assert np.allclose(np.linalg.norm(E, axis=2), 1.0)


def test_pencil_centroids_on_rays(blob32):
    stats = compute_stats(blob32)
    A, S = stats.precisions, stats.centroids
    U = ray_directions(A, 32)
    c, w, owner, site, ray = pencil_batches(blob32.coordinates(), np.ones(blob32.n), S, A, U, 4.0)
    v = c - S[site]
    u = U[site, ray]
    # component of v orthogonal to u in the site metric
    Au = np.einsum("nab,nb->na", A[site], u)
    t = np.einsum("na,na->n", v, Au) / np.einsum("na,na->n", u, Au)
    r = v - t[:, None] * u
    dist = np.sqrt(np.einsum("na,nab,nb->n", r, A[site], r))
    assert dist.max() <= 1e-9
    assert w.sum() == blob32.n
    assert len(c) <= blob32.n


def test_pencil_coreset_conserves(blob32):
    sup = pencil_coreset(blob32, compute_stats(blob32), PencilParams(16, 8.0))
    assert sup.weights.sum() == blob32.n
    assert np.bincount(sup.owner, minlength=len(sup)).sum() == blob32.n


def test_resolution_example():
    scan = GrainScan((4, 4, 1), (1, 1, 1), np.ones(16, dtype=int))
    sup = resolution_coreset(scan, ResolutionParams((2, 2, 1)))
    assert sup.weights.tolist() == [4.0] * 4
    assert sorted(map(tuple, sup.points)) == [(1, 1, 0.5), (1, 3, 0.5), (3, 1, 0.5), (3, 3, 0.5)]
    assert (sup.kind == COARSE).all()


def test_resolution_identity(blob32):
    sup = resolution_coreset(blob32, ResolutionParams(blob32.dims))
    full = full_support(blob32)
    assert np.array_equal(sup.points, full.points)
    assert np.array_equal(sup.weights, full.weights)
    assert np.array_equal(sup.grain, full.grain)
    assert (sup.kind == VOXEL).all()


@settings(max_examples=30, deadline=None)
@given(st.tuples(st.integers(1, 9), st.integers(1, 7), st.integers(1, 5)), st.data())
def test_resolution_conserves_weight(dims, data):
    tau = tuple(data.draw(st.integers(1, d)) for d in dims)
    scan = random_blob_scan(dims, 1, 0)
    sup = resolution_coreset(scan, ResolutionParams(tau))
    assert sup.weights.sum() == scan.n
    assert len(sup) <= math.prod(tau)
    # each point is the centroid of its voxels
    X = scan.coordinates()
    for a in range(3):
        cent = np.bincount(sup.owner, weights=X[:, a], minlength=len(sup)) / sup.weights
        assert np.allclose(cent, sup.points[:, a])


def test_resolution_zero_tau():
    with pytest.raises(ValueError):
        ResolutionParams((0, 1, 1))


def test_advisory_tau():
    assert advisory_tau(1, 0.5) == 11
    assert advisory_tau(50, 0.01) == math.ceil(2 ** (8 / 3) * 50 / 0.01 ** (2 / 3))
    with pytest.raises(ValueError):
        advisory_tau(1, 0.6)


def test_interior_delta_one_rejected():
    with pytest.raises(ValueError):
        InteriorParams(1)


def test_interior_strip_example(two_grain_strip):
    scan = two_grain_strip
    sup = interior_removal(scan, compute_stats(scan), None, full_support(scan), InteriorParams(2))
    assert len(sup) == 4 and sup.weights.sum() == 4
    # v2, v3 kept; v1 and v4 replaced by representatives at the grain centroids
    assert sorted(sup.points[:, 0].tolist()) == [1.0, 1.5, 2.5, 3.0]
    assert (sup.kind == INTERIOR).sum() == 2


def test_interior_per_grain_conservation(blob32):
    stats = compute_stats(blob32)
    field = compute_boundary_distance(blob32)
    sup = combined_support(blob32, stats, "resolution", resolution=ResolutionParams((16, 16, 16)),
                           interior=InteriorParams(3), field=field)
    assert sup.weights.sum() == blob32.n
    reps = sup.kind == INTERIOR
    assert reps.sum() <= blob32.k
    # representative weight = number of voxels routed to it
    w = np.bincount(sup.owner, minlength=len(sup))
    assert np.array_equal(w[reps], sup.weights[reps].astype(int))
    assert np.allclose(sup.points[reps], stats.centroids[sup.grain[reps] - 1])


def test_combined_none_is_identity(blob32):
    sup = combined_support(blob32, compute_stats(blob32))
    assert len(sup) == blob32.n and (sup.weights == 1).all()


def test_combined_unknown_strategy(blob32):
    with pytest.raises(ValueError):
        combined_support(blob32, compute_stats(blob32), "magic")
