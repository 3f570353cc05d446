import numpy as np
import pytest

from graindiagrams.volume_io import GrainScan


def strip(labels, spacing=(1.0, 1.0, 1.0)):
    """Scan of shape (len, 1, 1) with the given labels."""
    labels = np.asarray(labels)
    return GrainScan((len(labels), 1, 1), spacing, labels)


def random_blob_scan(dims, k, seed):
    """Nearest-seed labeling on a grid, every label present."""
    rng = np.random.default_rng(seed)
    n = int(np.prod(dims))
    idx = np.arange(n)
    pts = np.stack([idx % dims[0], (idx // dims[0]) % dims[1], idx // (dims[0] * dims[1])], 1)
    seeds = pts[rng.choice(n, k, replace=False)]
    d = ((pts[:, None, :] - seeds[None]) ** 2).sum(-1)
    labels = np.argmin(d, axis=1) + 1
    return GrainScan(dims, (1.0, 1.0, 1.0), labels, k=k)


@pytest.fixture
def two_grain_strip():
    return strip([1, 1, 2, 2])


@pytest.fixture(scope="session")
def blob32():
    return random_blob_scan((32, 32, 32), 5, 7)
