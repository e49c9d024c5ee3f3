import numpy as np
import pytest

from capce.data import TwoSampleDataset


@pytest.fixture
def toy_joint():
    """Small joint dataset with real IV structure (8 rows)."""
    rng = np.random.default_rng(0)
    n = 8
    z = rng.uniform(-1, 1, n)
    u = rng.uniform(-1, 1, n)
    w = u + rng.uniform(-1, 1, n)
    x = z + w + u + rng.uniform(-1, 1, n)
    y = x**2 + w + rng.uniform(-1, 1, n)
    return TwoSampleDataset(x=x, w=w[:, None], z1=z, y=y, z2=z.copy(), joint=True)


def make_joint(n, seed, y_fn=None):
    rng = np.random.default_rng(seed)
    z = rng.uniform(-1, 1, n)
    u = rng.uniform(-1, 1, n)
    w = u + rng.uniform(-1, 1, n)
    x = z + w + u + rng.uniform(-1, 1, n)
    y = y_fn(x, w, u) if y_fn else x + w + u
    return TwoSampleDataset(x=x, w=w[:, None], z1=z, y=np.asarray(y, dtype=float),
                            z2=z.copy(), joint=True)
