import numpy as np
import pytest


def gaussian_blob(n=65, center=None, sigma=8.0, amplitude=1.0):
    """Smooth 2D test pattern: a Gaussian bump, near zero at the borders."""
    if center is None:
        center = ((n - 1) / 2.0, (n - 1) / 2.0)
    xs = np.arange(n, dtype=np.float64)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    r2 = (gx - center[0]) ** 2 + (gy - center[1]) ** 2
    return (amplitude * np.exp(-r2 / (2.0 * sigma**2))).astype(np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
