import numpy as np
import pytest

from vplab.grids import build_grid


@pytest.fixture(scope="session")
def grid32():
    return build_grid(6.0, 32)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(6.0, 16)


@pytest.fixture(scope="session")
def cf32(grid32):
    from vplab.collision import compute_sigma
    return compute_sigma(grid32)


@pytest.fixture(scope="session")
def cf16(grid16):
    from vplab.collision import compute_sigma
    return compute_sigma(grid16)


@pytest.fixture(scope="session")
def grid24():
    return build_grid(6.0, 24)


@pytest.fixture(scope="session")
def grid48():
    return build_grid(6.0, 48)


@pytest.fixture(scope="session")
def cf24(grid24):
    from vplab.collision import compute_sigma
    return compute_sigma(grid24)


@pytest.fixture(scope="session")
def cf48(grid48):
    from vplab.collision import compute_sigma
    return compute_sigma(grid48)


@pytest.fixture(scope="session")
def small_grid():
    # coarse grid for property tests where speed beats accuracy
    return build_grid(4.0, 12)


@pytest.fixture(scope="session")
def small_cf(small_grid):
    from vplab.collision import compute_sigma
    return compute_sigma(small_grid)


def random_field(grid, seed, smooth=True):
    """Random complex field with Gaussian envelope (negligible boundary tail)."""
    rng = np.random.default_rng(seed)
    n = grid.n
    vals = rng.standard_normal((n, n, n)) + 1j * rng.standard_normal((n, n, n))
    if smooth:
        # low-pass in each axis so derivatives are resolved
        from scipy.ndimage import gaussian_filter
        vals = gaussian_filter(vals.real, sigma=1.5) + 1j * gaussian_filter(vals.imag, sigma=1.5)
    return vals * np.exp(-0.5 * grid.radius2())


def box_field(grid, seed):
    """Smoothed real noise filling the box, flat-ish cutoff near the faces.

    Unlike random_field this does not concentrate mass at the origin, so it
    samples the large-|v| behavior of the operators.
    """
    from scipy.ndimage import gaussian_filter
    rng = np.random.default_rng(seed)
    vals = gaussian_filter(rng.standard_normal((grid.n,) * 3), sigma=1.5)
    r = np.sqrt(grid.radius2())
    return vals * np.exp(-((r / (grid.half_width - 2.25)) ** 8))
