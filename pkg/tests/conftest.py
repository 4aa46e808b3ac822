import numpy as np
import pytest

from logcave.hull import build_hull, make_dataset
from logcave.rng import RngStream


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def random_interior_point(gen, points):
    """A point strictly inside the hull of the rows of ``points``."""
    w = gen.dirichlet(np.ones(len(points)))
    return w @ points


def random_instance(gen, n, d, phi_scale=1.0):
    """Random dataset + hull + tent values, retrying degenerate draws."""
    while True:
        pts = gen.standard_normal((n, d))
        try:
            ds = make_dataset(pts)
            hull = build_hull(ds)
            break
        except Exception:
            continue
    phi = gen.standard_normal(n) * phi_scale
    return ds, hull, phi


def normal_1d_dataset(seed, n=50):
    gen = np.random.default_rng(seed)
    return make_dataset(np.sort(gen.standard_normal(n))[:, None])
