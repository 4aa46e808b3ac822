import numpy as np
import pytest
from scipy import stats

from logcave.envelopes import WeightPolytope, cef_lp
from logcave.errors import DegenerateData, DuplicatePoints, EmptyGrid, Infeasible
from logcave.hull import (axis_grid_inside, build_hull, contains, make_dataset,
                          sample_uniform)
from logcave.rng import RngStream

from conftest import random_interior_point


def test_dataset_validation():
    with pytest.raises(DuplicatePoints) as exc:
        make_dataset([[0.0], [1.0], [0.0]])
    assert (0, 2) in exc.value.pairs
    with pytest.raises(DegenerateData):
        make_dataset([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])   # collinear
    with pytest.raises(DegenerateData):
        make_dataset(np.eye(4)[:3])                           # n < d+1


def test_interval_hull():
    h = build_hull(make_dataset([[0.0], [1.0], [2.0]]))
    assert set(h.vertices) == {0, 2}
    assert h.total_volume == pytest.approx(2.0)
    assert h.simplex_volumes.sum() == pytest.approx(2.0)


def test_right_triangle_with_interior_point():
    h = build_hull(make_dataset([[0, 0], [1, 0], [0, 1], [0.2, 0.2]]))
    assert len(h.vertices) == 3
    assert h.total_volume == pytest.approx(0.5)


def test_cube_with_interior_points():
    gen = np.random.default_rng(0)
    corners = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)],
                       dtype=float)
    interior = gen.random((10, 3)) * 0.8 + 0.1
    h = build_hull(make_dataset(np.vstack([corners, interior])))
    assert h.total_volume == pytest.approx(1.0, abs=1e-10)
    slack = interior @ h.facet_normals.T - h.facet_offsets
    assert slack.max() <= 1e-9


def test_contains_examples():
    square = build_hull(make_dataset([[0, 0], [1, 0], [0, 1], [1, 1]]))
    assert contains(square, [0.5, 0.5])
    assert not contains(square, [1.5, 0.5])
    tri = build_hull(make_dataset([[0, 0], [1, 0], [0, 1]]))
    assert contains(tri, [0.5, 0.5])         # on the hypotenuse


def test_facet_slack_invariant():
    gen = np.random.default_rng(5)
    for d in (1, 2, 3, 4):
        pts = gen.standard_normal((8 * (d + 1), d))
        h = build_hull(make_dataset(pts))
        slack = pts @ h.facet_normals.T - h.facet_offsets
        assert slack.max() <= 1e-9
        assert h.simplex_volumes.sum() == pytest.approx(h.total_volume, rel=1e-10)


def test_rotated_box_volumes():
    gen = np.random.default_rng(7)
    for d in (2, 3):
        corners = np.array(np.meshgrid(*[[0.0, 1.0]] * d, indexing="ij"))
        corners = corners.reshape(d, -1).T * np.array([1.0, 2.0, 0.5][:d])
        analytic = np.prod([1.0, 2.0, 0.5][:d])
        for _ in range(5):
            Q = np.linalg.qr(gen.standard_normal((d, d)))[0]
            h = build_hull(make_dataset(corners @ Q.T))
            assert h.total_volume == pytest.approx(analytic, rel=1e-8)


def test_sampling_moments_interval():
    h = build_hull(make_dataset([[0.0], [2.0], [1.0]]))
    pts = sample_uniform(h, 100_000, RngStream(3).child("s"))
    se = np.sqrt(1.0 / 3.0 / 100_000)          # Var of U[0, 2] is 1/3
    assert abs(pts.mean() - 1.0) < 3 * se
    assert h.contains_many(pts).all()


def test_sampling_moments_triangle():
    h = build_hull(make_dataset([[0, 0], [1, 0], [0, 1]]))
    pts = sample_uniform(h, 100_000, RngStream(4).child("s"))
    se = np.sqrt(1.0 / 18.0 / 100_000)         # per-coordinate variance 1/18
    assert np.all(np.abs(pts.mean(axis=0) - 1.0 / 3.0) < 3 * se)
    assert h.contains_many(pts).all()


def test_sampling_zero_count():
    h = build_hull(make_dataset([[0.0], [1.0]]))
    assert sample_uniform(h, 0, RngStream(0)).shape == (0, 1)


def test_sampling_uniformity_chi_squared():
    gen = np.random.default_rng(11)
    pts_in = gen.standard_normal((12, 2))
    h = build_hull(make_dataset(pts_in))
    h._ensure_simplex_inverses()
    samples = sample_uniform(h, 100_000, RngStream(9).child("chi"))
    lifted = np.column_stack([samples, np.ones(len(samples))])
    coords = np.einsum("sij,mj->msi", h._simplex_inverses, lifted)
    owner = np.argmax(coords.min(axis=2), axis=1)
    counts = np.bincount(owner, minlength=len(h.simplices))
    expected = h.simplex_volumes / h.total_volume * len(samples)
    stat = float(((counts - expected) ** 2 / expected).sum())
    pvalue = stats.chi2.sf(stat, df=len(h.simplices) - 1)
    assert pvalue > 0.001


def test_axis_grid_examples():
    interval = build_hull(make_dataset([[0.0], [2.0], [0.5]]))
    g = axis_grid_inside(interval, 5)
    assert np.allclose(sorted(g.ravel()), [0, 0.5, 1, 1.5, 2])

    square = build_hull(make_dataset([[0, 0], [1, 0], [0, 1], [1, 1]]))
    assert len(axis_grid_inside(square, 3)) == 9

    tri = build_hull(make_dataset([[0, 0], [1, 0], [0, 1]]))
    assert len(axis_grid_inside(tri, 3)) == 6  # lattice points with x+y <= 1


def test_axis_grid_empty():
    diamond = build_hull(make_dataset([[0.5, 0], [1, 0.5], [0.5, 1], [0, 0.5]]))
    with pytest.raises(EmptyGrid):
        axis_grid_inside(diamond, 2)   # only the bbox corners, all outside


def test_contains_agrees_with_lp_feasibility():
    gen = np.random.default_rng(13)
    for d in (1, 2):
        pts = gen.standard_normal((10, d))
        h = build_hull(make_dataset(pts))
        lo, hi = h.bounding_box()
        queries = gen.random((1000, d)) * (hi - lo) * 1.4 + lo - 0.2 * (hi - lo)
        phi = gen.standard_normal(10)
        for q in queries:
            inside = h.contains(q)
            try:
                cef_lp(WeightPolytope(pts, q), phi, h)
                feasible = True
            except Infeasible:
                feasible = False
            if inside != feasible:
                # disagreement is only tolerable within the boundary band
                slack = np.max(h.facet_normals @ q - h.facet_offsets)
                assert abs(slack) < 1e-7
