import itertools
import math

import numpy as np
import pytest

from logcave.envelopes import (EnvelopeInterpolator, EnvelopeLP, EnvelopeQP,
                               WeightPolytope, cef_lp, cef_qp)
from logcave.errors import Infeasible
from logcave.hull import build_hull, make_dataset

from conftest import random_instance, random_interior_point


def test_lp_1d_example():
    pts = np.array([[0.0], [1.0], [2.0]])
    sol = cef_lp(WeightPolytope(pts, np.array([1.0])), np.array([0.0, 2.0, 0.0]))
    assert sol.value == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(sol.alpha, [0.5, 0.0, 0.5])
    assert len(sol.active_support) <= 2


def test_lp_zero_cost_at_data_point():
    pts = np.array([[0.0], [1.0], [2.0]])
    sol = cef_lp(WeightPolytope(pts, np.array([1.0])), np.zeros(3))
    assert sol.value == pytest.approx(0.0, abs=1e-12)


def test_lp_2d_barycentric_example():
    pts = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    sol = cef_lp(WeightPolytope(pts, np.array([0.5, 0.5])), np.array([0.0, 1.0, 1.0]))
    assert sol.value == pytest.approx(1.0)
    assert np.allclose(sol.alpha, [0.0, 0.5, 0.5])


def test_lp_infeasible_outside_hull():
    pts = np.array([[0.0], [1.0], [2.0]])
    with pytest.raises(Infeasible):
        cef_lp(WeightPolytope(pts, np.array([2.5])), np.zeros(3))


def test_envelope_dominance_and_support(rng):
    for _ in range(40):
        n, d = int(rng.integers(4, 12)), int(rng.integers(1, 4))
        ds, hull, phi = random_instance(rng, n, d)
        i = int(rng.integers(n))
        sol = cef_lp(WeightPolytope(ds.points, ds.points[i]), phi, hull)
        assert sol.value <= phi[i] + 1e-9
        assert len(sol.active_support) <= d + 1


def test_concavity_in_phi(rng):
    pts = rng.standard_normal((10, 2))
    ds = make_dataset(pts)
    hull = build_hull(ds)
    for _ in range(200):
        x = random_interior_point(rng, pts)
        p1, p2 = rng.standard_normal((2, 10))
        lam = rng.random()
        v1 = cef_lp(WeightPolytope(pts, x), p1, hull).value
        v2 = cef_lp(WeightPolytope(pts, x), p2, hull).value
        vm = cef_lp(WeightPolytope(pts, x), lam * p1 + (1 - lam) * p2, hull).value
        assert vm >= lam * v1 + (1 - lam) * v2 - 1e-9


def brute_force_cef(points, phi, x):
    """Minimum of barycentric interpolation over all affinely independent
    (d+1)-tuples whose simplex contains x: the exhaustive LP oracle."""
    n, d = points.shape
    best = np.inf
    for combo in itertools.combinations(range(n), d + 1):
        V = points[list(combo)]
        M = np.column_stack([V, np.ones(d + 1)]).T
        try:
            lam = np.linalg.solve(M, np.append(x, 1.0))
        except np.linalg.LinAlgError:
            continue
        if lam.min() >= -1e-10:
            best = min(best, float(lam @ phi[list(combo)]))
    return best


def test_lp_against_exhaustive_oracle(rng):
    for _ in range(25):
        n, d = int(rng.integers(4, 9)), int(rng.integers(1, 3))
        ds, hull, phi = random_instance(rng, n, d)
        for _ in range(4):
            x = random_interior_point(rng, ds.points)
            lp_val = cef_lp(WeightPolytope(ds.points, x), phi, hull).value
            oracle = brute_force_cef(ds.points, phi, x)
            assert lp_val == pytest.approx(oracle, abs=1e-8)


def test_qp_projection_interpretation_large_u():
    pts = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    centroid = pts.mean(axis=0)
    sol = cef_qp(WeightPolytope(pts, centroid), np.array([0.3, -0.2, 0.7]), 1e12)
    assert np.allclose(sol.alpha, 1.0 / 3.0, atol=1e-9)


def test_qp_1d_brute_force_line_search():
    # E(1) for points {0,1,2} is alpha(t) = (t, 1-2t, t), t in [0, 1/2]
    pts = np.array([[0.0], [1.0], [2.0]])
    phi = np.array([0.0, 2.0, 0.0])
    u = 1.0
    ts = np.linspace(0.0, 0.5, 10 ** 6)
    alphas = np.stack([ts, 1 - 2 * ts, ts], axis=1)
    vals = alphas @ phi + (u / 2) * ((alphas - 1 / 3) ** 2).sum(axis=1)
    brute = float(vals.min())
    sol = cef_qp(WeightPolytope(pts, np.array([1.0])), phi, u)
    assert sol.value == pytest.approx(brute, abs=1e-8)


def test_qp_feasibility_of_solution(rng):
    for _ in range(50):
        n, d = int(rng.integers(4, 12)), int(rng.integers(1, 4))
        ds, hull, phi = random_instance(rng, n, d)
        x = random_interior_point(rng, ds.points)
        sol = cef_qp(WeightPolytope(ds.points, x), phi, float(rng.random() + 0.05), hull)
        assert sol.alpha.min() >= -1e-12
        assert sol.alpha.sum() == pytest.approx(1.0, abs=1e-10)
        assert np.allclose(ds.points.T @ sol.alpha, x, atol=1e-8)
        assert np.linalg.norm(sol.alpha) <= 1.0 + 1e-10      # norm bound


def test_qp_sandwich_in_u(rng):
    for _ in range(100):
        n, d = int(rng.integers(4, 10)), int(rng.integers(1, 3))
        ds, hull, phi = random_instance(rng, n, d)
        x = random_interior_point(rng, ds.points)
        u_hi, u_lo = sorted(rng.random(2) * 2 + 1e-3, reverse=True)
        q_hi = cef_qp(WeightPolytope(ds.points, x), phi, u_hi, hull).value
        q_lo = cef_qp(WeightPolytope(ds.points, x), phi, u_lo, hull).value
        assert q_lo - 1e-9 <= q_hi <= q_lo + (u_hi - u_lo) / 2 + 1e-9


def test_qp_box_value_bounds(rng):
    lo, hi = -0.7, 1.3
    for _ in range(50):
        n, d = int(rng.integers(4, 10)), int(rng.integers(1, 3))
        ds, hull, _ = random_instance(rng, n, d)
        phi = rng.uniform(lo, hi, n)
        x = random_interior_point(rng, ds.points)
        u = float(rng.random() * 3)
        val = (cef_qp(WeightPolytope(ds.points, x), phi, u, hull).value
               if u > 0 else cef_lp(WeightPolytope(ds.points, x), phi, hull).value)
        assert lo - 1e-9 <= val <= hi + u / 2 + 1e-9


def test_qp_contraction_in_phi(rng):
    pts = rng.standard_normal((12, 2))
    ds = make_dataset(pts)
    hull = build_hull(ds)
    for _ in range(200):
        x = random_interior_point(rng, pts)
        u = float(rng.random() * 2 + 0.05)
        p1 = rng.standard_normal(12)
        p2 = p1 + rng.standard_normal(12) * 0.3
        a1 = cef_qp(WeightPolytope(pts, x), p1, u, hull).alpha
        a2 = cef_qp(WeightPolytope(pts, x), p2, u, hull).alpha
        assert np.linalg.norm(a2 - a1) <= np.linalg.norm(p2 - p1) / u + 1e-8


def test_lp_qp_consistency_as_u_vanishes(rng):
    for _ in range(50):
        n, d = int(rng.integers(4, 10)), int(rng.integers(1, 3))
        ds, hull, phi = random_instance(rng, n, d)
        x = random_interior_point(rng, ds.points)
        v_lp = cef_lp(WeightPolytope(ds.points, x), phi, hull).value
        v_qp = cef_qp(WeightPolytope(ds.points, x), phi, 1e-8, hull).value
        assert v_qp == pytest.approx(v_lp, abs=1e-6)


def test_interpolator_matches_lp(rng):
    for _ in range(30):
        n, d = int(rng.integers(4, 14)), int(rng.integers(1, 4))
        ds, hull, phi = random_instance(rng, n, d)
        interp = EnvelopeInterpolator(ds.points, phi)
        xs = np.array([random_interior_point(rng, ds.points) for _ in range(8)])
        vals = interp.values(xs)
        for x, v in zip(xs, vals):
            assert v == pytest.approx(
                cef_lp(WeightPolytope(ds.points, x), phi, hull).value, abs=1e-9)


def test_interpolator_weighted_alpha_sum(rng):
    pts = rng.standard_normal((9, 2))
    ds = make_dataset(pts)
    hull = build_hull(ds)
    phi = rng.standard_normal(9)
    interp = EnvelopeInterpolator(pts, phi)
    xs = np.array([random_interior_point(rng, pts) for _ in range(40)])
    coeffs = rng.random(40)
    combined = interp.weighted_alpha_sum(xs, coeffs)
    manual = np.zeros(9)
    for x, c in zip(xs, coeffs):
        manual += c * cef_lp(WeightPolytope(pts, x), phi, hull).alpha
    assert np.allclose(combined, manual, atol=1e-9)


def test_interpolator_affine_tent(rng):
    # exactly affine tents make the lifted points degenerate; the envelope is
    # the affine function itself
    pts = rng.standard_normal((8, 2))
    ds = make_dataset(pts)
    coef = rng.standard_normal(3)
    phi = pts @ coef[:2] + coef[2]
    interp = EnvelopeInterpolator(pts, phi)
    xs = np.array([random_interior_point(rng, pts) for _ in range(20)])
    assert np.allclose(interp.values(xs), xs @ coef[:2] + coef[2], atol=1e-9)
