"""Smoothed objectives and their gradient approximators.

Two smoothing routes are supported:

* quadratic-regularization smoothing: the envelope LP is replaced by the QP
  with parameter u, giving a differentiable under-approximation; a constant
  shift (u/2) * I_high turns it into an upper bound;
* ball smoothing: the objective argument is perturbed by u * z with z uniform
  on the unit Euclidean ball of R^n, giving a differentiable over-approximation
  whose single-sample gradients are unbiased.

Each combines with a deterministic or random integration grid, giving the
four gradient options used by the solver.  Per-point solves are seeded from
the linearity cell of the unperturbed envelope, so warm solves typically need
no pivots at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .envelopes import EnvelopeInterpolator, EnvelopeLP, EnvelopeQP
from .grids import Grid
from .objective import _phi_array
from .rng import RngStream


@dataclass
class SmoothingConfig:
    """Constants of one smoothing scheme over the feasible box.

    B0 bounds the smoothing gap (f <= smoothed <= f + B0 * u), B1/u is the
    gradient Lipschitz constant, sigma the single-sample gradient deviation.
    """

    scheme: str               # "nesterov" or "randomized"
    u: float
    r: float
    B0: float
    B1: float
    sigma: float


@dataclass
class GradientEstimate:
    vector: np.ndarray
    option: int               # 1..4: smoothing x grid-origin combination
    grid_size: int
    smoothing_u: float
    value: float = None       # matching value (or sample estimate) at phi


def ball_sample(gen: np.random.Generator, count: int, n: int) -> np.ndarray:
    """Points uniform on the unit Euclidean ball in R^n.

    Gaussian directions scaled to the sphere, then shrunk by U^(1/n).
    """
    z = gen.standard_normal((count, n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    radii = gen.random(count) ** (1.0 / n)
    return z * radii[:, None]


def smoothing_constants(scheme: str, n: int, delta: float, phi_low: float,
                        I_low: float, I_high: float, r: float) -> SmoothingConfig:
    """Scheme constants over the box, with horizon r bounding the u schedule."""
    if scheme == "nesterov":
        B0 = I_high / 2.0
        B1 = delta * math.exp(-phi_low) * (r + 1.0)
        sigma = delta * math.exp(-phi_low)
    elif scheme == "randomized":
        B0 = I_high * math.exp(r) * math.sqrt(2.0 * math.log(n) / (n + 1.0))
        B1 = delta * math.exp(-phi_low + r) * math.sqrt(n)
        sigma = delta * math.exp(-phi_low + r)
    else:
        raise ValueError(f"unknown smoothing scheme {scheme!r}")
    return SmoothingConfig(scheme=scheme, u=r, r=r, B0=B0, B1=B1, sigma=sigma)


def default_u(scheme: str, n: int, D: float, theory: bool = False,
              B0: float = None, B1: float = None) -> float:
    """Smoothing scale: theory rule (D/2)sqrt(B1/B0), else the practical rules
    u = D * n^(1/4) / 2 (randomized) and u = D / 2 (nesterov)."""
    if theory:
        return 0.5 * D * math.sqrt(B1 / B0)
    if scheme == "randomized":
        return 0.5 * D * n ** 0.25
    return 0.5 * D


def default_sigma_practical(scheme: str) -> float:
    return 1e-4 if scheme == "randomized" else 1e-3


def eta_rule(sigma: float, M1: float, D: float) -> float:
    """Learning-rate constant eta = sigma * M_T^(1) / D."""
    return sigma * M1 / D


def shifted_value(value: float, u: float, I_high: float) -> float:
    """Upper-bound form of the QP-smoothed value: adds (u/2) * I_high."""
    return value + 0.5 * u * I_high


def _cell_seeds(points, phi_arr, grid_points):
    """Envelope cells of the unperturbed tent, as per-point LP/QP seeds."""
    interp = EnvelopeInterpolator(points, phi_arr)
    _, cells = interp.values_and_cells(grid_points)
    return interp, cells


def nesterov_value_grad(phi, u: float, grid: Grid, points, qp: EnvelopeQP = None,
                        option: int = None):
    """QP-smoothed objective value and its gradient on the given grid.

    value = mean(phi) + (Delta/m) sum_j exp(-q_u(xi_j));
    grad  = (1/n) 1  - (Delta/m) sum_j exp(-q_u(xi_j)) * alpha_u(xi_j).
    """
    if u <= 0:
        raise ValueError("u must be positive for quadratic smoothing")
    phi_arr = _phi_array(phi)
    n = phi_arr.size
    if qp is None:
        qp = EnvelopeQP(points, None)
    if option is None:
        option = 1 if grid.origin == "deterministic" else 2

    interp, cells = _cell_seeds(points, phi_arr, grid.points)
    lifted = np.column_stack([grid.points, np.ones(grid.size)])
    barys = np.einsum("mij,mj->mi", interp.cell_matrix_inv[cells], lifted)

    v_target = np.full(n, 1.0 / n) - phi_arr / u
    gamma = np.zeros(n)
    total = 0.0
    seed = np.zeros(n)
    for j in range(grid.size):
        idx = interp.cell_index[cells[j]]
        seed[:] = 0.0
        seed[idx] = np.maximum(barys[j], 0.0)
        alpha = qp.project(v_target, grid.points[j], start=seed)
        q_val = float(alpha @ phi_arr + 0.5 * u * np.sum((alpha - 1.0 / n) ** 2))
        c = grid.weight * math.exp(-q_val)
        gamma += c * alpha
        total += c

    value = float(phi_arr.mean() + total)
    g = np.full(n, 1.0 / n) - gamma
    return value, GradientEstimate(vector=g, option=option, grid_size=grid.size,
                                   smoothing_u=u, value=value)


_SWEEP_CHUNK = 4096


def perturbed_envelope_sweep(phi_arr, u, grid: Grid, zs, lp: EnvelopeLP, coeff_fn,
                             clamp_fn=None):
    """Accumulate sum_j coeff(cef[phi + u z_j](xi_j)) * alpha_j over the grid.

    The per-point LPs are seeded with the linearity cells of the unperturbed
    envelope; points whose seed basis is already optimal (the vast majority
    once u is small) are settled in bulk by a vectorized reduced-cost check,
    and only the rest go through simplex pivots.  ``coeff_fn`` maps envelope
    values to the nonnegative weights multiplying each alpha; ``clamp_fn``
    optionally projects perturbed tents back into the objective's domain.

    Returns (gamma, coeff_total, mean_perturbed_phi_sum).
    """
    n = phi_arr.size
    m = grid.size
    if u == 0.0 or zs is None:
        # no perturbation: identical to the plain batched envelope evaluation
        interp = EnvelopeInterpolator(lp.points, phi_arr)
        vals = interp.values(grid.points)
        coeffs = coeff_fn(vals)
        gamma = interp.weighted_alpha_sum(grid.points, coeffs)
        return gamma, float(coeffs.sum()), float(phi_arr.mean()) * m

    interp, cells = _cell_seeds(lp.points, phi_arr, grid.points)
    cell_bases = interp.cell_index                         # (C, d+1)
    basis_mats = lp.A[:, cell_bases].transpose(1, 0, 2)    # (C, rows, basis cols)
    cell_binvs = np.linalg.inv(basis_mats)

    lifted = np.column_stack([grid.points, np.ones(m)])
    barys = np.einsum("mij,mj->mi", interp.cell_matrix_inv[cells], lifted)
    np.maximum(barys, 0.0, out=barys)
    rhs = lifted * lp.row_scale

    gamma = np.zeros(n)
    total = 0.0
    mean_sum = 0.0
    perturbing = u != 0.0 and zs is not None

    for start in range(0, m, _SWEEP_CHUNK):
        sl = slice(start, min(start + _SWEEP_CHUNK, m))
        c_cells = cells[sl]
        bases = cell_bases[c_cells]                        # (k, d+1)
        if perturbing:
            phis = phi_arr + u * zs[sl]
            if clamp_fn is not None:
                phis = clamp_fn(phis)
            mean_sum += float(phis.mean(axis=1).sum())
            cB = np.take_along_axis(phis, bases, axis=1)
        else:
            phis = np.broadcast_to(phi_arr, (bases.shape[0], n))
            mean_sum += float(phi_arr.mean()) * phis.shape[0]
            cB = phi_arr[bases]
        # reduced costs r = phi_j - y A with y = Binv^T c_B; r >= -tol means
        # the seed basis is already optimal
        y = np.einsum("kij,ki->kj", cell_binvs[c_cells], cB)
        r = phis - y @ lp.A
        ok = r.min(axis=1) >= -1e-9

        vals = np.einsum("ki,ki->k", cB, barys[sl])
        coeffs = coeff_fn(vals)
        np.add.at(gamma, bases[ok].ravel(), (coeffs[ok, None] * barys[sl][ok]).ravel())
        total += float(coeffs[ok].sum())

        for j in np.nonzero(~ok)[0]:
            gj = start + j
            ci = cells[gj]
            val, xb, basis, _ = lp.solve_seeded(
                np.ascontiguousarray(phis[j]), rhs[gj],
                cell_bases[ci].copy(), cell_binvs[ci].copy())
            c = float(coeff_fn(np.array([val]))[0])
            gamma[basis] += c * xb
            total += c

    return gamma, total, mean_sum


def randomized_value_grad(phi, u: float, grid: Grid, stream: RngStream, points,
                          lp: EnvelopeLP = None, option: int = None):
    """Ball-smoothed value estimate and gradient estimate on the given grid.

    One ball perturbation z_j is drawn per grid point; the returned gradient
    averages the envelope subgradient expression at phi + u * z_j and the
    value averages F(phi + u * z_j, xi_j).  With u = 0 this reduces to the
    plain grid subgradient.
    """
    phi_arr = _phi_array(phi)
    n = phi_arr.size
    if lp is None:
        lp = EnvelopeLP(points, None)
    if option is None:
        option = 3 if grid.origin == "deterministic" else 4
    m = grid.size

    zs = ball_sample(stream.gen, m, n) if u != 0.0 else None
    weight = grid.weight
    gamma, total, mean_sum = perturbed_envelope_sweep(
        phi_arr, u, grid, zs, lp, lambda v: weight * np.exp(-v))

    # (1/m) sum_j F(phi_j, xi_j) with F(psi, x) = mean(psi) + Delta exp(-cef)
    value_est = float(mean_sum / m + total)
    g = np.full(n, 1.0 / n) - gamma
    return value_est, GradientEstimate(vector=g, option=option, grid_size=m,
                                       smoothing_u=u, value=value_est)
