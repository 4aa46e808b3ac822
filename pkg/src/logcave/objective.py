"""The tent-function objective: grid and closed-form evaluation, subgradients.

The objective being minimized is

    f(phi) = (1/n) sum_i phi_i + integral over C_n of exp(-cef[phi]),

whose subgradients have the form (1/n) 1 - gamma with gamma >= 0 and
||gamma||_1 equal to the integral.  The integral is evaluated either by a
uniform-weight sum over a grid, or in closed form by summing, over the
linearity cells of the envelope, exact integrals of the exponential of an
affine function (divided differences of exp at the negated vertex values).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .envelopes import EnvelopeInterpolator
from .errors import NumericalInstability
from .hull import Hull

# Node spacing below which the divided-difference recursion switches to a
# truncated series; 10 terms keep the truncation error below 1e-12 there.
DD_SERIES_SPAN = 1e-4
DD_SERIES_TERMS = 10


def _safe_scaled_exp(scale: float, exponent: float) -> float:
    """scale * exp(exponent), saturating instead of overflowing."""
    log_val = math.log(scale) + exponent
    if log_val > 700.0:
        return math.inf
    return math.exp(log_val)


def prop1_bounds(n: int, d: int, delta: float):
    """Closed-form box bounds containing every optimal tent value."""
    inner = math.log(2 * n + 2 * n * d * math.log(2 * n * d))
    phi_high = 1.0 + d * inner - math.log(delta)
    phi_low = -(n - 1.0) - d * (n - 1.0) * inner - math.log(delta)
    return phi_low, phi_high


@dataclass
class TentVector:
    """Tent values with the box and integral bounds defining the feasible set."""

    phi: np.ndarray
    box_low: float
    box_high: float
    integral_low: float
    integral_high: float

    @classmethod
    def with_prop1_bounds(cls, phi, n: int, d: int, delta: float) -> "TentVector":
        lo, hi = prop1_bounds(n, d, delta)
        return cls(phi=np.asarray(phi, dtype=float), box_low=lo, box_high=hi,
                   integral_low=_safe_scaled_exp(delta, -hi),
                   integral_high=_safe_scaled_exp(delta, -lo))

    @property
    def n(self) -> int:
        return self.phi.size

    def diameter(self) -> float:
        return math.sqrt(self.n) * (self.box_high - self.box_low)

    def box_violations(self) -> int:
        return int(np.sum((self.phi < self.box_low) | (self.phi > self.box_high)))

    def in_feasible_set(self, integral: float) -> bool:
        return (self.box_violations() == 0
                and self.integral_low <= integral <= self.integral_high)


@dataclass
class ObjectiveReport:
    value: float
    integral: float
    subgradient: np.ndarray
    grid_size: object            # an integer, or the string "exact"


def _phi_array(phi):
    return phi.phi if isinstance(phi, TentVector) else np.asarray(phi, dtype=float)


def subgradient_norm_bound(report: ObjectiveReport, n: int) -> float:
    """Upper bound on the squared norm of any subgradient at this integral."""
    return max(1.0 / n + 0.25, report.integral ** 2)


def _check_subgradient(g, integral, n):
    bound = max(1.0 / n + 0.25, integral ** 2)
    if float(g @ g) > bound + 1e-8:
        raise AssertionError("subgradient norm bound violated; envelope weights are inconsistent")


def _homogeneous_sums(w, terms):
    """h_0..h_{terms-1} of the nodes w (complete homogeneous symmetric sums)."""
    h = np.zeros(terms)
    h[0] = 1.0
    for wi in w:
        for q in range(1, terms):
            h[q] += wi * h[q - 1]
    return h


def _dd_series(nodes):
    k = len(nodes) - 1
    c = nodes.mean()
    h = _homogeneous_sums(nodes - c, DD_SERIES_TERMS)
    total = 0.0
    for q in range(DD_SERIES_TERMS):
        total += h[q] / math.factorial(q + k)
    return math.exp(c) * total


def exp_divided_difference(nodes) -> float:
    """Divided difference of exp at the given nodes (repeats allowed).

    Equals exp(xi) / k! for some xi between the extremes, hence is always
    positive; a nonpositive or nonfinite result signals total cancellation
    and raises ``NumericalInstability``.
    """
    z = np.sort(np.asarray(nodes, dtype=float))
    k = z.size - 1
    if k == 0:
        return math.exp(z[0])
    if z[-1] - z[0] < DD_SERIES_SPAN:
        return _dd_series(z)
    table = np.exp(z)
    max_abs = float(np.max(np.abs(table)))
    for level in range(1, k + 1):
        new = np.empty(z.size - level)
        for i in range(new.size):
            span = z[i + level] - z[i]
            if span < DD_SERIES_SPAN:
                new[i] = _dd_series(z[i:i + level + 1])
            else:
                new[i] = (table[i + 1] - table[i]) / span
        table = new
        max_abs = max(max_abs, float(np.max(np.abs(table))))
    result = float(table[0])
    if not np.isfinite(result) or result <= 0.0 or result < max_abs * 1e-14:
        raise NumericalInstability("divided-difference tableau lost all significant digits")
    return result


def _g2(h):
    """(expm1(h) - h) / h^2, stable near zero."""
    small = np.abs(h) < DD_SERIES_SPAN
    hs = np.where(small, 0.0, h)
    direct = (np.expm1(hs) - hs) / np.where(small, 1.0, hs * hs)
    series = 0.5 + h * (1.0 / 6.0 + h * (1.0 / 24.0 + h / 120.0))
    return np.where(small, series, direct)


def _g2b(h):
    """(h*exp(h) - expm1(h)) / h^2, stable near zero."""
    small = np.abs(h) < DD_SERIES_SPAN
    hs = np.where(small, 0.0, h)
    direct = (hs * np.exp(hs) - np.expm1(hs)) / np.where(small, 1.0, hs * hs)
    series = 0.5 + h * (1.0 / 3.0 + h * (1.0 / 8.0 + h / 30.0))
    return np.where(small, series, direct)


def _expm1_over(h):
    small = np.abs(h) < 1e-12
    return np.where(small, 1.0 + h / 2.0, np.expm1(h) / np.where(small, 1.0, h))


def _exact_terms_1d(interp: EnvelopeInterpolator):
    """Per-cell integrals and vertex weights for d = 1, vectorized."""
    cells = interp.cell_index                      # (C, 2)
    x = interp.points[:, 0]
    vols = np.abs(x[cells[:, 1]] - x[cells[:, 0]])
    ya = interp.phi[cells[:, 0]]
    yb = interp.phi[cells[:, 1]]
    wa, wb = -ya, -yb
    h = wb - wa
    ea = np.exp(wa)
    integrals = vols * ea * _expm1_over(h)
    weight_a = vols * ea * _g2(h)
    weight_b = vols * ea * _g2b(h)
    if not np.all(np.isfinite(integrals)):
        raise NumericalInstability("exponential overflow in exact integral")
    return integrals, np.stack([weight_a, weight_b], axis=1)


def _exact_terms_general(interp: EnvelopeInterpolator, d: int):
    cells = interp.cell_index
    pts = interp.points
    fact_d = math.factorial(d)
    integrals = np.empty(len(cells))
    weights = np.empty((len(cells), d + 1))
    for ci, cell in enumerate(cells):
        V = pts[cell]
        vol = abs(np.linalg.det(V[1:] - V[0])) / fact_d
        nodes = -interp.phi[cell]
        integrals[ci] = vol * fact_d * exp_divided_difference(nodes)
        for vi in range(d + 1):
            weights[ci, vi] = vol * fact_d * exp_divided_difference(
                np.append(nodes, nodes[vi]))
    return integrals, weights


def eval_exact(phi, hull: Hull, interp: EnvelopeInterpolator = None) -> ObjectiveReport:
    """Exact objective, integral and subgradient via the envelope's cells.

    Each linearity cell contributes vol * d! * (divided difference of exp at
    the negated vertex values); the subgradient weight of a cell vertex uses
    the same divided difference with that node repeated.  Raises
    ``NumericalInstability`` when the tableau cancels completely, in which
    case callers fall back to a fine grid.
    """
    phi_arr = _phi_array(phi)
    if interp is None:
        interp = EnvelopeInterpolator(hull.points, phi_arr)
    d = hull.dim
    if d == 1:
        integrals, weights = _exact_terms_1d(interp)
    else:
        integrals, weights = _exact_terms_general(interp, d)
    integral = float(integrals.sum())
    if not math.isfinite(integral):
        raise NumericalInstability("exact integral is not finite")

    n = len(phi_arr)
    gamma = np.zeros(n)
    np.add.at(gamma, interp.cell_index.ravel(), weights.ravel())
    g = np.full(n, 1.0 / n) - gamma
    _check_subgradient(g, integral, n)
    value = float(phi_arr.mean() + integral)
    return ObjectiveReport(value=value, integral=integral, subgradient=g, grid_size="exact")


def eval_grid(phi, grid, envelopes=None, *, points=None,
              interp: EnvelopeInterpolator = None) -> ObjectiveReport:
    """Grid approximation of the objective and one of its subgradients.

    ``envelopes`` may carry precomputed per-point envelope solutions (value
    and weight vector, e.g. from the LP solver); otherwise the envelope of
    phi over the data ``points`` is built once (or passed in as ``interp``)
    and evaluated across the whole grid at once.
    """
    phi_arr = _phi_array(phi)
    n = phi_arr.size
    m = grid.size
    if m == 0:
        raise ValueError("grid is empty")

    if envelopes is not None:
        vals = np.array([sol.value for sol in envelopes])
        coeffs = grid.weight * np.exp(-vals)
        gamma = np.zeros(n)
        for sol, c in zip(envelopes, coeffs):
            gamma += c * sol.alpha
    else:
        if interp is None:
            if points is None:
                raise ValueError("eval_grid needs envelopes, an interp, or the data points")
            interp = EnvelopeInterpolator(points, phi_arr)
        vals = interp.values(grid.points)
        coeffs = grid.weight * np.exp(-vals)
        gamma = interp.weighted_alpha_sum(grid.points, coeffs)

    integral = float(coeffs.sum())
    g = np.full(n, 1.0 / n) - gamma
    _check_subgradient(g, integral, n)
    value = float(phi_arr.mean() + integral)
    return ObjectiveReport(value=value, integral=integral, subgradient=g, grid_size=m)
