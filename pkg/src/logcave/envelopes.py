"""Lower-convex-envelope oracles: the envelope LP, its regularized QP, and a
vectorized evaluator for a fixed tent vector.

The envelope of tent values (phi_1, ..., phi_n) at a query x is

    cef[phi](x) = min { alpha . phi : alpha in E(x) },
    E(x) = { alpha >= 0 : X^T alpha = x, 1^T alpha = 1 },

a linear program with d+1 equality rows.  The quadratic variant adds
(u/2) * ||alpha - 1/n||^2, whose unique solution is the Euclidean projection
of 1/n - phi/u onto E(x).

Per-point solves use a revised simplex (LP) and a primal active-set
projection (QP), both warm-startable so that sweeps over sorted grids cost a
handful of pivots per point.  For a *fixed* phi, :class:`EnvelopeInterpolator`
instead builds the piecewise-affine envelope once (lower hull of the lifted
points) and evaluates any number of queries with dense linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateData, Infeasible, NoConvergence
from .hull import Hull, _quickhull

FEAS_TOL = 1e-9        # on equality constraints, after row scaling
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11


@dataclass(frozen=True)
class WeightPolytope:
    """The feasible set E(x) of convex-combination weights for a query x."""

    data_matrix: np.ndarray     # (n, d) stacked points
    query: np.ndarray           # (d,)


@dataclass
class EnvelopeSolution:
    value: float
    alpha: np.ndarray
    active_support: np.ndarray
    basis: tuple = None


class EnvelopeLP:
    """Warm-startable revised simplex for the envelope LP over one dataset."""

    def __init__(self, points, hull: Hull = None):
        points = np.asarray(points, dtype=float)
        n, d = points.shape
        A = np.vstack([points.T, np.ones((1, n))])
        scale = 1.0 / np.maximum(1.0, np.max(np.abs(A), axis=1))
        self.points = points
        self.A = A * scale[:, None]
        self.row_scale = scale
        self.n, self.m = n, d + 1
        self.hull = hull
        self.max_dantzig = 50 * n
        self.hard_cap = 50 * n + 200 * n

    def _rhs(self, x):
        return np.append(x, 1.0) * self.row_scale

    def _basis_state(self, basis, b):
        B = self.A[:, basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return None, None
        xb = Binv @ b
        if xb.min() < -FEAS_TOL:
            return None, None
        return Binv, xb

    def _locate_basis(self, x):
        if self.hull is not None:
            k, coords = self.hull.locate_simplex(x)
            if k is None:
                return None
            return np.array(self.hull.simplices[k])
        return None

    def _phase1(self, b):
        """Feasible basis via artificial variables; None when E(x) is empty."""
        m, n = self.m, self.n
        signs = np.where(b >= 0, 1.0, -1.0)
        A1 = np.hstack([self.A, np.diag(signs)])
        c1 = np.concatenate([np.zeros(n), np.ones(m)])
        basis = np.arange(n, n + m)
        Binv = np.diag(signs)
        xb = signs * b
        for _ in range(self.hard_cap):
            y = Binv.T @ c1[basis]
            r = c1 - y @ A1
            r[basis] = 0.0
            j = int(np.argmin(r[:n]))
            if r[j] >= -OPT_TOL:
                break
            w = Binv @ A1[:, j]
            pos = w > PIVOT_TOL
            if not np.any(pos):
                break
            ratios = np.where(pos, xb / np.where(pos, w, 1.0), np.inf)
            l = int(np.argmin(ratios))
            basis[l] = j
            piv = w[l]
            Binv[l] /= piv
            w2 = w.copy()
            w2[l] = 0.0
            Binv -= np.outer(w2, Binv[l])
            xb = Binv @ b
        if (c1[basis] * xb).sum() > 1e-7:
            return None
        if np.any(basis >= n):
            # drive remaining (zero-valued) artificials out when possible
            for pos_l in np.nonzero(basis >= n)[0]:
                row = Binv[pos_l] @ self.A
                cand = np.nonzero(np.abs(row) > 1e-8)[0]
                cand = cand[~np.isin(cand, basis)]
                if cand.size:
                    j = int(cand[0])
                    w = Binv @ self.A[:, j]
                    piv = w[pos_l]
                    basis[pos_l] = j
                    Binv[pos_l] /= piv
                    w2 = w.copy()
                    w2[pos_l] = 0.0
                    Binv -= np.outer(w2, Binv[pos_l])
            if np.any(basis >= n):
                return None
        return np.array(basis)

    def _pivot_to_optimal(self, phi, b, basis, Binv, xb):
        """Primal simplex from a feasible basis; mutates basis/Binv in place."""
        A = self.A
        pivots = 0
        while True:
            y = Binv.T @ phi[basis]
            r = phi - y @ A
            r[basis] = 0.0
            if pivots < self.max_dantzig:
                j = int(np.argmin(r))
                if r[j] >= -OPT_TOL:
                    break
            else:
                negs = np.nonzero(r < -OPT_TOL)[0]
                if negs.size == 0:
                    break
                j = int(negs[0])           # Bland's rule
            w = Binv @ A[:, j]
            pos = w > PIVOT_TOL
            if not np.any(pos):
                raise Infeasible("LP unbounded: polytope data are inconsistent")
            ratios = np.where(pos, xb / np.where(pos, w, 1.0), np.inf)
            if pivots < self.max_dantzig:
                l = int(np.argmin(ratios))
            else:
                best = ratios.min()
                ties = np.nonzero(ratios <= best + PIVOT_TOL)[0]
                l = int(ties[np.argmin(basis[ties])])
            basis[l] = j
            piv = w[l]
            Binv[l] /= piv
            w2 = w.copy()
            w2[l] = 0.0
            Binv -= np.outer(w2, Binv[l])
            xb = Binv @ b
            np.maximum(xb, 0.0, out=xb)
            pivots += 1
            if pivots > self.hard_cap:
                raise NoConvergence("simplex exceeded its pivot cap")
        return float(phi[basis] @ xb), xb, basis, Binv

    def solve_seeded(self, phi, b, basis, Binv):
        """Solve with a known-feasible (basis, Binv) pair for the scaled rhs b.

        The seed must satisfy Binv @ b >= 0, e.g. a triangulation cell of the
        query point; returns (value, basic weights, basis, Binv).
        """
        xb = Binv @ b
        np.maximum(xb, 0.0, out=xb)
        return self._pivot_to_optimal(phi, b, basis, Binv, xb)

    def solve(self, phi, x, basis=None):
        """Minimize alpha.phi over E(x).

        Returns (value, alpha, basis); raises ``Infeasible`` when x is outside
        the hull of the data.  ``basis`` warm-starts the solve and the
        returned basis can seed the next query.
        """
        phi = np.asarray(phi, dtype=float)
        b = self._rhs(np.asarray(x, dtype=float))
        Binv = xb = None
        if basis is not None:
            Binv, xb = self._basis_state(np.asarray(basis), b)
            if Binv is not None:
                basis = np.array(basis)
        if Binv is None:
            basis = self._locate_basis(np.asarray(x, dtype=float))
            if basis is not None:
                Binv, xb = self._basis_state(basis, b)
            if Binv is None:
                basis = self._phase1(b)
                if basis is None:
                    raise Infeasible("query point lies outside the convex hull")
                Binv, xb = self._basis_state(basis, b)
                if Binv is None:
                    raise Infeasible("query point lies outside the convex hull")

        value, xb, basis, _ = self._pivot_to_optimal(phi, b, basis, Binv, xb)
        alpha = np.zeros(self.n)
        alpha[basis] = xb
        return value, alpha, basis


class EnvelopeQP:
    """Active-set projection solver for the regularized envelope QP."""

    def __init__(self, points, hull: Hull = None):
        points = np.asarray(points, dtype=float)
        n, d = points.shape
        A = np.vstack([points.T, np.ones((1, n))])
        scale = 1.0 / np.maximum(1.0, np.max(np.abs(A), axis=1))
        self.points = points
        self.A = A * scale[:, None]
        self.row_scale = scale
        self.n, self.m = n, d + 1
        self.lp = EnvelopeLP(points, hull)
        self.cap = 100 * n

    def project(self, v, x, start=None):
        """Euclidean projection of v onto E(x).

        Primal active set: repeatedly solve the equality-constrained
        projection on the free variables, stepping to the first bound when
        the solution leaves the nonnegative orthant.  Degenerate zero-length
        pin/release pairs are banned from immediate re-release, which breaks
        the cycles such ties can otherwise cause.
        """
        b = np.append(np.asarray(x, dtype=float), 1.0) * self.row_scale
        A, n = self.A, self.n

        if start is None:
            _, start, _ = self.lp.solve(np.zeros(n), x)
        alpha = np.maximum(start, 0.0)
        free = alpha > 1e-12
        banned = np.zeros(n, dtype=bool)

        for _ in range(self.cap):
            AF = A[:, free]
            M = AF @ AF.T
            rhs = b - AF @ v[free]
            try:
                lam = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                lam = np.linalg.lstsq(M, rhs, rcond=None)[0]
            beta_f = v[free] + lam @ AF
            # one step of iterative refinement: with v ~ phi/u the direct
            # formula cancels catastrophically for small u
            resid = AF @ beta_f - b
            try:
                corr = np.linalg.solve(M, resid)
            except np.linalg.LinAlgError:
                corr = np.linalg.lstsq(M, resid, rcond=None)[0]
            beta_f = beta_f - corr @ AF
            beta = np.zeros(n)
            beta[free] = beta_f

            neg = free & (beta < -FEAS_TOL)
            if not np.any(neg):
                moved = float(np.max(np.abs(beta - alpha)))
                alpha = np.maximum(beta, 0.0)
                if moved > 1e-13:
                    banned[:] = False
                mu = -(v + lam @ A)
                mu[free] = 0.0
                mu[banned] = 0.0
                j = int(np.argmin(mu))
                if mu[j] >= -OPT_TOL:
                    return alpha
                free[j] = True
                banned[j] = True
                continue
            # partial step toward beta, blocking at the first variable to hit 0
            delta = beta - alpha
            shrink = free & (delta < -PIVOT_TOL)
            steps = np.where(shrink, -alpha / np.where(shrink, delta, -1.0), np.inf)
            best = float(np.min(steps))
            ties = np.nonzero(steps <= best + 1e-15)[0]
            l = int(ties[0])
            t = min(1.0, max(0.0, best))
            if t > 1e-13:
                banned[:] = False
            alpha = np.maximum(alpha + t * delta, 0.0)
            alpha[l] = 0.0
            free[l] = False
        raise NoConvergence("active-set projection exceeded its iteration cap")


def cef_lp(polytope: WeightPolytope, phi, hull: Hull = None) -> EnvelopeSolution:
    """Envelope value and an optimal basic weight vector at the query point."""
    solver = EnvelopeLP(polytope.data_matrix, hull)
    value, alpha, basis = solver.solve(phi, polytope.query)
    support = np.nonzero(alpha > 1e-12)[0]
    return EnvelopeSolution(value=value, alpha=alpha, active_support=support,
                            basis=tuple(int(i) for i in basis))


def cef_qp(polytope: WeightPolytope, phi, u: float, hull: Hull = None) -> EnvelopeSolution:
    """Regularized envelope value q_u and its unique optimal weights.

    The solution is the projection of 1/n - phi/u onto E(x); the value adds
    the quadratic penalty (u/2) * ||alpha - 1/n||^2 to alpha.phi.
    """
    if u <= 0:
        raise ValueError("u must be positive; use cef_lp for u = 0")
    phi = np.asarray(phi, dtype=float)
    n = phi.size
    solver = EnvelopeQP(polytope.data_matrix, hull)
    v = np.full(n, 1.0 / n) - phi / u
    alpha = solver.project(v, polytope.query)
    value = float(alpha @ phi + 0.5 * u * np.sum((alpha - 1.0 / n) ** 2))
    support = np.nonzero(alpha > 1e-12)[0]
    return EnvelopeSolution(value=value, alpha=alpha, active_support=support)


class EnvelopeInterpolator:
    """The envelope of a fixed tent vector as an explicit piecewise-affine map.

    Lifting the data to (x_i, phi_i) and taking the lower hull yields the
    linearity cells of cef[phi]; inside C_n the envelope is the maximum of the
    cells' affine functions, so batched evaluation is a matmul.
    """

    def __init__(self, points, phi):
        points = np.asarray(points, dtype=float)
        phi = np.asarray(phi, dtype=float)
        n, d = points.shape
        self.points = points
        self.phi = phi
        self.d = d

        if d == 1:
            self._build_1d(points[:, 0], phi)
        else:
            self._build_general(points, phi)

        # affine data per cell: value = grad . x + intercept
        cells = self.cells
        k = len(cells)
        self.grads = np.empty((k, d))
        self.intercepts = np.empty(k)
        self.cell_matrix_inv = np.empty((k, d + 1, d + 1))
        for i, cell in enumerate(cells):
            V = points[list(cell)]
            M = np.empty((d + 1, d + 1))
            M[:, :d] = V
            M[:, d] = 1.0
            coef = np.linalg.solve(M, phi[list(cell)])
            self.grads[i] = coef[:d]
            self.intercepts[i] = coef[d]
            lift = np.empty((d + 1, d + 1))
            lift[:d, :] = V.T
            lift[d, :] = 1.0
            self.cell_matrix_inv[i] = np.linalg.inv(lift)
        self.cell_index = np.array([list(c) for c in cells])

    def _build_1d(self, x, phi):
        order = np.argsort(x, kind="stable")
        xs, ps = x[order], phi[order]
        keep = [0]
        for i in range(1, len(xs)):
            while len(keep) >= 2:
                i0, i1 = keep[-2], keep[-1]
                if (ps[i1] - ps[i0]) * (xs[i] - xs[i1]) >= (ps[i] - ps[i1]) * (xs[i1] - xs[i0]):
                    keep.pop()
                else:
                    break
            keep.append(i)
        idx = order[keep]
        self.cells = [(int(idx[i]), int(idx[i + 1])) for i in range(len(idx) - 1)]

    def _build_general(self, points, phi):
        lifted = np.column_stack([points, phi])
        scale = max(1.0, float(np.max(np.abs(lifted))))
        try:
            facets = _quickhull(lifted, tol_above=1e-10 * scale)
        except DegenerateData:
            facets = None
        if facets is None:
            # phi is exactly affine in x: a single linear piece over C_n,
            # triangulated by any cover; reuse the data hull's triangulation
            from .hull import build_hull, make_dataset
            h = build_hull(make_dataset(points))
            self.cells = [tuple(s) for s in h.simplices]
            return
        cells = []
        for f in facets:
            if f.normal[-1] < -1e-10:
                cells.append(tuple(sorted(f.vertices)))
        if not cells:
            raise DegenerateData("no lower facets found for the lifted points")
        self.cells = cells

    def values(self, xs) -> np.ndarray:
        """Envelope values at query points assumed to lie inside C_n."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return np.max(xs @ self.grads.T + self.intercepts, axis=1)

    def values_and_cells(self, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        table = xs @ self.grads.T + self.intercepts
        cells = np.argmax(table, axis=1)
        return table[np.arange(len(xs)), cells], cells

    def weighted_alpha_sum(self, xs, coeffs) -> np.ndarray:
        """Sum of coeffs_j * alpha*(xs_j) over the batch, as a dense n-vector.

        alpha*(x) is the barycentric weight vector of x in its linearity cell,
        which is an optimal envelope-LP solution at x.
        """
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        coeffs = np.asarray(coeffs, dtype=float)
        _, cells = self.values_and_cells(xs)
        lifted = np.column_stack([xs, np.ones(len(xs))])
        bary = np.einsum("mij,mj->mi", self.cell_matrix_inv[cells], lifted)
        out = np.zeros(len(self.phi))
        np.add.at(out, self.cell_index[cells].ravel(), (bary * coeffs[:, None]).ravel())
        return out

    def values_at_data(self) -> np.ndarray:
        return self.values(self.points)
