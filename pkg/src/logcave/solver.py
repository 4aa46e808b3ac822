"""Accelerated stochastic dual averaging over a smoothing sequence with
increasing integration grids, plus the non-convex initializer, the final
polishing step, and a slow high-accuracy reference solver.

Per iteration, the solver queries one of the four gradient approximators at
the extrapolated iterate, accumulates theta-weighted gradients, and maps the
accumulator back through a quadratic prox centered at the initializer:

    s      <- s + g_t / theta_t
    theta' =  2 / (1 + sqrt(1 + 4 / theta^2))
    z      =  phi_init - s / (L' + eta / theta'),   L' = B1 / (theta' u)
    x      <- (1 - theta) x + theta z
    y      <- (1 - theta') x + theta' z

The smoothing amount decays as u_t = theta_t * u and the grid size m_t grows
with t, which is what buys the fast rate on the objective scale.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .envelopes import EnvelopeInterpolator, EnvelopeLP, EnvelopeQP
from .errors import NonFiniteIterate, NumericalInstability
from .grids import Grid, GridFactory, GridSchedule, schedule_diagnostics, schedule_size
from .hull import Dataset, Hull, axis_grid_inside, build_hull, sample_uniform
from .objective import (TentVector, _safe_scaled_exp, eval_exact, eval_grid,
                        prop1_bounds)
from .rng import RngStream
from .smoothing import (SmoothingConfig, ball_sample, default_sigma_practical,
                        default_u, eta_rule, nesterov_value_grad,
                        randomized_value_grad, smoothing_constants)

METHODS = {
    # method -> (smoothing scheme, grid origin)
    "rs-di": ("randomized", "deterministic"),
    "rs-ri": ("randomized", "random"),
    "ns-di": ("nesterov", "deterministic"),
    "ns-ri": ("nesterov", "random"),
    "rs-rf": ("randomized", "random"),
}


@dataclass
class SolverConfig:
    method: str = "rs-di"
    T: int = 128
    u: float = None                  # smoothing scale override
    eta: float = None                # learning-rate constant override
    sigma: float = None              # practical sigma override
    schedule: GridSchedule = None
    seed: int = 0
    theory_mode: bool = False
    m_planes: int = 10
    eval_grid_target: int = 100_000
    reference_objective: float = None
    box_margin: float = 2.0
    practical_D: float = None        # overrides the practical diameter guess

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.method == "rs-rf" and self.schedule is not None \
                and self.schedule.kind != "fixed":
            raise ValueError("rs-rf requires a fixed grid schedule")


@dataclass
class RunRecord:
    t: int
    wall_seconds: float
    m_t: int
    objective: float
    best_objective: float
    relative_objective: float = None


@dataclass
class SolverState:
    phi0: np.ndarray
    s: np.ndarray
    theta: float
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    t: int
    L_next: float
    profile: list = field(default_factory=list)
    box_violations: int = 0
    integral_violations: int = 0


@dataclass
class FittedModel:
    phi: np.ndarray
    points: np.ndarray
    delta: float
    vertex_count: int
    objective_kind: str
    s: float
    final_objective: float
    integral_check: float
    method: str
    seed: int
    schedule: dict
    timings: dict
    containment_violations: dict
    profile: list
    parameters: dict


@dataclass
class ReferenceResult:
    tent: TentVector
    objective: float
    converged: bool
    iterations: int


def theta_next(theta: float) -> float:
    return 2.0 / (1.0 + math.sqrt(1.0 + 4.0 / theta ** 2))


def _standardize(points):
    mu = points.mean(axis=0)
    sd = points.std(axis=0)
    sd = np.where(sd <= 0, 1.0, sd)
    return (points - mu) / sd, mu, sd


def initialize_nonconvex(dataset: Dataset, hull: Hull, grid: Grid,
                         m_planes: int = 10, stream: RngStream = None,
                         max_iters: int = 100, tol: float = 1e-4,
                         return_trace: bool = False):
    """Tent values from a subgradient fit of a max-of-hyperplanes surrogate.

    The data are standardized coordinate-wise internally; hyperplane
    coefficients start from standard Gaussians and follow vanilla subgradient
    steps of size 1/sqrt(t) until the objective change drops below ``tol``.
    The returned tents are mapped back to the original coordinates through
    the log-Jacobian of the standardization.
    """
    if stream is None:
        stream = RngStream(0)
    pts, mu, sd = _standardize(dataset.points)
    n, d = pts.shape
    log_jac = float(np.sum(np.log(sd)))

    gpts = (grid.points - mu) / sd
    gweight = grid.weight / float(np.prod(sd))

    gen = stream.child("init", "planes").gen
    planes = gen.standard_normal((m_planes, d + 1))
    a = planes[:, :d]
    b = planes[:, d]

    def objective_terms(a, b):
        vals_data = pts @ a.T + b            # (n, m_planes)
        vals_grid = gpts @ a.T + b
        jd = np.argmax(vals_data, axis=1)
        jg = np.argmax(vals_grid, axis=1)
        md = vals_data[np.arange(n), jd]
        mg = vals_grid[np.arange(len(gpts)), jg]
        f0 = md.mean() + gweight * np.exp(-mg).sum()
        return f0, jd, jg, mg

    prev, jd, jg, mg = objective_terms(a, b)
    trace = [prev]
    for t in range(1, max_iters + 1):
        grad_a = np.zeros_like(a)
        grad_b = np.zeros_like(b)
        np.add.at(grad_a, jd, pts / n)
        np.add.at(grad_b, jd, np.full(n, 1.0 / n))
        coeff = -gweight * np.exp(-mg)
        np.add.at(grad_a, jg, coeff[:, None] * gpts)
        np.add.at(grad_b, jg, coeff)

        step = t ** -0.5
        a = a - step * grad_a
        b = b - step * grad_b
        f0, jd, jg, mg = objective_terms(a, b)
        trace.append(f0)
        if abs(prev - f0) < tol:
            break
        prev = f0

    phi_std = np.max(pts @ a.T + b, axis=1)
    phi = phi_std + log_jac
    if return_trace:
        return phi, trace
    return phi


def envelope_projection(points, phi) -> np.ndarray:
    """Replace tent values by their own envelope values at the data.

    This never increases the objective and makes the envelope interpolate
    the tents exactly, which the polished model relies on.
    """
    return EnvelopeInterpolator(points, phi).values_at_data()


def polish(points, hull: Hull, phi, fallback_points: int = 1_000_000,
           stream: RngStream = None) -> tuple:
    """Shift tents by log of the exact integral so the density integrates to 1.

    Falls back to a large uniform quadrature grid when the closed form is
    numerically unstable.  Returns (polished phi, integral before shift).
    """
    phi = np.asarray(phi, dtype=float)
    try:
        rep = eval_exact(phi, hull)
        integral = rep.integral
    except NumericalInstability:
        if stream is None:
            stream = RngStream(0)
        pts = sample_uniform(hull, fallback_points, stream.child("polish"))
        interp = EnvelopeInterpolator(points, phi)
        vals = interp.values(pts)
        integral = float(hull.total_volume * np.exp(-vals).mean())
    return phi + math.log(integral), integral


class _FitContext:
    """Everything one dual-averaging run needs besides the iterate state."""

    def __init__(self, dataset, hull, config, smoothing_cfg, u, eta,
                 grid_factory, stream, eval_points, I_low, I_high):
        self.dataset = dataset
        self.hull = hull
        self.config = config
        self.smoothing = smoothing_cfg
        self.u = u
        self.eta = eta
        self.grids = grid_factory
        self.stream = stream
        self.eval_points = eval_points
        self.I_low = I_low
        self.I_high = I_high
        self.lp = EnvelopeLP(dataset.points, hull)
        self.qp = EnvelopeQP(dataset.points, hull)
        self.clock_start = None

    def gradient(self, phi, u_t, t):
        scheme = self.smoothing.scheme
        grid = self.grids.make(t)
        if scheme == "nesterov":
            _, grad = nesterov_value_grad(phi, max(u_t, 1e-12), grid,
                                          self.dataset.points, self.qp)
        else:
            _, grad = randomized_value_grad(phi, u_t, grid,
                                            self.stream.child("smooth", t),
                                            self.dataset.points, self.lp)
        return grad, grid

    def eval_objective(self, phi):
        interp = EnvelopeInterpolator(self.dataset.points, phi)
        vals = interp.values(self.eval_points)
        weight = self.hull.total_volume / len(self.eval_points)
        integral = float(weight * np.exp(-vals).sum())
        return float(phi.mean() + integral), integral


def step(state: SolverState, ctx: _FitContext) -> SolverState:
    """One dual-averaging iteration; appends a RunRecord to the profile."""
    cfg = ctx.config
    t = state.t
    theta_t = state.theta
    u_t = theta_t * ctx.u

    grad, grid = ctx.gradient(state.y, u_t, t)
    g = grad.vector

    state.s = state.s + g / theta_t
    theta_n = theta_next(theta_t)
    u_next = max(theta_n * ctx.u, 1e-300)
    L_next = ctx.smoothing.B1 / u_next
    denom = L_next + ctx.eta / theta_n
    z = state.phi0 - state.s / denom
    x = (1.0 - theta_t) * state.x + theta_t * z
    y = (1.0 - theta_n) * x + theta_n * z

    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(x))):
        raise NonFiniteIterate("iterate became non-finite; eta or u is mis-scaled")

    state.z, state.x, state.y = z, x, y
    state.theta = theta_n
    state.L_next = L_next
    state.t = t + 1

    obj, integral = ctx.eval_objective(x)
    best = min(obj, state.profile[-1].best_objective) if state.profile else obj
    rel = None
    if cfg.reference_objective is not None:
        rel = (best - cfg.reference_objective) / cfg.reference_objective
    state.profile.append(RunRecord(
        t=t, wall_seconds=time.perf_counter() - ctx.clock_start, m_t=grid.size,
        objective=obj, best_objective=best, relative_objective=rel))

    # feasible-set tracking (reported, never enforced)
    lo, hi = ctx.box_low, ctx.box_high
    if np.min(y) < lo or np.max(y) > hi:
        state.box_violations += 1
    if not (ctx.I_low <= integral <= ctx.I_high):
        state.integral_violations += 1
    return state


def default_schedule(method: str, n: int) -> GridSchedule:
    if method == "rs-rf":
        return GridSchedule("fixed", C=10_000)
    return GridSchedule("multi_stage", C=2 * n, rho=2)


def practical_bounds(phi_init, delta, margin):
    lo = float(phi_init.min()) - margin
    hi = float(phi_init.max()) + margin
    return lo, hi, delta * math.exp(-hi), delta * math.exp(-lo)


# Empirical gradient-curvature scale of the normalized objective along the
# solution path, replacing the worst-case box constant in B1.  Calibrated on
# desk-scale instances (d <= 2, n <= 200); larger values slow convergence,
# much smaller ones overshoot early.
PRACTICAL_CURVATURE = 0.05


def practical_smoothing(scheme, n, delta, lo, I_low, I_high, u) -> SmoothingConfig:
    """Smoothing constants for practical runs.

    B0 and sigma keep their box-bound forms for reporting; B1, which actually
    drives the prox weight L_t = B1/u_t, uses the calibrated path-curvature
    scale instead of the worst-case bound (which freezes the iterates at any
    realistic box size).
    """
    r_eff = u * math.sqrt(2.0 * math.log(n) / (n + 1.0)) \
        if scheme == "randomized" else u
    cfg = smoothing_constants(scheme, n, delta, lo, I_low, I_high, r=r_eff)
    cfg.B1 = PRACTICAL_CURVATURE * math.sqrt(n)
    return cfg


def fit(dataset: Dataset, config: SolverConfig) -> FittedModel:
    """Full pipeline: hull, initializer, dual averaging, polish."""
    timings = {}
    t0 = time.perf_counter()
    hull = build_hull(dataset)
    timings["hull_seconds"] = time.perf_counter() - t0

    stream = RngStream(config.seed)
    n, d = dataset.n, dataset.d
    delta = hull.total_volume
    schedule = config.schedule or default_schedule(config.method, n)
    scheme, origin = METHODS[config.method]

    t0 = time.perf_counter()
    factory = GridFactory(hull, schedule, origin, stream)
    init_grid = factory.make(0)
    phi_init = initialize_nonconvex(dataset, hull, init_grid,
                                    config.m_planes, stream)
    phi_init, _ = polish(dataset.points, hull, phi_init, stream=stream)
    timings["init_seconds"] = time.perf_counter() - t0

    if config.theory_mode:
        lo, hi = prop1_bounds(n, d, delta)
        I_low = _safe_scaled_exp(delta, -hi)
        I_high = _safe_scaled_exp(delta, -lo)
        D = math.sqrt(n) * (hi - lo)
        u = config.u if config.u is not None else None
        cfg0 = smoothing_constants(scheme, n, delta, lo, I_low, I_high, r=1.0)
        if u is None:
            u = default_u(scheme, n, D, theory=True, B0=cfg0.B0, B1=cfg0.B1)
        smoothing_cfg = smoothing_constants(scheme, n, delta, lo, I_low, I_high, r=u)
        sigma = config.sigma if config.sigma is not None else smoothing_cfg.sigma
    else:
        # reported feasible box: initializer tent range plus a margin
        lo, hi, I_low, I_high = practical_bounds(phi_init, delta, config.box_margin)
        # practical diameter: the raw tent range of the (normalized) initializer
        D = config.practical_D if config.practical_D is not None else \
            float(phi_init.max() - phi_init.min())
        u = config.u if config.u is not None else default_u(scheme, n, D)
        smoothing_cfg = practical_smoothing(scheme, n, delta, lo, I_low, I_high, u)
        sigma = config.sigma if config.sigma is not None else \
            default_sigma_practical(scheme)

    diag = schedule_diagnostics(schedule, config.T)
    eta = config.eta if config.eta is not None else eta_rule(sigma, diag["M1"], D)

    eval_points = _shared_eval_grid(hull, config.eval_grid_target)

    ctx = _FitContext(dataset, hull, config, smoothing_cfg, u, eta,
                      factory, stream, eval_points, I_low, I_high)
    ctx.box_low, ctx.box_high = lo, hi

    state = SolverState(phi0=phi_init.copy(), s=np.zeros(n), theta=1.0,
                        x=phi_init.copy(), y=phi_init.copy(), z=phi_init.copy(),
                        t=0, L_next=smoothing_cfg.B1 / max(u, 1e-300))

    t0 = time.perf_counter()
    ctx.clock_start = t0
    for _ in range(config.T):
        state = step(state, ctx)
    timings["solve_seconds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    phi_T = envelope_projection(dataset.points, state.x)
    phi_T, _ = polish(dataset.points, hull, phi_T, stream=stream)
    final_rep = eval_exact(phi_T, hull)
    timings["polish_seconds"] = time.perf_counter() - t0

    return FittedModel(
        phi=phi_T,
        points=dataset.points,
        delta=delta,
        vertex_count=len(hull.vertices),
        objective_kind="logconcave",
        s=0.0,
        final_objective=final_rep.value,
        integral_check=final_rep.integral,
        method=config.method,
        seed=config.seed,
        schedule={"kind": schedule.kind, "C": schedule.C, "rho": schedule.rho,
                  "beta": schedule.beta, "C1": schedule.C1, "rho1": schedule.rho1},
        timings=timings,
        containment_violations={"box": state.box_violations,
                                "integral": state.integral_violations},
        profile=state.profile,
        parameters={"u": u, "eta": eta, "sigma": sigma, "D": D,
                    "box_low": lo, "box_high": hi,
                    "I_low": I_low, "I_high": I_high,
                    "B0": smoothing_cfg.B0, "B1": smoothing_cfg.B1,
                    "theory_mode": config.theory_mode,
                    "M1": diag["M1"], "total_queries": diag["total_queries"]},
    )


def _shared_eval_grid(hull: Hull, target: int) -> np.ndarray:
    """Fixed, seed-independent deterministic grid for profile objectives."""
    d = hull.dim
    if d == 1:
        return axis_grid_inside(hull, max(target, 2))
    lo, hi = hull.bounding_box()
    frac = hull.total_volume / float(np.prod(hi - lo))
    p = max(2, math.ceil((target / frac) ** (1.0 / d)))
    while True:
        pts = axis_grid_inside(hull, p)
        if len(pts) >= target or p > 2000:
            return pts
        p = max(p + 1, int(p * 1.1))


def reference_solve(dataset: Dataset, iters: int = 200_000,
                    tol: float = 1e-8) -> ReferenceResult:
    """High-accuracy (slow) solve by subgradient descent with adaptive
    Polyak-style steps on the exact objective.

    Intended for small instances only; the returned tent is polished.  A
    warning is emitted when the tolerance is not met within ``iters``.
    """
    hull = build_hull(dataset)
    n, d = dataset.n, dataset.d
    delta = hull.total_volume

    phi = np.full(n, math.log(delta))          # uniform-density tent
    rep = eval_exact(phi, hull)
    f_best, phi_best = rep.value, phi.copy()
    gap = max(1.0, 0.1 * abs(f_best))
    window_best = f_best
    patience = 60
    since_check = 0
    converged = False
    it = 0

    while it < iters:
        it += 1
        g = rep.subgradient
        gsq = float(g @ g)
        if gsq < 1e-24:
            converged = True
            break
        target = f_best - gap
        step_len = (rep.value - target) / gsq
        phi = phi - step_len * g
        try:
            rep = eval_exact(phi, hull)
        except NumericalInstability:
            phi = phi_best.copy()
            rep = eval_exact(phi, hull)
            gap *= 0.5
            continue
        if rep.value < f_best:
            f_best, phi_best = rep.value, phi.copy()

        since_check += 1
        if since_check >= patience:
            improved = window_best - f_best
            if improved < gap / 4.0:
                gap *= 0.5
                # restart from the incumbent when the target was too ambitious
                phi = phi_best.copy()
                rep = eval_exact(phi, hull)
            if gap < tol and improved < tol:
                converged = True
                break
            window_best = f_best
            since_check = 0

    phi_best = envelope_projection(dataset.points, phi_best)
    phi_best, _ = polish(dataset.points, hull, phi_best)
    final = eval_exact(phi_best, hull)
    if not converged:
        warnings.warn(f"reference solve stopped at {it} iterations above tolerance {tol}")
    tent = TentVector.with_prop1_bounds(phi_best, n, d, delta)
    return ReferenceResult(tent=tent, objective=final.value,
                           converged=converged, iterations=it)
