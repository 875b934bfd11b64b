"""Minimization of the discrete energy with continuation in k and delta.

The smoothed energy is piecewise smooth in every nodal value, with kinks
where a value crosses 0 or delta.  The descent therefore works with
one-sided derivatives: each step moves every node inside its current
smooth piece (a projected path that stops at the next kink), and the
stationarity measure uses the one-sided slope that actually descends.
Nodes that sit exactly on a kink with no descending side are pinned.

Directions come from L-BFGS preconditioned by the P1 stiffness matrix;
steepest descent is the fallback when the quasi-Newton direction does
not descend.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as spla

from . import _kernels
from .energy import EnergyModel
from .errors import DomainError, LineSearchFailure, NonFiniteEnergy, ValidationError
from .grid import stiffness_matrix
from .nfunction import EnergyLaw
from .options import SolverOptions
from .problem import sample, validate

log = logging.getLogger(__name__)

__all__ = ["SolverOptions", "SolveResult", "StageSummary", "TraceRecord",
           "minimize_stage", "solve", "oracle_1d", "phi_harmonic_replacement",
           "harmonic_extension", "multistart", "stage_laws"]

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class TraceRecord:
    stage_k: float
    stage_delta: float
    iter: int
    energy: float
    grad_norm: float
    step: float


@dataclass
class StageSummary:
    k: float
    delta: float
    iterations: int
    energy: float
    grad_norm: float
    converged: bool
    field: np.ndarray = field(repr=False, default=None)


@dataclass
class SolveResult:
    field: np.ndarray
    energy_value: float
    breakdown: tuple
    iterations: int
    final_grad_norm: float
    converged: bool
    trace: list = field(default_factory=list)
    per_stage: list = field(default_factory=list)


# ----------------------------------------------------------------------
# kink-aware descent on a vector of free values
# ----------------------------------------------------------------------

def _descent_slope(g_above, g_below):
    """One-sided slope that descends, 0 if neither side does."""
    up = g_above < 0
    down = g_below > 0
    pick_up = up & ~(down & (g_below > -g_above))
    return np.where(pick_up, g_above, np.where(down, g_below, 0.0))


class _Piecewise:
    def __init__(self, kinks, box=None):
        self.kinks = np.asarray(sorted(kinks), dtype=float)
        self.box = box

    def blocked(self, x, d):
        """Components that would leave the box."""
        if self.box is None:
            return np.zeros(x.shape, dtype=bool)
        lo, hi = self.box
        return ((x <= lo) & (d < 0)) | ((x >= hi) & (d > 0))

    def project(self, x, sigma):
        """Zero the slopes that only point out of the box."""
        if self.box is None:
            return sigma
        lo, hi = self.box
        out = ((x <= lo) & (sigma > 0)) | ((x >= hi) & (sigma < 0))
        return np.where(out, 0.0, sigma)

    def at_kink(self, x):
        if self.kinks.size == 0:
            return np.zeros(x.shape, dtype=bool)
        return np.isin(x, self.kinks)

    def bounds(self, x):
        k = self.kinks
        if k.size == 0:
            down, up = np.full(x.shape, -np.inf), np.full(x.shape, np.inf)
            if self.box is not None:
                down, up = np.maximum(down, self.box[0]), np.minimum(up, self.box[1])
            return down, up
        kk = np.concatenate([k, [np.inf]])
        up = kk[np.searchsorted(k, x, side="right")]
        kd = np.concatenate([[-np.inf], k])
        down = kd[np.searchsorted(k, x, side="left")]
        if self.box is not None:
            down = np.maximum(down, self.box[0])
            up = np.minimum(up, self.box[1])
        return down, up


def _descend(fun, dfun, x0, kinks, opts, precond, label, max_iters=None,
             box=None, noise=None):
    """Minimize a piecewise-smooth function of the free values.

    ``fun(x)`` returns ``(E, g_above, g_below)``; E may be inf.
    ``dfun(x, dx)`` returns ``E(x + dx) - E(x)`` computed from local
    differences, which keeps the sufficient-decrease test meaningful far
    below the rounding level of E itself.  The energy carried along the
    trace is the start value plus the accepted differences, so it is
    nonincreasing by construction.
    Returns ``(x, E, stationarity, iterations, converged, trace)`` where
    trace holds ``(iter, energy, grad_norm, step)`` tuples.
    ``box = (lo, hi)`` optionally confines each value to an interval; the
    stationarity measure is then the projected one.
    ``noise(x)`` optionally gives the rounding level of the gradient at
    x: when no admissible step exists and the stationarity is already
    below it, the iterate is reported as converged instead of raising.
    """
    max_iters = opts.max_iters if max_iters is None else max_iters
    pw = _Piecewise(kinks, box)
    x = np.array(x0, dtype=float)
    E, ga, gb = fun(x)
    if not np.isfinite(E):
        raise NonFiniteEnergy(f"{label}: starting energy is not finite")
    sigma = pw.project(x, _descent_slope(ga, gb))
    gnorm = float(np.max(np.abs(sigma))) if sigma.size else 0.0
    trace = [(0, E, gnorm, 0.0)]
    memory = deque(maxlen=opts.memory)
    it = 0
    while gnorm > opts.grad_tol and it < max_iters:
        at_kink = pw.at_kink(x)
        candidates = ("lbfgs", "precond", "steepest") if memory else ("precond", "steepest")
        step = None
        for kind in candidates:
            d = _direction(kind, sigma, memory, precond)
            # kink nodes only move toward their descending side
            bad = at_kink & ((sigma == 0) | (np.sign(d) == np.sign(sigma)))
            d[bad] = 0.0
            d[pw.blocked(x, d)] = 0.0
            slope = float(np.where(d > 0, ga, gb) @ d)
            if not slope < 0:
                continue
            step = _line_search(fun, dfun, x, d, ga, gb, pw, opts, kind)
            if step is not None:
                break
            memory.clear()
        if step is None and noise is not None and gnorm <= noise(x):
            return x, E, gnorm, it, True, trace
        if step is None:
            raise LineSearchFailure(
                f"{label}: no admissible step at iteration {it} "
                f"(energy {E:.17g}, stationarity {gnorm:.3e})",
                iterate=x.copy(), trace=trace)
        x_new, dE, ga_new, gb_new, alpha = step
        sigma_new = pw.project(x_new, _descent_slope(ga_new, gb_new))
        s = x_new - x
        y = sigma_new - sigma
        sy = float(s @ y)
        if sy > 1e-12 * math.sqrt(float(s @ s) * float(y @ y)) and sy > 0:
            memory.append((s, y, 1.0 / sy))
        x, ga, gb, sigma = x_new, ga_new, gb_new, sigma_new
        E = E + dE
        gnorm = float(np.max(np.abs(sigma)))
        it += 1
        trace.append((it, E, gnorm, alpha))
    return x, E, gnorm, it, gnorm <= opts.grad_tol, trace


def _direction(kind, sigma, memory, precond):
    if kind == "steepest":
        return -sigma.copy()
    if kind == "precond" or not memory:
        return -precond(sigma)
    q = sigma.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    s, y, rho = memory[-1]
    My = precond(y)
    gamma = float(s @ y) / float(y @ My)
    r = gamma * precond(q)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * float(y @ r)
        r += (a - b) * s
    return -r


def _line_search(fun, dfun, x, d, ga, gb, pw, opts, kind):
    """Backtracking along the path clipped at the next kink of each node."""
    c, tau = opts.armijo_c, opts.backtrack_factor
    down, up = pw.bounds(x)
    scale = max(1.0, float(np.max(np.abs(x)))) if x.size else 1.0
    dmax = float(np.max(np.abs(d)))
    alpha = 1.0
    if kind == "steepest":
        alpha = min(1.0, 0.1 * scale / dmax)
    floor = 4.0 * _EPS * scale
    if pw.box is not None:
        # stay strictly inside the box: approach its faces geometrically
        lo, hi = pw.box
        with np.errstate(divide="ignore", invalid="ignore"):
            room = np.where(d < 0, (x - lo) / -d, np.where(d > 0, (hi - x) / d, np.inf))
        room = room[room > 0]
        if room.size:
            alpha = min(alpha, 0.5 * float(np.min(room)))
    while alpha * dmax > floor:
        x_new = np.clip(x + alpha * d, down, up)
        move = x_new - x
        if np.any(move != 0):
            # linear model of the piecewise energy along the clipped path
            model = float(np.where(move > 0, ga, gb) @ move)
            dE = dfun(x, move)
            if np.isfinite(dE) and dE <= c * model and model < 0:
                E_new, ga_new, gb_new = fun(x_new)
                if ga_new is not None:
                    return x_new, dE, ga_new, gb_new, alpha
        alpha *= tau
    return None


def _preconditioner(mesh, free):
    K = stiffness_matrix(mesh)
    idx = np.flatnonzero(free)
    if idx.size == 0:
        return lambda v: v.copy()
    Kff = K[idx][:, idx].tocsc()
    lu = spla.splu(Kff)
    return lambda v: lu.solve(np.asarray(v, dtype=float))


# ----------------------------------------------------------------------
# stages
# ----------------------------------------------------------------------

def harmonic_extension(spec, mesh):
    """Discrete minimizer of the k = 1 energy with f = gamma = 0 and data psi."""
    psi = sample(spec.psi, mesh)
    b = np.asarray(mesh.boundary_mask)
    U = np.where(b, psi, 0.0)
    free = np.flatnonzero(~b)
    if free.size:
        K = stiffness_matrix(mesh)
        Kff = K[free][:, free].tocsc()
        rhs = -(K[free][:, np.flatnonzero(b)] @ psi[b])
        U[free] = spla.spsolve(Kff, rhs)
    return U


def _phase_box(x, delta):
    """Bounds keeping each value in its phase: plus values stay >= delta
    (or within the ramp), minus values stay <= 0."""
    lo = np.where(x > delta, delta, np.where(x > 0, 0.0, -np.inf))
    hi = np.where(x > delta, np.inf, np.where(x > 0, delta, np.where(x < 0, 0.0, delta)))
    return lo, hi


def minimize_stage(spec, mesh, U0, law, delta, opts=None, precond=None,
                   hold=None):
    """Descend the smoothed energy for one (law, delta) from U0.

    ``hold`` optionally marks extra nodes kept at their U0 values; the
    remaining nodes are then confined to their current phase.
    """
    opts = opts if opts is not None else spec.solver
    model = EnergyModel(spec, mesh, law, delta)
    U0 = mesh.check_field(U0)
    free = model.free
    base = np.array(U0, dtype=float)
    psi = sample(spec.psi, mesh)
    base[~free] = psi[~free]
    box = None
    if hold is not None:
        free = free & ~np.asarray(hold, dtype=bool)
        precond = None
        box = _phase_box(base[free], float(delta))
    if precond is None:
        precond = _preconditioner(mesh, free)

    def fun(xf):
        U = base.copy()
        U[free] = xf
        E, ga, gb = model.one_sided_gradients(U)
        if ga is None:
            return np.inf, None, None
        return E, ga[free], gb[free]

    def dfun(xf, dxf):
        U = base.copy()
        U[free] = xf
        dU = np.zeros_like(U)
        dU[free] = dxf
        return model.delta_energy(U, dU)

    def noise(xf):
        U = base.copy()
        U[free] = xf
        return 64.0 * _EPS * model.gradient_scale(U)

    label = f"stage k={law.label()} delta={delta:g}"
    try:
        xf, E, gnorm, iters, conv, raw = _descend(
            fun, dfun, base[free], (0.0, float(delta)), opts, precond, label,
            box=box, noise=noise)
    except LineSearchFailure as exc:
        U = base.copy()
        U[free] = exc.iterate
        exc.iterate = U
        exc.trace = [TraceRecord(law.order, delta, *t) for t in exc.trace]
        raise
    U = base.copy()
    U[free] = xf
    trace = [TraceRecord(law.order, float(delta), *t) for t in raw]
    log.debug("%s: %d iterations, E=%.12g, |g|=%.3e", label, iters, E, gnorm)
    E = model.energy(U)
    return SolveResult(field=U, energy_value=E, breakdown=model.breakdown(U),
                       iterations=iters, final_grad_norm=gnorm, converged=conv,
                       trace=trace,
                       per_stage=[StageSummary(law.order, float(delta), iters, E,
                                               gnorm, conv, U.copy())])


def _mesh_edges(mesh):
    el = mesh.elements
    pairs = [el[:, [a, b]] for a in range(el.shape[1]) for b in range(a + 1, el.shape[1])]
    e = np.sort(np.concatenate(pairs), axis=1)
    return np.unique(e, axis=0)


def _interface_candidates(edges, U, free):
    """Free nodes next to the zero set: neighbours of zero nodes and the
    endpoints of edges along which U changes sign."""
    a, b = U[edges[:, 0]], U[edges[:, 1]]
    mark = np.zeros(U.size, dtype=bool)
    za, zb = a == 0, b == 0
    mark[edges[zb, 0]] = True
    mark[edges[za, 1]] = True
    flip = a * b < 0
    mark[edges[flip, 0]] = True
    mark[edges[flip, 1]] = True
    return mark & free & (U != 0)


def _polish_interface(spec, mesh, result, law, delta, opts, precond,
                      max_rounds=None):
    """Shift the zero set by one layer of nodes while that lowers the energy.

    Nodes pinned at u = 0 are local minima of the piecewise energy in
    their own coordinate, so descent alone cannot move a discrete
    interface across a node.  Each round tries two moves (zero the
    positive candidates, zero the negative candidates), re-minimizes
    from each, and keeps the best if it improves on the current energy.
    """
    edges = _mesh_edges(mesh)
    free = ~np.asarray(mesh.boundary_mask)
    max_rounds = mesh.n_nodes if max_rounds is None else max_rounds
    held_opts = replace(opts, max_iters=min(opts.max_iters, 500))
    best = result
    extra_iters = 0
    for _ in range(max_rounds):
        U = best.field
        cand = _interface_candidates(edges, U, free)
        trials = []
        for side in (U > 0, U < 0):
            move = cand & side
            if not move.any():
                continue
            V = U.copy()
            V[move] = 0.0
            try:
                # best field with the shifted zero set, then released
                held = minimize_stage(spec, mesh, V, law, delta, held_opts,
                                      hold=move)
                trial = minimize_stage(spec, mesh, held.field, law, delta, opts,
                                       precond)
            except (LineSearchFailure, NonFiniteEnergy):
                continue
            extra_iters += held.iterations + trial.iterations
            if trial.converged:
                trials.append(trial)
        gain = 1e-12 * max(1.0, abs(best.energy_value))
        better = [t for t in trials if t.energy_value < best.energy_value - gain]
        if not better:
            break
        best = min(better, key=lambda t: t.energy_value)
    if best is result:
        return result
    log.debug("interface polish: E %.12g -> %.12g", result.energy_value, best.energy_value)
    last = result.trace[-1]
    rec = TraceRecord(law.order, float(delta), last.iter + 1, best.energy_value,
                      best.final_grad_norm,
                      float(np.max(np.abs(best.field - result.field))))
    summary = StageSummary(law.order, float(delta), result.iterations + extra_iters,
                           best.energy_value, best.final_grad_norm, best.converged,
                           best.field.copy())
    return SolveResult(field=best.field, energy_value=best.energy_value,
                       breakdown=best.breakdown,
                       iterations=result.iterations + extra_iters,
                       final_grad_norm=best.final_grad_norm,
                       converged=best.converged, trace=result.trace + [rec],
                       per_stage=[summary])


def stage_laws(spec):
    """Truncation orders visited by :func:`solve`, ending at ``spec.law``."""
    target = spec.law.order
    ks = [k for k in spec.solver.k_schedule if k < target]
    return [EnergyLaw(k, spec.law.exp_cap) for k in ks] + [spec.law]


def solve(spec, mesh=None, opts=None, U0=None):
    """Run the (k ascending) x (delta descending) continuation."""
    if opts is not None:
        spec = replace(spec, solver=opts)
    opts = spec.solver
    if not opts.k_schedule or not opts.delta_schedule:
        raise ValidationError("empty continuation schedule")
    mesh = mesh if mesh is not None else spec.mesh()
    validate(spec, mesh)
    U = harmonic_extension(spec, mesh) if U0 is None else mesh.check_field(U0).copy()
    precond = _preconditioner(mesh, ~np.asarray(mesh.boundary_mask))
    trace, stages, iters = [], [], 0
    result = None
    for law in stage_laws(spec):
        for delta in opts.delta_schedule:
            try:
                result = minimize_stage(spec, mesh, U, law, delta, opts, precond)
                if opts.polish and delta == opts.delta_schedule[-1]:
                    result = _polish_interface(spec, mesh, result, law, delta,
                                               opts, precond)
            except (LineSearchFailure, NonFiniteEnergy) as exc:
                exc.stage = (law.order, delta)
                if isinstance(exc, LineSearchFailure):
                    exc.trace = trace + exc.trace
                    exc.per_stage = stages
                raise
            U = result.field
            trace.extend(result.trace)
            stages.extend(result.per_stage)
            iters += result.iterations
    result.trace = trace
    result.per_stage = stages
    result.iterations = iters
    result.converged = all(st.converged for st in stages)
    return result


def multistart(spec, starts, mesh=None, amplitude=0.1):
    """Solve from ``starts`` seeded perturbations of the harmonic initializer.

    Returns ``(results, ties)`` where ``ties`` lists index pairs whose
    final energies agree within 1e-8 while their fields differ.
    """
    mesh = mesh if mesh is not None else spec.mesh()
    rng = np.random.default_rng(spec.solver.seed)
    U0 = harmonic_extension(spec, mesh)
    scale = amplitude * max(1.0, float(np.max(np.abs(U0))))
    free = ~np.asarray(mesh.boundary_mask)
    results = []
    for i in range(starts):
        U = U0.copy()
        if i:
            U[free] += scale * rng.standard_normal(int(free.sum()))
        results.append(solve(spec, mesh, U0=U))
    ties = []
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            same_E = abs(results[i].energy_value - results[j].energy_value) <= 1e-8
            diff_u = np.max(np.abs(results[i].field - results[j].field)) > 1e-6
            if same_E and diff_u:
                ties.append((i, j))
    return results, ties


# ----------------------------------------------------------------------
# 1D brute-force oracle
# ----------------------------------------------------------------------

def _kink_energy(t, a, b, gamma_plus, gamma_minus, law):
    t = np.asarray(t, dtype=float)
    sl, sr = a / t, b / (1.0 - t)
    with np.errstate(over="ignore", invalid="ignore"):
        pl = _kernels.np_phi_t(sl * sl, law.code)
        pr = _kernels.np_phi_t(sr * sr, law.code)
    if law.is_infinite:
        pl = np.where(sl * sl > law.exp_cap, np.inf, pl)
        pr = np.where(sr * sr > law.exp_cap, np.inf, pr)
    return t * pl + (1.0 - t) * pr + t * gamma_minus + (1.0 - t) * gamma_plus


def oracle_1d(a, b, gamma_plus, gamma_minus, law, grid_points=10**6):
    """Best kink position for u(0) = -a, u(1) = b, f = 0, by enumeration.

    Minimizes t Phi(a/t) + (1-t) Phi(b/(1-t)) + t gamma_- + (1-t) gamma_+
    on a uniform grid of interior points, then once more on a grid of the
    same size spanning the two neighbours of the best point.  Ties go to
    the smallest t.
    """
    if not (a > 0 and b > 0):
        raise DomainError("oracle_1d needs a > 0 and b > 0")
    n = int(grid_points)
    if n < 3:
        raise DomainError("grid_points must be >= 3")
    t = np.linspace(0.0, 1.0, n + 2)[1:-1]
    E = _kink_energy(t, a, b, gamma_plus, gamma_minus, law)
    j = int(np.argmin(E))
    lo = t[j - 1] if j > 0 else 0.5 * t[0]
    hi = t[j + 1] if j + 1 < n else 0.5 * (1.0 + t[-1])
    t2 = np.linspace(lo, hi, n)
    E2 = _kink_energy(t2, a, b, gamma_plus, gamma_minus, law)
    j2 = int(np.argmin(E2))
    if E2[j2] <= E[j]:
        return float(t2[j2]), float(E2[j2])
    return float(t[j]), float(E[j])


# ----------------------------------------------------------------------
# Phi-harmonic replacement in a ball
# ----------------------------------------------------------------------

def ball_nodes(mesh, center, radius):
    """Non-boundary nodes strictly inside the ball."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    dist = np.sqrt(np.sum((mesh.nodes - c) ** 2, axis=1))
    return (dist < radius) & ~np.asarray(mesh.boundary_mask)


def ball_patch(mesh, inside):
    """Elements touching at least one node of ``inside``."""
    return np.any(inside[mesh.elements], axis=1)


def _check_ball(mesh, center, radius):
    c = np.atleast_1d(np.asarray(center, dtype=float))
    lo, hi = mesh.domain.lower, mesh.domain.upper
    if not radius > 0 or np.any(c - radius < lo) or np.any(c + radius > hi):
        raise DomainError("ball must lie inside the domain")


def phi_harmonic_replacement(law, mesh, U, ball, opts=None):
    """Minimize the pure gradient energy over nodes inside ``ball``.

    ``ball`` is ``(center, radius)``.  Nodes outside keep their values.
    """
    center, radius = ball
    _check_ball(mesh, center, radius)
    U = mesh.check_field(U)
    inside = ball_nodes(mesh, center, radius)
    if not inside.any():
        return U.copy()
    opts = opts if opts is not None else SolverOptions(grad_tol=1e-12, max_iters=20000)
    patch = ball_patch(mesh, inside)
    el = np.ascontiguousarray(mesh.elements[patch])
    G = np.ascontiguousarray(mesh.shape_grads[patch])
    meas = np.ascontiguousarray(mesh.measures[patch])
    base = U.copy()

    def fun(xf):
        V = base.copy()
        V[inside] = xf
        E, g, over = _kernels.dirichlet(V, el, G, meas, law.code, law.exp_cap, True)
        if over:
            return np.inf, None, None
        return E, g[inside], g[inside]

    def dfun(xf, dxf):
        V = base.copy()
        V[inside] = xf
        dV = np.zeros_like(V)
        dV[inside] = dxf
        dE, over = _kernels.dirichlet_delta(V, dV, el, G, meas, law.code,
                                            law.exp_cap)
        return np.inf if over else dE

    precond = _preconditioner(mesh, inside)
    xf, *_ = _descend(fun, dfun, base[inside], (), opts, precond,
                      f"replacement k={law.label()}")
    V = base.copy()
    V[inside] = xf
    return V


def ball_dirichlet_energy(law, mesh, U, ball):
    """Gradient energy over the elements touching the ball's interior nodes."""
    inside = ball_nodes(mesh, *ball)
    patch = ball_patch(mesh, inside)
    total, _, over = _kernels.dirichlet(
        np.asarray(U, dtype=float), np.ascontiguousarray(mesh.elements[patch]),
        np.ascontiguousarray(mesh.shape_grads[patch]),
        np.ascontiguousarray(mesh.measures[patch]), law.code, law.exp_cap, False)
    return np.inf if over else total
