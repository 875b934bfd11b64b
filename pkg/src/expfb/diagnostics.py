"""Measured properties of computed minimizers.

Nothing here asserts a theorem constant; every function returns the
measured quantity so that it can be tracked across refinements.
"""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError
from .grid import element_gradients, interpolate
from .nfunction import EnergyLaw, value as phi_value
from .problem import sample
from .solver import ball_dirichlet_energy, ball_nodes, ball_patch, phi_harmonic_replacement

# degree-5 rule on the reference triangle: (weight, barycentric coordinates)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_TRI_RULE = (
    [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3,
    [(1 / 3, 1 / 3, 1 / 3),
     (_A1, _B1, _B1), (_B1, _A1, _B1), (_B1, _B1, _A1),
     (_A2, _B2, _B2), (_B2, _A2, _B2), (_B2, _B2, _A2)],
)
# three-point Gauss rule on [0, 1]
_G = math.sqrt(3.0 / 5.0)
_SEG_RULE = ([5 / 18, 8 / 18, 5 / 18],
             [((1 + _G) / 2, (1 - _G) / 2), (0.5, 0.5), ((1 - _G) / 2, (1 + _G) / 2)])


@dataclass
class DiagnosticsReport:
    linf: float
    boundary_sup: float
    loglip_modulus: float
    bmo_seminorm: float
    residual_stats: dict
    mw_checks: list = field(default_factory=list)
    identity_error: float = 0.0
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ----------------------------------------------------------------------
# bounds and moduli
# ----------------------------------------------------------------------

def linf_report(mesh, U, psi_samples):
    """(max |U| over all nodes, max |psi| over boundary nodes)."""
    U = mesh.check_field(U)
    psi = np.asarray(psi_samples, dtype=float)
    b = np.asarray(mesh.boundary_mask)
    return float(np.max(np.abs(U))), float(np.max(np.abs(psi[b])))


def comparison_gaps(mesh, U, psi_samples):
    """(max U - max_boundary psi, min_boundary psi - min U).

    Both are <= 0 when the field respects the boundary extrema.
    """
    U = mesh.check_field(U)
    psi = np.asarray(psi_samples, dtype=float)
    b = np.asarray(mesh.boundary_mask)
    return float(U.max() - psi[b].max()), float(psi[b].min() - U.min())


def _inner_box(mesh, margin):
    lo = mesh.domain.lower + margin
    hi = mesh.domain.upper - margin
    if not margin > 0 or np.any(hi <= lo):
        raise DomainError(f"inner margin {margin} leaves no interior region")
    return lo, hi


def log_lipschitz_modulus(mesh, U, inner_margin=0.1, r0=0.1, pair_count=20000, seed=0):
    """max |U(x) - U(y)| / (|x - y| |log |x - y||) over seeded random pairs.

    Pairs lie in the domain shrunk by ``inner_margin`` with
    0 < |x - y| <= r0.
    """
    if not 0 < r0 < math.exp(-1.0):
        raise DomainError(f"r0 must lie in (0, 1/e), got {r0}")
    U = mesh.check_field(U)
    lo, hi = _inner_box(mesh, inner_margin)
    rng = np.random.default_rng(seed)
    d = mesh.dim
    xs, ys = [], []
    need = int(pair_count)
    while need > 0:
        m = max(2 * need, 64)
        x = lo + (hi - lo) * rng.random((m, d))
        if d == 1:
            u = rng.choice([-1.0, 1.0], size=(m, 1))
        else:
            a = 2 * np.pi * rng.random(m)
            u = np.column_stack([np.cos(a), np.sin(a)])
        r = r0 * (1.0 - rng.random(m))   # in (0, r0]
        y = x + r[:, None] * u
        ok = np.all((y >= lo) & (y <= hi), axis=1)
        xs.append(x[ok][:need])
        ys.append(y[ok][:need])
        need -= int(min(ok.sum(), need))
    x, y = np.concatenate(xs), np.concatenate(ys)
    if d == 1:
        ux, uy = interpolate(mesh, U, x[:, 0]), interpolate(mesh, U, y[:, 0])
    else:
        ux, uy = interpolate(mesh, U, x), interpolate(mesh, U, y)
    dist = np.linalg.norm(x - y, axis=1)
    return float(np.max(np.abs(ux - uy) / (dist * np.abs(np.log(dist)))))


def bmo_seminorm_gradient(mesh, U, inner_margin=0.1, radii_list=(0.05, 0.1, 0.2)):
    """Largest mean oscillation of the element gradients over sampled balls.

    Ball centers form a lattice of spacing r in the inner region; each
    ball averages over the elements whose centroid it contains.
    """
    U = mesh.check_field(U)
    lo, hi = _inner_box(mesh, inner_margin)
    G = element_gradients(mesh, U)
    C = mesh.centroids
    w = np.asarray(mesh.measures)
    best = 0.0
    for r in radii_list:
        if not r > 0:
            raise DomainError("radii must be positive")
        axes = [np.arange(a, b + 0.5 * r, r) for a, b in zip(lo, hi)]
        centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, mesh.dim)
        for c in centers:
            inb = np.sum((C - c) ** 2, axis=1) < r * r
            if not inb.any():
                continue
            wb = w[inb]
            mean = (wb[:, None] * G[inb]).sum(axis=0) / wb.sum()
            osc = float(np.sum(wb * np.linalg.norm(G[inb] - mean, axis=1)) / wb.sum())
            best = max(best, osc)
    return best


# ----------------------------------------------------------------------
# Euler-Lagrange residual
# ----------------------------------------------------------------------

def _load_vector(mesh, coeff, nodes_f):
    """Entries int f hat_i by a high-order element rule (analytic f), or
    lumped nodal values for node-indexed coefficients."""
    if not coeff.analytic:
        return np.asarray(mesh.lumped_weights) * nodes_f
    X = mesh.nodes[mesh.elements]                 # (m, nv, d)
    meas = np.asarray(mesh.measures)
    weights, bary = _TRI_RULE if mesh.dim == 2 else _SEG_RULE
    out = np.zeros(mesh.n_nodes)
    for wq, lam in zip(weights, bary):
        lam = np.asarray(lam)
        pts = np.einsum("a,mad->md", lam, X)
        fq = coeff.evaluate(pts)
        contrib = (wq * meas * fq)[:, None] * lam[None, :]
        np.add.at(out, mesh.elements.ravel(), contrib.ravel())
    return out


def weak_residual(spec, mesh, U, band_epsilon=0.0, law=None):
    """Per-phase statistics of the discrete weak residual.

    For every interior node whose patch values all lie strictly above
    ``band_epsilon`` (plus phase) or strictly below ``-band_epsilon``
    (minus phase),

        R_i = sum_T |T| flux(grad u_T) . grad hat_i  -  int f_phase hat_i

    normalized by ||grad hat_i||.  Returns a dict with keys ``plus`` and
    ``minus``, each holding ``max``, ``mean`` and ``count``; an empty
    phase has ``None`` statistics and ``empty`` set.
    """
    if band_epsilon < 0:
        raise DomainError("band_epsilon must be >= 0")
    U = mesh.check_field(U)
    law = law if law is not None else spec.law
    el = np.ascontiguousarray(mesh.elements)
    G = np.ascontiguousarray(mesh.shape_grads)
    meas = np.ascontiguousarray(mesh.measures)
    _, gphi, over = _kernels.dirichlet(U, el, G, meas, law.code, law.exp_cap, True)
    if over:
        raise DomainError("gradient energy overflows for this field")
    kdiag = np.zeros(mesh.n_nodes)
    np.add.at(kdiag, el.ravel(), (meas[:, None] * np.sum(G * G, axis=2)).ravel())
    # smallest and largest value on each node's patch
    vmin = np.full(mesh.n_nodes, np.inf)
    vmax = np.full(mesh.n_nodes, -np.inf)
    emin, emax = U[el].min(axis=1), U[el].max(axis=1)
    for a in range(el.shape[1]):
        np.minimum.at(vmin, el[:, a], emin)
        np.maximum.at(vmax, el[:, a], emax)
    interior = ~np.asarray(mesh.boundary_mask)
    stats = {}
    for side, coeff, mask in (
            ("plus", spec.f_plus, interior & (vmin > band_epsilon)),
            ("minus", spec.f_minus, interior & (vmax < -band_epsilon))):
        if not mask.any():
            stats[side] = {"max": None, "mean": None, "count": 0, "empty": True}
            continue
        load = _load_vector(mesh, coeff, sample(coeff, mesh))
        r = np.abs(gphi - load)[mask] / np.sqrt(kdiag[mask])
        stats[side] = {"max": float(r.max()), "mean": float(r.mean()),
                       "count": int(mask.sum()), "empty": False}
    return stats


# ----------------------------------------------------------------------
# operator identity on analytic fields
# ----------------------------------------------------------------------

def _exp_flux(coeff, pts):
    g = coeff.gradient(pts)
    return 2.0 * np.exp(np.sum(g * g, axis=1))[:, None] * g


def operator_identity_check(analytic_u, mesh_resolutions, domain=None, margin=0.125):
    """max |A - B| per resolution for an analytic field u.

    A = div(2 exp(|grad u|^2) grad u) by centered differences of the
    analytic flux with step h = 1/n; B = 2 exp(|grad u|^2)(lap u +
    2 grad u . D^2u grad u) from closed-form derivatives.  Points are
    the grid points at distance >= ``margin`` from the boundary, so that
    nested resolutions share the extreme points.
    """
    from .grid import rectangle  # local: keeps the import surface small
    domain = domain if domain is not None else rectangle()
    out = []
    for n in mesh_resolutions:
        n = int(n)
        lo, hi = domain.lower, domain.upper
        h = (hi - lo) / n
        axes = [lo[j] + h[j] * np.arange(n + 1) for j in range(domain.dim)]
        axes = [a[(a >= lo[j] + margin - 1e-12) & (a <= hi[j] - margin + 1e-12)]
                for j, a in enumerate(axes)]
        P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
        H = analytic_u.hessian(P)                 # DomainError if unavailable
        g = analytic_u.gradient(P)
        A = np.zeros(len(P))
        for j in range(domain.dim):
            e = np.zeros(domain.dim)
            e[j] = h[j]
            A += (_exp_flux(analytic_u, P + e)[:, j] - _exp_flux(analytic_u, P - e)[:, j]) / (2 * h[j])
        lap = np.trace(H, axis1=1, axis2=2)
        dinf = np.einsum("ni,nij,nj->n", g, H, g)
        B = 2.0 * np.exp(np.sum(g * g, axis=1)) * (lap + 2.0 * dinf)
        out.append(float(np.max(np.abs(A - B))))
    return out


# ----------------------------------------------------------------------
# replacement inequality
# ----------------------------------------------------------------------

def random_balls(mesh, count, seed=0, rmin=0.08, rmax=0.2):
    """Seeded balls (center, radius) contained in the domain."""
    rng = np.random.default_rng(seed)
    lo, hi = mesh.domain.lower, mesh.domain.upper
    balls = []
    while len(balls) < count:
        r = rmin + (rmax - rmin) * rng.random()
        c = lo + r + (hi - lo - 2 * r) * rng.random(mesh.dim)
        balls.append((tuple(float(v) for v in c), float(r)))
    return balls


def mw_inequality_check(law, mesh, U, balls, opts=None):
    """(lhs, rhs, ratio) per ball for a finite-order law.

    v is the gradient-energy minimizer in the ball with the values of U
    outside; lhs = int Phi_k(|grad(u - v)|), rhs = int Phi_k(|grad u|) -
    Phi_k(|grad v|), both over the elements touching the ball's nodes;
    ratio = lhs / (k rhs), or None when rhs is within the solver
    tolerance.
    """
    if law.is_infinite:
        raise DomainError("the replacement inequality is checked for finite orders")
    U = mesh.check_field(U)
    from .options import SolverOptions
    opts = opts if opts is not None else SolverOptions(grad_tol=1e-12, max_iters=20000)
    rows = []
    for center, radius in balls:
        V = phi_harmonic_replacement(law, mesh, U, (center, radius), opts)
        inside = ball_nodes(mesh, center, radius)
        patch = ball_patch(mesh, inside)
        gd = element_gradients(mesh, U - V)[patch]
        lhs = float(np.cumsum(np.asarray(mesh.measures)[patch]
                              * phi_value(law, np.linalg.norm(gd, axis=1)))[-1]) if patch.any() else 0.0
        ball = (center, radius)
        rhs = ball_dirichlet_energy(law, mesh, U, ball) - ball_dirichlet_energy(law, mesh, V, ball)
        ratio = lhs / (law.order * rhs) if rhs > opts.grad_tol else None
        rows.append({"center": list(center), "radius": radius, "k": law.order,
                     "lhs": lhs, "rhs": float(rhs), "ratio": ratio})
    return rows


# ----------------------------------------------------------------------
# report
# ----------------------------------------------------------------------

def diagnose(spec, mesh, U, band_epsilon=0.05, mw_orders=(1, 2, 4, 8), mw_balls=3):
    """Collect the measured quantities into a DiagnosticsReport."""
    from .problem import Coefficient
    U = mesh.check_field(U)
    psi = sample(spec.psi, mesh)
    linf, bsup = linf_report(mesh, U, psi)
    notes = []
    if mesh.dim == 2:
        margin = 0.1 * float(np.min(mesh.domain.upper - mesh.domain.lower))
        loglip = log_lipschitz_modulus(mesh, U, margin, 0.1, 20000, spec.solver.seed)
    else:
        margin = 0.1 * float(mesh.domain.upper[0] - mesh.domain.lower[0])
        loglip = log_lipschitz_modulus(mesh, U, margin, 0.1, 20000, spec.solver.seed)
    bmo = bmo_seminorm_gradient(mesh, U, margin, (2 * margin / 4, margin))
    residual = weak_residual(spec, mesh, U, band_epsilon)
    balls = random_balls(mesh, mw_balls, spec.solver.seed,
                         rmin=4 * mesh.h, rmax=max(4 * mesh.h, 2 * margin))
    mw = []
    for k in mw_orders:
        mw.extend(mw_inequality_check(EnergyLaw(k, spec.law.exp_cap), mesh, U, balls))
    ident = operator_identity_check(Coefficient("quadratic", (0, 0, 0, 1, 0, 1)), [64])[0]
    # geometric factors of the interior BMO bound: dist^-N and diam^N
    n_dim = mesh.dim
    diam = float(np.linalg.norm(mesh.domain.upper - mesh.domain.lower))
    notes.append(f"bmo geometry: dist = {margin:.6g}, diam = {diam:.6g}, N = {n_dim}; "
                 f"bmo * dist^N / diam^N = {bmo * margin ** n_dim / diam ** n_dim:.6e}")
    gaps = comparison_gaps(mesh, U, psi)
    notes.append(f"max U - max boundary psi = {gaps[0]:.3e}; "
                 f"min boundary psi - min U = {gaps[1]:.3e}")
    notes.append("identity_error: u = x^2 + y^2 on the unit square at n = 64")
    for side, st in residual.items():
        if st["empty"]:
            notes.append(f"residual: no admissible {side} nodes")
    return DiagnosticsReport(linf=linf, boundary_sup=bsup, loglip_modulus=loglip,
                             bmo_seminorm=bmo, residual_stats=residual, mw_checks=mw,
                             identity_error=ident, notes=notes)
