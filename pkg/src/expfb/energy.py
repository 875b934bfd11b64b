"""Discrete two-phase energy, its gradient and its term breakdown.

The gradient term is integrated exactly per element (piecewise-linear
fields have constant gradients).  The phase terms use mass-lumped nodal
quadrature with the phase indicator replaced by a one-sided ramp of
width ``delta``:

    E(U) = sum_T |T| Phi(|grad u_T|)
           + sum_i w_i ( -f_d(x_i, U_i) U_i + gamma_d(x_i, U_i) )

with f_d = f_+ H + f_- (1 - H), gamma_d likewise, H the ramp.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, DomainError, NFunctionOverflow
from .grid import element_gradients
from .problem import sample


@dataclass(frozen=True)
class SmoothedIndicator:
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError(f"ramp width must be positive, got {self.delta}")


def smoothed_heaviside(ind, s):
    """0 for s <= 0, s/delta on (0, delta), 1 beyond."""
    out = np.clip(np.asarray(s, dtype=float) / ind.delta, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


class EnergyModel:
    """Energy of one (spec, mesh, law, delta) combination.

    Coefficients are sampled once at construction.
    """

    def __init__(self, spec, mesh, law=None, delta=None):
        self.spec = spec
        self.mesh = mesh
        self.law = law if law is not None else spec.law
        self.delta = float(delta if delta is not None else spec.smoothing_delta)
        SmoothedIndicator(self.delta)
        self.weights = np.asarray(mesh.lumped_weights)
        self.f_plus = sample(spec.f_plus, mesh)
        self.f_minus = sample(spec.f_minus, mesh)
        self.gamma_plus = sample(spec.gamma_plus, mesh)
        self.gamma_minus = sample(spec.gamma_minus, mesh)
        self.free = ~np.asarray(mesh.boundary_mask)
        self._elements = np.ascontiguousarray(mesh.elements)
        self._grads = np.ascontiguousarray(mesh.shape_grads)
        self._measures = np.ascontiguousarray(mesh.measures)

    def _check(self, U):
        U = np.asarray(U, dtype=float)
        if U.shape != (self.mesh.n_nodes,):
            raise DimensionMismatch(
                f"field has shape {U.shape}, mesh has {self.mesh.n_nodes} nodes")
        return U

    # -- pieces --------------------------------------------------------
    def dirichlet(self, U, want_grad=False):
        return _kernels.dirichlet(U, self._elements, self._grads, self._measures,
                                  self.law.code, self.law.exp_cap, want_grad)

    def _phase_nodal(self, U):
        H = np.clip(U / self.delta, 0.0, 1.0)
        f = self.f_minus + (self.f_plus - self.f_minus) * H
        g = self.gamma_minus + (self.gamma_plus - self.gamma_minus) * H
        return -self.weights * f * U, self.weights * g

    def phase_derivatives(self, U):
        """One-sided derivatives of the nodal phase terms (from above, from below)."""
        d = self.delta
        H = np.clip(U / d, 0.0, 1.0)
        df = self.f_plus - self.f_minus
        dg = self.gamma_plus - self.gamma_minus
        base = -(self.f_minus + df * H)
        ramp_up = ((U >= 0) & (U < d)) / d
        ramp_dn = ((U > 0) & (U <= d)) / d
        above = self.weights * (base + (dg - U * df) * ramp_up)
        below = self.weights * (base + (dg - U * df) * ramp_dn)
        return above, below

    # -- public --------------------------------------------------------
    def breakdown(self, U):
        U = self._check(U)
        phi, _, over = self.dirichlet(U)
        if over:
            return np.inf, np.nan, np.nan
        fn, gn = self._phase_nodal(U)
        return phi, float(np.cumsum(fn)[-1]), float(np.cumsum(gn)[-1])

    def energy(self, U):
        phi, f, g = self.breakdown(U)
        if not np.isfinite(phi):
            return np.inf
        return phi + f + g

    def one_sided_gradients(self, U):
        """(energy, grad from above, grad from below); Dirichlet entries 0.

        Energy is inf (and the gradients None) on exp_cap overflow.
        """
        U = self._check(U)
        phi, gphi, over = self.dirichlet(U, want_grad=True)
        if over:
            return np.inf, None, None
        fn, gn = self._phase_nodal(U)
        E = phi + float(np.cumsum(fn)[-1]) + float(np.cumsum(gn)[-1])
        above, below = self.phase_derivatives(U)
        ga = np.where(self.free, gphi + above, 0.0)
        gb = np.where(self.free, gphi + below, 0.0)
        return E, ga, gb

    def delta_energy(self, U, dU):
        """E(U + dU) - E(U) from per-element and per-node differences.

        Accurate relative to the change itself, so it stays meaningful
        below the rounding level of the total energy.  inf on overflow.
        """
        U = self._check(U)
        dU = self._check(dU)
        dphi, over = _kernels.dirichlet_delta(
            U, dU, self._elements, self._grads, self._measures,
            self.law.code, self.law.exp_cap)
        if over:
            return np.inf
        d = self.delta
        cU = np.clip(U, 0.0, d)
        cV = np.clip(U + dU, 0.0, d)
        # change of the clipped value, written through dU where possible
        ramp = (U >= 0) & (U <= d)
        dc = np.where(ramp, np.clip(dU, -U, d - U), cV - cU)
        dH = dc / d
        # (U + dU) H(U + dU) - U H(U)
        duH = (dU * cV + U * dc) / d
        df = self.f_plus - self.f_minus
        dg = self.gamma_plus - self.gamma_minus
        node = self.weights * (dg * dH - self.f_minus * dU - df * duH)
        return dphi + (float(np.cumsum(node)[-1]) if node.size else 0.0)

    def gradient_scale(self, U):
        """Largest per-node sum of absolute gradient summands.

        Rounding in the assembled gradient is a small multiple of eps
        times this value.
        """
        U = self._check(U)
        G = self._grads
        g = np.einsum("ea,eaj->ej", U[self._elements], G)
        t = np.sum(g * g, axis=1)
        with np.errstate(over="ignore"):
            fac = _kernels.np_flux_factor_t(t, self.law.code)
        mag = self._measures * fac * np.sqrt(t)
        acc = np.zeros(self.mesh.n_nodes)
        np.add.at(acc, self._elements.ravel(),
                  (mag[:, None] * np.linalg.norm(G, axis=2)).ravel())
        df = np.abs(self.f_plus - self.f_minus)
        dg = np.abs(self.gamma_plus - self.gamma_minus)
        acc += self.weights * (np.abs(self.f_minus) + df
                               + (dg + np.abs(U) * df) / self.delta)
        acc = acc[self.free]
        return float(acc.max()) if acc.size else 0.0

    def gradient(self, U):
        E, ga, _ = self.one_sided_gradients(U)
        if ga is None:
            raise NFunctionOverflow("gradient overflow: |grad u|^2 exceeds exp_cap")
        return ga


def energy(spec, mesh, U, ind=None, law=None):
    """Smoothed discrete energy; +inf when exp_cap is exceeded."""
    delta = ind.delta if ind is not None else None
    return EnergyModel(spec, mesh, law, delta).energy(U)


def energy_gradient(spec, mesh, U, ind=None, law=None):
    """Exact gradient w.r.t. free nodal values (one-sided from above at ramp kinks)."""
    delta = ind.delta if ind is not None else None
    return EnergyModel(spec, mesh, law, delta).gradient(U)


def energy_breakdown(spec, mesh, U, ind=None, law=None):
    """(phi_term, f_term, gamma_term)."""
    delta = ind.delta if ind is not None else None
    return EnergyModel(spec, mesh, law, delta).breakdown(U)


def check_dirichlet(spec, mesh, U, atol=0.0):
    """True when boundary nodes carry the psi samples."""
    psi = sample(spec.psi, mesh)
    b = mesh.boundary_mask
    return bool(np.all(np.abs(np.asarray(U)[b] - psi[b]) <= atol))


# ----------------------------------------------------------------------
# unsmoothed functional of the piecewise-linear interpolant
# ----------------------------------------------------------------------

def _positive_part_integral(X, v, meas):
    """Exact integral of max(u, 0) over one simplex with vertex values v."""
    if np.all(v >= 0):
        return meas * v.mean()
    if np.all(v <= 0):
        return 0.0
    if len(v) == 2:
        a, b = v
        lo, hi = (a, b) if a < b else (b, a)
        # linear from lo < 0 to hi > 0; positive part is a triangle
        return 0.5 * meas * hi * hi / (hi - lo)
    # clip the triangle to u >= 0, fan-triangulate, integrate linear u
    poly, vals = [], []
    for i in range(3):
        j = (i + 1) % 3
        if v[i] >= 0:
            poly.append(X[i])
            vals.append(v[i])
        if (v[i] > 0 > v[j]) or (v[i] < 0 < v[j]):
            s = v[i] / (v[i] - v[j])
            poly.append(X[i] + s * (X[j] - X[i]))
            vals.append(0.0)
    total = 0.0
    for k in range(1, len(poly) - 1):
        p0, p1, p2 = poly[0], poly[k], poly[k + 1]
        area = 0.5 * abs((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]))
        total += area * (vals[0] + vals[k] + vals[k + 1]) / 3.0
    return total


def continuum_energy(spec, mesh, U, law=None):
    """Unsmoothed J(u_h) of the piecewise-linear interpolant.

    The gradient term, the phase measures and the integrals of u over
    each phase are exact; coefficients are frozen per element at their
    element mean.  ``u = 0`` counts as the minus phase; when ``c_gamma``
    is positive, gamma vanishes on plateaus {u = 0}.
    """
    U = mesh.check_field(U)
    law = law if law is not None else spec.law
    phi, _, over = _kernels.dirichlet(U, np.ascontiguousarray(mesh.elements),
                                      np.ascontiguousarray(mesh.shape_grads),
                                      np.ascontiguousarray(mesh.measures),
                                      law.code, law.exp_cap, False)
    if over:
        return np.inf
    el = mesh.elements
    vals = U[el]
    meas = np.asarray(mesh.measures)
    coef = {n: sample(getattr(spec, n), mesh)[el].mean(axis=1)
            for n in ("f_plus", "f_minus", "gamma_plus", "gamma_minus")}
    plus_meas = _kernels.band_measure(vals, meas, 0.0, np.inf, closed=False)
    minus_meas = meas - plus_meas
    if spec.c_gamma > 0:
        minus_meas = minus_meas - np.where(np.all(vals == 0, axis=1), meas, 0.0)
    ipos = np.where(vals.min(axis=1) >= 0, meas * vals.mean(axis=1), 0.0)
    ineg = np.where(vals.max(axis=1) <= 0, -meas * vals.mean(axis=1), 0.0)
    mixed = np.flatnonzero((vals.min(axis=1) < 0) & (vals.max(axis=1) > 0))
    X = mesh.nodes[el]
    for e in mixed:
        ipos[e] = _positive_part_integral(X[e], vals[e], meas[e])
        ineg[e] = _positive_part_integral(X[e], -vals[e], meas[e])
    f_term = -coef["f_plus"] * ipos + coef["f_minus"] * ineg
    g_term = coef["gamma_plus"] * plus_meas + coef["gamma_minus"] * minus_meas
    return phi + float(np.cumsum(f_term)[-1]) + float(np.cumsum(g_term)[-1])
