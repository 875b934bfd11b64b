"""Hot loops: element assembly of the gradient energy and band measures.

Every kernel exists twice, a numba ``@njit`` version and a pure-numpy
version with the same signature.  The numba path is used when numba
imports and ``EXPFB_DISABLE_NUMBA`` is unset (or ``0``); otherwise the
numpy path is selected.  Both paths reduce element contributions in
element order, so each one is bitwise reproducible on its own.  The two
paths may differ from each other in the last ulp (different ``exp``).

Laws are passed as an integer ``order``: a positive truncation order, or
``-1`` for the untruncated exponential.  Functions of the gradient
modulus are written in terms of ``t = s**2``.
"""
import os

import numpy as np

_flag = os.environ.get("EXPFB_DISABLE_NUMBA", "").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"

INF_ORDER = -1


# ----------------------------------------------------------------------
# numpy path
# ----------------------------------------------------------------------

def np_phi_t(t, order):
    """Phi as a function of t = s**2 (elementwise)."""
    t = np.asarray(t, dtype=float)
    if order < 0:
        return np.expm1(t)
    # nested form t*(1 + t/2*(1 + t/3*(...))) avoids factorials
    p = np.ones_like(t)
    for j in range(order, 1, -1):
        p = 1.0 + p * t / j
    return t * p


def np_trunc_exp(t, m):
    """Partial sum sum_{j=0}^{m} t**j / j!  (zero for m < 0)."""
    t = np.asarray(t, dtype=float)
    if m < 0:
        return np.zeros_like(t)
    p = np.ones_like(t)
    for j in range(m, 0, -1):
        p = 1.0 + p * t / j
    return p


def np_flux_factor_t(t, order):
    """phi(s)/s as a function of t = s**2; finite at t = 0."""
    t = np.asarray(t, dtype=float)
    if order < 0:
        return 2.0 * np.exp(t)
    return 2.0 * np_trunc_exp(t, order - 1)


def np_dirichlet(U, elements, shape_grads, measures, order, cap, want_grad):
    grads = np.einsum("ea,eaj->ej", U[elements], shape_grads)
    t = np.einsum("ej,ej->e", grads, grads)
    grad = np.zeros(U.size) if want_grad else np.zeros(0)
    if order < 0 and t.size and t.max() > cap:
        return np.inf, grad, True
    vals = measures * np_phi_t(t, order)
    total = np.cumsum(vals)[-1] if vals.size else 0.0
    if want_grad:
        c = measures * np_flux_factor_t(t, order)
        contrib = c[:, None] * np.einsum("ej,eaj->ea", grads, shape_grads)
        np.add.at(grad, elements.ravel(), contrib.ravel())
    return float(total), grad, False


def np_phi_diff(t1, dt, order):
    """Phi(t1 + dt) - Phi(t1), accurate relative to the difference."""
    t1 = np.asarray(t1, dtype=float)
    dt = np.asarray(dt, dtype=float)
    if order < 0:
        return np.exp(t1) * np.expm1(dt)
    t2 = t1 + dt
    p2 = np.ones_like(t1)
    D = np.zeros_like(t1)
    # divided differences through the nested evaluation
    for j in range(order, 1, -1):
        D = (p2 + t1 * D) / j
        p2 = 1.0 + t2 * p2 / j
    return dt * (p2 + t1 * D)


def np_dirichlet_delta(U, dU, elements, shape_grads, measures, order, cap):
    g1 = np.einsum("ea,eaj->ej", U[elements], shape_grads)
    dg = np.einsum("ea,eaj->ej", dU[elements], shape_grads)
    t1 = np.einsum("ej,ej->e", g1, g1)
    dt = np.einsum("ej,ej->e", dg, 2.0 * g1 + dg)
    if order < 0 and t1.size and np.max(t1 + dt) > cap:
        return np.inf, True
    vals = measures * np_phi_diff(t1, dt, order)
    return float(np.cumsum(vals)[-1]) if vals.size else 0.0, False


def _np_area_above(v, measures, t, strict):
    """Per-element measure of {u > t} (strict) or {u >= t}."""
    v = np.sort(v, axis=1)
    out = np.zeros(v.shape[0])
    lo, hi = v[:, 0], v[:, -1]
    flat = hi == lo
    if strict:
        out[flat] = np.where(lo[flat] > t, measures[flat], 0.0)
    else:
        out[flat] = np.where(lo[flat] >= t, measures[flat], 0.0)
    nf = ~flat
    vs, ms = v[nf], measures[nf]
    res = np.zeros(vs.shape[0])
    if v.shape[1] == 2:
        a, b = vs[:, 0], vs[:, 1]
        frac = np.clip((b - t) / (b - a), 0.0, 1.0)
        res = ms * frac
    else:
        a, b, c = vs[:, 0], vs[:, 1], vs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            upper = ms * (c - t) ** 2 / ((c - a) * (c - b))
            lower = ms * (1.0 - (t - a) ** 2 / ((b - a) * (c - a)))
        res = np.where(t >= c, 0.0,
                       np.where(t <= a, ms,
                                np.where(t >= b, upper, lower)))
    out[nf] = res
    return out


def np_band_measure(values, measures, lo, hi, closed):
    """Per-element measure of {lo < u < hi}, or {lo <= u <= hi} if closed."""
    if closed:
        return (_np_area_above(values, measures, lo, False)
                - _np_area_above(values, measures, hi, True))
    return (_np_area_above(values, measures, lo, True)
            - _np_area_above(values, measures, hi, False))


# ----------------------------------------------------------------------
# numba path
# ----------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_phi_t(t, order):
        if order < 0:
            return np.expm1(t)
        p = 1.0
        for j in range(order, 1, -1):
            p = 1.0 + p * t / j
        return t * p

    @njit(cache=True)
    def _nb_flux_factor_t(t, order):
        if order < 0:
            return 2.0 * np.exp(t)
        p = 1.0
        for j in range(order - 1, 0, -1):
            p = 1.0 + p * t / j
        return 2.0 * p

    @njit(cache=True)
    def _nb_dirichlet(U, elements, shape_grads, measures, order, cap,
                      want_grad):
        m, nv = elements.shape
        d = shape_grads.shape[2]
        grad = np.zeros(U.size if want_grad else 0)
        g = np.empty(d)
        total = 0.0
        for e in range(m):
            t = 0.0
            for j in range(d):
                acc = 0.0
                for a in range(nv):
                    acc += U[elements[e, a]] * shape_grads[e, a, j]
                g[j] = acc
                t += acc * acc
            if order < 0 and t > cap:
                return np.inf, grad, True
            total += measures[e] * _nb_phi_t(t, order)
            if want_grad:
                c = measures[e] * _nb_flux_factor_t(t, order)
                for a in range(nv):
                    s = 0.0
                    for j in range(d):
                        s += g[j] * shape_grads[e, a, j]
                    grad[elements[e, a]] += c * s
        return total, grad, False

    @njit(cache=True)
    def _nb_phi_diff(t1, dt, order):
        if order < 0:
            return np.exp(t1) * np.expm1(dt)
        t2 = t1 + dt
        p2 = 1.0
        D = 0.0
        for j in range(order, 1, -1):
            D = (p2 + t1 * D) / j
            p2 = 1.0 + t2 * p2 / j
        return dt * (p2 + t1 * D)

    @njit(cache=True)
    def _nb_dirichlet_delta(U, dU, elements, shape_grads, measures, order,
                            cap):
        m, nv = elements.shape
        d = shape_grads.shape[2]
        total = 0.0
        for e in range(m):
            t1 = 0.0
            dt = 0.0
            for j in range(d):
                g1 = 0.0
                dg = 0.0
                for a in range(nv):
                    g1 += U[elements[e, a]] * shape_grads[e, a, j]
                    dg += dU[elements[e, a]] * shape_grads[e, a, j]
                t1 += g1 * g1
                dt += dg * (2.0 * g1 + dg)
            if order < 0 and t1 + dt > cap:
                return np.inf, True
            total += measures[e] * _nb_phi_diff(t1, dt, order)
        return total, False

    @njit(cache=True)
    def _nb_above(v, meas, t, strict):
        n = v.shape[0]
        if n == 2:
            a = min(v[0], v[1])
            c = max(v[0], v[1])
            b = c
        else:
            a = min(v[0], min(v[1], v[2]))
            c = max(v[0], max(v[1], v[2]))
            b = v[0] + v[1] + v[2] - a - c
        if c == a:
            if strict:
                return meas if a > t else 0.0
            return meas if a >= t else 0.0
        if t >= c:
            return 0.0
        if t <= a:
            return meas
        if n == 2:
            return meas * (c - t) / (c - a)
        if t >= b:
            return meas * (c - t) * (c - t) / ((c - a) * (c - b))
        return meas * (1.0 - (t - a) * (t - a) / ((b - a) * (c - a)))

    @njit(cache=True)
    def _nb_band_measure(values, measures, lo, hi, closed):
        m = values.shape[0]
        out = np.empty(m)
        for e in range(m):
            v = values[e]
            if closed:
                out[e] = (_nb_above(v, measures[e], lo, False)
                          - _nb_above(v, measures[e], hi, True))
            else:
                out[e] = (_nb_above(v, measures[e], lo, True)
                          - _nb_above(v, measures[e], hi, False))
        return out


# ----------------------------------------------------------------------
# dispatch
# ----------------------------------------------------------------------

def dirichlet(U, elements, shape_grads, measures, order, cap, want_grad=True):
    """Sum over elements of |T| * Phi(|grad u_T|) and its nodal gradient.

    Returns ``(total, grad, overflowed)``.  On overflow ``total`` is inf
    and ``grad`` must not be used.
    """
    U = np.ascontiguousarray(U, dtype=float)
    if HAVE_NUMBA:
        total, grad, over = _nb_dirichlet(U, elements, shape_grads, measures,
                                          int(order), float(cap),
                                          bool(want_grad))
        return float(total), grad, bool(over)
    return np_dirichlet(U, elements, shape_grads, measures, int(order),
                        float(cap), want_grad)


def dirichlet_delta(U, dU, elements, shape_grads, measures, order, cap):
    """Change of the gradient energy from U to U + dU, summed per element.

    Returns ``(delta, overflowed)``.
    """
    U = np.ascontiguousarray(U, dtype=float)
    dU = np.ascontiguousarray(dU, dtype=float)
    if HAVE_NUMBA:
        delta, over = _nb_dirichlet_delta(U, dU, elements, shape_grads,
                                          measures, int(order), float(cap))
        return float(delta), bool(over)
    return np_dirichlet_delta(U, dU, elements, shape_grads, measures,
                              int(order), float(cap))


def band_measure(values, measures, lo, hi, closed=False):
    values = np.ascontiguousarray(values, dtype=float)
    if HAVE_NUMBA:
        return _nb_band_measure(values, measures, float(lo), float(hi),
                                bool(closed))
    return np_band_measure(values, measures, float(lo), float(hi), closed)
