"""The exponential N-function Phi(s) = exp(s**2) - 1 and its truncations.

The truncation of order k is the degree-2k Taylor polynomial

    Phi_k(s) = sum_{i=1}^{k} s**(2i) / i!

All evaluations go through t = s**2.  Functions accept scalars or numpy
arrays and return the same shape.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, NFunctionOverflow

INFINITE = math.inf

#: largest exponent argument accepted by default (exp(709) overflows doubles)
DEFAULT_EXP_CAP = 700.0
_MAX_EXP_ARG = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class EnergyLaw:
    """An N-function of the family: truncation ``order`` or ``INFINITE``."""

    order: float = INFINITE
    exp_cap: float = DEFAULT_EXP_CAP

    def __post_init__(self):
        order = self.order
        if order != INFINITE:
            if isinstance(order, float) and not order.is_integer():
                raise DomainError(f"order must be an integer or INFINITE, got {order}")
            order = int(order)
            if order < 1:
                raise DomainError(f"order must be >= 1, got {order}")
            object.__setattr__(self, "order", order)
        if not (0.0 < self.exp_cap <= _MAX_EXP_ARG):
            raise DomainError(f"exp_cap must lie in (0, {_MAX_EXP_ARG:.3f}]")

    @property
    def is_infinite(self):
        return self.order == INFINITE

    @property
    def code(self):
        """Integer order understood by the kernels (-1 for INFINITE)."""
        return _kernels.INF_ORDER if self.is_infinite else int(self.order)

    def label(self):
        return "inf" if self.is_infinite else str(self.order)

    def __str__(self):
        return f"EnergyLaw(k={self.label()})"


def parse_order(k):
    """Map a config value (int or the string 'inf') to an order."""
    if isinstance(k, str):
        if k.strip().lower() in ("inf", "infinite", "infinity"):
            return INFINITE
        raise DomainError(f"unknown order {k!r}")
    if isinstance(k, float) and math.isinf(k):
        return INFINITE
    if isinstance(k, bool) or not float(k).is_integer():
        raise DomainError(f"order must be an integer or 'inf', got {k!r}")
    return int(k)


def _squares(law, s):
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise DomainError("argument must be finite")
    t = s * s
    if law.is_infinite and t.size and np.max(t) > law.exp_cap:
        raise NFunctionOverflow(
            f"s**2 = {np.max(t):.6g} exceeds exp_cap = {law.exp_cap}")
    return t


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def value(law, s):
    """Phi(s) for INFINITE order, Phi_k(s) otherwise."""
    t = _squares(law, s)
    return _out(_kernels.np_phi_t(t, law.code))


def derivative(law, s):
    """phi = Phi'; odd in s."""
    s = np.asarray(s, dtype=float)
    t = _squares(law, s)
    return _out(s * _kernels.np_flux_factor_t(t, law.code))


def flux(law, g):
    """phi(|g|) g/|g| in removable-singularity form, so flux(0) = 0.

    ``g`` has the vector components on its last axis.
    """
    g = np.asarray(g, dtype=float)
    t = _squares(law, np.sqrt(np.sum(g * g, axis=-1)))
    factor = _kernels.np_flux_factor_t(t, law.code)
    return np.asarray(factor)[..., None] * g


def ellipticity_ratios(law, s):
    """Return (s phi'(s)/phi(s), s phi(s)/Phi(s)) for s > 0.

    For the exponential law the first ratio is 1 + 2 s**2 exactly; for
    order k the second ratio lies in [2, 2k].
    """
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise DomainError("ellipticity ratios need s > 0")
    t = _squares(law, s)
    if law.is_infinite:
        r1 = 1.0 + 2.0 * t
        # s phi / Phi = 2t e^t / (e^t - 1) = 2t / (1 - e^{-t})
        r2 = 2.0 * t / -np.expm1(-t)
    else:
        k = law.order
        e1 = _kernels.np_trunc_exp(t, k - 1)
        e2 = _kernels.np_trunc_exp(t, k - 2)
        r1 = 1.0 + 2.0 * t * e2 / e1
        # Phi_k(t) / t = sum_{i=1}^k t^{i-1}/i!, nested to stay accurate at t -> 0
        p = np.ones_like(t)
        for j in range(k, 1, -1):
            p = 1.0 + p * t / j
        r2 = 2.0 * e1 / p
    return _out(r1), _out(r2)


def monotonicity_gap(law, x, y):
    """(flux(x) - flux(y)) . (x - y); strictly positive for x != y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = x - y
    gap = np.sum((flux(law, x) - flux(law, y)) * diff, axis=-1)
    gap = np.where(np.all(diff == 0, axis=-1), 0.0, gap)
    return _out(gap)
