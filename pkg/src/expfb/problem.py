"""Two-phase problem data: coefficients, boundary datum, config files.

Config files are JSON with the top-level keys ``domain``, ``grid``,
``law``, ``coefficients``, ``c_gamma``, ``solver`` and ``output_dir``.
A minimal 1D example::

    {
      "domain": {"kind": "interval", "bounds": [0, 1]},
      "grid": [64],
      "law": {"k": "inf"},
      "coefficients": {
        "f_plus":      {"kind": "constant", "params": [0]},
        "f_minus":     {"kind": "constant", "params": [0]},
        "gamma_plus":  {"kind": "constant", "params": [1]},
        "gamma_minus": {"kind": "constant", "params": [1]},
        "psi":         {"kind": "affine",   "params": [-1, 2]}
      },
      "c_gamma": 0,
      "solver": {"k_schedule": [1, 2, 4, 8, "inf"], "delta_schedule": [0.1, 0.01]},
      "output_dir": null
    }
"""
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, ParseError, ValidationError
from .grid import Domain, build_mesh
from .nfunction import DEFAULT_EXP_CAP, INFINITE, EnergyLaw, parse_order
from .options import SolverOptions

COEFFICIENT_NAMES = ("f_plus", "f_minus", "gamma_plus", "gamma_minus", "psi")

# kind -> accepted parameter counts
_NPARAMS = {
    "constant": (1,),
    "affine": (2, 3),
    "sinusoidal": (4,),
    "radial": (3, 4),
    "quadratic": (6,),
    "radial_smooth": (4,),
}
KINDS = tuple(_NPARAMS) + ("grid_sampled",)


def _xy(points):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    x = p[:, 0]
    y = p[:, 1] if p.shape[1] > 1 else np.zeros_like(x)
    return x, y, p.shape[1]


@dataclass(frozen=True)
class Coefficient:
    """A preset analytic function or a node-indexed table.

    Parameter layouts (1D domains ignore anything involving y):

    ==============  ==========================================================
    constant        [c]
    affine          [a, bx] or [a, bx, by]          a + bx x + by y
    sinusoidal      [A, fx, fy, c]                  c + A sin(pi fx x) sin(pi fy y)
    radial          [cx, cy, r0] or [.., scale]     scale (|x - c| - r0)
    quadratic       [a, bx, by, cxx, cxy, cyy]      a + bx x + by y + cxx x^2 + ...
    radial_smooth   [cx, cy, sigma, A]              A exp(-|x - c|^2 / (2 sigma^2))
    grid_sampled    one value per mesh node
    ==============  ==========================================================
    """

    kind: str
    params: tuple = ()
    path: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown coefficient kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        if not all(math.isfinite(p) for p in params):
            raise ValidationError(f"{self.kind}: parameters must be finite")
        if self.kind == "grid_sampled":
            if not params and self.path is None:
                raise ValidationError("grid_sampled needs params (values) or path")
        elif len(params) not in _NPARAMS[self.kind]:
            raise ValidationError(
                f"{self.kind} takes {_NPARAMS[self.kind]} parameters, got {len(params)}")
        if self.kind in ("radial_smooth",) and params[2] <= 0:
            raise ValidationError("radial_smooth needs sigma > 0")
        object.__setattr__(self, "params", params)

    @property
    def analytic(self):
        return self.kind != "grid_sampled"

    # -- analytic evaluation -------------------------------------------
    def evaluate(self, points):
        if not self.analytic:
            raise DomainError("grid_sampled coefficients are only defined at mesh nodes")
        x, y, d = _xy(points)
        p = self.params
        k = self.kind
        if k == "constant":
            return np.full_like(x, p[0])
        if k == "affine":
            by = p[2] if len(p) > 2 else 0.0
            return p[0] + p[1] * x + by * y
        if k == "sinusoidal":
            sy = np.sin(np.pi * p[2] * y) if d > 1 else 1.0
            return p[3] + p[0] * np.sin(np.pi * p[1] * x) * sy
        if k == "radial":
            scale = p[3] if len(p) > 3 else 1.0
            r = np.abs(x - p[0]) if d == 1 else np.hypot(x - p[0], y - p[1])
            return scale * (r - p[2])
        if k == "quadratic":
            return p[0] + p[1] * x + p[2] * y + p[3] * x * x + p[4] * x * y + p[5] * y * y
        # radial_smooth
        r2 = (x - p[0]) ** 2 + ((y - p[1]) ** 2 if d > 1 else 0.0)
        return p[3] * np.exp(-r2 / (2.0 * p[2] ** 2))

    def gradient(self, points):
        """Closed-form gradient, shape (n, d)."""
        if not self.analytic:
            raise DomainError("grid_sampled coefficients have no closed-form gradient")
        x, y, d = _xy(points)
        p = self.params
        k = self.kind
        zero = np.zeros_like(x)
        if k == "constant":
            gx, gy = zero, zero
        elif k == "affine":
            gx, gy = zero + p[1], zero + (p[2] if len(p) > 2 else 0.0)
        elif k == "sinusoidal":
            if d > 1:
                gx = p[0] * np.pi * p[1] * np.cos(np.pi * p[1] * x) * np.sin(np.pi * p[2] * y)
                gy = p[0] * np.pi * p[2] * np.sin(np.pi * p[1] * x) * np.cos(np.pi * p[2] * y)
            else:
                gx, gy = p[0] * np.pi * p[1] * np.cos(np.pi * p[1] * x), zero
        elif k == "radial":
            scale = p[3] if len(p) > 3 else 1.0
            dx, dy = x - p[0], (y - p[1]) if d > 1 else zero
            r = np.hypot(dx, dy)
            if np.any(r == 0):
                raise DomainError("radial preset is not differentiable at its center")
            gx, gy = scale * dx / r, scale * dy / r
        elif k == "quadratic":
            gx = p[1] + 2 * p[3] * x + p[4] * y
            gy = p[2] + p[4] * x + 2 * p[5] * y
        else:
            v = self.evaluate(points)
            gx = -v * (x - p[0]) / p[2] ** 2
            gy = -v * (y - p[1]) / p[2] ** 2 if d > 1 else zero
        return np.column_stack([gx, gy])[:, :d]

    def hessian(self, points):
        """Closed-form Hessian, shape (n, d, d).

        Raises DomainError for presets without second derivatives.
        """
        if self.kind in ("radial", "grid_sampled"):
            raise DomainError(f"{self.kind} has no closed-form second derivatives")
        x, y, d = _xy(points)
        p = self.params
        k = self.kind
        H = np.zeros((x.size, 2, 2))
        if k == "sinusoidal":
            ax, ay = np.pi * p[1], np.pi * p[2]
            if d > 1:
                sx, cx = np.sin(ax * x), np.cos(ax * x)
                sy, cy = np.sin(ay * y), np.cos(ay * y)
                H[:, 0, 0] = -p[0] * ax * ax * sx * sy
                H[:, 1, 1] = -p[0] * ay * ay * sx * sy
                H[:, 0, 1] = H[:, 1, 0] = p[0] * ax * ay * cx * cy
            else:
                H[:, 0, 0] = -p[0] * ax * ax * np.sin(ax * x)
        elif k == "quadratic":
            H[:, 0, 0] = 2 * p[3]
            H[:, 0, 1] = H[:, 1, 0] = p[4]
            H[:, 1, 1] = 2 * p[5]
        elif k == "radial_smooth":
            v = self.evaluate(points)
            s2 = p[2] ** 2
            dx, dy = x - p[0], (y - p[1]) if d > 1 else np.zeros_like(x)
            H[:, 0, 0] = v * (dx * dx / s2 - 1.0) / s2
            H[:, 1, 1] = v * (dy * dy / s2 - 1.0) / s2
            H[:, 0, 1] = H[:, 1, 0] = v * dx * dy / (s2 * s2)
        return H[:, :d, :d]

    def to_dict(self):
        if self.kind == "grid_sampled" and self.path is not None and not self.params:
            return {"kind": self.kind, "path": self.path}
        return {"kind": self.kind, "params": list(self.params)}


def constant(c):
    return Coefficient("constant", (c,))


def sample(coeff, mesh):
    """Nodal values of a coefficient on a mesh."""
    if coeff.analytic:
        return coeff.evaluate(mesh.nodes)
    if coeff.params:
        vals = np.array(coeff.params, dtype=float)
    else:
        from .grid import field_from_csv
        vals = field_from_csv(mesh, coeff.path)
    if vals.shape != (mesh.n_nodes,):
        raise ValidationError(
            f"grid_sampled table has {vals.size} values, mesh has {mesh.n_nodes} nodes")
    return vals


@dataclass(frozen=True)
class ProblemSpec:
    domain: Domain
    resolution: tuple
    law: EnergyLaw
    f_plus: Coefficient
    f_minus: Coefficient
    gamma_plus: Coefficient
    gamma_minus: Coefficient
    psi: Coefficient
    c_gamma: float = 0.0
    solver: SolverOptions = field(default_factory=SolverOptions)
    output_dir: str = None

    @property
    def smoothing_delta(self):
        """Final (narrowest) ramp width of the smoothing schedule."""
        return self.solver.delta_schedule[-1]

    def mesh(self):
        return build_mesh(self.domain, self.resolution)

    def with_(self, **changes):
        return replace(self, **changes)

    def coefficients(self):
        return {name: getattr(self, name) for name in COEFFICIENT_NAMES}


def validate(spec, mesh=None):
    """Check every invariant that needs nodal samples; returns the mesh."""
    mesh = mesh if mesh is not None else spec.mesh()
    if spec.c_gamma < 0 or not math.isfinite(spec.c_gamma):
        raise ValidationError("c_gamma must be a nonnegative finite number")
    for name, coeff in spec.coefficients().items():
        vals = sample(coeff, mesh)
        if not np.all(np.isfinite(vals)):
            raise ValidationError(f"{name} is not finite at every node")
        if name.startswith("gamma") and spec.c_gamma > 0:
            low = float(vals.min())
            if low < spec.c_gamma:
                raise ValidationError(
                    f"{name} drops to {low:g} below c_gamma = {spec.c_gamma:g}")
    return mesh


def two_phase_value(spec, mesh, node, u_value, which):
    """Unsmoothed f(x,u)*u or gamma(x,u) at a mesh node.

    u = 0 belongs to the minus phase, except that gamma(x, 0) = 0 when a
    positive ``c_gamma`` is declared.
    """
    u = float(u_value)
    if not math.isfinite(u):
        raise DomainError("u must be finite")
    plus = u > 0
    if which == "f_term":
        coeff = spec.f_plus if plus else spec.f_minus
        return float(sample(coeff, mesh)[node]) * u
    if which == "gamma_term":
        if u == 0 and spec.c_gamma > 0:
            return 0.0
        coeff = spec.gamma_plus if plus else spec.gamma_minus
        return float(sample(coeff, mesh)[node])
    raise ValueError(f"which must be 'f_term' or 'gamma_term', got {which!r}")


# ----------------------------------------------------------------------
# config files
# ----------------------------------------------------------------------

_TOP_KEYS = {"domain", "grid", "law", "coefficients", "c_gamma", "solver", "output_dir"}


def _check_keys(d, allowed, where, required=()):
    if not isinstance(d, dict):
        raise ValidationError(f"{where} must be an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ValidationError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = set(required) - set(d)
    if missing:
        raise ValidationError(f"missing keys in {where}: {sorted(missing)}")


def spec_from_dict(d, base_dir="."):
    _check_keys(d, _TOP_KEYS, "config", required=("domain", "grid", "law", "coefficients"))
    _check_keys(d["domain"], {"kind", "bounds"}, "domain", required=("kind", "bounds"))
    try:
        domain = Domain(d["domain"]["kind"], tuple(d["domain"]["bounds"]))
    except DomainError as exc:
        raise ValidationError(str(exc)) from exc
    grid = d["grid"]
    resolution = (int(grid),) if isinstance(grid, (int, float)) else tuple(int(g) for g in grid)
    if len(resolution) != domain.dim or any(r < 2 for r in resolution):
        raise ValidationError(f"grid {grid} does not fit a {domain.kind} (>= 2 cells per axis)")

    _check_keys(d["law"], {"k", "exp_cap"}, "law", required=("k",))
    try:
        law = EnergyLaw(parse_order(d["law"]["k"]), float(d["law"].get("exp_cap", DEFAULT_EXP_CAP)))
    except DomainError as exc:
        raise ValidationError(str(exc)) from exc

    coeffs = d["coefficients"]
    _check_keys(coeffs, COEFFICIENT_NAMES, "coefficients", required=COEFFICIENT_NAMES)
    parsed = {}
    for name in COEFFICIENT_NAMES:
        c = coeffs[name]
        _check_keys(c, {"kind", "params", "path"}, f"coefficients.{name}", required=("kind",))
        path = c.get("path")
        if path is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        parsed[name] = Coefficient(c["kind"], tuple(c.get("params", ())), path)

    solver = SolverOptions.from_dict(d.get("solver") or {})
    c_gamma = float(d.get("c_gamma", 0.0))
    spec = ProblemSpec(domain, resolution, law, c_gamma=c_gamma, solver=solver,
                       output_dir=d.get("output_dir"), **parsed)
    validate(spec)
    return spec


def spec_to_dict(spec):
    return {
        "domain": {"kind": spec.domain.kind, "bounds": list(spec.domain.bounds)},
        "grid": list(spec.resolution),
        "law": {"k": "inf" if spec.law.order == INFINITE else spec.law.order,
                "exp_cap": spec.law.exp_cap},
        "coefficients": {n: c.to_dict() for n, c in spec.coefficients().items()},
        "c_gamma": spec.c_gamma,
        "solver": spec.solver.to_dict(),
        "output_dir": spec.output_dir,
    }


def load_config(path):
    """Parse and validate a JSON config file."""
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    try:
        return spec_from_dict(d, base_dir=os.path.dirname(os.path.abspath(path)))
    except (TypeError, KeyError) as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def save_config(spec, path):
    with open(path, "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2)
        fh.write("\n")
