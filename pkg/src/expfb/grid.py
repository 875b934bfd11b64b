"""Structured simplicial meshes of an interval or a rectangle.

Rectangles are split into right triangles along the same diagonal in
every cell, which keeps the triangulation nonobtuse.  Nodes are numbered
row-major with x running fastest.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, DomainError, OutOfDomain

_KINDS = {"interval": 2, "rectangle": 4}


@dataclass(frozen=True)
class Domain:
    kind: str
    bounds: tuple

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown domain kind {self.kind!r}")
        b = tuple(float(v) for v in self.bounds)
        if len(b) != _KINDS[self.kind]:
            raise DomainError(f"{self.kind} needs {_KINDS[self.kind]} bounds, got {len(b)}")
        if not all(np.isfinite(b)):
            raise DomainError("bounds must be finite")
        if not (b[0] < b[1]) or (self.kind == "rectangle" and not (b[2] < b[3])):
            raise DomainError(f"degenerate bounds {b}")
        object.__setattr__(self, "bounds", b)

    @property
    def dim(self):
        return 1 if self.kind == "interval" else 2

    @property
    def lower(self):
        return np.array(self.bounds[0::2])

    @property
    def upper(self):
        return np.array(self.bounds[1::2])

    @property
    def measure(self):
        return float(np.prod(self.upper - self.lower))


def interval(a=0.0, b=1.0):
    return Domain("interval", (a, b))


def rectangle(x0=0.0, x1=1.0, y0=0.0, y1=1.0):
    return Domain("rectangle", (x0, x1, y0, y1))


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable structured mesh.  Build it with :func:`build_mesh`."""

    domain: Domain
    shape: tuple          # cells per axis
    nodes: np.ndarray     # (n_nodes, dim)
    elements: np.ndarray  # (n_elements, dim + 1)
    boundary_mask: np.ndarray

    @property
    def dim(self):
        return self.domain.dim

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def spacing(self):
        return (self.domain.upper - self.domain.lower) / np.array(self.shape)

    @property
    def h(self):
        return float(np.max(self.spacing))

    @cached_property
    def _geometry(self):
        X = self.nodes[self.elements]            # (m, d+1, d)
        edges = X[:, 1:, :] - X[:, :1, :]        # (m, d, d)
        if self.dim == 1:
            meas = edges[:, 0, 0].copy()
            inv = (1.0 / meas)[:, None, None]
        else:
            det = edges[:, 0, 0] * edges[:, 1, 1] - edges[:, 0, 1] * edges[:, 1, 0]
            meas = 0.5 * det
            inv = np.empty_like(edges)
            inv[:, 0, 0] = edges[:, 1, 1] / det
            inv[:, 0, 1] = -edges[:, 1, 0] / det
            inv[:, 1, 0] = -edges[:, 0, 1] / det
            inv[:, 1, 1] = edges[:, 0, 0] / det
        g = np.empty((self.n_elements, self.dim + 1, self.dim))
        if self.dim == 1:
            g[:, 1, 0] = inv[:, 0, 0]
        else:
            # inv holds E^{-T}; barycentric gradients are its rows
            g[:, 1, :] = inv[:, 0, :]
            g[:, 2, :] = inv[:, 1, :]
        g[:, 0, :] = -g[:, 1:, :].sum(axis=1)
        return _readonly(np.abs(meas)), _readonly(g)

    @property
    def measures(self):
        return self._geometry[0]

    @property
    def shape_grads(self):
        """(m, d+1, d) constant gradients of the element hat functions."""
        return self._geometry[1]

    @cached_property
    def lumped_weights(self):
        w = np.zeros(self.n_nodes)
        share = self.measures / (self.dim + 1)
        np.add.at(w, self.elements.ravel(), np.repeat(share, self.dim + 1))
        return _readonly(w)

    @cached_property
    def centroids(self):
        return _readonly(self.nodes[self.elements].mean(axis=1))

    @cached_property
    def node_elements(self):
        """For each node, the sorted element indices of its patch."""
        patches = [[] for _ in range(self.n_nodes)]
        for e, el in enumerate(self.elements):
            for i in el:
                patches[i].append(e)
        return tuple(np.array(p, dtype=np.int64) for p in patches)

    def grid_index(self, node):
        """(i, j) lattice indices of a node (j = 0 in 1D)."""
        nx = self.shape[0] + 1
        return node % nx, node // nx

    def check_field(self, U):
        U = np.asarray(U, dtype=float)
        if U.shape != (self.n_nodes,):
            raise DimensionMismatch(
                f"field has shape {U.shape}, mesh has {self.n_nodes} nodes")
        return U


def build_mesh(domain, resolution):
    """Uniform mesh with ``resolution`` cells per axis (each >= 2)."""
    res = (resolution,) if np.isscalar(resolution) else tuple(resolution)
    res = tuple(int(r) for r in res)
    if len(res) != domain.dim:
        raise DomainError(f"{domain.kind} needs {domain.dim} resolution entries")
    if any(r < 2 for r in res):
        raise DomainError(f"resolution must be >= 2 per axis, got {res}")
    lo, hi = domain.lower, domain.upper
    axes = [lo[a] + (hi[a] - lo[a]) * np.arange(res[a] + 1) / res[a]
            for a in range(domain.dim)]
    for a in range(domain.dim):
        axes[a][-1] = hi[a]
    if domain.dim == 1:
        n = res[0]
        nodes = axes[0][:, None].copy()
        elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        boundary = np.zeros(n + 1, dtype=bool)
        boundary[[0, n]] = True
    else:
        nx, ny = res
        X, Y = np.meshgrid(axes[0], axes[1])   # rows = y, x fastest
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        i, j = np.meshgrid(np.arange(nx), np.arange(ny))
        i, j = i.ravel(), j.ravel()
        n00 = j * (nx + 1) + i
        n10, n01, n11 = n00 + 1, n00 + nx + 1, n00 + nx + 2
        lower = np.column_stack([n00, n10, n01])
        upper = np.column_stack([n11, n01, n10])
        elements = np.empty((2 * nx * ny, 3), dtype=np.int64)
        elements[0::2] = lower
        elements[1::2] = upper
        I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
        boundary = ((I == 0) | (I == nx) | (J == 0) | (J == ny)).ravel()
    return Mesh(domain, res, _readonly(nodes),
                _readonly(elements.astype(np.int64)), _readonly(boundary))


def element_gradients(mesh, U):
    """(m, d) array of the constant gradient on every element."""
    U = mesh.check_field(U)
    return np.einsum("ea,eaj->ej", U[mesh.elements], mesh.shape_grads)


def element_gradient(mesh, U, element_index):
    U = mesh.check_field(U)
    e = int(element_index)
    if not 0 <= e < mesh.n_elements:
        raise IndexError(f"element index {e} out of range")
    return U[mesh.elements[e]] @ mesh.shape_grads[e]


def integrate(mesh, element_values):
    """Sum of |T| * value(T) in element order."""
    v = np.asarray(element_values, dtype=float)
    if v.shape != (mesh.n_elements,):
        raise DimensionMismatch("need one value per element")
    terms = mesh.measures * v
    return float(np.cumsum(terms)[-1])


def interpolate(mesh, U, points):
    """Piecewise-linear interpolation at one point or an (n, d) array."""
    U = mesh.check_field(U)
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 0 if mesh.dim == 1 else pts.ndim == 1
    pts = pts.reshape(-1, mesh.dim)
    lo, hi = mesh.domain.lower, mesh.domain.upper
    tol = 1e-12 * np.maximum(1.0, np.abs(hi - lo))
    if np.any(pts < lo - tol) or np.any(pts > hi + tol):
        raise OutOfDomain("point outside the closed domain")
    hs = mesh.spacing
    rel = (pts - lo) / hs
    cell = np.clip(np.floor(rel).astype(np.int64), 0, np.array(mesh.shape) - 1)
    loc = np.clip(rel - cell, 0.0, 1.0)
    if mesh.dim == 1:
        i = cell[:, 0]
        xi = loc[:, 0]
        out = U[i] + xi * (U[i + 1] - U[i])
    else:
        nx = mesh.shape[0]
        i, j = cell[:, 0], cell[:, 1]
        xi, eta = loc[:, 0], loc[:, 1]
        n00 = j * (nx + 1) + i
        u00, u10 = U[n00], U[n00 + 1]
        u01, u11 = U[n00 + nx + 1], U[n00 + nx + 2]
        low = xi + eta <= 1.0
        out = np.where(low,
                       u00 + xi * (u10 - u00) + eta * (u01 - u00),
                       u11 + (1.0 - xi) * (u01 - u11) + (1.0 - eta) * (u10 - u11))
    return float(out[0]) if single else out


def refine(mesh):
    """Uniformly refined mesh and the coarse-to-fine node correspondence."""
    fine = build_mesh(mesh.domain, tuple(2 * r for r in mesh.shape))
    if mesh.dim == 1:
        corr = 2 * np.arange(mesh.n_nodes)
    else:
        i, j = mesh.grid_index(np.arange(mesh.n_nodes))
        corr = (2 * j) * (fine.shape[0] + 1) + 2 * i
    return fine, corr


def prolong(coarse, fine, U):
    """Interpolate a coarse field onto a finer mesh of the same domain."""
    return interpolate(coarse, U, fine.nodes)


def stiffness_matrix(mesh):
    """P1 Laplace stiffness matrix (scipy CSR)."""
    import scipy.sparse as sp

    G = mesh.shape_grads
    local = np.einsum("e,eaj,ebj->eab", mesh.measures, G, G)
    nv = mesh.dim + 1
    rows = np.repeat(mesh.elements, nv, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, nv)).ravel()
    K = sp.coo_matrix((local.ravel(), (rows, cols)),
                      shape=(mesh.n_nodes, mesh.n_nodes))
    return K.tocsr()


def field_to_csv(mesh, U, path):
    """Write ``x,y,u`` (or ``x,u`` in 1D) with 17 significant digits."""
    U = mesh.check_field(U)
    header = "x,u" if mesh.dim == 1 else "x,y,u"
    data = np.column_stack([mesh.nodes, U])
    np.savetxt(path, data, delimiter=",", header=header, comments="",
               fmt="%.17g")


def field_from_csv(mesh, path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape != (mesh.n_nodes, mesh.dim + 1):
        raise DimensionMismatch(
            f"{path}: expected {mesh.n_nodes} rows of {mesh.dim + 1} columns")
    if not np.allclose(data[:, :-1], mesh.nodes, rtol=0, atol=1e-12):
        raise DimensionMismatch(f"{path}: node coordinates do not match mesh")
    return data[:, -1].copy()
