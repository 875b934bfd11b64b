"""Free-boundary extraction and measurement on piecewise-linear fields.

Level sets come from marching simplices: on every triangle (or interval)
whose vertices lie on both sides of the level, the crossing points of
the linear interpolant are joined.  Perimeters are also measured through
the coarea identity, as the band average

    (1/eps) * integral over {0 < u < eps} of |grad u|

which averages the lengths of the levels t in (0, eps).
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DegenerateInput, DomainError
from .grid import element_gradients

SIDES = ("plus", "minus")


@dataclass
class FreeBoundarySet:
    """Discrete free boundary of one phase.

    ``plateau_elements`` lists the triangles on which the field equals
    the level identically (dead cores of the two-phase problem).
    """

    polylines: list
    level: float
    side: str
    length_marching: float
    perimeter_coarea: float
    epsilon: float
    plateau_elements: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _check_side(side):
    if side not in SIDES:
        raise DomainError(f"side must be 'plus' or 'minus', got {side!r}")


def _inside(values, t, side):
    # the set whose boundary is traced: {u > t} or {u < t}
    return values > t if side == "plus" else values < t


def _crossing(mesh, U, a, b, t):
    """Point where the interpolant reaches t on edge (a, b) and its key.

    ``a`` is inside, ``b`` outside; a vertex hit exactly is keyed by the
    node so that neighbouring simplices agree on it.
    """
    if U[b] == t:
        return mesh.nodes[b], ("n", int(b))
    theta = (t - U[a]) / (U[b] - U[a])
    p = mesh.nodes[a] + theta * (mesh.nodes[b] - mesh.nodes[a])
    return p, ("e", min(int(a), int(b)), max(int(a), int(b)))


def _segments(mesh, U, t, side):
    el = mesh.elements
    inside = _inside(U[el], t, side)
    cnt = inside.sum(axis=1)
    mixed = np.flatnonzero((cnt > 0) & (cnt < el.shape[1]))
    plateau = np.flatnonzero(np.all(U[el] == t, axis=1))
    segs = []
    for e in mixed:
        verts = el[e]
        ins = inside[e]
        pts = []
        nv = len(verts)
        for i in range(nv):
            for j in range(i + 1, nv):
                if ins[i] != ins[j]:
                    a, b = (verts[i], verts[j]) if ins[i] else (verts[j], verts[i])
                    pts.append(_crossing(mesh, U, a, b, t))
        segs.append(pts)
    return segs, plateau


def _chain(segs):
    """Join 2-point segments sharing crossing keys into polylines."""
    points, ends, seen = {}, [], set()
    for (p, kp), (q, kq) in segs:
        if kp == kq:
            continue
        key = (kp, kq) if kp < kq else (kq, kp)
        if key in seen:
            continue  # an edge lying on the level, reported by both triangles
        seen.add(key)
        points[kp], points[kq] = p, q
        ends.append((kp, kq))
    adj = {}
    for i, (kp, kq) in enumerate(ends):
        adj.setdefault(kp, []).append(i)
        adj.setdefault(kq, []).append(i)
    used = np.zeros(len(ends), dtype=bool)
    order = list(dict.fromkeys(k for pair in ends for k in pair))
    # open chains start from keys of odd degree, then closed loops
    starts = [k for k in order if len(adj[k]) % 2 == 1] + order
    polylines = []
    for start in starts:
        if all(used[i] for i in adj[start]):
            continue
        path = [start]
        cur = start
        while True:
            nxt = [i for i in adj[cur] if not used[i]]
            if not nxt:
                break
            i = nxt[0]
            used[i] = True
            kp, kq = ends[i]
            cur = kq if kp == cur else kp
            path.append(cur)
        polylines.append(np.array([points[k] for k in path]))
    return polylines


def level_set(mesh, U, t, side="plus", return_plateaus=False):
    """Polylines of the boundary of {u > t} (side plus) or {u < t} (minus).

    Each polyline is an array of points of shape (m, d); closed curves
    repeat their first point at the end.  In 1D each level point is its
    own one-point polyline.  Triangles with all three values equal to t
    are reported when ``return_plateaus`` is set.
    """
    _check_side(side)
    t = float(t)
    if not np.isfinite(t):
        raise DomainError("level must be finite")
    U = mesh.check_field(U)
    segs, plateau = _segments(mesh, U, t, side)
    if mesh.dim == 1:
        keys, lines = set(), []
        for pts in segs:
            p, k = pts[0]
            if k not in keys:
                keys.add(k)
                lines.append(np.array([p]))
        lines.sort(key=lambda a: a[0, 0])
        out = lines
    else:
        out = _chain(segs)
    return (out, plateau) if return_plateaus else out


def polyline_length(polylines):
    """Total length; in 1D the number of points (counting measure)."""
    total = 0.0
    for line in polylines:
        if len(line) == 1:
            total += 1.0 if line.shape[1] == 1 else 0.0
        else:
            total += float(np.sum(np.linalg.norm(np.diff(line, axis=0), axis=1)))
    return total


def _band(side, epsilon):
    return (0.0, epsilon) if side == "plus" else (-epsilon, 0.0)


def coarea_perimeter(mesh, U, epsilon, side="plus"):
    """Band-averaged perimeter (1/eps) sum_T |T cap band| |grad u_T|."""
    _check_side(side)
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    U = mesh.check_field(U)
    lo, hi = _band(side, float(epsilon))
    meas = _kernels.band_measure(U[mesh.elements], np.ascontiguousarray(mesh.measures),
                                 lo, hi, closed=False)
    g = np.linalg.norm(element_gradients(mesh, U), axis=1)
    vals = meas * g
    return float(np.cumsum(vals)[-1]) / epsilon if vals.size else 0.0


def level_average_length(mesh, U, epsilon, side="plus", levels=64):
    """(1/eps) times the integral of level-set length over t in the band.

    Midpoint rule over ``levels`` equally spaced levels; the marching
    counterpart of :func:`coarea_perimeter`.
    """
    _check_side(side)
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    ts = (np.arange(levels) + 0.5) * epsilon / levels
    if side == "minus":
        ts = -ts
    return float(np.mean([polyline_length(level_set(mesh, U, t, side)) for t in ts]))


def thin_band_stats(mesh, U, epsilon_list):
    """Rows (eps, measure{|u| <= eps}, integral over it of |grad u|^2).

    Returns an array of shape (len(epsilon_list), 3) sorted by eps.
    """
    eps = np.sort(np.asarray(list(epsilon_list), dtype=float))
    if np.any(eps <= 0):
        raise DomainError("band widths must be positive")
    U = mesh.check_field(U)
    vals = U[mesh.elements]
    measures = np.ascontiguousarray(mesh.measures)
    g2 = np.sum(element_gradients(mesh, U) ** 2, axis=1)
    rows = []
    for e in eps:
        m = _kernels.band_measure(vals, measures, -e, e, closed=True)
        rows.append((e, float(np.cumsum(m)[-1]), float(np.cumsum(m * g2)[-1])))
    return np.array(rows).reshape(-1, 3)


def band_table(mesh, U, epsilon_list):
    """thin_band_stats extended with the plus and minus coarea perimeters."""
    stats = thin_band_stats(mesh, U, epsilon_list)
    rows = []
    for e, m, d in stats:
        rows.append((e, m, d, coarea_perimeter(mesh, U, e, "plus"),
                     coarea_perimeter(mesh, U, e, "minus")))
    return np.array(rows).reshape(-1, 5)


def origin_fit(x, y):
    """Least-squares slope of y = c x and its R^2 about the mean of y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = float(x @ y / (x @ x))
    ss_res = float(np.sum((y - c * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return c, r2


def free_boundary(mesh, U, side="plus", epsilon=0.05):
    """Extract and measure the boundary of {u > 0} or {u < 0}."""
    lines, plateau = level_set(mesh, U, 0.0, side, return_plateaus=True)
    return FreeBoundarySet(polylines=lines, level=0.0, side=side,
                           length_marching=polyline_length(lines),
                           perimeter_coarea=coarea_perimeter(mesh, U, epsilon, side),
                           epsilon=float(epsilon), plateau_elements=plateau)


def _sample_points(polylines, spacing):
    pts = []
    for line in polylines:
        line = np.asarray(line, dtype=float)
        pts.append(line)
        for p, q in zip(line[:-1], line[1:]):
            n = int(np.ceil(np.linalg.norm(q - p) / spacing))
            if n > 1:
                s = np.arange(1, n)[:, None] / n
                pts.append(p + s * (q - p))
    return np.concatenate(pts)


def box_counting_dimension(polylines, scale_list):
    """Slope of log N(s) against log(1/s) and the R^2 of that fit.

    N(s) counts the cells of an axis-aligned grid of size s, anchored at
    the lower corner of the bounding box, that the polylines meet.
    Segments are sampled at spacing s/4.
    """
    lines = [np.atleast_2d(np.asarray(p, dtype=float)) for p in polylines]
    lines = [p for p in lines if p.size]
    if not lines:
        raise DegenerateInput("no polylines to measure")
    scales = np.asarray(list(scale_list), dtype=float)
    if scales.size < 3 or np.any(scales <= 0):
        raise DomainError("need at least three positive scales")
    allpts = np.concatenate(lines)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    counts = []
    for s in scales:
        pts = _sample_points(lines, s / 4.0)
        top = np.maximum(np.ceil((hi - lo) / s).astype(int) - 1, 0)
        idx = np.minimum(np.floor((pts - lo) / s).astype(int), top)
        counts.append(len(np.unique(idx, axis=0)))
    x = np.log(1.0 / scales)
    y = np.log(np.asarray(counts, dtype=float))
    slope, icpt = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + icpt)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


# ----------------------------------------------------------------------
# exports
# ----------------------------------------------------------------------

def polylines_to_csv(polylines, path):
    with open(path, "w") as fh:
        fh.write("polyline_id,vertex_index,x,y\n")
        for i, line in enumerate(polylines):
            for j, p in enumerate(np.atleast_2d(line)):
                y = p[1] if p.size > 1 else 0.0
                fh.write(f"{i},{j},{p[0]:.17g},{y:.17g}\n")


def band_table_to_csv(table, path):
    with open(path, "w") as fh:
        fh.write("epsilon,band_measure,band_dirichlet,perimeter_plus,perimeter_minus\n")
        for row in np.atleast_2d(table):
            if row.size:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
