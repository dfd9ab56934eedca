"""Polytopes in H-representation and the face lattice of unions of them.

A :class:`Polytope` is a finite union of closed convex pieces, each given as an
intersection of half-spaces ``x . m <= b``.  Faces of the union are found by
working on the arrangement of all supporting planes: every plane is cut by the
others into cells, and a cell belongs to the boundary when exactly one side of
it is inside the union.  Everything is restricted to ``d in {2, 3}``.

All geometric tolerances derive from :data:`EPS`.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from shapely import constrained_delaunay_triangles
from shapely.geometry import LineString, MultiPolygon, Point, Polygon, box
from shapely.ops import polygonize, unary_union

from .errors import (
    AmbiguousOrientationError,
    DegenerateFaceError,
    DegeneratePolytopeError,
    EmptyPolytopeError,
    GeometryError,
    NotOnBoundaryError,
    UnboundedPolytopeError,
)

EPS = 1e-9

# distance from a face at which the orientation test places its points
ORIENTATION_OFFSET = 1e-3


class Orientation(str, enum.Enum):
    SMOOTH = "Smooth"
    OUTWARDS = "Outwards"
    INWARDS = "Inwards"


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """Closed half-space ``{x : x . m <= b}`` with unit normal ``m``."""

    m: np.ndarray
    b: float

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float).ravel()
        nrm = np.linalg.norm(m)
        if not np.isfinite(nrm) or nrm < EPS:
            raise GeometryError("half-space normal must be a nonzero finite vector")
        m = m / nrm
        m.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "b", float(self.b) / nrm)

    @property
    def dim(self):
        return self.m.size

    def value(self, x):
        """Signed residual ``x . m - b`` (negative inside)."""
        return np.asarray(x, dtype=float) @ self.m - self.b

    def __repr__(self):
        return f"HalfSpace(m={self.m.tolist()}, b={self.b:.12g})"


def _chebyshev(A, b, bounded_box=None):
    """Largest ``t <= 1`` such that ``A x + t <= b`` is feasible.

    Returns ``(t, x)`` or ``(None, None)`` when the LP is infeasible.
    """
    n, d = A.shape
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A_ub = np.hstack([A, np.ones((n, 1))])
    bounds = [(None, None)] * d + [(None, 1.0)]
    if bounded_box is not None:
        bounds = [tuple(bounded_box)] * d + [(None, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
    if res.status == 2:
        return None, None
    if res.status != 0:
        raise GeometryError(f"LP failed: {res.message}")
    return float(res.x[-1]), res.x[:-1]


class ConvexPolytope:
    """Bounded, full-dimensional intersection of half-spaces.

    Use :func:`intersect_halfspaces` to build one; it validates the system
    and enumerates vertices.
    """

    def __init__(self, halfspaces, vertices, interior_point):
        self.halfspaces = tuple(halfspaces)
        self.vertices = np.asarray(vertices, dtype=float)
        self.interior_point = np.asarray(interior_point, dtype=float)
        self.A = np.array([h.m for h in self.halfspaces])
        self.b = np.array([h.b for h in self.halfspaces])
        self.A.setflags(write=False)
        self.b.setflags(write=False)

    @property
    def dim(self):
        return self.A.shape[1]

    def contains(self, x, tol=EPS):
        x = np.asarray(x, dtype=float)
        return np.all(x @ self.A.T - self.b <= tol, axis=-1)

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def volume(self):
        from scipy.spatial import ConvexHull

        return float(ConvexHull(self.vertices).volume)

    def __repr__(self):
        return f"ConvexPolytope(d={self.dim}, q={len(self.halfspaces)}, nverts={len(self.vertices)})"


def intersect_halfspaces(hs):
    """Intersect half-spaces into a bounded convex polytope.

    Parameters
    ----------
    hs : sequence of HalfSpace
        Constraints in dimension 2 or 3.

    Returns
    -------
    ConvexPolytope
        With vertices enumerated and sorted lexicographically.

    Raises
    ------
    EmptyPolytopeError, DegeneratePolytopeError, UnboundedPolytopeError
    """
    hs = list(hs)
    if not hs:
        raise GeometryError("need at least one half-space")
    d = hs[0].dim
    if d not in (2, 3) or any(h.dim != d for h in hs):
        raise GeometryError("half-spaces must all live in dimension 2 or 3")
    A = np.array([h.m for h in hs])
    b = np.array([h.b for h in hs])

    t, x_c = _chebyshev(A, b)
    if t is None or t < -EPS:
        raise EmptyPolytopeError("half-space system is infeasible")
    if t <= EPS:
        raise DegeneratePolytopeError("half-space intersection has empty interior")

    # a recession direction shows up as an unbounded LP along some axis
    for k in range(d):
        for sgn in (1.0, -1.0):
            c = np.zeros(d)
            c[k] = -sgn
            res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * d, method="highs")
            if res.status == 3:
                raise UnboundedPolytopeError(f"unbounded along {'+' if sgn > 0 else '-'}e{k + 1}")
            if res.status != 0:
                raise GeometryError(f"LP failed: {res.message}")
    if len(hs) < d + 1:
        raise UnboundedPolytopeError("fewer than d+1 half-spaces cannot bound a region")

    scale = max(1.0, float(np.max(np.abs(b))))
    verts = []
    for idx in itertools.combinations(range(len(hs)), d):
        M = A[list(idx)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, b[list(idx)])
        if np.all(A @ v - b <= 1e-10 * scale):
            if not any(np.linalg.norm(v - w) <= 1e-10 * scale for w in verts):
                verts.append(v)
    verts.sort(key=lambda v: tuple(np.round(v, 12)))
    return ConvexPolytope(hs, np.array(verts), x_c)


@dataclass(eq=False)
class Face:
    """One face of a polytope.

    ``normals``/``offsets`` hold the active constraints with normals pointing
    out of the union; ``geometry`` is a point, a segment ``(a, b)`` or, for
    2-faces in 3D, ``(origin, basis, shapely polygon)``.
    """

    id: int
    dim: int
    normals: np.ndarray
    offsets: np.ndarray
    orientation: Orientation | None
    sample_point: np.ndarray
    kind: str
    geometry: object = field(repr=False)

    @property
    def active_normals(self):
        return [(m.copy(), float(b)) for m, b in zip(self.normals, self.offsets)]

    @property
    def n_active(self):
        return len(self.normals)

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "point":
            return float(np.linalg.norm(x - self.geometry))
        if self.kind == "segment":
            a, b = self.geometry
            u = b - a
            t = np.clip((x - a) @ u / (u @ u), 0.0, 1.0)
            return float(np.linalg.norm(x - a - t * u))
        origin, basis, poly = self.geometry
        rel = x - origin
        coords = basis @ rel
        normal_part = rel - basis.T @ coords
        d2 = poly.distance(Point(coords))
        return float(np.hypot(np.linalg.norm(normal_part), d2))

    def contains(self, x, tol=EPS):
        return self.distance(x) <= tol

    def convex_parts(self):
        """Vertex arrays of convex pieces whose union is the face."""
        if self.kind == "point":
            return [self.geometry[None, :]]
        if self.kind == "segment":
            return [np.array(self.geometry)]
        origin, basis, poly = self.geometry
        parts = []
        for tri in constrained_delaunay_triangles(poly).geoms:
            c2 = np.array(tri.exterior.coords)[:3]
            parts.append(origin + c2 @ basis)
        return parts

    def inf_distance(self, x):
        """Distance from ``x`` to the face in the max-norm."""
        x = np.asarray(x, dtype=float)
        if self.kind == "point":
            return float(np.max(np.abs(x - self.geometry)))
        return min(_linf_distance_to_hull(x, V) for V in self.convex_parts())


def _linf_distance_to_hull(x, V):
    m, d = V.shape
    # variables: lambda (m), u
    c = np.zeros(m + 1)
    c[-1] = 1.0
    rows, rhs = [], []
    for k in range(d):
        r = np.zeros(m + 1)
        r[:m] = -V[:, k]
        r[-1] = -1.0
        rows.append(r)
        rhs.append(-x[k])
        r = np.zeros(m + 1)
        r[:m] = V[:, k]
        r[-1] = -1.0
        rows.append(r)
        rhs.append(x[k])
    A_eq = np.zeros((1, m + 1))
    A_eq[0, :m] = 1.0
    res = linprog(
        c, A_ub=np.array(rows), b_ub=np.array(rhs), A_eq=A_eq, b_eq=[1.0],
        bounds=[(0, None)] * m + [(0, None)], method="highs",
    )
    if res.status != 0:
        raise GeometryError(f"LP failed: {res.message}")
    return float(res.x[-1])


def _plane_basis(m):
    """Orthonormal rows spanning the plane orthogonal to unit ``m`` (3D)."""
    k = int(np.argmin(np.abs(m)))
    e = np.zeros(3)
    e[k] = 1.0
    u = np.cross(m, e)
    u /= np.linalg.norm(u)
    v = np.cross(m, u)
    return np.array([u, v])


class Polytope:
    """Finite union of closed convex polytopes with its face lattice.

    Parameters
    ----------
    pieces : sequence of ConvexPolytope
        All in the same dimension.  The interior of the union must be
        connected.
    """

    def __init__(self, pieces):
        pieces = list(pieces)
        if not pieces:
            raise GeometryError("polytope needs at least one piece")
        self.pieces = tuple(pieces)
        self.dim = pieces[0].dim
        if any(p.dim != self.dim for p in pieces):
            raise GeometryError("pieces have mixed dimensions")
        allv = np.vstack([p.vertices for p in pieces])
        self.lo = allv.min(axis=0)
        self.hi = allv.max(axis=0)
        self.scale = float(np.linalg.norm(self.hi - self.lo))
        self._tol = EPS * max(1.0, self.scale)
        self.planes = self._collect_planes()
        self._check_connected()
        self.faces = self._enumerate()

    # ---- construction helpers -------------------------------------------------

    @classmethod
    def from_halfspace_lists(cls, pieces):
        return cls([intersect_halfspaces(p) for p in pieces])

    @classmethod
    def box(cls, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        hs = []
        for k in range(lo.size):
            e = np.zeros(lo.size)
            e[k] = 1.0
            hs.append(HalfSpace(e, hi[k]))
            hs.append(HalfSpace(-e, -lo[k]))
        return intersect_halfspaces(hs)

    def _collect_planes(self):
        planes = []
        for p in self.pieces:
            for h in p.halfspaces:
                m, b = h.m.copy(), h.b
                nz = np.flatnonzero(np.abs(m) > 1e-12)[0]
                if m[nz] < 0:
                    m, b = -m, -b
                if not any(np.allclose(m, q[0], atol=1e-12) and abs(b - q[1]) <= self._tol for q in planes):
                    planes.append((m, b))
        return [(m, b) for m, b in sorted(planes, key=lambda q: (tuple(np.round(q[0], 12)), q[1]))]

    def _check_connected(self):
        n = len(self.pieces)
        adj = {i: set() for i in range(n)}
        for i, j in itertools.combinations(range(n), 2):
            if self._pieces_adjacent(self.pieces[i], self.pieces[j]):
                adj[i].add(j)
                adj[j].add(i)
        seen, stack = {0}, [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        if len(seen) != n:
            raise GeometryError("interior of the union of pieces is not connected")

    def _pieces_adjacent(self, P, Q):
        A = np.vstack([P.A, Q.A])
        b = np.concatenate([P.b, Q.b])
        t, _ = _chebyshev(A, b)
        if t is not None and t > EPS:
            return True
        # shared facet: relax only the constraints lying on a common plane
        # with opposite normals, and require a (d-1)-dimensional contact
        for i, hp in enumerate(P.halfspaces):
            for j, hq in enumerate(Q.halfspaces):
                if np.allclose(hp.m, -hq.m, atol=1e-12) and abs(hp.b + hq.b) <= self._tol:
                    slack = np.ones(len(b))
                    slack[i] = 0.0
                    slack[len(P.b) + j] = 0.0
                    d = self.dim
                    c = np.zeros(d + 1)
                    c[-1] = -1.0
                    A_ub = np.hstack([A, slack[:, None]])
                    res = linprog(c, A_ub=A_ub, b_ub=b, A_eq=np.append(hp.m, 0.0)[None, :],
                                  b_eq=[hp.b], bounds=[(None, None)] * d + [(None, 1.0)],
                                  method="highs")
                    if res.status == 0 and res.x[-1] > EPS:
                        return True
        return False

    # ---- point queries ------------------------------------------------------

    def contains(self, x, tol=None):
        tol = self._tol * 1e-3 if tol is None else tol
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1], dtype=bool)
        for p in self.pieces:
            out |= p.contains(x, tol)
        return out

    def _plane_values(self, x):
        return np.array([x @ m - b for m, b in self.planes])

    def _side(self, y, h, step):
        """+1 if the union lies on the ``-m_h`` side of ``y`` only, -1 if on the
        ``+m_h`` side only, 0 otherwise."""
        m = self.planes[h][0]
        inside_minus = bool(self.contains(y - step * m))
        inside_plus = bool(self.contains(y + step * m))
        if inside_minus and not inside_plus:
            return 1
        if inside_plus and not inside_minus:
            return -1
        return 0

    def _probe_step(self, y, exclude):
        vals = np.abs(self._plane_values(y))
        vals[list(exclude)] = np.inf
        return 0.5 * float(np.min(vals)) if np.isfinite(vals).any() else 1e-3 * self.scale

    def _in_plane_directions(self, x, h, through):
        m = self.planes[h][0]
        if self.dim == 2:
            t = np.array([-m[1], m[0]])
            return [t, -t]
        basis = _plane_basis(m)
        angles = []
        for g in through:
            if g == h:
                continue
            u = np.cross(m, self.planes[g][0])
            if np.linalg.norm(u) < 1e-12:
                continue
            c = basis @ u
            a = np.arctan2(c[1], c[0])
            angles.extend([a % (2 * np.pi), (a + np.pi) % (2 * np.pi)])
        if not angles:
            mids = np.arange(4) * np.pi / 2 + np.pi / 4
        else:
            a = np.unique(np.round(np.array(angles), 12))
            nxt = np.append(a[1:], a[0] + 2 * np.pi)
            mids = 0.5 * (a + nxt)
        return [np.cos(t) * basis[0] + np.sin(t) * basis[1] for t in mids]

    def incident_planes(self, x):
        """Planes through ``x`` carrying boundary arbitrarily close to ``x``.

        Returns a dict ``plane index -> (sign, direction, step)`` where ``sign``
        orients the plane normal outwards and ``direction`` is an in-plane unit
        vector along which boundary of that plane is found.
        """
        x = np.asarray(x, dtype=float)
        vals = self._plane_values(x)
        through = [i for i, v in enumerate(vals) if abs(v) <= self._tol]
        others = [i for i in range(len(self.planes)) if i not in through]
        far = float(np.min(np.abs(vals[others]))) if others else self.scale
        delta = min(0.25 * far, 1e-3 * max(self.scale, 1.0))
        found = {}
        for h in through:
            for v in self._in_plane_directions(x, h, through):
                y = x + delta * v
                s = self._side(y, h, self._probe_step(y, [h]))
                if s != 0:
                    found[h] = (s, v, delta)
                    break
        return found

    def _oriented(self, h, s):
        m, b = self.planes[h]
        return s * m + 0.0, s * b + 0.0

    # ---- face lattice --------------------------------------------------------

    def _enumerate(self):
        d = self.dim
        npl = len(self.planes)
        margin = 0.1 * max(self.scale, 1.0)
        lo, hi = self.lo - margin, self.hi + margin

        def in_box(x):
            return np.all(x >= lo) and np.all(x <= hi)

        # vertices
        vertex_faces = []
        vertex_points = []
        for idx in itertools.combinations(range(npl), d):
            M = np.array([self.planes[i][0] for i in idx])
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            x = np.linalg.solve(M, np.array([self.planes[i][1] for i in idx]))
            if not in_box(x) or any(np.linalg.norm(x - p) <= self._tol for p in vertex_points):
                continue
            inc = self.incident_planes(x)
            if len(inc) < d:
                continue
            normals = np.array([self.planes[h][0] for h in inc])
            if np.linalg.matrix_rank(normals, tol=1e-9) < d:
                continue
            vertex_points.append(x)
            vertex_faces.append(self._make_face(0, x, inc, "point", x.copy()))

        def is_vertex(x):
            return any(np.linalg.norm(x - p) <= 1e-7 * max(self.scale, 1.0) for p in vertex_points)

        edge_faces = []
        facet_faces = []
        if d == 2:
            for h in range(npl):
                facet_faces.extend(self._line_faces([h], is_vertex, lo, hi))
        else:
            done_lines = []
            for h, g in itertools.combinations(range(npl), 2):
                u = np.cross(self.planes[h][0], self.planes[g][0])
                if np.linalg.norm(u) < 1e-12:
                    continue
                M = np.array([self.planes[h][0], self.planes[g][0], u])
                p = np.linalg.solve(M, np.array([self.planes[h][1], self.planes[g][1], 0.0]))
                u = u / np.linalg.norm(u)
                key = (p, u)
                if any(np.linalg.norm(np.cross(q - p, w)) <= self._tol and abs(abs(w @ u) - 1) < 1e-12
                       for q, w in done_lines):
                    continue
                done_lines.append(key)
                edge_faces.extend(self._line_faces([h, g], is_vertex, lo, hi, line=(p, u)))
            for h in range(npl):
                facet_faces.extend(self._plane_faces(h))

        faces = facet_faces + edge_faces + vertex_faces
        faces.sort(key=lambda f: (-f.dim, tuple(np.round(f.sample_point, 10))))
        for i, f in enumerate(faces):
            f.id = i
        self._validate_faces(faces)
        return faces

    def _line_faces(self, planes_on, is_vertex, lo, hi, line=None):
        d = self.dim
        npl = len(self.planes)
        if line is None:
            m, b = self.planes[planes_on[0]]
            p = b * m
            u = np.array([-m[1], m[0]])
        else:
            p, u = line
        ts = []
        # clip against the padded box
        tmin, tmax = -np.inf, np.inf
        for k in range(d):
            if abs(u[k]) > 1e-14:
                t1, t2 = (lo[k] - p[k]) / u[k], (hi[k] - p[k]) / u[k]
                tmin, tmax = max(tmin, min(t1, t2)), min(tmax, max(t1, t2))
            elif not lo[k] <= p[k] <= hi[k]:
                return []
        if tmin >= tmax:
            return []
        ts = [tmin, tmax]
        for g in range(npl):
            if g in planes_on:
                continue
            mg, bg = self.planes[g]
            den = mg @ u
            if abs(den) > 1e-14:
                t = (bg - mg @ p) / den
                if tmin < t < tmax:
                    ts.append(t)
        ts = np.unique(np.round(np.array(ts), 13))
        pieces = []
        for t0, t1 in zip(ts[:-1], ts[1:]):
            if t1 - t0 <= self._tol:
                continue
            y = p + 0.5 * (t0 + t1) * u
            if line is None:
                h = planes_on[0]
                s = self._side(y, h, self._probe_step(y, [h]))
                key = ((h, s),) if s else None
            else:
                inc = self.incident_planes(y)
                key = tuple(sorted((h, v[0]) for h, v in inc.items())) if len(inc) == 2 else None
                if key is not None and set(h for h, _ in key) != set(planes_on):
                    key = None
            pieces.append((t0, t1, key))
        faces = []
        cur = None
        for t0, t1, key in pieces:
            if key is None:
                if cur:
                    faces.append(cur)
                cur = None
                continue
            if cur and cur[2] == key and abs(cur[1] - t0) <= self._tol and not is_vertex(p + t0 * u):
                cur = (cur[0], t1, key)
            else:
                if cur:
                    faces.append(cur)
                cur = (t0, t1, key)
        if cur:
            faces.append(cur)
        out = []
        for t0, t1, key in faces:
            a, b = p + t0 * u, p + t1 * u
            mid = 0.5 * (a + b)
            inc = {h: (s, None, None) for h, s in key}
            out.append(self._make_face(d - len(key), mid, inc, "segment", (a, b)))
        return out

    def _plane_faces(self, h):
        m, b = self.planes[h]
        basis = _plane_basis(m)
        origin = b * m
        center = basis @ (0.5 * (self.lo + self.hi) - origin)
        R = self.scale + 1.0
        frame = box(center[0] - R, center[1] - R, center[0] + R, center[1] + R)
        lines = [frame.exterior]
        for g, (mg, bg) in enumerate(self.planes):
            if g == h:
                continue
            a = mg @ basis.T
            if np.linalg.norm(a) < 1e-12:
                continue
            c = bg - mg @ origin  # a . (s, t) = c within the plane
            base = c * a / (a @ a)
            dirn = np.array([-a[1], a[0]]) / np.linalg.norm(a)
            L = 4 * R + np.linalg.norm(base - center)
            seg = LineString([base - L * dirn, base + L * dirn]).intersection(frame)
            if not seg.is_empty:
                lines.append(seg)
        cells = list(polygonize(unary_union(lines)))
        groups = {1: [], -1: []}
        for cell in cells:
            rp = np.array(cell.representative_point().coords[0])
            y = origin + rp @ basis
            s = self._side(y, h, self._probe_step(y, [h]))
            if s:
                groups[s].append(cell)
        out = []
        for s, group in groups.items():
            if not group:
                continue
            merged = unary_union(group)
            comps = merged.geoms if isinstance(merged, MultiPolygon) else [merged]
            for poly in comps:
                poly = poly.buffer(0)
                if poly.area <= self._tol:
                    raise DegenerateFaceError(f"facet on plane {h} has empty relative interior")
                rp = np.array(poly.representative_point().coords[0])
                x = origin + rp @ basis
                out.append(self._make_face(2, x, {h: (s, None, None)}, "polygon", (origin, basis, poly)))
        return out

    def _make_face(self, dim, x, inc, kind, geometry):
        hs = sorted(inc)
        normals, offsets = [], []
        for h in hs:
            mm, bb = self._oriented(h, inc[h][0])
            normals.append(mm)
            offsets.append(bb)
        face = Face(-1, dim, np.array(normals), np.array(offsets), None, np.asarray(x, float), kind,
                    geometry)
        if dim == self.dim - 1:
            face.orientation = Orientation.SMOOTH
        else:
            try:
                face.orientation = self._orientation_at(face)
            except AmbiguousOrientationError:
                face.orientation = None
        return face

    def _validate_faces(self, faces):
        d = self.dim
        for f in faces:
            k = d - f.dim
            if (f.dim == d - 1 and f.n_active != 1) or (k == 2 and f.n_active != 2) or f.n_active < k:
                raise DegenerateFaceError(f"face {f.id} of dim {f.dim} has {f.n_active} active normals")
            res = f.sample_point @ f.normals.T - f.offsets
            if np.any(np.abs(res) > 1e-10 * max(1.0, self.scale)):
                raise DegenerateFaceError(f"sample point of face {f.id} is off its planes")
            for g in faces:
                if g.dim < f.dim and g.contains(f.sample_point, self._tol):
                    raise DegenerateFaceError(f"sample point of face {f.id} lies on face {g.id}")

    # ---- orientation ---------------------------------------------------------

    def _orientation_at(self, face):
        x = face.sample_point
        inc = self.incident_planes(x)
        if not inc:
            raise AmbiguousOrientationError("no incident facets at face sample point")
        if face.n_active == 2:
            pts = []
            for h, (s, v, delta) in sorted(inc.items()):
                pts.append(x + min(ORIENTATION_OFFSET, delta) * v)
            mid = np.mean(pts, axis=0)
            r = mid @ face.normals.T - face.offsets
            if np.all(r <= 0):
                return Orientation.OUTWARDS
            if np.all(r > 0):
                return Orientation.INWARDS
            raise AmbiguousOrientationError(f"midpoint satisfies {int(np.sum(r <= 0))} of 2 constraints")
        # three or more facets: compare the local cone of the union with the
        # intersection and the union of the active half-spaces
        rho = min(ORIENTATION_OFFSET, min(v[2] for v in inc.values()))
        dirs = _sphere_directions(self.dim, 256)
        pts = x + rho * dirs
        inside = self.contains(pts)
        r = pts @ face.normals.T - face.offsets
        keep = np.all(np.abs(r) > 1e-6 * rho, axis=1)
        inter = np.all(r < 0, axis=1)
        union = np.any(r < 0, axis=1)
        if np.array_equal(inside[keep], inter[keep]):
            return Orientation.OUTWARDS
        if np.array_equal(inside[keep], union[keep]):
            return Orientation.INWARDS
        raise AmbiguousOrientationError("local cone is neither an intersection nor a union of half-spaces")

    # ---- misc ----------------------------------------------------------------

    def faces_of_dim(self, k):
        return [f for f in self.faces if f.dim == k]

    def face(self, fid):
        return self.faces[fid]

    def arrangement_cells(self):
        """Convex cells of the plane arrangement that lie inside the union."""
        cells = [list(self._box_halfspaces())]
        for m, b in self.planes:
            nxt = []
            for cell in cells:
                for sgn in (1.0, -1.0):
                    cand = cell + [HalfSpace(sgn * m, sgn * b)]
                    A = np.array([h.m for h in cand])
                    bb = np.array([h.b for h in cand])
                    t, _ = _chebyshev(A, bb)
                    if t is not None and t > 1e-7 * max(1.0, self.scale):
                        nxt.append(cand)
            cells = nxt
        out = []
        for cell in cells:
            P = intersect_halfspaces(cell)
            if self.contains(P.interior_point):
                out.append(P)
        return out

    def _box_halfspaces(self):
        d = self.dim
        pad = 0.05 * max(self.scale, 1.0)
        hs = []
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            hs.append(HalfSpace(e, self.hi[k] + pad))
            hs.append(HalfSpace(-e, -(self.lo[k] - pad)))
        return hs

    def volume(self):
        return float(sum(c.volume() for c in self.arrangement_cells()))

    def __repr__(self):
        counts = [len(self.faces_of_dim(k)) for k in range(self.dim)]
        return f"Polytope(d={self.dim}, pieces={len(self.pieces)}, faces by dim={counts})"


def _sphere_directions(d, n):
    if d == 2:
        t = (np.arange(n) + 0.5) * 2 * np.pi / n
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z * z)
    phi = np.pi * (1 + 5**0.5) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def enumerate_faces(P):
    """All faces of ``P`` in id order (dimension descending)."""
    return list(P.faces)


def classify_orientation(P, f):
    """Orientation of face ``f``; raises if the local test is inconclusive."""
    if f.dim == P.dim - 1:
        return Orientation.SMOOTH
    return P._orientation_at(f)


def facelike_classify(P, x):
    """Minimal-dimensional face of ``P`` containing the boundary point ``x``."""
    x = np.asarray(x, dtype=float)
    tol = EPS * max(1.0, P.scale)
    hits = [f for f in P.faces if f.contains(x, tol)]
    if not hits:
        raise NotOnBoundaryError(f"{x.tolist()} is not within {tol:g} of the boundary")
    k = min(f.dim for f in hits)
    best = [f for f in hits if f.dim == k]
    best.sort(key=lambda f: f.distance(x))
    return best[0]


# ---- registry domains ---------------------------------------------------------

def square():
    """``[-1, 1]^2``."""
    return Polytope([Polytope.box([-1, -1], [1, 1])])


def unit_cube():
    """``[-1, 1]^3``."""
    return Polytope([Polytope.box([-1, -1, -1], [1, 1, 1])])


def l_shape():
    """``[0,2]x[0,1]`` union ``[0,1]x[0,2]``."""
    return Polytope([Polytope.box([0, 0], [2, 1]), Polytope.box([0, 0], [1, 2])])


def prism():
    """Triangle ``(0,0),(1,0),(0,1)`` extruded over ``[0,1]``."""
    hs = [
        HalfSpace([-1, 0, 0], 0.0),
        HalfSpace([0, -1, 0], 0.0),
        HalfSpace([1, 1, 0], 1.0),
        HalfSpace([0, 0, -1], 0.0),
        HalfSpace([0, 0, 1], 1.0),
    ]
    return Polytope([intersect_halfspaces(hs)])


DOMAINS = {"square": square, "cube": unit_cube, "l_shape": l_shape, "prism": prism}
