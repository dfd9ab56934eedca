"""Simplicial meshes, P1 variations and simplex quadrature.

Regions are split into convex cells (pieces of a plane arrangement, possibly
cut by a sphere).  Sample points are generated once per geometric stratum
(corner points, edges/arcs, flat faces, the sphere, the interior) so that
neighbouring cells see identical points on their common facet; each cell is
then triangulated by Delaunay and the pieces are glued.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np
from scipy.spatial import Delaunay

from .errors import MeshFailureError, NonFiniteValueError
from .geometry import ConvexPolytope, Polytope, _plane_basis, facelike_classify
from .regions import FIXED, FREE, BoundaryRegion

MIN_CELL_VOLUME = 1e-14

# ---- quadrature -----------------------------------------------------------------


def _perms(*vals):
    return sorted(set(itertools.permutations(vals)))


def _rule(groups):
    pts, wts = [], []
    for w, bary in groups:
        for p in _perms(*bary):
            pts.append(p)
            wts.append(w)
    return np.array(pts, dtype=float), np.array(wts, dtype=float)


_a4, _b4 = 0.445948490915965, 0.091576213509771
QUADRATURE = {
    (2, 1): _rule([(1.0, (1 / 3, 1 / 3, 1 / 3))]),
    (2, 2): _rule([(1 / 3, (2 / 3, 1 / 6, 1 / 6))]),
    (2, 4): _rule([
        (0.223381589678011, (_a4, _a4, 1 - 2 * _a4)),
        (0.109951743655322, (_b4, _b4, 1 - 2 * _b4)),
    ]),
    (3, 1): _rule([(1.0, (0.25, 0.25, 0.25, 0.25))]),
    (3, 2): _rule([(0.25, (0.5854101966249685, 0.1381966011250105, 0.1381966011250105,
                           0.1381966011250105))]),
    (3, 4): _rule([
        (-0.0789333333333333, (0.25, 0.25, 0.25, 0.25)),
        (0.0457333333333333, (0.7857142857142857, 0.0714285714285714, 0.0714285714285714,
                              0.0714285714285714)),
        (0.1493333333333333, (0.3994035761667992, 0.3994035761667992, 0.1005964238332008,
                              0.1005964238332008)),
    ]),
}


def quadrature_rule(d, degree):
    """Barycentric points ``(nq, d+1)`` and weights summing to one."""
    try:
        return QUADRATURE[(d, degree)]
    except KeyError:
        raise ValueError(f"no quadrature of degree {degree} in dimension {d}") from None


# ---- mesh --------------------------------------------------------------------


class SimplicialMesh:
    """Conforming simplicial mesh with tagged boundary facets.

    Parameters
    ----------
    vertices : (nv, d) array
    cells : (nc, d+1) int array
        Reordered in place to positive orientation.
    facet_tags : callable or array, optional
        Either an array aligned with :attr:`boundary_facets` or a function
        ``(facet_vertex_coords) -> (tag, face_id)``.  Defaults to all FIXED.
    """

    def __init__(self, vertices, cells, facet_tags=None, facet_faces=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        cells = np.array(cells, dtype=np.int64)
        d = self.vertices.shape[1]
        if cells.ndim != 2 or cells.shape[1] != d + 1:
            raise MeshFailureError("cells must be (d+1)-tuples of vertex ids")
        T = self.vertices[cells[:, 1:]] - self.vertices[cells[:, :1]]
        det = np.linalg.det(T)
        flip = det < 0
        cells[flip, 0], cells[flip, 1] = cells[flip, 1].copy(), cells[flip, 0].copy()
        self.cells = cells
        self.volumes = np.abs(det) / factorial(d)
        if np.any(self.volumes <= MIN_CELL_VOLUME):
            raise MeshFailureError(f"{int(np.sum(self.volumes <= MIN_CELL_VOLUME))} cells with volume <= 1e-14")
        self.boundary_facets, self._facet_cell = self._find_boundary()
        nf = len(self.boundary_facets)
        if facet_tags is None:
            self.facet_tags = np.full(nf, FIXED, dtype=np.int8)
            self.facet_faces = np.full(nf, -1, dtype=np.int64)
        elif callable(facet_tags):
            tags, faces = [], []
            for f in self.boundary_facets:
                t, fid = facet_tags(self.vertices[f])
                tags.append(t)
                faces.append(fid)
            self.facet_tags = np.array(tags, dtype=np.int8)
            self.facet_faces = np.array(faces, dtype=np.int64)
        else:
            self.facet_tags = np.asarray(facet_tags, dtype=np.int8)
            self.facet_faces = (np.full(nf, -1, dtype=np.int64) if facet_faces is None
                                else np.asarray(facet_faces, dtype=np.int64))
        if len(self.facet_tags) != nf:
            raise MeshFailureError("facet tags do not cover the boundary")

    def _find_boundary(self):
        d = self.dim
        faces = {}
        for c, cell in enumerate(self.cells):
            for k in range(d + 1):
                # cyclic order keeps 2D boundary edges counter-clockwise
                f = tuple(cell[(k + 1 + j) % (d + 1)] for j in range(d))
                key = tuple(sorted(f))
                if key in faces:
                    faces[key] = None
                else:
                    faces[key] = (f, c)
        items = [v for v in faces.values() if v is not None]
        items.sort(key=lambda v: tuple(sorted(v[0])))
        facets = np.array([v[0] for v in items], dtype=np.int64).reshape(-1, d)
        owner = np.array([v[1] for v in items], dtype=np.int64)
        return facets, owner

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @cached_property
    def h(self):
        v = self.vertices[self.cells]
        return float(max(np.linalg.norm(v[:, i] - v[:, j], axis=1).max()
                         for i, j in itertools.combinations(range(self.dim + 1), 2)))

    @cached_property
    def basis_gradients(self):
        """``(nc, d+1, d)`` gradients of the barycentric coordinates."""
        v = self.vertices[self.cells]
        T = np.transpose(v[:, 1:] - v[:, :1], (0, 2, 1))
        Tinv = np.linalg.inv(T)
        G = np.empty((self.n_cells, self.dim + 1, self.dim))
        G[:, 1:] = Tinv
        G[:, 0] = -Tinv.sum(axis=1)
        return G

    @cached_property
    def fixed_mask(self):
        m = np.zeros(self.n_vertices, dtype=bool)
        m[self.boundary_facets[self.facet_tags == FIXED].ravel()] = True
        return m

    @cached_property
    def boundary_mask(self):
        m = np.zeros(self.n_vertices, dtype=bool)
        m[self.boundary_facets.ravel()] = True
        return m

    def volume(self):
        return float(np.sum(self.volumes))

    def facet_measures(self, idx=None):
        f = self.boundary_facets if idx is None else self.boundary_facets[idx]
        v = self.vertices[f]
        if self.dim == 2:
            return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def cell_points(self, bary):
        """Physical coordinates ``(nc, nq, d)`` of barycentric points."""
        return np.einsum("qa,cad->cqd", bary, self.vertices[self.cells])

    def transformed(self, M, c):
        """Image mesh under ``x -> M x + c`` (tags carried over)."""
        M = np.asarray(M, dtype=float)
        v = self.vertices @ M.T + np.asarray(c, dtype=float)
        out = SimplicialMesh(v, self.cells.copy(), self.facet_tags.copy(), self.facet_faces.copy())
        return out

    def with_tags(self, tag_fn):
        return SimplicialMesh(self.vertices, self.cells.copy(), tag_fn)

    def refine(self):
        """Uniform red refinement; the P1 space of the result contains this one."""
        d = self.dim
        verts = list(map(tuple, self.vertices))
        index = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in index:
                index[key] = len(verts)
                verts.append(tuple(0.5 * (self.vertices[a] + self.vertices[b])))
            return index[key]

        new = []
        for cell in self.cells:
            if d == 2:
                a, b, c = cell
                ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
                new += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
            else:
                a, b, c, e = cell
                ab, ac, ae, bc, be, ce = mid(a, b), mid(a, c), mid(a, e), mid(b, c), mid(b, e), mid(c, e)
                new += [(a, ab, ac, ae), (ab, b, bc, be), (ac, bc, c, ce), (ae, be, ce, e)]
                # octahedron split along the shortest diagonal
                V = self.vertices
                P = {k: 0.5 * (V[i] + V[j]) for k, (i, j) in
                     {"ab": (a, b), "ac": (a, c), "ae": (a, e), "bc": (b, c), "be": (b, e), "ce": (c, e)}.items()}
                diags = [("ab", "ce"), ("ac", "be"), ("ae", "bc")]
                lens = [np.linalg.norm(P[x] - P[y]) for x, y in diags]
                x, y = diags[int(np.argmin(lens))]
                ids = {"ab": ab, "ac": ac, "ae": ae, "bc": bc, "be": be, "ce": ce}
                ring = [k for k in ids if k not in (x, y)]
                # order the four ring vertices cyclically around the diagonal
                cen = 0.5 * (P[x] + P[y])
                axis = P[y] - P[x]
                axis /= np.linalg.norm(axis)
                u = P[ring[0]] - cen
                u -= (u @ axis) * axis
                u /= np.linalg.norm(u)
                w = np.cross(axis, u)
                ang = [np.arctan2((P[k] - cen) @ w, (P[k] - cen) @ u) for k in ring]
                ring = [ring[i] for i in np.argsort(ang)]
                for i in range(4):
                    new.append((ids[x], ids[y], ids[ring[i]], ids[ring[(i + 1) % 4]]))
        V = np.array(verts)
        mesh = SimplicialMesh(V, new)
        # each child boundary facet sits inside one parent boundary facet
        tg, fc = [], []
        cents = self.vertices[self.boundary_facets].mean(axis=1)
        for f in mesh.boundary_facets:
            coords = V[f]
            cen = coords.mean(axis=0)
            near = np.argsort(np.linalg.norm(cents - cen, axis=1))[:8]
            best, dist = None, np.inf
            for j in near:
                dd = _point_simplex_distance(cen, self.vertices[self.boundary_facets[j]])
                if dd < dist:
                    best, dist = j, dd
            tg.append(self.facet_tags[best])
            fc.append(self.facet_faces[best])
        return SimplicialMesh(V, mesh.cells, np.array(tg), np.array(fc))

    def dump_off(self, path):
        """Write an ASCII OFF-style file: header, vertices, then cells."""
        with open(path, "w") as fh:
            fh.write("OFF\n")
            fh.write(f"{self.n_vertices} {self.n_cells} 0\n")
            for v in self.vertices:
                fh.write(" ".join(f"{x:.17g}" for x in v) + "\n")
            for c in self.cells:
                fh.write(f"{len(c)} " + " ".join(str(i) for i in c) + "\n")

    def __repr__(self):
        return (f"SimplicialMesh(d={self.dim}, nv={self.n_vertices}, nc={self.n_cells}, "
                f"h={self.h:.3g}, free_facets={int(np.sum(self.facet_tags == FREE))})")


def _point_simplex_distance(x, P):
    """Distance from ``x`` to the affine hull of the facet ``P`` plus in-facet slack."""
    a = P[0]
    E = (P[1:] - a).T
    coef, *_ = np.linalg.lstsq(E, x - a, rcond=None)
    proj = a + E @ coef
    lam = np.append(1 - coef.sum(), coef)
    return np.linalg.norm(x - proj) + max(0.0, -lam.min())


# ---- mesh generation -----------------------------------------------------------


@dataclass
class _Cell:
    A: np.ndarray
    b: np.ndarray
    ball: tuple | None

    def contains(self, x, tol):
        ok = np.all(x @ self.A.T - self.b <= tol, axis=1) if len(self.b) else np.ones(len(x), bool)
        if self.ball is not None:
            c, r = self.ball
            ok &= np.linalg.norm(x - c, axis=1) <= r + tol
        return ok


def _unique_planes(planes, tol):
    out = []
    for m, b in planes:
        m = np.asarray(m, float)
        nz = np.flatnonzero(np.abs(m) > 1e-12)[0]
        if m[nz] < 0:
            m, b = -m, -b
        if not any(np.allclose(m, q[0], atol=1e-12) and abs(b - q[1]) <= tol for q in out):
            out.append((m, float(b)))
    return out


def _sample_strata(planes, sphere, lo, hi, s, rng, tol):
    """Deterministic sample points on every stratum of the arrangement."""
    d = lo.size
    pts = []
    # corner points
    corners = []
    for idx in itertools.combinations(range(len(planes)), d):
        M = np.array([planes[i][0] for i in idx])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        corners.append(np.linalg.solve(M, np.array([planes[i][1] for i in idx])))
    lines = []  # (point, unit direction)
    if d == 2:
        for m, b in planes:
            lines.append((b * m, np.array([-m[1], m[0]])))
    else:
        for (m1, b1), (m2, b2) in itertools.combinations(planes, 2):
            u = np.cross(m1, m2)
            if np.linalg.norm(u) < 1e-12:
                continue
            p = np.linalg.solve(np.array([m1, m2, u]), np.array([b1, b2, 0.0]))
            lines.append((p, u / np.linalg.norm(u)))
    circles = []  # (center, radius, orthonormal in-plane basis) in 3D
    if sphere is not None:
        c, r = sphere
        for p, u in lines:
            w = p - c
            bq = w @ u
            disc = bq * bq - (w @ w - r * r)
            if disc > tol:
                sq = np.sqrt(disc)
                corners += [p + (-bq - sq) * u, p + (-bq + sq) * u]
        if d == 3:
            for m, b in planes:
                dist = b - m @ c
                if abs(dist) < r - tol:
                    circles.append((c + dist * m, np.sqrt(r * r - dist * dist), _plane_basis(m)))
    uniq = []
    for x in corners:
        if np.all(x >= lo - tol) and np.all(x <= hi + tol) and not any(np.linalg.norm(x - y) <= tol for y in uniq):
            uniq.append(x)
    corners = uniq
    pts += corners
    C = np.array(corners) if corners else np.zeros((0, d))

    def subdivide(a, b):
        L = np.linalg.norm(b - a)
        n = max(1, int(np.ceil(L / s - 1e-9)))
        return [a + (b - a) * k / n for k in range(1, n)]

    # straight edges between consecutive corner points on each line
    for p, u in lines:
        if len(C) == 0:
            continue
        on = C[_line_dist(C, p, u) <= tol]
        if len(on) < 2:
            continue
        t = np.sort((on - p) @ u)
        for t0, t1 in zip(t[:-1], t[1:]):
            if t1 - t0 > tol:
                pts += subdivide(p + t0 * u, p + t1 * u)
    # arcs
    if sphere is not None:
        c, r = sphere
        if d == 2:
            circ = [(c, r, np.eye(2))]
        else:
            circ = circles
        for cc, rr, B in circ:
            on = C[np.abs(np.linalg.norm(C - cc, axis=1) - rr) <= tol] if len(C) else C
            if d == 3 and len(on):
                on = on[np.abs((on - cc) @ np.cross(B[0], B[1])) <= tol]
            ang = np.sort(np.arctan2((on - cc) @ B[1], (on - cc) @ B[0])) if len(on) else np.array([])
            if len(ang) == 0:
                n = max(3, int(np.ceil(2 * np.pi * rr / s)))
                th = 2 * np.pi * np.arange(n) / n
            else:
                th = []
                nxt = np.append(ang[1:], ang[0] + 2 * np.pi)
                for a0, a1 in zip(ang, nxt):
                    n = max(1, int(np.ceil((a1 - a0) * rr / s - 1e-9)))
                    th += [a0 + (a1 - a0) * k / n for k in range(1, n)]
                th = np.array(th)
            pts += list(cc + rr * (np.cos(th)[:, None] * B[0] + np.sin(th)[:, None] * B[1]))
    # flat faces (3D)
    if d == 3:
        R = 0.5 * np.linalg.norm(hi - lo) + s
        mid = 0.5 * (lo + hi)
        for h, (m, b) in enumerate(planes):
            B = _plane_basis(m)
            o = mid + (b - m @ mid) * m
            k = int(np.ceil(R / s))
            g = np.arange(-k, k + 1) * s
            uu, vv = np.meshgrid(g, g, indexing="ij")
            uv = np.stack([uu.ravel(), vv.ravel()], axis=1)
            uv = uv + rng.uniform(-0.15 * s, 0.15 * s, size=uv.shape)
            X = o + uv @ B
            keep = np.all(X >= lo - tol, axis=1) & np.all(X <= hi + tol, axis=1)
            for g_, (mg, bg) in enumerate(planes):
                if g_ == h:
                    continue
                sin = np.linalg.norm(mg - (mg @ m) * m)
                if sin < 1e-12:
                    continue
                keep &= np.abs(X @ mg - bg) / sin >= 0.5 * s
            if sphere is not None:
                c, r = sphere
                dist = b - m @ c
                rho2 = r * r - dist * dist
                if rho2 <= 0:
                    continue
                cp = c + dist * m
                keep &= np.linalg.norm(X - cp, axis=1) <= np.sqrt(rho2) - 0.5 * s
            pts += list(X[keep])
        if sphere is not None:
            c, r = sphere
            n = max(8, int(np.ceil(4 * np.pi * r * r / (0.866 * s * s))))
            i = np.arange(n) + 0.5
            z = 1 - 2 * i / n
            rr = np.sqrt(1 - z * z)
            phi = np.pi * (1 + 5**0.5) * i
            X = c + r * np.stack([rr * np.cos(phi), rr * np.sin(phi), z], axis=1)
            keep = np.ones(n, bool)
            for m, b in planes:
                keep &= np.abs(X @ m - b) >= 0.5 * s
            pts += list(X[keep])
    # interior
    k = np.ceil((hi - lo) / s).astype(int) + 1
    axes = [lo[j] + s * np.arange(k[j] + 1) for j in range(d)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    G = G + rng.uniform(-0.15 * s, 0.15 * s, size=G.shape)
    keep = np.all(G > lo, axis=1) & np.all(G < hi, axis=1)
    for m, b in planes:
        keep &= np.abs(G @ m - b) >= 0.5 * s
    if sphere is not None:
        c, r = sphere
        keep &= np.linalg.norm(G - c, axis=1) <= r - 0.5 * s
    pts += list(G[keep])
    return np.array(pts)


def _line_dist(C, p, u):
    w = C - p
    return np.linalg.norm(w - np.outer(w @ u, u), axis=1)


def _triangulate_cells(cells, planes, sphere, lo, hi, h, seed=20240611):
    d = lo.size
    s = 0.5 * h
    scale = float(np.linalg.norm(hi - lo))
    tol = 1e-9 * max(1.0, scale)
    rng = np.random.default_rng(seed)
    pts = _sample_strata(planes, sphere, lo, hi, s, rng, tol)
    in_any = np.zeros(len(pts), bool)
    members = []
    for cell in cells:
        m = cell.contains(pts, tol)
        members.append(np.flatnonzero(m))
        in_any |= m
    keep = np.flatnonzero(in_any)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    V = pts[keep]
    simplices = []
    for idx in members:
        if len(idx) < d + 1:
            raise MeshFailureError("cell received fewer than d+1 sample points; reduce h")
        P = pts[idx]
        tri = Delaunay(P, qhull_options="Qbb Qc Qz Q12" if d == 3 else "Qbb Qc Qz")
        if len(tri.coplanar):
            raise MeshFailureError("Delaunay dropped sample points (near-duplicate or coplanar)")
        S = tri.simplices
        E = P[S[:, 1:]] - P[S[:, :1]]
        vol = np.abs(np.linalg.det(E)) / factorial(d)
        S = S[vol > 1e-10 * s**d]
        simplices.append(remap[idx[S]])
    return V, np.vstack(simplices)


def _region_tagger(region, tol):
    def tag(coords):
        x = coords - region.center
        for i, n in enumerate(region.normals):
            if np.all(np.abs(x @ n) <= tol):
                return FREE, i
        if np.all(np.abs(np.linalg.norm(x, axis=1) - region.radius) <= tol):
            return FIXED, -1
        raise MeshFailureError("boundary facet off both the sphere and the flat part (non-conforming mesh)")

    return tag


def mesh_region(region, h, fixed_faces=None, free_faces=None):
    """Mesh a ball region, a polytope or a convex polytope.

    Parameters
    ----------
    region : BoundaryRegion | Polytope | ConvexPolytope
    h : float
        Target maximal cell diameter.  Sample spacing is ``h / 2``.
    fixed_faces, free_faces : iterable of int, optional
        For polytopes: ids of (d-1)-faces tagged FIXED (resp. FREE).  By
        default every facet is FIXED.

    Raises
    ------
    MeshFailureError
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if isinstance(region, ConvexPolytope):
        region = Polytope([region])
    if isinstance(region, BoundaryRegion):
        return _mesh_ball_region(region, h)
    if isinstance(region, Polytope):
        return _mesh_polytope(region, h, fixed_faces, free_faces)
    raise TypeError(f"cannot mesh {type(region).__name__}")


def _mesh_ball_region(region, h):
    d, c, r = region.dim, region.center, region.radius
    planes = [(n, float(n @ c)) for n in region.normals]
    cells = []
    for hs in region.cells():
        A = np.array([q.m for q in hs]).reshape(-1, d)
        b = A @ c
        cells.append(_Cell(A, b, (c, r)))
    lo, hi = c - r, c + r
    V, S = _triangulate_cells(cells, planes, (c, r), lo, hi, h)
    tol = 1e-9 * max(1.0, r)
    mesh = SimplicialMesh(V, S, _region_tagger(region, tol))
    mesh.region = region
    return mesh


def _mesh_polytope(P, h, fixed_faces=None, free_faces=None):
    cells = [_Cell(np.asarray(q.A), np.asarray(q.b), None) for q in P.arrangement_cells()]
    V, S = _triangulate_cells(cells, list(P.planes), None, P.lo, P.hi, h)
    d = P.dim
    free = set(free_faces or [])
    if fixed_faces is not None:
        fixed = set(fixed_faces)
        free |= {f.id for f in P.faces_of_dim(d - 1) if f.id not in fixed}
    def tag(coords):
        f = facelike_classify(P, coords.mean(axis=0))
        if f.dim != d - 1 or not all(f.contains(x, 1e-8 * max(1.0, P.scale)) for x in coords):
            raise MeshFailureError("boundary facet is not inside a single polytope facet")
        return (FREE if f.id in free else FIXED), f.id

    mesh = SimplicialMesh(V, S, tag)
    vol = P.volume()
    if abs(mesh.volume() - vol) > 1e-10 * max(1.0, vol):
        raise MeshFailureError(f"mesh volume {mesh.volume():.15g} differs from polytope volume {vol:.15g}")
    mesh.region = P
    return mesh


# ---- P1 variations ----------------------------------------------------------------


class DiscreteVariation:
    """Continuous piecewise-linear map ``mesh -> R^N``, zero on FIXED vertices.

    Parameters
    ----------
    mesh : SimplicialMesh
    values : (nv, N) array
        Nodal values; a nonzero value on a FIXED vertex is rejected.
    """

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != mesh.n_vertices:
            raise ValueError("one row of values per mesh vertex expected")
        if np.any(values[mesh.fixed_mask] != 0.0):
            raise ValueError("variation must vanish at FIXED vertices")
        self.mesh = mesh
        self.values = values

    @property
    def N(self):
        return self.values.shape[1]

    @classmethod
    def zero(cls, mesh, N):
        return cls(mesh, np.zeros((mesh.n_vertices, N)))

    @classmethod
    def from_function(cls, mesh, fn, N):
        """Interpolate ``fn`` at free vertices (FIXED vertices are set to 0)."""
        vals = np.asarray(fn(mesh.vertices), dtype=float).reshape(mesh.n_vertices, N)
        vals = vals.copy()
        vals[mesh.fixed_mask] = 0.0
        return cls(mesh, vals)

    @classmethod
    def from_dofs(cls, mesh, dofs, N):
        vals = np.zeros((mesh.n_vertices, N))
        vals[~mesh.fixed_mask] = np.asarray(dofs, dtype=float).reshape(-1, N)
        return cls(mesh, vals)

    @classmethod
    def random(cls, mesh, N, rng, amplitude=1.0):
        vals = amplitude * rng.standard_normal((mesh.n_vertices, N))
        vals[mesh.fixed_mask] = 0.0
        return cls(mesh, vals)

    def dofs(self):
        return self.values[~self.mesh.fixed_mask].ravel().copy()

    def grad(self):
        """Cellwise constant gradients ``(nc, N, d)``."""
        return np.einsum("cak,cad->ckd", self.values[self.mesh.cells], self.mesh.basis_gradients)

    def at(self, bary):
        """Values ``(nc, nq, N)`` at barycentric points of every cell."""
        return np.einsum("qa,cak->cqk", bary, self.values[self.mesh.cells])

    def sup_norm(self):
        return float(np.max(np.linalg.norm(self.values, axis=1))) if len(self.values) else 0.0

    def scaled(self, t):
        return DiscreteVariation(self.mesh, t * self.values)


@dataclass
class EmbeddedVariation:
    """Variation supported on a scaled copy of ``D`` inside a test region."""

    psi: DiscreteVariation
    region: BoundaryRegion
    eps: float
    d0: np.ndarray

    @property
    def mesh(self):
        return self.psi.mesh

    def evaluate(self, x):
        """Point values; zero outside the support."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((len(x), self.psi.N))
        mesh = self.mesh
        v = mesh.vertices[mesh.cells]
        T = np.transpose(v[:, 1:] - v[:, :1], (0, 2, 1))
        for i, p in enumerate(x):
            lam = np.linalg.solve(T, (p - v[:, 0])[..., None])[..., 0]
            lam = np.concatenate([1 - lam.sum(axis=1, keepdims=True), lam], axis=1)
            hit = np.flatnonzero(np.all(lam >= -1e-12, axis=1))
            if hit.size:
                c = hit[0]
                out[i] = lam[c] @ self.psi.values[mesh.cells[c]]
        return out


# ---- energies ----------------------------------------------------------------------


def integrate_energy(mesh, phi, integrand, extremal=None, degree=2, frozen=None):
    """``int F(x, u0 + phi, grad u0 + grad phi) dx`` by simplex quadrature.

    Parameters
    ----------
    mesh : SimplicialMesh
    phi : DiscreteVariation or None
        ``None`` means the zero variation.
    integrand : Integrand
    extremal : Extremal, optional
        Defaults to ``u0 = 0``.
    degree : {1, 2, 4}
    frozen : tuple ``(x0, y0, A)``, optional
        Evaluate ``F(x0, y0, A + grad phi)`` instead (coefficients frozen at
        a point); the value of ``phi`` itself is then ignored.

    Raises
    ------
    NonFiniteValueError
    """
    d = mesh.dim
    if phi is not None:
        N = phi.N
    elif frozen is not None:
        N = np.atleast_2d(frozen[2]).shape[0]
    elif extremal is not None:
        N = extremal.N
    else:
        N = integrand.N or 1
    bary, w = quadrature_rule(d, degree)
    nc, nq = mesh.n_cells, len(w)
    gphi = np.zeros((nc, N, d)) if phi is None else phi.grad()
    if frozen is not None:
        x0, y0, A = frozen
        z = np.asarray(A, float)[None] + gphi
        x = np.broadcast_to(np.asarray(x0, float), (nc, d))
        y = np.broadcast_to(np.asarray(y0, float), (nc, N))
        vals = integrand.F(x, y, z)
        total = vals * mesh.volumes
    else:
        X = mesh.cell_points(bary).reshape(-1, d)
        y = np.zeros((nc * nq, N)) if phi is None else phi.at(bary).reshape(-1, N)
        z = np.repeat(gphi, nq, axis=0)
        if extremal is not None:
            y = y + extremal.u0(X)
            z = z + extremal.grad(X)
        vals = integrand.F(X, y, z).reshape(nc, nq)
        total = (vals @ w) * mesh.volumes
    if not np.all(np.isfinite(total)):
        raise NonFiniteValueError("integrand returned NaN or inf")
    return float(np.sum(total))


def boundary_jacobian_integral(mesh, phi):
    """``int det grad phi`` for ``N = d = 2`` as the boundary line integral of
    ``phi_1 d phi_2`` (exact for P1 maps)."""
    if mesh.dim != 2 or phi.N != 2:
        raise ValueError("defined for d = N = 2")
    f = mesh.boundary_facets
    a, b = phi.values[f[:, 0]], phi.values[f[:, 1]]
    return float(np.sum(0.5 * (a[:, 0] + b[:, 0]) * (b[:, 1] - a[:, 1])))


def dump_mesh(mesh, path):
    mesh.dump_off(path)
