"""Boundary test regions and standard boundary regions.

The test domain attached to a boundary point with normals ``n_1..n_l`` is the
unit ball cut by the half-spaces ``x . n_i < 0``: their intersection for
outwards (and smooth) points, their union for inwards points.  Variations
vanish on the curved part of its boundary and are free on the flat part.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import linprog

from .charts import NormalSet
from .errors import EmptyRegionError, EpsTooLargeError, GeometryError
from .geometry import EPS, HalfSpace, Orientation, Polytope, intersect_halfspaces

FIXED = 0
FREE = 1


@dataclass(frozen=True, eq=False)
class BoundaryRegion:
    """``B(center, radius)`` cut by the half-spaces ``(x - center) . n_i < 0``.

    With no normals this is the plain ball used for interior checks; every
    boundary point is then FIXED.
    """

    normals: np.ndarray
    orientation: Orientation
    dim: int
    center: np.ndarray = field(default=None)
    radius: float = 1.0

    def __post_init__(self):
        n = np.asarray(self.normals, dtype=float).reshape(-1, self.dim)
        object.__setattr__(self, "normals", n)
        c = np.zeros(self.dim) if self.center is None else np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", c)

    @property
    def count(self):
        return len(self.normals)

    @property
    def is_union(self):
        return self.orientation == Orientation.INWARDS and self.count > 1

    @property
    def kind(self):
        return "HalfSpaceCut" if self.count else "Ball"

    def contains(self, x, tol=0.0):
        """Open-set membership (closure when ``tol > 0``)."""
        x = np.atleast_2d(np.asarray(x, dtype=float)) - self.center
        ok = np.linalg.norm(x, axis=1) < self.radius + tol
        if self.count:
            s = x @ self.normals.T < tol
            ok &= s.any(axis=1) if self.is_union else s.all(axis=1)
        return ok

    def is_free(self, x, tol=1e-9):
        """Whether boundary point ``x`` lies on the flat part."""
        x = np.asarray(x, dtype=float) - self.center
        if not self.count:
            return False
        return bool(np.any(np.abs(x @ self.normals.T) <= tol)) and np.linalg.norm(x) <= self.radius + tol

    def is_fixed(self, x, tol=1e-9):
        """Whether boundary point ``x`` lies on the curved part (closure)."""
        x = np.asarray(x, dtype=float) - self.center
        return abs(np.linalg.norm(x) - self.radius) <= tol

    def cells(self):
        """Convex pieces (half-space lists through the center) tiling the region."""
        d = self.dim
        if not self.count:
            return [[]]
        if not self.is_union:
            return [[HalfSpace(n, 0.0) for n in self.normals]]
        out = []
        for signs in itertools.product((1.0, -1.0), repeat=self.count):
            if all(s < 0 for s in signs):
                continue  # the complement of the union
            hs = [HalfSpace(s * n, 0.0) for s, n in zip(signs, self.normals)]
            if _cone_has_interior(np.array([h.m for h in hs]), d):
                out.append(hs)
        return out

    def measure(self):
        """Exact area (d=2) or volume via one-dimensional quadrature (d=3)."""
        r = self.radius
        if self.dim == 2:
            return 0.5 * r * r * _angular_measure_2d(self.normals, self.is_union)
        return r**3 / 3.0 * _solid_angle_3d(self.normals, self.is_union)

    def ball_measure(self):
        return np.pi * self.radius**2 if self.dim == 2 else 4.0 / 3.0 * np.pi * self.radius**3

    def sample_boundary(self, n, seed=0):
        """Points on the region boundary with their FIXED/FREE tag."""
        rng = np.random.default_rng(seed)
        pts, tags = [], []
        while len(pts) < n:
            if self.count and rng.random() < 0.5:
                i = rng.integers(self.count)
                v = rng.normal(size=self.dim)
                v -= (v @ self.normals[i]) * self.normals[i]
                v *= self.radius * rng.random() ** (1.0 / (self.dim - 1)) / np.linalg.norm(v)
                x = self.center + v
            else:
                v = rng.normal(size=self.dim)
                x = self.center + self.radius * v / np.linalg.norm(v)
            if not self._on_boundary(x):
                continue
            pts.append(x)
            tags.append(FREE if self.is_free(x) else FIXED if self.is_fixed(x) else -1)
        return np.array(pts), np.array(tags)

    def _on_boundary(self, x, h=1e-7):
        dirs = np.vstack([np.eye(self.dim), -np.eye(self.dim)])
        inside = self.contains(x + h * dirs)
        return inside.any() and not inside.all()


def _cone_has_interior(M, d):
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A = np.hstack([M, np.ones((len(M), 1))])
    res = linprog(c, A_ub=A, b_ub=np.zeros(len(M)), bounds=[(-1, 1)] * d + [(None, 1.0)],
                  method="highs")
    return res.status == 0 and res.x[-1] > EPS


def _arcs_good(angles_mid, normals, union):
    u = np.stack([np.cos(angles_mid), np.sin(angles_mid)], axis=-1)
    s = u @ normals.T < 0
    return s.any(axis=-1) if union else s.all(axis=-1)


def _angular_measure_2d(normals, union):
    if not len(normals):
        return 2 * np.pi
    br = [0.0, 2 * np.pi]
    for n in normals:
        a = np.arctan2(n[1], n[0])
        br += [(a + np.pi / 2) % (2 * np.pi), (a - np.pi / 2) % (2 * np.pi)]
    br = np.unique(br)
    mids = 0.5 * (br[:-1] + br[1:])
    good = _arcs_good(mids, normals, union)
    return float(np.sum(np.diff(br)[good]))


def _solid_angle_3d(normals, union):
    if not len(normals):
        return 4 * np.pi

    def polar_measure(phi):
        cp, sp = np.cos(phi), np.sin(phi)
        br = [0.0, np.pi]
        for n in normals:
            a = n[0] * cp + n[1] * sp
            c = n[2]
            # sin(t) a + cos(t) c = 0 on [0, pi]
            t = np.arctan2(-c, a) % np.pi
            br.append(t)
        br = np.unique(br)
        mids = 0.5 * (br[:-1] + br[1:])
        u = np.stack([np.sin(mids) * cp, np.sin(mids) * sp, np.cos(mids)], axis=-1)
        s = u @ normals.T < 0
        good = s.any(axis=-1) if union else s.all(axis=-1)
        return float(np.sum((np.cos(br[:-1]) - np.cos(br[1:]))[good]))

    # the integrand has kinks where some n_i is vertical in the (phi) plane
    pts = set()
    for n in normals:
        if np.hypot(n[0], n[1]) > 1e-14:
            a = np.arctan2(n[1], n[0])
            pts.update({(a + np.pi / 2) % (2 * np.pi), (a - np.pi / 2) % (2 * np.pi)})
    val, _ = quad(polar_measure, 0.0, 2 * np.pi, points=sorted(pts) or None, limit=400,
                  epsabs=1e-13, epsrel=1e-12)
    return float(val)


def build_Bdk(ns):
    """Test region for a normal set.

    Parameters
    ----------
    ns : NormalSet

    Raises
    ------
    EmptyRegionError
        If the outwards cone has empty interior.
    """
    n = np.atleast_2d(ns.normals)
    d = n.shape[1]
    union = ns.orientation == Orientation.INWARDS
    if not union and n.shape[0] > d:
        raise GeometryError("at most d normals are supported for outwards regions")
    if union and n.shape[0] > 3:
        raise GeometryError("at most 3 normals are supported for inwards regions")
    for i, j in itertools.combinations(range(len(n)), 2):
        if np.linalg.norm(np.cross(n[i], n[j]) if d == 3 else n[i][0] * n[j][1] - n[i][1] * n[j][0]) < 1e-9:
            raise GeometryError("normals must be pairwise non-parallel")
    if not union and not _cone_has_interior(n, d):
        raise EmptyRegionError("normal half-spaces have empty intersection")
    orient = ns.orientation if len(n) > 1 else Orientation.SMOOTH
    return BoundaryRegion(n, orient, d)


def unit_ball(d, center=None, radius=1.0):
    """Ball used for interior quasiconvexity checks (all boundary FIXED)."""
    return BoundaryRegion(np.zeros((0, d)), Orientation.SMOOTH, d, center, radius)


# ---- standard regions --------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    """Closed ball ``B(center, radius)`` usable as a standard-region domain."""

    center: tuple
    radius: float

    @property
    def dim(self):
        return len(self.center)


@dataclass(eq=False)
class StandardRegion:
    """Domain ``D`` with normals, anchor ``a`` and orientation.

    ``domain`` is a :class:`~varqc.geometry.Polytope`, a :class:`Ball` or a
    :class:`BoundaryRegion`.  The half-space offsets are ``a_i = a . n_i``.
    """

    domain: object
    normals: np.ndarray
    anchor: np.ndarray
    orientation: Orientation
    k: int | None = None

    def __post_init__(self):
        self.normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        self.normals = self.normals / np.linalg.norm(self.normals, axis=1, keepdims=True)
        self.anchor = np.asarray(self.anchor, dtype=float)
        self.orientation = Orientation(self.orientation)
        if self.k is None:
            self.k = min(len(self.normals), self.dim)

    @property
    def dim(self):
        return self.normals.shape[1]

    @property
    def offsets(self):
        return self.normals @ self.anchor

    @property
    def is_union(self):
        return self.orientation == Orientation.INWARDS and len(self.normals) > 1

    def in_K(self, x, tol=0.0):
        s = np.atleast_2d(x) @ self.normals.T - self.offsets < tol
        return s.any(axis=1) if self.is_union else s.all(axis=1)

    def target_region(self):
        orient = self.orientation if len(self.normals) > 1 else Orientation.SMOOTH
        return BoundaryRegion(self.normals, orient, self.dim)


@dataclass
class ValidationReport:
    """Named pass/fail checks with witnesses."""

    checks: dict = field(default_factory=dict)
    detail: dict = field(default_factory=dict)

    def add(self, name, passed, witness=None, detail=""):
        self.checks[name] = {"passed": bool(passed), "witness": witness, "detail": detail}

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks.values())

    def failures(self):
        return {k: v for k, v in self.checks.items() if not v["passed"]}

    def __bool__(self):
        return self.passed


def _polytope_cells(P):
    return P.arrangement_cells() if len(P.pieces) > 1 else list(P.pieces)


def _contained_in_K(sr, tol=1e-9):
    D = sr.domain
    a = sr.offsets
    if isinstance(D, Polytope):
        for cell in _polytope_cells(D):
            if sr.is_union:
                # cell minus the union of half-spaces must have empty interior
                A = np.vstack([cell.A, -sr.normals])
                b = np.concatenate([cell.b, -a])
                c = np.zeros(sr.dim + 1)
                c[-1] = -1.0
                res = linprog(c, A_ub=np.hstack([A, np.ones((len(A), 1))]), b_ub=b,
                              bounds=[(None, None)] * sr.dim + [(None, 1.0)], method="highs")
                if res.status == 0 and res.x[-1] > tol:
                    return False, res.x[:-1]
            else:
                r = cell.vertices @ sr.normals.T - a
                bad = np.flatnonzero(np.any(r > tol, axis=1))
                if bad.size:
                    return False, cell.vertices[bad[0]]
        return True, None
    center, radius, region = _ball_like(D)
    if region is None:
        if sr.is_union:
            ok = np.any(center @ sr.normals.T + radius <= a + tol)
            return bool(ok), None if ok else center
        r = center @ sr.normals.T + radius - a
        return bool(np.all(r <= tol)), None if np.all(r <= tol) else center
    # cut ball: sample its closure densely on the boundary
    pts, _ = region.sample_boundary(4000, seed=1)
    bad = ~sr.in_K(pts, tol=tol * 10) & ~_on_planes(sr, pts, 1e-7)
    return (not bad.any()), (pts[np.flatnonzero(bad)[0]] if bad.any() else None)


def _on_planes(sr, pts, tol):
    return np.any(np.abs(pts @ sr.normals.T - sr.offsets) <= tol, axis=1)


def _ball_like(D):
    if isinstance(D, Ball):
        return np.asarray(D.center, float), float(D.radius), None
    if isinstance(D, BoundaryRegion):
        if D.count == 0:
            return D.center, D.radius, None
        return D.center, D.radius, D
    raise TypeError(f"unsupported standard-region domain {type(D).__name__}")


def flat_contacts(sr, tol=1e-9):
    """Per normal: ``(contact dimension, witness point)`` of ``dD`` on its plane."""
    D = sr.domain
    out = []
    for n, a in zip(sr.normals, sr.offsets):
        best = (-1, None)
        if isinstance(D, Polytope):
            for f in D.faces:
                pts = f.convex_parts()
                if all(np.all(np.abs(V @ n - a) <= tol * max(1, D.scale)) for V in pts):
                    if f.dim > best[0]:
                        best = (f.dim, f.sample_point.copy())
        else:
            center, radius, region = _ball_like(D)
            if region is None:
                dist = a - center @ n
                if abs(dist - radius) <= tol:
                    best = (0, center + radius * n)
            else:
                # a cut ball touches the plane through its own flat part
                for m in region.normals:
                    if np.linalg.norm(m - n) <= 1e-9 and abs(region.center @ n - a) <= tol:
                        w = _flat_witness(region, m)
                        if w is not None:
                            best = (sr.dim - 1, w)
                if best[0] < 0:
                    dist = a - center @ n
                    if abs(dist - radius) <= tol:
                        best = (0, center + radius * n)
        out.append(best)
    return out


def _flat_witness(region, m):
    """A point in the relative interior of the flat part on ``x . m = 0``."""
    d = region.dim
    rng = np.random.default_rng(0)
    for _ in range(2000):
        v = rng.normal(size=d)
        v -= (v @ m) * m
        v *= 0.5 * region.radius / np.linalg.norm(v)
        x = region.center + v
        h = 1e-6
        if region.contains(x - h * m)[0] and not region.contains(x + h * m)[0]:
            return x
    return None


def validate_standard_region(sr):
    """Check containment in ``K^a`` and a flat contact on every plane."""
    rep = ValidationReport()
    ok, wit = _contained_in_K(sr)
    rep.add("containment", ok, None if wit is None else np.asarray(wit).tolist(),
            "D inside K^a" if ok else "point of D outside K^a")
    need = sr.dim - sr.k
    for i, (cdim, w) in enumerate(flat_contacts(sr)):
        passed = cdim >= need and cdim >= 0
        rep.add(f"flat_contact_{i}", passed, None if w is None else np.asarray(w).tolist(),
                f"contact dimension {cdim}, need >= {need}")
    return rep


def default_anchor_point(sr):
    """Relative-interior point of the common face ``dD`` shares with all planes."""
    D = sr.domain
    d = sr.dim
    a = sr.offsets
    if isinstance(D, Polytope):
        best = (-np.inf, None)
        for cell in D.pieces:
            # constraints lying on one of the planes stay tight; the rest get slack t
            slack = np.ones(len(cell.b))
            for j, (m, b) in enumerate(zip(cell.A, cell.b)):
                for n, ai in zip(sr.normals, a):
                    if np.allclose(m, n, atol=1e-12) and abs(b - ai) <= 1e-9:
                        slack[j] = 0.0
            c = np.zeros(d + 1)
            c[-1] = -1.0
            res = linprog(c, A_ub=np.hstack([cell.A, slack[:, None]]), b_ub=cell.b,
                          A_eq=np.hstack([sr.normals, np.zeros((len(a), 1))]), b_eq=a,
                          bounds=[(None, None)] * d + [(None, 1.0)], method="highs")
            if res.status == 0 and res.x[-1] > best[0]:
                best = (res.x[-1], res.x[:-1])
        if best[1] is None or best[0] < -EPS:
            raise GeometryError("domain does not touch the common face of the planes")
        return best[1]
    center, radius, region = _ball_like(D)
    if region is not None:
        return region.center.copy()
    raise GeometryError("a ball has no flat face to anchor at")


def rescale_embed(sr, phi, eps, d0=None):
    """Embed ``phi`` on ``D`` into the test region by ``eps * phi(d0 + x / eps)``.

    Parameters
    ----------
    sr : StandardRegion
    phi : DiscreteVariation
        Defined on a mesh of ``sr.domain``.
    eps : float
    d0 : array_like, optional
        Anchor on the common face; defaults to :func:`default_anchor_point`.

    Returns
    -------
    EmbeddedVariation
        Supported on ``eps (D - d0)``, zero on the rest of the region.

    Raises
    ------
    EpsTooLargeError
        If the scaled domain leaves the unit ball.
    """
    from .mesh import DiscreteVariation, EmbeddedVariation

    eps = float(eps)
    if not eps > 0:
        raise ValueError("eps must be positive")
    d0 = default_anchor_point(sr) if d0 is None else np.asarray(d0, dtype=float)
    if np.any(np.abs(sr.normals @ d0 - sr.offsets) > 1e-9):
        raise GeometryError("d0 does not lie on every plane x . n_i = a_i")
    mesh = phi.mesh.transformed(eps * np.eye(sr.dim), -eps * d0)
    r = np.linalg.norm(mesh.vertices, axis=1).max()
    if r >= 1.0:
        raise EpsTooLargeError(f"eps (D - d0) reaches radius {r:.4g} >= 1")
    psi = DiscreteVariation(mesh, eps * phi.values)
    return EmbeddedVariation(psi, sr.target_region(), eps, d0)
