"""Axis-aligned cube covers of a polytope adapted to its face lattice.

A cube ``Q(x, r) = {y : |y - x|_inf <= r}``.  A cover is valid when, for
every cube and every ``s`` in ``[r, 2r]``, the faces of minimal dimension
met by ``Q(x, s)`` are at most one, the open cubes are pairwise disjoint,
and their closures cover the domain.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog
from scipy.stats import qmc

from .errors import CannotSeparateError
from .regions import ValidationReport

# split factors tried for a grid cube before giving up
SPLIT_FACTORS = (1, 2, 3, 4, 5, 6, 7, 8, 16, 32, 64, 128, 256)
_TOL = 1e-12


@dataclass(frozen=True)
class Cube:
    """Closed cube with rational center and radius.

    ``face_id`` is the minimal face met by ``Q(center, radius)``, ``None``
    for an interior cube.
    """

    center: tuple
    radius: Fraction
    face_id: int | None = None
    k: int = 1

    @property
    def x(self):
        return np.array([float(c) for c in self.center])

    @property
    def r(self):
        return float(self.radius)

    def to_dict(self):
        return {
            "center": [str(c) for c in self.center],
            "radius": str(self.radius),
            "face_id": self.face_id,
        }


@dataclass
class CubeCover:
    cubes: list
    base_radius: Fraction
    dim: int
    detail: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps([c.to_dict() for c in self.cubes], indent=1)

    @classmethod
    def from_json(cls, text, base_radius, dim):
        items = json.loads(text)
        cubes = [Cube(tuple(Fraction(c) for c in it["center"]), Fraction(it["radius"]), it["face_id"])
                 for it in items]
        return cls(cubes, Fraction(base_radius), dim)


# ---- distances ----------------------------------------------------------------


def _segment_inf_distance(x, a, b):
    """Exact ``min_t |x - a - t (b - a)|_inf`` over ``t`` in ``[0, 1]``."""
    u = b - a
    w = x - a
    cand = {0.0, 1.0}
    d = x.size
    for k in range(d):
        if u[k] != 0:
            cand.add(w[k] / u[k])
        for l in range(k + 1, d):
            for s in (1.0, -1.0):
                den = u[k] - s * u[l]
                if den != 0:
                    cand.add((w[k] - s * w[l]) / den)
    ts = np.clip(np.array(sorted(cand)), 0.0, 1.0)
    vals = np.max(np.abs(w[None, :] - ts[:, None] * u[None, :]), axis=1)
    return float(vals.min())


def face_inf_distance(face, x):
    """Max-norm distance from ``x`` to a face."""
    if face.kind == "point":
        return float(np.max(np.abs(x - face.geometry)))
    if face.kind == "segment":
        a, b = face.geometry
        return _segment_inf_distance(x, np.asarray(a, float), np.asarray(b, float))
    return face.inf_distance(x)


def _distances(P, x, reach):
    """``{face id: inf distance}`` for faces within max-norm ``reach`` of ``x``."""
    out = {}
    d = P.dim
    for f in P.faces:
        # Euclidean distance brackets the max-norm one
        e = f.distance(x)
        if e / math.sqrt(d) > reach + _TOL:
            continue
        di = face_inf_distance(f, x)
        if di <= reach + _TOL:
            out[f.id] = di
    return out


def classify_cube(P, x, r):
    """Check one cube over ``s`` in ``[r, 2r]``.

    Returns
    -------
    ok : bool
    face_id : int or None
        Minimal face met by ``Q(x, r)`` (``None`` if none).
    witness : dict or None
        ``{"s": s, "faces": [...]}`` for the first offending radius.
    """
    dist = _distances(P, x, 2 * r)
    # the set of faces met only changes at these radii
    radii = sorted({r} | {v for v in dist.values() if r < v <= 2 * r + _TOL})
    face_at_r = None
    for s in radii:
        met = [fid for fid, v in dist.items() if v <= s + _TOL]
        if not met:
            continue
        k = min(P.face(fid).dim for fid in met)
        lowest = sorted(fid for fid in met if P.face(fid).dim == k)
        if len(lowest) > 1:
            return False, None, {"s": s, "faces": lowest}
        if s == r:
            face_at_r = lowest[0]
    return True, face_at_r, None


def _open_cube_meets_interior(P, x, r):
    """True when the open cube meets the interior of ``P`` (an LP per piece)."""
    d = P.dim
    for piece in P.pieces:
        A = np.vstack([piece.A, np.eye(d), -np.eye(d)])
        b = np.concatenate([piece.b, x + r, -(x - r)])
        # maximise the slack t of A y + t <= b
        c = np.zeros(d + 1)
        c[-1] = -1.0
        Aub = np.hstack([A, np.ones((len(A), 1))])
        res = linprog(c, A_ub=Aub, b_ub=b, bounds=[(None, None)] * d + [(None, 1.0)], method="highs")
        if res.status == 0 and -res.fun > 1e-12 * max(1.0, r):
            return True
    return False


# ---- construction -------------------------------------------------------------


def base_radius(P, R):
    """Largest dyadic ``r~ < R`` with ``2 r~`` below the vertex separation."""
    verts = np.array([f.geometry for f in P.faces_of_dim(0)])
    sep = np.inf
    for i, j in itertools.combinations(range(len(verts)), 2):
        sep = min(sep, float(np.max(np.abs(verts[i] - verts[j]))))
    bound = min(float(R), sep / 2)
    if not bound > 0:
        raise CannotSeparateError("no admissible base radius")
    j = math.floor(math.log2(bound))
    rt = Fraction(2) ** j
    while rt >= Fraction(bound):
        rt /= 2
    return rt


def build_cover(P, R):
    """Cube cover of ``P`` with radii ``r~ / (2k)``.

    A grid of radius ``r~/2`` aligned to multiples of ``r~`` is laid over
    the bounding box; cubes that miss the interior are dropped and each
    invalid cube is split into ``k^d`` cubes for the smallest ``k`` in
    :data:`SPLIT_FACTORS` that makes all its children valid.

    Raises
    ------
    CannotSeparateError
    """
    if not R > 0:
        raise ValueError("R must be positive")
    d = P.dim
    rt = base_radius(P, R)
    lo = [math.floor(Fraction(float(v)) / rt) for v in P.lo]
    hi = [math.ceil(Fraction(float(v)) / rt) for v in P.hi]
    cubes = []
    splits = 0
    for idx in itertools.product(*[range(a, b) for a, b in zip(lo, hi)]):
        corner = [i * rt for i in idx]
        center = tuple(c + rt / 2 for c in corner)
        x = np.array([float(c) for c in center])
        if not _open_cube_meets_interior(P, x, float(rt / 2)):
            continue
        for k in SPLIT_FACTORS:
            r = rt / (2 * k)
            children = []
            good = True
            for sub in itertools.product(range(k), repeat=d):
                cc = tuple(corner[i] + (2 * sub[i] + 1) * r for i in range(d))
                xc = np.array([float(c) for c in cc])
                if k > 1 and not _open_cube_meets_interior(P, xc, float(r)):
                    continue
                ok, fid, _ = classify_cube(P, xc, float(r))
                if not ok:
                    good = False
                    break
                children.append(Cube(cc, r, fid, k))
            if good:
                cubes.append(children)
                splits += k > 1
                break
        else:
            raise CannotSeparateError(
                f"cube at {[float(c) for c in center]} still meets several minimal faces at radius "
                f"{float(rt / (2 * SPLIT_FACTORS[-1])):.3g}"
            )
    flat = [c for group in cubes for c in group]
    return CubeCover(flat, rt, d, {"R": float(R), "split_cubes": splits})


# ---- validation ---------------------------------------------------------------


def _sample_domain(P, n, seed):
    m = int(2 ** math.ceil(math.log2(n * 1.0)))
    u = qmc.Sobol(P.dim, scramble=True, seed=seed).random(m)
    pts = P.lo + u * (P.hi - P.lo)
    inside = np.array([P.contains(p) for p in pts])
    pts = pts[inside][:n]
    verts = np.array([f.geometry for f in P.faces_of_dim(0)])
    return np.vstack([verts, pts])


def validate_cover(cover, P, samples=10_000, seed=0):
    """Check containment, disjointness, radii and the face conditions.

    The doubled-cube overlap count is reported in ``detail`` only.
    """
    rep = ValidationReport()
    cubes = cover.cubes
    d = P.dim
    X = np.array([c.x for c in cubes]).reshape(-1, d)
    r = np.array([c.r for c in cubes])

    pts = _sample_domain(P, samples, seed)
    covered = np.zeros(len(pts), dtype=bool)
    for x, rr in zip(X, r):
        covered |= np.all(np.abs(pts - x) <= rr * (1 + 1e-12) + 1e-15, axis=1)
    miss = np.flatnonzero(~covered)
    rep.add("containment", miss.size == 0, pts[miss[0]].tolist() if miss.size else None,
            f"{len(pts)} points, {miss.size} uncovered")

    # exact disjointness of open cubes, with a float prefilter
    overlap = None
    for i in range(len(cubes)):
        near = np.flatnonzero(np.all(np.abs(X[i + 1:] - X[i]) < (r[i + 1:, None] + r[i]) * (1 + 1e-9), axis=1))
        for j in near + i + 1:
            a, b = cubes[i], cubes[j]
            if all(abs(p - q) < a.radius + b.radius for p, q in zip(a.center, b.center)):
                overlap = (i, int(j))
                break
        if overlap:
            break
    rep.add("disjoint", overlap is None, list(overlap) if overlap else None)

    bad_r = None
    for i, c in enumerate(cubes):
        k2 = cover.base_radius / c.radius
        if k2.denominator != 1 or k2.numerator % 2 or k2 < 2:
            bad_r = i
            break
    rep.add("radii", bad_r is None, bad_r, "each radius must be r~/(2k)")

    bad_face = None
    for i, c in enumerate(cubes):
        ok, fid, wit = classify_cube(P, c.x, c.r)
        if not ok:
            bad_face = {"cube": i, **wit}
            break
        if fid != c.face_id:
            bad_face = {"cube": i, "stored": c.face_id, "found": fid}
            break
    rep.add("faces", bad_face is None, bad_face, "one minimal face for every s in [r, 2r]")

    # doubled cubes: open Q(x, 2r) against each other
    worst = 0
    for i in range(len(cubes)):
        hits = np.all(np.abs(X - X[i]) < 2 * (r[:, None] + r[i]) - 1e-12, axis=1)
        worst = max(worst, int(hits.sum()) - 1)
    rep.detail = {"max_doubled_overlap": worst, "overlap_bound": 3**d - 1, "cubes": len(cubes)}
    return rep
