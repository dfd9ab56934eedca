"""Local charts from boundary neighbourhoods onto model polytopes.

A chart is a closed-form diffeomorphism ``g`` defined on a ball around a
boundary point, together with its Jacobian and inverse.  Face normals of the
model polytope are transported back through ``grad g`` to give the normal
set of a boundary point of the physical domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, SingularJacobianError, UncoveredPointError
from .geometry import EPS, Orientation, Polytope, facelike_classify

# minimum number of orientation samples per chart ball
MIN_DET_SAMPLES = 128


@dataclass(frozen=True, eq=False)
class NormalSet:
    """Unit normals attached to a boundary point, one per active model facet."""

    normals: np.ndarray
    orientation: Orientation
    source_face: object = field(repr=False)

    def __post_init__(self):
        n = np.atleast_2d(np.asarray(self.normals, dtype=float))
        if np.any(np.abs(np.linalg.norm(n, axis=1) - 1.0) > 1e-12):
            raise ValueError("normals must have unit length")
        object.__setattr__(self, "normals", n)

    @property
    def count(self):
        return len(self.normals)

    @property
    def dim(self):
        return self.normals.shape[1]

    @classmethod
    def from_vectors(cls, normals, orientation=None):
        n = np.atleast_2d(np.asarray(normals, dtype=float))
        n = n / np.linalg.norm(n, axis=1, keepdims=True)
        if orientation is None:
            orientation = Orientation.SMOOTH if len(n) == 1 else Orientation.OUTWARDS
        return cls(n, Orientation(orientation), None)


@dataclass(eq=False)
class Chart:
    """Diffeomorphism ``g`` from ``B(center, radius)`` into a model polytope."""

    name: str
    center: np.ndarray
    radius: float
    model: Polytope
    g: Callable
    jacobian: Callable
    inverse: Callable
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.radius = float(self.radius)
        gx = self.g(self.center)
        self.image_face = facelike_classify(self.model, gx)

    @property
    def dim(self):
        return self.center.size

    def covers(self, x):
        return float(np.linalg.norm(np.asarray(x, float) - self.center)) < self.radius

    def det_samples(self, n=MIN_DET_SAMPLES, seed=0):
        """Jacobian determinants at quasi-random points of the chart ball."""
        pts = _ball_points(self.center, self.radius, n, seed)
        return np.array([np.linalg.det(self.jacobian(p)) for p in pts])

    def validate(self, n=MIN_DET_SAMPLES, seed=0):
        """Check orientation and the single-lowest-face condition.

        Raises
        ------
        SingularJacobianError
            If ``det grad g <= 0`` at some sample.
        ConfigError
            If two distinct model faces of the lowest dimension meet the chart.
        """
        dets = self.det_samples(n, seed)
        if np.any(dets <= 0) or not np.all(np.isfinite(dets)):
            raise SingularJacobianError(f"chart {self.name!r}: det grad g <= 0 on the chart ball")
        met = self.faces_met()
        if not met:
            raise ConfigError(f"chart {self.name!r} meets no model face")
        k = min(f.dim for f in met)
        lowest = [f.id for f in met if f.dim == k]
        if len(lowest) != 1 or lowest[0] != self.image_face.id:
            raise ConfigError(
                f"chart {self.name!r}: lowest-dimensional faces met are {lowest}, "
                f"expected only {self.image_face.id}"
            )
        return True

    def faces_met(self, per_face=64):
        """Model faces whose preimage under ``g`` enters the chart ball."""
        out = []
        for f in self.model.faces:
            for y in _face_points(f, per_face):
                x = self.inverse(y)
                # the inverse formula may extend past the range of g
                if self.covers(x) and np.linalg.norm(self.g(x) - y) <= 1e-9 * (1 + np.linalg.norm(y)):
                    out.append(f)
                    break
        return out


def _ball_points(center, radius, n, seed):
    d = center.size
    m = int(2 ** np.ceil(np.log2(max(n, 2) * 2.5)))
    u = qmc.Sobol(d, scramble=True, seed=seed).random(m) * 2 - 1
    u = u[np.linalg.norm(u, axis=1) < 1.0][:n]
    return center + radius * u


def _face_points(face, n):
    if face.kind == "point":
        return [face.geometry]
    if face.kind == "segment":
        a, b = face.geometry
        t = np.linspace(0.0, 1.0, n)
        return list(a + t[:, None] * (b - a))
    origin, basis, poly = face.geometry
    x0, y0, x1, y1 = poly.bounds
    k = int(np.ceil(np.sqrt(n))) + 1
    pts = []
    from shapely.geometry import Point

    for s in np.linspace(x0, x1, k):
        for t in np.linspace(y0, y1, k):
            if poly.buffer(EPS).contains(Point(s, t)):
                pts.append(origin + np.array([s, t]) @ basis)
    pts.append(face.sample_point)
    return pts


def pushforward_normals(chart, x0):
    """Normals ``grad g(x0)^T m_i / |grad g(x0)^T m_i|`` of the image face.

    Raises
    ------
    SingularJacobianError
        If ``det grad g(x0) <= 0`` or some pushed normal vanishes.
    """
    x0 = np.asarray(x0, dtype=float)
    J = np.asarray(chart.jacobian(x0), dtype=float)
    if not np.linalg.det(J) > 0:
        raise SingularJacobianError(f"det grad g = {np.linalg.det(J):.3g} at {x0.tolist()}")
    face = facelike_classify(chart.model, chart.g(x0))
    out = []
    for m in face.normals:
        v = J.T @ m
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            raise SingularJacobianError("pushed-forward normal vanishes")
        out.append(v / nv)
    orient = face.orientation if face.orientation is not None else Orientation.OUTWARDS
    return NormalSet(np.array(out), orient, face)


def classify_boundary_point(atlas, x0):
    """Face dimension and normal set of ``x0`` using the first covering chart."""
    x0 = np.asarray(x0, dtype=float)
    for chart in atlas:
        if chart.covers(x0):
            ns = pushforward_normals(chart, x0)
            return ns.source_face.dim, ns
    raise UncoveredPointError(f"no chart covers {x0.tolist()}")


def same_normal_sets(a, b, tol=1e-8):
    """True when two normal sets agree up to ordering."""
    if a.count != b.count:
        return False
    used = set()
    for n in a.normals:
        hit = [j for j, m in enumerate(b.normals) if j not in used and np.linalg.norm(n - m) <= tol]
        if not hit:
            return False
        used.add(hit[0])
    return True


# ---- registry -----------------------------------------------------------------

def identity_chart(model, center, radius):
    d = model.dim
    return Chart(
        "identity", center, radius, model,
        g=lambda x: np.asarray(x, float),
        jacobian=lambda x: np.eye(d),
        inverse=lambda y: np.asarray(y, float),
    )


def affine_chart(model, center, radius, M, c):
    """``g(x) = M x + c``."""
    M = np.asarray(M, dtype=float)
    c = np.asarray(c, dtype=float)
    Minv = np.linalg.inv(M)
    return Chart(
        "affine", center, radius, model,
        g=lambda x: M @ np.asarray(x, float) + c,
        jacobian=lambda x: M,
        inverse=lambda y: Minv @ (np.asarray(y, float) - c),
        params={"M": M.tolist(), "c": c.tolist()},
    )


def disc_model():
    """Model polytope for :func:`radial_warp_chart`: ``[-2, 0] x [-4, 4]``."""
    return Polytope([Polytope.box([-2.0, -4.0], [0.0, 4.0])])


def radial_warp_chart(theta0, radius=0.5, model=None):
    """Polar chart at ``(cos theta0, sin theta0)`` of the unit disc.

    ``g(x) = (|x| - 1, angle(x) - theta0)`` with the angle wrapped to
    ``(-pi, pi]``; the disc maps into ``{g_1 <= 0}``.
    """
    model = disc_model() if model is None else model
    th0 = float(theta0)

    def g(x):
        x = np.asarray(x, float)
        r = np.hypot(x[0], x[1])
        t = np.arctan2(x[1], x[0]) - th0
        t = (t + np.pi) % (2 * np.pi) - np.pi
        return np.array([r - 1.0, t])

    def jac(x):
        x = np.asarray(x, float)
        r2 = x[0] ** 2 + x[1] ** 2
        r = np.sqrt(r2)
        return np.array([[x[0] / r, x[1] / r], [-x[1] / r2, x[0] / r2]])

    def inv(y):
        y = np.asarray(y, float)
        r = 1.0 + y[0]
        return np.array([r * np.cos(th0 + y[1]), r * np.sin(th0 + y[1])])

    center = np.array([np.cos(th0), np.sin(th0)])
    return Chart("radial_warp", center, radius, model, g, jac, inv, params={"theta0": th0})


def parabolic_warp_chart(model, center, radius, kappa, c=None):
    """``g(x) = x + kappa |P(x - c)|^2 e_d`` with ``P`` dropping the last axis.

    ``det grad g = 1`` everywhere, and the inverse is explicit.
    """
    d = model.dim
    c = np.asarray(center if c is None else c, dtype=float)
    kappa = float(kappa)

    def g(x):
        x = np.asarray(x, float)
        y = x.copy()
        y[-1] += kappa * np.sum((x[:-1] - c[:-1]) ** 2)
        return y

    def jac(x):
        x = np.asarray(x, float)
        J = np.eye(d)
        J[-1, :-1] = 2 * kappa * (x[:-1] - c[:-1])
        return J

    def inv(y):
        y = np.asarray(y, float)
        x = y.copy()
        x[-1] -= kappa * np.sum((y[:-1] - c[:-1]) ** 2)
        return x

    return Chart("parabolic_warp", center, radius, model, g, jac, inv,
                 params={"kappa": kappa, "c": c.tolist()})


CHARTS = {
    "identity": identity_chart,
    "affine": affine_chart,
    "radial_warp": radial_warp_chart,
    "parabolic_warp": parabolic_warp_chart,
}
