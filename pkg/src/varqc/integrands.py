"""Integrands ``F(x, y, z)`` with analytic derivatives, extremals, and the
sampled growth-bound checks.

Array conventions (``n`` evaluation points)::

    x : (n, d)     y : (n, N)     z : (n, N, d)
    F : (n,)       F_y : (n, N)   F_z : (n, N, d)
    F_yy : (n, N, N)   F_yz : (n, N, N, d)   F_zz : (n, N, d, N, d)
"""

from __future__ import annotations

import inspect
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError


def eval_S(xi, p):
    """``(|xi|^2 + |xi|^p)^(1/2)`` with the Euclidean (Frobenius) norm."""
    r = float(np.linalg.norm(np.asarray(xi, dtype=float)))
    return float(np.sqrt(r * r + r**p))


def S_squared(norms, p):
    """Vectorised ``|S|^2`` from precomputed norms."""
    norms = np.asarray(norms, dtype=float)
    return norms**2 + norms**p


def _zn(z):
    return np.sqrt(np.sum(z * z, axis=(1, 2)))


def _eye_zz(n, N, d):
    I = np.eye(N * d).reshape(N, d, N, d)
    return np.broadcast_to(I, (n, N, d, N, d)).copy()


class Integrand:
    """Base class; subclasses fill in the analytic formulas.

    Attributes
    ----------
    name : str
    p : float
        Growth exponent, ``p >= 2``.
    N, d : int or None
        Fixed target/domain dimensions, ``None`` when any value works.
    x_dependent : bool
    """

    name = "base"
    x_dependent = False

    def __init__(self, p=2.0, N=None, d=None, **params):
        if p < 2:
            raise ConfigError("growth exponent p must be >= 2")
        self.p = float(p)
        self.N = N
        self.d = d
        self.params = params

    # subclasses implement F, F_y, F_z, F_yy, F_yz, F_zz

    def F_y(self, x, y, z):
        return np.zeros_like(y)

    def F_yy(self, x, y, z):
        n, N = y.shape
        return np.zeros((n, N, N))

    def F_yz(self, x, y, z):
        n, N, d = z.shape
        return np.zeros((n, N, N, d))

    def growth_constant(self, y):
        """Shape of the locally bounded ``C(y)`` of the growth hypotheses.

        The sampled checks fit the scalar in front of this profile.
        """
        return np.ones(len(y))

    def describe(self):
        return {"name": self.name, "p": self.p, **self.params}


class Dirichlet(Integrand):
    """``|z|^2``."""

    name = "dirichlet"

    def __init__(self, **kw):
        super().__init__(p=2.0, **kw)

    def F(self, x, y, z):
        return np.sum(z * z, axis=(1, 2))

    def F_z(self, x, y, z):
        return 2 * z

    def F_zz(self, x, y, z):
        n, N, d = z.shape
        return 2 * _eye_zz(n, N, d)


class PDirichlet(Integrand):
    """``|z|^p``."""

    name = "p_dirichlet"

    def __init__(self, p=4.0, **kw):
        super().__init__(p=p, **kw)

    def F(self, x, y, z):
        return _zn(z) ** self.p

    def F_z(self, x, y, z):
        r = _zn(z)
        return (self.p * r ** (self.p - 2))[:, None, None] * z

    def F_zz(self, x, y, z):
        n, N, d = z.shape
        p = self.p
        r = _zn(z)
        out = (p * r ** (p - 2))[:, None, None, None, None] * _eye_zz(n, N, d)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(r > 0, p * (p - 2) * r ** (p - 4), 0.0)
        return out + c[:, None, None, None, None] * np.einsum("nij,nkl->nijkl", z, z)


class MixedGrowth(Integrand):
    """``|z|^2 + |z|^p``."""

    name = "mixed_growth"

    def __init__(self, p=4.0, **kw):
        super().__init__(p=p, **kw)
        self._q = PDirichlet(p=p)
        self._d = Dirichlet()

    def F(self, x, y, z):
        return self._d.F(x, y, z) + self._q.F(x, y, z)

    def F_z(self, x, y, z):
        return self._d.F_z(x, y, z) + self._q.F_z(x, y, z)

    def F_zz(self, x, y, z):
        return self._d.F_zz(x, y, z) + self._q.F_zz(x, y, z)


def _cof2(z):
    out = np.empty_like(z)
    out[:, 0, 0] = z[:, 1, 1]
    out[:, 0, 1] = -z[:, 1, 0]
    out[:, 1, 0] = -z[:, 0, 1]
    out[:, 1, 1] = z[:, 0, 0]
    return out


_DCOF = np.zeros((2, 2, 2, 2))
_DCOF[0, 0, 1, 1] = _DCOF[1, 1, 0, 0] = 1.0
_DCOF[0, 1, 1, 0] = _DCOF[1, 0, 0, 1] = -1.0


class Jacobian(Integrand):
    """``det z`` for ``N = d = 2`` (a null Lagrangian)."""

    name = "det"

    def __init__(self, **kw):
        super().__init__(p=2.0, N=2, d=2, **kw)

    def F(self, x, y, z):
        return z[:, 0, 0] * z[:, 1, 1] - z[:, 0, 1] * z[:, 1, 0]

    def F_z(self, x, y, z):
        return _cof2(z)

    def F_zz(self, x, y, z):
        return np.broadcast_to(_DCOF, (len(z), 2, 2, 2, 2)).copy()


class DetPerturbed(Integrand):
    """``|z|^2 + gamma det z`` for ``N = d = 2``."""

    name = "det_perturbed"

    def __init__(self, gamma=1.0, **kw):
        super().__init__(p=2.0, N=2, d=2, gamma=float(gamma), **kw)
        self.gamma = float(gamma)

    def F(self, x, y, z):
        return np.sum(z * z, axis=(1, 2)) + self.gamma * Jacobian.F(self, x, y, z)

    def F_z(self, x, y, z):
        return 2 * z + self.gamma * _cof2(z)

    def F_zz(self, x, y, z):
        return 2 * _eye_zz(len(z), 2, 2) + self.gamma * _DCOF


class Coupled(Integrand):
    """``|z|^2 + |y|^2 (1 + |z|^2)^(1/2)``."""

    name = "coupled"

    def __init__(self, **kw):
        super().__init__(p=2.0, **kw)

    def F(self, x, y, z):
        w = np.sqrt(1 + np.sum(z * z, axis=(1, 2)))
        return np.sum(z * z, axis=(1, 2)) + np.sum(y * y, axis=1) * w

    def F_y(self, x, y, z):
        w = np.sqrt(1 + np.sum(z * z, axis=(1, 2)))
        return 2 * y * w[:, None]

    def F_z(self, x, y, z):
        w = np.sqrt(1 + np.sum(z * z, axis=(1, 2)))
        y2 = np.sum(y * y, axis=1)
        return 2 * z + (y2 / w)[:, None, None] * z

    def F_yy(self, x, y, z):
        n, N = y.shape
        w = np.sqrt(1 + np.sum(z * z, axis=(1, 2)))
        return 2 * w[:, None, None] * np.eye(N)[None]

    def F_yz(self, x, y, z):
        w = np.sqrt(1 + np.sum(z * z, axis=(1, 2)))
        return 2 * np.einsum("ni,nkl->nikl", y, z) / w[:, None, None, None]

    def F_zz(self, x, y, z):
        n, N, d = z.shape
        w = np.sqrt(1 + np.sum(z * z, axis=(1, 2)))
        y2 = np.sum(y * y, axis=1)
        out = (2 + y2 / w)[:, None, None, None, None] * _eye_zz(n, N, d)
        return out - (y2 / w**3)[:, None, None, None, None] * np.einsum("nij,nkl->nijkl", z, z)

    def growth_constant(self, y):
        return 1.0 + np.sum(y * y, axis=1)


class DirichletMass(Integrand):
    """``|z|^2 - kappa |y|^2``."""

    name = "dirichlet_mass"

    def __init__(self, kappa=1.0, **kw):
        super().__init__(p=2.0, kappa=float(kappa), **kw)
        self.kappa = float(kappa)

    def F(self, x, y, z):
        return np.sum(z * z, axis=(1, 2)) - self.kappa * np.sum(y * y, axis=1)

    def F_y(self, x, y, z):
        return -2 * self.kappa * y

    def F_z(self, x, y, z):
        return 2 * z

    def F_yy(self, x, y, z):
        n, N = y.shape
        return -2 * self.kappa * np.broadcast_to(np.eye(N), (n, N, N)).copy()

    def F_zz(self, x, y, z):
        n, N, d = z.shape
        return 2 * _eye_zz(n, N, d)

    def growth_constant(self, y):
        return 1.0 + np.sum(y * y, axis=1)


class WeightedDirichlet(Integrand):
    """``(1 + alpha |x|^2) |z|^2``, an x-dependent integrand."""

    name = "weighted_dirichlet"
    x_dependent = True

    def __init__(self, alpha=0.5, **kw):
        super().__init__(p=2.0, alpha=float(alpha), **kw)
        self.alpha = float(alpha)

    def _a(self, x):
        return 1 + self.alpha * np.sum(x * x, axis=1)

    def F(self, x, y, z):
        return self._a(x) * np.sum(z * z, axis=(1, 2))

    def F_z(self, x, y, z):
        return 2 * self._a(x)[:, None, None] * z

    def F_zz(self, x, y, z):
        n, N, d = z.shape
        return 2 * self._a(x)[:, None, None, None, None] * _eye_zz(n, N, d)


INTEGRANDS = {
    cls.name: cls
    for cls in (Dirichlet, PDirichlet, MixedGrowth, Jacobian, DetPerturbed, Coupled, DirichletMass,
                WeightedDirichlet)
}


def make_integrand(name, **params):
    try:
        cls = INTEGRANDS[name]
    except KeyError:
        raise ConfigError(f"unknown integrand {name!r}; known: {sorted(INTEGRANDS)}") from None
    allowed = {"N", "d"} | {k for k in inspect.signature(cls.__init__).parameters if k not in ("self", "kw")}
    extra = sorted(set(params) - allowed)
    if extra:
        raise ConfigError(f"bad parameters for integrand {name!r}: unexpected {extra}")
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for integrand {name!r}: {exc}") from None


# ---- extremals ----------------------------------------------------------------


class Extremal:
    """Candidate minimiser ``u0`` with analytic gradient.

    ``u0(x)`` returns ``(n, N)`` and ``grad(x)`` returns ``(n, N, d)``.
    """

    name = "base"

    def __init__(self, N=1, **params):
        self.N = int(N)
        self.params = params

    def describe(self):
        return {"name": self.name, "N": self.N, **self.params}


class ZeroExtremal(Extremal):
    name = "zero"

    def u0(self, x):
        return np.zeros((len(x), self.N))

    def grad(self, x):
        return np.zeros((len(x), self.N, x.shape[1]))


class AffineExtremal(Extremal):
    """``u0(x) = M x + c``."""

    name = "affine"

    def __init__(self, M, c=None, **kw):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        super().__init__(N=M.shape[0], M=M.tolist(), **kw)
        self.M = M
        self.c = np.zeros(M.shape[0]) if c is None else np.asarray(c, dtype=float)
        self.params["c"] = self.c.tolist()

    def u0(self, x):
        return x @ self.M.T + self.c

    def grad(self, x):
        return np.broadcast_to(self.M, (len(x),) + self.M.shape).copy()


class HarmonicExtremal(Extremal):
    """``x_1^2 - x_2^2`` in the first component, zero in the others."""

    name = "harmonic"

    def u0(self, x):
        out = np.zeros((len(x), self.N))
        out[:, 0] = x[:, 0] ** 2 - x[:, 1] ** 2
        return out

    def grad(self, x):
        out = np.zeros((len(x), self.N, x.shape[1]))
        out[:, 0, 0] = 2 * x[:, 0]
        out[:, 0, 1] = -2 * x[:, 1]
        return out


class QuadraticBowl(Extremal):
    """``|x|^2`` in the first component (not harmonic)."""

    name = "quadratic_bowl"

    def u0(self, x):
        out = np.zeros((len(x), self.N))
        out[:, 0] = np.sum(x * x, axis=1)
        return out

    def grad(self, x):
        out = np.zeros((len(x), self.N, x.shape[1]))
        out[:, 0, :] = 2 * x
        return out


EXTREMALS = {cls.name: cls for cls in (ZeroExtremal, AffineExtremal, HarmonicExtremal, QuadraticBowl)}


def make_extremal(name, **params):
    try:
        cls = EXTREMALS[name]
    except KeyError:
        raise ConfigError(f"unknown extremal {name!r}; known: {sorted(EXTREMALS)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for extremal {name!r}: {exc}") from None


# ---- excess function ----------------------------------------------------------


class ExcessG:
    """``G(x,y,z) = F(x,u0+y,grad u0+z) - F(x) - F_y(x).y - F_z(x):z``."""

    def __init__(self, integrand, extremal):
        self.F = integrand
        self.u = extremal

    def base(self, x):
        return self.u.u0(x), self.u.grad(x)

    def __call__(self, x, y, z):
        u, A = self.base(x)
        F = self.F
        val = F.F(x, u + y, A + z) - F.F(x, u, A)
        val -= np.sum(F.F_y(x, u, A) * y, axis=1)
        val -= np.sum(F.F_z(x, u, A) * z, axis=(1, 2))
        return val


def eval_G(integrand, extremal, x, y, z):
    """Excess function at a single point (arrays of one state)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(1, -1)
    z = np.asarray(z, dtype=float).reshape(1, y.shape[1], x.shape[1])
    return float(ExcessG(integrand, extremal)(x, y, z)[0])


# ---- sampled checks -----------------------------------------------------------


@dataclass
class BoundReport:
    """Outcome of a sampled growth-bound check."""

    kind: str
    status: str
    fitted_constant: float
    growth_ratio: float
    samples: int
    seed: int
    box: dict
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _random_states(rng, n, N, d, ybox, zbox):
    def radial(k, shape, R):
        v = rng.standard_normal((k,) + shape)
        v /= np.sqrt(np.sum(v * v, axis=tuple(range(1, v.ndim)), keepdims=True))
        # half uniform in radius, half log-uniform to probe small states
        r = np.where(rng.random(k) < 0.5, rng.random(k) * R, R * 10 ** rng.uniform(-4, 0, k))
        return v * r.reshape((k,) + (1,) * len(shape))

    return radial(n, (N,), ybox), radial(n, (N, d), zbox)


def _x_samples(rng, n, xbox):
    lo, hi = np.asarray(xbox[0], float), np.asarray(xbox[1], float)
    return lo + (hi - lo) * rng.random((n, lo.size))


def check_growth_bounds(integrand, extremal, kind, samples=10_000, seed=0, ybox=10.0, zbox=10.0,
                        xbox=None, d=2, R=0.05, eps=0.1):
    """Fit the constant of one growth hypothesis by random sampling.

    Parameters
    ----------
    kind : {"H1a", "H1b", "H1c", "G_a", "G_b", "G_c", "UC"}
    ybox, zbox : float
        Radii of the sampled ``y`` and ``z`` balls.
    xbox : pair of arrays, optional
        Box for ``x``; defaults to ``[-1, 1]^d``.
    R : float
        Radius ``|x - x0| < R`` for ``G_b``.
    eps : float
        The epsilon of ``G_b``.

    Returns
    -------
    BoundReport
        ``PASS`` when the fitted constant is finite and does not grow by more
        than 1.5x when the ``z`` box is doubled (a growth exponent larger than
        the hypothesis allows would show up there).  For ``UC`` the report
        carries the observed modulus at three radii and passes when it shrinks.
    """
    N = integrand.N or extremal.N
    if integrand.d is not None:
        d = integrand.d
    if xbox is None:
        xbox = (-np.ones(d), np.ones(d))
    rng = np.random.default_rng(seed)
    p = integrand.p
    F = integrand
    G = ExcessG(integrand, extremal)
    x = _x_samples(rng, samples, xbox)
    y, z = _random_states(rng, samples, N, d, ybox, 1.0)
    yh, zh = _random_states(rng, samples, N, d, ybox, 1.0)
    box = {"y": ybox, "z": zbox, "x": [np.asarray(xbox[0]).tolist(), np.asarray(xbox[1]).tolist()]}

    if kind == "UC":
        u = extremal
        zz = z * zbox
        mods = []
        radii = [1e-1, 1e-2, 1e-3]
        for delta in radii:
            v = rng.standard_normal((samples, d))
            v *= delta * rng.random((samples, 1)) / np.linalg.norm(v, axis=1, keepdims=True)
            x1 = x + v
            f0 = F.F(x, u.u0(x), u.grad(x) + zz)
            f1 = F.F(x1, u.u0(x1), u.grad(x1) + zz)
            mods.append(float(np.max(np.abs(f0 - f1) / (1 + _zn(zz) ** p))))
        ok = all(np.isfinite(mods)) and (mods[-1] <= 0.1 * mods[0] + 1e-12)
        return BoundReport(kind, "PASS" if ok else "FAIL", mods[-1], mods[-1] / mods[0] if mods[0] else 0.0,
                           samples, seed, box, {"radii": radii, "modulus": mods})

    def ratio(scale):
        zz, zzh = z * scale, zh * scale
        if kind in ("H1a", "H1b", "H1c"):
            u, A = extremal.u0(x), extremal.grad(x)
            Y, Z = u + y, A + zz
            C = F.growth_constant(Y)
            if kind == "H1a":
                lhs, rhs = np.abs(F.F(x, Y, Z)), 1 + _zn(Z) ** p
            elif kind == "H1b":
                lhs, rhs = _zn(F.F_z(x, Y, Z)), 1 + _zn(Z) ** (p - 1)
            else:
                lhs, rhs = np.linalg.norm(F.F_y(x, Y, Z), axis=1), 1 + _zn(Z) ** p
            return lhs / (C * rhs)
        ny, nz = np.linalg.norm(y, axis=1), _zn(zz)
        if kind == "G_a":
            lhs = np.abs(G(x, y, zz))
            rhs = S_squared(ny, p) + S_squared(nz, p)
        elif kind == "G_b":
            v = rng.standard_normal((samples, d))
            v *= R * rng.random((samples, 1)) / np.linalg.norm(v, axis=1, keepdims=True)
            x0 = x + v
            lhs = np.abs(G(x, y, zz) - G(x0, np.zeros_like(y), zz))
            s2 = S_squared(nz, p)
            rhs = ny**2 + s2 * ny + eps * s2
        elif kind == "G_c":
            nyh, nzh = np.linalg.norm(yh, axis=1), _zn(zzh)
            A_p = ny + nyh + nz + nzh + nz**p + nzh**p
            A_p1 = ny + nyh + nz + nzh + nz ** (p - 1) + nzh ** (p - 1)
            lhs = np.abs(G(x, y, zz) - G(x, yh, zzh))
            rhs = A_p1 * _zn(zz - zzh) + A_p * np.linalg.norm(y - yh, axis=1)
        else:
            raise ValueError(f"unknown bound kind {kind!r}")
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 1e-14, np.inf, 0.0))
        return r

    r1 = ratio(zbox)
    r2 = ratio(2 * zbox)
    c1, c2 = float(np.max(r1)), float(np.max(r2))
    growth = c2 / c1 if c1 > 0 else (0.0 if c2 == 0 else np.inf)
    ok = np.isfinite(c1) and np.isfinite(c2) and growth <= 1.5
    worst = int(np.argmax(r1))
    detail = {
        "max_ratio_doubled_z": c2,
        "worst_sample": {"x": x[worst].tolist(), "y": y[worst].tolist(), "z": (z[worst] * zbox).tolist()},
    }
    return BoundReport(kind, "PASS" if ok else "FAIL", c1, growth, samples, seed, box, detail)


def fit_C_from_Gb(report, margin=1.0):
    """Constant ``C`` for the spatially-local inequality from a G_b report."""
    return float(margin * report.fitted_constant)


def excess_origin_checks(integrand, extremal, samples=50, seed=0, d=2, h=1e-5, xbox=None):
    """Max ``|G(x,0,0)|`` and max central-difference gradient of ``G`` at 0."""
    N = integrand.N or extremal.N
    if integrand.d is not None:
        d = integrand.d
    if xbox is None:
        xbox = (-np.ones(d), np.ones(d))
    rng = np.random.default_rng(seed)
    x = _x_samples(rng, samples, xbox)
    G = ExcessG(integrand, extremal)
    y0 = np.zeros((samples, N))
    z0 = np.zeros((samples, N, d))
    g0 = float(np.max(np.abs(G(x, y0, z0))))
    worst = 0.0
    for i in range(N):
        e = np.zeros((samples, N))
        e[:, i] = h
        worst = max(worst, float(np.max(np.abs(G(x, y0 + e, z0) - G(x, y0 - e, z0)) / (2 * h))))
    for i in range(N):
        for j in range(d):
            e = np.zeros((samples, N, d))
            e[:, i, j] = h
            worst = max(worst, float(np.max(np.abs(G(x, y0, z0 + e) - G(x, y0, z0 - e)) / (2 * h))))
    return g0, worst


def derivative_errors(integrand, samples=50, seed=0, N=2, d=2, h=1e-6, scale=1.0):
    """Largest relative mismatch between analytic and central-difference derivatives."""
    N = integrand.N or N
    d = integrand.d or d
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (samples, d))
    y = scale * rng.standard_normal((samples, N))
    z = scale * rng.standard_normal((samples, N, d))
    F = integrand

    def rel(a, b):
        return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))

    errs = {}
    fy = np.zeros((samples, N))
    fyy = np.zeros((samples, N, N))
    fzy = np.zeros((samples, N, d, N))
    for i in range(N):
        e = np.zeros((samples, N))
        e[:, i] = h
        fy[:, i] = (F.F(x, y + e, z) - F.F(x, y - e, z)) / (2 * h)
        fyy[:, :, i] = (F.F_y(x, y + e, z) - F.F_y(x, y - e, z)) / (2 * h)
        fzy[..., i] = (F.F_z(x, y + e, z) - F.F_z(x, y - e, z)) / (2 * h)
    fz = np.zeros((samples, N, d))
    fzz = np.zeros((samples, N, d, N, d))
    for i in range(N):
        for j in range(d):
            e = np.zeros((samples, N, d))
            e[:, i, j] = h
            fz[:, i, j] = (F.F(x, y, z + e) - F.F(x, y, z - e)) / (2 * h)
            fzz[..., i, j] = (F.F_z(x, y, z + e) - F.F_z(x, y, z - e)) / (2 * h)
    errs["F_y"] = rel(F.F_y(x, y, z), fy)
    errs["F_z"] = rel(F.F_z(x, y, z), fz)
    errs["F_yy"] = rel(F.F_yy(x, y, z), fyy)
    # F_yz[n, i, k, l] = d^2 F / dy_i dz_kl
    errs["F_yz"] = rel(F.F_yz(x, y, z), np.transpose(fzy, (0, 3, 1, 2)))
    errs["F_zz"] = rel(F.F_zz(x, y, z), fzz)
    return errs
