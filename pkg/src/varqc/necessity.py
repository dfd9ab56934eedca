"""Blow-up variations at a boundary point and the limit of their energies.

For a chart ``g`` around ``x0`` with ``A = grad g(x0)`` and a profile
``phi`` on the boundary region at ``x0``, the variation

    u_eps(x) = u0(x) + eps phi(A^{-1} (g(x) - g(x0)) / eps)

changes the energy by ``eps^d`` times a quantity that tends to the frozen
boundary functional of ``phi``.  The scaled increments are evaluated by the
change of variables ``x = g^{-1}(g(x0) + eps A y)``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .charts import pushforward_normals
from .checks import FAIL, PASS, CheckReport
from .errors import ChartOverflowError, NonConvergentError
from .mesh import DiscreteVariation, mesh_region, quadrature_rule
from .regions import build_Bdk


@dataclass
class BlowupFamily:
    """Chart, anchor, profile on the region at the anchor, and epsilons.

    Attributes
    ----------
    chart : Chart
    x0 : array
    profile : DiscreteVariation
        Lives on a mesh of the boundary region at ``x0``.
    epsilons : list of float
        Strictly decreasing.
    """

    chart: object
    x0: np.ndarray
    profile: DiscreteVariation
    epsilons: list = field(default_factory=lambda: [0.2, 0.1, 0.05])

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        eps = [float(e) for e in self.epsilons]
        if any(not e > 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be positive and strictly decreasing")
        self.epsilons = eps

    @property
    def A(self):
        return np.asarray(self.chart.jacobian(self.x0), dtype=float)

    @classmethod
    def at_point(cls, chart, x0, h, profile_fn, N=1, epsilons=(0.2, 0.1, 0.05)):
        """Mesh the region at ``x0`` and interpolate ``profile_fn`` on it."""
        ns = pushforward_normals(chart, x0)
        region = build_Bdk(ns)
        mesh = mesh_region(region, h)
        phi = DiscreteVariation.from_function(mesh, profile_fn, N)
        return cls(chart, x0, phi, list(epsilons))

    def points(self, eps, y):
        """``x_eps(y) = g^{-1}(g(x0) + eps A y)`` for rows of ``y``."""
        gx0 = np.asarray(self.chart.g(self.x0), dtype=float)
        shift = eps * (np.asarray(y) @ self.A.T)
        return np.array([self.chart.inverse(gx0 + s) for s in shift])

    def check_support(self, eps):
        """Raise :class:`ChartOverflowError` if the scaled support leaves the chart ball."""
        X = self.points(eps, self.profile.mesh.vertices)
        dist = np.linalg.norm(X - self.chart.center, axis=1)
        if np.any(dist >= self.chart.radius):
            raise ChartOverflowError(
                f"support at eps={eps:g} reaches {dist.max():.4g} >= chart radius {self.chart.radius:g}"
            )

    def sup_deviation(self, eps):
        """``||u_eps - u0||_inf``, equal to ``eps ||phi||_inf``."""
        return eps * self.profile.sup_norm()


def blowup_energy(fam, integrand, extremal, eps, degree=4):
    """``eps^{-d} (I(u_eps) - I(u0))`` by quadrature on the profile mesh.

    Raises
    ------
    ChartOverflowError
    """
    fam.check_support(eps)
    phi = fam.profile
    mesh = phi.mesh
    d, N = mesh.dim, phi.N
    bary, w = quadrature_rule(d, degree)
    nc, nq = mesh.n_cells, len(w)
    Y = mesh.cell_points(bary).reshape(-1, d)
    X = fam.points(eps, Y)
    Ainv = np.linalg.inv(fam.A)
    detA = np.linalg.det(fam.A)
    Jg = np.array([fam.chart.jacobian(x) for x in X])
    weight = detA / np.linalg.det(Jg)
    gphi = np.repeat(phi.grad(), nq, axis=0)
    dz = np.einsum("nkd,de,nef->nkf", gphi, Ainv, Jg)
    y0, z0 = extremal.u0(X), extremal.grad(X)
    vals = integrand.F(X, y0 + eps * phi.at(bary).reshape(-1, N), z0 + dz) - integrand.F(X, y0, z0)
    vals = (vals * weight).reshape(nc, nq)
    return float(np.sum((vals @ w) * mesh.volumes))


def richardson(epsilons, values):
    """Neville extrapolation to ``eps = 0`` of the last three values.

    Returns the order-1 extrapolants of consecutive pairs, the order-2
    extrapolant and the observed rate ``log(D1/D2) / log(q)``.
    """
    e = np.asarray(epsilons, float)
    v = np.asarray(values, float)
    first = [float((e[i] * v[i + 1] - e[i + 1] * v[i]) / (e[i] - e[i + 1])) for i in range(len(e) - 1)]
    e3, r3 = e[-3:], first[-2:]
    second = (e3[0] * r3[1] - e3[2] * r3[0]) / (e3[0] - e3[2])
    D1, D2 = v[-3] - v[-2], v[-2] - v[-1]
    q = math.sqrt((e3[0] / e3[1]) * (e3[1] / e3[2]))
    rate = math.log(abs(D1 / D2)) / math.log(q) if D1 != 0 and D2 != 0 and D1 * D2 > 0 else float("nan")
    return first, float(second), rate, (float(D1), float(D2))


def necessity_verdict(fam, integrand, extremal, tol_abs=1e-8, tol_rel=1e-6, threads=1, csv_path=None):
    """Extrapolated limit of the blow-up energies compared to 0.

    A negative limit is an empirical violation of boundary quasiconvexity,
    reported as FAIL with the profile as certificate.

    Raises
    ------
    NonConvergentError
        If the successive differences change sign or the observed rate is
        outside ``[0.5, 4]`` while the differences are not negligible.
    """
    if len(fam.epsilons) < 3:
        raise ValueError("at least three epsilons are needed")
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as ex:
        values = list(ex.map(lambda e: blowup_energy(fam, integrand, extremal, e), fam.epsilons))
    first, limit, rate, (D1, D2) = richardson(fam.epsilons, values)
    scale = 1.0 + max(abs(v) for v in values)
    negligible = max(abs(D1), abs(D2)) <= 1e-10 * scale
    if not negligible and not (0.5 <= rate <= 4.0):
        raise NonConvergentError(f"blow-up energies {values} do not settle (observed rate {rate})")
    if negligible:
        limit = values[-1]
    tol = tol_abs + tol_rel * abs(limit)
    status = FAIL if limit < -tol else PASS
    if csv_path is not None:
        write_csv(csv_path, fam.epsilons, values, first)
    trace = {"epsilons": fam.epsilons, "values": values, "order1": first, "rate": None if negligible else rate}
    return CheckReport("necessity", status, limit, fam.profile if status == FAIL else None, trace, [],
                       {"tolerance": tol, "x0": fam.x0.tolist(), "chart": fam.chart.name})


def write_csv(path, epsilons, values, order1):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "value", "extrapolant"])
        for i, (e, v) in enumerate(zip(epsilons, values)):
            w.writerow([repr(e), repr(v), "" if i == 0 else repr(order1[i - 1])])
