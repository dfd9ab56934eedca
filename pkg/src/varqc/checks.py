"""Optimisation-based checks of the sufficiency conditions.

Every check returns a :class:`CheckReport`.  Quasiconvexity checks minimise
an anchored functional over P1 variations (``J[0] = 0`` exactly), so a
negative minimum is a certificate of failure and a nonnegative one is a
bounded-search PASS, not a proof.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.sparse.linalg import splu

from .errors import (
    DegeneratePolytopeError,
    EmptyPolytopeError,
    NonFiniteValueError,
    NotOnBoundaryError,
    SolverDivergenceError,
    SupNormViolationError,
)
from .geometry import HalfSpace, Polytope, facelike_classify, intersect_halfspaces
from .mesh import DiscreteVariation, SimplicialMesh, integrate_energy, mesh_region, quadrature_rule
from .regions import FIXED, FREE, BoundaryRegion

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"


@dataclass
class CheckReport:
    """Outcome of one check.

    Attributes
    ----------
    condition : str
    status : {"PASS", "FAIL", "INCONCLUSIVE"}
    margin : float
        Minimum found of the tested functional (or its normalised analogue).
    certificate : DiscreteVariation or None
        A variation realising ``margin``; always present on FAIL.
    trace : dict
        Solver statistics.
    flags : list of str
    detail : dict
    """

    condition: str
    status: str
    margin: float
    certificate: DiscreteVariation | None = None
    trace: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        cert = None
        if self.certificate is not None:
            cert = {
                "n_vertices": int(self.certificate.mesh.n_vertices),
                "N": int(self.certificate.N),
                "sup_norm": self.certificate.sup_norm(),
            }
        return {
            "condition": self.condition,
            "status": self.status,
            "margin": float(self.margin),
            "certificate": cert,
            "trace": self.trace,
            "flags": list(self.flags),
            "detail": self.detail,
        }


@dataclass
class SolverConfig:
    """Settings of the multi-start quasi-Newton search.

    ``restarts`` counts the zero start; the remaining starts are Gaussian
    with amplitudes cycling through ``amplitudes`` times the mesh size.
    Every DOF is confined to ``[-box, box]``.
    """

    restarts: int = 8
    amplitudes: tuple = (1e-2, 1e-1, 1.0)
    seed: int = 0
    maxiter: int = 3000
    box: float = 1.0
    tol_abs: float = 1e-8
    tol_rel: float = 1e-6
    h: float = 0.25


@dataclass(frozen=True)
class FrozenState:
    """Coefficients ``(x0, u0(x0), grad u0(x0))`` held fixed in a test."""

    x0: np.ndarray
    y0: np.ndarray
    A: np.ndarray

    @classmethod
    def from_extremal(cls, extremal, x0):
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        return cls(x0[0], extremal.u0(x0)[0], extremal.grad(x0)[0])

    @classmethod
    def of(cls, x0, y0, A):
        return cls(np.asarray(x0, float), np.atleast_1d(np.asarray(y0, float)), np.atleast_2d(np.asarray(A, float)))

    @property
    def N(self):
        return self.A.shape[0]

    def to_dict(self):
        return {"x0": self.x0.tolist(), "y0": self.y0.tolist(), "A": self.A.tolist()}


def _tolerance(margin, cfg):
    return cfg.tol_abs + cfg.tol_rel * abs(margin)


# ---- frozen quasiconvexity functional -----------------------------------------


def _s2(z, p):
    r2 = np.sum(z * z, axis=(1, 2))
    return r2 + r2 ** (p / 2)


def _s2_grad(z, p):
    r2 = np.sum(z * z, axis=(1, 2))
    return (2 + p * r2 ** (p / 2 - 1))[:, None, None] * z


class _FrozenFunctional:
    """``J[phi] = int F(A + grad phi) - F(A) - c0 |S(grad phi)|^2`` on a mesh."""

    def __init__(self, mesh, integrand, state, c0):
        self.mesh = mesh
        self.F = integrand
        self.state = state
        self.c0 = float(c0)
        self.p = integrand.p
        nc = mesh.n_cells
        self.x = np.broadcast_to(state.x0, (nc, mesh.dim))
        self.y = np.broadcast_to(state.y0, (nc, state.N))
        self.F0 = integrand.F(self.x[:1], self.y[:1], state.A[None])[0]
        self.N = state.N
        self.free = ~mesh.fixed_mask
        self.nfree = int(self.free.sum())
        self.calls = 0

    def variation(self, dofs):
        return DiscreteVariation.from_dofs(self.mesh, dofs, self.N)

    def _grad_phi(self, dofs):
        vals = np.zeros((self.mesh.n_vertices, self.N))
        vals[self.free] = dofs.reshape(-1, self.N)
        return np.einsum("cak,cad->ckd", vals[self.mesh.cells], self.mesh.basis_gradients)

    def value(self, dofs):
        g = self._grad_phi(dofs)
        z = self.state.A[None] + g
        dens = self.F.F(self.x, self.y, z) - self.F0 - self.c0 * _s2(g, self.p)
        val = float(np.sum(dens * self.mesh.volumes))
        if not np.isfinite(val):
            raise NonFiniteValueError("frozen functional is not finite")
        return val

    def value_and_grad(self, dofs):
        self.calls += 1
        g = self._grad_phi(dofs)
        z = self.state.A[None] + g
        dens = self.F.F(self.x, self.y, z) - self.F0 - self.c0 * _s2(g, self.p)
        val = float(np.sum(dens * self.mesh.volumes))
        if not np.isfinite(val):
            raise NonFiniteValueError("frozen functional is not finite")
        Gz = (self.F.F_z(self.x, self.y, z) - self.c0 * _s2_grad(g, self.p)) * self.mesh.volumes[:, None, None]
        local = np.einsum("ckd,cad->cak", Gz, self.mesh.basis_gradients)
        full = np.zeros((self.mesh.n_vertices, self.N))
        np.add.at(full, self.mesh.cells, local)
        return val, full[self.free].ravel()


def qc_energy(mesh, phi, integrand, state, c0):
    """Value of the anchored frozen functional at ``phi``."""
    return _FrozenFunctional(mesh, integrand, state, c0).value(phi.dofs())


def _multistart(J, cfg, condition, detail):
    n = J.nfree * J.N
    rng = np.random.default_rng(cfg.seed)
    h = float(J.mesh.h)
    starts = [np.zeros(n)]
    for i in range(cfg.restarts - 1):
        amp = cfg.amplitudes[i % len(cfg.amplitudes)] * h
        starts.append(np.clip(amp * rng.standard_normal(n), -cfg.box, cfg.box))
    bounds = [(-cfg.box, cfg.box)] * n
    best_val, best_x = 0.0, np.zeros(n)
    runs = []
    stalled = False
    t0 = time.perf_counter()
    for x0 in starts:
        if n == 0:
            runs.append({"value": 0.0, "iterations": 0, "converged": True, "message": "no free dofs"})
            continue
        res = minimize(J.value_and_grad, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": cfg.maxiter, "ftol": 1e-15, "gtol": 1e-10, "maxcor": 20})
        val = J.value(res.x)
        pg = _projected_gradient(J, res.x, cfg.box)
        ok = bool(res.success) or pg <= 1e-8 * (1 + abs(val))
        stalled |= not ok
        runs.append({"value": val, "iterations": int(res.nit), "converged": ok, "message": str(res.message),
                     "projected_gradient": pg})
        if val < best_val:
            best_val, best_x = val, res.x.copy()
    tol = _tolerance(best_val, cfg)
    flags = []
    if best_val < -tol:
        status = FAIL
    elif stalled:
        status = INCONCLUSIVE
    else:
        status = PASS
        if abs(best_val) <= tol:
            flags.append("boundary-of-tolerance")
    cert = J.variation(best_x) if status == FAIL or best_val < 0 else None
    trace = {
        "restarts": len(starts),
        "search_dimension": n,
        "iterations": [r["iterations"] for r in runs],
        "restart_values": [r["value"] for r in runs],
        "final_gradient_norm": [r.get("projected_gradient", 0.0) for r in runs],
        "function_calls": J.calls,
        "wall_time": time.perf_counter() - t0,
    }
    detail = dict(detail, tolerance=tol, h=h, box=cfg.box)
    return CheckReport(condition, status, best_val, cert, trace, flags, detail)


def _projected_gradient(J, x, box):
    _, g = J.value_and_grad(x)
    at_lo = (x <= -box + 1e-12) & (g > 0)
    at_hi = (x >= box - 1e-12) & (g < 0)
    g = np.where(at_lo | at_hi, 0.0, g)
    return float(np.max(np.abs(g))) if g.size else 0.0


def check_qc_interior(state, integrand, c0, mesh, cfg=None):
    """Strong quasiconvexity in the interior at a frozen state.

    Parameters
    ----------
    state : FrozenState
    integrand : Integrand
    c0 : float
    mesh : SimplicialMesh
        Mesh of the unit ball; every boundary facet must be FIXED.
    cfg : SolverConfig, optional
    """
    cfg = cfg or SolverConfig()
    if np.any(mesh.facet_tags != FIXED):
        raise ValueError("interior check needs an all-FIXED mesh")
    J = _FrozenFunctional(mesh, integrand, state, c0)
    return _multistart(J, cfg, "qc_interior", {"c0": float(c0), "state": state.to_dict()})


def check_qc_boundary(state, integrand, c0, region, cfg=None):
    """Strong quasiconvexity at a facelike boundary point.

    ``region`` is a :class:`BoundaryRegion` (meshed at ``cfg.h``) or a mesh
    whose flat facets are tagged FREE.
    """
    cfg = cfg or SolverConfig()
    mesh = region if isinstance(region, SimplicialMesh) else mesh_region(region, cfg.h)
    J = _FrozenFunctional(mesh, integrand, state, c0)
    detail = {"c0": float(c0), "state": state.to_dict(), "free_facets": int(np.sum(mesh.facet_tags == FREE))}
    if isinstance(region, BoundaryRegion):
        detail["region"] = {"kind": region.kind, "normals": region.normals.tolist()}
    return _multistart(J, cfg, "qc_boundary", detail)


# ---- assembly -----------------------------------------------------------------


def _dof_index(mesh, N):
    """Map ``(vertex, component)`` to the constrained DOF index or -1."""
    free = ~mesh.fixed_mask
    idx = -np.ones((mesh.n_vertices, N), dtype=np.int64)
    idx[free] = np.arange(int(free.sum()) * N).reshape(-1, N)
    return idx


def _assemble(mesh, local, N):
    """Scatter ``(nc, (d+1)N, (d+1)N)`` local matrices into the free-DOF matrix."""
    idx = _dof_index(mesh, N)
    loc = idx[mesh.cells].reshape(mesh.n_cells, -1)
    I = np.repeat(loc, loc.shape[1], axis=1).ravel()
    Jc = np.tile(loc, (1, loc.shape[1])).ravel()
    V = local.reshape(mesh.n_cells, -1).ravel()
    keep = (I >= 0) & (Jc >= 0)
    n = int(idx.max()) + 1 if idx.size and idx.max() >= 0 else 0
    return sp.csr_matrix((V[keep], (I[keep], Jc[keep])), shape=(n, n))


def gradient_gram(mesh, N):
    """Matrix of ``int grad phi : grad psi`` on the constrained space."""
    B = mesh.basis_gradients
    S = np.einsum("cad,cbd->cab", B, B) * mesh.volumes[:, None, None]
    local = np.einsum("cab,ij->caibj", S, np.eye(N))
    d1 = mesh.dim + 1
    return _assemble(mesh, local.reshape(mesh.n_cells, d1 * N, d1 * N), N)


def second_variation_matrix(mesh, integrand, extremal, degree=2):
    """Matrix of ``Q[phi] = int F_yy phi.phi + 2 F_yz phi.grad phi + F_zz grad phi.grad phi``."""
    d = mesh.dim
    N = extremal.N
    bary, w = quadrature_rule(d, degree)
    nc, nq = mesh.n_cells, len(w)
    X = mesh.cell_points(bary).reshape(-1, d)
    y, z = extremal.u0(X), extremal.grad(X)
    Fyy = integrand.F_yy(X, y, z).reshape(nc, nq, N, N)
    Fyz = integrand.F_yz(X, y, z).reshape(nc, nq, N, N, d)
    Fzz = integrand.F_zz(X, y, z).reshape(nc, nq, N, d, N, d)
    B = mesh.basis_gradients
    wv = w[None, :] * mesh.volumes[:, None]
    # (a, i) x (b, j) blocks
    mass = np.einsum("cq,qa,qb,cqij->caibj", wv, bary, bary, Fyy)
    mixed = np.einsum("cq,qa,cqijl,cbl->caibj", wv, bary, Fyz, B)
    stiff = np.einsum("cq,cak,cqikjl,cbl->caibj", wv, B, Fzz, B)
    local = mass + mixed + np.transpose(mixed, (0, 3, 4, 1, 2)) + stiff
    d1 = d + 1
    return _assemble(mesh, local.reshape(nc, d1 * N, d1 * N), N)


def hessian_form_matrix(mesh, Fzz, N):
    """Matrix of ``int F_zz(z0) grad phi : grad phi`` for a constant tensor."""
    B = mesh.basis_gradients
    local = np.einsum("cak,ikjl,cbl->caibj", B, np.asarray(Fzz, float), B) * mesh.volumes[:, None, None, None, None]
    d1 = mesh.dim + 1
    return _assemble(mesh, local.reshape(mesh.n_cells, d1 * N, d1 * N), N)


def lowest_generalized_eig(K, G, tol=1e-12, maxiter=5000):
    """Smallest eigenpair of ``K v = lam G v`` (``G`` SPD) by shifted inverse iteration.

    The shift ``sigma = -(1.5 rho + 1)`` lies below the spectrum, where
    ``rho`` is a power-iteration estimate of the spectral radius.

    Raises
    ------
    SolverDivergenceError
    """
    n = K.shape[0]
    if n == 0:
        raise SolverDivergenceError("empty constrained space")
    K = sp.csc_matrix(K)
    G = sp.csc_matrix(G)
    Glu = splu(G)
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(n)
    rho = 0.0
    for _ in range(60):
        u = Glu.solve(K @ v)
        nu = np.linalg.norm(u)
        if nu == 0:
            break
        rho = max(rho, nu / np.linalg.norm(v))
        v = u / nu
    sigma = -(1.5 * rho + 1.0)
    lu = splu(sp.csc_matrix(K - sigma * G))
    v = rng.standard_normal(n)
    v /= np.sqrt(v @ (G @ v))
    lam = np.inf
    for it in range(1, maxiter + 1):
        u = lu.solve(G @ v)
        u /= np.sqrt(u @ (G @ u))
        new = float(u @ (K @ u))
        res = np.linalg.norm(K @ u - new * (G @ u)) / (1 + abs(new))
        v = u
        if abs(new - lam) <= tol * (1 + abs(new)) and res <= 1e-6:
            return new, v, it
        lam = new
    raise SolverDivergenceError(f"inverse iteration did not converge in {maxiter} steps")


# ---- conditions ---------------------------------------------------------------


def check_weak_EL(extremal, integrand, mesh, tol=None, degree=2):
    """Residual of the weak Euler-Lagrange equations against P1 hat functions.

    The margin is ``max |r(phi)| / ||phi||_{1,2}`` over hat functions that
    vanish on the FIXED boundary; PASS when it is at most ``tol``
    (default ``1e-6 h``).
    """
    d = mesh.dim
    N = extremal.N
    bary, w = quadrature_rule(d, degree)
    nc, nq = mesh.n_cells, len(w)
    X = mesh.cell_points(bary).reshape(-1, d)
    y, z = extremal.u0(X), extremal.grad(X)
    Fy = integrand.F_y(X, y, z).reshape(nc, nq, N)
    Fz = integrand.F_z(X, y, z).reshape(nc, nq, N, d)
    wv = w[None, :] * mesh.volumes[:, None]
    B = mesh.basis_gradients
    local = np.einsum("cq,qa,cqk->cak", wv, bary, Fy) + np.einsum("cq,cqkd,cad->cak", wv, Fz, B)
    r = np.zeros((mesh.n_vertices, N))
    np.add.at(r, mesh.cells, local)
    # ||lambda_a||_{1,2}^2 from the exact P1 mass and stiffness diagonals
    lump = np.einsum("cad,cad->ca", B, B) * mesh.volumes[:, None]
    mdiag = (2.0 / ((d + 1) * (d + 2))) * np.repeat(mesh.volumes[:, None], d + 1, axis=1)
    nrm2 = np.zeros(mesh.n_vertices)
    np.add.at(nrm2, mesh.cells, lump + mdiag)
    free = ~mesh.fixed_mask
    scaled = np.abs(r[free]) / np.sqrt(nrm2[free])[:, None]
    margin = float(scaled.max()) if scaled.size else 0.0
    h = float(mesh.h)
    tol = 1e-6 * h if tol is None else float(tol)
    status = PASS if margin <= tol else FAIL
    cert = None
    if status == FAIL:
        v, k = np.unravel_index(int(np.argmax(np.where(free[:, None], np.abs(r) / np.sqrt(nrm2)[:, None], -1))),
                                r.shape)
        vals = np.zeros((mesh.n_vertices, N))
        vals[v, k] = 1.0
        cert = DiscreteVariation(mesh, vals)
    return CheckReport("weak_EL", status, margin, cert,
                       {"test_functions": int(free.sum()) * N},
                       [], {"tolerance": tol, "h": h})


def check_second_variation(extremal, integrand, mesh, c0, tol=1e-8):
    """Smallest Rayleigh quotient ``Q[phi] / ||grad phi||^2`` against ``c0``.

    The margin is ``lambda_min``; PASS iff ``lambda_min >= c0 - tol``.
    """
    K = second_variation_matrix(mesh, integrand, extremal)
    G = gradient_gram(mesh, extremal.N)
    lam, v, its = lowest_generalized_eig(K, G)
    status = PASS if lam >= c0 - tol else FAIL
    cert = DiscreteVariation.from_dofs(mesh, v, extremal.N) if status == FAIL else None
    return CheckReport("second_variation", status, lam, cert,
                       {"iterations": its, "search_dimension": int(K.shape[0])},
                       [], {"c0": float(c0), "tolerance": tol, "h": float(mesh.h)})


def check_hessian_qc(Fzz, c0, mesh, tol=1e-8):
    """Quasiconvexity of ``F_zz(z0)[.,.] - 2 c0 |.|^2`` on an all-FIXED ball mesh.

    The margin is ``mu_min - 2 c0`` with ``mu_min`` the smallest quotient
    of the form against ``||grad phi||^2``.
    """
    Fzz = np.asarray(Fzz, float)
    N = Fzz.shape[0]
    if np.any(mesh.facet_tags != FIXED):
        raise ValueError("Hessian check needs an all-FIXED mesh")
    K = hessian_form_matrix(mesh, Fzz, N)
    G = gradient_gram(mesh, N)
    mu, v, its = lowest_generalized_eig(K, G)
    margin = mu - 2 * c0
    status = PASS if margin >= -tol else FAIL
    cert = DiscreteVariation.from_dofs(mesh, v, N) if status == FAIL else None
    return CheckReport("hessian_qc", status, margin, cert,
                       {"iterations": its, "search_dimension": int(K.shape[0])},
                       [], {"c0": float(c0), "mu_min": mu, "tolerance": tol})


class _Gauge:
    """``|S(z)|^2 - C |y|^2`` packaged as an integrand."""

    def __init__(self, p, C):
        self.p, self.C = p, C

    def F(self, x, y, z):
        return _s2(z, self.p) - self.C * np.sum(y * y, axis=1)


def check_spatially_local(extremal, integrand, mesh, c0, C, phi, delta, tol=1e-10, cube=None):
    """The local inequality on one cover cube.

    Compares ``LHS = (c0/2) int (|S(grad phi)|^2 - C |phi|^2)`` with
    ``RHS = int F(x, u0+phi, grad u0+grad phi) - F(x, u0, grad u0)`` on the
    mesh of ``Omega`` cut by the cube.

    Raises
    ------
    SupNormViolationError
        If ``||phi||_inf >= delta``.
    """
    sup = phi.sup_norm()
    if not sup < delta:
        raise SupNormViolationError(f"||phi||_inf = {sup:.6g} >= delta = {delta:.6g}")
    lhs = 0.5 * c0 * integrate_energy(mesh, phi, _Gauge(integrand.p, C), degree=2)
    rhs = integrate_energy(mesh, phi, integrand, extremal) - integrate_energy(mesh, None, integrand, extremal)
    margin = rhs - lhs
    status = PASS if margin >= -tol else FAIL
    detail = {"lhs": lhs, "rhs": rhs, "C": float(C), "delta": float(delta), "sup_norm": sup, "c0": float(c0)}
    if cube is not None:
        detail["cube"] = cube
    return CheckReport("spatially_local", status, margin, phi if status == FAIL else None, {}, [], detail)


def cube_patch_mesh(domain, center, radius, h, dirichlet_faces=(), free_neumann=True):
    """Mesh of ``Omega`` cut by the cube ``Q(center, radius)``.

    Facets on ``dQ`` and on Dirichlet faces are FIXED; facets on the rest of
    ``dOmega`` are FREE when ``free_neumann`` is set.
    """

    c = np.asarray(center, float)
    d = c.size
    box = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        box += [HalfSpace(e, c[k] + radius), HalfSpace(-e, -(c[k] - radius))]
    pieces = []
    for P in domain.pieces:
        hs = [HalfSpace(a, b) for a, b in zip(P.A, P.b)] + box
        try:
            pieces.append(intersect_halfspaces(hs))
        except (EmptyPolytopeError, DegeneratePolytopeError):
            continue
    patch = Polytope(pieces)
    mesh = mesh_region(patch, h)
    dirichlet = set(dirichlet_faces)
    tol = 1e-9 * max(1.0, domain.scale)

    def tag(coords):
        if not free_neumann:
            return FIXED, -1
        mid = coords.mean(axis=0)
        try:
            f = facelike_classify(domain, mid)
        except NotOnBoundaryError:
            return FIXED, -1
        if f.dim != d - 1 or not all(f.contains(x, tol) for x in coords):
            return FIXED, -1
        return (FIXED if f.id in dirichlet else FREE), f.id

    out = mesh.with_tags(tag)
    out.region = patch
    return out
