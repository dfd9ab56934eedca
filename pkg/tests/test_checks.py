import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varqc.charts import NormalSet
from varqc.checks import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    FrozenState,
    SolverConfig,
    check_hessian_qc,
    check_qc_boundary,
    check_qc_interior,
    check_second_variation,
    check_spatially_local,
    check_weak_EL,
    cube_patch_mesh,
    qc_energy,
)
from varqc.errors import SupNormViolationError
from varqc.geometry import DOMAINS, Orientation, Polytope
from varqc.integrands import (
    check_growth_bounds,
    fit_C_from_Gb,
    make_extremal,
    make_integrand,
)
from varqc.mesh import DiscreteVariation, integrate_energy, mesh_region
from varqc.regions import FIXED, FREE, build_Bdk, unit_ball

CFG = SolverConfig(restarts=8, h=0.3)


@pytest.fixture(scope="module")
def ball():
    return mesh_region(unit_ball(2), 0.3)


@pytest.fixture(scope="module")
def half_disc():
    return mesh_region(build_Bdk(NormalSet.from_vectors([[0, 1]])), 0.3)


def _zero_state(N=1, d=2):
    return FrozenState.of(np.zeros(d), np.zeros(N), np.zeros((N, d)))


class _SGauge:
    def __init__(self, p):
        self.p = p

    def F(self, x, y, z):
        r2 = np.sum(z * z, axis=(1, 2))
        return r2 + r2 ** (self.p / 2)


def _reevaluate(mesh, phi, F, state, c0):
    # independent route through integrate_energy with frozen coefficients
    frozen = (state.x0, state.y0, state.A)
    return (integrate_energy(mesh, phi, F, frozen=frozen) - integrate_energy(mesh, None, F, frozen=frozen)
            - c0 * integrate_energy(mesh, phi, _SGauge(F.p)))


# ---- quasiconvexity -----------------------------------------------------------


def test_interior_dirichlet_identity(ball):
    rep = check_qc_interior(_zero_state(), make_integrand("dirichlet"), 0.5, ball, CFG)
    assert rep.status == PASS
    assert abs(rep.margin) <= 1e-8
    assert rep.trace["restarts"] == 8


def test_interior_dirichlet_violation(ball):
    F = make_integrand("dirichlet")
    rep = check_qc_interior(_zero_state(), F, 0.6, ball, CFG)
    assert rep.status == FAIL
    assert rep.certificate is not None and rep.certificate.sup_norm() > 0
    # J = -0.2 |grad phi|^2 on the certificate
    g = rep.certificate.grad()
    assert rep.margin == pytest.approx(-0.2 * np.sum(np.sum(g * g, axis=(1, 2)) * ball.volumes), rel=1e-10)


def test_interior_requires_fixed_mesh(half_disc):
    with pytest.raises(ValueError):
        check_qc_interior(_zero_state(), make_integrand("dirichlet"), 0.5, half_disc, CFG)


@pytest.mark.parametrize("name", ["dirichlet", "p_dirichlet", "mixed_growth", "coupled", "det_perturbed"])
def test_zero_variation_is_zero(name, half_disc):
    F = make_integrand(name)
    rng = np.random.default_rng(1)
    state = FrozenState.of([0.1, 0.2], rng.standard_normal(2), rng.standard_normal((2, 2)))
    assert qc_energy(half_disc, DiscreteVariation.zero(half_disc, 2), F, state, 0.7) == 0.0


def test_boundary_dirichlet_identity(half_disc):
    rep = check_qc_boundary(_zero_state(), make_integrand("dirichlet"), 0.5, half_disc, CFG)
    assert rep.status == PASS and abs(rep.margin) <= 1e-8


def test_boundary_flux_violation(half_disc):
    F = make_integrand("dirichlet")
    state = FrozenState.of([0, 0], [0], [[0.0, 1.0]])
    rep = check_qc_boundary(state, F, 0.0, half_disc, CFG)
    assert rep.status == FAIL
    assert rep.margin < -1e-4
    # the certificate reproduces the margin through two independent evaluations
    assert qc_energy(half_disc, rep.certificate, F, state, 0.0) == pytest.approx(rep.margin, abs=1e-8)
    assert _reevaluate(half_disc, rep.certificate, F, state, 0.0) == pytest.approx(rep.margin, abs=1e-8)


@pytest.mark.parametrize("c0", [0.0, 0.3])
def test_certificates_reevaluate(c0, half_disc):
    F = make_integrand("mixed_growth")
    state = FrozenState.of([0, 0], [0, 0], [[0.0, 1.0], [0.5, 0.0]])
    rep = check_qc_boundary(state, F, c0, half_disc, SolverConfig(restarts=4, h=0.3))
    if rep.status == FAIL:
        assert _reevaluate(half_disc, rep.certificate, F, state, c0) == pytest.approx(rep.margin, abs=1e-8)
    assert rep.status in (PASS, FAIL, INCONCLUSIVE)


@pytest.mark.parametrize("angle", [0.4, 1.3, 2.9])
def test_boundary_frame_invariance(angle, half_disc):
    F = make_integrand("dirichlet")
    n = np.array([0.0, 1.0])
    base = check_qc_boundary(FrozenState.of([0, 0], [0], np.outer([1.0], n)), F, 0.0, half_disc, CFG)
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s], [s, c]])
    rot = half_disc.transformed(R, np.zeros(2))
    rep = check_qc_boundary(FrozenState.of([0, 0], [0], np.outer([1.0], R @ n)), F, 0.0, rot, CFG)
    assert rep.status == base.status == FAIL
    assert rep.margin == pytest.approx(base.margin, rel=0.02)


def test_refinement_does_not_raise_minimum():
    F = make_integrand("dirichlet")
    state = FrozenState.of([0, 0], [0], [[0.0, 1.0]])
    coarse = mesh_region(build_Bdk(NormalSet.from_vectors([[0, 1]])), 0.5)
    fine = coarse.refine()
    cfg = SolverConfig(restarts=4, h=0.5)
    a = check_qc_boundary(state, F, 0.0, coarse, cfg)
    b = check_qc_boundary(state, F, 0.0, fine, cfg)
    assert b.margin <= a.margin + 1e-8 + 1e-6 * abs(a.margin)


def test_detmargins_agree(ball):
    margins = [check_qc_interior(_zero_state(2), make_integrand("det_perturbed", gamma=g), 0.5, ball, CFG).margin
               for g in (0.0, 1.0, 5.0)]
    assert max(margins) - min(margins) <= 1e-7


def test_report_serialises(half_disc):
    rep = check_qc_boundary(FrozenState.of([0, 0], [0], [[0.0, 1.0]]), make_integrand("dirichlet"), 0.0,
                            half_disc, CFG)
    d = rep.to_dict()
    assert d["status"] == FAIL and d["certificate"]["N"] == 1
    assert d["detail"]["free_facets"] > 0


def test_determinism(half_disc):
    state = FrozenState.of([0, 0], [0, 0], [[0.0, 1.0], [0.5, 0.0]])
    F = make_integrand("mixed_growth")
    a = check_qc_boundary(state, F, 0.2, half_disc, SolverConfig(restarts=3, h=0.3, seed=5))
    b = check_qc_boundary(state, F, 0.2, half_disc, SolverConfig(restarts=3, h=0.3, seed=5))
    assert a.margin == b.margin


# ---- linearised conditions ----------------------------------------------------


@pytest.fixture(scope="module")
def square_fixed():
    return mesh_region(Polytope.box([0, 0], [1, 1]), 0.2)


def test_weak_EL_affine_exact(square_fixed):
    ex = make_extremal("affine", M=[[1.0, -2.0]])
    rep = check_weak_EL(ex, make_integrand("dirichlet"), square_fixed)
    assert rep.status == PASS and rep.margin <= 1e-12


def test_weak_EL_harmonic_and_bowl(square_fixed):
    F = make_integrand("dirichlet")
    assert check_weak_EL(make_extremal("harmonic"), F, square_fixed).margin <= 1e-12
    rep = check_weak_EL(make_extremal("quadratic_bowl"), F, square_fixed)
    assert rep.status == FAIL and rep.margin > 1e-3
    assert rep.certificate.sup_norm() == 1.0


def test_weak_EL_harmonic_refinement():
    # on a non-symmetric mesh the residual is O(h) and decreases under refinement
    D = Polytope.box([0.1, 0.2], [1.3, 0.9])
    m = mesh_region(D, 0.4)
    F = make_integrand("dirichlet")
    ex = make_extremal("harmonic")
    vals = [check_weak_EL(ex, F, mm).margin for mm in (m, m.refine(), m.refine().refine())]
    assert vals[2] <= vals[0] + 1e-13


def test_second_variation_dirichlet(square_fixed):
    ex = make_extremal("zero", N=1)
    F = make_integrand("dirichlet")
    rep = check_second_variation(ex, F, square_fixed, 1.0)
    assert rep.status == PASS and rep.margin == pytest.approx(2.0, abs=1e-6)
    bad = check_second_variation(ex, F, square_fixed, 2.5)
    assert bad.status == FAIL and bad.margin == pytest.approx(2.0, abs=1e-6)


def test_second_variation_mass_certificate_is_first_mode(square_fixed):
    ex = make_extremal("zero", N=1)
    rep = check_second_variation(ex, make_integrand("dirichlet_mass", kappa=60.0), square_fixed, 0.5)
    assert rep.status == FAIL
    v = rep.certificate.values[:, 0]
    X = square_fixed.vertices
    mode = np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])
    cos = abs(v @ mode) / (np.linalg.norm(v) * np.linalg.norm(mode))
    assert cos > 0.99


def test_hessian_examples(ball):
    I = 2 * np.eye(2).reshape(1, 2, 1, 2)
    assert check_hessian_qc(I, 1.0, ball).status == PASS
    rep = check_hessian_qc(I, 1.1, ball)
    assert rep.status == FAIL and rep.margin == pytest.approx(-0.2, abs=1e-6)
    det = make_integrand("det_perturbed", gamma=5.0)
    z0 = np.zeros((1, 2, 2))
    Fzz = det.F_zz(np.zeros((1, 2)), np.zeros((1, 2)), z0)[0]
    Fzz0 = make_integrand("det_perturbed", gamma=0.0).F_zz(np.zeros((1, 2)), np.zeros((1, 2)), z0)[0]
    assert check_hessian_qc(Fzz, 0.5, ball).margin == pytest.approx(check_hessian_qc(Fzz0, 0.5, ball).margin,
                                                                     abs=1e-8)


# ---- spatially local inequality ----------------------------------------------


@pytest.fixture(scope="module")
def corner_patch():
    sq = DOMAINS["square"]()
    return cube_patch_mesh(sq, [0.875, 0.875], 0.125, 0.05)


def test_patch_tags(corner_patch):
    m = corner_patch
    v = m.vertices[m.boundary_facets]
    on_domain = np.all(np.isclose(v[..., 0], 1.0), axis=1) | np.all(np.isclose(v[..., 1], 1.0), axis=1)
    assert np.array_equal(m.facet_tags == FREE, on_domain)


def test_spatially_local_trivial(corner_patch):
    ex = make_extremal("zero", N=1)
    F = make_integrand("dirichlet")
    zero = DiscreteVariation.zero(corner_patch, 1)
    rep = check_spatially_local(ex, F, corner_patch, 0.5, 0.0, zero, 0.1)
    assert rep.status == PASS and rep.margin == 0.0
    phi = DiscreteVariation.random(corner_patch, 1, np.random.default_rng(0), 0.02)
    rep = check_spatially_local(ex, F, corner_patch, 0.5, 0.0, phi, 0.1)
    # (c0/2) |S|^2 = |grad phi|^2 / 2 against |grad phi|^2
    assert rep.status == PASS
    assert rep.detail["lhs"] == pytest.approx(0.5 * rep.detail["rhs"], rel=1e-12)
    assert rep.margin == pytest.approx(rep.detail["lhs"], rel=1e-12)


def test_sup_norm_violation(corner_patch):
    phi = DiscreteVariation.random(corner_patch, 1, np.random.default_rng(0), 1.0)
    with pytest.raises(SupNormViolationError):
        check_spatially_local(make_extremal("zero", N=1), make_integrand("dirichlet"), corner_patch, 0.5, 0.0,
                              phi, 0.1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_spatially_local_mixed_growth_sweep(seed):
    sq = DOMAINS["square"]()
    patch = cube_patch_mesh(sq, [0.875, -0.875], 0.125, 0.08)
    F = make_integrand("mixed_growth")
    ex = make_extremal("zero", N=1)
    C = fit_C_from_Gb(check_growth_bounds(F, ex, "G_b", samples=2000, seed=0))
    rng = np.random.default_rng(seed)
    phi = DiscreteVariation.random(patch, 1, rng, 0.03)
    phi.values *= min(1.0, 0.099 / max(phi.sup_norm(), 1e-300))
    rep = check_spatially_local(ex, F, patch, 0.5, C, phi, 0.1)
    assert rep.status == PASS
