from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varqc.charts import NormalSet
from varqc.errors import MeshFailureError
from varqc.geometry import DOMAINS, Orientation, Polytope
from varqc.integrands import make_integrand
from varqc.mesh import (
    DiscreteVariation,
    SimplicialMesh,
    boundary_jacobian_integral,
    integrate_energy,
    mesh_region,
    quadrature_rule,
)
from varqc.regions import FIXED, FREE, build_Bdk


def _all_free(m):
    return m.with_tags(lambda coords: (FREE, -1))


def _monomial_simplex(exps):
    # int over the unit simplex of prod x_i^a_i = prod a_i! / (sum a + d)!
    num = np.prod([factorial(a) for a in exps])
    return num / factorial(sum(exps) + len(exps))


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("degree", [1, 2, 4])
def test_quadrature_exactness(d, degree):
    bary, w = quadrature_rule(d, degree)
    assert w.sum() == pytest.approx(1.0)
    pts = bary[:, 1:]
    for exps in np.ndindex(*([degree + 1] * d)):
        if sum(exps) > degree:
            continue
        val = np.sum(w * np.prod(pts ** np.array(exps), axis=1)) / factorial(d)
        assert val == pytest.approx(_monomial_simplex(exps), rel=1e-12)


def test_half_disc_area_convergence():
    R = build_Bdk(NormalSet.from_vectors([[0, 1]]))
    coarse = mesh_region(R, 0.5).volume()
    fine = mesh_region(R, 0.05).volume()
    assert abs(coarse - np.pi / 2) / (np.pi / 2) < 0.02
    assert abs(fine - np.pi / 2) / (np.pi / 2) < 5e-4


def test_unit_square_area_exact():
    m = mesh_region(Polytope.box([0, 0], [1, 1]), 0.2)
    assert m.volume() == pytest.approx(1.0, abs=1e-14)
    assert np.all(m.facet_tags == FIXED)


def test_quarter_disc_free_facets_on_axes():
    R = build_Bdk(NormalSet.from_vectors([[1, 0], [0, 1]], Orientation.OUTWARDS))
    m = mesh_region(R, 0.2)
    v = m.vertices[m.boundary_facets]
    free = m.facet_tags == FREE
    assert free.any() and (~free).any()
    on_axis = np.all(np.abs(v[..., 0]) < 1e-12, axis=1) | np.all(np.abs(v[..., 1]) < 1e-12, axis=1)
    assert np.array_equal(on_axis, free)
    assert np.allclose(np.linalg.norm(v[~free], axis=2), 1.0)


def test_tagged_polytope_faces():
    D = DOMAINS["square"]()
    bottom = [f.id for f in D.faces_of_dim(1) if np.allclose(f.normals[0], [0, -1])]
    m = mesh_region(D, 0.5, free_faces=bottom)
    v = m.vertices[m.boundary_facets]
    free = m.facet_tags == FREE
    assert np.array_equal(free, np.all(np.abs(v[..., 1] + 1) < 1e-12, axis=1))


def test_degenerate_cells_rejected():
    with pytest.raises(MeshFailureError):
        SimplicialMesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


@pytest.mark.parametrize("d", [2, 3])
def test_refine_is_nested(d):
    m = _all_free(mesh_region(Polytope.box([0] * d, [1] * d), 0.6))
    r = m.refine()
    assert r.n_cells == m.n_cells * 2**d
    assert r.volume() == pytest.approx(m.volume(), rel=1e-13)
    # a P1 function on the coarse mesh interpolates exactly on the fine one
    rng = np.random.default_rng(0)
    M = rng.normal(size=(1, d))
    f = lambda x: x @ M.T + 0.3
    phi_c, phi_f = DiscreteVariation.from_function(m, f, 1), DiscreteVariation.from_function(r, f, 1)
    F = make_integrand("dirichlet", N=1, d=d)
    assert integrate_energy(r, phi_f, F) == pytest.approx(integrate_energy(m, phi_c, F), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_boundary_jacobian_matches_cellwise(seed):
    m = mesh_region(Polytope.box([0, 0], [1, 1]), 0.35)
    phi = DiscreteVariation.random(m, 2, np.random.default_rng(seed))
    cellwise = float(np.sum(np.linalg.det(phi.grad()) * m.volumes))
    assert boundary_jacobian_integral(m, phi) == pytest.approx(cellwise, abs=1e-12)


def test_energy_of_linear_map():
    m = _all_free(mesh_region(DOMAINS["square"](), 0.4))
    phi = DiscreteVariation.from_function(m, lambda x: x[:, :1] * 2.0, 1)
    F = make_integrand("dirichlet", N=1, d=2)
    assert integrate_energy(m, phi, F) == pytest.approx(4.0 * 4.0, rel=1e-12)
    assert integrate_energy(m, None, F) == 0.0


def test_transformed_scales_volume():
    m = mesh_region(Polytope.box([0, 0], [1, 1]), 0.3)
    t = m.transformed(np.diag([2.0, 3.0]), [1.0, -1.0])
    assert t.volume() == pytest.approx(6.0)
    assert np.array_equal(t.facet_tags, m.facet_tags)
