import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varqc.charts import (
    NormalSet,
    affine_chart,
    classify_boundary_point,
    identity_chart,
    parabolic_warp_chart,
    pushforward_normals,
    radial_warp_chart,
    same_normal_sets,
)
from varqc.errors import ConfigError, SingularJacobianError, UncoveredPointError
from varqc.geometry import Orientation, square, unit_cube


def test_identity_normal():
    P = square()
    ch = identity_chart(P, [0.0, 1.0], 0.2)
    ns = pushforward_normals(ch, [0.0, 1.0])
    assert np.allclose(ns.normals, [[0, 1]])
    assert ns.orientation == Orientation.SMOOTH


def test_diagonal_jacobian_normal():
    P = square()
    M = np.diag([2.0, 1.0])
    # g(x0) = (1, 0) on the facet with normal e1
    ch = affine_chart(P, [0.5, 0.0], 0.1, M, [0.0, 0.0])
    ns = pushforward_normals(ch, [0.5, 0.0])
    assert np.allclose(ns.normals, [[1, 0]], atol=1e-15)


def test_shear_normal():
    # grad g has transpose [[1, 1], [0, 1]], so grad g^T e2 = (1, 1)
    P = square()
    M = np.array([[1.0, 0.0], [1.0, 1.0]])
    c = np.array([0.0, 0.0])
    x0 = np.linalg.solve(M, [0.0, 1.0])
    ch = affine_chart(P, x0, 0.1, M, c)
    ns = pushforward_normals(ch, x0)
    assert np.allclose(ns.normals, [[1 / np.sqrt(2), 1 / np.sqrt(2)]], atol=1e-15)


def test_singular_jacobian():
    P = square()
    M = np.array([[-1.0, 0.0], [0.0, 1.0]])
    ch = affine_chart(P, [-1.0, 0.0], 0.1, M, [0.0, 0.0])
    with pytest.raises(SingularJacobianError):
        pushforward_normals(ch, [-1.0, 0.0])


def test_classify_corner_and_edge():
    P = square()
    atlas = [identity_chart(P, [1.0, 1.0], 0.3)]
    dim, ns = classify_boundary_point(atlas, [1.0, 1.0])
    assert dim == 0
    assert same_normal_sets(ns, NormalSet.from_vectors([[1, 0], [0, 1]]))
    C = unit_cube()
    dim, ns = classify_boundary_point([identity_chart(C, [1.0, 1.0, 0.0], 0.3)], [1.0, 1.0, 0.0])
    assert dim == 1 and ns.count == 2
    with pytest.raises(UncoveredPointError):
        classify_boundary_point(atlas, [-1.0, -1.0])


@pytest.mark.parametrize("theta", [0.0, 0.7, 2.5, -1.9])
def test_radial_warp_normal_is_radial(theta):
    ch = radial_warp_chart(theta)
    ch.validate()
    dim, ns = classify_boundary_point([ch], ch.center)
    assert dim == 1
    assert np.allclose(ns.normals[0], [np.cos(theta), np.sin(theta)], atol=1e-14)


def test_chart_overlap_consistency():
    P = square()
    x0 = np.array([1.0, 0.2])
    a = identity_chart(P, [1.0, 0.0], 0.5)
    b = parabolic_warp_chart(P, [1.0, 0.3], 0.5, kappa=0.0)
    _, na = classify_boundary_point([a], x0)
    _, nb = classify_boundary_point([b], x0)
    assert same_normal_sets(na, nb, tol=1e-8)


def test_validate_rejects_two_lowest_faces():
    P = square()
    ch = identity_chart(P, [1.0, 0.0], 2.5)
    with pytest.raises(ConfigError):
        ch.validate()


def test_det_samples_positive():
    ch = radial_warp_chart(0.3)
    dets = ch.det_samples(128)
    assert len(dets) >= 100 and np.all(dets > 0)


def test_normal_set_rejects_non_unit():
    with pytest.raises(ValueError):
        NormalSet(np.array([[2.0, 0.0]]), Orientation.SMOOTH, None)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.sampled_from(range(8)))
def test_affine_pushforward_formula(entries, face_idx):
    M = np.array(entries).reshape(2, 2) + 3 * np.eye(2)
    if np.linalg.det(M) <= 0.1:
        M = 3 * np.eye(2) + 0.1 * np.array(entries).reshape(2, 2)
    P = square()
    f = P.faces[face_idx]
    c = np.array([0.2, -0.1])
    x0 = np.linalg.solve(M, f.sample_point - c)
    ch = affine_chart(P, x0, 0.05, M, c)
    ns = pushforward_normals(ch, x0)
    for n, m in zip(ns.normals, f.normals):
        v = M.T @ m
        assert np.allclose(n, v / np.linalg.norm(v), atol=1e-12)
