import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varqc.charts import NormalSet
from varqc.checks import FrozenState, qc_energy
from varqc.errors import EmptyRegionError, EpsTooLargeError
from varqc.geometry import Orientation, Polytope
from varqc.integrands import INTEGRANDS, make_integrand
from varqc.mesh import DiscreteVariation, mesh_region
from varqc.regions import (
    FIXED,
    FREE,
    Ball,
    StandardRegion,
    build_Bdk,
    default_anchor_point,
    rescale_embed,
    validate_standard_region,
)

E2 = np.eye(2)
E3 = np.eye(3)


@pytest.mark.parametrize(
    "normals, orient, area",
    [
        ([[0, 1]], Orientation.SMOOTH, np.pi / 2),
        ([[1, 0], [0, 1]], Orientation.OUTWARDS, np.pi / 4),
        ([[1, 0], [0, 1]], Orientation.INWARDS, 3 * np.pi / 4),
        (E3[:1], Orientation.SMOOTH, 2 * np.pi / 3),
        (E3[:2], Orientation.OUTWARDS, np.pi / 3),
        (E3, Orientation.OUTWARDS, np.pi / 6),
        (E3[:2], Orientation.INWARDS, np.pi),
        (E3, Orientation.INWARDS, 7 * np.pi / 6),
    ],
)
def test_region_measures(normals, orient, area):
    R = build_Bdk(NormalSet.from_vectors(normals, orient))
    assert R.measure() == pytest.approx(area, abs=1e-6)


def test_empty_region():
    with pytest.raises(EmptyRegionError):
        build_Bdk(NormalSet.from_vectors([[1, 0, 0], [0, 1, 0], [-1, -1, 0]], Orientation.OUTWARDS))


def test_region_predicates():
    R = build_Bdk(NormalSet.from_vectors([[1, 0], [0, 1]], Orientation.INWARDS))
    assert R.contains([-0.5, 0.5])[0]
    assert not R.contains([0.5, 0.5])[0]
    Q = build_Bdk(NormalSet.from_vectors([[1, 0], [0, 1]], Orientation.OUTWARDS))
    assert Q.contains([-0.5, -0.5])[0]
    assert not Q.contains([-0.5, 0.5])[0]


@pytest.mark.parametrize("normals, orient", [([[0, 1]], "Smooth"), (E3[:2], "Outwards"), (E3, "Inwards")])
def test_free_part_on_planes(normals, orient):
    R = build_Bdk(NormalSet.from_vectors(normals, orient))
    pts, tags = R.sample_boundary(400, seed=3)
    assert np.all(tags >= 0)  # every boundary sample is FIXED or FREE
    free = pts[tags == FREE]
    assert len(free) > 0
    assert np.all(np.min(np.abs(free @ R.normals.T), axis=1) <= 1e-9)


def test_standard_region_examples():
    half = build_Bdk(NormalSet.from_vectors([[0, 1]]))
    sr = StandardRegion(half, [[0, 1]], [0, 0], Orientation.SMOOTH)
    assert validate_standard_region(sr).passed
    sq = Polytope([Polytope.box([-1, -1], [0, 0])])
    sr = StandardRegion(sq, E2, [0, 0], Orientation.OUTWARDS)
    rep = validate_standard_region(sr)
    assert rep.passed and {"flat_contact_0", "flat_contact_1"} <= set(rep.checks)
    far = StandardRegion(Ball((-2.0, -2.0), 1.0), E2, [0, 0], Orientation.OUTWARDS)
    rep = validate_standard_region(far)
    assert not rep.passed
    assert rep.checks["containment"]["passed"]
    assert not rep.checks["flat_contact_0"]["passed"]


def test_default_anchor_is_on_common_face():
    sq = Polytope([Polytope.box([-1, -1], [0, 1])])
    sr = StandardRegion(sq, [[1, 0]], [0, 0], Orientation.SMOOTH)
    d0 = default_anchor_point(sr)
    assert abs(d0[0]) <= 1e-12 and -1 < d0[1] < 1


def _outwards_sr():
    D = Polytope([Polytope.box([-1, -1], [0, 0])])
    return StandardRegion(D, E2, [0, 0], Orientation.OUTWARDS)


def _inwards_sr():
    D = Polytope([Polytope.box([-1, -1], [1, 0]), Polytope.box([-1, -1], [0, 1])])
    return StandardRegion(D, E2, [0, 0], Orientation.INWARDS)


def _profile(sr, h=0.25, seed=0, N=2):
    flat = [f.id for f in sr.domain.faces_of_dim(sr.dim - 1)
            if np.any(np.abs(np.abs(f.normals[0] @ sr.normals.T) - 1) < 1e-12)
            and np.any(np.abs(sr.normals @ f.sample_point - sr.offsets) < 1e-12)]
    mesh = mesh_region(sr.domain, h, free_faces=flat)
    return DiscreteVariation.random(mesh, N, np.random.default_rng(seed), 0.3)


def test_rescale_identity_and_zero():
    half = build_Bdk(NormalSet.from_vectors([[0, 1]]))
    sr = StandardRegion(half, [[0, 1]], [0, 0], Orientation.SMOOTH)
    mesh = mesh_region(half, 0.4)
    phi = DiscreteVariation.random(mesh, 1, np.random.default_rng(1))
    emb = rescale_embed(sr, phi, 0.5, d0=[0.0, 0.0])
    assert np.allclose(emb.psi.values, 0.5 * phi.values)
    assert np.allclose(emb.psi.mesh.vertices, 0.5 * mesh.vertices)
    zero = DiscreteVariation.zero(mesh, 1)
    assert np.all(rescale_embed(sr, zero, 0.5, d0=[0.0, 0.0]).psi.values == 0)


def test_eps_too_large():
    sr = _outwards_sr()
    phi = _profile(sr)
    with pytest.raises(EpsTooLargeError):
        rescale_embed(sr, phi, 1.0)


@pytest.mark.parametrize("name", sorted(INTEGRANDS))
@pytest.mark.parametrize("make_sr", [_outwards_sr, _inwards_sr])
def test_scaling_law(name, make_sr):
    sr = make_sr()
    F = make_integrand(name)
    state = FrozenState.of([0.1, -0.2], [0.3, -0.1], [[0.2, -0.4], [0.5, 0.1]])
    for seed in range(3):
        phi = _profile(sr, seed=seed)
        base = qc_energy(phi.mesh, phi, F, state, 0.0)
        for eps in (0.5, 0.25):
            psi = rescale_embed(sr, phi, eps).psi
            val = qc_energy(psi.mesh, psi, F, state, 0.0)
            assert abs(val - eps**2 * base) <= 1e-6 * (1 + abs(base))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.6))
def test_scaling_law_any_eps(eps):
    sr = _outwards_sr()
    phi = _profile(sr, h=0.5, seed=9)
    F = make_integrand("dirichlet")
    state = FrozenState.of([0, 0], [0, 0], np.zeros((2, 2)))
    base = qc_energy(phi.mesh, phi, F, state, 0.0)
    psi = rescale_embed(sr, phi, eps).psi
    assert qc_energy(psi.mesh, psi, F, state, 0.0) == pytest.approx(eps**2 * base, rel=1e-10)
