import csv

import numpy as np
import pytest

from varqc.charts import identity_chart, pushforward_normals, radial_warp_chart
from varqc.checks import FAIL, PASS, FrozenState, SolverConfig, check_qc_boundary, qc_energy
from varqc.errors import ChartOverflowError, NonConvergentError
from varqc.geometry import DOMAINS
from varqc.integrands import make_extremal, make_integrand
from varqc.mesh import DiscreteVariation, mesh_region
from varqc.necessity import BlowupFamily, blowup_energy, necessity_verdict, richardson
from varqc.regions import build_Bdk

TH = 0.7
X0 = np.array([np.cos(TH), np.sin(TH)])


def _profile(y):
    return ((1 - np.sum(y * y, axis=1)) * (1 + y[:, 0] + 0.5 * y[:, 1]))[:, None]


@pytest.fixture(scope="module")
def warp_family():
    return BlowupFamily.at_point(radial_warp_chart(TH, radius=0.9), X0, 0.15, _profile, 1)


def test_epsilons_validated(warp_family):
    with pytest.raises(ValueError):
        BlowupFamily(warp_family.chart, X0, warp_family.profile, [0.1, 0.2, 0.05])
    with pytest.raises(ValueError):
        BlowupFamily(warp_family.chart, X0, warp_family.profile, [0.2, 0.0])


def test_chart_overflow(warp_family):
    with pytest.raises(ChartOverflowError):
        blowup_energy(warp_family, make_integrand("dirichlet"), make_extremal("zero"), 0.95)


def test_zero_profile_is_zero(warp_family):
    mesh = warp_family.profile.mesh
    fam = BlowupFamily(warp_family.chart, X0, DiscreteVariation.zero(mesh, 1))
    F, ex = make_integrand("coupled"), make_extremal("affine", M=[[0.3, -0.2]])
    assert all(blowup_energy(fam, F, ex, e) == 0.0 for e in fam.epsilons)


def test_sup_deviation(warp_family):
    assert warp_family.sup_deviation(0.1) == pytest.approx(0.1 * warp_family.profile.sup_norm())


def test_points_reach_anchor(warp_family):
    assert np.allclose(warp_family.points(0.1, np.zeros((1, 2)))[0], X0, atol=1e-14)


@pytest.mark.parametrize("name", ["dirichlet", "p_dirichlet", "weighted_dirichlet"])
def test_limit_agrees_with_frozen_functional(name, warp_family):
    F = make_integrand(name)
    ex = make_extremal("affine", M=[[0.3, -0.2]])
    rep = necessity_verdict(warp_family, F, ex)
    frozen = qc_energy(warp_family.profile.mesh, warp_family.profile, F, FrozenState.from_extremal(ex, X0), 0.0)
    assert rep.status == PASS
    assert rep.margin == pytest.approx(frozen, rel=0.02)


def test_identity_chart_is_exact():
    sq = DOMAINS["square"]()
    x0 = np.array([0.3, -1.0])
    chart = identity_chart(sq, x0, 0.5)
    fam = BlowupFamily.at_point(chart, x0, 0.2, _profile, 1)
    F, ex = make_integrand("p_dirichlet"), make_extremal("affine", M=[[0.5, 1.0]])
    vals = [blowup_energy(fam, F, ex, e) for e in fam.epsilons]
    assert max(vals) - min(vals) <= 1e-10


def test_descent_profile_fails():
    sq = DOMAINS["square"]()
    x0 = np.array([0.3, -1.0])
    chart = identity_chart(sq, x0, 0.5)
    region = build_Bdk(pushforward_normals(chart, x0))
    mesh = mesh_region(region, 0.3)
    n = region.normals[0]
    ex = make_extremal("affine", M=[n])
    F = make_integrand("dirichlet")
    qc = check_qc_boundary(FrozenState.from_extremal(ex, x0), F, 0.0, mesh, SolverConfig(restarts=4, h=0.3))
    assert qc.status == FAIL
    fam = BlowupFamily(chart, x0, qc.certificate)
    rep = necessity_verdict(fam, F, ex)
    assert rep.status == FAIL and rep.margin < 0
    assert rep.margin == pytest.approx(qc.margin, rel=1e-8)
    assert rep.certificate is qc.certificate


def test_nonconvergent_sign_change(warp_family):
    with pytest.raises(NonConvergentError):
        necessity_verdict(warp_family, make_integrand("coupled"), make_extremal("affine", M=[[0.3, -0.2]]))


def test_richardson_polynomial():
    e = [0.2, 0.1, 0.05]
    v = [3 + 2 * x - 5 * x * x for x in e]
    first, second, rate, _ = richardson(e, v)
    assert second == pytest.approx(3.0, abs=1e-12)
    assert len(first) == 2
    # pure linear data converges at rate 1
    _, _, rate, _ = richardson(e, [1 + x for x in e])
    assert rate == pytest.approx(1.0)


def test_csv_output(tmp_path, warp_family):
    path = tmp_path / "trace.csv"
    necessity_verdict(warp_family, make_integrand("dirichlet"), make_extremal("zero"), csv_path=path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["eps", "value", "extrapolant"]
    assert len(rows) == 4 and rows[1][2] == ""
    assert [float(r[0]) for r in rows[1:]] == warp_family.epsilons


def test_threads_do_not_change_values(warp_family):
    F, ex = make_integrand("p_dirichlet"), make_extremal("zero")
    a = necessity_verdict(warp_family, F, ex, threads=1)
    b = necessity_verdict(warp_family, F, ex, threads=3)
    assert a.trace["values"] == b.trace["values"]
