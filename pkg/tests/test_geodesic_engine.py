import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from projcomplete.errors import DegenerateVelocity, PoleHandling
from projcomplete.geodesic_engine import (
    ChartConnection,
    LieGroupAtlas,
    SingleChart,
    flat_connection,
    geodesic_curvature,
    geodesic_residual,
    integrate_geodesic,
    integrate_jacobi,
    lie_exp_chart,
    metric_connection,
    ricci_along,
    weyl_equivalence,
    weyl_shift,
)
from projcomplete.lie_algebra import LeftInvariantConnection, so3, symmetrized_ricci
from projcomplete.zoll import BAND, zoll_atlas


def _polar_sphere():
    """Unit sphere in (colatitude, longitude): g = diag(1, sin^2)."""

    def metric(x):
        return np.diag([1.0, math.sin(x[0]) ** 2])

    def dmetric(x):
        d = np.zeros((2, 2, 2))
        d[1, 1, 0] = 2 * math.sin(x[0]) * math.cos(x[0])
        return d

    return metric_connection(2, metric, dmetric, domain=lambda x: math.sin(x[0]) - 0.05,
                             name="polar-sphere")


SPHERE = _polar_sphere()


# geodesics ---------------------------------------------------------------------------


def test_flat_straight_line():
    traj = integrate_geodesic(flat_connection(3), [1, 2, 3], [0.5, -1, 2], (0, 5))
    expected = np.array([1, 2, 3]) + np.outer(traj.t, [0.5, -1, 2])
    assert np.max(np.abs(traj.x - expected)) < 1e-12
    assert traj.exit is None


def test_sphere_equator_is_a_geodesic():
    traj = integrate_geodesic(SPHERE, [math.pi / 2, 0], [0, 1], (0, 2 * math.pi))
    assert np.max(np.abs(traj.x[:, 0] - math.pi / 2)) < 1e-10
    assert np.max(np.abs(traj.x[:, 1] - traj.t)) < 1e-9
    assert geodesic_residual(traj) < 1e-8


def test_so3_one_parameter_subgroups():
    """Geodesics of ad/2 through the identity are t -> exp(tA)."""
    chart = lie_exp_chart(LeftInvariantConnection.scaled_ad(so3(), 0.5), radius=3.0)
    A = np.array([0.6, -0.48, 0.64])
    traj = integrate_geodesic(chart, np.zeros(3), A, (0, 2.5))
    err = np.max(np.abs(traj.x - np.outer(traj.t, A)))
    assert err < 1e-8, f"x(t) off tA by {err}"
    res = geodesic_residual(traj)
    assert res < 1e-8, f"residual {res}"


def test_lie_atlas_continues_past_the_chart():
    conn = LeftInvariantConnection.scaled_ad(so3(), 0.5)
    traj = integrate_geodesic(LieGroupAtlas(conn, radius=1.0), np.zeros(3), [0, 0, 1.0], (0, 6))
    assert traj.exit is None and len(traj.segments) >= 5
    assert traj.t_span[1] == pytest.approx(6.0)


def test_single_chart_exit_is_recorded():
    band = zoll_atlas("round").chart(BAND)
    traj = integrate_geodesic(band, [0.0, 0.0], [1.0, 0.0], (0, 3))
    assert traj.exit is not None, "meridian should leave the band"
    assert abs(abs(traj.exit.x[0]) - 0.95) < 1e-6, f"exit at {traj.exit.x}"
    assert traj.exit.t == pytest.approx(math.asin(0.95), abs=1e-6)
    with pytest.raises(PoleHandling):
        SingleChart(band).transfer(0, traj.exit.x)


def test_csv_export():
    traj = integrate_geodesic(flat_connection(2), [0, 0], [1, 0], (0, 1))
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,chart,x0,x1,v0,v1"
    assert len(lines) == len(traj.t) + 1


# Ricci along geodesics --------------------------------------------------------------------


def test_ricci_along_examples():
    flat = integrate_geodesic(flat_connection(2), [0, 0], [1, 1], (0, 3))
    assert not np.any(ricci_along(None, flat).q)
    sph = integrate_geodesic(SPHERE, [1.0, 0.2], [0.3, 0.8 / math.sin(1.0)], (0, 3))
    prof = ricci_along(None, sph, method="fd")
    speed2 = 0.3 ** 2 + 0.8 ** 2
    assert np.max(np.abs(prof.q - speed2)) < 1e-6, "Ric(v, v) = |v|^2 on the unit sphere"
    conn = LeftInvariantConnection.scaled_ad(so3(), 0.5)
    A = np.array([0.0, 0.6, 0.8])
    prof = ricci_along(None, integrate_geodesic(lie_exp_chart(conn, 3.0), np.zeros(3), A, (0, 2)))
    assert np.allclose(prof.q, A @ symmetrized_ricci(conn) @ A, atol=1e-10)


def test_ricci_fd_matches_analytic():
    conn = LeftInvariantConnection.scaled_ad(so3(), 0.5)
    chart = lie_exp_chart(conn, 3.0)
    traj = integrate_geodesic(chart, [0.2, -0.1, 0.3], [0.5, 0.4, -0.2], (0, 2))
    qa = ricci_along(None, traj, max_dt=0.1, method="analytic").q
    qf = ricci_along(None, traj, max_dt=0.1, method="fd").q
    assert np.max(np.abs(qa - qf)) < 1e-6, f"fd vs analytic {np.max(np.abs(qa - qf))}"


# Jacobi fields ------------------------------------------------------------------------------


def test_jacobi_flat_is_linear():
    traj = integrate_geodesic(flat_connection(2), [0, 0], [1, 0], (0, 4))
    jf = integrate_jacobi(traj, [0.0], [1.0])
    assert np.max(np.abs(jf.a[:, 0] - jf.t)) < 1e-12
    assert [round(t, 12) for _, t in jf.zeros] == [0.0]


def _unit_curvature(x):
    g = SPHERE.metric(x)
    d = np.eye(2)
    return np.einsum("ik,lj->ijkl", d, g) - np.einsum("il,kj->ijkl", d, g)


@pytest.mark.parametrize("curvature, tol", [(None, 1e-6), (_unit_curvature, 1e-9)],
                         ids=["finite-difference", "analytic"])
def test_jacobi_sphere_is_sine(curvature, tol):
    conn = SPHERE if curvature is None else ChartConnection(
        2, SPHERE.christoffel, domain=SPHERE.domain, metric=SPHERE.metric, curvature=curvature)
    traj = integrate_geodesic(conn, [math.pi / 2, 0], [0, 1], (0, 2 * math.pi + 0.1))
    jf = integrate_jacobi(traj, [0.0], [1.0])
    err = np.max(np.abs(jf.a[:, 0] - np.sin(jf.t)))
    assert err < tol, f"a(t) off sin t by {err}"
    zs = [t for _, t in jf.zeros]
    assert np.allclose(zs, [0, math.pi, 2 * math.pi], atol=tol), f"zeros {zs}"


@settings(max_examples=10, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_jacobi_linearity(a, b, c, d):
    traj = integrate_geodesic(SPHERE, [1.2, 0.0], [0.4, 0.9], (0, 3))
    j1 = integrate_jacobi(traj, [a], [b])
    j2 = integrate_jacobi(traj, [c], [d])
    j3 = integrate_jacobi(traj, [a + c], [b + d])
    for t in (0.5, 1.7, 3.0):
        assert abs(j3.at(t)[0][0] - j1.at(t)[0][0] - j2.at(t)[0][0]) < 1e-8


# geodesic curvature ---------------------------------------------------------------------------


def test_geodesic_curvature_examples():
    ts = np.linspace(0.5, 1.5, 5)
    eq = geodesic_curvature(SPHERE, lambda t: np.array([math.pi / 2, t]), ts)
    assert np.max(np.abs(eq)) < 1e-9
    cubic = geodesic_curvature(SPHERE, lambda t: np.array([math.pi / 2, t ** 3]), ts)
    assert np.max(np.abs(cubic)) < 1e-8, "reparametrising a geodesic keeps it geodesic"
    th0 = 1.0
    lat = geodesic_curvature(SPHERE, lambda t: np.array([th0, t]), ts)
    expected = math.cos(th0) / math.sin(th0)
    assert np.allclose(np.abs(lat), expected, atol=1e-8), f"{lat.ravel()} vs {expected}"
    with pytest.raises(DegenerateVelocity):
        geodesic_curvature(SPHERE, lambda t: np.array([1.0, 0.3]), [0.0])


# Weyl projective equivalence -----------------------------------------------------------------

POINTS = [np.array(p) for p in ([0.1, 0.2], [-0.5, 0.3], [0.7, -0.4], [0.0, 0.9])]
one_form = arrays(float, 2, elements=st.floats(-2, 2))


def test_weyl_recovers_shift():
    base = SPHERE
    pts = [np.array([1.0 + 0.1 * i, 0.3 * i]) for i in range(4)]
    shifted = weyl_shift(base, lambda x: np.array([x[0], math.sin(x[1])]))
    res = weyl_equivalence(base, shifted, pts)
    assert res.equivalent and res.residual < 1e-12
    assert np.allclose(res.lam, [[p[0], math.sin(p[1])] for p in pts], atol=1e-12)
    assert weyl_equivalence(base, base, pts).equivalent


def test_weyl_rejects_non_projective_change():
    G = np.zeros((2, 2, 2))
    G[0, 1, 1] = 1.0
    other = ChartConnection(2, lambda x: G)
    res = weyl_equivalence(flat_connection(2), other, POINTS)
    assert not res.equivalent and res.residual > 0.1


@settings(max_examples=20, deadline=None)
@given(one_form, one_form)
def test_weyl_is_an_equivalence_relation(l1, l2):
    a = flat_connection(2)
    b = weyl_shift(a, l1)
    c = weyl_shift(b, l2)
    assert weyl_equivalence(b, a, POINTS).equivalent
    assert weyl_equivalence(a, c, POINTS).equivalent
    assert np.allclose(weyl_equivalence(a, c, POINTS).lam, l1 + l2, atol=1e-12)
