import math

import numpy as np
import pytest

from finslerjet import jets
from finslerjet.core import (FinslerMetric, MetricError, Pipeline, PointState, cartan_tensor,
                             chern_coefficients, delta_derivative, full_report, fundamental_tensor,
                             hh_curvature, property_residuals, ricci_scalar_einstein,
                             spray_and_nonlinear_connection)
from finslerjet.jets import fd_partial
from finslerjet.oracle import levi_civita_fd
from finslerjet.zoo import (hyperbolic2_field, make_euclidean, make_randers, make_sphere2,
                            sphere2_field)

THETA = math.pi / 3


@pytest.fixture(scope="module")
def sphere():
    return make_sphere2()


def test_point_state_rejects_zero_y():
    with pytest.raises(ValueError):
        PointState((0.0, 0.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        PointState((0.0,), (1.0, 2.0))


def test_euclidean_fundamental_tensor():
    g, g_inv = fundamental_tensor(make_euclidean(2), PointState((0.4, -1.0), (3.0, 4.0)))
    np.testing.assert_array_equal(g, np.eye(2))
    np.testing.assert_array_equal(g_inv, np.eye(2))


def test_sphere_fundamental_tensor(sphere):
    g, _ = fundamental_tensor(sphere, PointState((THETA, 0.1), (0.3, 1.0)))
    np.testing.assert_allclose(g, np.diag([1.0, 0.75]), atol=1e-15)


def test_sphere_g_matches_fd(sphere):
    x, y = (THETA, 0.1), (0.3, 1.0)
    g, _ = fundamental_tensor(sphere, PointState(x, y))
    f2 = lambda v: float(sphere.F2(v[:2], v[2:]))
    for i in range(2):
        for j in range(2):
            idx = [0, 0, 0, 0]
            idx[2 + i] += 1
            idx[2 + j] += 1
            assert abs(0.5 * fd_partial(f2, list(x + y), tuple(idx)) - g[i, j]) < 1e-7


def test_randers_g_matches_fd():
    m = make_randers([0.5, 0.0])
    x, y = (0.0, 0.0), (1.0, 0.0)
    g, _ = fundamental_tensor(m, PointState(x, y))
    f2 = lambda v: float(m.F(v[:2], v[2:])) ** 2
    assert abs(0.5 * fd_partial(f2, list(x + y), (0, 0, 2, 0)) - g[0, 0]) < 1e-7
    # closed form for y = (1, 0): g_11 = (b_1 + 1)^2
    assert g[0, 0] == pytest.approx(2.25, abs=1e-12)


def test_non_positive_definite_metric_rejected():
    bad = FinslerMetric(2, lambda x, y: y[0] * y[0] - y[1] * y[1], squared=True)
    with pytest.raises(MetricError, match="eigen"):
        Pipeline(bad, PointState((0.0, 0.0), (1.0, 0.5))).g


def test_riemannian_cartan_vanishes(sphere):
    A = cartan_tensor(sphere, PointState((1.0, 0.5), (0.2, -0.7)))
    assert np.max(np.abs(A)) <= 1e-10


def test_randers_cartan_symmetric_nonzero():
    m = make_randers([0.5, 0.0])
    p = PointState((0.0, 0.0), (0.0, 1.0))
    A = cartan_tensor(m, p)
    assert np.max(np.abs(A)) > 1e-2
    for perm in [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]:
        assert np.max(np.abs(A - A.transpose(perm))) <= 1e-10
    assert np.max(np.abs(A @ np.array(p.y))) <= 1e-9
    # fd oracle on (F/2) dg_ij/dy^k
    F = float(m.F(p.x, p.y))
    f2 = lambda v: float(m.F(v[:2], v[2:])) ** 2
    for i, j, k in [(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)]:
        idx = [0, 0, 0, 0]
        for s in (i, j, k):
            idx[2 + s] += 1
        fd = 0.25 * F * fd_partial(f2, list(p.x + p.y), tuple(idx))
        assert abs(fd - A[i, j, k]) < 1e-7


def test_euclidean_spray_zero():
    G, N = spray_and_nonlinear_connection(make_euclidean(3), PointState((0.1, 0.2, 0.3), (1.0, -2.0, 0.5)))
    assert np.all(G == 0) and np.all(N == 0)


def test_sphere_nconn_matches_oracle(sphere):
    p = PointState((THETA, 0.4), (0.0, 1.0))
    _, N = spray_and_nonlinear_connection(sphere, p)
    gam = levi_civita_fd(sphere2_field(), p.x)
    np.testing.assert_allclose(N, gam @ np.array(p.y), atol=1e-7)


@pytest.mark.parametrize("metric", [make_sphere2(), make_randers([0.3, -0.4]),
                                    make_randers([0.0, 0.6])], ids=["sphere2", "randers-a", "randers-b"])
def test_spray_homogeneity(metric):
    for p in metric.sample_points(10, seed=3, order=3):
        G1, _ = spray_and_nonlinear_connection(metric, p)
        G2, _ = spray_and_nonlinear_connection(metric, p.scaled(2.0))
        assert np.max(np.abs(G2 - 4 * G1)) <= 1e-9 * max(1.0, np.max(np.abs(G2)))


@pytest.mark.parametrize("metric", [make_sphere2(), make_randers([0.3, 0.2])], ids=["sphere2", "randers"])
def test_delta_of_f2_vanishes(metric):
    for p in metric.sample_points(10, seed=1, order=3):
        for i in range(2):
            d = delta_derivative(metric, p, lambda x, y: metric.F2(x, y), i)
            assert abs(d) <= 1e-10


def test_delta_is_partial_on_euclidean():
    m = make_euclidean(2)
    p = PointState((0.3, 0.7), (1.0, 2.0))
    target = lambda x, y: jets.sin(x[0]) * x[1] + y[0] * y[1]
    assert delta_derivative(m, p, target, 0) == pytest.approx(math.cos(0.3) * 0.7, abs=1e-15)
    assert delta_derivative(m, p, lambda x, y: 3.0, 1) == 0.0
    with pytest.raises(IndexError):
        delta_derivative(m, p, target, 2)


def test_sphere_chern(sphere):
    gam = chern_coefficients(sphere, PointState((THETA, 0.0), (1.0, 1.0)))
    assert gam[0, 1, 1] == pytest.approx(-math.sin(THETA) * math.cos(THETA), abs=1e-12)
    assert gam[1, 0, 1] == pytest.approx(1 / math.tan(THETA), abs=1e-12)
    assert gam[1, 1, 0] == gam[1, 0, 1]


def test_hyperbolic_chern():
    from finslerjet.zoo import make_riemannian
    gam = chern_coefficients(make_riemannian(hyperbolic2_field()), PointState((0.0, 1.0), (1.0, 0.0)))
    assert gam[0, 0, 1] == pytest.approx(-1.0, abs=1e-12)


def test_euclidean_curvature_zero():
    m = make_euclidean(3)
    p = PointState((0.1, 0.2, 0.3), (1.0, 0.5, -0.2))
    assert np.all(chern_coefficients(m, p) == 0)
    assert np.all(hh_curvature(m, p) == 0)
    ric, scal, efree, res = ricci_scalar_einstein(m, p)
    assert np.all(ric == 0) and scal == 0 and res == 0


def test_sphere_curvature(sphere):
    p = PointState((THETA, 0.2), (0.4, -0.9))
    pipe = Pipeline(sphere, p)
    R = pipe.hh_lowered  # [j, m, k, l] = g_mi R_j^i_kl
    # sectional value R_{theta phi theta phi} = sin^2 theta
    assert R[1, 0, 0, 1] == pytest.approx(math.sin(THETA) ** 2, abs=1e-12)
    np.testing.assert_allclose(pipe.ricci, pipe.g, atol=1e-12)
    assert pipe.scal == pytest.approx(2.0, abs=1e-12)
    assert pipe.einstein_residual <= 1e-8
    assert np.max(np.abs(pipe.hh_curv + pipe.hh_curv.transpose(0, 1, 3, 2))) <= 1e-14


def test_full_report_euclidean():
    rep = full_report(make_euclidean(2), PointState((0.0, 0.0), (3.0, 4.0)))
    assert rep.F_val == 5.0
    assert all(v <= 1e-12 for v in rep.diagnostics.values())


def test_full_report_sphere_euler(sphere):
    rep = full_report(sphere, PointState((THETA, 0.0), (1.0, 1.0)))
    assert rep.diagnostics["euler"] <= 1e-10


def test_full_report_randers_positive_definite():
    m = make_randers([0.6, -0.3])
    for p in m.sample_points(5, seed=11):
        rep = full_report(m, p)
        assert np.all(np.linalg.eigvalsh(rep.g) > 0)


def test_order_requirements():
    pipe = Pipeline(make_sphere2(), PointState((1.0, 0.0), (1.0, 0.0), order=2))
    assert pipe.g.shape == (2, 2)
    with pytest.raises(ValueError, match="order"):
        pipe.hh_curv


def test_property_residuals_randers():
    m = make_randers([0.5, 0.2, -0.1])
    for p in m.sample_points(5, seed=2):
        res = property_residuals(Pipeline(m, p))
        assert res["connection_symmetry"] == 0.0
        assert res["homogeneity_F"] <= 1e-9
        assert res["n_gamma"] <= 1e-8
