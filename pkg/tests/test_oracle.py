import math

import numpy as np
import pytest

from finslerjet.core import Pipeline
from finslerjet.oracle import (conformal_efree_prediction, fd_gradient, fd_hessian, levi_civita_fd,
                               riemann_ricci_fd)
from finslerjet.zoo import (flat_field, hyperbolic2_field, make_riemannian, sphere2_field,
                            sphere3_field)

FIELDS = {"flat3": flat_field(3), "sphere2": sphere2_field(),
          "hyperbolic2": hyperbolic2_field(), "sphere3": sphere3_field()}


def test_fd_helpers():
    f = lambda x: np.array([x[0] ** 3 * x[1], math.sin(x[1])])
    x = np.array([0.7, 0.3])
    np.testing.assert_allclose(fd_gradient(f, x), [[3 * 0.49 * 0.3, 0.343], [0, math.cos(0.3)]], atol=1e-10)
    h = fd_hessian(f, x)
    np.testing.assert_allclose(h[0], [[6 * 0.7 * 0.3, 3 * 0.49], [3 * 0.49, 0]], atol=1e-8)


def test_euclidean_zero():
    rep = riemann_ricci_fd(flat_field(2), [0.3, -0.1])
    for arr in (rep.christoffel, rep.riemann_lowered, rep.ricci):
        assert np.all(arr == 0)
    assert rep.scal == 0


def test_sphere_christoffel():
    gam = levi_civita_fd(sphere2_field(), [math.pi / 3, 0.0])
    assert gam[0, 1, 1] == pytest.approx(-0.43301, abs=1e-5)


def test_hyperbolic_christoffel():
    gam = levi_civita_fd(hyperbolic2_field(), [0.0, 1.0])
    assert gam[0, 0, 1] == pytest.approx(-1.0, abs=1e-9)


def test_sphere_scal():
    assert riemann_ricci_fd(sphere2_field(), [1.1, 0.4]).scal == pytest.approx(2.0, abs=1e-5)


def test_sphere3_scal():
    assert riemann_ricci_fd(sphere3_field(), [1.0, 1.2, 0.3]).scal == pytest.approx(6.0, abs=1e-4)


@pytest.mark.parametrize("name", sorted(FIELDS))
def test_classical_symmetries_and_bianchi(name):
    field = FIELDS[name]
    rng = np.random.default_rng(1)
    for _ in range(5):
        rep = riemann_ricci_fd(field, field.sample_x(rng))
        R = rep.riemann_lowered
        assert np.max(np.abs(R + R.transpose(1, 0, 2, 3))) <= 1e-6
        assert np.max(np.abs(R + R.transpose(0, 1, 3, 2))) <= 1e-6
        assert np.max(np.abs(R - R.transpose(2, 3, 0, 1))) <= 1e-6
        assert rep.bianchi_residual() <= 1e-5
        assert np.max(np.abs(rep.ricci - rep.ricci.T)) <= 1e-6
        assert np.max(np.abs(rep.christoffel - rep.christoffel.transpose(0, 2, 1))) <= 1e-12


@pytest.mark.parametrize("name", sorted(FIELDS))
def test_pipeline_matches_oracle(name):
    field = FIELDS[name]
    metric = make_riemannian(field)
    for p in metric.sample_points(10, seed=21):
        pipe = Pipeline(metric, p)
        rep = riemann_ricci_fd(field, p.x)
        assert np.max(np.abs(pipe.chern - rep.christoffel)) <= 1e-6
        assert np.max(np.abs(np.einsum("jmkl->mjkl", pipe.hh_lowered) - rep.riemann_lowered)) <= 1e-5
        assert np.max(np.abs(pipe.ricci - rep.ricci)) <= 1e-5
        assert abs(pipe.scal - rep.scal) <= 1e-5
        assert np.max(np.abs(pipe.ricci - pipe.ricci.T)) <= 1e-8


def test_conformal_prediction_constant_factor():
    out = conformal_efree_prediction(sphere3_field(), [1.0, 1.1, 0.2], lambda x: 0.5)
    np.testing.assert_allclose(out["prediction"], out["efree"], atol=1e-12)


def test_conformal_prediction_matches_direct_oracle():
    # the classical identity against a direct oracle run on e^{2u} g
    from finslerjet.conformal import ScalarFactor
    from finslerjet.zoo import make_conformal
    u = ScalarFactor.linear([0.1, 0.05, 0.0])
    base = make_riemannian(sphere3_field())
    deformed = make_conformal(base, u).deformed
    x = [1.0, 1.1, 0.2]
    pred = conformal_efree_prediction(sphere3_field(), x, u)["prediction"]
    direct = riemann_ricci_fd(deformed.field, x).einstein_free
    np.testing.assert_allclose(pred, direct, atol=1e-6)
