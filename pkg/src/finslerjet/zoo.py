"""
Concrete metrics: Euclidean norms, Riemannian wrappers, Randers metrics,
warped products, conformal deformations and the warped round 3-sphere.

Field callables are written against the float/jet dispatch functions of
:mod:`finslerjet.jets`, so the same definition feeds the jet pipeline and the
finite-difference oracle.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import jets
from .core import FinslerMetric, Pipeline, PointState, max_abs, unit_sphere_direction

POLE_MARGIN = 0.2
SPHERE_THETA = (POLE_MARGIN, np.pi - POLE_MARGIN)
AZIMUTH = (-np.pi, np.pi)


def _quadratic_form(gx, y):
    n = len(y)
    total = 0.0
    for i in range(n):
        for j in range(n):
            gij = gx[i][j]
            if isinstance(gij, (int, float)) and gij == 0:
                continue
            total = total + gij * y[i] * y[j]
    return total


# -- Riemannian fields ----------------------------------------------------------

@dataclass
class RiemannianField:
    """x -> symmetric positive-definite matrix, as nested lists of floats or jets."""

    dim: int
    g_field: Callable
    x_box: list
    label: str = "riemannian"

    def matrix(self, x) -> np.ndarray:
        """Plain float matrix at x (used by the oracle)."""
        rows = self.g_field([float(v) for v in x])
        return np.array([[float(v) for v in row] for row in rows], dtype=float)

    def sample_x(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([rng.uniform(lo, hi) for lo, hi in self.x_box])


def flat_field(n: int) -> RiemannianField:
    def g(x):
        return [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    return RiemannianField(n, g, [(-1.0, 1.0)] * n, f"flat{n}")


def sphere2_field() -> RiemannianField:
    """Round unit sphere in (theta, phi): diag(1, sin^2 theta)."""
    def g(x):
        s = jets.sin(x[0])
        return [[1.0, 0.0], [0.0, s * s]]
    return RiemannianField(2, g, [SPHERE_THETA, AZIMUTH], "sphere2")


def hyperbolic2_field() -> RiemannianField:
    """Upper half-plane: diag(1/x2^2, 1/x2^2)."""
    def g(x):
        w = 1.0 / (x[1] * x[1])
        return [[w, 0.0], [0.0, w]]
    return RiemannianField(2, g, [(-1.0, 1.0), (0.5, 2.0)], "hyperbolic2")


def sphere3_field() -> RiemannianField:
    """Round unit 3-sphere in (t, theta, phi): dt^2 + sin^2 t (dtheta^2 + sin^2 theta dphi^2)."""
    def g(x):
        st = jets.sin(x[0])
        sth = jets.sin(x[1])
        a = st * st
        return [[1.0, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a * sth * sth]]
    return RiemannianField(3, g, [SPHERE_THETA, SPHERE_THETA, AZIMUTH], "sphere3")


class RiemannianMetric(FinslerMetric):
    """F = sqrt(g_ij(x) y^i y^j), keeping the field for oracle comparisons."""

    def __init__(self, field: RiemannianField, label: str | None = None, params=None):
        super().__init__(field.dim, lambda x, y: _quadratic_form(field.g_field(x), y),
                         squared=True, label=label or field.label, x_box=field.x_box,
                         params=params)
        self.field = field


def make_euclidean(n: int) -> RiemannianMetric:
    if n < 1:
        raise ValueError("dimension must be positive")
    field = flat_field(n)

    m = RiemannianMetric(field, label=f"euclidean{n}", params={"n": n})
    m.func = lambda x, y: sum((v * v for v in y[1:]), y[0] * y[0])
    return m


def make_riemannian(field: RiemannianField) -> RiemannianMetric:
    return RiemannianMetric(field)


def make_randers(b: Sequence[float]) -> FinslerMetric:
    """F = |y| + b.y on R^n with a constant 1-form b, ||b|| < 1."""
    b = [float(v) for v in b]
    norm = float(np.linalg.norm(b))
    if not norm < 1:
        raise ValueError(f"Randers requires ‖b‖<1, got ‖b‖={norm:g}")
    n = len(b)

    def F(x, y):
        alpha = jets.sqrt(sum((v * v for v in y[1:]), y[0] * y[0]))
        beta = sum((bi * yi for bi, yi in zip(b, y) if bi != 0), 0.0)
        return alpha + beta

    return FinslerMetric(n, F, label="randers", params={"b": b})


# -- warped products --------------------------------------------------------------

class WarpedProductMetric(FinslerMetric):
    """sqrt(F1^2(x1, y1) + f(x1)^2 F2^2(x2, y2)) on M1 x M2.

    ``warp(x1)`` takes the first-factor coordinates (floats or jets).
    """

    def __init__(self, m1: FinslerMetric, m2: FinslerMetric, warp: Callable,
                 label: str | None = None, params=None):
        n1, n2 = m1.dim, m2.dim

        def F2(x, y):
            x1, x2 = x[:n1], x[n1:]
            y1, y2 = y[:n1], y[n1:]
            f = warp(x1)
            return m1.F2(x1, y1) + f * f * m2.F2(x2, y2)

        def sampler(rng):
            x1, _ = m1.domain_sampler(rng)
            x2, _ = m2.domain_sampler(rng)
            return np.concatenate([x1, x2]), unit_sphere_direction(rng, n1 + n2)

        super().__init__(n1 + n2, F2, squared=True,
                         label=label or f"warped({m1.label},{m2.label})",
                         x_box=m1.x_box + m2.x_box, sampler=sampler, params=params)
        self.m1 = m1
        self.m2 = m2
        self.warp = warp
        self.n1 = n1
        self.n2 = n2


def make_warped(m1: FinslerMetric, m2: FinslerMetric, f: Callable, *,
                check_samples: int = 50, seed: int = 0, label: str | None = None,
                params=None) -> WarpedProductMetric:
    rng = np.random.default_rng(seed)
    for _ in range(check_samples):
        x1, _ = m1.domain_sampler(rng)
        val = float(f(list(x1)))
        if not val > 0:
            raise ValueError(f"warping function must be positive, got f={val:g} at x1={list(x1)}")
    return WarpedProductMetric(m1, m2, f, label=label, params=params)


def make_interval(lo: float, hi: float, margin: float = 0.0) -> RiemannianMetric:
    """The 1-dimensional factor F1 = |y_t| on (lo, hi), stored as F1^2 = y_t^2."""
    field = RiemannianField(1, lambda x: [[1.0]], [(lo + margin, hi - margin)], "interval")
    m = RiemannianMetric(field)
    m.func = lambda x, y: y[0] * y[0]
    return m


def make_sphere2() -> RiemannianMetric:
    return RiemannianMetric(sphere2_field(), params={})


def make_s5_example(c: float):
    """(0, pi) x_{sin t} S^2 with phi(t) = cos t + c; isometric to the round S^3 chart.

    The warping is |phi'(t)| = sin t.  Returns ``(metric, phi)``.
    """
    c = float(c)
    if not c > 1:
        raise ValueError(f"the example needs c > 1, got c={c:g}")
    m1 = make_interval(0.0, np.pi, POLE_MARGIN)
    m2 = make_sphere2()

    def phi(t):
        return jets.cos(t) + c

    metric = make_warped(m1, m2, lambda x1: jets.sin(x1[0]), label="s5_example",
                         params={"c": c})
    metric.field = sphere3_field()
    return metric, phi


def warped_residuals(m: WarpedProductMetric, p: PointState, pipe: Pipeline | None = None) -> dict:
    """Block structure and warped-product connection/curvature identities at p.

    * ``block_offdiag``: mixed blocks of g.
    * ``mixed_connection``: Gamma^alpha_{a beta} - (d_a f / f) delta^alpha_beta.
    * ``first_factor_connection``: Gamma^a_bc versus the first factor alone.
    * ``first_factor_curvature``: lowered R on first-factor slots versus the first factor.
    * ``curvature_mixed_zero``: R(xi1, eta1, X2, Y1).
    """
    pipe = pipe or Pipeline(m, p)
    n1, n = m.n1, m.dim
    first, second = slice(0, n1), slice(n1, n)
    out = {"block_offdiag": max_abs(pipe.g[first, second])}

    fjet = jets.Jet.constant(0.0, 2 * n, pipe.order) + m.warp(pipe.xs[:n1])
    fval = fjet.value
    df = np.array([fjet.partial(tuple(1 if v == a else 0 for v in range(2 * n)))
                   for a in range(n1)])
    gam = pipe.chern
    mixed = gam[second, first, second]  # [alpha, a, beta]
    expected = np.einsum("a,xb->xab", df / fval, np.eye(n - n1))
    out["mixed_connection"] = max_abs(mixed - expected)

    p1 = PointState(p.x[:n1], p.y[:n1], p.order)
    if np.linalg.norm(p1.y) > 0:
        pipe1 = Pipeline(m.m1, p1)
        out["first_factor_connection"] = max_abs(gam[first, first, first] - pipe1.chern)
        if p.order >= 4:
            R = pipe.hh_lowered
            out["first_factor_curvature"] = max_abs(R[first, first, first, first] - pipe1.hh_lowered)
    if p.order >= 4:
        out["curvature_mixed_zero"] = max_abs(pipe.hh_lowered[first, first, second, first])
    return out


# -- conformal deformation -----------------------------------------------------------

@dataclass
class ConformalPair:
    base: FinslerMetric
    u: Callable
    deformed: FinslerMetric


def make_conformal(base: FinslerMetric, u: Callable) -> ConformalPair:
    """The deformation e^u F of ``base`` for a function ``u(x)`` on the base manifold."""
    scale = 2.0 if base.squared else 1.0

    def func(x, y):
        return jets.exp(scale * u(x)) * base.func(x, y)

    deformed = FinslerMetric(base.dim, func, squared=base.squared,
                             label=f"conformal({base.label})", x_box=base.x_box,
                             sampler=base._sampler, params=dict(base.params))
    if hasattr(base, "field"):
        field = base.field

        def g_def(x):
            w = jets.exp(2.0 * u(x))
            return [[w * gij for gij in row] for row in field.g_field(x)]

        deformed.field = RiemannianField(field.dim, g_def, field.x_box, f"conformal({field.label})")
    return ConformalPair(base, u, deformed)

