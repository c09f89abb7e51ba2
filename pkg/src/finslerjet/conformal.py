"""
Conformal factors on the base manifold: horizontal gradient, Hessian and
Laplacian, the B-map, the R-Einstein preservation residual for e^u F, the
trace-free Ricci transformation gap, and the cylinder Hessian identity.

Conventions: ``hess[i, j] = d_i d_j u - Gamma^k_ij d_k u`` (Chern Gamma),
``laplacian = g^ij hess_ij`` (analyst's sign), ``du o du = du_i du_j``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import jets
from .core import FinslerMetric, Pipeline, PointState, max_abs
from .zoo import ConformalPair, WarpedProductMetric, make_conformal, make_interval


class DimensionError(ValueError):
    """The operation is undefined in this dimension."""


class ScalarFactor:
    """A function u(x) on the base manifold, evaluable on floats or jets.

    ``hessian`` optionally gives closed-form second partials d_i d_j u for
    cross-checks.
    """

    def __init__(self, func: Callable, label: str = "u", hessian: Callable | None = None):
        self.func = func
        self.label = label
        self.hessian = hessian

    def __call__(self, x):
        return self.func(x)

    def __repr__(self):
        return f"ScalarFactor({self.label!r})"

    @classmethod
    def constant(cls, c: float) -> "ScalarFactor":
        c = float(c)
        return cls(lambda x: c, f"const:{c:g}", hessian=lambda x: np.zeros((len(x), len(x))))

    @classmethod
    def linear(cls, coeffs) -> "ScalarFactor":
        a = [float(v) for v in coeffs]

        def u(x):
            return sum((ai * xi for ai, xi in zip(a, x) if ai != 0), 0.0)
        return cls(u, "linear:" + ",".join(f"{v:g}" for v in a),
                   hessian=lambda x: np.zeros((len(x), len(x))))

    @classmethod
    def of_coordinate(cls, func: Callable, index: int = 0, label: str | None = None) -> "ScalarFactor":
        """u(x) = func(x[index])."""
        return cls(lambda x: func(x[index]), label or f"f(x{index})")


def _as_factor(u) -> ScalarFactor:
    return u if isinstance(u, ScalarFactor) else ScalarFactor(u)


@dataclass
class ConformalDiagnostics:
    hess_u: np.ndarray
    grad_u: np.ndarray
    grad_norm_sq: float
    laplacian_h: float
    bmap: np.ndarray
    ee9_residual: np.ndarray | None = None
    eq122b_gap: np.ndarray | None = None
    cartan_term: float = 0.0
    extra: dict = field(default_factory=dict)


class _Factor:
    """Derivatives of u at a pipeline's point, shared by the operations below."""

    def __init__(self, pipe: Pipeline, u: ScalarFactor):
        self.pipe = pipe
        n = pipe.n
        uj = pipe.evaluate(lambda x, y: u(x))
        grad = uj.gradient()
        gv = grad.value
        if max_abs(gv[n:]) != 0:
            raise ValueError("conformal factor must not depend on y")
        self.value = uj.value
        self.du = gv[:n]
        self.ddu = grad.gradient().value[:n, :n]

    @property
    def hessian(self) -> np.ndarray:
        return self.ddu - np.einsum("kij,k->ij", self.pipe.chern, self.du)

    @property
    def grad_up(self) -> np.ndarray:
        return self.pipe.g_inv @ self.du

    @property
    def grad_norm_sq(self) -> float:
        return float(self.du @ self.pipe.g_inv @ self.du)

    @property
    def laplacian(self) -> float:
        return float(np.einsum("ij,ij->", self.pipe.g_inv, self.hessian))


def _q_derivative(pipe: Pipeline) -> np.ndarray:
    """d(F^2 g^ir - 2 y^i y^r)/dy^j as an array [i, r, j]."""
    pipe._need(3, "the B-map")
    n, k = pipe.n, pipe.order - 2
    F2 = pipe.F2_jet.truncate(k)
    y = jets.Jet.stack([v.truncate(k) for v in pipe.ys])
    q = pipe.g_inv_jet * F2 - 2.0 * jets.contract("i,r->ir", y, y)
    return q.gradient().value[:, :, n:]


def horizontal_hessian(m: FinslerMetric, u, p: PointState, pipe: Pipeline | None = None) -> np.ndarray:
    pipe = pipe or Pipeline(m, p)
    return _Factor(pipe, _as_factor(u)).hessian


def laplacian_and_gradient(m: FinslerMetric, u, p: PointState, pipe: Pipeline | None = None):
    pipe = pipe or Pipeline(m, p)
    fac = _Factor(pipe, _as_factor(u))
    return fac.grad_up, fac.grad_norm_sq, fac.laplacian


def b_map(m: FinslerMetric, u, p: PointState, pipe: Pipeline | None = None) -> np.ndarray:
    """B^i_j = (1/2F) (d_r u) d(F^2 g^ir - 2 y^i y^r)/dy^j."""
    pipe = pipe or Pipeline(m, p)
    fac = _Factor(pipe, _as_factor(u))
    return np.einsum("r,irj->ij", fac.du, _q_derivative(pipe)) / (2.0 * pipe.F_val)


def _cartan_term(pipe: Pipeline, du: np.ndarray) -> float:
    """(d_r u grad^q u) dQ^{rs}/dy^q g^kl A_skl / F, without the dimension prefactor."""
    dq = _q_derivative(pipe)
    trace_a = np.einsum("kl,skl->s", pipe.g_inv, pipe.cartan)
    grad_up = pipe.g_inv @ du
    return float(np.einsum("r,q,rsq,s->", du, grad_up, dq, trace_a)) / pipe.F_val


def ee9_terms(m: FinslerMetric, u, p: PointState, pipe: Pipeline | None = None) -> ConformalDiagnostics:
    """All ingredients of the R-Einstein preservation residual, plus the residual itself."""
    pipe = pipe or Pipeline(m, p)
    n = pipe.n
    if n < 3:
        raise DimensionError(f"the R-Einstein preservation residual needs n >= 3, got n={n}")
    fac = _Factor(pipe, _as_factor(u))
    g = pipe.g
    hess, lap, norm2 = fac.hessian, fac.laplacian, fac.grad_norm_sq
    cterm = (n - 1) / (2.0 * n * (n - 2)) * _cartan_term(pipe, fac.du)
    residual = (hess - (lap - norm2) / n * g - np.outer(fac.du, fac.du) - cterm * g)
    bmap = np.einsum("r,irj->ij", fac.du, _q_derivative(pipe)) / (2.0 * pipe.F_val)
    return ConformalDiagnostics(hess_u=hess, grad_u=fac.grad_up, grad_norm_sq=norm2,
                                laplacian_h=lap, bmap=bmap, ee9_residual=residual,
                                cartan_term=cterm)


def ee9_residual(m: FinslerMetric, u, p: PointState, pipe: Pipeline | None = None) -> np.ndarray:
    return ee9_terms(m, u, p, pipe).ee9_residual


def hessian_form_residual(m: FinslerMetric, phi, p: PointState,
                          pipe: Pipeline | None = None) -> np.ndarray:
    """Hess(phi) - f g with f = (1/n)[lap phi - (n-1)/(2(n-2)F) (...) g^kl A_skl]."""
    pipe = pipe or Pipeline(m, p)
    n = pipe.n
    if n < 3:
        raise DimensionError(f"the Hessian form needs n >= 3, got n={n}")
    fac = _Factor(pipe, _as_factor(phi))
    f = (fac.laplacian - (n - 1) / (2.0 * (n - 2)) * _cartan_term(pipe, fac.du)) / n
    return fac.hessian - f * pipe.g


def eq122b_gap(pair: ConformalPair, p: PointState) -> np.ndarray:
    """E~ minus the u-dependent prediction from E; the measured remainder term."""
    base = Pipeline(pair.base, p)
    deformed = Pipeline(pair.deformed, p)
    n = base.n
    fac = _Factor(base, _as_factor(pair.u))
    prediction = (base.efree - (n - 2) * (fac.hessian - np.outer(fac.du, fac.du))
                  - (n - 2) / n * (fac.laplacian + fac.grad_norm_sq) * base.g)
    return deformed.efree - prediction


# -- cylinder identity --------------------------------------------------------------

@dataclass
class CylinderReport:
    samples: int
    points: list = field(default_factory=list)
    hessian_residuals: list = field(default_factory=list)
    hessian_form_residuals: list = field(default_factory=list)
    einstein_cylinder: list = field(default_factory=list)
    einstein_partner: list = field(default_factory=list)
    excluded: int = 0

    @property
    def max_hessian_residual(self) -> float:
        return max(self.hessian_residuals, default=0.0)

    @property
    def max_hessian_form_residual(self) -> float:
        return max(self.hessian_form_residuals, default=0.0)


DEGENERATE_WARP = 1e-8


def make_cylinder(m2: FinslerMetric, phi: Callable, eps: float, margin: float = 0.2) -> WarpedProductMetric:
    """((0, eps) x M2, sqrt(y_t^2 + phi'(t)^2 F2^2)) with warping |phi'(t)|."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    margin = min(margin, eps / 4)
    m1 = make_interval(0.0, eps, margin)
    dphi = jets.derivative(phi)
    return WarpedProductMetric(m1, m2, lambda x1: abs(dphi(x1[0])),
                               label=f"cylinder({m2.label})", params={"eps": eps})


def cylinder_check(m2: FinslerMetric, phi: Callable, eps: float, samples: int, *,
                   seed: int = 0, order: int = 4, margin: float = 0.2) -> CylinderReport:
    """Hess(phi) = phi'' g on the cylinder over M2 at sampled points.

    Points where phi' vanishes are excluded with a warning.  The Einstein
    residuals of the cylinder and of its conformal partner phi * F are
    reported alongside.
    """
    cyl = make_cylinder(m2, phi, eps, margin)
    report = CylinderReport(samples=samples)
    if samples <= 0:
        return report
    dphi = jets.derivative(phi)
    ddphi = jets.derivative(dphi)
    u_phi = ScalarFactor.of_coordinate(phi, 0, "phi(t)")
    partner = make_conformal(cyl, ScalarFactor.of_coordinate(lambda t: jets.log(phi(t)), 0))
    for p in cyl.sample_points(samples, seed, order):
        t = p.x[0]
        if abs(dphi(t)) < DEGENERATE_WARP:
            warnings.warn(f"phi'(t) vanishes at t={t:g}; point excluded", RuntimeWarning)
            report.excluded += 1
            continue
        pipe = Pipeline(cyl, p)
        hess = horizontal_hessian(cyl, u_phi, p, pipe)
        report.points.append(p)
        report.hessian_residuals.append(max_abs(hess - ddphi(t) * pipe.g))
        if cyl.dim >= 3:
            report.hessian_form_residuals.append(max_abs(hessian_form_residual(cyl, u_phi, p, pipe)))
        report.einstein_cylinder.append(pipe.einstein_residual)
        if float(phi(t)) > 0:
            report.einstein_partner.append(Pipeline(partner.deformed, p).einstein_residual)
        else:
            report.einstein_partner.append(float("nan"))
    return report
