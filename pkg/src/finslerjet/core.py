"""
Finsler curvature pipeline.

Everything is computed from jets of F^2 in the 2n variables (x, y) at one
point of the slit tangent bundle.  With jet order K:

* g = 1/2 d^2 F^2 / dy dy                  order K-2
* spray G^i, inverse metric                order K-2
* N^i_j = dG^i/dy^j, delta derivatives      order K-3
* Chern coefficients Gamma^i_jk             order K-3
* hh-curvature R_j^i_kl (values)            order K-4

so order 4 is the minimum for curvature.  Index layout of the arrays:
``chern[i, j, k] = Gamma^i_jk``, ``nconn[i, j] = N^i_j`` and
``hh_curv[j, i, k, l] = R_j^i_kl``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .jets import Jet, contract, inv, seed_variables

HOMOGENEITY_FACTORS = (0.5, 2.0, 7.0)


class MetricError(ValueError):
    """The metric is not a valid Finsler metric at the requested point."""


@dataclass(frozen=True)
class PointState:
    """A point (x, y) of the slit tangent bundle together with the jet order."""

    x: tuple
    y: tuple
    order: int = 4

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if len(self.x) == 0 or len(self.x) != len(self.y):
            raise ValueError("x and y must be non-empty and of equal length")
        if not np.linalg.norm(self.y) > 0:
            raise ValueError("y must be nonzero (slit tangent bundle)")
        if self.order < 1:
            raise ValueError("jet order must be at least 1")

    @property
    def n(self) -> int:
        return len(self.x)

    def scaled(self, c: float) -> "PointState":
        return PointState(self.x, tuple(c * v for v in self.y), self.order)

    def with_order(self, order: int) -> "PointState":
        return PointState(self.x, self.y, order)


def unit_sphere_direction(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n)
    while np.linalg.norm(v) < 1e-8:
        v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


class FinslerMetric:
    """A Finsler function F(x, y) given by a callable on floats or jets.

    ``func(x, y)`` receives sequences of n coordinates each (floats or scalar
    jets) and returns F, or F^2 when ``squared`` is true.  Supplying F^2
    directly keeps quadratic metrics free of square roots.  ``x_box`` is the
    coordinate box used by the default sampler; a custom ``sampler(rng)``
    returning ``(x, y)`` overrides it.
    """

    def __init__(self, dim: int, func: Callable, *, squared: bool = False, label: str = "finsler",
                 x_box: Sequence[tuple] | None = None, sampler: Callable | None = None,
                 params: dict | None = None):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = dim
        self.func = func
        self.squared = squared
        self.label = label
        self.x_box = [tuple(map(float, b)) for b in (x_box or [(-1.0, 1.0)] * dim)]
        if len(self.x_box) != dim:
            raise ValueError("x_box must have one interval per coordinate")
        self._sampler = sampler
        self.params = dict(params or {})

    def __repr__(self):
        return f"{type(self).__name__}(label={self.label!r}, dim={self.dim})"

    def F(self, x, y):
        v = self.func(x, y)
        if self.squared:
            return np.sqrt(v) if not isinstance(v, Jet) else v.sqrt()
        return v

    evaluate = F

    def F2(self, x, y):
        v = self.func(x, y)
        return v if self.squared else v * v

    def domain_sampler(self, rng: np.random.Generator):
        if self._sampler is not None:
            return self._sampler(rng)
        x = np.array([rng.uniform(lo, hi) for lo, hi in self.x_box])
        return x, unit_sphere_direction(rng, self.dim)

    def sample_points(self, count: int, seed: int = 0, order: int = 4,
                      y_scale: float = 1.0) -> list[PointState]:
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(count):
            x, y = self.domain_sampler(rng)
            out.append(PointState(tuple(x), tuple(y_scale * np.asarray(y)), order))
        return out


def _as_jet(v, like: Jet) -> Jet:
    if isinstance(v, Jet):
        return v
    return Jet.constant(float(v), like.num_vars, like.order)


def _split_xy(grad: Jet, n: int):
    """Split the trailing derivative axis of a gradient jet into x and y parts."""
    c = grad.coeffs
    return Jet(grad.space, c[..., :n, :]), Jet(grad.space, c[..., n:, :])


def max_abs(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.max(np.abs(a))) if a.size else 0.0


def scaled_residual(res, ref) -> float:
    return max_abs(res) / max(1.0, max_abs(ref))


class Pipeline:
    """Lazily evaluated curvature stages of one metric at one point.

    Stages are computed on first access and cached, so several operations
    can share one pipeline.
    """

    def __init__(self, metric: FinslerMetric, point: PointState):
        if point.n != metric.dim:
            raise ValueError(f"point has dimension {point.n}, metric has {metric.dim}")
        self.metric = metric
        self.point = point
        self.n = point.n
        self.order = point.order
        seeds = seed_variables(point.x, point.y, point.order)
        self.xs = seeds[: self.n]
        self.ys = seeds[self.n:]

    def _need(self, k, what):
        if self.order < k:
            raise ValueError(f"{what} needs jet order >= {k}, got {self.order}")

    def evaluate(self, field: Callable) -> Jet:
        """Evaluate a (x, y) -> scalar callable as a jet at this point."""
        return _as_jet(field(self.xs, self.ys), self.xs[0])

    # -- metric -------------------------------------------------------------

    @cached_property
    def F2_jet(self) -> Jet:
        return self.evaluate(self.metric.F2)

    @cached_property
    def F_val(self) -> float:
        v = self.F2_jet.value
        if not v > 0:
            raise MetricError(f"F^2 = {v} is not positive at {self.point}")
        return float(np.sqrt(v))

    @cached_property
    def _hessian(self) -> Jet:
        self._need(2, "the fundamental tensor")
        return self.F2_jet.gradient().gradient()

    @cached_property
    def g_jet(self) -> Jet:
        n = self.n
        h = Jet(self._hessian.space, self._hessian.coeffs[n:, n:])
        return 0.25 * (h + h.T)

    @cached_property
    def g(self) -> np.ndarray:
        g = self.g_jet.value
        eig = np.linalg.eigvalsh(g)
        if not eig[0] > 0:
            raise MetricError(
                f"fundamental tensor not positive definite at {self.point} "
                f"(smallest eigenvalue {eig[0]:.3e})")
        return g

    @cached_property
    def g_inv_jet(self) -> Jet:
        self.g  # positive-definiteness check
        return inv(self.g_jet)

    @cached_property
    def g_inv(self) -> np.ndarray:
        return self.g_inv_jet.value

    @cached_property
    def cartan(self) -> np.ndarray:
        self._need(3, "the Cartan tensor")
        dg = self.g_jet.gradient().value[:, :, self.n:]
        return 0.5 * self.F_val * dg

    # -- connection -----------------------------------------------------------

    @cached_property
    def spray_jet(self) -> Jet:
        self._need(3, "the spray")
        n, k = self.n, self.order - 2
        h = self._hessian
        fxy = Jet(h.space, h.coeffs[n:, :n])  # [l, k] = d2F2/dy^l dx^k
        fx, _ = _split_xy(self.F2_jet.gradient(), n)
        fx = fx.truncate(k)
        y = Jet.stack([v.truncate(k) for v in self.ys])
        bracket = contract("lk,k->l", fxy, y) - fx
        return 0.25 * contract("il,l->i", self.g_inv_jet, bracket)

    @cached_property
    def spray(self) -> np.ndarray:
        return self.spray_jet.value

    @cached_property
    def nconn_jet(self) -> Jet:
        _, dy = _split_xy(self.spray_jet.gradient(), self.n)
        return dy  # [i, j] = dG^i/dy^j

    @cached_property
    def nconn(self) -> np.ndarray:
        return self.nconn_jet.value

    def delta(self, target: Jet) -> Jet:
        """delta/delta x^k of a jet field; the result gains a trailing axis k."""
        if target.order < 1:
            raise ValueError("delta derivative needs a jet of order >= 1")
        dx, dy = _split_xy(target.gradient(), self.n)
        k = min(dx.order, self.nconn_jet.order)
        return dx.truncate(k) - contract("...j,jk->...k", dy.truncate(k), self.nconn_jet.truncate(k))

    @cached_property
    def dg_jet(self) -> Jet:
        return self.delta(self.g_jet)  # [i, j, k] = delta_k g_ij

    @cached_property
    def chern_jet(self) -> Jet:
        d = self.dg_jet
        comb = d.transpose(0, 2, 1) + d.transpose(2, 1, 0) - d
        # comb[j, k, l] = d_k g_jl + d_j g_lk - d_l g_jk
        ginv = self.g_inv_jet.truncate(d.order)
        return 0.5 * contract("il,jkl->ijk", ginv, comb)

    @cached_property
    def chern(self) -> np.ndarray:
        return self.chern_jet.value

    # -- curvature --------------------------------------------------------------

    @cached_property
    def hh_curv(self) -> np.ndarray:
        self._need(4, "the hh-curvature")
        gam = self.chern
        dgam = self.delta(self.chern_jet).value  # [i, j, k, m] = delta_m Gamma^i_jk
        a = np.einsum("ijlk->jikl", dgam)
        b = np.einsum("ijkl->jikl", dgam)
        q = np.einsum("ikm,mjl->ikjl", gam, gam)
        c = np.einsum("ikjl->jikl", q)
        d = np.einsum("iljk->jikl", q)
        return (a - b) + (c - d)

    @cached_property
    def hh_lowered(self) -> np.ndarray:
        """R_{j m k l} = g_{m i} R_j^i_kl."""
        return np.einsum("mi,jikl->jmkl", self.g, self.hh_curv)

    @cached_property
    def ricci(self) -> np.ndarray:
        return np.einsum("jkkl->jl", self.hh_curv)

    @cached_property
    def scal(self) -> float:
        return float(np.einsum("jl,jl->", self.g_inv, self.ricci))

    @cached_property
    def efree(self) -> np.ndarray:
        return self.ricci - (self.scal / self.n) * self.g

    @cached_property
    def einstein_residual(self) -> float:
        return scaled_residual(self.efree, self.ricci)


# -- operations --------------------------------------------------------------

def fundamental_tensor(m: FinslerMetric, p: PointState):
    pipe = Pipeline(m, p)
    return pipe.g, pipe.g_inv


def cartan_tensor(m: FinslerMetric, p: PointState) -> np.ndarray:
    return Pipeline(m, p).cartan


def spray_and_nonlinear_connection(m: FinslerMetric, p: PointState):
    pipe = Pipeline(m, p)
    return pipe.spray, pipe.nconn


def delta_derivative(m: FinslerMetric, p: PointState, target: Callable, i: int):
    """delta f / delta x^i for a field ``target(x, y)`` evaluated on jets."""
    if not 0 <= i < m.dim:
        raise IndexError(f"index {i} out of range for dimension {m.dim}")
    pipe = Pipeline(m, p)
    d = pipe.delta(pipe.evaluate(target)).value
    return float(d[i]) if np.ndim(d) == 1 else d[..., i]


def chern_coefficients(m: FinslerMetric, p: PointState) -> np.ndarray:
    return Pipeline(m, p).chern


def hh_curvature(m: FinslerMetric, p: PointState) -> np.ndarray:
    return Pipeline(m, p).hh_curv


def ricci_scalar_einstein(m: FinslerMetric, p: PointState):
    pipe = Pipeline(m, p)
    return pipe.ricci, pipe.scal, pipe.efree, pipe.einstein_residual


@dataclass
class CurvatureReport:
    F_val: float
    g: np.ndarray
    g_inv: np.ndarray
    cartan: np.ndarray
    spray: np.ndarray
    nconn: np.ndarray
    chern: np.ndarray
    hh_curv: np.ndarray
    ricci: np.ndarray
    scal: float
    efree: np.ndarray
    einstein_residual: float
    diagnostics: dict = field(default_factory=dict)


def property_residuals(pipe: Pipeline) -> dict:
    """Residuals of the structural identities at the pipeline's point."""
    m, p, n = pipe.metric, pipe.point, pipe.n
    x, y = np.array(p.x), np.array(p.y)
    F = pipe.F_val
    g, g_inv, A, gam = pipe.g, pipe.g_inv, pipe.cartan, pipe.chern
    out = {}

    out["homogeneity_F"] = max(
        abs(float(m.F(x, c * y)) - c * F) / F for c in HOMOGENEITY_FACTORS)
    out["homogeneity_g"] = max(
        scaled_residual(Pipeline(m, PointState(p.x, tuple(c * y), 2)).g - g, g)
        for c in HOMOGENEITY_FACTORS)
    out["euler"] = abs(float(y @ g @ y) - F * F) / (F * F)
    out["g_inverse"] = max_abs(g_inv @ g - np.eye(n))

    perms = [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    out["cartan_symmetry"] = max(max_abs(A - A.transpose(q)) for q in perms)
    out["cartan_y"] = max_abs(A @ y)

    out["connection_symmetry"] = max_abs(gam - gam.transpose(0, 2, 1))
    dg = pipe.dg_jet.value
    compat = dg - np.einsum("mj,mik->ijk", g, gam) - np.einsum("im,mjk->ijk", g, gam)
    out["compatibility"] = scaled_residual(compat, dg)
    out["n_gamma"] = scaled_residual(pipe.nconn - gam @ y, pipe.nconn)
    out["delta_F2"] = scaled_residual(pipe.delta(pipe.F2_jet).value, F * F)

    if pipe.order >= 4:
        R = pipe.hh_curv
        out["hh_antisymmetry"] = max_abs(R + R.transpose(0, 1, 3, 2))
        out["efree_trace"] = scaled_residual(np.einsum("ij,ij->", g_inv, pipe.efree), pipe.ricci)
    return out


def full_report(m: FinslerMetric, p: PointState) -> CurvatureReport:
    pipe = Pipeline(m, p)
    return CurvatureReport(
        F_val=pipe.F_val, g=pipe.g, g_inv=pipe.g_inv, cartan=pipe.cartan,
        spray=pipe.spray, nconn=pipe.nconn, chern=pipe.chern, hh_curv=pipe.hh_curv,
        ricci=pipe.ricci, scal=pipe.scal, efree=pipe.efree,
        einstein_residual=pipe.einstein_residual,
        diagnostics=property_residuals(pipe),
    )
