"""
Finite-difference Riemannian reference values.

Works on the plain float matrix of a :class:`~finslerjet.zoo.RiemannianField`
and never touches jets, so agreement with the Finsler pipeline on Riemannian
wrappers is an independent check.  Conventions::

    christoffel[i, j, k]        = Gamma^i_jk
    riemann_lowered[i, j, k, l] = g_im R^m_jkl,
    R^i_jkl = d_k Gamma^i_lj - d_l Gamma^i_kj + Gamma^i_km Gamma^m_lj - Gamma^i_lm Gamma^m_kj
    ricci[j, l]                 = R^k_jkl

Derivatives are central differences with one Richardson step.  First
derivatives use h = 1e-4 (truncation ~1e-16, rounding ~1e-12); second
derivatives use h2 = 1e-3 so that rounding (~eps/h2^2) stays near 1e-10.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

STEP = 1e-4
STEP2 = 1e-3


def _richardson(d_h, d_2h):
    return (4.0 * d_h - d_2h) / 3.0


def fd_gradient(f: Callable, x, h: float = STEP) -> np.ndarray:
    """d f / d x^k stacked on a trailing axis."""
    x = np.asarray(x, dtype=float)
    n = x.size

    def central(step):
        cols = []
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * step))
        return np.stack(cols, axis=-1)

    return _richardson(central(h), central(2 * h))


def fd_hessian(f: Callable, x, h: float = STEP2) -> np.ndarray:
    """d^2 f / d x^k d x^l stacked on two trailing axes."""
    x = np.asarray(x, dtype=float)
    n = x.size
    f0 = np.asarray(f(x))

    def second(step):
        out = np.empty(f0.shape + (n, n))
        for k in range(n):
            ek = np.zeros(n)
            ek[k] = step
            out[..., k, k] = (np.asarray(f(x + ek)) - 2 * f0 + np.asarray(f(x - ek))) / step ** 2
            for m in range(k + 1, n):
                em = np.zeros(n)
                em[m] = step
                v = (np.asarray(f(x + ek + em)) - np.asarray(f(x + ek - em))
                     - np.asarray(f(x - ek + em)) + np.asarray(f(x - ek - em))) / (4 * step ** 2)
                out[..., k, m] = v
                out[..., m, k] = v
        return out

    return _richardson(second(h), second(2 * h))


def _metric_derivs(field, x, h, h2):
    g = field.matrix(x)
    dg = fd_gradient(field.matrix, x, h)       # [i, j, k] = d_k g_ij
    ddg = fd_hessian(field.matrix, x, h2)      # [i, j, k, l] = d_k d_l g_ij
    return g, dg, ddg


def _christoffel(g_inv, dg):
    comb = dg.transpose(0, 2, 1) + dg.transpose(2, 1, 0) - dg
    return 0.5 * np.einsum("il,jkl->ijk", g_inv, comb)


def levi_civita_fd(field, x, h: float = STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = field.matrix(x)
    dg = fd_gradient(field.matrix, x, h)
    return _christoffel(np.linalg.inv(g), dg)


@dataclass
class RiemannOracleReport:
    christoffel: np.ndarray
    riemann_lowered: np.ndarray
    ricci: np.ndarray
    scal: float
    cov_hessian: np.ndarray | None = None
    g: np.ndarray | None = None

    @property
    def einstein_free(self) -> np.ndarray:
        n = self.ricci.shape[0]
        return self.ricci - (self.scal / n) * self.g

    def bianchi_residual(self) -> float:
        R = self.riemann_lowered
        cyc = R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2)
        return float(np.max(np.abs(cyc)))


def riemann_ricci_fd(field, x, u: Callable | None = None,
                     h: float = STEP, h2: float = STEP2) -> RiemannOracleReport:
    """Curvature of a Riemannian field at x, plus the covariant Hessian of ``u`` if given."""
    x = np.asarray(x, dtype=float)
    g, dg, ddg = _metric_derivs(field, x, h, h2)
    g_inv = np.linalg.inv(g)
    gam = _christoffel(g_inv, dg)

    # d_m Gamma^i_jk
    dg_inv = -np.einsum("ia,abm,bl->ilm", g_inv, dg, g_inv)
    comb = dg.transpose(0, 2, 1) + dg.transpose(2, 1, 0) - dg
    dcomb = (ddg.transpose(0, 2, 1, 3) + ddg.transpose(2, 1, 0, 3) - ddg)  # [j, k, l, m]
    dgam = 0.5 * (np.einsum("ilm,jkl->ijkm", dg_inv, comb)
                  + np.einsum("il,jklm->ijkm", g_inv, dcomb))

    # R^i_jkl
    riem = (np.einsum("iljk->ijkl", dgam) - np.einsum("ikjl->ijkl", dgam)
            + np.einsum("ikm,mlj->ijkl", gam, gam) - np.einsum("ilm,mkj->ijkl", gam, gam))
    lowered = np.einsum("im,mjkl->ijkl", g, riem)
    ricci = np.einsum("kjkl->jl", riem)
    scal = float(np.einsum("jl,jl->", g_inv, ricci))

    hess = None
    if u is not None:
        uf = lambda z: float(u(list(z)))
        du = fd_gradient(uf, x, h)
        ddu = fd_hessian(uf, x, h2)
        hess = ddu - np.einsum("kij,k->ij", gam, du)
    return RiemannOracleReport(gam, lowered, ricci, scal, hess, g)


def conformal_efree_prediction(field, x, u: Callable) -> dict:
    """Trace-free Ricci of e^{2u} g predicted by the classical conformal identity.

    For g~ = e^{2u} g in dimension n,
    E~ = E - (n-2) [ (Hess u - du du) - (1/n)(lap u - |du|^2) g ].
    Returns the prediction together with its inputs.
    """
    rep = riemann_ricci_fd(field, x, u)
    n = rep.g.shape[0]
    uf = lambda z: float(u(list(z)))
    du = fd_gradient(uf, np.asarray(x, float))
    g_inv = np.linalg.inv(rep.g)
    lap = float(np.einsum("ij,ij->", g_inv, rep.cov_hessian))
    norm2 = float(du @ g_inv @ du)
    pred = rep.einstein_free - (n - 2) * (
        (rep.cov_hessian - np.outer(du, du)) - (lap - norm2) / n * rep.g)
    return {"prediction": pred, "efree": rep.einstein_free, "hessian": rep.cov_hessian,
            "laplacian": lap, "grad_norm_sq": norm2}
