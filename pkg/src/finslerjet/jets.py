"""
Truncated multivariate Taylor series ("jets").

A :class:`Jet` holds the Taylor coefficients of a smooth function of
``num_vars`` variables around an expansion point, up to a fixed total
``order``.  Coefficients are stored densely in graded-lexicographic order::

    f(p + h) = sum_alpha  c_alpha * h**alpha,     |alpha| <= order

so that ``c_alpha * alpha!`` is the mixed partial derivative of ``f`` at ``p``.

Jets may carry a leading tensor shape (``Jet.shape``), in which case the
coefficient array has shape ``shape + (ncoeffs,)`` and arithmetic broadcasts
like numpy.  Because storage is graded, truncating to a lower order is a
slice of the coefficient axis and differentiating lowers the order by one.

Elementary functions (``sqrt``, ``exp``, ``log``, ``sin``, ``cos``,
``power``) are exposed as module-level functions that accept jets as well as
plain floats and arrays; metric definitions written against them can be
evaluated both ways.
"""
from __future__ import annotations

import math
from functools import lru_cache
from itertools import product
from typing import Callable, Sequence

import numpy as np

MultiIndex = tuple  # tuple[int, ...] of length num_vars


class JetShapeError(ValueError):
    """Operands do not share (num_vars, order)."""


class JetDomainError(ValueError):
    """An elementary function was evaluated outside its domain."""


def multi_indices(num_vars: int, order: int) -> list[MultiIndex]:
    """All exponent tuples of total degree <= order, graded-lex ordered.

    Within one degree the tuples are sorted in descending lexicographic order,
    so ``(1, 0)`` precedes ``(0, 1)``.
    """
    out = []
    for d in range(order + 1):
        block = [a for a in _compositions(d, num_vars)]
        block.sort(reverse=True)
        out.extend(block)
    return out


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


class JetSpace:
    """Index tables shared by every jet with a given (num_vars, order)."""

    def __init__(self, num_vars: int, order: int):
        if num_vars < 1:
            raise ValueError("num_vars must be positive")
        if order < 0:
            raise ValueError("order must be non-negative")
        self.num_vars = num_vars
        self.order = order
        self.indices = multi_indices(num_vars, order)
        self.size = len(self.indices)
        self.exponents = np.array(self.indices, dtype=np.int64).reshape(self.size, num_vars)
        self.degrees = self.exponents.sum(axis=1)
        self.position = {a: i for i, a in enumerate(self.indices)}
        self.factorials = np.array(
            [math.prod(math.factorial(e) for e in a) for a in self.indices], dtype=float)

        # base-(order+1) code of a multi-index; sums of two indices of joint
        # degree <= order never carry, so codes add.
        base = order + 1
        self._weights = base ** np.arange(num_vars, dtype=np.int64)
        codes = self.exponents @ self._weights
        lookup = np.full(int(codes.max()) + 1 if self.size else 1, -1, dtype=np.int64)
        lookup[codes] = np.arange(self.size)

        deg_sum = self.degrees[:, None] + self.degrees[None, :]
        left, right = np.nonzero(deg_sum <= order)
        target = lookup[codes[left] + codes[right]]
        perm = np.argsort(target, kind="stable")
        self.mul_left = left[perm]
        self.mul_right = right[perm]
        target = target[perm]
        # every target k has at least the pair (k, 0)
        self.mul_starts = np.searchsorted(target, np.arange(self.size))

        if order >= 1:
            lower = space(num_vars, order - 1)
            src = np.empty((num_vars, lower.size), dtype=np.int64)
            fac = np.empty((num_vars, lower.size), dtype=float)
            for v in range(num_vars):
                shifted = lower.exponents.copy()
                shifted[:, v] += 1
                src[v] = lookup[shifted @ self._weights]
                fac[v] = shifted[:, v]
            self.diff_source = src
            self.diff_factor = fac
        else:
            self.diff_source = None
            self.diff_factor = None

    def __repr__(self):
        return f"JetSpace(num_vars={self.num_vars}, order={self.order})"


@lru_cache(maxsize=None)
def space(num_vars: int, order: int) -> JetSpace:
    return JetSpace(num_vars, order)


class Jet:
    """Immutable truncated Taylor expansion, optionally tensor-valued."""

    __slots__ = ("space", "coeffs")
    __array_ufunc__ = None

    def __init__(self, jspace: JetSpace, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1:] != (jspace.size,):
            raise JetShapeError(
                f"coefficient axis has length {coeffs.shape[-1:]}, expected {jspace.size}")
        self.space = jspace
        self.coeffs = coeffs

    # -- construction -----------------------------------------------------

    @classmethod
    def constant(cls, value, num_vars: int, order: int) -> "Jet":
        js = space(num_vars, order)
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (js.size,))
        c[..., 0] = value
        return cls(js, c)

    @classmethod
    def variable(cls, value: float, slot: int, num_vars: int, order: int) -> "Jet":
        js = space(num_vars, order)
        if not 0 <= slot < num_vars:
            raise IndexError(f"slot {slot} out of range for {num_vars} variables")
        c = np.zeros(js.size)
        c[0] = value
        if order >= 1:
            c[1 + slot] = 1.0
        return cls(js, c)

    @classmethod
    def stack(cls, jets: Sequence["Jet"], axis: int = 0) -> "Jet":
        jets = list(jets)
        js = jets[0].space
        for j in jets[1:]:
            _check_same(js, j.space)
        if axis < 0:
            axis -= 1
        return cls(js, np.stack([j.coeffs for j in jets], axis=axis))

    # -- inspection -------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return self.space.num_vars

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.coeffs.ndim - 1

    @property
    def value(self):
        v = self.coeffs[..., 0]
        return float(v) if v.ndim == 0 else v.copy()

    def coefficient(self, idx: MultiIndex):
        pos = self._position(idx)
        v = self.coeffs[..., pos]
        return float(v) if v.ndim == 0 else v.copy()

    def partial(self, idx: MultiIndex):
        """The mixed partial derivative d^|idx| f / dx^idx at the expansion point."""
        pos = self._position(idx)
        v = self.coeffs[..., pos] * self.space.factorials[pos]
        return float(v) if v.ndim == 0 else v

    def _position(self, idx):
        idx = tuple(int(i) for i in idx)
        if len(idx) != self.num_vars:
            raise JetShapeError(f"multi-index {idx} has wrong length for {self.num_vars} variables")
        if min(idx) < 0:
            raise ValueError(f"negative exponent in {idx}")
        if sum(idx) > self.order:
            raise ValueError(f"degree of {idx} exceeds jet order {self.order}")
        return self.space.position[idx]

    def __repr__(self):
        if self.ndim == 0:
            nz = {a: float(c) for a, c in zip(self.space.indices, self.coeffs) if c != 0}
            return f"Jet(num_vars={self.num_vars}, order={self.order}, coeffs={nz})"
        return f"Jet(num_vars={self.num_vars}, order={self.order}, shape={self.shape})"

    # -- structural ops ---------------------------------------------------

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            raise IndexError("Ellipsis indexing is not supported on jets")
        return Jet(self.space, self.coeffs[key + (slice(None),)])

    def __len__(self):
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def T(self) -> "Jet":
        return self.transpose()

    def transpose(self, *axes) -> "Jet":
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Jet(self.space, self.coeffs.transpose(tuple(axes) + (self.ndim,)))

    def sum(self, axis=None) -> "Jet":
        if axis is None:
            axis = tuple(range(self.ndim))
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a - 1 if a < 0 else a for a in axes)
        return Jet(self.space, self.coeffs.sum(axis=axes))

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order from {self.order} to {order}")
        if order == self.order:
            return self
        js = space(self.num_vars, order)
        return Jet(js, self.coeffs[..., : js.size])

    def diff(self, var: int) -> "Jet":
        """Derivative with respect to variable ``var``; the order drops by one."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        if not 0 <= var < self.num_vars:
            raise IndexError(f"variable {var} out of range")
        js = self.space
        lower = space(self.num_vars, self.order - 1)
        return Jet(lower, self.coeffs[..., js.diff_source[var]] * js.diff_factor[var])

    def gradient(self) -> "Jet":
        """All first derivatives stacked on a new trailing axis (length num_vars)."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        js = self.space
        lower = space(self.num_vars, self.order - 1)
        return Jet(lower, self.coeffs[..., js.diff_source] * js.diff_factor)

    # -- arithmetic -------------------------------------------------------

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            _check_same(self.space, other.space)
            return other
        other = np.asarray(other, dtype=float)
        c = np.zeros(other.shape + (self.space.size,))
        c[..., 0] = other
        return Jet(self.space, c)

    def __add__(self, other):
        if not isinstance(other, Jet):
            if np.ndim(other) == 0:
                c = self.coeffs.copy()
                c[..., 0] += other
                return Jet(self.space, c)
            other = self._lift(other)
        _check_same(self.space, other.space)
        return Jet(self.space, self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.coeffs)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet(self.space, self.coeffs * other[..., None])
        _check_same(self.space, other.space)
        js = self.space
        prod = self.coeffs[..., js.mul_left] * other.coeffs[..., js.mul_right]
        return Jet(js, np.add.reduceat(prod, js.mul_starts, axis=-1))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            if np.any(other == 0):
                raise JetDomainError("division by zero")
            return Jet(self.space, self.coeffs / other[..., None])
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, r):
        if isinstance(r, (int, np.integer)) and r >= 0:
            out = self._lift(1.0) if r == 0 else None
            base, e = self, int(r)
            while e:
                if e & 1:
                    out = base if out is None else out * base
                e >>= 1
                if e:
                    base = base * base
            return out
        return self.power(r)

    # -- elementary functions ---------------------------------------------

    def compose(self, taylor) -> "Jet":
        """Apply a univariate function given its Taylor coefficients at self.value.

        ``taylor`` has shape ``self.shape + (k,)`` (or ``(k,)``) and holds
        ``f^(m)(value)/m!``; entries beyond ``self.order`` are ignored.
        """
        taylor = np.asarray(taylor, dtype=float)
        K = self.order
        nil = Jet(self.space, self.coeffs.copy())
        nil.coeffs[..., 0] = 0.0
        top = min(K, taylor.shape[-1] - 1)
        out = Jet(self.space, np.zeros(self.coeffs.shape)) + taylor[..., top]
        for m in range(top - 1, -1, -1):
            out = out * nil + taylor[..., m]
        return out

    def _taylor_shape(self):
        return self.coeffs.shape[:-1] + (self.order + 1,)

    def reciprocal(self) -> "Jet":
        a0 = self.coeffs[..., 0]
        if np.any(a0 == 0):
            raise JetDomainError("division by a jet with zero value")
        m = np.arange(self.order + 1)
        t = (-1.0) ** m / a0[..., None] ** (m + 1)
        return self.compose(t)

    def power(self, r: float) -> "Jet":
        r = float(r)
        a0 = self.coeffs[..., 0]
        if r.is_integer() and r >= 0:
            return self ** int(r)
        if r.is_integer():
            if np.any(a0 == 0):
                raise JetDomainError(f"power {r} of a jet with zero value")
        elif np.any(a0 <= 0):
            raise JetDomainError(f"non-integer power {r} needs a positive value")
        t = np.empty(self._taylor_shape())
        binom = 1.0
        for m in range(self.order + 1):
            t[..., m] = binom * a0 ** (r - m)
            binom *= (r - m) / (m + 1)
        return self.compose(t)

    def sqrt(self) -> "Jet":
        if np.any(self.coeffs[..., 0] <= 0):
            raise JetDomainError("sqrt needs a positive value")
        return self.power(0.5)

    def exp(self) -> "Jet":
        a0 = self.coeffs[..., 0]
        m = np.arange(self.order + 1)
        fact = np.array([math.factorial(k) for k in m], dtype=float)
        return self.compose(np.exp(a0)[..., None] / fact)

    def log(self) -> "Jet":
        a0 = self.coeffs[..., 0]
        if np.any(a0 <= 0):
            raise JetDomainError("log needs a positive value")
        t = np.empty(self._taylor_shape())
        t[..., 0] = np.log(a0)
        for m in range(1, self.order + 1):
            t[..., m] = (-1.0) ** (m + 1) / (m * a0 ** m)
        return self.compose(t)

    def _trig(self, shift):
        a0 = self.coeffs[..., 0]
        cycle = (np.sin(a0), np.cos(a0), -np.sin(a0), -np.cos(a0))
        t = np.empty(self._taylor_shape())
        for m in range(self.order + 1):
            t[..., m] = cycle[(m + shift) % 4] / math.factorial(m)
        return self.compose(t)

    def sin(self) -> "Jet":
        return self._trig(0)

    def cos(self) -> "Jet":
        return self._trig(1)

    def __abs__(self) -> "Jet":
        a0 = self.coeffs[..., 0]
        if np.any(a0 == 0):
            raise JetDomainError("abs is not smooth at zero")
        return self * np.sign(a0)


def _check_same(a: JetSpace, b: JetSpace):
    if a is not b and (a.num_vars != b.num_vars or a.order != b.order):
        raise JetShapeError(
            f"jet shape mismatch: (num_vars={a.num_vars}, order={a.order}) vs "
            f"(num_vars={b.num_vars}, order={b.order})")


JetScalar = Jet


# -- module-level API ------------------------------------------------------

def seed_variables(x: Sequence[float], y: Sequence[float], order: int = 4) -> list[Jet]:
    """Independent-variable jets for the 2n coordinates (x^1..x^n, y^1..y^n)."""
    x = list(x)
    y = list(y)
    if len(x) == 0 or len(y) == 0:
        raise ValueError("x and y must be non-empty")
    if len(x) != len(y):
        raise ValueError(f"x and y must have equal length, got {len(x)} and {len(y)}")
    if order < 1:
        raise ValueError("order must be at least 1")
    nv = 2 * len(x)
    return [Jet.variable(float(v), k, nv, order) for k, v in enumerate(x + y)]


def jet_arith(a: Jet, b: Jet, op: str) -> Jet:
    ops = {"add": Jet.__add__, "sub": Jet.__sub__, "mul": Jet.__mul__, "div": Jet.__truediv__}
    if op not in ops:
        raise ValueError(f"unknown operation {op!r}")
    if isinstance(a, Jet) and isinstance(b, Jet):
        _check_same(a.space, b.space)
    return ops[op](a, b)


def jet_func(a: Jet, f: str, r: float | None = None) -> Jet:
    if f == "pow":
        if r is None:
            raise ValueError("pow needs an exponent")
        return a.power(r)
    try:
        method = {"sqrt": Jet.sqrt, "exp": Jet.exp, "log": Jet.log,
                  "sin": Jet.sin, "cos": Jet.cos}[f]
    except KeyError:
        raise ValueError(f"unknown function {f!r}") from None
    return method(a)


def extract_partial(a: Jet, idx: MultiIndex):
    return a.partial(idx)


def contract(subscripts: str, a, b) -> Jet:
    """einsum of two operands, at least one of which is a jet.

    ``subscripts`` refers to the tensor axes only, e.g. ``"il,jkl->ijk"``.
    """
    inputs, output = subscripts.replace(" ", "").split("->")
    sa, sb = inputs.split(",")
    if isinstance(a, Jet) and isinstance(b, Jet):
        _check_same(a.space, b.space)
        js = a.space
        ga = a.coeffs[..., js.mul_left]
        gb = b.coeffs[..., js.mul_right]
        prod = np.einsum(f"{sa}Z,{sb}Z->{output}Z", ga, gb)
        return Jet(js, np.add.reduceat(prod, js.mul_starts, axis=-1))
    if isinstance(a, Jet):
        return Jet(a.space, np.einsum(f"{sa}Z,{sb}->{output}Z", a.coeffs, np.asarray(b, float)))
    if isinstance(b, Jet):
        return Jet(b.space, np.einsum(f"{sa},{sb}Z->{output}Z", np.asarray(a, float), b.coeffs))
    raise TypeError("contract needs at least one jet operand")


def inv(a: Jet) -> Jet:
    """Inverse of a square jet-valued matrix.

    The constant part is inverted by LU with partial pivoting; the nilpotent
    remainder is handled by the terminating Neumann series.
    """
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise JetShapeError(f"inv needs a square matrix jet, got shape {a.shape}")
    a0 = a.coeffs[..., 0]
    x0 = np.linalg.inv(a0)
    nil = Jet(a.space, a.coeffs.copy())
    nil.coeffs[..., 0] = 0.0
    step = -contract("ij,jk->ik", x0, nil)
    term = Jet.constant(x0, a.num_vars, a.order)
    out = term
    for _ in range(a.order):
        term = contract("ij,jk->ik", step, term)
        out = out + term
    return out


# -- float/jet dispatch ------------------------------------------------------

def _dispatch(name, npfunc):
    def f(a):
        if isinstance(a, Jet):
            return getattr(a, name)()
        return npfunc(a)
    f.__name__ = name
    f.__doc__ = f"{name} of a jet, float or array."
    return f


sqrt = _dispatch("sqrt", np.sqrt)
exp = _dispatch("exp", np.exp)
log = _dispatch("log", np.log)
sin = _dispatch("sin", np.sin)
cos = _dispatch("cos", np.cos)


def power(a, r):
    if isinstance(a, Jet):
        return a.power(r)
    return np.power(a, r)


def taylor_coefficients(func: Callable, t0: float, order: int) -> np.ndarray:
    """Coefficients f^(m)(t0)/m!, m = 0..order, of a univariate function."""
    t = Jet.variable(t0, 0, 1, order)
    val = func(t)
    if not isinstance(val, Jet):
        out = np.zeros(order + 1)
        out[0] = float(val)
        return out
    return val.coeffs.copy()


def derivative(func: Callable) -> Callable:
    """The derivative of a univariate function, as a function of a float or jet."""
    def dfunc(t):
        if isinstance(t, Jet):
            if t.ndim != 0:
                raise JetShapeError("derivative() composes with scalar jets only")
            c = taylor_coefficients(func, t.value, t.order + 1)
            return t.compose(c[1:] * np.arange(1, t.order + 2))
        return float(taylor_coefficients(func, float(t), 1)[1])
    return dfunc


# -- finite-difference oracle ----------------------------------------------

_STENCILS = {
    0: ((0,), (1.0,)),
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}

_DEFAULT_STEP = {0: 1.0, 1: 1e-3, 2: 2e-3, 3: 5e-3, 4: 1e-2}


def _central(f, point, idx, h):
    axes = [(v, e) for v, e in enumerate(idx) if e > 0]
    total = 0.0
    for combo in product(*(zip(*_STENCILS[e]) for _, e in axes)):
        p = point.copy()
        w = 1.0
        for (v, _), (off, coef) in zip(axes, combo):
            p[v] += off * h
            w *= coef
        val = f(p)
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite function value at {p}")
        total += w * val
    return total / h ** sum(idx)


def fd_partial(f: Callable, point: Sequence[float], idx: MultiIndex, h: float | None = None) -> float:
    """Central finite-difference estimate of a mixed partial derivative.

    Each differentiated direction uses the second-order central stencil of
    its derivative order; one Richardson step (h, 2h) cancels the h**2 term,
    leaving an O(h**4) truncation error plus rounding of order eps/h**|idx|.
    Degree is limited to 4.
    """
    point = np.asarray(point, dtype=float).copy()
    idx = tuple(int(i) for i in idx)
    if len(idx) != point.size:
        raise ValueError("multi-index length must match the number of coordinates")
    deg = sum(idx)
    if deg > 4 or max(idx) > 4:
        raise ValueError("fd_partial supports total degree <= 4")
    if deg == 0:
        val = f(point)
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite function value at {point}")
        return float(val)
    if h is None:
        h = _DEFAULT_STEP[deg]
    if h <= 0:
        raise ValueError("step must be positive")
    d1 = _central(f, point, idx, h)
    d2 = _central(f, point, idx, 2 * h)
    return float((4.0 * d1 - d2) / 3.0)
