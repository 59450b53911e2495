"""Differentiable scalar/vector field algebra on a three-dimensional chart.

Fields are evaluated at points whose coordinates may be floats, complex
numbers, numpy arrays (whole-grid evaluation) or nested dual numbers.
Directional derivatives are exact in AD mode (forward-mode duals, one
partial per chart coordinate, nested for higher order) and switchable to
a central finite-difference oracle with the same call surface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DepthExceeded


class ChartPoint(NamedTuple):
    u1: object
    u2: object
    u3: object


def as_point(p) -> ChartPoint:
    if isinstance(p, ChartPoint):
        return p
    u1, u2, u3 = p
    return ChartPoint(u1, u2, u3)


def grid_points(box: Sequence[Sequence[float]], n) -> ChartPoint:
    """Flattened n1*n2*n3 sample grid of the coordinate box as three arrays."""
    if isinstance(n, int):
        n = (n, n, n)
    axes = [np.linspace(lo, hi, k) for (lo, hi), k in zip(box, n)]
    g = np.meshgrid(*axes, indexing="ij")
    return ChartPoint(*(c.reshape(-1) for c in g))


# ---------------------------------------------------------------------------
# dual numbers


class Dual:
    """Value with three partial derivatives (one per chart coordinate).

    Coefficients may themselves be Duals, giving exact nested derivatives
    of any order, or numpy arrays for vectorized grid evaluation.
    """

    __slots__ = ("val", "du")
    __array_ufunc__ = None  # keep numpy from consuming Dual operands

    def __init__(self, val, du):
        self.val = val
        self.du = du

    def __repr__(self):
        return f"Dual({self.val!r}, {self.du!r})"

    def __add__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val + o.val, tuple(a + b for a, b in zip(self.du, o.du)))
        return Dual(self.val + o, self.du)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, tuple(-a for a in self.du))

    def __sub__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val - o.val, tuple(a - b for a, b in zip(self.du, o.du)))
        return Dual(self.val - o, self.du)

    def __rsub__(self, o):
        return Dual(o - self.val, tuple(-a for a in self.du))

    def __mul__(self, o):
        if isinstance(o, Dual):
            return Dual(
                self.val * o.val,
                tuple(a * o.val + self.val * b for a, b in zip(self.du, o.du)),
            )
        return Dual(self.val * o, tuple(a * o for a in self.du))

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            inv = 1.0 / o.val
            q = self.val * inv
            return Dual(q, tuple((a - q * b) * inv for a, b in zip(self.du, o.du)))
        inv = 1.0 / o
        return Dual(self.val * inv, tuple(a * inv for a in self.du))

    def __rtruediv__(self, o):
        inv = 1.0 / self.val
        q = o * inv
        return Dual(q, tuple(-q * b * inv for b in self.du))

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("Dual ** exponent must be an integer")
        if n == 0:
            return Dual(self.val * 0 + 1.0, tuple(a * 0 for a in self.du))
        if n < 0:
            return 1.0 / (self ** (-n))
        out = self
        for _ in range(n - 1):
            out = out * self
        return out


def lift_point(p) -> ChartPoint:
    """All three coordinates promoted one dual level (for gradients)."""
    return ChartPoint(
        Dual(p[0], (1.0, 0.0, 0.0)),
        Dual(p[1], (0.0, 1.0, 0.0)),
        Dual(p[2], (0.0, 0.0, 1.0)),
    )


# generic math on floats / complexes / arrays / duals


def sin(x):
    if isinstance(x, Dual):
        c = cos(x.val)
        return Dual(sin(x.val), tuple(c * a for a in x.du))
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        ms = -sin(x.val)
        return Dual(cos(x.val), tuple(ms * a for a in x.du))
    return np.cos(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.val)
        return Dual(e, tuple(e * a for a in x.du))
    return np.exp(x)


def sqrt(x):
    if isinstance(x, Dual):
        s = sqrt(x.val)
        h = 0.5 / s
        return Dual(s, tuple(h * a for a in x.du))
    return np.sqrt(np.asarray(x, dtype=complex)) if np.ndim(x) else np.sqrt(complex(x))


def conj(x):
    # chart coordinates are real, so conjugation commutes with every partial
    if isinstance(x, Dual):
        return Dual(conj(x.val), tuple(conj(a) for a in x.du))
    return np.conjugate(x)


def real_part(x):
    return (x + conj(x)) * 0.5


def imag_part(x):
    return (x - conj(x)) * (-0.5j)


def value_of(x):
    """Strip all dual layers, returning the underlying numeric value."""
    while isinstance(x, Dual):
        x = x.val
    return x


# ---------------------------------------------------------------------------
# differentiation modes


@dataclass(frozen=True)
class DiffMode:
    """How directional derivatives are taken.

    kind "ad" uses nested duals (exact).  kind "fd" is the independent
    central-difference oracle; with richardson=True the h and h/2 stencils
    are extrapolated.  The step applies at every nesting level, so for
    deep FD nesting prefer steps around 1e-3.
    """

    kind: str = "ad"
    step: float = 1e-3
    richardson: bool = False

    def __post_init__(self):
        if self.kind not in ("ad", "fd"):
            raise ValueError(f"unknown differentiation mode {self.kind!r}")


AD = DiffMode("ad")
FD = DiffMode("fd")


# ---------------------------------------------------------------------------
# fields


class ScalarField:
    """An evaluable expression ChartPoint -> complex scalar.

    max_depth limits how many more times the field may be differentiated
    (None = unlimited, the case for closed-form model fields).
    """

    __slots__ = ("fn", "max_depth")

    def __init__(self, fn: Callable, max_depth: Optional[int] = None):
        self.fn = fn
        self.max_depth = max_depth

    def __call__(self, p):
        return self.fn(p[0], p[1], p[2])

    # -- algebra (closures keep evaluation generic over the scalar type)

    def __add__(self, o):
        o = _field(o)
        return ScalarField(
            lambda a, b, c: self.fn(a, b, c) + o.fn(a, b, c), _mindepth(self, o)
        )

    __radd__ = __add__

    def __sub__(self, o):
        o = _field(o)
        return ScalarField(
            lambda a, b, c: self.fn(a, b, c) - o.fn(a, b, c), _mindepth(self, o)
        )

    def __rsub__(self, o):
        o = _field(o)
        return ScalarField(
            lambda a, b, c: o.fn(a, b, c) - self.fn(a, b, c), _mindepth(self, o)
        )

    def __mul__(self, o):
        o = _field(o)
        return ScalarField(
            lambda a, b, c: self.fn(a, b, c) * o.fn(a, b, c), _mindepth(self, o)
        )

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = _field(o)
        return ScalarField(
            lambda a, b, c: self.fn(a, b, c) / o.fn(a, b, c), _mindepth(self, o)
        )

    def __rtruediv__(self, o):
        o = _field(o)
        return ScalarField(
            lambda a, b, c: o.fn(a, b, c) / self.fn(a, b, c), _mindepth(self, o)
        )

    def __neg__(self):
        return ScalarField(lambda a, b, c: -self.fn(a, b, c), self.max_depth)

    def __pow__(self, n: int):
        return ScalarField(lambda a, b, c: self.fn(a, b, c) ** n, self.max_depth)

    def conj(self):
        return ScalarField(lambda a, b, c: conj(self.fn(a, b, c)), self.max_depth)

    def real(self):
        return ScalarField(lambda a, b, c: real_part(self.fn(a, b, c)), self.max_depth)


def _field(x) -> ScalarField:
    if isinstance(x, ScalarField):
        return x
    return const(x)


def _mindepth(*fields) -> Optional[int]:
    depths = [f.max_depth for f in fields if f.max_depth is not None]
    return min(depths) if depths else None


def const(v) -> ScalarField:
    return ScalarField(lambda a, b, c: v + 0.0 * a)


def coord(k: int) -> ScalarField:
    """The coordinate function u{k+1}."""
    if k == 0:
        return ScalarField(lambda a, b, c: a)
    if k == 1:
        return ScalarField(lambda a, b, c: b)
    return ScalarField(lambda a, b, c: c)


def apply_fn(fn: Callable, field: ScalarField) -> ScalarField:
    """Compose a generic unary function (sin, exp, ...) with a field."""
    return ScalarField(lambda a, b, c: fn(field.fn(a, b, c)), field.max_depth)


class CVectorField:
    """Complex vector field: coefficients against the coordinate frame."""

    __slots__ = ("comps", "is_real")

    def __init__(self, comps, is_real: bool = False):
        self.comps = tuple(_field(c) for c in comps)
        self.is_real = is_real

    def at(self, p):
        return tuple(c(p) for c in self.comps)

    def conj(self):
        return CVectorField([c.conj() for c in self.comps], self.is_real)

    def __add__(self, o):
        return CVectorField(
            [a + b for a, b in zip(self.comps, o.comps)], self.is_real and o.is_real
        )

    def __sub__(self, o):
        return CVectorField(
            [a - b for a, b in zip(self.comps, o.comps)], self.is_real and o.is_real
        )

    def __neg__(self):
        return CVectorField([-a for a in self.comps], self.is_real)

    def scale(self, s) -> "CVectorField":
        s = _field(s)
        return CVectorField([s * a for a in self.comps])


class OneForm:
    """Coefficients against du1, du2, du3."""

    __slots__ = ("comps", "is_real")

    def __init__(self, comps, is_real: bool = False):
        self.comps = tuple(_field(c) for c in comps)
        self.is_real = is_real

    def at(self, p):
        return tuple(c(p) for c in self.comps)

    def __neg__(self):
        return OneForm([-a for a in self.comps], self.is_real)

    def pair(self, U: CVectorField) -> ScalarField:
        """The function omega(U)."""
        w, u = self.comps, U.comps
        return ScalarField(
            lambda a, b, c: w[0].fn(a, b, c) * u[0].fn(a, b, c)
            + w[1].fn(a, b, c) * u[1].fn(a, b, c)
            + w[2].fn(a, b, c) * u[2].fn(a, b, c),
            _mindepth(*w, *u),
        )


def coordinate_frame():
    """The fields d/du1, d/du2, d/du3."""
    return (
        CVectorField([1.0, 0.0, 0.0], is_real=True),
        CVectorField([0.0, 1.0, 0.0], is_real=True),
        CVectorField([0.0, 0.0, 1.0], is_real=True),
    )


# ---------------------------------------------------------------------------
# differentiation


def gradient(h: ScalarField, p, mode: DiffMode = AD):
    """(h(p), (dh/du1, dh/du2, dh/du3)(p)) in the requested mode."""
    if h.max_depth is not None and h.max_depth < 1:
        raise DepthExceeded("field's configured differentiation order is exhausted")
    if mode.kind == "ad":
        r = h.fn(
            Dual(p[0], (1.0, 0.0, 0.0)),
            Dual(p[1], (0.0, 1.0, 0.0)),
            Dual(p[2], (0.0, 0.0, 1.0)),
        )
        if isinstance(r, Dual):
            return r.val, r.du
        return r, (0.0 * r, 0.0 * r, 0.0 * r)
    val = h(p)
    parts = tuple(_fd_partial(h, p, k, mode) for k in range(3))
    return val, parts


def _fd_partial(h: ScalarField, p, k: int, mode: DiffMode):
    def central(step):
        up = list(p)
        um = list(p)
        up[k] = up[k] + step
        um[k] = um[k] - step
        return (h(up) - h(um)) / (2.0 * step)

    d = central(mode.step)
    if mode.richardson:
        d2 = central(mode.step * 0.5)
        return (4.0 * d2 - d) / 3.0
    return d


def derive(U: CVectorField, h: ScalarField, mode: DiffMode = AD) -> ScalarField:
    """The function p -> sum_k U^k(p) dh/du_k(p), itself a field."""
    if h.max_depth is not None and h.max_depth < 1:
        raise DepthExceeded("field's configured differentiation order is exhausted")
    depth = h.max_depth - 1 if h.max_depth is not None else None
    depth = _mindepth(ScalarField(None, depth), *U.comps)

    def fn(a, b, c):
        p = (a, b, c)
        _, dh = gradient(h, p, mode)
        u = U.at(p)
        return u[0] * dh[0] + u[1] * dh[1] + u[2] * dh[2]

    return ScalarField(fn, depth)


def derive_at(U: CVectorField, h: ScalarField, p, mode: DiffMode = AD):
    """derive(U, h) evaluated at p."""
    return derive(U, h, mode)(as_point(p))


def lie_bracket(U: CVectorField, V: CVectorField, mode: DiffMode = AD) -> CVectorField:
    """[U, V]: component k is U(V^k) - V(U^k)."""
    comps = [
        derive(U, V.comps[k], mode) - derive(V, U.comps[k], mode) for k in range(3)
    ]
    return CVectorField(comps, is_real=U.is_real and V.is_real)


def cartan_d(omega: OneForm, U: CVectorField, V: CVectorField, mode: DiffMode = AD) -> ScalarField:
    """d(omega)(U, V) by the full Cartan formula (no 1/2 factor):

    U(omega(V)) - V(omega(U)) - omega([U, V]).
    """
    t1 = derive(U, omega.pair(V), mode)
    t2 = derive(V, omega.pair(U), mode)
    t3 = omega.pair(lie_bracket(U, V, mode))
    return t1 - t2 - t3


def cartan_d_at(omega: OneForm, U: CVectorField, V: CVectorField, p, mode: DiffMode = AD):
    return cartan_d(omega, U, V, mode)(as_point(p))


# ---------------------------------------------------------------------------
# generic small linear algebra (works on duals and arrays alike)


def det3(m):
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def solve3(m, rhs):
    """Cramer solve of a 3x3 system over any commutative scalar ring."""
    d = det3(m)
    cols = []
    for k in range(3):
        mk = [list(row) for row in m]
        for i in range(3):
            mk[i][k] = rhs[i]
        cols.append(det3(mk) / d)
    return tuple(cols)


def solve3_fields(entry_fields, rhs_fields):
    """Pointwise Cramer solve with ScalarField entries; three field outputs."""
    depth = _mindepth(*(f for row in entry_fields for f in row), *rhs_fields)

    def comp(k):
        def fn(a, b, c):
            m = [[f.fn(a, b, c) for f in row] for row in entry_fields]
            r = [f.fn(a, b, c) for f in rhs_fields]
            mk = [list(row) for row in m]
            for i in range(3):
                mk[i][k] = r[i]
            return det3(mk) / det3(m)

        return ScalarField(fn, depth)

    return comp(0), comp(1), comp(2)
