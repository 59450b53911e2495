"""Second-order geometry of an isometric immersion f: chart -> R^n.

Ambient pairings are the real dot product extended bilinearly (never the
hermitian product).  The second fundamental form is computed two ways,
from the closed formulas in the frame and by projecting second ambient
derivatives off the tangent space; the two routes must agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import calculus as ca
from .calculus import CVectorField, DiffMode, ScalarField, derive, gradient
from .errors import ModeMismatch, RankDrop
from .pseudohermitian import (
    PseudohermitianFrame,
    StructureFunctions,
    WebsterMetric,
    default_tol,
)

FRAME_KEYS = ("Z", "Zb", "T")
CONJ_KEY = {"Z": "Zb", "Zb": "Z", "T": "T"}


@dataclass
class ImmersionSpec:
    """n real coordinate functions of an immersion into R^n."""

    n: int
    f: tuple

    def __post_init__(self):
        self.f = tuple(self.f)
        if len(self.f) != self.n:
            raise ValueError("component count does not match ambient dimension")


class AmbientField:
    """A differentiable map chart -> C^n (componentwise scalar fields)."""

    __slots__ = ("comps",)

    def __init__(self, comps):
        self.comps = tuple(c if isinstance(c, ScalarField) else ca.const(c) for c in comps)

    def __add__(self, o):
        return AmbientField([a + b for a, b in zip(self.comps, o.comps)])

    def __sub__(self, o):
        return AmbientField([a - b for a, b in zip(self.comps, o.comps)])

    def __neg__(self):
        return AmbientField([-a for a in self.comps])

    def scale(self, s) -> "AmbientField":
        s = s if isinstance(s, ScalarField) else ca.const(s)
        return AmbientField([s * a for a in self.comps])

    def conj(self) -> "AmbientField":
        return AmbientField([a.conj() for a in self.comps])

    def dot(self, o) -> ScalarField:
        """Bilinear ambient pairing sum_i U_i V_i (no conjugation)."""
        out = self.comps[0] * o.comps[0]
        for a, b in zip(self.comps[1:], o.comps[1:]):
            out = out + a * b
        return out

    def d(self, U: CVectorField, mode: DiffMode) -> "AmbientField":
        return AmbientField([derive(U, c, mode) for c in self.comps])

    def at(self, p) -> np.ndarray:
        vals = [np.asarray(ca.value_of(c(p)), dtype=complex) for c in self.comps]
        if all(v.ndim == 0 for v in vals):
            return np.array(vals)
        shape = np.broadcast(*[np.atleast_1d(v) for v in vals]).shape
        return np.array([np.broadcast_to(v, shape) for v in vals])


def _amb_sum(terms):
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


class ImmersionAnalysis:
    """Caches the derivative fields of one (frame, structure fns, immersion).

    All members are fields; evaluating them at grid arrays vectorizes the
    checks.  Heavy members are built lazily on first use.
    """

    def __init__(
        self,
        frame: PseudohermitianFrame,
        fns: StructureFunctions,
        imm: ImmersionSpec,
        tol: Optional[float] = None,
    ):
        self.frame = frame
        self.fns = fns
        self.imm = imm
        self.mode = frame.mode
        self.tol = default_tol(frame.mode) if tol is None else tol
        self._vec = {"Z": frame.Z, "Zb": frame.Zbar, "T": frame.T}
        self._first = {}
        self._second = {}
        self._A = None
        self._normal_basis = None
        self._gram_inv_done = False

    def vec(self, key: str) -> CVectorField:
        return self._vec[key]

    def first(self, key: str) -> AmbientField:
        if key not in self._first:
            F = AmbientField(self.imm.f)
            self._first[key] = F.d(self._vec[key], self.mode)
        return self._first[key]

    def second(self, k1: str, k2: str) -> AmbientField:
        """The ambient vector field U V f for U = vec(k1), V = vec(k2)."""
        if (k1, k2) not in self._second:
            self._second[(k1, k2)] = self.first(k2).d(self._vec[k1], self.mode)
        return self._second[(k1, k2)]

    # -- tangential machinery

    def tangential_projection(self, W: AmbientField) -> AmbientField:
        """Projection of W onto span{Zf, conj(Z)f, Tf} via the Gram matrix."""
        E = [self.first(k) for k in FRAME_KEYS]
        G = [[E[i].dot(E[j]) for j in range(3)] for i in range(3)]
        rhs = [W.dot(E[i]) for i in range(3)]
        coeffs = ca.solve3_fields(G, rhs)
        return _amb_sum([E[i].scale(coeffs[i]) for i in range(3)])

    def normal_part(self, W: AmbientField) -> AmbientField:
        return W - self.tangential_projection(W)

    def levi_civita_coeffs(self, k1: str, k2: str):
        """Frame coefficients of del_{U}V read from <UVf, frame duals>."""
        S = self.second(k1, k2)
        return (
            S.dot(self.first("Zb")),
            S.dot(self.first("Z")),
            S.dot(self.first("T")),
        )

    # -- second fundamental form

    def A_field(self, k1: str, k2: str) -> AmbientField:
        """Closed-form second fundamental form entry as an ambient field."""
        if self._A is None:
            self._A = self._build_A_fields()
        return self._A[_akey(k1, k2)]

    def _build_A_fields(self):
        a, b, c = self.fns.a, self.fns.b, self.fns.c
        Zf, Zbf, Tf = (self.first(k) for k in FRAME_KEYS)
        ZZ = self.second("Z", "Z")
        ZZb = self.second("Z", "Zb")
        TZ = self.second("T", "Z")
        TT = self.second("T", "T")
        abar = a.conj()
        cbar = c.conj()
        A = {}
        A[("T", "Z")] = TZ + Zf.scale(b - 0.5j)
        A[("Z", "Z")] = ZZ - Zf.scale(abar * 1j) + Tf.scale(cbar)
        A[("Z", "Zb")] = ZZb + Zbf.scale(abar * 1j) + Tf.scale(0.5j)
        A[("T", "T")] = TT
        A[("Zb", "Zb")] = AmbientField([f.conj() for f in A[("Z", "Z")].comps])
        A[("T", "Zb")] = AmbientField([f.conj() for f in A[("T", "Z")].comps])
        return A

    def A_proj_field(self, k1: str, k2: str) -> AmbientField:
        """Projection-mode entry: UVf minus its tangential projection."""
        return self.normal_part(self.second(k1, k2))

    def A_extended(self, coeffs, k2: str, p) -> np.ndarray:
        """A(sum_i coeffs_i frame_i, vec(k2)) at p, extended bilinearly."""
        out = None
        for cf, k1 in zip(coeffs, FRAME_KEYS):
            term = np.asarray(cf) * self.A_field(k1, k2).at(p)
            out = term if out is None else out + term
        return out

    # -- normal bundle

    def normal_basis(self) -> Sequence[AmbientField]:
        """Euclidean-orthonormal normal fields, Gram-Schmidt over coordinate
        seeds in a fixed deterministic order (survivors chosen at the chart
        center and then kept, so the fields stay smooth)."""
        if self._normal_basis is not None:
            return self._normal_basis
        n = self.imm.n
        center = self.frame.spec.center()
        X, Y = self.frame.real_horizontal()
        F = AmbientField(self.imm.f)
        tangents = [F.d(V, self.mode) for V in (X, Y, self.frame.T)]

        def orthonormalize(vec_fields):
            out = []
            for W in vec_fields:
                for B in out:
                    W = W - B.scale(W.dot(B))
                norm = ScalarField(
                    lambda a_, b_, c_, W=W: ca.sqrt(W.dot(W).fn(a_, b_, c_))
                )
                out.append(W.scale(ScalarField(
                    lambda a_, b_, c_, nf=norm: 1.0 / nf.fn(a_, b_, c_)
                )))
            return out

        tangent_on = orthonormalize(tangents)
        basis = []
        survivors = []
        for k in range(n):
            seed = AmbientField([1.0 if i == k else 0.0 for i in range(n)])
            W = seed
            for B in tangent_on + basis:
                W = W - B.scale(W.dot(B))
            norm2 = float(np.real(ca.value_of(W.dot(W)(center))))
            if norm2 < 1e-8:
                continue
            norm = ScalarField(lambda a_, b_, c_, W=W: ca.sqrt(W.dot(W).fn(a_, b_, c_)))
            basis.append(W.scale(ScalarField(
                lambda a_, b_, c_, nf=norm: 1.0 / nf.fn(a_, b_, c_)
            )))
            survivors.append(k)
            if len(basis) == n - 3:
                break
        if len(basis) != n - 3:
            raise RankDrop(
                f"normal basis has {len(basis)} members, expected {n - 3}"
            )
        self._normal_basis = basis
        return basis

    def first_normal_rank(self, p, tol: float = 1e-6) -> int:
        """Rank of the span of the second-fundamental-form values at p."""
        vecs = []
        for key in (("Z", "Z"), ("Z", "Zb"), ("T", "Z"), ("T", "T")):
            v = self.A_field(*key).at(p)
            v = v.reshape(self.imm.n, -1)[:, 0]
            vecs.extend([np.real(v), np.imag(v)])
        M = np.array(vecs)
        s = np.linalg.svd(M, compute_uv=False)
        return int(np.sum(s > tol * max(1.0, s[0] if len(s) else 1.0)))

    def check_rank_stencil(self, p, delta: float = 1e-3):
        """RankDrop when the first normal rank changes across a small stencil."""
        r0 = self.first_normal_rank(p)
        for k in range(3):
            for sgn in (+1.0, -1.0):
                q = list(p)
                q[k] = q[k] + sgn * delta
                if self.first_normal_rank(q) != r0:
                    raise RankDrop(
                        "first normal space rank changes across the stencil"
                    )
        return r0

    def normal_connection_field(self, U: CVectorField, xi: AmbientField) -> AmbientField:
        """D_U xi as a field: ambient derivative minus tangential part."""
        return self.normal_part(xi.d(U, self.mode))

    # -- covariant derivative of A, mean curvature, shape operator, R_perp

    def covariant_A(self, k1: str, k2: str, k3: str, p) -> np.ndarray:
        """(D_U A)(V, W) at p for U, V, W named by frame keys."""
        A23 = self.A_field(k2, k3)
        dA = self.normal_part(A23.d(self._vec[k1], self.mode)).at(p)
        c12 = [np.asarray(ca.value_of(f(p))) for f in self.levi_civita_coeffs(k1, k2)]
        c13 = [np.asarray(ca.value_of(f(p))) for f in self.levi_civita_coeffs(k1, k3)]
        return dA - self.A_extended(c12, k3, p) - self.A_extended(c13, k2, p)

    def mean_curvature_field(self) -> AmbientField:
        return self.A_field("Z", "Zb").scale(2.0) + self.A_field("T", "T")

    def shape_operator(self, xi_values: np.ndarray, p) -> np.ndarray:
        """Frame matrix of A_xi from <A_xi U, V> = <xi, A(U, V)>."""
        E = [self.first(k).at(p).reshape(self.imm.n, -1)[:, 0] for k in FRAME_KEYS]
        G = np.array([[e.dot(f) for f in E] for e in E])
        rhs = np.empty((3, 3), dtype=complex)
        for j, kj in enumerate(FRAME_KEYS):
            for k, kk in enumerate(FRAME_KEYS):
                Av = self.A_field(kj, kk).at(p).reshape(self.imm.n, -1)[:, 0]
                rhs[k, j] = xi_values.dot(Av)
        return np.linalg.solve(G, rhs)

    def normal_curvature(self, k1: str, k2: str, xi: AmbientField, p) -> np.ndarray:
        """R_perp(U, V) xi = D_U D_V xi - D_V D_U xi - D_[U,V] xi at p."""
        U, V = self._vec[k1], self._vec[k2]
        DV = self.normal_connection_field(V, xi)
        DU = self.normal_connection_field(U, xi)
        term1 = self.normal_part(DV.d(U, self.mode)).at(p)
        term2 = self.normal_part(DU.d(V, self.mode)).at(p)
        br = ca.lie_bracket(U, V, self.mode)
        term3 = self.normal_part(xi.d(br, self.mode)).at(p)
        return term1 - term2 - term3


def _akey(k1: str, k2: str):
    order = {"Z": 0, "Zb": 1, "T": 2}
    pair = ((k1, k2) if order[k1] <= order[k2] else (k2, k1))
    if pair == ("Z", "T"):
        pair = ("T", "Z")
    if pair == ("Zb", "T"):
        pair = ("T", "Zb")
    if pair == ("Zb", "Z"):
        pair = ("Z", "Zb")
    return pair


@dataclass
class SecondFormTable:
    """Pointwise second fundamental form with normal-bundle data."""

    entries: dict
    normal_basis: list
    first_normal_rank: int
    agreement_defect: float
    mode: str

    def entry(self, k1: str, k2: str) -> np.ndarray:
        return self.entries[_akey(k1, k2)]


# ---------------------------------------------------------------------------
# operation surface


def isometry_defect(frame: PseudohermitianFrame, imm: ImmersionSpec, p) -> np.ndarray:
    """max of |<Zf,Zf>|, |<Tf,Zf>|, ||Tf|^2 - 1|, ||Zf|^2 - 1| at p."""
    an = ImmersionAnalysis(frame, None, imm)
    return _isometry_defect(an, p)


def _isometry_defect(an: ImmersionAnalysis, p) -> np.ndarray:
    Zf, Zbf, Tf = (an.first(k) for k in FRAME_KEYS)
    vals = [
        Zf.dot(Zf)(p),
        Tf.dot(Zf)(p),
        Tf.dot(Tf)(p) - 1.0,
        Zf.dot(Zbf)(p) - 1.0,
    ]
    return np.max([np.abs(np.asarray(ca.value_of(v))) for v in vals], axis=0)


def first_order_identities_defect(
    frame: PseudohermitianFrame,
    fns: StructureFunctions,
    imm: ImmersionSpec,
    p,
    analysis: Optional[ImmersionAnalysis] = None,
) -> np.ndarray:
    """Max residual of the nine pairings of first with second derivatives."""
    an = analysis or ImmersionAnalysis(frame, fns, imm)
    a, b, c = fns.a, fns.b, fns.c
    Zf, Tf = an.first("Z"), an.first("T")
    items = [
        Zf.dot(an.second("Z", "T")) - c.conj(),
        Zf.dot(an.second("Zb", "T")) + ca.const(0.5j),
        Zf.dot(an.second("T", "T")),
        Zf.dot(an.second("Z", "Zb")) + a.conj() * 1j,
        Zf.dot(an.second("Zb", "Zb")) + a * 1j,
        Zf.dot(an.second("T", "Zb")) - (b - 0.5j),
        Tf.dot(an.second("T", "Z")),
        Tf.dot(an.second("Z", "Z")) + c.conj(),
        Tf.dot(an.second("Zb", "Z")) - ca.const(0.5j),
    ]
    vals = [np.abs(np.asarray(ca.value_of(e(p)))) for e in items]
    return np.max(vals, axis=0)


def second_fundamental_form(
    frame: PseudohermitianFrame,
    fns: StructureFunctions,
    imm: ImmersionSpec,
    p,
    mode: str = "formula",
    analysis: Optional[ImmersionAnalysis] = None,
    agreement_tol: float = 1e-6,
) -> SecondFormTable:
    """Second fundamental form at p via the requested route.

    Both routes are always evaluated and compared; disagreement beyond
    agreement_tol raises ModeMismatch (broken isometry or frame).
    """
    an = analysis or ImmersionAnalysis(frame, fns, imm)
    keys = [("Z", "Z"), ("Z", "Zb"), ("T", "Z"), ("T", "Zb"), ("T", "T"), ("Zb", "Zb")]
    formula = {k: an.A_field(*k).at(p) for k in keys}
    proj = {k: an.A_proj_field(*k).at(p) for k in keys}
    defect = max(
        float(np.max(np.abs(formula[k] - proj[k]))) for k in keys
    )
    if defect > agreement_tol:
        raise ModeMismatch(
            f"formula/projection second forms disagree by {defect:.3e}"
        )
    chosen = formula if mode == "formula" else proj
    basis = [b.at(p) for b in an.normal_basis()]
    rank = an.first_normal_rank(_first_point(p))
    return SecondFormTable(
        entries=chosen,
        normal_basis=basis,
        first_normal_rank=rank,
        agreement_defect=defect,
        mode=mode,
    )


def _first_point(p):
    return tuple(np.atleast_1d(np.asarray(ca.value_of(c)))[0] for c in p)


def normal_connection(
    frame: PseudohermitianFrame,
    fns: StructureFunctions,
    imm: ImmersionSpec,
    U: CVectorField,
    xi_index: int,
    p,
    analysis: Optional[ImmersionAnalysis] = None,
) -> np.ndarray:
    """D_U of the xi_index-th normal basis field, evaluated at p."""
    an = analysis or ImmersionAnalysis(frame, fns, imm)
    an.check_rank_stencil(_first_point(p))
    xi = an.normal_basis()[xi_index]
    return an.normal_connection_field(U, xi).at(p)


def covariant_A(
    frame: PseudohermitianFrame,
    fns: StructureFunctions,
    imm: ImmersionSpec,
    k1: str,
    k2: str,
    k3: str,
    p,
    analysis: Optional[ImmersionAnalysis] = None,
) -> np.ndarray:
    an = analysis or ImmersionAnalysis(frame, fns, imm)
    return an.covariant_A(k1, k2, k3, p)


def mean_curvature(
    frame: PseudohermitianFrame,
    fns: StructureFunctions,
    imm: ImmersionSpec,
    p,
    analysis: Optional[ImmersionAnalysis] = None,
) -> np.ndarray:
    """H = 2 A(Z, conj Z) + A(T, T) at p."""
    an = analysis or ImmersionAnalysis(frame, fns, imm)
    return an.mean_curvature_field().at(p)


def shape_operator(
    frame: PseudohermitianFrame,
    fns: StructureFunctions,
    imm: ImmersionSpec,
    xi_values: np.ndarray,
    p,
    analysis: Optional[ImmersionAnalysis] = None,
) -> np.ndarray:
    an = analysis or ImmersionAnalysis(frame, fns, imm)
    return an.shape_operator(xi_values, p)


def normal_curvature(
    frame: PseudohermitianFrame,
    fns: StructureFunctions,
    imm: ImmersionSpec,
    k1: str,
    k2: str,
    xi_index: int,
    p,
    analysis: Optional[ImmersionAnalysis] = None,
) -> np.ndarray:
    an = analysis or ImmersionAnalysis(frame, fns, imm)
    xi = an.normal_basis()[xi_index]
    return an.normal_curvature(k1, k2, xi, p)


def derivative_table(
    frame: PseudohermitianFrame,
    imm: ImmersionSpec,
    p,
    order: int = 2,
    analysis: Optional[ImmersionAnalysis] = None,
) -> dict:
    """Uf and UVf (and UVWf when order=3) for frame directions at p."""
    an = analysis or ImmersionAnalysis(frame, None, imm)
    out = {}
    for k in FRAME_KEYS:
        out[(k,)] = an.first(k).at(p)
    if order >= 2:
        for k1 in FRAME_KEYS:
            for k2 in FRAME_KEYS:
                out[(k1, k2)] = an.second(k1, k2).at(p)
    if order >= 3:
        for k1 in FRAME_KEYS:
            for k2 in FRAME_KEYS:
                for k3 in FRAME_KEYS:
                    out[(k1, k2, k3)] = (
                        an.second(k2, k3).d(an.vec(k1), an.mode).at(p)
                    )
    return out


# ---------------------------------------------------------------------------
# intrinsic curvature oracle (coordinate Christoffel route)


class IntrinsicCurvature:
    """<R(U1,U2)U3, U4> of the Webster metric from coordinate Christoffels.

    Deliberately independent of the immersion: used to audit the Gauss
    equation against inner products of second-form values.
    """

    def __init__(self, frame: PseudohermitianFrame):
        self.frame = frame
        self.mode = frame.mode
        wm = WebsterMetric(frame)
        self.metric = wm
        g = wm.coordinate_gram()
        self._g = g
        det = ca.det3(g)
        adj = [[None] * 3 for _ in range(3)]
        for i in range(3):
            for j in range(3):
                r = [k for k in range(3) if k != i]
                c = [k for k in range(3) if k != j]
                minor = g[r[0]][c[0]] * g[r[1]][c[1]] - g[r[0]][c[1]] * g[r[1]][c[0]]
                sign = 1.0 if (i + j) % 2 == 0 else -1.0
                adj[j][i] = minor * sign
        ginv = [[adj[i][j] / det for j in range(3)] for i in range(3)]
        D = ca.coordinate_frame()
        dg = [
            [[derive(D[k], g[i][j], self.mode) for j in range(3)] for i in range(3)]
            for k in range(3)
        ]
        gamma = [[[None] * 3 for _ in range(3)] for _ in range(3)]
        for k in range(3):
            for i in range(3):
                for j in range(3):
                    s = None
                    for l in range(3):
                        term = ginv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j])
                        s = term if s is None else s + term
                    gamma[k][i][j] = s * 0.5
        self._gamma = gamma

    def pairing(self, U1, U2, U3, U4, p) -> np.ndarray:
        """<R(U1,U2)U3, U4> with R from the coordinate Christoffel symbols."""
        p = ca.as_point(p)
        gamma_val = np.empty((3, 3, 3), dtype=object)
        gamma_grad = np.empty((3, 3, 3, 3), dtype=object)
        for l in range(3):
            for i in range(3):
                for j in range(3):
                    v, dv = gradient(self._gamma[l][i][j], p, self.mode)
                    gamma_val[l, i, j] = ca.value_of(v)
                    for k in range(3):
                        gamma_grad[k, l, i, j] = ca.value_of(dv[k])
        gval = np.empty((3, 3), dtype=object)
        for i in range(3):
            for j in range(3):
                gval[i, j] = ca.value_of(self._g[i][j](p))
        u = [[ca.value_of(c(p)) for c in V.comps] for V in (U1, U2, U3, U4)]

        Rarr = np.empty((3, 3, 3, 3), dtype=object)
        for l in range(3):
            for i in range(3):
                for j in range(3):
                    for k in range(3):
                        val = gamma_grad[i, l, j, k] - gamma_grad[j, l, i, k]
                        for m in range(3):
                            val = val + gamma_val[l, i, m] * gamma_val[m, j, k]
                            val = val - gamma_val[l, j, m] * gamma_val[m, i, k]
                        Rarr[l, i, j, k] = val

        out = 0.0
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    for l in range(3):
                        lowered = 0.0
                        for m in range(3):
                            lowered = lowered + gval[l, m] * u[3][m]
                        out = out + u[0][i] * u[1][j] * u[2][k] * Rarr[l, i, j, k] * lowered
        return np.asarray(out)
