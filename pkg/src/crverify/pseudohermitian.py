"""Normalized pseudohermitian frames on a strongly pseudoconvex chart.

Builds the frame (Z, conj Z, T) from a raw CR field and a real contact
form, with the normalization anchored on the structure equation
i[Z, conj Z] = T + a Z + conj(a) conj(Z): the Levi density is the unique
positive scaling making the T-coefficient equal one (the form is negated
first when the density comes out negative).  Structure functions a, b, c
are read off bracket expansions and every expansion residual is checked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import calculus as ca
from .calculus import (
    AD,
    CVectorField,
    ChartPoint,
    DiffMode,
    OneForm,
    ScalarField,
    apply_fn,
    cartan_d,
    coordinate_frame,
    derive,
    grid_points,
    lie_bracket,
)
from .errors import (
    Degenerate,
    FrameExpansionFailure,
    PredictionMismatch,
    SingularSystem,
)


def default_tol(mode: DiffMode) -> float:
    return 1e-8 if mode.kind == "ad" else 1e-4


@dataclass
class CRChartSpec:
    """Raw chart data: a spanning CR field, a real 1-form, and a sample box."""

    Z_raw: CVectorField
    theta_raw: OneForm
    box: tuple
    grid_n: int = 5
    mode: DiffMode = AD
    name: str = ""

    def grid(self) -> ChartPoint:
        return grid_points(self.box, self.grid_n)

    def center(self) -> ChartPoint:
        return ChartPoint(*(0.5 * (lo + hi) for lo, hi in self.box))


@dataclass
class PseudohermitianFrame:
    Z: CVectorField
    T: CVectorField
    zeta: OneForm
    theta: OneForm
    sign_flipped: bool
    spec: CRChartSpec
    reeb_residual: float = 0.0
    reeb_condition: float = 0.0

    @property
    def Zbar(self) -> CVectorField:
        return self.Z.conj()

    @property
    def mode(self) -> DiffMode:
        return self.spec.mode

    def frame_fields(self):
        return self.Z, self.Zbar, self.T

    def real_horizontal(self):
        """The real orthonormal pair X = (Z + Z̄)/sqrt2, Y = i(Z - Z̄)/sqrt2."""
        rt2 = np.sqrt(2.0)
        Zb = self.Zbar
        X = CVectorField(
            [(a + b) * (1.0 / rt2) for a, b in zip(self.Z.comps, Zb.comps)], True
        )
        Y = CVectorField(
            [(a - b) * (1j / rt2) for a, b in zip(self.Z.comps, Zb.comps)], True
        )
        return X, Y


@dataclass
class StructureFunctions:
    a: ScalarField
    b: ScalarField
    c: ScalarField
    expansion_residual: float = 0.0


def _levi_density_field(Z_raw: CVectorField, theta: OneForm, mode: DiffMode) -> ScalarField:
    # theta(i [Z_raw, conj Z_raw]) is real for any CR pair; keep the real part
    br = lie_bracket(Z_raw, Z_raw.conj(), mode)
    return (theta.pair(br) * 1j).real()


def levi_form(spec: CRChartSpec, p) -> np.ndarray:
    """Positive Levi density at p (the normalized frame is Z_raw / sqrt of it).

    Raises Degenerate when the density is below 1e-10 in magnitude.
    """
    lam = _levi_density_field(spec.Z_raw, spec.theta_raw, spec.mode)(ca.as_point(p))
    lam = np.real(ca.value_of(lam))
    if np.any(np.abs(lam) < 1e-10):
        raise Degenerate("Levi density vanishes: not strongly pseudoconvex here")
    return np.abs(lam)


def reeb_field(spec: CRChartSpec) -> CVectorField:
    """The unique real T with theta(T) = 1 and i_T(dtheta) = 0.

    Solved pointwise from the 3x3 system (M + theta theta^T) T = theta,
    M_jk = dtheta(d/du_j, d/du_k); the unique solution is the Reeb field.
    """
    theta = _oriented_theta(spec)
    return _reeb_from_theta(theta, spec.mode)


def _reeb_from_theta(theta: OneForm, mode: DiffMode) -> CVectorField:
    D = coordinate_frame()
    M = [[cartan_d(theta, D[i], D[j], mode) for j in range(3)] for i in range(3)]
    w = theta.comps
    entries = [[M[i][j] + w[i] * w[j] for j in range(3)] for i in range(3)]
    comps = ca.solve3_fields(entries, list(w))
    return CVectorField(comps, is_real=True)


def _oriented_theta(spec: CRChartSpec) -> OneForm:
    lam = _levi_density_field(spec.Z_raw, spec.theta_raw, spec.mode)
    s = np.real(ca.value_of(lam(spec.center())))
    return -spec.theta_raw if s < 0 else spec.theta_raw


def normalize(spec: CRChartSpec, diagnostics: bool = True) -> PseudohermitianFrame:
    """Levi-normalized frame with Reeb field and dual coframe member zeta."""
    lam_raw = _levi_density_field(spec.Z_raw, spec.theta_raw, spec.mode)
    grid = spec.grid()
    lam_vals = np.real(np.asarray(ca.value_of(lam_raw(grid))))
    if np.any(np.abs(lam_vals) < 1e-10):
        raise Degenerate("Levi density vanishes on the sample grid")
    flipped = bool(lam_vals.flat[lam_vals.size // 2] < 0)
    if flipped and np.any(lam_vals > 0) or (not flipped) and np.any(lam_vals < 0):
        raise Degenerate("Levi density changes sign across the chart")

    theta = -spec.theta_raw if flipped else spec.theta_raw
    lam = _levi_density_field(spec.Z_raw, theta, spec.mode)
    inv_sqrt = ScalarField(
        lambda a, b, c: 1.0 / ca.sqrt(lam.fn(a, b, c)), lam.max_depth
    )
    Z = spec.Z_raw.scale(inv_sqrt)

    T = _reeb_from_theta(theta, spec.mode)
    residual, cond = (0.0, 0.0)
    if diagnostics:
        residual, cond = _reeb_diagnostics(theta, T, grid, spec.mode)
        if not np.isfinite(cond) or cond > 1e12:
            raise SingularSystem(f"Reeb linear system is singular (cond {cond:.2e})")

    zeta = _dual_coframe_member(Z, T)
    return PseudohermitianFrame(
        Z=Z,
        T=T,
        zeta=zeta,
        theta=theta,
        sign_flipped=flipped,
        spec=spec,
        reeb_residual=float(residual),
        reeb_condition=float(cond),
    )


def _reeb_diagnostics(theta: OneForm, T: CVectorField, grid, mode: DiffMode):
    """Grid max of |theta(T) - 1| and |i_T dtheta|, plus worst condition number."""
    D = coordinate_frame()
    npts = np.asarray(grid[0]).size
    tv = np.array(
        [np.broadcast_to(np.asarray(ca.value_of(c(grid))), (npts,)) for c in T.comps]
    )
    thv = np.array(
        [np.broadcast_to(np.asarray(ca.value_of(c(grid))), (npts,)) for c in theta.comps]
    )
    mv = np.array(
        [
            [
                np.broadcast_to(
                    np.asarray(ca.value_of(cartan_d(theta, D[i], D[j], mode)(grid))),
                    (npts,),
                )
                for j in range(3)
            ]
            for i in range(3)
        ]
    )
    pairing = np.einsum("kp,kp->p", thv, tv)
    worst_res = float(np.max(np.abs(pairing - 1.0)))
    contraction = np.einsum("ijp,jp->ip", mv, tv)
    worst_res = max(worst_res, float(np.max(np.abs(contraction))))
    worst_cond = 0.0
    for idx in range(npts):
        E = mv[:, :, idx] + np.outer(thv[:, idx], thv[:, idx])
        worst_cond = max(worst_cond, float(np.linalg.cond(E)))
    return worst_res, worst_cond


def _dual_coframe_member(Z: CVectorField, T: CVectorField) -> OneForm:
    """zeta with zeta(Z) = 1, zeta(conj Z) = 0, zeta(T) = 0 (pointwise solve)."""
    Zb = Z.conj()
    rows = (Z.comps, Zb.comps, T.comps)
    # row i of the system is "zeta contracted with frame vector i"
    entries = [[rows[i][j] for j in range(3)] for i in range(3)]
    comps = ca.solve3_fields(entries, [ca.const(1.0), ca.const(0.0), ca.const(0.0)])
    return OneForm(comps)


def structure_functions(
    frame: PseudohermitianFrame, tol: Optional[float] = None
) -> StructureFunctions:
    """a, b, c from bracket expansions in the frame, with residual screening.

    a = i zeta([Z, conj Z]),  b = zeta([Z, T]),  c = zeta([conj Z, T]).
    The full expansions are also formed on the grid; their T-components and
    the conjugation defect of i[Z, conj Z] - T must vanish.
    """
    tol = default_tol(frame.mode) if tol is None else tol
    mode = frame.mode
    Z, Zb, T = frame.frame_fields()
    br_zzb = lie_bracket(Z, Zb, mode)
    br_zt = lie_bracket(Z, T, mode)
    br_zbt = lie_bracket(Zb, T, mode)

    a = frame.zeta.pair(br_zzb) * 1j
    b = frame.zeta.pair(br_zt)
    c = frame.zeta.pair(br_zbt)

    residual = _expansion_residuals(frame, (br_zzb, br_zt, br_zbt))
    if residual > tol:
        raise FrameExpansionFailure(
            f"frame expansion residual {residual:.3e} exceeds tolerance {tol:.1e}"
        )
    return StructureFunctions(a=a, b=b, c=c, expansion_residual=float(residual))


def _expansion_residuals(frame: PseudohermitianFrame, brackets) -> float:
    """Grid max of: T-component defects and the conjugation defect of a."""
    grid = frame.spec.grid()
    npts = np.asarray(grid[0]).size
    Z, Zb, T = frame.frame_fields()

    def comps_on_grid(V):
        return [
            np.broadcast_to(np.asarray(ca.value_of(c(grid)), dtype=complex), (npts,))
            for c in V.comps
        ]

    fcols = [comps_on_grid(V) for V in (Z, Zb, T)]
    fmat = [[fcols[v][i] for v in range(3)] for i in range(3)]
    br_zzb, br_zt, br_zbt = brackets
    worst = 0.0

    def expand(W: CVectorField):
        return ca.solve3(fmat, comps_on_grid(W))

    # i[Z, conj Z] - T = a Z + conj(a) conj Z exactly (zero T-component)
    w1 = CVectorField([x * 1j - t for x, t in zip(br_zzb.comps, T.comps)])
    c1 = expand(w1)
    worst = max(worst, float(np.max(np.abs(c1[2]))))
    worst = max(worst, float(np.max(np.abs(c1[1] - np.conjugate(c1[0])))))
    # [Z, T] and [conj Z, T] must stay horizontal
    worst = max(worst, float(np.max(np.abs(expand(br_zt)[2]))))
    worst = max(worst, float(np.max(np.abs(expand(br_zbt)[2]))))
    return worst


def jacobi_defect(frame: PseudohermitianFrame, fns: StructureFunctions, p):
    """(|b + conj b|, |i Zc - i conj(Z) b + Ta - ab - conj(a) c|) at p."""
    mode = frame.mode
    Z, Zb, T = frame.frame_fields()
    a, b, c = fns.a, fns.b, fns.c
    p = ca.as_point(p)
    d1 = np.abs(ca.value_of((b + b.conj())(p)))
    expr = (
        derive(Z, c, mode) * 1j
        - derive(Zb, b, mode) * 1j
        + derive(T, a, mode)
        - a * b
        - a.conj() * c
    )
    d2 = np.abs(ca.value_of(expr(p)))
    return d1, d2


@dataclass
class FrameChange:
    frame: PseudohermitianFrame
    fns: StructureFunctions
    predicted_a: ScalarField
    predicted_b: ScalarField
    predicted_c: ScalarField
    covariance_defect: float = 0.0


def change_frame(
    frame: PseudohermitianFrame,
    fns: StructureFunctions,
    v: ScalarField,
    tol: Optional[float] = None,
) -> FrameChange:
    """Rotate the frame by the real function v: Z' = e^{-iv} Z, T' = T.

    Structure functions are recomputed from brackets and checked against
    the covariant transforms
        a' = e^{iv}(a - conj(Z) v),  b' = b + i Tv,  c' = e^{2iv} c.
    """
    tol = default_tol(frame.mode) if tol is None else tol
    mode = frame.mode
    phase_m = apply_fn(ca.exp, v * (-1j))
    phase_p = apply_fn(ca.exp, v * 1j)
    phase_2p = apply_fn(ca.exp, v * 2j)

    Z2 = frame.Z.scale(phase_m)
    zeta2 = OneForm([phase_p * w for w in frame.zeta.comps])
    frame2 = PseudohermitianFrame(
        Z=Z2,
        T=frame.T,
        zeta=zeta2,
        theta=frame.theta,
        sign_flipped=frame.sign_flipped,
        spec=frame.spec,
        reeb_residual=frame.reeb_residual,
        reeb_condition=frame.reeb_condition,
    )
    fns2 = structure_functions(frame2, tol=max(tol, 10 * default_tol(mode)))

    pa = phase_p * (fns.a - derive(frame.Zbar, v, mode))
    pb = fns.b + derive(frame.T, v, mode) * 1j
    pc = phase_2p * fns.c

    grid = frame.spec.grid()
    defect = 0.0
    for got, want in ((fns2.a, pa), (fns2.b, pb), (fns2.c, pc)):
        diff = np.abs(np.asarray(ca.value_of((got - want)(grid))))
        defect = max(defect, float(np.max(diff)))
    if defect > tol:
        raise PredictionMismatch(
            f"recomputed structure functions deviate from the frame-change "
            f"transforms by {defect:.3e} (tolerance {tol:.1e})"
        )
    return FrameChange(frame2, fns2, pa, pb, pc, covariance_defect=defect)


def tw_connection(frame: PseudohermitianFrame, fns: StructureFunctions, p) -> dict:
    """Connection coefficients in the frame and the torsion coefficient.

    del_Z Z = -i conj(a) Z, del_(conj Z) Z = i a Z, del_T Z = -b Z, and the
    torsion pairs T with conj Z through c Z.  The Sasakian defect is |c|.
    """
    p = ca.as_point(p)
    av = ca.value_of(fns.a(p))
    bv = ca.value_of(fns.b(p))
    cv = ca.value_of(fns.c(p))
    return {
        "Z_Z": -1j * np.conjugate(av),
        "Zbar_Z": 1j * av,
        "T_Z": -bv,
        "torsion_T_Zbar": cv,
        "sasakian_defect": np.abs(cv),
    }


class WebsterMetric:
    """Bilinear symmetric extension of the Webster metric to complex fields.

    <U, V> = zeta(U) conj(zeta)(V) + conj(zeta)(U) zeta(V) + theta(U) theta(V).
    """

    def __init__(self, frame: PseudohermitianFrame):
        self.frame = frame
        self._zeta = frame.zeta
        self._zeta_bar = OneForm([w.conj() for w in frame.zeta.comps])
        self._theta = frame.theta

    def pairing(self, U: CVectorField, V: CVectorField) -> ScalarField:
        z, zb, th = self._zeta, self._zeta_bar, self._theta
        return z.pair(U) * zb.pair(V) + zb.pair(U) * z.pair(V) + th.pair(U) * th.pair(V)

    def at(self, U: CVectorField, V: CVectorField, p):
        return ca.value_of(self.pairing(U, V)(ca.as_point(p)))

    def coordinate_gram(self) -> list:
        """The 3x3 field matrix g_ij = <d/du_i, d/du_j>."""
        D = coordinate_frame()
        return [[self.pairing(D[i], D[j]) for j in range(3)] for i in range(3)]
