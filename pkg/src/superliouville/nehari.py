"""The natural constraint, its fibers, multipliers, and constrained gradients.

The constraint map sends (u, psi) to the negative-spectrum part of
(1+|D|)^{-1}(D psi - rho e^u psi); its zero set fibers over u with linear
fibers (the kernel of a linear map in psi).  Constrained critical points of
the energy on this set are free critical points: the Lagrange multipliers
assemble into a negative-spectrum spinor phi that must vanish because the
constraint Hessian block is negative definite there.

Everything here works on the polarized coefficient arrays of
:class:`~superliouville.spectral.DiracSpectrum`: a negative-subspace spinor
is an (N1,N2) complex array of unit-basis coefficients, one per frequency
pair, and the heavy operators are dealiased multiplication plus diagonal
mode scalings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .energy import Coupling, UState, el_residual
from .fields import (ScalarField, SpinorField, check_same_geometry,
                     coarsen, coarsen_to_hat, refine, refine_from_hat)
from .spectral import (dirac_apply_hat, fft_spinor, grad_norm_sq, ifft_spinor,
                       riesz_h1, riesz_hhalf_hat)

NEHARI_TOL = 1e-10
FIBER_COEF_TOL = 1e-12
FIBER_RELAXATION = 0.5
FIBER_STALL_ITERS = 50


class FiberSolveError(RuntimeError):
    pass


class MultiplierSolveError(RuntimeError):
    pass


@dataclass
class NehariPoint:
    """A pair (u, psi) with a certified constraint residual.

    The held arrays are frozen: the ``certified`` flag is only meaningful
    for the exact values it was computed from, so mutation is refused.
    """

    u: ScalarField
    psi: SpinorField
    constraint_norm: float
    certified: bool

    def __post_init__(self):
        self.u.values.setflags(write=False)
        self.psi.values.setflags(write=False)

    @property
    def geometry(self):
        return self.u.geometry


@dataclass
class MultiplierData:
    """Lagrange multipliers over the negative modes and their spinor."""

    coefficients: np.ndarray  # (N1,N2) complex, unit-basis negative modes
    phi: SpinorField
    norm: float


@dataclass
class IdentityReport:
    """Integral identities that vanish at critical points, plus Jensen."""

    d1: float  # int e^{2u} - 1 - rho e^u |psi|^2
    d2: float  # int <D psi, psi> - rho e^u |psi|^2
    jensen_lhs: float  # e^{2 mean(u)}
    jensen_rhs: float  # mean of e^{2u}

    @property
    def jensen_gap(self) -> float:
        return self.jensen_rhs - self.jensen_lhs

    def to_dict(self) -> dict:
        return {"d1": self.d1, "d2": self.d2, "jensen_lhs": self.jensen_lhs,
                "jensen_rhs": self.jensen_rhs, "jensen_gap": self.jensen_gap}


class ConstraintWorkspace:
    """Cached operators for a fixed scalar field u.

    ``mult_neg(hat)`` is the negative-coefficient part of the dealiased
    multiplication psi -> e^u psi; it is the only non-diagonal block in the
    constraint and multiplier systems.
    """

    def __init__(self, coupling: Coupling, u_values: np.ndarray,
                 state: UState | None = None):
        self.coupling = coupling
        self.spectrum = coupling.spectrum
        self.geometry = coupling.geometry
        self.spectrum._require_invertible("the Nehari constraint")
        self.state = state or UState(self.geometry, u_values)
        self.absw = self.geometry.abs_w
        self.exp_mean = float(np.mean(self.state.exp_u))

    def exp_mult_hat(self, hat: np.ndarray) -> np.ndarray:
        """Coarse FFT of the dealiased product e^u psi, from psi's FFT."""
        fine = refine_from_hat(self.geometry, hat)
        return coarsen_to_hat(self.geometry, self.state.exp_u * fine)

    def residual_coefs(self, psi_hat: np.ndarray) -> np.ndarray:
        """Negative coefficients of D psi - rho e^u psi."""
        s = self.spectrum
        a = s.neg_coef_hat(psi_hat)
        b = s.neg_coef_hat(self.exp_mult_hat(psi_hat))
        return -self.absw * a - self.coupling.rho * b

    def neg_block(self, coef: np.ndarray) -> np.ndarray:
        """Negative coefficients of (D - rho e^u) applied to sum_j c_j phi_j."""
        s = self.spectrum
        hat = s.hat_from_neg_coef(coef)
        b = s.neg_coef_hat(self.exp_mult_hat(hat))
        return -self.absw * coef - self.coupling.rho * b


def constraint_G(coupling: Coupling, u: ScalarField, psi: SpinorField,
                 workspace: ConstraintWorkspace | None = None) -> SpinorField:
    """The negative-subspace spinor representing the constraint value."""
    check_same_geometry(coupling.geometry, u)
    check_same_geometry(coupling.geometry, psi)
    ws = workspace or ConstraintWorkspace(coupling, u.values)
    g_coef = ws.residual_coefs(fft_spinor(psi)) / (1.0 + ws.absw)
    return coupling.spectrum.spinor_from_neg_coef(g_coef)


def constraint_norm(coupling: Coupling, u: ScalarField, psi: SpinorField,
                    workspace: ConstraintWorkspace | None = None) -> float:
    ws = workspace or ConstraintWorkspace(coupling, u.values)
    g_coef = ws.residual_coefs(fft_spinor(psi)) / (1.0 + ws.absw)
    return float(np.sqrt(coupling.spectrum.coef_hhalf_norm_sq(g_coef)))


def certify(coupling: Coupling, u: ScalarField, psi: SpinorField,
            workspace: ConstraintWorkspace | None = None,
            tol: float = NEHARI_TOL) -> NehariPoint:
    norm = constraint_norm(coupling, u, psi, workspace)
    return NehariPoint(u.copy(), psi.copy(), norm, norm <= tol)


def project_to_fiber(coupling: Coupling, u: ScalarField, psi_plus: SpinorField,
                     workspace: ConstraintWorkspace | None = None,
                     tol: float = FIBER_COEF_TOL) -> NehariPoint:
    """Complete a positive-subspace spinor to a constrained pair.

    Solves the negative-block linear system lambda_j a_j = rho <e^u psi, phi_j>
    by damped fixed-point iteration, switching to a preconditioned GMRES
    solve when the iteration stalls.
    """
    check_same_geometry(coupling.geometry, u)
    check_same_geometry(coupling.geometry, psi_plus)
    ws = workspace or ConstraintWorkspace(coupling, u.values)
    s = coupling.spectrum
    rho = coupling.rho
    plus_hat = fft_spinor(psi_plus)
    neg_leak = np.sqrt(s.coef_hhalf_norm_sq(s.neg_coef_hat(plus_hat)))
    size = np.sqrt(s.coef_hhalf_norm_sq(s.pos_coef_hat(plus_hat)))
    if neg_leak > 1e-8 * max(size, 1.0):
        raise FiberSolveError(
            f"psi_plus carries negative-mode content ({neg_leak:.2e}); "
            f"project it first")

    rhs = rho * s.neg_coef_hat(ws.exp_mult_hat(plus_hat))
    scale = max(1.0, float(np.linalg.norm(rhs)))
    a = np.zeros_like(rhs)

    def residual(a_cur):
        return ws.neg_block(a_cur) - rhs

    r = residual(a)
    hist = [float(np.linalg.norm(r))]
    it = 0
    while hist[-1] > tol * scale and it < FIBER_STALL_ITERS:
        a = a + FIBER_RELAXATION * (r / ws.absw)
        r = residual(a)
        hist.append(float(np.linalg.norm(r)))
        it += 1
        if len(hist) > 6 and hist[-1] > 0.9 * hist[-6]:
            break  # stalled; hand over to the Krylov solve

    if hist[-1] > tol * scale:
        n = a.size
        shape = a.shape

        def matvec(x):
            return ws.neg_block(x.reshape(shape)).ravel()

        diag = -(ws.absw + rho * ws.exp_mean)

        def precond(x):
            return x.reshape(shape).ravel() / diag.ravel()

        op = spla.LinearOperator((n, n), matvec=matvec, dtype=np.complex128)
        M = spla.LinearOperator((n, n), matvec=precond, dtype=np.complex128)
        a_flat, info = spla.gmres(op, rhs.ravel(), x0=a.ravel(), M=M,
                                  rtol=tol, atol=tol * scale, restart=60,
                                  maxiter=40)
        a = a_flat.reshape(shape)
        r = residual(a)
        if info != 0 or np.linalg.norm(r) > 10 * tol * scale:
            lams = s.eigenvalues_with_multiplicity()
            lo = rho * float(np.min(ws.state.exp_u))
            hi = rho * float(np.max(ws.state.exp_u))
            inside = lams[(lams >= lo) & (lams <= hi)]
            raise FiberSolveError(
                f"fiber solve stagnated (residual {np.linalg.norm(r):.2e}); "
                f"rho e^u sweeps [{lo:.4g}, {hi:.4g}] which contains "
                f"{inside.size} Dirac eigenvalue(s); nearest gap "
                f"{s.distance_to_spectrum(rho):.3e}")

    psi = SpinorField(ws.geometry,
                      psi_plus.values + s.spinor_from_neg_coef(a).values)
    return certify(coupling, u, psi, workspace=ws)


# -- multipliers and the constrained gradient -------------------------------


class _NormalSpace:
    """Matrix-free normal-equation machinery for span{grad G_j}.

    A real linear combination of the constraint gradients is encoded by one
    complex coefficient per negative mode.  ``apply`` produces the combined
    normal vector as H^1 x H^{1/2} Riesz representatives; ``adjoint`` pairs
    an arbitrary representative against every constraint gradient.  Their
    composition is the (real) Gram operator, solved with CG.
    """

    def __init__(self, coupling: Coupling, point: NehariPoint,
                 workspace: ConstraintWorkspace | None = None):
        self.coupling = coupling
        self.ws = workspace or ConstraintWorkspace(coupling, point.u.values)
        g = self.ws.geometry
        self.g = g
        self.s = coupling.spectrum
        self.psi_hat = fft_spinor(point.psi)
        self.psi_fine = refine_from_hat(g, self.psi_hat)
        self.rho = coupling.rho

    def apply(self, coef: np.ndarray):
        g, s, rho = self.g, self.s, self.rho
        phi_hat = s.hat_from_neg_coef(coef)
        phi_fine = refine_from_hat(g, phi_hat)
        me_hat = coarsen_to_hat(g, self.ws.state.exp_u * phi_fine)
        n_psi_hat = riesz_hhalf_hat(g, dirac_apply_hat(g, phi_hat) - rho * me_hat)
        w_fine = (self.psi_fine.real * phi_fine.real
                  + self.psi_fine.imag * phi_fine.imag).sum(axis=0)
        n_u = riesz_h1(g, -rho * coarsen(g, self.ws.state.exp_u * w_fine))
        return n_u, n_psi_hat

    def adjoint(self, h_u_values: np.ndarray, h_psi_hat: np.ndarray) -> np.ndarray:
        g, s, rho = self.g, self.s, self.rho
        h_u_fine = refine(g, h_u_values)
        h_psi_fine = refine_from_hat(g, h_psi_hat)
        prod = self.ws.state.exp_u * (h_psi_fine + h_u_fine * self.psi_fine)
        x_hat = dirac_apply_hat(g, h_psi_hat) - rho * coarsen_to_hat(g, prod)
        return s.neg_coef_hat(x_hat)

    def gram(self, coef: np.ndarray) -> np.ndarray:
        return self.adjoint(*self.apply(coef))

    def solve(self, rhs: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
        g = self.g
        shape = rhs.shape
        n = rhs.size

        def matvec(x):
            c = (x[:n] + 1j * x[n:]).reshape(shape)
            out = self.gram(c)
            return np.concatenate([out.real.ravel(), out.imag.ravel()])

        diag = ((g.abs_w ** 2 + (self.rho * self.ws.exp_mean) ** 2)
                / (1.0 + g.abs_w)).ravel()
        diag2 = np.concatenate([diag, diag])

        def precond(x):
            return x / diag2

        op = spla.LinearOperator((2 * n, 2 * n), matvec=matvec, dtype=np.float64)
        M = spla.LinearOperator((2 * n, 2 * n), matvec=precond, dtype=np.float64)
        b = np.concatenate([rhs.real.ravel(), rhs.imag.ravel()])
        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            return np.zeros(shape, dtype=np.complex128)
        x, info = spla.cg(op, b, M=M, rtol=rtol, atol=0.0, maxiter=600)
        if info != 0:
            raise MultiplierSolveError(
                f"normal-equation CG did not converge (info={info}); the "
                f"constraint gradients may be near-degenerate; distance of "
                f"rho to the spectrum: "
                f"{self.s.distance_to_spectrum(self.rho):.3e}")
        return (x[:n] + 1j * x[n:]).reshape(shape)


def _gradient_representatives(coupling: Coupling, point: NehariPoint,
                              ws: ConstraintWorkspace):
    """H-Riesz representatives of the unconstrained differential dJ."""
    r_u, r_psi = el_residual(coupling, point.u, point.psi, state=ws.state)
    h_u = riesz_h1(ws.geometry, -2.0 * r_u.values)
    h_psi_hat = riesz_hhalf_hat(ws.geometry, 4.0 * fft_spinor(r_psi))
    return h_u, h_psi_hat


def _h_norm(geometry, h_u_values, h_psi_hat) -> float:
    h1_sq = float(np.mean(h_u_values)) ** 2 + grad_norm_sq(geometry, h_u_values)
    w = 1.0 + geometry.abs_w
    n = geometry.N1 * geometry.N2
    hh_sq = float(np.sum(w * (h_psi_hat.real ** 2 + h_psi_hat.imag ** 2))) \
        * geometry.cell / n
    return float(np.sqrt(h1_sq + hh_sq))


def multipliers(coupling: Coupling, point: NehariPoint,
                workspace: ConstraintWorkspace | None = None) -> MultiplierData:
    """Recover the Lagrange multipliers of the normal decomposition of dJ."""
    if not point.certified:
        raise MultiplierSolveError("multipliers require a certified point")
    ws = workspace or ConstraintWorkspace(coupling, point.u.values)
    ns = _NormalSpace(coupling, point, ws)
    rhs = ns.adjoint(*_gradient_representatives(coupling, point, ws))
    coef = ns.solve(rhs)
    phi = coupling.spectrum.spinor_from_neg_coef(coef)
    norm = float(np.sqrt(coupling.spectrum.coef_hhalf_norm_sq(coef)))
    return MultiplierData(coefficients=coef, phi=phi, norm=norm)


def constrained_gradient(coupling: Coupling, point: NehariPoint,
                         workspace: ConstraintWorkspace | None = None):
    """Riesz representative of the tangential differential and its norm.

    Returns (g_u, g_psi, norm) where (g_u, g_psi) is dJ minus its normal
    component in the H^1 x H^{1/2} product metric.  The norm is the
    Palais-Smale monitor for constrained descent.
    """
    if not point.certified:
        raise MultiplierSolveError("constrained gradient requires a certified point")
    ws = workspace or ConstraintWorkspace(coupling, point.u.values)
    ns = _NormalSpace(coupling, point, ws)
    h_u, h_psi_hat = _gradient_representatives(coupling, point, ws)
    coef = ns.solve(ns.adjoint(h_u, h_psi_hat))
    n_u, n_psi_hat = ns.apply(coef)
    t_u = h_u - n_u
    t_psi_hat = h_psi_hat - n_psi_hat
    norm = _h_norm(ws.geometry, t_u, t_psi_hat)
    return (ScalarField(ws.geometry, t_u),
            ifft_spinor(ws.geometry, t_psi_hat), norm)


def ps_identities(coupling: Coupling, point: NehariPoint,
                  workspace: ConstraintWorkspace | None = None) -> IdentityReport:
    """Integral identities (exact at critical points) plus the Jensen bound."""
    ws = workspace or ConstraintWorkspace(coupling, point.u.values)
    g = ws.geometry
    psi_fine = refine(g, point.psi.values)
    dens = (psi_fine.real ** 2 + psi_fine.imag ** 2).sum(axis=0)
    coupling_int = coupling.rho * g.integrate_fine(ws.state.exp_u * dens)
    d1 = g.integrate_fine(ws.state.exp_2u) - g.volume - coupling_int
    from .spectral import dirac_quadratic_form

    d2 = dirac_quadratic_form(g, point.psi) - coupling_int
    mean_u = float(np.mean(point.u.values))
    jensen_lhs = float(np.exp(2.0 * mean_u))
    jensen_rhs = g.integrate_fine(ws.state.exp_2u) / g.volume
    return IdentityReport(d1=float(d1), d2=float(d2),
                          jensen_lhs=jensen_lhs, jensen_rhs=jensen_rhs)
