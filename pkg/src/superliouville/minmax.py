"""Min-max drivers: mountain pass below the first level, linking above it.

Both drivers work in the fibration coordinates (u, psi_plus): a node is a
scalar field plus positive-subspace coefficients, completed to the
constraint set by the fiber solve.  Deformation repeatedly applies one
backtracking descent step to the node of maximal energy (boundary data
pinned), which makes the recorded max level non-increasing by construction;
once the level stagnates the maximal node is refined by constrained descent
and finished with a Newton polish of the full coupled system.

The eigenvalue ladder used for regime selection is the ladder of *distinct*
positive Dirac eigenvalues.  On a flat torus every eigenvalue has even
multiplicity (the reflection k -> -k-2*delta preserves |w|), so consecutive
eigenvalues counted with multiplicity never leave a gap for the coupling to
sit in; the k-th window is between the k-th and (k+1)-th distinct levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .energy import (Coupling, EnergyBreakdown, EnergyOverflowError, UState,
                     el_residual, evaluate, residual_norm)
from .fields import (ScalarField, SpinorField, check_same_geometry, coarsen,
                     coarsen_to_hat, refine, refine_from_hat)
from .nehari import (ConstraintWorkspace, FiberSolveError, IdentityReport,
                     NehariPoint, certify, constrained_gradient,
                     project_to_fiber, ps_identities)
from .spectral import (dirac_apply_hat, fft_spinor, grad_norm_sq, ifft_spinor,
                       laplacian_apply, riesz_h1, riesz_hhalf_hat)

ARMIJO_C1 = 1e-4
MIN_STEP = 1e-14


class RegimeError(ValueError):
    pass


class ConstantsInfeasibleError(RuntimeError):
    pass


class PathCollapseError(RuntimeError):
    pass


class DeformationError(RuntimeError):
    pass


class NewtonError(RuntimeError):
    pass


@dataclass
class MountainPassConfig:
    path_nodes: int = 24
    endpoint: tuple[float, float] | None = None  # (ubar1, s); None = auto
    deform_steps: int = 400  # deformation sweeps over the path
    step_size: float = 0.5
    tol: float = 1e-8
    stag_window: int = 12
    stag_tol: float = 1e-7
    sphere_radius: float = 0.2
    sphere_samples: int = 2000
    seed: int = 1

    def __post_init__(self):
        if self.path_nodes < 16:
            raise ValueError("path_nodes must be at least 16")


@dataclass
class LinkingConfig:
    k: int
    T: float
    A: float
    R: float
    cylinder_grid: tuple[int, int] = (5, 28)
    tau: float = 8.0
    deform_steps: int = 400  # deformation sweeps over the cylinder
    step_size: float = 0.5
    tol: float = 1e-8
    stag_window: int = 12
    stag_tol: float = 1e-7
    sphere_radius: float = 0.2
    sphere_samples: int = 2000
    seed: int = 1


@dataclass
class MinMaxResult:
    solution: NehariPoint
    level: float
    regime: str
    energy: EnergyBreakdown
    residual: float
    theta_hat: float
    sphere_radius: float
    identity: IdentityReport
    psi_l2: float
    iterations: int
    path_levels: list[float] = field(default_factory=list)
    constants: dict | None = None
    domination_constant: float | None = None

    def __iter__(self):  # allows: solution, level = mountain_pass(...)
        yield self.solution
        yield self.level


# --------------------------------------------------------------------------
# uniformization sub-solve
# --------------------------------------------------------------------------

def uniformize(geometry, K: ScalarField, tol: float = 1e-12,
               max_newton: int = 50) -> ScalarField:
    """Solve Lap u = e^{2u} + K for the background conformal factor.

    Requires negative total curvature; the functional behind the equation is
    strictly convex, so a damped Newton iteration from the constant guess
    converges globally.  With constant K = -c the solution is -log(c)/2.
    """
    check_same_geometry(geometry, K)
    g = geometry
    total = g.integrate(K.values)
    if total >= 0:
        raise RegimeError(f"uniformization requires negative total curvature, "
                          f"got integral {total:.3g}")
    kbar = total / g.volume
    u = np.full((g.N1, g.N2), 0.5 * math.log(-kbar))

    def resid(u_vals):
        state = UState(g, u_vals)
        lap = np.fft.ifft2(g.lap_symbol * np.fft.fft2(u_vals)).real
        return lap - coarsen(g, state.exp_2u) - K.values, state

    r, state = resid(u)
    rnorm = np.sqrt(np.sum(r ** 2) * g.cell)
    for _ in range(max_newton):
        if rnorm < tol:
            return ScalarField(g, u)
        exp2 = state.exp_2u

        def jac(x):
            v = x.reshape(g.N1, g.N2)
            lap = np.fft.ifft2(g.lap_symbol * np.fft.fft2(v)).real
            return (lap - 2.0 * coarsen(g, exp2 * refine(g, v))).ravel()

        c = 2.0 * float(np.mean(exp2))
        pre = 1.0 / (g.lap_symbol - c)

        def precond(x):
            v = x.reshape(g.N1, g.N2)
            return np.fft.ifft2(pre * np.fft.fft2(v)).real.ravel()

        n = g.N1 * g.N2
        op = spla.LinearOperator((n, n), matvec=jac, dtype=np.float64)
        M = spla.LinearOperator((n, n), matvec=precond, dtype=np.float64)
        step, info = spla.gmres(op, -r.ravel(), M=M, rtol=1e-13,
                                atol=0.25 * tol, restart=60, maxiter=20)
        if info != 0:
            raise DeformationError("uniformization linear solve failed")
        step = step.reshape(g.N1, g.N2)
        alpha = 1.0
        while alpha > MIN_STEP:
            try:
                r_new, state_new = resid(u + alpha * step)
            except EnergyOverflowError:
                alpha *= 0.5
                continue
            new_norm = np.sqrt(np.sum(r_new ** 2) * g.cell)
            if new_norm < rnorm or rnorm < 1e3 * tol:
                u = u + alpha * step
                r, state, rnorm = r_new, state_new, new_norm
                break
            alpha *= 0.5
        else:
            raise DeformationError("uniformization line search failed")
    if rnorm >= tol:
        raise DeformationError(f"uniformization Newton did not reach {tol:g} "
                               f"(residual {rnorm:.3e})")
    return ScalarField(g, u)


# --------------------------------------------------------------------------
# coordinate nodes and descent steps
# --------------------------------------------------------------------------

class _Node:
    __slots__ = ("u", "cplus", "point", "J", "alpha", "pinned")

    def __init__(self, u, cplus, point, J, alpha, pinned=False):
        self.u = u
        self.cplus = cplus
        self.point = point
        self.J = J
        self.alpha = alpha
        self.pinned = pinned


def _make_node(coupling: Coupling, u_values, cplus, alpha=0.5,
               pinned=False) -> _Node:
    g = coupling.geometry
    ws = ConstraintWorkspace(coupling, u_values)
    psi_plus = coupling.spectrum.spinor_from_pos_coef(cplus)
    pt = project_to_fiber(coupling, ScalarField(g, u_values), psi_plus,
                          workspace=ws)
    J = evaluate(coupling, pt.u, pt.psi, state=ws.state).J
    return _Node(np.array(u_values), np.array(cplus), pt, float(J), alpha,
                 pinned)


def _reduced_direction(coupling: Coupling, node: _Node,
                       ws: ConstraintWorkspace):
    """Steepest-descent direction of the reduced functional in (u, psi+).

    On the constraint set the fiber variations are annihilated by dJ, so the
    reduced differential is (g_u, P+ g_psi); the H-metric descent direction
    is its Riesz lift.  Returns (d_u, d_cplus, m) with m the directional
    derivative (negative the squared dual norm).
    """
    g = coupling.geometry
    s = coupling.spectrum
    r_u, r_psi = el_residual(coupling, node.point.u, node.point.psi,
                             state=ws.state)
    d_u = -riesz_h1(g, -2.0 * r_u.values)
    lifted = riesz_hhalf_hat(g, 4.0 * fft_spinor(r_psi))
    d_c = -s.pos_coef_hat(lifted)
    m = -(float(np.mean(d_u)) ** 2 + grad_norm_sq(g, d_u)
          + s.coef_hhalf_norm_sq(d_c))
    return d_u, d_c, m


def _coord_inner(coupling: Coupling, au, ac, bu, bc) -> float:
    """H^1 x H^{1/2} inner product of two (u, psi+) coordinate pairs."""
    g = coupling.geometry
    uh_a, uh_b = np.fft.fft2(au), np.fft.fft2(bu)
    w2 = g.ws1 ** 2 + g.ws2 ** 2
    n = g.N1 * g.N2
    cross = float(np.sum(w2 * (uh_a * np.conj(uh_b)).real)) * g.cell / n
    hh = float(np.sum((1.0 + g.abs_w) * (ac * np.conj(bc)).real))
    return float(np.mean(au)) * float(np.mean(bu)) + cross + hh


def _coord_norm_sq(coupling: Coupling, au, ac) -> float:
    g = coupling.geometry
    return (float(np.mean(au)) ** 2 + grad_norm_sq(g, au)
            + coupling.spectrum.coef_hhalf_norm_sq(ac))


def _descend_node_once(coupling: Coupling, node: _Node,
                       proj_out=None) -> float:
    """One Armijo backtracking step; returns the achieved decrease (>= 0).

    ``proj_out`` is an optional list of H-orthonormal coordinate directions
    removed from the descent direction.  Near a ridge of the energy this
    keeps the node from sliding off along the unstable directions (the local
    min-max mechanism); the step is still a strict descent step for J.
    """
    ws = ConstraintWorkspace(coupling, node.u)
    d_u, d_c, m = _reduced_direction(coupling, node, ws)
    if proj_out:
        for eu, ec in proj_out:
            cin = _coord_inner(coupling, d_u, d_c, eu, ec)
            d_u = d_u - cin * eu
            d_c = d_c - cin * ec
        m = -_coord_norm_sq(coupling, d_u, d_c)
    if m == 0.0:
        return 0.0
    alpha = node.alpha
    while alpha > MIN_STEP:
        try:
            trial = _make_node(coupling, node.u + alpha * d_u,
                               node.cplus + alpha * d_c, alpha=node.alpha)
        except (EnergyOverflowError, FiberSolveError):
            alpha *= 0.5
            continue
        if trial.J <= node.J + ARMIJO_C1 * alpha * m:
            decrease = node.J - trial.J
            node.u, node.cplus = trial.u, trial.cplus
            node.point, node.J = trial.point, trial.J
            node.alpha = min(alpha * 2.0, 4.0)
            return decrease
        alpha *= 0.5
    node.alpha = max(node.alpha * 0.5, 4.0 * MIN_STEP)
    return 0.0


def descend(coupling: Coupling, start: NehariPoint, max_iter: int = 500,
            tol: float = 1e-8) -> NehariPoint:
    """Constrained gradient flow from a certified point.

    Steps follow the reduced-gradient direction in (u, psi+) with fiber
    re-projection and Armijo backtracking; terminates when the constrained
    gradient norm drops below ``tol`` (or ``max_iter`` is hit).  The energy
    is non-increasing across accepted steps.
    """
    if not start.certified:
        raise FiberSolveError("descend requires a certified starting point")
    s = coupling.spectrum
    node = _Node(np.array(start.u.values),
                 s.pos_coef(start.psi), start,
                 evaluate(coupling, start.u, start.psi).J, alpha=0.5)
    for _ in range(max_iter):
        _, _, norm = constrained_gradient(coupling, node.point)
        if norm < tol:
            return node.point
        decrease = _descend_node_once(coupling, node)
        if decrease == 0.0:
            _, _, norm = constrained_gradient(coupling, node.point)
            if norm < tol:
                return node.point
            raise DeformationError(
                f"descent line search failed (step < {MIN_STEP:g}) with "
                f"constrained gradient {norm:.3e} > tol {tol:g}")
    return node.point


# --------------------------------------------------------------------------
# Newton polish of the full coupled system
# --------------------------------------------------------------------------

def newton_polish(coupling: Coupling, point: NehariPoint,
                  target: float = 1e-11, max_newton: int = 14,
                  pre_tol: float = 1e-3) -> NehariPoint:
    """Quadratically convergent finisher on the coupled system.

    Newton steps solve the symmetric Hessian system (the residual Jacobian
    in the quadrature metric) with preconditioned MINRES.  Nontrivial
    solutions carry exact phase and near-exact translation null directions,
    so the system is solved in the minimum-norm least-squares sense, which
    converges onto a nearby point of the critical orbit instead of sliding
    along it.
    """
    g = coupling.geometry
    rho = coupling.rho
    u = np.array(point.u.values)
    psi = np.array(point.psi.values)
    n = g.N1 * g.N2

    def resid(u_vals, psi_vals):
        state = UState(g, u_vals)
        r_u, r_psi = el_residual(coupling, ScalarField(g, u_vals),
                                 SpinorField(g, psi_vals), state=state)
        return r_u.values, r_psi.values, state

    r_u, r_psi, state = resid(u, psi)
    rnorm = residual_norm(ScalarField(g, r_u), SpinorField(g, r_psi))
    if rnorm > pre_tol:
        raise NewtonError(f"newton_polish needs residual < {pre_tol:g}, "
                          f"got {rnorm:.3e}")
    if rnorm <= target:
        return certify(coupling, ScalarField(g, u), SpinorField(g, psi))

    for _ in range(max_newton):
        psi_fine = refine(g, psi)
        dens_fine = (psi_fine.real ** 2 + psi_fine.imag ** 2).sum(axis=0)
        exp_u, exp_2u = state.exp_u, state.exp_2u

        def hess(x):
            # symmetric: row scalings (2, 4) match the energy Hessian
            du = x[:n].reshape(g.N1, g.N2)
            dpsi = (x[n:3 * n] + 1j * x[3 * n:]).reshape(2, g.N1, g.N2)
            du_f = refine(g, du)
            dpsi_f = refine(g, np.ascontiguousarray(dpsi))
            cross = (psi_fine.real * dpsi_f.real
                     + psi_fine.imag * dpsi_f.imag).sum(axis=0)
            hu = -2.0 * (np.fft.ifft2(g.lap_symbol * np.fft.fft2(du)).real
                         - 2.0 * coarsen(g, exp_2u * du_f)
                         + rho * coarsen(g, exp_u * du_f * dens_fine)
                         + 2.0 * rho * coarsen(g, exp_u * cross))
            hpsi_hat = 4.0 * (dirac_apply_hat(g, fft_spinor(dpsi))
                              - rho * coarsen_to_hat(
                                  g, exp_u * (dpsi_f + du_f * psi_fine)))
            hpsi = np.fft.ifft2(hpsi_hat, axes=(1, 2))
            return np.concatenate([hu.ravel(), hpsi.real.ravel(),
                                   hpsi.imag.ravel()])

        cu = 2.0 * float(np.mean(exp_2u))
        cpsi = rho * float(np.mean(exp_u))
        pre_u = 1.0 / (2.0 * (-g.lap_symbol + cu))
        pre_psi = np.ascontiguousarray(1.0 / (4.0 * (g.abs_w + cpsi)))

        def precond(x):  # SPD mode-diagonal magnitude equalizer
            du = x[:n].reshape(g.N1, g.N2)
            dpsi = (x[n:3 * n] + 1j * x[3 * n:]).reshape(2, g.N1, g.N2)
            pu = np.fft.ifft2(pre_u * np.fft.fft2(du)).real
            ph = fft_spinor(np.ascontiguousarray(dpsi))
            ph[0] *= pre_psi
            ph[1] *= pre_psi
            pp = np.fft.ifft2(ph, axes=(1, 2))
            return np.concatenate([pu.ravel(), pp.real.ravel(),
                                   pp.imag.ravel()])

        rhs = -np.concatenate([(-2.0 * r_u).ravel(),
                               (4.0 * r_psi).real.ravel(),
                               (4.0 * r_psi).imag.ravel()])
        op = spla.LinearOperator((5 * n, 5 * n), matvec=hess, dtype=np.float64)
        M = spla.LinearOperator((5 * n, 5 * n), matvec=precond, dtype=np.float64)
        forcing = min(1e-4, max(0.01 * rnorm, 1e-10))
        sol, info = spla.minres(op, rhs, M=M, rtol=forcing, maxiter=1200)
        if not np.all(np.isfinite(sol)):
            raise NewtonError("Newton linear solve produced non-finite step "
                              "(rho e^u resonance?)")
        du = sol[:n].reshape(g.N1, g.N2)
        dpsi = (sol[n:3 * n] + 1j * sol[3 * n:]).reshape(2, g.N1, g.N2)
        alpha = 1.0
        improved = False
        for _ in range(8):
            try:
                r_u2, r_psi2, state2 = resid(u + alpha * du, psi + alpha * dpsi)
            except EnergyOverflowError:
                alpha *= 0.5
                continue
            new = residual_norm(ScalarField(g, r_u2), SpinorField(g, r_psi2))
            if new < rnorm:
                u = u + alpha * du
                psi = psi + alpha * dpsi
                r_u, r_psi, state, rnorm = r_u2, r_psi2, state2, new
                improved = True
                break
            alpha *= 0.5
        if not improved:
            raise NewtonError(f"Newton diverged at residual {rnorm:.3e}")
        if rnorm <= target:
            return certify(coupling, ScalarField(g, u), SpinorField(g, psi))
    raise NewtonError(f"Newton did not reach {target:g} in {max_newton} "
                      f"iterations (residual {rnorm:.3e})")


# --------------------------------------------------------------------------
# local lower-bound scan (theta) and spinor-domination measurement
# --------------------------------------------------------------------------

def _coordinate_sphere_point(coupling: Coupling, rng, radius: float,
                             decay: float = 1.5):
    """Random certified point of prescribed full norm (two-pass rescale)."""
    from .fields import random_scalar, random_spinor
    from .spectral import project_pm_hat

    g = coupling.geometry
    s = coupling.spectrum
    wu, wp = rng.uniform(0.2, 1.0, size=2)
    u_dir = random_scalar(g, rng, decay=decay, amplitude=1.0).values
    psi_dir = random_spinor(g, rng, decay=decay, amplitude=1.0).values
    cplus = s.pos_coef_hat(project_pm_hat(g, fft_spinor(psi_dir), +1.0))
    u_norm = math.sqrt(float(np.mean(u_dir)) ** 2 + grad_norm_sq(g, u_dir))
    c_norm = math.sqrt(s.coef_hhalf_norm_sq(cplus))
    u_vals = (wu / u_norm) * u_dir
    c_vals = (wp / c_norm) * cplus
    scale = radius / math.hypot(wu, wp)
    pt = None
    for _ in range(2):
        ws = ConstraintWorkspace(coupling, scale * u_vals)
        pt = project_to_fiber(coupling, ScalarField(g, scale * u_vals),
                              s.spinor_from_pos_coef(scale * c_vals),
                              workspace=ws)
        full = math.sqrt(float(np.mean(pt.u.values)) ** 2
                         + grad_norm_sq(g, pt.u.values)
                         + hhalf_sq(g, pt.psi))
        scale *= radius / full
    return pt


def hhalf_sq(geometry, psi: SpinorField) -> float:
    ph = fft_spinor(psi)
    w = 1.0 + geometry.abs_w
    nn = geometry.N1 * geometry.N2
    return float(np.sum(w * (ph.real ** 2 + ph.imag ** 2))) * geometry.cell / nn


def _cone_parts(coupling: Coupling, pt: NehariPoint):
    """(|u|_H1, |phi1|^2, |phi2|^2, |psi-|^2) split at the coupling level."""
    g = coupling.geometry
    s = coupling.spectrum
    ph = fft_spinor(pt.psi)
    cpos = s.pos_coef_hat(ph)
    cneg = s.neg_coef_hat(ph)
    w = 1.0 + g.abs_w
    low = (g.abs_w < coupling.rho)
    phi2_sq = float(np.sum(w[low] * np.abs(cpos[low]) ** 2))
    phi1_sq = float(np.sum(w[~low] * np.abs(cpos[~low]) ** 2))
    minus_sq = float(np.sum(w * np.abs(cneg) ** 2))
    u_h1 = math.sqrt(float(np.mean(pt.u.values)) ** 2
                     + grad_norm_sq(g, pt.u.values))
    return u_h1, phi1_sq, phi2_sq, minus_sq


def estimate_theta(coupling: Coupling, radius: float, samples: int, seed: int,
                   tau: float | None = None) -> tuple[float, int]:
    """Sampled lower bound min J - vol on the radius-r sphere in the
    constraint set; with ``tau`` set, samples inside the low-mode cone are
    excluded (linking geometry).  Returns (theta_hat, kept_samples)."""
    rng = np.random.default_rng(seed)
    g = coupling.geometry
    kept = 0
    theta = math.inf
    attempts = 0
    while kept < samples and attempts < 20 * samples:
        attempts += 1
        pt = _coordinate_sphere_point(coupling, rng, radius)
        if tau is not None:
            u_h1, phi1_sq, phi2_sq, minus_sq = _cone_parts(coupling, pt)
            if u_h1 + phi1_sq + minus_sq < tau * phi2_sq:
                continue  # inside the cone: excluded from the sphere slice
        kept += 1
        J = evaluate(coupling, pt.u, pt.psi).J
        theta = min(theta, J - g.volume)
    if kept == 0:
        raise DeformationError("theta scan found no admissible sphere samples")
    return float(theta), kept


def measure_domination(coupling: Coupling, samples: int = 100, seed: int = 2,
                       u_amplitude: float = 0.5) -> float:
    """Empirical constant C with ||psi-|| <= C rho ||psi+|| over random
    bounded-u fiber completions."""
    from .fields import random_scalar, random_spinor
    from .spectral import project_pm_hat

    rng = np.random.default_rng(seed)
    g = coupling.geometry
    s = coupling.spectrum
    worst = 0.0
    for _ in range(samples):
        u = random_scalar(g, rng, decay=1.5, amplitude=u_amplitude)
        psi = random_spinor(g, rng, decay=1.5, amplitude=1.0)
        cplus = s.pos_coef_hat(project_pm_hat(g, fft_spinor(psi.values), +1.0))
        pt = project_to_fiber(coupling, u, s.spinor_from_pos_coef(cplus))
        cneg = s.neg_coef(pt.psi)
        plus_sq = s.coef_hhalf_norm_sq(cplus)
        minus_sq = s.coef_hhalf_norm_sq(cneg)
        if plus_sq > 0:
            worst = max(worst, math.sqrt(minus_sq / plus_sq) / coupling.rho)
    return worst


# --------------------------------------------------------------------------
# mountain pass
# --------------------------------------------------------------------------

def default_endpoint(coupling: Coupling) -> tuple[float, float]:
    """(ubar1, s) with rho e^{ubar1} = lambda1 + 2 and J(ubar1, s phi1) < 0."""
    lam1 = coupling.spectrum.lambda1
    vol = coupling.geometry.volume
    ubar1 = math.log((lam1 + 2.0) / coupling.rho)
    depth = coupling.rho * math.exp(ubar1) - lam1  # = 2 by construction
    s = 1.0
    for _ in range(200):
        if vol * (math.exp(2 * ubar1) - 2 * ubar1) - 2.0 * depth * s * s < 0:
            return ubar1, s
        s *= 1.5
    raise ConstantsInfeasibleError("could not find a negative endpoint")


def _closed_form_endpoint_energy(coupling: Coupling, ubar1: float, s: float) -> float:
    lam1 = coupling.spectrum.lambda1
    vol = coupling.geometry.volume
    return (vol * (math.exp(2 * ubar1) - 2 * ubar1)
            - 2.0 * (coupling.rho * math.exp(ubar1) - lam1) * s * s)


def _node_distance(coupling: Coupling, a: _Node, b: _Node) -> float:
    g = coupling.geometry
    s = coupling.spectrum
    du = a.u - b.u
    dc = a.cplus - b.cplus
    return math.sqrt(float(np.mean(du)) ** 2 + grad_norm_sq(g, du)
                     + s.coef_hhalf_norm_sq(dc))


def _respline(coupling: Coupling, nodes: list[_Node],
              vol: float) -> list[_Node]:
    """Redistribute interior nodes by weighted coordinate arclength.

    Segments near the current maximum get ~6x the node density so the ridge
    crossing stays resolved; a resampling that would raise the measured max
    (interpolation artifact) is discarded.
    """
    dists = [_node_distance(coupling, nodes[i], nodes[i + 1])
             for i in range(len(nodes) - 1)]
    total = sum(dists)
    if total == 0:
        return nodes
    level = max(nd.J for nd in nodes)
    span = max(level - vol, 1e-30)
    weights = []
    for i, d in enumerate(dists):
        h = max(nodes[i].J, nodes[i + 1].J)
        frac = min(max((h - vol) / span, 0.0), 1.0)
        weights.append(d * (1.0 + 5.0 * frac))
    cum = np.concatenate([[0.0], np.cumsum(weights)])
    targets = np.linspace(0.0, cum[-1], len(nodes))
    old_max = level
    new_nodes = [nodes[0]]
    for t in targets[1:-1]:
        i = int(np.searchsorted(cum, t, side="right") - 1)
        i = min(i, len(nodes) - 2)
        w = 0.0 if weights[i] == 0 else (t - cum[i]) / weights[i]
        u = (1 - w) * nodes[i].u + w * nodes[i + 1].u
        c = (1 - w) * nodes[i].cplus + w * nodes[i + 1].cplus
        try:
            new_nodes.append(_make_node(coupling, u, c))
        except (EnergyOverflowError, FiberSolveError):
            return nodes  # keep the old discretization
    new_nodes.append(nodes[-1])
    if max(nd.J for nd in new_nodes) > old_max + 1e-12:
        return nodes
    return new_nodes


def _interior_argmax(nodes: list[_Node]) -> int:
    best, best_j = None, -math.inf
    for i, nd in enumerate(nodes):
        if not nd.pinned and nd.J > best_j:
            best, best_j = i, nd.J
    if best is None:
        raise DeformationError("no interior nodes to deform")
    return best


def _deform_to_stagnation(coupling: Coupling, nodes, deform_steps: int,
                          stag_window: int, stag_tol: float,
                          proj_for=None, maintain=None,
                          polish_probe=None, probe_every: int = 25,
                          trace=None):
    """Sweep deformation loop; returns (levels, polished_or_None).

    Each sweep applies one backtracking descent step to every unpinned node;
    ``proj_for(nodes, i)`` may supply H-orthonormal directions to project
    out of node i's step (ridge handling).  ``maintain`` is an optional path
    maintenance hook (resplining).  The recorded sweep maxima are
    non-increasing because every node update is a descent step.
    """
    levels = [max(nd.J for nd in nodes)]
    for sweep in range(deform_steps):
        for i in range(len(nodes)):
            if nodes[i].pinned:
                continue
            dirs = proj_for(nodes, i) if proj_for is not None else None
            _descend_node_once(coupling, nodes[i], proj_out=dirs)
        if maintain is not None:
            maintain(nodes, sweep)
        level = max(nd.J for nd in nodes)
        levels.append(level)
        if trace is not None:
            trace({"event": "deform_sweep", "sweep": sweep, "level": level})
        stagnant = len(levels) > stag_window and (
            levels[-stag_window] - levels[-1]
            <= stag_tol * max(1.0, abs(levels[-1])))
        if polish_probe is not None and (
                stagnant or (sweep + 1) % probe_every == 0):
            polished = polish_probe(nodes)
            if polished is not None:
                return levels, polished
            if stagnant:
                stag_tol *= 0.1  # keep deforming rather than giving up
    return levels, None


def _ascend_node_once(coupling: Coupling, node: _Node, within,
                      level_cap: float) -> float:
    """One Armijo ascent step confined to span(``within``).

    Mirror image of :func:`_descend_node_once` used to keep a near-ridge
    node at the energy maximum over the unstable subspace.  Gradient ascent
    cannot jump across the ridge, so the exponential growth region of the
    functional stays out of reach; ``level_cap`` is a safety net.
    """
    ws = ConstraintWorkspace(coupling, node.u)
    d_u, d_c, _ = _reduced_direction(coupling, node, ws)
    # ascent lift is -(descent direction); keep only its span(within) part
    a_u = np.zeros_like(d_u)
    a_c = np.zeros_like(d_c)
    for eu, ec in within:
        cin = _coord_inner(coupling, -d_u, -d_c, eu, ec)
        a_u += cin * eu
        a_c += cin * ec
    m = _coord_norm_sq(coupling, a_u, a_c)
    if m == 0.0:
        return 0.0
    alpha = node.alpha
    while alpha > MIN_STEP:
        try:
            trial = _make_node(coupling, node.u + alpha * a_u,
                               node.cplus + alpha * a_c, alpha=node.alpha)
        except (EnergyOverflowError, FiberSolveError):
            alpha *= 0.5
            continue
        if node.J + ARMIJO_C1 * alpha * m <= trial.J <= level_cap:
            increase = trial.J - node.J
            node.u, node.cplus = trial.u, trial.cplus
            node.point, node.J = trial.point, trial.J
            node.alpha = min(alpha * 2.0, 4.0)
            return increase
        alpha *= 0.5
    node.alpha = max(node.alpha * 0.5, 4.0 * MIN_STEP)
    return 0.0


def _orthonormalize(coupling: Coupling, dirs):
    out = []
    for du, dc in dirs:
        du, dc = np.array(du), np.array(dc)
        for eu, ec in out:
            cin = _coord_inner(coupling, du, dc, eu, ec)
            du -= cin * eu
            dc -= cin * ec
        nrm = math.sqrt(_coord_norm_sq(coupling, du, dc))
        if nrm > 1e-12:
            out.append((du / nrm, dc / nrm))
    return out


def _saddle_refine(coupling: Coupling, node: _Node, tol: float,
                   axes=None, level_cap: float | None = None,
                   max_rounds: int = 60):
    """Local min-max refinement of a near-saddle node into a solution.

    Far from the saddle it alternates a one-dimensional maximization along
    the current ascent direction (which prevents the collapse toward the
    trivial well) with descent steps transversal to it; close to the saddle
    the ascent component is already peaked, so it descends transversally
    until the Euler-Lagrange residual enters the Newton basin.  ``axes``
    are additional unstable directions kept out of the descent (the linking
    cylinder axes).
    """
    work = _Node(np.array(node.u), np.array(node.cplus), node.point, node.J,
                 max(node.alpha, 0.25))
    cap = node.J + 1.0 if level_cap is None else level_cap

    def ascent_direction():
        ws = ConstraintWorkspace(coupling, work.u)
        d_u, d_c, m = _reduced_direction(coupling, work, ws)
        nrm = math.sqrt(-m)
        if nrm < 1e-14:
            return None
        return -d_u / nrm, -d_c / nrm

    if axes:
        unstable = _orthonormalize(coupling, list(axes))
        refreshable = False
    else:
        est = ascent_direction()
        if est is None:
            return None
        unstable = [est]
        refreshable = True
    newton_tries = 0
    stall = 0
    last_res = math.inf
    for _ in range(max_rounds):
        r_u, r_psi = el_residual(coupling, work.point.u, work.point.psi)
        res = residual_norm(r_u, r_psi)
        if res < 1e-3:
            newton_tries += 1
            try:
                return newton_polish(coupling, work.point,
                                     target=min(tol, 1e-11))
            except NewtonError:
                if newton_tries >= 3:
                    return None
        if res >= 0.999 * last_res:
            stall += 1
            if stall >= 5:
                if refreshable:
                    est = ascent_direction()
                    if est is None:
                        return None
                    unstable = [est]
                work.alpha = max(work.alpha, 0.25)
                stall = 0
        else:
            stall = 0
        last_res = res
        for _ in range(2):
            if _ascend_node_once(coupling, work, unstable, cap) == 0.0:
                break
        for _ in range(2):
            if _descend_node_once(coupling, work, proj_out=unstable) == 0.0:
                break
    return None


def _finalize(coupling: Coupling, solution: NehariPoint, regime: str,
              levels, theta_hat: float, radius: float, constants=None,
              domination=None, seed: int = 1) -> MinMaxResult:
    g = coupling.geometry
    bd = evaluate(coupling, solution.u, solution.psi)
    r_u, r_psi = el_residual(coupling, solution.u, solution.psi)
    res = residual_norm(r_u, r_psi)
    ident = ps_identities(coupling, solution)
    psi_l2 = math.sqrt(float(np.sum(solution.psi.values.real ** 2
                                    + solution.psi.values.imag ** 2)) * g.cell)
    return MinMaxResult(solution=solution, level=bd.J, regime=regime,
                        energy=bd, residual=res, theta_hat=theta_hat,
                        sphere_radius=radius, identity=ident, psi_l2=psi_l2,
                        iterations=len(levels) - 1, path_levels=levels,
                        constants=constants, domination_constant=domination)


def mountain_pass(coupling: Coupling,
                  config: MountainPassConfig | None = None,
                  trace=None) -> MinMaxResult:
    """Min-max over paths from the trivial point to a deep endpoint.

    Valid for couplings below the first positive Dirac eigenvalue.  The
    returned solution has nonzero spinor part, Euler-Lagrange residual below
    the configured tolerance, and energy above the trivial level by the
    sampled barrier theta_hat.
    """
    config = config or MountainPassConfig()
    lam1 = coupling.spectrum.lambda1
    if not coupling.rho < lam1:
        raise RegimeError(f"mountain pass requires 0 < rho < lambda1 = "
                          f"{lam1:g}; got rho = {coupling.rho:g} (use the "
                          f"linking driver above the first level)")
    g = coupling.geometry
    s = coupling.spectrum
    vol = g.volume

    if config.endpoint is not None:
        ubar1, send = config.endpoint
    else:
        ubar1, send = default_endpoint(coupling)
    if not coupling.rho * math.exp(ubar1) > lam1 + 1.0:
        raise ConstantsInfeasibleError(
            f"endpoint depth condition rho e^ubar1 > lambda1 + 1 violated "
            f"(rho e^ubar1 = {coupling.rho * math.exp(ubar1):.4g})")
    if not _closed_form_endpoint_energy(coupling, ubar1, send) < 0:
        raise ConstantsInfeasibleError("endpoint energy is not negative")

    phi1_coef = s.pos_coef(s.eigenspinor(1))
    n_nodes = config.path_nodes
    nodes = []
    for i in range(n_nodes + 1):
        t = i / n_nodes
        u = np.full((g.N1, g.N2), t * ubar1)
        c = (t * send) * phi1_coef
        nodes.append(_make_node(coupling, u, c, alpha=config.step_size,
                                pinned=(i == 0 or i == n_nodes)))
    if trace is not None:
        trace({"event": "path_init", "nodes": len(nodes),
               "level": max(nd.J for nd in nodes),
               "endpoint_energy": nodes[-1].J})

    def proj_for(current_nodes, i):
        # top-tier nodes descend transversally to the local path tangent,
        # walking the ridge toward the saddle instead of sliding off it
        level = max(nd.J for nd in current_nodes)
        if current_nodes[i].J < vol + 0.25 * (level - vol):
            return None
        lo = current_nodes[max(i - 1, 0)]
        hi = current_nodes[min(i + 1, len(current_nodes) - 1)]
        tu = hi.u - lo.u
        tc = hi.cplus - lo.cplus
        nrm = math.sqrt(_coord_norm_sq(coupling, tu, tc))
        if nrm == 0:
            return None
        return [(tu / nrm, tc / nrm)]

    def maintain(current_nodes, sweep):
        if (sweep + 1) % 5 == 0:
            current_nodes[:] = _respline(coupling, current_nodes, vol)

    def probe(current_nodes):
        level = max(nd.J for nd in current_nodes)
        cap = vol + 2.0 * (level - vol) + 1.0
        order = sorted((nd for nd in current_nodes if not nd.pinned),
                       key=lambda nd: -nd.J)
        for cand in order[:3]:
            r_u, r_psi = el_residual(coupling, cand.point.u, cand.point.psi)
            if residual_norm(r_u, r_psi) > 10.0:
                continue
            sol = _saddle_refine(coupling, cand, config.tol, level_cap=cap)
            if sol is None:
                continue
            bd = evaluate(coupling, sol.u, sol.psi)
            psi_l2 = math.sqrt(float(np.sum(sol.psi.values.real ** 2
                                            + sol.psi.values.imag ** 2)) * g.cell)
            if psi_l2 > 1e-3 and bd.J > vol + 1e-9:
                return sol
        return None

    levels, solution = _deform_to_stagnation(
        coupling, nodes, config.deform_steps, config.stag_window,
        config.stag_tol, proj_for=proj_for, maintain=maintain,
        polish_probe=probe, trace=trace)
    if solution is None:
        final = max(nd.J for nd in nodes)
        if final <= vol + 1e-6:
            raise PathCollapseError(
                f"path max level collapsed to the trivial level "
                f"({final:.6g} vs vol {vol:.6g}); no barrier detected")
        raise DeformationError(
            f"deformation exhausted {config.deform_steps} steps without a "
            f"polished solution (level {final:.6g})")

    theta_hat, _ = estimate_theta(coupling, config.sphere_radius,
                                  config.sphere_samples, config.seed)
    return _finalize(coupling, solution, "mountain_pass", levels, theta_hat,
                     config.sphere_radius, seed=config.seed)


# --------------------------------------------------------------------------
# linking
# --------------------------------------------------------------------------

def _linking_window(coupling: Coupling, k: int):
    s = coupling.spectrum
    if not (1 <= k < s.distinct_levels.size):
        raise RegimeError(f"no linking window for k={k}")
    lam_k = float(s.distinct_levels[k - 1])
    lam_k1 = float(s.distinct_levels[k])
    if not (lam_k < coupling.rho < lam_k1):
        raise RegimeError(
            f"linking with k={k} requires rho in ({lam_k:g}, {lam_k1:g}); "
            f"got rho = {coupling.rho:g}")
    return lam_k, lam_k1


def select_linking_constants(coupling: Coupling, k: int,
                             vol: float | None = None,
                             seed: int = 1) -> LinkingConfig:
    """Fix the cylinder constants (T, A, R) and the cone parameter tau.

    T is the smallest depth putting the coupling one unit past the next
    level, with margin; A is the closed-form top-cap coefficient with a 10%
    margin; R is sized from a 256-sample scan of the side-boundary energy
    envelope, again with margin.  All three defining inequalities are
    re-verified before returning.
    """
    lam_k, lam_k1 = _linking_window(coupling, k)
    rho = coupling.rho
    vol = coupling.geometry.volume if vol is None else vol

    T = math.log((lam_k1 + 1.1) / rho)
    if not rho * math.exp(T) - lam_k1 >= 1.0:
        raise ConstantsInfeasibleError("bullet 1 failed: no admissible T")
    denom = 2.0 * T * T * (rho * math.exp(T) - lam_k1)
    A = 1.1 * math.sqrt(vol * (math.exp(2 * T) - 2 * T - 1.0) / denom)
    if not (vol * (math.exp(2 * T) - 2 * T) - 2 * A * A * T * T
            * (rho * math.exp(T) - lam_k1)) < vol:
        raise ConstantsInfeasibleError("bullet 2 failed: no admissible A")
    ts = np.linspace(0.0, T, 256)
    envelope = (vol * (np.exp(2 * ts) - 2 * ts - 1.0)
                + 2.0 * A * A * ts * ts * (lam_k1 - rho * np.exp(ts)))
    S = float(np.max(envelope))
    R = 1.1 * math.sqrt(max(S, 1e-12) / (2.0 * (rho - lam_k)))
    if not np.all(vol * (np.exp(2 * ts) - 2 * ts)
                  - 2.0 * (rho - lam_k) * R * R
                  + 2.0 * A * A * ts * ts * (lam_k1 - rho * np.exp(ts)) < vol):
        raise ConstantsInfeasibleError("bullet 3 failed: no admissible R")
    if T > 50 or A > 1e6 or R > 1e4:
        raise ConstantsInfeasibleError(
            f"constants exceed the overflow guard (T={T:.3g}, A={A:.3g}, "
            f"R={R:.3g}); rho may be too close to the lower level")
    C_dom = measure_domination(coupling, samples=20, seed=seed)
    tau = 4.0 * (1.0 + C_dom * rho * rho)
    return LinkingConfig(k=k, T=T, A=A, R=R, tau=tau, seed=seed)


def verify_linking_bullets(coupling: Coupling, config: LinkingConfig,
                           n_scan: int = 256) -> dict:
    """Re-evaluate the three constant-selection inequalities."""
    lam_k, lam_k1 = _linking_window(coupling, config.k)
    rho, vol = coupling.rho, coupling.geometry.volume
    T, A, R = config.T, config.A, config.R
    ts = np.linspace(0.0, T, n_scan)
    b1 = rho * math.exp(T) - lam_k1 >= 1.0
    b2 = (vol * (math.exp(2 * T) - 2 * T)
          - 2 * A * A * T * T * (rho * math.exp(T) - lam_k1)) < vol
    scan = (vol * (np.exp(2 * ts) - 2 * ts)
            - 2.0 * (rho - lam_k) * R * R
            + 2.0 * A * A * ts * ts * (lam_k1 - rho * np.exp(ts)))
    b3 = bool(np.all(scan < vol))
    return {"bullet1": bool(b1), "bullet2": bool(b2), "bullet3": b3,
            "side_envelope_max": float(np.max(scan))}


def _ball_points(m: int, n_ball: int, rng) -> np.ndarray:
    """Deterministic sample of the unit ball in C^m (real dim 2m), with the
    center first; rows are coefficient vectors."""
    pts = [np.zeros(m, dtype=np.complex128)]
    for _ in range(n_ball - 1):
        z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        z /= np.linalg.norm(z)
        r = rng.uniform(0.15, 0.95) ** (1.0 / (2 * m))
        pts.append(r * z)
    return np.array(pts)


def _sphere_points(m: int, n: int, rng) -> np.ndarray:
    out = []
    for _ in range(n):
        z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        out.append(z / np.linalg.norm(z))
    return np.array(out)


def linking(coupling: Coupling, config: LinkingConfig,
            trace=None) -> MinMaxResult:
    """Min-max over fillings of the cylinder spanning the low modes.

    Valid between two distinct Dirac levels.  Boundary nodes are pinned and
    must stay strictly below the trivial energy (a violation is a constants
    bug and raises); interior nodes deform by constrained descent and the
    maximal node is polished into a solution.
    """
    lam_k, lam_k1 = _linking_window(coupling, config.k)
    g = coupling.geometry
    s = coupling.spectrum
    rho, vol = coupling.rho, g.volume
    checks = verify_linking_bullets(coupling, config)
    if not all(checks[b] for b in ("bullet1", "bullet2", "bullet3")):
        raise ConstantsInfeasibleError(f"linking constants fail re-check: {checks}")

    m = s.count_below(rho)  # eigenvalues with multiplicity below the coupling
    low_coefs = np.array([s.pos_coef(s.eigenspinor(j)) for j in range(1, m + 1)])
    top_coef = s.pos_coef(s.eigenspinor(m + 1))
    lam_top = s.eigenvalue(m + 1)
    if not lam_top > rho:
        raise RegimeError("internal: cylinder cap eigenvalue below coupling")

    rng = np.random.default_rng(config.seed)
    n_t, n_ball = config.cylinder_grid
    ball = _ball_points(m, n_ball, rng) * config.R
    sphere = _sphere_points(m, max(8, n_ball // 3), rng) * config.R
    t_grid = np.linspace(0.0, config.T, n_t)

    def node_at(t, y, pinned):
        c = (config.A * t) * top_coef
        for a, base in zip(y, low_coefs):
            c = c + a * base
        u = np.full((g.N1, g.N2), t)
        return _make_node(coupling, u, c, alpha=config.step_size, pinned=pinned)

    nodes = []
    boundary_violations = []
    for it, t in enumerate(t_grid):
        cap = (it == 0 or it == n_t - 1)
        for y in ball:
            r = np.linalg.norm(y)
            pinned = cap or r >= config.R * (1 - 1e-12)
            if np.all(y == 0) and it == 0:
                continue  # the trivial corner J = vol sits on L2; skip it
            nd = node_at(t, y, pinned)
            nodes.append(nd)
            if pinned and nd.J >= vol:
                boundary_violations.append((float(t), float(r), nd.J))
        for y in sphere:
            nd = node_at(t, y, True)
            nodes.append(nd)
            if nd.J >= vol:
                boundary_violations.append((float(t), config.R, nd.J))
    if boundary_violations:
        worst = max(v[2] for v in boundary_violations)
        raise ConstantsInfeasibleError(
            f"{len(boundary_violations)} boundary nodes reach J >= vol "
            f"(worst {worst:.6g} vs {vol:.6g}); the linking constants are "
            f"inconsistent")
    if trace is not None:
        trace({"event": "cylinder_init", "nodes": len(nodes),
               "level": max(nd.J for nd in nodes)})

    # H-orthonormal cylinder-axis directions (the unstable subspace at the
    # linking saddle): projected out of top-tier descent steps
    axes = []
    t_dir_u = np.ones((g.N1, g.N2))
    t_dir_c = config.A * top_coef
    nrm = math.sqrt(_coord_norm_sq(coupling, t_dir_u, t_dir_c))
    axes.append((t_dir_u / nrm, t_dir_c / nrm))
    zero_u = np.zeros((g.N1, g.N2))
    for base in low_coefs:
        for phase in (1.0, 1.0j):
            c = phase * base
            nrm = math.sqrt(coupling.spectrum.coef_hhalf_norm_sq(c))
            axes.append((zero_u, c / nrm))

    def proj_for(current_nodes, i):
        level = max(nd.J for nd in current_nodes)
        if current_nodes[i].J < vol + 0.25 * (level - vol):
            return None
        return axes

    def probe(current_nodes):
        level = max(nd.J for nd in current_nodes)
        cap = vol + 2.0 * (level - vol) + 1.0
        order = sorted((nd for nd in current_nodes if not nd.pinned),
                       key=lambda nd: -nd.J)
        for cand in order[:3]:
            sol = _saddle_refine(coupling, cand, config.tol, axes=axes,
                                 level_cap=cap)
            if sol is None:
                continue
            bd = evaluate(coupling, sol.u, sol.psi)
            psi_l2 = math.sqrt(float(np.sum(sol.psi.values.real ** 2
                                            + sol.psi.values.imag ** 2)) * g.cell)
            if psi_l2 > 1e-3 and bd.J > vol + 1e-9:
                return sol
        return None

    levels, solution = _deform_to_stagnation(
        coupling, nodes, config.deform_steps, config.stag_window,
        config.stag_tol, proj_for=proj_for, polish_probe=probe, trace=trace)
    if solution is None:
        final = max(nd.J for nd in nodes)
        raise DeformationError(
            f"linking deformation exhausted {config.deform_steps} steps "
            f"without a polished solution (level {final:.6g})")

    theta_hat, kept = estimate_theta(coupling, config.sphere_radius,
                                     config.sphere_samples, config.seed,
                                     tau=config.tau)
    consts = {"T": config.T, "A": config.A, "R": config.R, "tau": config.tau,
              "k": config.k, "lambda_k": lam_k, "lambda_k1": lam_k1,
              "modes_below": m, "bullets": checks,
              "theta_samples_kept": kept}
    return _finalize(coupling, solution, "linking", levels, theta_hat,
                     config.sphere_radius, constants=consts,
                     domination=(config.tau / 4.0 - 1.0) / (rho * rho),
                     seed=config.seed)
