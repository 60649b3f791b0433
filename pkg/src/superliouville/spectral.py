"""Fourier-diagonalized Laplace and Dirac operators on the torus.

The Dirac operator uses the standard two-dimensional Clifford representation

    c(e1) = -i*sigma1,   c(e2) = -i*sigma2,

which satisfies c(X)c(Y) + c(Y)c(X) = -2 g(X,Y) and has chirality element
c(e1)c(e2) = -i*sigma3.  On the plane wave exp(i w.x) the operator
D = c(e1) d1 + c(e2) d2 acts as the Hermitian symbol

    A(w) = [[0, w1 - i w2], [w1 + i w2, 0]],

with eigenvalues +-|w| and eigenvectors (1, +-w/|w|)/sqrt(2), w = w1 + i w2.
Spinor fields are phase-reduced (see :mod:`superliouville.fields`), so the
wavenumbers are shifted by the spin offset; the offset (0,0) gives |w| = 0 at
the zero mode and a two-complex-dimensional kernel, the other three offsets
give invertible operators.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .fields import (ScalarField, SpinorField, TorusGeometry,
                     check_same_geometry)


class SpectrumError(ValueError):
    pass


def fft_spinor(psi: SpinorField | np.ndarray) -> np.ndarray:
    v = psi.values if isinstance(psi, SpinorField) else psi
    return np.ascontiguousarray(np.fft.fft2(v, axes=(1, 2)))


def ifft_spinor(geometry: TorusGeometry, psi_hat: np.ndarray) -> SpinorField:
    return SpinorField(geometry, np.fft.ifft2(psi_hat, axes=(1, 2)))


def laplacian_apply(geometry: TorusGeometry, u: ScalarField) -> ScalarField:
    check_same_geometry(geometry, u)
    uh = np.fft.fft2(u.values)
    return ScalarField(geometry, np.fft.ifft2(geometry.lap_symbol * uh).real)


def grad_norm_sq(geometry: TorusGeometry, values: np.ndarray) -> float:
    """Dirichlet energy of the mean-free part, by discrete Parseval."""
    uh = np.fft.fft2(values)
    w2 = geometry.ws1 ** 2 + geometry.ws2 ** 2
    n = geometry.N1 * geometry.N2
    return float(np.sum(w2 * (uh.real ** 2 + uh.imag ** 2))) * geometry.cell / n


def dirac_apply(geometry: TorusGeometry, psi: SpinorField) -> SpinorField:
    check_same_geometry(geometry, psi)
    ph = fft_spinor(psi)
    out = _kernels.dirac_hat(ph, geometry.w1, geometry.w2)
    return ifft_spinor(geometry, out)


def dirac_apply_hat(geometry: TorusGeometry, psi_hat: np.ndarray) -> np.ndarray:
    return _kernels.dirac_hat(psi_hat, geometry.w1, geometry.w2)


def dirac_quadratic_form(geometry: TorusGeometry, psi: SpinorField) -> float:
    """integral <D psi, psi> via mode sums (real for the Hermitian symbol)."""
    ph = fft_spinor(psi)
    dh = _kernels.dirac_hat(ph, geometry.w1, geometry.w2)
    n = geometry.N1 * geometry.N2
    acc = np.sum(dh * np.conj(ph))
    return float(acc.real) * geometry.cell / n


class DiracSpectrum:
    """Full eigendata of the discrete Dirac operator.

    Nonzero eigenvalues are indexed by j in Z\\{0}: positive j enumerates the
    positive eigenvalues by increasing value, ties broken by frequency pair
    lexicographically (sign descending means the +|w| branch precedes -|w|
    at equal |lambda|; the branches are indexed by the sign of j).  Negative
    j mirrors the positive side, lambda_{-j} = -lambda_j on the same mode.
    """

    def __init__(self, geometry: TorusGeometry):
        g = geometry
        self.geometry = g
        self.kernel_dim = g.kernel_dim

        w = g.w1 + 1j * g.w2
        absw = g.abs_w
        vplus = np.empty((2, g.N1, g.N2), dtype=np.complex128)
        vminus = np.empty_like(vplus)
        unit = np.where(absw > 0, w / np.where(absw > 0, absw, 1.0), 0.0)
        inv_sqrt2 = 1.0 / np.sqrt(2.0)
        vplus[0] = inv_sqrt2
        vplus[1] = unit * inv_sqrt2
        vminus[0] = inv_sqrt2
        vminus[1] = -unit * inv_sqrt2
        if self.kernel_dim:
            # conventional basis for the two-dimensional kernel at mode (0,0)
            vplus[:, 0, 0] = (1.0, 0.0)
            vminus[:, 0, 0] = (0.0, 1.0)
        self.vplus, self.vminus = vplus, vminus

        mask = absw > 0
        lam = absw[mask]
        kk1 = g.k1[mask]
        kk2 = g.k2[mask]
        order = np.lexsort((kk2, kk1, lam))
        self.pos_lams = lam[order]
        self.pos_modes = np.stack([kk1[order], kk2[order]], axis=1)
        self.n_pos = self.pos_lams.size

        self.distinct_levels, self.level_multiplicity = np.unique(
            self.pos_lams, return_counts=True)
        self.lambda1 = float(self.pos_lams[0]) if self.n_pos else np.inf

        # H^{1/2} coefficient normalization: unit-L2 eigenspinors
        self._coef_scale = np.sqrt(g.volume) / (g.N1 * g.N2)

    # -- indexed access ----------------------------------------------------

    def eigenvalue(self, j: int) -> float:
        if j == 0:
            raise SpectrumError("eigenvalues are indexed by nonzero integers")
        p = abs(j) - 1
        if p >= self.n_pos:
            raise SpectrumError(f"index {j} out of range (|j| <= {self.n_pos})")
        return float(np.sign(j) * self.pos_lams[p])

    def mode(self, j: int):
        p = abs(j) - 1
        return int(self.pos_modes[p, 0]), int(self.pos_modes[p, 1])

    def polarization(self, j: int) -> np.ndarray:
        k1, k2 = self.mode(j)
        v = self.vplus if j > 0 else self.vminus
        return v[:, k1 % self.geometry.N1, k2 % self.geometry.N2].copy()

    def eigenspinor(self, j: int) -> SpinorField:
        """Unit-L2 eigenspinor for lambda_j (phase-reduced values)."""
        g = self.geometry
        k1, k2 = self.mode(j)
        phase = np.exp(2j * np.pi * (k1 * g.x1 / g.L1 + k2 * g.x2 / g.L2))
        v = self.polarization(j)
        vals = np.empty((2, g.N1, g.N2), dtype=np.complex128)
        vals[0] = v[0] * phase
        vals[1] = v[1] * phase
        return SpinorField(g, vals / np.sqrt(g.volume))

    def eigenvalues_with_multiplicity(self) -> np.ndarray:
        """All 2*N1*N2 eigenvalues (kernel included), ascending."""
        lams = np.concatenate([-self.pos_lams[::-1],
                               np.zeros(self.kernel_dim),
                               self.pos_lams])
        return lams

    # -- distinct-level ladder (used by the min-max drivers) ---------------

    def distinct_level(self, k: int) -> float:
        """k-th distinct positive eigenvalue (1-based)."""
        if not (1 <= k <= self.distinct_levels.size):
            raise SpectrumError(f"no distinct level {k}")
        return float(self.distinct_levels[k - 1])

    def count_below(self, rho: float) -> int:
        """Number of positive eigenvalues (with multiplicity) below rho."""
        return int(np.searchsorted(self.pos_lams, rho, side="left"))

    def distance_to_spectrum(self, rho: float) -> float:
        lams = self.eigenvalues_with_multiplicity()
        return float(np.min(np.abs(lams - rho)))

    # -- polarized coefficients (phase space for the constraint solver) ----

    def _require_invertible(self, what: str):
        if self.kernel_dim:
            raise SpectrumError(
                f"{what} requires a trivial Dirac kernel; offset (0,0) has "
                f"kernel_dim={self.kernel_dim} (choose another spin structure)")

    def neg_coef_hat(self, psi_hat: np.ndarray) -> np.ndarray:
        """Unit-basis coefficients on the negative modes, (N1,N2) complex."""
        out = _kernels.polarization_coef(psi_hat, self.vminus[0], self.vminus[1])
        out *= self._coef_scale
        return out

    def pos_coef_hat(self, psi_hat: np.ndarray) -> np.ndarray:
        out = _kernels.polarization_coef(psi_hat, self.vplus[0], self.vplus[1])
        out *= self._coef_scale
        return out

    def neg_coef(self, psi: SpinorField) -> np.ndarray:
        return self.neg_coef_hat(fft_spinor(psi))

    def pos_coef(self, psi: SpinorField) -> np.ndarray:
        return self.pos_coef_hat(fft_spinor(psi))

    def hat_from_neg_coef(self, coef: np.ndarray) -> np.ndarray:
        return _kernels.coef_from_polarization(
            np.ascontiguousarray(coef / self._coef_scale),
            self.vminus[0], self.vminus[1])

    def hat_from_pos_coef(self, coef: np.ndarray) -> np.ndarray:
        return _kernels.coef_from_polarization(
            np.ascontiguousarray(coef / self._coef_scale),
            self.vplus[0], self.vplus[1])

    def spinor_from_neg_coef(self, coef: np.ndarray) -> SpinorField:
        return ifft_spinor(self.geometry, self.hat_from_neg_coef(coef))

    def spinor_from_pos_coef(self, coef: np.ndarray) -> SpinorField:
        return ifft_spinor(self.geometry, self.hat_from_pos_coef(coef))

    def coef_hhalf_norm_sq(self, coef: np.ndarray) -> float:
        """H^{1/2} norm^2 of sum_j c_j phi_j given unit-basis coefficients."""
        w = 1.0 + self.geometry.abs_w
        return float(np.sum(w * (coef.real ** 2 + coef.imag ** 2)))

    def csv_rows(self):
        """Spectrum export rows (j, lambda, k1, k2), negative side first."""
        for p in range(self.n_pos - 1, -1, -1):
            yield (-(p + 1), -float(self.pos_lams[p]),
                   int(self.pos_modes[p, 0]), int(self.pos_modes[p, 1]))
        for p in range(self.n_pos):
            yield (p + 1, float(self.pos_lams[p]),
                   int(self.pos_modes[p, 0]), int(self.pos_modes[p, 1]))


def eigendecompose(geometry: TorusGeometry) -> DiracSpectrum:
    return DiracSpectrum(geometry)


def project_pm(spectrum: DiracSpectrum, psi: SpinorField):
    """Split psi into positive- and negative-mode parts (requires h0 = 0)."""
    spectrum._require_invertible("the spectral splitting")
    check_same_geometry(spectrum.geometry, psi)
    g = spectrum.geometry
    ph = fft_spinor(psi)
    plus = _kernels.pm_project_hat(ph, g.w1, g.w2, g._abs_w_safe, +1.0)
    minus = _kernels.pm_project_hat(ph, g.w1, g.w2, g._abs_w_safe, -1.0)
    return ifft_spinor(g, plus), ifft_spinor(g, minus)


def project_pm_hat(geometry: TorusGeometry, psi_hat: np.ndarray, sign: float) -> np.ndarray:
    return _kernels.pm_project_hat(psi_hat, geometry.w1, geometry.w2,
                                   geometry._abs_w_safe, sign)


def frac_power_apply(spectrum: DiracSpectrum, s: float, psi: SpinorField) -> SpinorField:
    """Apply |D|^s by scaling mode j with |lambda_j|^s, s in [-1, 1]."""
    if not -1.0 <= s <= 1.0:
        raise SpectrumError(f"fractional power s={s} outside [-1, 1]")
    check_same_geometry(spectrum.geometry, psi)
    if s == 0.0:
        return psi.copy()
    g = spectrum.geometry
    ph = fft_spinor(psi)
    if spectrum.kernel_dim:
        knorm = np.sqrt(abs(ph[0, 0, 0]) ** 2 + abs(ph[1, 0, 0]) ** 2)
        total = np.sqrt(np.sum(ph.real ** 2 + ph.imag ** 2))
        if s < 0 and knorm > 1e-10 * max(total, 1e-300):
            raise SpectrumError("negative power of |D| is singular on the "
                                "kernel component (offset (0,0))")
        fac = g._abs_w_safe ** s
        fac = fac.copy()
        fac[0, 0] = 0.0  # annihilate the (numerically negligible) kernel part
    else:
        fac = g.abs_w ** s
    out = _kernels.mode_scale(ph, np.ascontiguousarray(fac))
    return ifft_spinor(g, out)


# -- norms -----------------------------------------------------------------

def h1_norm(u: ScalarField) -> float:
    """sqrt(|mean u|^2 + ||grad u||_L2^2), the chosen equivalent H^1 norm."""
    return float(np.sqrt(u.mean ** 2 + grad_norm_sq(u.geometry, u.values)))


def h1_inner(u: ScalarField, v: ScalarField) -> float:
    check_same_geometry(u, v)
    g = u.geometry
    uh, vh = np.fft.fft2(u.values), np.fft.fft2(v.values)
    w2 = g.ws1 ** 2 + g.ws2 ** 2
    n = g.N1 * g.N2
    cross = float(np.sum(w2 * (uh * np.conj(vh)).real)) * g.cell / n
    return u.mean * v.mean + cross


def hhalf_norm_sq_hat(geometry: TorusGeometry, psi_hat: np.ndarray) -> float:
    w = 1.0 + geometry.abs_w
    n = geometry.N1 * geometry.N2
    return float(np.sum(w * (psi_hat.real ** 2 + psi_hat.imag ** 2))) * geometry.cell / n


def hhalf_norm(psi: SpinorField) -> float:
    """sqrt(||psi||_L2^2 + || |D|^(1/2) psi ||_L2^2)."""
    return float(np.sqrt(hhalf_norm_sq_hat(psi.geometry, fft_spinor(psi))))


def hhalf_inner_re(a: SpinorField, b: SpinorField) -> float:
    check_same_geometry(a, b)
    g = a.geometry
    ah, bh = fft_spinor(a), fft_spinor(b)
    w = 1.0 + g.abs_w
    n = g.N1 * g.N2
    return float(np.sum(w * (ah * np.conj(bh)).real)) * g.cell / n


# -- Riesz representatives (for gradients in the product metric) -----------

def riesz_h1(geometry: TorusGeometry, l2_values: np.ndarray) -> np.ndarray:
    """Field n with <n, v>_{H1} = <g, v>_{L2} for all v.

    The constant part is vol*mean(g); the mean-free part solves -Lap n = g.
    """
    g = geometry
    gh = np.fft.fft2(l2_values)
    inv = np.zeros_like(g.lap_symbol)
    nz = g.lap_symbol != 0
    inv[nz] = -1.0 / g.lap_symbol[nz]
    vals = np.fft.ifft2(gh * inv).real
    return vals + g.volume * float(np.mean(l2_values))


def riesz_hhalf_hat(geometry: TorusGeometry, psi_hat: np.ndarray) -> np.ndarray:
    """(1 + |D|)^{-1} in frequency space (the H^{1/2} Riesz map from L2)."""
    fac = np.ascontiguousarray(1.0 / (1.0 + geometry.abs_w))
    return _kernels.mode_scale(psi_hat, fac)
