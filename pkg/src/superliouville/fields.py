"""Periodic grid geometry, scalar/spinor fields, and spectral resampling.

Conventions used throughout the package:

* The domain is the flat torus [0,L1) x [0,L2) sampled on a uniform
  N1 x N2 grid; all integrals are uniform grid sums times the cell area
  (exact spectral quadrature on periodic grids).
* Scalar fields are real (N1,N2) arrays, spinor fields complex (2,N1,N2)
  arrays.  Spinors are stored in *phase-reduced* form: the physical section
  carries the boundary phase exp(2*pi*i*(d1*x1/L1 + d2*x2/L2)) fixed by the
  spin offset (d1,d2), and the stored values are the periodic remainder.
  Every pointwise quantity the solver needs (|psi|^2, Re<psi,phi>, e^u psi)
  is insensitive to that phase, while frequency-space operators act at the
  shifted wavenumbers 2*pi*(k+d)/L.
* Nonlinear products are dealiased by evaluating them on a 2x zero-padded
  grid and truncating back.  ``refine``/``coarsen`` are exact adjoints of
  one another with respect to the two quadrature inner products, which makes
  discrete gradients of padded-quadrature energies exact.  Nyquist-line
  content is split symmetrically between +-N/2 when padding (keeping real
  fields real); the round trip coarsen(refine(f)) therefore damps the two
  Nyquist lines by 1/2 per axis and is the identity on all lower modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VALID_OFFSETS = (0.0, 0.5)


class GeometryError(ValueError):
    pass


class FieldError(ValueError):
    pass


class TorusGeometry:
    """Flat torus with grid resolution and a spinor boundary phase.

    Precomputes integer frequency tables, scalar and offset-shifted spinor
    wavenumber grids, and grid coordinates.  Instances are immutable in
    practice and safe to share between threads.
    """

    def __init__(self, L1: float, L2: float, N1: int, N2: int,
                 spin_offset=(0.5, 0.0), pad_factor: int = 2):
        if not (L1 > 0 and L2 > 0):
            raise GeometryError(f"side lengths must be positive, got {L1}, {L2}")
        for n in (N1, N2):
            if int(n) != n or n < 8 or n % 2 != 0:
                raise GeometryError(f"resolutions must be even integers >= 8, got {N1}x{N2}")
        d1, d2 = float(spin_offset[0]), float(spin_offset[1])
        if d1 not in VALID_OFFSETS or d2 not in VALID_OFFSETS:
            raise GeometryError(f"spin offsets must be in {{0, 1/2}}, got ({d1}, {d2})")
        self.L1, self.L2 = float(L1), float(L2)
        self.N1, self.N2 = int(N1), int(N2)
        self.spin_offset = (d1, d2)
        self.volume = self.L1 * self.L2
        self.cell = self.volume / (self.N1 * self.N2)
        self.pad_factor = int(pad_factor)
        self.M1, self.M2 = self.pad_factor * self.N1, self.pad_factor * self.N2
        self.cell_fine = self.volume / (self.M1 * self.M2)

        k1 = np.rint(np.fft.fftfreq(self.N1) * self.N1).astype(np.int64)
        k2 = np.rint(np.fft.fftfreq(self.N2) * self.N2).astype(np.int64)
        self.k1 = np.ascontiguousarray(np.broadcast_to(k1[:, None], (self.N1, self.N2)))
        self.k2 = np.ascontiguousarray(np.broadcast_to(k2[None, :], (self.N1, self.N2)))
        two_pi = 2.0 * np.pi
        # scalar (periodic) wavenumbers and Laplace symbol
        self.ws1 = two_pi * self.k1 / self.L1
        self.ws2 = two_pi * self.k2 / self.L2
        self.lap_symbol = -(self.ws1 ** 2 + self.ws2 ** 2)
        # spinor wavenumbers, shifted by the boundary phase
        self.w1 = np.ascontiguousarray(two_pi * (self.k1 + d1) / self.L1)
        self.w2 = np.ascontiguousarray(two_pi * (self.k2 + d2) / self.L2)
        self.abs_w = np.hypot(self.w1, self.w2)
        self.kernel_dim = 2 if (d1 == 0.0 and d2 == 0.0) else 0
        if self.kernel_dim:
            self._abs_w_safe = self.abs_w.copy()
            self._abs_w_safe[0, 0] = 1.0  # guard the kernel mode in divisions
        else:
            self._abs_w_safe = self.abs_w

        x1 = np.arange(self.N1) * (self.L1 / self.N1)
        x2 = np.arange(self.N2) * (self.L2 / self.N2)
        self.x1, self.x2 = x1[:, None], x2[None, :]

    def __eq__(self, other):
        return (isinstance(other, TorusGeometry)
                and self.L1 == other.L1 and self.L2 == other.L2
                and self.N1 == other.N1 and self.N2 == other.N2
                and self.spin_offset == other.spin_offset)

    def __hash__(self):
        return hash((self.L1, self.L2, self.N1, self.N2, self.spin_offset))

    def __repr__(self):
        d1, d2 = self.spin_offset
        return (f"TorusGeometry(L=({self.L1:g},{self.L2:g}), "
                f"N=({self.N1},{self.N2}), offset=({d1:g},{d2:g}))")

    def integrate(self, values) -> float:
        v = values.real if np.iscomplexobj(values) else values
        return float(np.sum(v)) * self.cell

    def integrate_fine(self, values) -> float:
        v = values.real if np.iscomplexobj(values) else values
        return float(np.sum(v)) * self.cell_fine


def build_geometry(L1, L2, N1, N2, spin_offset=(0.5, 0.0)) -> TorusGeometry:
    """Validated geometry constructor (see :class:`TorusGeometry`)."""
    return TorusGeometry(L1, L2, N1, N2, spin_offset)


@dataclass
class ScalarField:
    geometry: TorusGeometry
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.geometry.N1, self.geometry.N2):
            raise FieldError(f"scalar field shape {self.values.shape} does not "
                             f"match {self.geometry}")
        if not np.all(np.isfinite(self.values)):
            raise FieldError("scalar field contains non-finite values")

    def copy(self) -> "ScalarField":
        return ScalarField(self.geometry, self.values.copy())

    @property
    def mean(self) -> float:
        return float(self.values.mean())


@dataclass
class SpinorField:
    geometry: TorusGeometry
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.complex128)
        if self.values.shape != (2, self.geometry.N1, self.geometry.N2):
            raise FieldError(f"spinor field shape {self.values.shape} does not "
                             f"match {self.geometry}")
        if not np.all(np.isfinite(self.values)):
            raise FieldError("spinor field contains non-finite values")

    def copy(self) -> "SpinorField":
        return SpinorField(self.geometry, self.values.copy())

    def pointwise_norm_sq(self) -> np.ndarray:
        v = self.values
        return (v.real ** 2 + v.imag ** 2).sum(axis=0)


def zero_scalar(geometry: TorusGeometry) -> ScalarField:
    return ScalarField(geometry, np.zeros((geometry.N1, geometry.N2)))


def zero_spinor(geometry: TorusGeometry) -> SpinorField:
    return SpinorField(geometry, np.zeros((2, geometry.N1, geometry.N2), dtype=np.complex128))


def check_same_geometry(a, b):
    ga = a.geometry if hasattr(a, "geometry") else a
    gb = b.geometry if hasattr(b, "geometry") else b
    if ga != gb:
        raise FieldError(f"geometry mismatch: {ga} vs {gb}")


# -- inner products and norms ---------------------------------------------

def l2_inner_scalar(a: ScalarField, b: ScalarField) -> float:
    check_same_geometry(a, b)
    return a.geometry.cell * float(np.sum(a.values * b.values))


def l2_inner_spinor(a: SpinorField, b: SpinorField) -> complex:
    """Complex L^2 product, conjugate-linear in the second argument."""
    check_same_geometry(a, b)
    return a.geometry.cell * complex(np.sum(a.values * np.conj(b.values)))


def l2_inner_spinor_re(a: SpinorField, b: SpinorField) -> float:
    """Real (bundle-metric) L^2 product Re<a,b>."""
    check_same_geometry(a, b)
    av, bv = a.values, b.values
    return a.geometry.cell * float(np.sum(av.real * bv.real + av.imag * bv.imag))


def l2_norm(field) -> float:
    g = field.geometry
    v = field.values
    return float(np.sqrt(np.sum(v.real ** 2 + v.imag ** 2) * g.cell))


def lp_norm(field, p: float) -> float:
    """L^p norm by grid quadrature; spinors use the pointwise C^2 magnitude."""
    g = field.geometry
    v = field.values
    if v.ndim == 3:
        mag = np.sqrt((v.real ** 2 + v.imag ** 2).sum(axis=0))
    else:
        mag = np.abs(v)
    return float((np.sum(mag ** p) * g.cell) ** (1.0 / p))


# -- padded resampling (dealiasing) ---------------------------------------

def _pad_hat_axis(ah: np.ndarray, axis: int, m: int) -> np.ndarray:
    """Zero-pad FFT coefficients along one axis, splitting the Nyquist mode."""
    a = np.moveaxis(ah, axis, -1)
    n = a.shape[-1]
    h = n // 2
    out = np.zeros(a.shape[:-1] + (m,), dtype=ah.dtype)
    out[..., :h] = a[..., :h]
    out[..., m - h + 1:] = a[..., h + 1:]
    ny = 0.5 * a[..., h]
    out[..., m - h] = ny
    out[..., h] = ny
    return np.moveaxis(out, -1, axis)


def _trunc_hat_axis(fh: np.ndarray, axis: int, n: int) -> np.ndarray:
    """Exact transpose of :func:`_pad_hat_axis` (gathers both Nyquist lines)."""
    f = np.moveaxis(fh, axis, -1)
    m = f.shape[-1]
    h = n // 2
    out = np.empty(f.shape[:-1] + (n,), dtype=fh.dtype)
    out[..., :h] = f[..., :h]
    out[..., h + 1:] = f[..., m - h + 1:]
    out[..., h] = 0.5 * (f[..., m - h] + f[..., h])
    return np.moveaxis(out, -1, axis)


def pad_hat(ah: np.ndarray, M1: int, M2: int) -> np.ndarray:
    return _pad_hat_axis(_pad_hat_axis(ah, -2, M1), -1, M2)


def trunc_hat(fh: np.ndarray, N1: int, N2: int) -> np.ndarray:
    return _trunc_hat_axis(_trunc_hat_axis(fh, -2, N1), -1, N2)


def refine(geometry: TorusGeometry, values: np.ndarray) -> np.ndarray:
    """Spectral interpolation onto the padded grid (exact on sub-Nyquist modes)."""
    g = geometry
    scale = (g.M1 * g.M2) / (g.N1 * g.N2)
    fh = pad_hat(np.fft.fft2(values, axes=(-2, -1)), g.M1, g.M2)
    fine = np.fft.ifft2(fh, axes=(-2, -1)) * scale
    if not np.iscomplexobj(values):
        return np.ascontiguousarray(fine.real)
    return np.ascontiguousarray(fine)


def coarsen(geometry: TorusGeometry, fine_values: np.ndarray) -> np.ndarray:
    """Quadrature adjoint of :func:`refine`; truncates back to the coarse band."""
    g = geometry
    scale = (g.N1 * g.N2) / (g.M1 * g.M2)
    ch = trunc_hat(np.fft.fft2(fine_values, axes=(-2, -1)), g.N1, g.N2)
    coarse = np.fft.ifft2(ch, axes=(-2, -1)) * scale
    if not np.iscomplexobj(fine_values):
        return np.ascontiguousarray(coarse.real)
    return np.ascontiguousarray(coarse)


def refine_from_hat(geometry: TorusGeometry, hat: np.ndarray) -> np.ndarray:
    """refine() starting from coarse FFT coefficients (skips one transform)."""
    g = geometry
    scale = (g.M1 * g.M2) / (g.N1 * g.N2)
    return np.fft.ifft2(pad_hat(hat, g.M1, g.M2), axes=(-2, -1)) * scale


def coarsen_to_hat(geometry: TorusGeometry, fine_values: np.ndarray) -> np.ndarray:
    """coarsen() returning the coarse FFT coefficients directly."""
    g = geometry
    scale = (g.N1 * g.N2) / (g.M1 * g.M2)
    return trunc_hat(np.fft.fft2(fine_values, axes=(-2, -1)), g.N1, g.N2) * scale


# -- random fields --------------------------------------------------------

def random_scalar(geometry: TorusGeometry, rng: np.random.Generator,
                  decay: float = 2.0, amplitude: float = 1.0,
                  mean_zero: bool = False, band: int | None = None) -> ScalarField:
    """Random smooth field: white noise shaped by (1+|w|)^(-decay)."""
    g = geometry
    noise = rng.standard_normal((g.N1, g.N2))
    envelope = (1.0 + np.hypot(g.ws1, g.ws2)) ** (-decay)
    if band is not None:
        envelope = envelope * ((np.abs(g.k1) <= band) & (np.abs(g.k2) <= band))
    vals = np.fft.ifft2(np.fft.fft2(noise) * envelope).real
    if mean_zero:
        vals = vals - vals.mean()
    rms = np.sqrt(np.mean(vals ** 2))
    if rms > 0:
        vals = vals * (amplitude / rms)
    return ScalarField(g, vals)


def random_spinor(geometry: TorusGeometry, rng: np.random.Generator,
                  decay: float = 2.0, amplitude: float = 1.0,
                  band: int | None = None) -> SpinorField:
    """Random smooth spinor; both components independently shaped."""
    g = geometry
    noise = rng.standard_normal((2, g.N1, g.N2)) + 1j * rng.standard_normal((2, g.N1, g.N2))
    envelope = (1.0 + np.hypot(g.ws1, g.ws2)) ** (-decay)
    if band is not None:
        envelope = envelope * ((np.abs(g.k1) <= band) & (np.abs(g.k2) <= band))
    vals = np.fft.ifft2(np.fft.fft2(noise, axes=(1, 2)) * envelope, axes=(1, 2))
    rms = np.sqrt(np.mean(vals.real ** 2 + vals.imag ** 2))
    if rms > 0:
        vals = vals * (amplitude / rms)
    return SpinorField(g, vals)
