"""Pure-numpy implementations of the frequency-space kernels.

These are the reference semantics; the compiled extension in ``_core.pyx``
must match them bit-for-bit (same operation order per mode).
"""

import numpy as np

BACKEND = "numpy"


def dirac_hat(psi_hat, w1, w2, out=None):
    """Apply the 2x2 Dirac symbol [[0, w1-i*w2], [w1+i*w2, 0]] per mode."""
    if out is None:
        out = np.empty_like(psi_hat)
    w_minus = w1 - 1j * w2
    out0 = w_minus * psi_hat[1]
    out1 = np.conj(w_minus) * psi_hat[0]
    out[0] = out0
    out[1] = out1
    return out


def pm_project_hat(psi_hat, w1, w2, absw, sign, out=None):
    """Project mode coefficients onto the +|w| (sign=+1) or -|w| (sign=-1)
    eigenspace of the Dirac symbol.  ``absw`` must be nonzero everywhere."""
    if out is None:
        out = np.empty_like(psi_hat)
    q = (sign / absw) * (w1 - 1j * w2)
    out0 = 0.5 * (psi_hat[0] + q * psi_hat[1])
    out1 = 0.5 * (psi_hat[1] + np.conj(q) * psi_hat[0])
    out[0] = out0
    out[1] = out1
    return out


def mode_scale(psi_hat, fac, out=None):
    """Multiply both spinor components by a real per-mode factor."""
    if out is None:
        out = np.empty_like(psi_hat)
    out[0] = psi_hat[0] * fac
    out[1] = psi_hat[1] * fac
    return out


def polarization_coef(psi_hat, v0, v1, out=None):
    """Per-mode projection coefficient <psi_hat, v> = conj(v0)*psi0 + conj(v1)*psi1."""
    if out is None:
        out = np.empty_like(psi_hat[0])
    np.multiply(np.conj(v0), psi_hat[0], out=out)
    out += np.conj(v1) * psi_hat[1]
    return out


def coef_from_polarization(coef, v0, v1, out=None):
    """Inverse of :func:`polarization_coef`: rebuild (2,N1,N2) mode data."""
    if out is None:
        out = np.empty((2,) + coef.shape, dtype=coef.dtype)
    out[0] = coef * v0
    out[1] = coef * v1
    return out
