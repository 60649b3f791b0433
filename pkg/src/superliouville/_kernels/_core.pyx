# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled frequency-space kernels.

Single fused pass per mode; semantics identical to ``_numpy.py``.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"

ctypedef double complex cplx


def dirac_hat(cplx[:, :, ::1] psi_hat, double[:, ::1] w1, double[:, ::1] w2,
              out=None):
    cdef Py_ssize_t n1 = psi_hat.shape[1], n2 = psi_hat.shape[2]
    if out is None:
        out = np.empty((2, n1, n2), dtype=np.complex128)
    cdef cplx[:, :, ::1] o = out
    cdef Py_ssize_t i, j
    cdef cplx wm, a, b
    for i in range(n1):
        for j in range(n2):
            wm = w1[i, j] - 1j * w2[i, j]
            a = psi_hat[0, i, j]
            b = psi_hat[1, i, j]
            o[0, i, j] = wm * b
            o[1, i, j] = wm.conjugate() * a
    return out


def pm_project_hat(cplx[:, :, ::1] psi_hat, double[:, ::1] w1,
                   double[:, ::1] w2, double[:, ::1] absw, double sign,
                   out=None):
    cdef Py_ssize_t n1 = psi_hat.shape[1], n2 = psi_hat.shape[2]
    if out is None:
        out = np.empty((2, n1, n2), dtype=np.complex128)
    cdef cplx[:, :, ::1] o = out
    cdef Py_ssize_t i, j
    cdef cplx q, a, b
    for i in range(n1):
        for j in range(n2):
            q = (sign / absw[i, j]) * (w1[i, j] - 1j * w2[i, j])
            a = psi_hat[0, i, j]
            b = psi_hat[1, i, j]
            o[0, i, j] = 0.5 * (a + q * b)
            o[1, i, j] = 0.5 * (b + q.conjugate() * a)
    return out


def mode_scale(cplx[:, :, ::1] psi_hat, double[:, ::1] fac, out=None):
    cdef Py_ssize_t n1 = psi_hat.shape[1], n2 = psi_hat.shape[2]
    if out is None:
        out = np.empty((2, n1, n2), dtype=np.complex128)
    cdef cplx[:, :, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double f
    for i in range(n1):
        for j in range(n2):
            f = fac[i, j]
            o[0, i, j] = psi_hat[0, i, j] * f
            o[1, i, j] = psi_hat[1, i, j] * f
    return out


def polarization_coef(cplx[:, :, ::1] psi_hat, cplx[:, ::1] v0,
                      cplx[:, ::1] v1, out=None):
    cdef Py_ssize_t n1 = psi_hat.shape[1], n2 = psi_hat.shape[2]
    if out is None:
        out = np.empty((n1, n2), dtype=np.complex128)
    cdef cplx[:, ::1] o = out
    cdef Py_ssize_t i, j
    for i in range(n1):
        for j in range(n2):
            o[i, j] = (v0[i, j].conjugate() * psi_hat[0, i, j]
                       + v1[i, j].conjugate() * psi_hat[1, i, j])
    return out


def coef_from_polarization(cplx[:, ::1] coef, cplx[:, ::1] v0,
                           cplx[:, ::1] v1, out=None):
    cdef Py_ssize_t n1 = coef.shape[0], n2 = coef.shape[1]
    if out is None:
        out = np.empty((2, n1, n2), dtype=np.complex128)
    cdef cplx[:, :, ::1] o = out
    cdef Py_ssize_t i, j
    cdef cplx c
    for i in range(n1):
        for j in range(n2):
            c = coef[i, j]
            o[0, i, j] = c * v0[i, j]
            o[1, i, j] = c * v1[i, j]
    return out
