# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.  Must stay numerically interchangeable with _kernels_py."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs

cnp.import_array()

BACKEND = "cython"


def fixed_spectrum_moments(const double complex[::1] coeffs,
                           const double[::1] energies,
                           const double[:, ::1] theta):
    """Sums over samples of the projector moments for frozen-spectrum phases.

    ``theta[s, k]`` is the accumulated ``tau * sum 1/lambda`` of sample ``s``
    after step ``k``; the state is ``c_i exp(-i E_i theta)`` in the energy basis.
    Returns (sum rho, sum re^2, sum im^2, sum re*im), each of shape (n, d, d).
    """
    cdef Py_ssize_t S = theta.shape[0], n = theta.shape[1], d = coeffs.shape[0]
    cdef Py_ssize_t s, k, i, j
    cdef double ph, cr, ci, pr, pi_, qr, qi, re, im
    m1 = np.zeros((n, d, d), dtype=np.complex128)
    sre = np.zeros((n, d, d), dtype=np.float64)
    sim = np.zeros((n, d, d), dtype=np.float64)
    sx = np.zeros((n, d, d), dtype=np.float64)
    cdef double complex[:, :, ::1] M1 = m1
    cdef double[:, :, ::1] SRE = sre, SIM = sim, SX = sx
    cdef double[::1] psr = np.empty(d), psi = np.empty(d)
    with nogil:
        for s in range(S):
            for k in range(n):
                for i in range(d):
                    ph = energies[i] * theta[s, k]
                    cr = coeffs[i].real
                    ci = coeffs[i].imag
                    # (cr + i ci)(cos ph - i sin ph)
                    psr[i] = cr * cos(ph) + ci * sin(ph)
                    psi[i] = ci * cos(ph) - cr * sin(ph)
                for i in range(d):
                    pr = psr[i]
                    pi_ = psi[i]
                    for j in range(d):
                        qr = psr[j]
                        qi = psi[j]
                        re = pr * qr + pi_ * qi
                        im = pi_ * qr - pr * qi
                        M1[k, i, j] = M1[k, i, j] + (re + 1j * im)
                        SRE[k, i, j] += re * re
                        SIM[k, i, j] += im * im
                        SX[k, i, j] += re * im
    return m1, sre, sim, sx


def state_moments(const double complex[:, :, ::1] states):
    """Projector moment sums for explicit states of shape (S, n, d)."""
    cdef Py_ssize_t S = states.shape[0], n = states.shape[1], d = states.shape[2]
    cdef Py_ssize_t s, k, i, j
    cdef double pr, pi_, qr, qi, re, im
    m1 = np.zeros((n, d, d), dtype=np.complex128)
    sre = np.zeros((n, d, d), dtype=np.float64)
    sim = np.zeros((n, d, d), dtype=np.float64)
    sx = np.zeros((n, d, d), dtype=np.float64)
    cdef double complex[:, :, ::1] M1 = m1
    cdef double[:, :, ::1] SRE = sre, SIM = sim, SX = sx
    with nogil:
        for s in range(S):
            for k in range(n):
                for i in range(d):
                    pr = states[s, k, i].real
                    pi_ = states[s, k, i].imag
                    for j in range(d):
                        qr = states[s, k, j].real
                        qi = states[s, k, j].imag
                        re = pr * qr + pi_ * qi
                        im = pi_ * qr - pr * qi
                        M1[k, i, j] = M1[k, i, j] + (re + 1j * im)
                        SRE[k, i, j] += re * re
                        SIM[k, i, j] += im * im
                        SX[k, i, j] += re * im
    return m1, sre, sim, sx


cdef void _rhs(const double complex[:, ::1] h, double complex[:, ::1] rho,
               double complex[:, ::1] c, double complex[:, ::1] out,
               double complex pref, double a2) noexcept nogil:
    # out = pref [H, rho] - a2 [H, [H, rho]]
    cdef Py_ssize_t d = h.shape[0], i, j, l
    cdef double complex acc
    for i in range(d):
        for j in range(d):
            acc = 0
            for l in range(d):
                acc = acc + h[i, l] * rho[l, j] - rho[i, l] * h[l, j]
            c[i, j] = acc
    for i in range(d):
        for j in range(d):
            acc = 0
            for l in range(d):
                acc = acc + h[i, l] * c[l, j] - c[i, l] * h[l, j]
            out[i, j] = pref * c[i, j] - a2 * acc


def rk4_double_commutator(const double complex[:, ::1] rho0,
                          const double complex[:, ::1] h,
                          double alpha, double hbar, double dt,
                          Py_ssize_t n_steps, Py_ssize_t record_every):
    """Classical RK4 for ``d rho/dt = -(i/hbar)[H, rho] - alpha^2 [H, [H, rho]]``.

    Hermitian symmetrisation after every step; returns the recorded series
    (including the initial state) and the largest correction applied.
    """
    cdef Py_ssize_t d = h.shape[0], step, i, j, rec = 0
    cdef Py_ssize_t n_rec = n_steps // record_every + 1
    cdef double complex pref = -1j / hbar
    cdef double a2 = alpha * alpha, worst = 0.0, dev
    cdef double complex x, y
    series = np.empty((n_rec, d, d), dtype=np.complex128)
    cdef double complex[:, :, ::1] SER = series
    cdef double complex[:, ::1] rho = np.array(rho0, dtype=np.complex128)
    cdef double complex[:, ::1] tmp = np.empty((d, d), dtype=np.complex128)
    cdef double complex[:, ::1] c = np.empty((d, d), dtype=np.complex128)
    cdef double complex[:, ::1] k1 = np.empty((d, d), dtype=np.complex128)
    cdef double complex[:, ::1] k2 = np.empty((d, d), dtype=np.complex128)
    cdef double complex[:, ::1] k3 = np.empty((d, d), dtype=np.complex128)
    cdef double complex[:, ::1] k4 = np.empty((d, d), dtype=np.complex128)
    with nogil:
        SER[0, :, :] = rho
        rec = 1
        for step in range(1, n_steps + 1):
            _rhs(h, rho, c, k1, pref, a2)
            for i in range(d):
                for j in range(d):
                    tmp[i, j] = rho[i, j] + 0.5 * dt * k1[i, j]
            _rhs(h, tmp, c, k2, pref, a2)
            for i in range(d):
                for j in range(d):
                    tmp[i, j] = rho[i, j] + 0.5 * dt * k2[i, j]
            _rhs(h, tmp, c, k3, pref, a2)
            for i in range(d):
                for j in range(d):
                    tmp[i, j] = rho[i, j] + dt * k3[i, j]
            _rhs(h, tmp, c, k4, pref, a2)
            for i in range(d):
                for j in range(d):
                    rho[i, j] = rho[i, j] + (dt / 6.0) * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
            for i in range(d):
                for j in range(i, d):
                    x = rho[i, j]
                    y = rho[j, i]
                    dev = fabs(x.real - y.real) + fabs(x.imag + y.imag)
                    if dev > worst:
                        worst = dev
                    x = 0.5 * (x + y.conjugate())
                    if i == j:
                        x = x.real
                    rho[i, j] = x
                    rho[j, i] = x.conjugate()
            if step % record_every == 0:
                SER[rec, :, :] = rho
                rec += 1
    return series, 0.5 * worst
