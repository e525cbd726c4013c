# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Mirrors ``wentzell._kernels_py`` operation for operation."""

from libc.math cimport pow, sqrt


def stiffness_apply(const double complex[:, ::1] u,
                    const double[:, ::1] cx,
                    const double[:, ::1] ct,
                    double complex[:, ::1] out):
    # gather form: each node sums c * (u_self - u_neighbour) over its edges
    cdef Py_ssize_t nx = u.shape[0], nt = u.shape[1]
    cdef Py_ssize_t i, j, jp, jm
    cdef double complex uc, acc
    with nogil:
        for i in range(nx):
            for j in range(nt):
                jp = j + 1 if j + 1 < nt else 0
                jm = j - 1 if j > 0 else nt - 1
                uc = u[i, j]
                acc = ct[i, j] * (uc - u[i, jp]) + ct[i, jm] * (uc - u[i, jm])
                if i + 1 < nx:
                    acc = acc + cx[i, j] * (uc - u[i + 1, j])
                if i > 0:
                    acc = acc + cx[i - 1, j] * (uc - u[i - 1, j])
                out[i, j] = acc
    return out


def power_law(const double complex[::1] y,
              const double[::1] coef,
              double alpha,
              double complex[::1] out):
    cdef Py_ssize_t n = y.shape[0], k
    cdef double re, im, m2, s
    cdef double p = alpha - 1.0
    cdef double half = 0.5 * p
    cdef int ip = <int>p
    cdef bint even = (p == 2.0 * (<int>half)) and p >= 0.0 and p <= 8.0
    with nogil:
        for k in range(n):
            re = y[k].real
            im = y[k].imag
            m2 = re * re + im * im
            if p == 0.0:
                s = 1.0
            elif m2 == 0.0:
                s = 0.0
            elif p == 1.0:
                s = sqrt(m2)
            elif even:
                # |y|^p = (|y|^2)^(p/2) by repeated multiplication
                s = m2
                for _ in range(<int>half - 1):
                    s = s * m2
            else:
                s = pow(m2, half)
            s = s * coef[k]
            out[k].real = s * re
            out[k].imag = s * im
    return out
