# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: gain recurrence and thinned swarm event loop."""
from libc.math cimport exp, log, log1p, fabs

cdef double LOG2 = log(2.0)
cdef int UNIFORMS_PER_PROPOSAL = 5


def gain_recurrence(source, double r, double a, double b):
    import numpy as np
    cdef double[::1] s = np.ascontiguousarray(source, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] k = out
    cdef Py_ssize_t i
    for i in range(n - 1):
        k[i + 1] = r * k[i] + a * s[i] + b * s[i + 1]
    return out


cdef inline double _logcosh(double u) nogil:
    cdef double a = fabs(u)
    return a + log1p(exp(-2.0 * a)) - LOG2


cdef inline double _bound_rate(double n, Py_ssize_t count, double base_rate,
                               double xbar, double hi, double lo) nogil:
    cdef double d, gmax_log
    if n >= 0.0:
        gmax_log = 0.0
    else:
        d = hi - xbar
        if xbar - lo > d:
            d = xbar - lo
        gmax_log = -n * _logcosh(d)
    return base_rate * count * exp(gmax_log) * 0.5


def swarm_advance(double[::1] pos, double[::1] state, const double[::1] u,
                  Py_ssize_t u_start, double t_stop, double n, double lam, double base_rate):
    cdef Py_ssize_t count = pos.shape[0]
    cdef double t_next = state[0], total = state[1], hi = state[2], lo = state[3]
    cdef double accepted = state[4], proposals = state[5]
    cdef Py_ssize_t i = u_start
    cdef Py_ssize_t end = u.shape[0] - UNIFORMS_PER_PROPOSAL
    cdef Py_ssize_t ia, ib, low
    cdef double xa, xb, xbar, up_x, acc, d, jump, xn, rate
    cdef int status = 1
    with nogil:
        while i <= end:
            if t_next > t_stop:
                status = 0
                break
            ia = <Py_ssize_t>(u[i] * count)
            ib = <Py_ssize_t>(u[i + 1] * (count - 1))
            if ib >= ia:
                ib += 1
            xa = pos[ia]
            xb = pos[ib]
            xbar = total / count
            if xa != xb:
                if xa < xb:
                    low = ia
                    up_x = xb
                else:
                    low = ib
                    up_x = xa
                if n == 0.0:
                    acc = 1.0
                elif n > 0.0:
                    acc = exp(-n * _logcosh(up_x - xbar))
                else:
                    d = hi - xbar
                    if xbar - lo > d:
                        d = xbar - lo
                    acc = exp(-n * (_logcosh(up_x - xbar) - _logcosh(d)))
                if u[i + 2] < acc:
                    jump = -log1p(-u[i + 3]) / lam
                    xn = pos[low] + jump
                    pos[low] = xn
                    total += jump
                    if xn > hi:
                        hi = xn
                    accepted += 1.0
                    xbar = total / count
            proposals += 1.0
            rate = _bound_rate(n, count, base_rate, xbar, hi, lo)
            t_next += -log1p(-u[i + 4]) / rate
            i += UNIFORMS_PER_PROPOSAL
        if status == 1 and t_next > t_stop:
            status = 0
    state[0] = t_next
    state[1] = total
    state[2] = hi
    state[3] = lo
    state[4] = accepted
    state[5] = proposals
    return i, status
